//
// Copyright 2026 The UeDP-Sim Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//

#ifndef UEDP_KERNELS_HPP_
#define UEDP_KERNELS_HPP_

#include <cstddef>

// Double-precision vector primitives behind the training loop. A scalar
// reference implementation always exists; an AVX2+FMA variant is selected at
// runtime when the CPU supports it. The two are equivalence-tested against
// each other. Results are deterministic for a fixed backend.
namespace uedp::kernels {

enum class Backend { kAuto, kScalar, kAvx2 };

// Forces a backend. kAuto re-runs CPU detection. Returns the backend now in
// effect (kScalar if the requested one is unavailable).
Backend set_backend(Backend b);

// Backend currently in effect. Honors the UEDP_KERNELS environment variable
// ("scalar" or "avx2") on first use.
Backend active_backend();

const char* backend_name(Backend b);

bool cpu_supports_avx2();

// sum_i x[i] * y[i]
double dot(const double* x, const double* y, std::size_t n);

// y[i] += a * x[i]
void axpy(double a, const double* x, double* y, std::size_t n);

// x[i] *= a
void scale(double a, double* x, std::size_t n);

// sum_i x[i]^2
double sum_sq(const double* x, std::size_t n);

// Dense helpers built on the primitives. w is row-major rows x cols.

// out[r] += w[r,:] . x
inline void matvec(const double* w, const double* x, double* out,
                   std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    out[r] += dot(w + r * cols, x, cols);
  }
}

// out[c] += sum_r v[r] * w[r,c]  (transpose product)
inline void matvec_t(const double* w, const double* v, double* out,
                     std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    axpy(v[r], w + r * cols, out, cols);
  }
}

// w[r,c] += u[r] * v[c]  (rank-1 update)
inline void rank1_update(double* w, const double* u, const double* v,
                         std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    axpy(u[r], v, w + r * cols, cols);
  }
}

}  // namespace uedp::kernels

#endif  // UEDP_KERNELS_HPP_
