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

#include "uedp/kernels.hpp"

#include <cstdlib>
#include <cstring>

#include "kernels_internal.hpp"

namespace uedp::kernels {
namespace {

using internal::axpy_scalar;
using internal::dot_scalar;
using internal::scale_scalar;
using internal::sum_sq_scalar;

struct Table {
  double (*dot)(const double*, const double*, std::size_t);
  void (*axpy)(double, const double*, double*, std::size_t);
  void (*scale)(double, double*, std::size_t);
  double (*sum_sq)(const double*, std::size_t);
};

constexpr Table kScalarTable = {dot_scalar, axpy_scalar, scale_scalar,
                                sum_sq_scalar};

#if defined(UEDP_BUILD_AVX2)
constexpr Table kAvx2Table = {internal::dot_avx2, internal::axpy_avx2,
                              internal::scale_avx2, internal::sum_sq_avx2};
#endif

Table g_table = kScalarTable;
Backend g_backend = Backend::kScalar;
bool g_initialized = false;

Backend detect_backend() {
#if defined(UEDP_BUILD_AVX2)
  if (const char* env = std::getenv("UEDP_KERNELS")) {
    if (std::strcmp(env, "scalar") == 0) return Backend::kScalar;
    if (std::strcmp(env, "avx2") == 0 && cpu_supports_avx2())
      return Backend::kAvx2;
    return Backend::kScalar;
  }
  if (cpu_supports_avx2()) return Backend::kAvx2;
#endif
  return Backend::kScalar;
}

void apply(Backend b) {
  g_backend = b;
#if defined(UEDP_BUILD_AVX2)
  g_table = (b == Backend::kAvx2) ? kAvx2Table : kScalarTable;
#else
  g_table = kScalarTable;
#endif
}

void ensure_initialized() {
  if (!g_initialized) {
    apply(detect_backend());
    g_initialized = true;
  }
}

}  // namespace

bool cpu_supports_avx2() {
#if defined(UEDP_BUILD_AVX2) && (defined(__x86_64__) || defined(__i386__))
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Backend set_backend(Backend b) {
  if (b == Backend::kAuto) {
    apply(detect_backend());
  } else if (b == Backend::kAvx2 && !cpu_supports_avx2()) {
    apply(Backend::kScalar);
  } else {
    apply(b);
  }
  g_initialized = true;
  return g_backend;
}

Backend active_backend() {
  ensure_initialized();
  return g_backend;
}

const char* backend_name(Backend b) {
  switch (b) {
    case Backend::kAuto:
      return "auto";
    case Backend::kScalar:
      return "scalar";
    case Backend::kAvx2:
      return "avx2";
  }
  return "unknown";
}

double dot(const double* x, const double* y, std::size_t n) {
  ensure_initialized();
  return g_table.dot(x, y, n);
}

void axpy(double a, const double* x, double* y, std::size_t n) {
  ensure_initialized();
  g_table.axpy(a, x, y, n);
}

void scale(double a, double* x, std::size_t n) {
  ensure_initialized();
  g_table.scale(a, x, n);
}

double sum_sq(const double* x, std::size_t n) {
  ensure_initialized();
  return g_table.sum_sq(x, n);
}

}  // namespace uedp::kernels
