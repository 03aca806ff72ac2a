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

#ifndef UEDP_KERNELS_INTERNAL_HPP_
#define UEDP_KERNELS_INTERNAL_HPP_

#include <cstddef>

namespace uedp::kernels::internal {

double dot_scalar(const double* x, const double* y, std::size_t n);
void axpy_scalar(double a, const double* x, double* y, std::size_t n);
void scale_scalar(double a, double* x, std::size_t n);
double sum_sq_scalar(const double* x, std::size_t n);

#if defined(UEDP_BUILD_AVX2)
double dot_avx2(const double* x, const double* y, std::size_t n);
void axpy_avx2(double a, const double* x, double* y, std::size_t n);
void scale_avx2(double a, double* x, std::size_t n);
double sum_sq_avx2(const double* x, std::size_t n);
#endif

}  // namespace uedp::kernels::internal

#endif  // UEDP_KERNELS_INTERNAL_HPP_
