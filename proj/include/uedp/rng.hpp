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

#ifndef UEDP_RNG_HPP_
#define UEDP_RNG_HPP_

#include <cstdint>

namespace uedp::rng {

// Labels for independent substreams. Every random decision in a run draws
// from a stream keyed by (seed, round, purpose, id), so the sequence consumed
// by one component can never shift the draws seen by another.
enum class Purpose : std::uint64_t {
  kInitParams = 1,
  kPartition = 2,
  kSampleUsers = 3,
  kSampleDetected = 4,
  kSampleExtended = 5,
  kNoise = 6,
  kTest = 99,
};

// Counter-based generator (splitmix64). Fully specified output sequence, so
// runs are reproducible across compilers and standard libraries, unlike
// std::normal_distribution.
class Stream {
 public:
  explicit Stream(std::uint64_t state) : state_(state) {}

  std::uint64_t next_u64();

  // Uniform in [0, 1) with 53 bits of mantissa.
  double uniform();

  // Uniform in [lo, hi).
  double uniform(double lo, double hi);

  // Unbiased integer in [0, n), n > 0 (rejection sampling).
  std::uint64_t uniform_int(std::uint64_t n);

  bool bernoulli(double p) { return uniform() < p; }

  // Standard normal via Box-Muller; the paired value is cached.
  double gaussian();

 private:
  std::uint64_t state_;
  bool has_cached_ = false;
  double cached_ = 0.0;
};

// Derives the substream for (seed, round, purpose, id).
Stream substream(std::uint64_t seed, std::uint64_t round, Purpose purpose,
                 std::uint64_t id);

}  // namespace uedp::rng

#endif  // UEDP_RNG_HPP_
