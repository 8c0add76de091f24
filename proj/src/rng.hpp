// Copyright 2026 The qrpolicy Authors
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

#ifndef QRPOLICY_RNG_HPP_
#define QRPOLICY_RNG_HPP_

#include <cstdint>
#include <string_view>

namespace qrp {

// Splittable generator (SplitMix64 state stepping). Every stochastic draw in a
// run comes from a substream derived by name from the run seed, so adding or
// reordering components never perturbs the draws of another component.
// Samplers are hand-written so results are identical across standard
// libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  // Independent child stream keyed by name (and optionally an index).
  Rng substream(std::string_view name, std::uint64_t index = 0) const;

  std::uint64_t next_u64();
  // Uniform on [0, 1) with 53 random bits.
  double uniform();
  // Uniform on (0, 1].
  double uniform_open0();
  double uniform(double lo, double hi);
  double normal();
  std::uint64_t below(std::uint64_t n);

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::uint64_t state_;
  bool has_spare_normal_ = false;
  double spare_normal_ = 0.0;
};

std::uint64_t Fnv1a64(std::string_view text,
                      std::uint64_t basis = 0xcbf29ce484222325ULL);

template <typename It>
void Shuffle(It first, It last, Rng& rng) {
  auto n = last - first;
  for (auto i = n - 1; i > 0; --i) {
    auto j = static_cast<decltype(i)>(rng.below(static_cast<std::uint64_t>(i) + 1));
    std::swap(first[i], first[j]);
  }
}

}  // namespace qrp

#endif  // QRPOLICY_RNG_HPP_
