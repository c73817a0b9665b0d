// Copyright 2026 The pthk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pthk/layout.hpp"
#include "pthk/rng.hpp"

namespace pthk {

struct SamplingConfig {
  enum class Kind : std::uint8_t { kGreedy, kTopK };
  Kind kind = Kind::kGreedy;
  std::size_t top_k = 8;
  double temperature = 1.0;
  std::uint64_t seed = 0;

  static SamplingConfig greedy() { return {}; }
  static SamplingConfig seeded_top_k(std::size_t k, double temperature, std::uint64_t seed) {
    return {Kind::kTopK, k, temperature, seed};
  }
  friend bool operator==(const SamplingConfig&, const SamplingConfig&) = default;
};

// 1 marks a token the sampler may pick.
using AllowMask = std::vector<std::uint8_t>;

// Ordinary tokens plus </think k>; every other special id is excluded.
AllowMask allowed_in_path(std::size_t vocab_size, const SpecialVocab& vocab, PathIndex k);
// Ordinary tokens plus </summary>.
AllowMask allowed_in_summary(std::size_t vocab_size, const SpecialVocab& vocab);

// Highest logit among allowed ids; ties go to the lowest id.
TokenId greedy_argmax(std::span<const double> logits, const AllowMask& allowed);

// One independent stream per path (stream 0 is the summary).
class Sampler {
 public:
  Sampler(const SamplingConfig& config, std::uint64_t stream);

  TokenId pick(std::span<const double> logits, const AllowMask& allowed);
  std::uint64_t draws() const { return draws_; }

 private:
  SamplingConfig config_;
  SplitMix64 rng_;
  std::uint64_t draws_ = 0;
};

}  // namespace pthk
