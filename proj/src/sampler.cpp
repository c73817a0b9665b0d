// Copyright 2026 The pthk Authors
// SPDX-License-Identifier: Apache-2.0

#include "pthk/sampler.hpp"

#include <algorithm>
#include <cmath>

#include "pthk/error.hpp"

namespace pthk {

namespace {

AllowMask ordinary(std::size_t vocab_size, const SpecialVocab& vocab) {
  vocab.validate(vocab_size);
  AllowMask allowed(vocab_size, 1);
  for (TokenId t = vocab.base; t <= vocab.max_id(); ++t) {
    allowed[static_cast<std::size_t>(t)] = 0;
  }
  return allowed;
}

void check_mask(std::span<const double> logits, const AllowMask& allowed) {
  if (logits.size() != allowed.size()) {
    throw ShapeError("sampler: " + std::to_string(logits.size()) + " logits but a mask of " +
                     std::to_string(allowed.size()));
  }
}

}  // namespace

AllowMask allowed_in_path(std::size_t vocab_size, const SpecialVocab& vocab, PathIndex k) {
  AllowMask allowed = ordinary(vocab_size, vocab);
  allowed[static_cast<std::size_t>(vocab.think_close(k))] = 1;
  return allowed;
}

AllowMask allowed_in_summary(std::size_t vocab_size, const SpecialVocab& vocab) {
  AllowMask allowed = ordinary(vocab_size, vocab);
  allowed[static_cast<std::size_t>(vocab.summary_close())] = 1;
  return allowed;
}

TokenId greedy_argmax(std::span<const double> logits, const AllowMask& allowed) {
  check_mask(logits, allowed);
  TokenId best = -1;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (!allowed[i]) continue;
    if (best < 0 || logits[i] > logits[static_cast<std::size_t>(best)]) {
      best = static_cast<TokenId>(i);
    }
  }
  if (best < 0) throw EngineError("sampler: no token is allowed");
  return best;
}

Sampler::Sampler(const SamplingConfig& config, std::uint64_t stream)
    : config_(config), rng_(mix_seed(config.seed, stream)) {
  if (config_.kind == SamplingConfig::Kind::kTopK) {
    if (config_.top_k == 0) throw ConfigError("top_k must be at least 1");
    if (!(config_.temperature > 0.0)) throw ConfigError("temperature must be positive");
  }
}

TokenId Sampler::pick(std::span<const double> logits, const AllowMask& allowed) {
  if (config_.kind == SamplingConfig::Kind::kGreedy) return greedy_argmax(logits, allowed);
  check_mask(logits, allowed);
  std::vector<TokenId> ids;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (allowed[i]) ids.push_back(static_cast<TokenId>(i));
  }
  if (ids.empty()) throw EngineError("sampler: no token is allowed");
  const std::size_t k = std::min(config_.top_k, ids.size());
  auto by_logit = [&](TokenId a, TokenId b) {
    const double la = logits[static_cast<std::size_t>(a)];
    const double lb = logits[static_cast<std::size_t>(b)];
    return la != lb ? la > lb : a < b;
  };
  std::partial_sort(ids.begin(), ids.begin() + static_cast<long>(k), ids.end(), by_logit);
  ids.resize(k);
  const double top = logits[static_cast<std::size_t>(ids[0])];
  std::vector<double> weights(k);
  double total = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    weights[i] = std::exp((logits[static_cast<std::size_t>(ids[i])] - top) / config_.temperature);
    total += weights[i];
  }
  const double u = rng_.uniform01() * total;
  ++draws_;
  double acc = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    acc += weights[i];
    if (u < acc) return ids[i];
  }
  return ids[k - 1];
}

}  // namespace pthk
