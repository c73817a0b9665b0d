// Copyright 2026 The pthk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "pthk/layout.hpp"
#include "pthk/model.hpp"
#include "pthk/rng.hpp"

namespace fixtures {

inline pthk::SegmentLayout random_layout(pthk::SplitMix64& rng, std::size_t max_paths = 6,
                                         std::size_t max_len = 9) {
  const std::size_t n = 1 + rng.below(max_paths);
  std::vector<std::size_t> lens(n);
  for (auto& l : lens) l = 1 + rng.below(max_len);
  return pthk::SegmentLayout(rng.below(max_len + 1), lens, rng.below(max_len + 1));
}

// Tagged stream for a layout: tags at segment edges, random bytes inside.
inline std::vector<pthk::TokenId> tagged_stream(pthk::SplitMix64& rng,
                                                const pthk::SegmentLayout& layout) {
  const pthk::SpecialVocab v;
  std::vector<pthk::TokenId> out;
  auto body = [&](std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out.push_back(static_cast<pthk::TokenId>(rng.below(256)));
  };
  body(layout.shared_len());
  for (int k = 1; k <= layout.n_paths(); ++k) {
    out.push_back(v.think_open(k));
    if (layout.path_len(k) >= 2) {
      body(layout.path_len(k) - 2);
      out.push_back(v.think_close(k));
    }
  }
  if (layout.summary_len() >= 2) {
    out.push_back(v.summary_open());
    body(layout.summary_len() - 2);
    out.push_back(v.summary_close());
  }
  return out;
}

// Default-shaped model with small random weights and non-zero path
// embeddings, scaled so greedy decoding is not dominated by ties.
inline pthk::ToyDecoder toy_model(std::uint64_t seed,
                                  pthk::Precision p = pthk::Precision::kFp64) {
  pthk::ModelConfig c;
  c.seed = seed;
  c.precision = p;
  pthk::ToyDecoder m = pthk::ToyDecoder::init_weights(c);
  pthk::SplitMix64 rng(seed ^ 0x5eed);
  m.update([&](pthk::DecoderWeights<double>& w) {
    for (auto& x : w.path_embeddings) x = rng.uniform(-0.5, 0.5);
    for (auto& x : w.unembedding) x *= 50.0;
  });
  return m;
}

inline std::vector<pthk::TokenId> byte_prompt(pthk::SplitMix64& rng, std::size_t n) {
  std::vector<pthk::TokenId> t(n);
  for (auto& x : t) x = static_cast<pthk::TokenId>(rng.below(256));
  return t;
}

}  // namespace fixtures
