// Copyright 2026 The pthk Authors
// SPDX-License-Identifier: Apache-2.0

#include "pthk/error.hpp"
#include "pthk/kvcache.hpp"
#include "pthk/model.hpp"
#include "step.hpp"

namespace pthk {

SequenceCache prefill_shared(BlockStore& store, const ToyDecoder& model,
                             std::span<const TokenId> tokens,
                             const PositionPlan& plan) {
  if (plan.size() != tokens.size()) {
    throw ShapeError("prefill: " + std::to_string(tokens.size()) + " tokens but a plan of " +
                     std::to_string(plan.size()));
  }
  SequenceCache seq = store.create_sequence(TokenRole::shared());
  try {
    for (std::size_t t = 0; t < tokens.size(); ++t) {
      if (plan.path_of[t]) throw ShapeError("prefill: shared tokens carry no path index");
      detail::cached_step(model, tokens[t], store, seq, plan.pos[t], std::nullopt);
    }
  } catch (...) {
    store.release(seq);
    throw;
  }
  store.note_prefill(tokens.size());
  return seq;
}

}  // namespace pthk
