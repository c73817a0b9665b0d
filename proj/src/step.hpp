// Copyright 2026 The pthk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <vector>

#include "pthk/model.hpp"

namespace pthk::detail {

// forward_step without touching the decode-step counter; prefill uses it.
std::vector<double> cached_step(const ToyDecoder& model, TokenId token, BlockStore& store,
                                SequenceCache& seq, PositionId pos,
                                std::optional<PathIndex> path);

}  // namespace pthk::detail
