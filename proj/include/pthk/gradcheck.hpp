// Copyright 2026 The pthk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>

#include "pthk/mask.hpp"
#include "pthk/model.hpp"

namespace pthk {

// Denominator floor for the relative error |a - f| / max(|a|, |f|, floor).
// Central differences at h = 1e-5 carry roughly 1e-11 of absolute noise,
// so elements far below the floor are compared on an absolute scale.
inline constexpr double kGradRelFloor = 1e-6;

struct GradCheckCase {
  ToyDecoder model;
  TrainingSample sample;
  SegmentLayout layout;
  PaMask mask;
  PositionPlan plan;
};

// Random layout with n_paths in {1, 2, 4}, tagged tokens, a loss mask that
// skips the prompt and the opening tags, and non-zero path embeddings.
GradCheckCase make_gradcheck_case(std::uint64_t seed, const ModelConfig& base = {});

struct GradCheckReport {
  double max_rel_err = 0.0;
  double max_abs_err = 0.0;
  double max_abs_grad = 0.0;
  std::size_t checked = 0;
};

// Central differences over every element of every path embedding vector.
GradCheckReport check_path_gradient(const GradCheckCase& c, double h = 1e-5,
                                    double floor = kGradRelFloor);

}  // namespace pthk
