// Copyright 2026 The pthk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "pthk/layout.hpp"

namespace pthk {

// Dense n x n visibility matrix; row = attending token, column = attended.
class PaMask {
 public:
  PaMask() = default;
  explicit PaMask(std::size_t n);

  std::size_t size() const { return n_; }
  bool get(std::size_t i, std::size_t j) const;
  void set(std::size_t i, std::size_t j, bool visible);
  std::size_t popcount() const;
  std::size_t row_popcount(std::size_t i) const;

  friend bool operator==(const PaMask&, const PaMask&) = default;

 private:
  std::size_t n_ = 0;
  std::size_t words_per_row_ = 0;
  std::vector<std::uint64_t> bits_;
};

// Pa-Attention visibility, ignoring causality: the attended token is shared
// context, or the attending token is a summary token, or both lie in the same
// reasoning path.
bool is_visible(const SegmentLayout& layout, std::size_t i, std::size_t j);

// bits[i][j] = (j <= i) && is_visible(layout, i, j).
PaMask build_pa_mask(const SegmentLayout& layout);
PaMask build_causal_mask(std::size_t n);

// Binary PGM (P5): visible = 255, hidden = 0.
std::string mask_to_pgm(const PaMask& mask);

}  // namespace pthk
