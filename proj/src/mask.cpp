// Copyright 2026 The pthk Authors
// SPDX-License-Identifier: Apache-2.0

#include "pthk/mask.hpp"

#include <bit>

#include "pthk/error.hpp"

namespace pthk {

PaMask::PaMask(std::size_t n)
    : n_(n), words_per_row_((n + 63) / 64), bits_(n * ((n + 63) / 64), 0) {}

bool PaMask::get(std::size_t i, std::size_t j) const {
  if (i >= n_ || j >= n_) throw LayoutError("mask index out of range");
  return (bits_[i * words_per_row_ + j / 64] >> (j % 64)) & 1u;
}

void PaMask::set(std::size_t i, std::size_t j, bool visible) {
  if (i >= n_ || j >= n_) throw LayoutError("mask index out of range");
  std::uint64_t& word = bits_[i * words_per_row_ + j / 64];
  std::uint64_t bit = std::uint64_t{1} << (j % 64);
  word = visible ? (word | bit) : (word & ~bit);
}

std::size_t PaMask::popcount() const {
  std::size_t total = 0;
  for (std::uint64_t w : bits_) total += static_cast<std::size_t>(std::popcount(w));
  return total;
}

std::size_t PaMask::row_popcount(std::size_t i) const {
  if (i >= n_) throw LayoutError("mask row out of range");
  std::size_t total = 0;
  for (std::size_t w = 0; w < words_per_row_; ++w) {
    total += static_cast<std::size_t>(std::popcount(bits_[i * words_per_row_ + w]));
  }
  return total;
}

bool is_visible(const SegmentLayout& layout, std::size_t i, std::size_t j) {
  TokenRole ri = layout.role_of(i);
  TokenRole rj = layout.role_of(j);
  if (rj.is_shared() || ri.is_summary()) return true;
  return ri.is_path() && ri == rj;
}

PaMask build_pa_mask(const SegmentLayout& layout) {
  const std::size_t n = layout.total();
  PaMask mask(n);
  const std::size_t shared = layout.shared_len();
  for (std::size_t i = 0; i < n; ++i) {
    TokenRole role = layout.role_of(i);
    if (role.is_path()) {
      for (std::size_t j = 0; j < shared; ++j) mask.set(i, j, true);
      for (std::size_t j = layout.path_begin(role.path_index()); j <= i; ++j) {
        mask.set(i, j, true);
      }
    } else {
      // Shared rows see the causal prefix (all shared); summary rows see all.
      for (std::size_t j = 0; j <= i; ++j) mask.set(i, j, true);
    }
  }
  return mask;
}

PaMask build_causal_mask(std::size_t n) {
  PaMask mask(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) mask.set(i, j, true);
  }
  return mask;
}

std::string mask_to_pgm(const PaMask& mask) {
  const std::size_t n = mask.size();
  std::string out = "P5\n" + std::to_string(n) + " " + std::to_string(n) + "\n255\n";
  out.reserve(out.size() + n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      out.push_back(mask.get(i, j) ? static_cast<char>(0xFF) : '\0');
    }
  }
  return out;
}

}  // namespace pthk
