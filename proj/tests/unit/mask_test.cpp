// Copyright 2026 The pthk Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "pthk/error.hpp"
#include "pthk/mask.hpp"

using namespace pthk;

TEST_CASE("is_visible examples on (2,[2,2],1)") {
  const SegmentLayout l(2, {2, 2}, 1);
  CHECK_FALSE(is_visible(l, 4, 2));
  CHECK(is_visible(l, 6, 3));
  CHECK(is_visible(l, 3, 0));
  CHECK_THROWS_AS(is_visible(l, 7, 0), LayoutError);
}

TEST_CASE("popcount regression on (2,[2,2],1)") {
  const SegmentLayout l(2, {2, 2}, 1);
  // Enumerate the 49 pairs against the visibility rule.
  std::size_t expected = 0;
  for (std::size_t i = 0; i < 7; ++i)
    for (std::size_t j = 0; j < 7; ++j) expected += oracle::visible(2, {2, 2}, i, j);
  CHECK(expected == 24);
  CHECK(build_pa_mask(l).popcount() == 24);
}

TEST_CASE("single path mask equals the causal mask") {
  SplitMix64 rng(3);
  for (int t = 0; t < 50; ++t) {
    const SegmentLayout l(rng.below(10), {1 + rng.below(10)}, rng.below(10));
    REQUIRE(build_pa_mask(l) == build_causal_mask(l.total()));
  }
  const PaMask one = build_pa_mask(SegmentLayout(0, {1}, 0));
  CHECK(one.size() == 1);
  CHECK(one.get(0, 0));
}

TEST_CASE("causal mask sizes") {
  CHECK(build_causal_mask(0).size() == 0);
  CHECK(build_causal_mask(0).popcount() == 0);
  CHECK(build_causal_mask(1).popcount() == 1);
  CHECK(build_causal_mask(3).popcount() == 6);
}

TEST_CASE("pgm dumps") {
  PaMask one = build_causal_mask(1);
  CHECK(mask_to_pgm(one) == std::string("P5\n1 1\n255\n\xFF", 12));
  const std::string two = mask_to_pgm(build_causal_mask(2));
  CHECK(two == std::string("P5\n2 2\n255\n\xFF\x00\xFF\xFF", 15));
  const std::string pa = mask_to_pgm(build_pa_mask(SegmentLayout(2, {2, 2}, 1)));
  const std::string header = "P5\n7 7\n255\n";
  REQUIRE(pa.size() == header.size() + 49);
  CHECK(pa.compare(0, header.size(), header) == 0);
  CHECK(pa.substr(header.size() + 6 * 7, 7) == std::string(7, '\xFF'));
}

TEST_CASE("mask invariants on random layouts") {
  SplitMix64 rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    const SegmentLayout l = fixtures::random_layout(rng);
    const PaMask m = build_pa_mask(l);
    const auto lens = l.path_lens();
    for (std::size_t i = 0; i < l.total(); ++i) {
      REQUIRE(m.get(i, i));
      const int si = oracle::segment_of(l.shared_len(), lens, i);
      for (std::size_t j = 0; j < l.total(); ++j) {
        REQUIRE(m.get(i, j) == oracle::visible(l.shared_len(), lens, i, j));
        REQUIRE(m.get(i, j) == (j <= i && is_visible(l, i, j)));
        const int sj = oracle::segment_of(l.shared_len(), lens, j);
        if (j > i) REQUIRE_FALSE(m.get(i, j));
        if (si > 0 && sj > 0 && si != sj) REQUIRE_FALSE(m.get(i, j));
        if (si == 0 && j <= i) REQUIRE(m.get(i, j));
        // A later token of the same path keeps every key this one sees.
        if (m.get(i, j) && si > 0 && i + 1 < l.total() &&
            oracle::segment_of(l.shared_len(), lens, i + 1) == si) {
          REQUIRE(m.get(i + 1, j));
        }
      }
    }
  }
}
