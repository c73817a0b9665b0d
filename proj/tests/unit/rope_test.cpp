// Copyright 2026 The pthk Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "pthk/error.hpp"
#include "pthk/rope.hpp"

using namespace pthk;

namespace {

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
  return m;
}

double norm(const std::vector<double>& v) { return std::sqrt(oracle::dotv(v, v)); }

}  // namespace

TEST_CASE("rotary frequencies") {
  const RotaryParams p(16, 10000.0);
  CHECK(p.theta(0) == 1.0);
  for (std::size_t i = 1; i < 8; ++i) CHECK(p.theta(i) < p.theta(i - 1));
  CHECK(p.theta(1) == doctest::Approx(std::pow(10000.0, -2.0 / 16.0)).epsilon(1e-15));
  CHECK_THROWS_AS(RotaryParams(3, 10000.0), ShapeError);
  CHECK_THROWS_AS(RotaryParams(4, 0.0), ShapeError);
}

TEST_CASE("rotate examples") {
  const RotaryParams p(2, 10000.0);
  const auto r = rotate(std::vector<double>{1.0, 0.0}, 1, p);
  CHECK(r[0] == doctest::Approx(std::cos(1.0)).epsilon(1e-15));
  CHECK(r[1] == doctest::Approx(std::sin(1.0)).epsilon(1e-15));
  SplitMix64 rng(1);
  const RotaryParams q(16, 10000.0);
  const auto v = oracle::random_vector(rng, 16);
  CHECK(rotate(v, 0, q) == v);
  CHECK_THROWS_AS(rotate(std::vector<double>(3), 1, q), ShapeError);
  for (int t = 0; t < 200; ++t) {
    const auto w = oracle::random_vector(rng, 16);
    const auto m = static_cast<PositionId>(rng.below(5000));
    const auto out = rotate(w, m, q);
    REQUIRE(std::fabs(norm(out) - norm(w)) < 1e-12);
    REQUIRE(max_abs_diff(out, oracle::matmul(oracle::rotation_matrix(16, 1e4, m), 16, w)) < 1e-12);
  }
}

TEST_CASE("score examples and relative-position identity") {
  const RotaryParams p2(2, 10000.0);
  CHECK(score(std::vector<double>{1, 0}, std::vector<double>{1, 0}, 0, 1, p2) ==
        doctest::Approx(std::cos(1.0)).epsilon(1e-15));
  SplitMix64 rng(9);
  const RotaryParams p(16, 10000.0);
  for (int t = 0; t < 1000; ++t) {
    const auto q = oracle::random_vector(rng, 16);
    const auto k = oracle::random_vector(rng, 16);
    const auto a = static_cast<PositionId>(rng.below(2048));
    const auto b = static_cast<PositionId>(rng.below(2048));
    const auto c = static_cast<PositionId>(rng.below(2048));
    const double s = score(q, k, a, b, p);
    REQUIRE(std::fabs(s - dot(q, rotate(k, b - a, p))) < 1e-10);
    REQUIRE(std::fabs(s - score(q, k, a + c, b + c, p)) < 1e-10);
    // R_a^T R_b applied to k via explicit matrices.
    const auto Ra = oracle::rotation_matrix(16, 1e4, a);
    const auto Rb = oracle::rotation_matrix(16, 1e4, b);
    const auto rk = oracle::matmul(oracle::transpose(Ra, 16), 16, oracle::matmul(Rb, 16, k));
    REQUIRE(std::fabs(s - oracle::dotv(q, rk)) < 1e-10);
    if (a == b) REQUIRE(std::fabs(s - oracle::dotv(q, k)) < 1e-12);
  }
}

TEST_CASE("assign_positions examples") {
  const PositionPlan a = assign_positions(SegmentLayout(5, {3, 5}, 2));
  CHECK(a.pos[5] == 5);
  CHECK(a.pos[8] == 5);
  CHECK(a.pos[7] == 7);
  CHECK(a.pos[12] == 9);
  CHECK(a.pos[13] == 10);
  CHECK(summary_start(SegmentLayout(5, {3, 5}, 2)) == 10);
  CHECK(a.path_of[5] == 1);
  CHECK(a.path_of[8] == 2);
  CHECK_FALSE(a.path_of[0].has_value());
  CHECK_FALSE(a.path_of[13].has_value());

  const PositionPlan single = assign_positions(SegmentLayout(4, {3}, 2));
  for (std::size_t i = 0; i < 9; ++i) CHECK(single.pos[i] == static_cast<PositionId>(i));

  // Empty prompt, four one-token paths: every path starts at id 0 and
  // the summary one past the longest path's last id.
  const SegmentLayout corner(0, {1, 1, 1, 1}, 2);
  const PositionPlan c = assign_positions(corner);
  for (std::size_t i = 0; i < 4; ++i) CHECK(c.pos[i] == 0);
  CHECK(c.pos[4] == 1);
  CHECK(c.pos[5] == 2);
}

TEST_CASE("assign_positions_disjoint examples") {
  const PositionPlan d = assign_positions_disjoint(SegmentLayout(2, {2, 2}, 1));
  CHECK(d.pos == std::vector<PositionId>{0, 1, 2, 3, 4, 5, 6});
  const PositionPlan e = assign_positions_disjoint(SegmentLayout(5, {3, 5}, 1));
  CHECK(e.pos.back() == 5 + 3 + 5);
  CHECK(e.path_of[5] == 1);
  CHECK(e.path_of[8] == 2);
  SplitMix64 rng(2);
  for (int t = 0; t < 100; ++t) {
    const SegmentLayout l(rng.below(8), {1 + rng.below(8)}, rng.below(8));
    REQUIRE(assign_positions(l) == assign_positions_disjoint(l));
  }
}

TEST_CASE("position plan invariants on random layouts") {
  SplitMix64 rng(23);
  for (int trial = 0; trial < 1000; ++trial) {
    const SegmentLayout l = fixtures::random_layout(rng, 8, 12);
    const PositionPlan p = assign_positions(l);
    REQUIRE(p.size() == l.total());
    for (std::size_t i = 0; i < l.shared_len(); ++i) REQUIRE(p.pos[i] == static_cast<PositionId>(i));
    PositionId max_end = -1;
    for (int k = 1; k <= l.n_paths(); ++k) {
      const std::size_t b = l.path_begin(k);
      REQUIRE(p.pos[b] == static_cast<PositionId>(l.shared_len()));
      for (std::size_t o = 0; o < l.path_len(k); ++o) {
        REQUIRE(p.pos[b + o] == static_cast<PositionId>(l.shared_len() + o));
        REQUIRE(p.path_of[b + o] == k);
      }
      max_end = std::max(max_end, p.pos[b + l.path_len(k) - 1]);
    }
    for (std::size_t o = 0; o < l.summary_len(); ++o) {
      REQUIRE(p.pos[l.summary_begin() + o] == max_end + 1 + static_cast<PositionId>(o));
    }
  }
}

TEST_CASE("path embedding table") {
  PathEmbeddingTable t(3, 4);
  CHECK(t.is_zero());
  CHECK(t.trainable());
  t.mutable_vector(2)[1] = 0.5;
  CHECK_FALSE(t.is_zero());
  CHECK(t.vector(2)[1] == 0.5);
  CHECK_THROWS_AS(t.vector(0), LayoutError);
  CHECK_THROWS_AS(t.vector(4), LayoutError);
}

TEST_CASE("lprope key and value") {
  SplitMix64 rng(4);
  const RotaryParams p(8, 10000.0);
  PathEmbeddingTable zero(2, 8);
  const auto k = oracle::random_vector(rng, 8);
  CHECK(lprope_key(k, 7, 1, zero, p) == rotate(k, 7, p));
  CHECK(lprope_value(k, 1, zero) == k);
  PathEmbeddingTable t(2, 8);
  for (int i = 1; i <= 2; ++i)
    for (auto& x : t.mutable_vector(i)) x = rng.uniform(-1, 1);
  CHECK(lprope_key(k, 7, std::nullopt, t, p) == rotate(k, 7, p));
  CHECK(lprope_value(k, std::nullopt, t) == k);
  std::vector<double> neg(t.vector(2).begin(), t.vector(2).end());
  for (auto& x : neg) x = -x;
  for (double x : lprope_value(neg, 2, t)) CHECK(x == 0.0);
  CHECK_THROWS_AS(lprope_key(k, 1, 3, t, p), LayoutError);
  for (int trial = 0; trial < 200; ++trial) {
    const auto kk = oracle::random_vector(rng, 8);
    const auto m = static_cast<PositionId>(rng.below(1000));
    const auto lhs = lprope_key(kk, m, 1, t, p);
    const auto a = rotate(kk, m, p);
    const auto b = rotate(std::vector<double>(t.vector(1).begin(), t.vector(1).end()), m, p);
    for (std::size_t i = 0; i < 8; ++i) REQUIRE(std::fabs(lhs[i] - (a[i] + b[i])) < 1e-12);
  }
}

TEST_CASE("score decomposition identity") {
  SplitMix64 rng(31);
  const RotaryParams p(16, 10000.0);
  PathEmbeddingTable t(1, 16);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto q = oracle::random_vector(rng, 16);
    const auto k = oracle::random_vector(rng, 16);
    const auto e = oracle::random_vector(rng, 16);
    const auto mq = static_cast<PositionId>(rng.below(4096));
    const auto mk = static_cast<PositionId>(rng.below(4096));
    std::copy(e.begin(), e.end(), t.mutable_vector(1).begin());
    const ScoreTerms s = score_decomposition(q, k, e, mq, mk, p);
    const double direct = dot(rotate(q, mq, p), lprope_key(k, mk, 1, t, p));
    REQUIRE(std::fabs(s.sum() - direct) < 1e-10);
    REQUIRE(std::fabs(s.standard_term - score(q, k, mq, mk, p)) < 1e-10);
    REQUIRE(std::fabs(s.path_term - score(q, e, mq, mk, p)) < 1e-10);
  }
  const std::vector<double> z(16, 0.0);
  const auto q = oracle::random_vector(rng, 16);
  const auto k = oracle::random_vector(rng, 16);
  CHECK(score_decomposition(q, k, z, 3, 9, p).path_term == 0.0);
}
