// Copyright 2026 The pthk Authors
// SPDX-License-Identifier: Apache-2.0

#include "pthk/rope.hpp"

#include <algorithm>

namespace pthk {

RotaryParams::RotaryParams(std::size_t head_dim, double base)
    : head_dim_(head_dim), base_(base) {
  if (head_dim == 0 || head_dim % 2 != 0) {
    throw ShapeError("head_dim must be even and positive, got " +
                     std::to_string(head_dim));
  }
  if (!(base > 0.0)) throw ShapeError("rope base must be positive");
  thetas_.resize(head_dim / 2);
  for (std::size_t i = 0; i < thetas_.size(); ++i) {
    thetas_[i] = std::pow(base, -2.0 * static_cast<double>(i) /
                                    static_cast<double>(head_dim));
  }
}

std::vector<double> rotate(std::span<const double> v, PositionId m,
                           const RotaryParams& params) {
  std::vector<double> out(v.begin(), v.end());
  rotate_in_place<double>(out, m, params);
  return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw ShapeError("dot: length " + std::to_string(a.size()) + " vs " +
                     std::to_string(b.size()));
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double score(std::span<const double> q, std::span<const double> k,
             PositionId m_q, PositionId m_k, const RotaryParams& params) {
  if (q.size() != k.size()) throw ShapeError("score: q and k lengths differ");
  return dot(rotate(q, m_q, params), rotate(k, m_k, params));
}

PositionPlan assign_positions(const SegmentLayout& layout) {
  PositionPlan plan;
  plan.pos.reserve(layout.total());
  plan.path_of.reserve(layout.total());
  const auto shared = static_cast<PositionId>(layout.shared_len());
  for (PositionId p = 0; p < shared; ++p) {
    plan.pos.push_back(p);
    plan.path_of.emplace_back(std::nullopt);
  }
  for (PathIndex k = 1; k <= layout.n_paths(); ++k) {
    const auto len = static_cast<PositionId>(layout.path_len(k));
    for (PositionId o = 0; o < len; ++o) {
      plan.pos.push_back(shared + o);
      plan.path_of.emplace_back(k);
    }
  }
  const PositionId start = summary_start(layout);
  for (std::size_t o = 0; o < layout.summary_len(); ++o) {
    plan.pos.push_back(start + static_cast<PositionId>(o));
    plan.path_of.emplace_back(std::nullopt);
  }
  return plan;
}

PositionId summary_start(const SegmentLayout& layout) {
  const auto shared = static_cast<PositionId>(layout.shared_len());
  PositionId max_end = 0;
  for (std::size_t len : layout.path_lens()) {
    max_end = std::max(max_end, shared + static_cast<PositionId>(len) - 1);
  }
  return max_end + 1;
}

PositionPlan assign_positions_disjoint(const SegmentLayout& layout) {
  PositionPlan plan;
  plan.pos.reserve(layout.total());
  plan.path_of.reserve(layout.total());
  for (std::size_t i = 0; i < layout.total(); ++i) {
    plan.pos.push_back(static_cast<PositionId>(i));
    plan.path_of.emplace_back(layout.role_of(i).path());
  }
  return plan;
}

PathEmbeddingTable::PathEmbeddingTable(std::size_t n_paths, std::size_t head_dim)
    : n_paths_(n_paths), head_dim_(head_dim), data_(n_paths * head_dim, 0.0) {}

std::size_t PathEmbeddingTable::check(PathIndex k) const {
  if (k < 1 || static_cast<std::size_t>(k) > n_paths_) {
    throw LayoutError("unknown path index " + std::to_string(k) +
                      " for an embedding table of " + std::to_string(n_paths_));
  }
  return static_cast<std::size_t>(k - 1) * head_dim_;
}

std::span<const double> PathEmbeddingTable::vector(PathIndex k) const {
  return std::span<const double>(data_).subspan(check(k), head_dim_);
}

std::span<double> PathEmbeddingTable::mutable_vector(PathIndex k) {
  return std::span<double>(data_).subspan(check(k), head_dim_);
}

bool PathEmbeddingTable::is_zero() const {
  return std::all_of(data_.begin(), data_.end(), [](double x) { return x == 0.0; });
}

std::vector<double> lprope_key(std::span<const double> k, PositionId m,
                               std::optional<PathIndex> path,
                               const PathEmbeddingTable& table,
                               const RotaryParams& params) {
  std::vector<double> out(k.begin(), k.end());
  if (path) {
    auto e = table.vector(*path);
    if (e.size() != out.size()) throw ShapeError("lprope_key: embedding length");
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += e[i];
  }
  rotate_in_place<double>(out, m, params);
  return out;
}

std::vector<double> lprope_value(std::span<const double> v,
                                 std::optional<PathIndex> path,
                                 const PathEmbeddingTable& table) {
  std::vector<double> out(v.begin(), v.end());
  if (path) {
    auto e = table.vector(*path);
    if (e.size() != out.size()) throw ShapeError("lprope_value: embedding length");
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += e[i];
  }
  return out;
}

ScoreTerms score_decomposition(std::span<const double> q,
                               std::span<const double> k,
                               std::span<const double> e, PositionId m_q,
                               PositionId m_k, const RotaryParams& params) {
  if (q.size() != k.size() || q.size() != e.size()) {
    throw ShapeError("score_decomposition: vector lengths differ");
  }
  const PositionId rel = m_k - m_q;
  ScoreTerms terms;
  terms.standard_term = dot(q, rotate(k, rel, params));
  terms.path_term = dot(q, rotate(e, rel, params));
  return terms;
}

}  // namespace pthk
