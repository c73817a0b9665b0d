// Copyright 2026 The pthk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "pthk/error.hpp"
#include "pthk/layout.hpp"

namespace pthk {

// theta_i = base^(-2i/d) for i in [0, d/2).
class RotaryParams {
 public:
  RotaryParams(std::size_t head_dim, double base);

  std::size_t head_dim() const { return head_dim_; }
  double base() const { return base_; }
  double theta(std::size_t i) const { return thetas_.at(i); }
  const std::vector<double>& thetas() const { return thetas_; }

 private:
  std::size_t head_dim_;
  double base_;
  std::vector<double> thetas_;
};

// Rotates pair (2i, 2i+1) by m * theta_i. Angles, sines and cosines are
// evaluated in double and narrowed to T before the multiply.
template <class T>
void rotate_in_place(std::span<T> v, PositionId m, const RotaryParams& params) {
  if (v.size() != params.head_dim()) {
    throw ShapeError("rotate: vector of length " + std::to_string(v.size()) +
                     ", head_dim is " + std::to_string(params.head_dim()));
  }
  const auto& thetas = params.thetas();
  for (std::size_t i = 0; i < thetas.size(); ++i) {
    const double angle = static_cast<double>(m) * thetas[i];
    const T c = static_cast<T>(std::cos(angle));
    const T s = static_cast<T>(std::sin(angle));
    const T x = v[2 * i];
    const T y = v[2 * i + 1];
    v[2 * i] = x * c - y * s;
    v[2 * i + 1] = x * s + y * c;
  }
}

std::vector<double> rotate(std::span<const double> v, PositionId m,
                           const RotaryParams& params);

// dot(R_{m_q} q, R_{m_k} k).
double score(std::span<const double> q, std::span<const double> k,
             PositionId m_q, PositionId m_k, const RotaryParams& params);

// Position id and path-embedding index per flattened token.
struct PositionPlan {
  std::vector<PositionId> pos;
  std::vector<std::optional<PathIndex>> path_of;

  std::size_t size() const { return pos.size(); }
  friend bool operator==(const PositionPlan&, const PositionPlan&) = default;
};

// Every path starts right after the shared context; the summary starts one
// past the longest path's last id.
PositionPlan assign_positions(const SegmentLayout& layout);
// Baseline: paths take consecutive, non-overlapping id ranges in path order.
PositionPlan assign_positions_disjoint(const SegmentLayout& layout);
// First summary id under assign_positions.
PositionId summary_start(const SegmentLayout& layout);

class PathEmbeddingTable {
 public:
  PathEmbeddingTable() = default;
  PathEmbeddingTable(std::size_t n_paths, std::size_t head_dim);

  std::size_t n_paths() const { return n_paths_; }
  std::size_t head_dim() const { return head_dim_; }
  bool trainable() const { return trainable_; }
  void set_trainable(bool t) { trainable_ = t; }

  std::span<const double> vector(PathIndex k) const;
  std::span<double> mutable_vector(PathIndex k);
  const std::vector<double>& data() const { return data_; }
  std::vector<double>& mutable_data() { return data_; }
  bool is_zero() const;

  friend bool operator==(const PathEmbeddingTable&, const PathEmbeddingTable&) = default;

 private:
  std::size_t check(PathIndex k) const;

  std::size_t n_paths_ = 0;
  std::size_t head_dim_ = 0;
  bool trainable_ = true;
  std::vector<double> data_;
};

// R_m (k + e_path); the embedding is skipped when `path` is empty.
std::vector<double> lprope_key(std::span<const double> k, PositionId m,
                               std::optional<PathIndex> path,
                               const PathEmbeddingTable& table,
                               const RotaryParams& params);
// v + e_path; identity when `path` is empty.
std::vector<double> lprope_value(std::span<const double> v,
                                 std::optional<PathIndex> path,
                                 const PathEmbeddingTable& table);

struct ScoreTerms {
  double standard_term = 0.0;  // q . R_{m_k - m_q} k
  double path_term = 0.0;      // q . R_{m_k - m_q} e
  double sum() const { return standard_term + path_term; }
};

ScoreTerms score_decomposition(std::span<const double> q,
                               std::span<const double> k,
                               std::span<const double> e, PositionId m_q,
                               PositionId m_k, const RotaryParams& params);

double dot(std::span<const double> a, std::span<const double> b);

}  // namespace pthk
