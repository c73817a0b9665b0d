// Copyright 2026 The pthk Authors
// SPDX-License-Identifier: Apache-2.0

// Per-token building blocks shared by the monolithic and cached passes.
// Every reduction runs left to right so both passes round identically.

#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pthk/error.hpp"
#include "pthk/model.hpp"

namespace pthk::kernels {

// y = W x, W is rows x cols row-major.
template <class T>
void matvec(const std::vector<T>& w, std::size_t rows, std::size_t cols,
            const T* x, T* y) {
  for (std::size_t r = 0; r < rows; ++r) {
    const T* wr = w.data() + r * cols;
    T acc = T(0);
    for (std::size_t c = 0; c < cols; ++c) acc += wr[c] * x[c];
    y[r] = acc;
  }
}

template <class T>
void rmsnorm(const T* x, const std::vector<T>& gain, std::size_t n, T eps, T* y) {
  T ss = T(0);
  for (std::size_t i = 0; i < n; ++i) ss += x[i] * x[i];
  const T inv = T(1) / std::sqrt(ss / static_cast<T>(n) + eps);
  for (std::size_t i = 0; i < n; ++i) y[i] = x[i] * inv * gain[i];
}

template <class T>
T silu(T u) {
  return u / (T(1) + std::exp(-u));
}

// Queries rotated; keys get the path embedding then rotation; values get
// the path embedding. Outputs are model_dim long, head-major.
template <class T>
void project_token(const ModelConfig& cfg, const DecoderWeights<T>& w,
                   const LayerWeights<T>& layer, const RotaryParams& rotary,
                   const T* x, PositionId pos, std::optional<PathIndex> path,
                   T* q, T* k, T* v) {
  const std::size_t dim = cfg.model_dim();
  std::vector<T> h(dim);
  rmsnorm(x, layer.attn_norm, dim, static_cast<T>(cfg.norm_eps), h.data());
  matvec(layer.wq, dim, dim, h.data(), q);
  matvec(layer.wk, dim, dim, h.data(), k);
  matvec(layer.wv, dim, dim, h.data(), v);
  const std::size_t hd = cfg.head_dim;
  const T* e = nullptr;
  if (path) {
    if (*path < 1 || *path > kMaxPaths) {
      throw LayoutError("no path embedding for path " + std::to_string(*path));
    }
    e = w.path_embeddings.data() + static_cast<std::size_t>(*path - 1) * hd;
  }
  for (std::size_t head = 0; head < cfg.n_heads; ++head) {
    T* qh = q + head * hd;
    T* kh = k + head * hd;
    T* vh = v + head * hd;
    if (e) {
      for (std::size_t d = 0; d < hd; ++d) {
        kh[d] += e[d];
        vh[d] += e[d];
      }
    }
    rotate_in_place<T>(std::span<T>(qh, hd), pos, rotary);
    rotate_in_place<T>(std::span<T>(kh, hd), pos, rotary);
  }
}

// x += Wo * attn; x += W_down silu(W_up rmsnorm(x)).
template <class T>
void finish_layer(const ModelConfig& cfg, const LayerWeights<T>& layer,
                  const T* attn, T* x) {
  const std::size_t dim = cfg.model_dim();
  std::vector<T> proj(dim);
  matvec(layer.wo, dim, dim, attn, proj.data());
  for (std::size_t i = 0; i < dim; ++i) x[i] += proj[i];
  std::vector<T> h(dim), up(cfg.ffn_dim), down(dim);
  rmsnorm(x, layer.mlp_norm, dim, static_cast<T>(cfg.norm_eps), h.data());
  matvec(layer.w_up, cfg.ffn_dim, dim, h.data(), up.data());
  for (auto& u : up) u = silu(u);
  matvec(layer.w_down, dim, cfg.ffn_dim, up.data(), down.data());
  for (std::size_t i = 0; i < dim; ++i) x[i] += down[i];
}

template <class T>
void logits_from_hidden(const ModelConfig& cfg, const DecoderWeights<T>& w,
                        const T* x, double* out) {
  const std::size_t dim = cfg.model_dim();
  std::vector<T> h(dim), logits(cfg.vocab_size);
  rmsnorm(x, w.final_norm, dim, static_cast<T>(cfg.norm_eps), h.data());
  matvec(w.unembedding, cfg.vocab_size, dim, h.data(), logits.data());
  for (std::size_t i = 0; i < cfg.vocab_size; ++i) out[i] = static_cast<double>(logits[i]);
}

inline void check_token(const ModelConfig& cfg, TokenId t) {
  if (t < 0 || static_cast<std::size_t>(t) >= cfg.vocab_size) {
    throw ShapeError("token id " + std::to_string(t) + " outside vocab of " +
                     std::to_string(cfg.vocab_size));
  }
}

}  // namespace pthk::kernels
