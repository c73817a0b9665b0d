// Copyright 2026 The pthk Authors
// SPDX-License-Identifier: Apache-2.0

// Reference computations written independently of the library: explicit
// rotation matrices, segment membership by range scan, and a dense naive
// forward pass. Tests compare library results against these.

#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "pthk/layout.hpp"
#include "pthk/model.hpp"
#include "pthk/rng.hpp"

namespace oracle {

// -1 shared, 0 summary, k > 0 path k.
inline int segment_of(std::size_t shared, const std::vector<std::size_t>& paths,
                      std::size_t index) {
  if (index < shared) return -1;
  std::size_t start = shared;
  for (std::size_t k = 0; k < paths.size(); ++k) {
    if (index < start + paths[k]) return static_cast<int>(k + 1);
    start += paths[k];
  }
  return 0;
}

inline bool visible(std::size_t shared, const std::vector<std::size_t>& paths, std::size_t i,
                    std::size_t j) {
  if (j > i) return false;
  const int si = segment_of(shared, paths, i);
  const int sj = segment_of(shared, paths, j);
  if (sj == -1) return true;
  if (si == 0) return true;
  return si > 0 && si == sj;
}

// Dense d x d rotation matrix for position m.
inline std::vector<double> rotation_matrix(std::size_t d, double base, long long m) {
  std::vector<double> r(d * d, 0.0);
  for (std::size_t i = 0; i < d / 2; ++i) {
    const double theta = std::pow(base, -2.0 * static_cast<double>(i) / static_cast<double>(d));
    const double a = static_cast<double>(m) * theta;
    r[(2 * i) * d + 2 * i] = std::cos(a);
    r[(2 * i) * d + 2 * i + 1] = -std::sin(a);
    r[(2 * i + 1) * d + 2 * i] = std::sin(a);
    r[(2 * i + 1) * d + 2 * i + 1] = std::cos(a);
  }
  return r;
}

inline std::vector<double> matmul(const std::vector<double>& m, std::size_t d,
                                  const std::vector<double>& v) {
  std::vector<double> out(d, 0.0);
  for (std::size_t r = 0; r < d; ++r)
    for (std::size_t c = 0; c < d; ++c) out[r] += m[r * d + c] * v[c];
  return out;
}

inline std::vector<double> transpose(const std::vector<double>& m, std::size_t d) {
  std::vector<double> t(d * d);
  for (std::size_t r = 0; r < d; ++r)
    for (std::size_t c = 0; c < d; ++c) t[c * d + r] = m[r * d + c];
  return t;
}

inline double dotv(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline std::vector<double> random_vector(pthk::SplitMix64& rng, std::size_t d, double scale = 1.0) {
  std::vector<double> v(d);
  for (auto& x : v) x = rng.uniform(-scale, scale);
  return v;
}

// Dense reference decoder in fp64. `visible(i, j)` and `pos` / `path` are
// supplied per token by the caller.
template <class Visible>
std::vector<std::vector<double>> naive_forward(const pthk::ToyDecoder& model,
                                               const std::vector<pthk::TokenId>& tokens,
                                               Visible&& visible_fn,
                                               const std::vector<long long>& pos,
                                               const std::vector<int>& path) {
  const auto& c = model.config();
  const auto& w = model.weights();
  const std::size_t n = tokens.size(), D = c.model_dim(), hd = c.head_dim, F = c.ffn_dim;
  auto mv = [](const std::vector<double>& W, std::size_t rows, std::size_t cols,
               const std::vector<double>& x) {
    std::vector<double> y(rows, 0.0);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t k = 0; k < cols; ++k) y[r] += W[r * cols + k] * x[k];
    return y;
  };
  auto norm = [&](const std::vector<double>& x, const std::vector<double>& g) {
    double ss = 0.0;
    for (double v : x) ss += v * v;
    const double inv = 1.0 / std::sqrt(ss / static_cast<double>(x.size()) + c.norm_eps);
    std::vector<double> y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] * inv * g[i];
    return y;
  };
  std::vector<std::vector<double>> x(n);
  for (std::size_t t = 0; t < n; ++t) {
    x[t].assign(w.tok_embedding.begin() + static_cast<long>(tokens[t] * D),
                w.tok_embedding.begin() + static_cast<long>((tokens[t] + 1) * D));
  }
  for (const auto& L : w.layers) {
    std::vector<std::vector<double>> q(n), k(n), v(n);
    for (std::size_t t = 0; t < n; ++t) {
      const auto h = norm(x[t], L.attn_norm);
      q[t] = mv(L.wq, D, D, h);
      k[t] = mv(L.wk, D, D, h);
      v[t] = mv(L.wv, D, D, h);
      const auto R = rotation_matrix(hd, c.rope_base, pos[t]);
      for (std::size_t head = 0; head < c.n_heads; ++head) {
        std::vector<double> qh(q[t].begin() + head * hd, q[t].begin() + (head + 1) * hd);
        std::vector<double> kh(k[t].begin() + head * hd, k[t].begin() + (head + 1) * hd);
        for (std::size_t d = 0; d < hd; ++d) {
          if (path[t] > 0) {
            const double e = w.path_embeddings[(path[t] - 1) * hd + d];
            kh[d] += e;
            v[t][head * hd + d] += e;
          }
        }
        qh = matmul(R, hd, qh);
        kh = matmul(R, hd, kh);
        std::copy(qh.begin(), qh.end(), q[t].begin() + head * hd);
        std::copy(kh.begin(), kh.end(), k[t].begin() + head * hd);
      }
    }
    std::vector<std::vector<double>> nx(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> attn(D, 0.0);
      for (std::size_t head = 0; head < c.n_heads; ++head) {
        std::vector<double> s;
        std::vector<std::size_t> js;
        for (std::size_t j = 0; j < n; ++j) {
          if (!visible_fn(i, j)) continue;
          double acc = 0.0;
          for (std::size_t d = 0; d < hd; ++d) acc += q[i][head * hd + d] * k[j][head * hd + d];
          s.push_back(acc / std::sqrt(static_cast<double>(hd)));
          js.push_back(j);
        }
        double m = -std::numeric_limits<double>::infinity();
        for (double z : s) m = std::max(m, z);
        double total = 0.0;
        for (double& z : s) total += (z = std::exp(z - m));
        for (std::size_t a = 0; a < js.size(); ++a)
          for (std::size_t d = 0; d < hd; ++d)
            attn[head * hd + d] += s[a] / total * v[js[a]][head * hd + d];
      }
      nx[i] = x[i];
      const auto o = mv(L.wo, D, D, attn);
      for (std::size_t d = 0; d < D; ++d) nx[i][d] += o[d];
      auto u = mv(L.w_up, F, D, norm(nx[i], L.mlp_norm));
      for (double& z : u) z = z / (1.0 + std::exp(-z));
      const auto dn = mv(L.w_down, D, F, u);
      for (std::size_t d = 0; d < D; ++d) nx[i][d] += dn[d];
    }
    x = nx;
  }
  std::vector<std::vector<double>> logits(n);
  for (std::size_t t = 0; t < n; ++t) logits[t] = mv(w.unembedding, c.vocab_size, D, norm(x[t], w.final_norm));
  return logits;
}

}  // namespace oracle
