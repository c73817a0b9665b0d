// Copyright 2026 The pthk Authors
// SPDX-License-Identifier: Apache-2.0

// Reverse-mode gradient of the masked loss with respect to the path
// embeddings. Runs its own fp64 forward and keeps every activation.

#include <cmath>
#include <limits>
#include <vector>

#include "kernels.hpp"
#include "pthk/error.hpp"
#include "pthk/model.hpp"

namespace pthk {

namespace {

using Vec = std::vector<double>;

// y = W^T x for W rows x cols row-major; accumulates into y.
void matvec_t_add(const Vec& w, std::size_t rows, std::size_t cols, const double* x,
                  double* y) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* wr = w.data() + r * cols;
    for (std::size_t c = 0; c < cols; ++c) y[c] += wr[c] * x[r];
  }
}

struct NormTape {
  Vec x;
  double inv = 0.0;
};

NormTape norm_forward(const double* x, const Vec& gain, std::size_t n, double eps,
                      double* y) {
  NormTape tape{Vec(x, x + n), 0.0};
  double ss = 0.0;
  for (std::size_t i = 0; i < n; ++i) ss += x[i] * x[i];
  tape.inv = 1.0 / std::sqrt(ss / static_cast<double>(n) + eps);
  for (std::size_t i = 0; i < n; ++i) y[i] = x[i] * tape.inv * gain[i];
  return tape;
}

// Accumulates dL/dx into dx given dL/dy.
void norm_backward(const NormTape& t, const Vec& gain, const double* dy, double* dx) {
  const std::size_t n = t.x.size();
  double proj = 0.0;
  for (std::size_t i = 0; i < n; ++i) proj += gain[i] * dy[i] * t.x[i];
  const double c = t.inv * t.inv * t.inv / static_cast<double>(n) * proj;
  for (std::size_t i = 0; i < n; ++i) dx[i] += t.inv * gain[i] * dy[i] - c * t.x[i];
}

struct LayerTape {
  std::vector<NormTape> attn_norm, mlp_norm;
  Vec q, k, v;        // n x dim, post-rotation q/k, post-embedding v
  Vec probs;          // n x heads x n
  Vec up;             // n x ffn, pre-activation
};

}  // namespace

PathEmbeddingTable grad_path_embeddings(const ToyDecoder& model,
                                        const TrainingSample& sample,
                                        const PaMask& mask, const PositionPlan& plan,
                                        double loss_scale) {
  const ModelConfig& cfg = model.config();
  const DecoderWeights<double>& w = model.weights();
  const std::vector<TokenId>& tokens = sample.tokens;
  const std::size_t n = tokens.size();
  const std::size_t dim = cfg.model_dim();
  const std::size_t hd = cfg.head_dim;
  const std::size_t nh = cfg.n_heads;
  const std::size_t ffn = cfg.ffn_dim;
  const std::size_t vocab = cfg.vocab_size;
  const RotaryParams& rot = model.rotary();
  if (mask.size() != n || plan.size() != n || sample.loss_mask.size() != n) {
    throw ShapeError("grad: tokens, mask, plan and loss-mask lengths differ");
  }
  if (n > 0 && sample.loss_mask[0]) {
    throw ShapeError("loss: the first token has no predecessor and cannot be a target");
  }
  std::size_t targets = 0;
  for (std::size_t t = 1; t < n; ++t) targets += sample.loss_mask[t] ? 1 : 0;
  if (targets == 0) throw ShapeError("loss: every target is masked");

  // Forward with tape.
  Vec x(n * dim);
  for (std::size_t t = 0; t < n; ++t) {
    kernels::check_token(cfg, tokens[t]);
    const double* e = w.tok_embedding.data() + static_cast<std::size_t>(tokens[t]) * dim;
    std::copy(e, e + dim, x.begin() + static_cast<long>(t * dim));
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  std::vector<LayerTape> tapes(cfg.n_layers);
  Vec h(dim), attn(n * dim), proj(dim), a(ffn), down(dim);
  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    const LayerWeights<double>& L = w.layers[l];
    LayerTape& tp = tapes[l];
    tp.q.assign(n * dim, 0.0);
    tp.k.assign(n * dim, 0.0);
    tp.v.assign(n * dim, 0.0);
    tp.probs.assign(n * nh * n, 0.0);
    tp.up.assign(n * ffn, 0.0);
    for (std::size_t t = 0; t < n; ++t) {
      tp.attn_norm.push_back(norm_forward(&x[t * dim], L.attn_norm, dim, cfg.norm_eps, h.data()));
      kernels::matvec(L.wq, dim, dim, h.data(), &tp.q[t * dim]);
      kernels::matvec(L.wk, dim, dim, h.data(), &tp.k[t * dim]);
      kernels::matvec(L.wv, dim, dim, h.data(), &tp.v[t * dim]);
      for (std::size_t head = 0; head < nh; ++head) {
        double* qh = &tp.q[t * dim + head * hd];
        double* kh = &tp.k[t * dim + head * hd];
        double* vh = &tp.v[t * dim + head * hd];
        if (plan.path_of[t]) {
          const double* e =
              w.path_embeddings.data() + static_cast<std::size_t>(*plan.path_of[t] - 1) * hd;
          for (std::size_t d = 0; d < hd; ++d) {
            kh[d] += e[d];
            vh[d] += e[d];
          }
        }
        rotate_in_place<double>(std::span<double>(qh, hd), plan.pos[t], rot);
        rotate_in_place<double>(std::span<double>(kh, hd), plan.pos[t], rot);
      }
    }
    std::fill(attn.begin(), attn.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t head = 0; head < nh; ++head) {
        double* p = &tp.probs[(i * nh + head) * n];
        double m = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j <= i; ++j) {
          if (!mask.get(i, j)) continue;
          double acc = 0.0;
          for (std::size_t d = 0; d < hd; ++d) {
            acc += tp.q[i * dim + head * hd + d] * tp.k[j * dim + head * hd + d];
          }
          p[j] = acc * scale;
          m = std::max(m, p[j]);
        }
        double z = 0.0;
        for (std::size_t j = 0; j <= i; ++j) {
          p[j] = mask.get(i, j) ? std::exp(p[j] - m) : 0.0;
          z += p[j];
        }
        for (std::size_t j = 0; j <= i; ++j) {
          p[j] /= z;
          for (std::size_t d = 0; d < hd; ++d) {
            attn[i * dim + head * hd + d] += p[j] * tp.v[j * dim + head * hd + d];
          }
        }
      }
    }
    for (std::size_t t = 0; t < n; ++t) {
      double* xt = &x[t * dim];
      kernels::matvec(L.wo, dim, dim, &attn[t * dim], proj.data());
      for (std::size_t i = 0; i < dim; ++i) xt[i] += proj[i];
      tp.mlp_norm.push_back(norm_forward(xt, L.mlp_norm, dim, cfg.norm_eps, h.data()));
      kernels::matvec(L.w_up, ffn, dim, h.data(), &tp.up[t * ffn]);
      for (std::size_t f = 0; f < ffn; ++f) a[f] = kernels::silu(tp.up[t * ffn + f]);
      kernels::matvec(L.w_down, dim, ffn, a.data(), down.data());
      for (std::size_t i = 0; i < dim; ++i) xt[i] += down[i];
    }
  }

  // Head: logits, softmax cross-entropy, back to the residual stream.
  Vec dx(n * dim, 0.0), logits(vocab), dlogits(vocab), dh(dim);
  const double coeff = loss_scale / static_cast<double>(targets);
  for (std::size_t t = 0; t + 1 < n; ++t) {
    if (!sample.loss_mask[t + 1]) continue;
    NormTape nt = norm_forward(&x[t * dim], w.final_norm, dim, cfg.norm_eps, h.data());
    kernels::matvec(w.unembedding, vocab, dim, h.data(), logits.data());
    double m = -std::numeric_limits<double>::infinity();
    for (double z : logits) m = std::max(m, z);
    double sum = 0.0;
    for (double z : logits) sum += std::exp(z - m);
    for (std::size_t c = 0; c < vocab; ++c) {
      dlogits[c] = coeff * std::exp(logits[c] - m) / sum;
    }
    dlogits[static_cast<std::size_t>(tokens[t + 1])] -= coeff;
    std::fill(dh.begin(), dh.end(), 0.0);
    matvec_t_add(w.unembedding, vocab, dim, dlogits.data(), dh.data());
    norm_backward(nt, w.final_norm, dh.data(), &dx[t * dim]);
  }

  PathEmbeddingTable grad(kMaxPaths, hd);
  std::vector<double>& ge = grad.mutable_data();
  Vec dattn(n * dim), dq(n * dim), dk(n * dim), dv(n * dim), da(ffn), dup(ffn);
  for (std::size_t l = cfg.n_layers; l-- > 0;) {
    const LayerWeights<double>& L = w.layers[l];
    const LayerTape& tp = tapes[l];
    // MLP block: x_out = x_mid + W_down silu(W_up norm(x_mid)).
    for (std::size_t t = 0; t < n; ++t) {
      std::fill(da.begin(), da.end(), 0.0);
      matvec_t_add(L.w_down, dim, ffn, &dx[t * dim], da.data());
      for (std::size_t f = 0; f < ffn; ++f) {
        const double u = tp.up[t * ffn + f];
        const double sg = 1.0 / (1.0 + std::exp(-u));
        dup[f] = da[f] * sg * (1.0 + u * (1.0 - sg));
      }
      std::fill(dh.begin(), dh.end(), 0.0);
      matvec_t_add(L.w_up, ffn, dim, dup.data(), dh.data());
      norm_backward(tp.mlp_norm[t], L.mlp_norm, dh.data(), &dx[t * dim]);
    }
    // Attention block: x_mid = x_in + W_o attn.
    std::fill(dattn.begin(), dattn.end(), 0.0);
    for (std::size_t t = 0; t < n; ++t) {
      matvec_t_add(L.wo, dim, dim, &dx[t * dim], &dattn[t * dim]);
    }
    std::fill(dq.begin(), dq.end(), 0.0);
    std::fill(dk.begin(), dk.end(), 0.0);
    std::fill(dv.begin(), dv.end(), 0.0);
    Vec dp(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t head = 0; head < nh; ++head) {
        const double* p = &tp.probs[(i * nh + head) * n];
        const double* doi = &dattn[i * dim + head * hd];
        double weighted = 0.0;
        for (std::size_t j = 0; j <= i; ++j) {
          if (p[j] == 0.0) {
            dp[j] = 0.0;
            continue;
          }
          double acc = 0.0;
          for (std::size_t d = 0; d < hd; ++d) {
            acc += doi[d] * tp.v[j * dim + head * hd + d];
            dv[j * dim + head * hd + d] += p[j] * doi[d];
          }
          dp[j] = acc;
          weighted += p[j] * acc;
        }
        for (std::size_t j = 0; j <= i; ++j) {
          if (p[j] == 0.0) continue;
          const double ds = p[j] * (dp[j] - weighted) * scale;
          for (std::size_t d = 0; d < hd; ++d) {
            dq[i * dim + head * hd + d] += ds * tp.k[j * dim + head * hd + d];
            dk[j * dim + head * hd + d] += ds * tp.q[i * dim + head * hd + d];
          }
        }
      }
    }
    for (std::size_t t = 0; t < n; ++t) {
      for (std::size_t head = 0; head < nh; ++head) {
        rotate_in_place<double>(std::span<double>(&dq[t * dim + head * hd], hd), -plan.pos[t], rot);
        rotate_in_place<double>(std::span<double>(&dk[t * dim + head * hd], hd), -plan.pos[t], rot);
        if (plan.path_of[t]) {
          double* g = ge.data() + static_cast<std::size_t>(*plan.path_of[t] - 1) * hd;
          for (std::size_t d = 0; d < hd; ++d) {
            g[d] += dk[t * dim + head * hd + d] + dv[t * dim + head * hd + d];
          }
        }
      }
      std::fill(dh.begin(), dh.end(), 0.0);
      matvec_t_add(L.wq, dim, dim, &dq[t * dim], dh.data());
      matvec_t_add(L.wk, dim, dim, &dk[t * dim], dh.data());
      matvec_t_add(L.wv, dim, dim, &dv[t * dim], dh.data());
      norm_backward(tp.attn_norm[t], L.attn_norm, dh.data(), &dx[t * dim]);
    }
  }
  return grad;
}

}  // namespace pthk
