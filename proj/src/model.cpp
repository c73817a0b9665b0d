// Copyright 2026 The pthk Authors
// SPDX-License-Identifier: Apache-2.0

#include "pthk/model.hpp"

#include <cmath>
#include <limits>

#include "kernels.hpp"
#include "pthk/error.hpp"
#include "pthk/rng.hpp"
#include "step.hpp"

namespace pthk {

std::string to_string(Precision p) { return p == Precision::kFp32 ? "fp32" : "fp64"; }

Precision parse_precision(const std::string& text) {
  if (text == "fp32") return Precision::kFp32;
  if (text == "fp64") return Precision::kFp64;
  throw ConfigError("precision must be fp32 or fp64, got '" + text + "'");
}

void ModelConfig::validate(const SpecialVocab& vocab) const {
  if (n_layers == 0 || n_heads == 0) throw ConfigError("n_layers and n_heads must be positive");
  if (head_dim == 0 || head_dim % 2 != 0) throw ConfigError("head_dim must be even and positive");
  if (ffn_dim == 0) throw ConfigError("ffn_dim must be positive");
  if (!(rope_base > 0.0)) throw ConfigError("rope_base must be positive");
  if (!(norm_eps > 0.0)) throw ConfigError("norm_eps must be positive");
  if (vocab_size == 0 || static_cast<std::size_t>(vocab.max_id()) >= vocab_size) {
    throw ConfigError("vocab_size " + std::to_string(vocab_size) +
                      " must exceed the largest special token id " +
                      std::to_string(vocab.max_id()));
  }
}

namespace {

DecoderWeights<double> shaped(const ModelConfig& c, double gain) {
  const std::size_t dim = c.model_dim();
  DecoderWeights<double> w;
  w.tok_embedding.assign(c.vocab_size * dim, 0.0);
  w.layers.resize(c.n_layers);
  for (auto& l : w.layers) {
    l.attn_norm.assign(dim, gain);
    l.wq.assign(dim * dim, 0.0);
    l.wk.assign(dim * dim, 0.0);
    l.wv.assign(dim * dim, 0.0);
    l.wo.assign(dim * dim, 0.0);
    l.mlp_norm.assign(dim, gain);
    l.w_up.assign(c.ffn_dim * dim, 0.0);
    l.w_down.assign(dim * c.ffn_dim, 0.0);
  }
  w.final_norm.assign(dim, gain);
  w.unembedding.assign(c.vocab_size * dim, 0.0);
  w.path_embeddings.assign(static_cast<std::size_t>(kMaxPaths) * c.head_dim, 0.0);
  return w;
}

template <class To, class From>
std::vector<To> cast(const std::vector<From>& v) {
  return std::vector<To>(v.begin(), v.end());
}

void expect_size(const std::vector<double>& v, std::size_t n, const char* what) {
  if (v.size() != n) {
    throw ShapeError(std::string(what) + " has " + std::to_string(v.size()) +
                     " entries, expected " + std::to_string(n));
  }
}

}  // namespace

ToyDecoder::ToyDecoder(const ModelConfig& config, DecoderWeights<double> weights)
    : config_(config),
      rotary_(config.head_dim, config.rope_base),
      w64_(std::move(weights)) {
  config_.validate(SpecialVocab{});
  check_shapes();
  refresh_mirror();
}

ToyDecoder ToyDecoder::init_weights(const ModelConfig& config) {
  config.validate(SpecialVocab{});
  DecoderWeights<double> w = shaped(config, 1.0);
  SplitMix64 rng(config.seed);
  auto fill = [&](std::vector<double>& v) {
    for (auto& x : v) x = rng.uniform(-0.02, 0.02);
  };
  fill(w.tok_embedding);
  for (auto& l : w.layers) {
    fill(l.wq);
    fill(l.wk);
    fill(l.wv);
    fill(l.wo);
    fill(l.w_up);
    fill(l.w_down);
  }
  fill(w.unembedding);
  return ToyDecoder(config, std::move(w));
}

ToyDecoder ToyDecoder::zeros(const ModelConfig& config) {
  config.validate(SpecialVocab{});
  return ToyDecoder(config, shaped(config, 0.0));
}

ToyDecoder ToyDecoder::from_weights(const ModelConfig& config,
                                    DecoderWeights<double> weights) {
  return ToyDecoder(config, std::move(weights));
}

void ToyDecoder::check_shapes() const {
  const auto& c = config_;
  const std::size_t dim = c.model_dim();
  expect_size(w64_.tok_embedding, c.vocab_size * dim, "tok_embedding");
  if (w64_.layers.size() != c.n_layers) throw ShapeError("layer count mismatch");
  for (const auto& l : w64_.layers) {
    expect_size(l.attn_norm, dim, "attn_norm");
    expect_size(l.wq, dim * dim, "wq");
    expect_size(l.wk, dim * dim, "wk");
    expect_size(l.wv, dim * dim, "wv");
    expect_size(l.wo, dim * dim, "wo");
    expect_size(l.mlp_norm, dim, "mlp_norm");
    expect_size(l.w_up, c.ffn_dim * dim, "w_up");
    expect_size(l.w_down, dim * c.ffn_dim, "w_down");
  }
  expect_size(w64_.final_norm, dim, "final_norm");
  expect_size(w64_.unembedding, c.vocab_size * dim, "unembedding");
  expect_size(w64_.path_embeddings, static_cast<std::size_t>(kMaxPaths) * c.head_dim,
              "path_embeddings");
}

void ToyDecoder::refresh_mirror() {
  w32_.tok_embedding = cast<float>(w64_.tok_embedding);
  w32_.layers.clear();
  for (const auto& l : w64_.layers) {
    LayerWeights<float> f;
    f.attn_norm = cast<float>(l.attn_norm);
    f.wq = cast<float>(l.wq);
    f.wk = cast<float>(l.wk);
    f.wv = cast<float>(l.wv);
    f.wo = cast<float>(l.wo);
    f.mlp_norm = cast<float>(l.mlp_norm);
    f.w_up = cast<float>(l.w_up);
    f.w_down = cast<float>(l.w_down);
    w32_.layers.push_back(std::move(f));
  }
  w32_.final_norm = cast<float>(w64_.final_norm);
  w32_.unembedding = cast<float>(w64_.unembedding);
  w32_.path_embeddings = cast<float>(w64_.path_embeddings);
}

template <>
const DecoderWeights<double>& ToyDecoder::weights_as<double>() const {
  return w64_;
}

template <>
const DecoderWeights<float>& ToyDecoder::weights_as<float>() const {
  return w32_;
}

void ToyDecoder::update(const std::function<void(DecoderWeights<double>&)>& fn) {
  fn(w64_);
  check_shapes();
  refresh_mirror();
}

PathEmbeddingTable ToyDecoder::path_embeddings() const {
  PathEmbeddingTable table(kMaxPaths, config_.head_dim);
  table.mutable_data() = w64_.path_embeddings;
  return table;
}

void ToyDecoder::set_path_embeddings(const PathEmbeddingTable& table) {
  if (table.head_dim() != config_.head_dim || table.n_paths() > static_cast<std::size_t>(kMaxPaths)) {
    throw ShapeError("path embedding table shape does not match the model");
  }
  update([&](DecoderWeights<double>& w) {
    std::fill(w.path_embeddings.begin(), w.path_embeddings.end(), 0.0);
    std::copy(table.data().begin(), table.data().end(), w.path_embeddings.begin());
  });
}

namespace {

template <class T>
LogitsMatrix forward_full_impl(const ToyDecoder& model, std::span<const TokenId> tokens,
                               const PaMask& mask, const PositionPlan& plan,
                               ForwardTrace* trace) {
  const ModelConfig& cfg = model.config();
  const DecoderWeights<T>& w = model.template weights_as<T>();
  const std::size_t n = tokens.size();
  const std::size_t dim = cfg.model_dim();
  const std::size_t hd = cfg.head_dim;
  if (mask.size() != n || plan.size() != n || plan.path_of.size() != n) {
    throw ShapeError("forward_full: tokens, mask and plan lengths differ (" +
                     std::to_string(n) + ", " + std::to_string(mask.size()) + ", " +
                     std::to_string(plan.size()) + ")");
  }
  std::vector<T> x(n * dim);
  for (std::size_t t = 0; t < n; ++t) {
    kernels::check_token(cfg, tokens[t]);
    const T* e = w.tok_embedding.data() + static_cast<std::size_t>(tokens[t]) * dim;
    std::copy(e, e + dim, x.begin() + static_cast<long>(t * dim));
  }
  if (trace) {
    *trace = ForwardTrace{};
    trace->layer_input.resize(cfg.n_layers);
    trace->keys.resize(cfg.n_layers);
    trace->values.resize(cfg.n_layers);
  }
  auto widen = [](const T* p, std::size_t len) { return std::vector<double>(p, p + len); };

  const T scale = T(1) / std::sqrt(static_cast<T>(hd));
  const T neg_inf = -std::numeric_limits<T>::infinity();
  std::vector<T> q(n * dim), k(n * dim), v(n * dim), attn(n * dim), scores(n);
  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    const LayerWeights<T>& layer = w.layers[l];
    for (std::size_t t = 0; t < n; ++t) {
      kernels::project_token(cfg, w, layer, model.rotary(), &x[t * dim], plan.pos[t],
                             plan.path_of[t], &q[t * dim], &k[t * dim], &v[t * dim]);
    }
    if (trace) {
      for (std::size_t t = 0; t < n; ++t) {
        trace->layer_input[l].push_back(widen(&x[t * dim], dim));
        trace->keys[l].push_back(widen(&k[t * dim], dim));
        trace->values[l].push_back(widen(&v[t * dim], dim));
      }
    }
    std::fill(attn.begin(), attn.end(), T(0));
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t head = 0; head < cfg.n_heads; ++head) {
        const T* qi = &q[i * dim + head * hd];
        T max_score = neg_inf;
        for (std::size_t j = 0; j < n; ++j) {
          T s = neg_inf;
          if (mask.get(i, j)) {
            const T* kj = &k[j * dim + head * hd];
            T acc = T(0);
            for (std::size_t d = 0; d < hd; ++d) acc += qi[d] * kj[d];
            s = acc * scale;
          }
          scores[j] = s;
          if (s > max_score) max_score = s;
        }
        if (max_score == neg_inf) {
          throw LayoutError("mask row " + std::to_string(i) + " has no visible key");
        }
        T z = T(0);
        for (std::size_t j = 0; j < n; ++j) {
          scores[j] = std::exp(scores[j] - max_score);
          z += scores[j];
        }
        T* out = &attn[i * dim + head * hd];
        for (std::size_t j = 0; j < n; ++j) {
          const T p = scores[j] / z;
          const T* vj = &v[j * dim + head * hd];
          for (std::size_t d = 0; d < hd; ++d) out[d] += p * vj[d];
        }
      }
    }
    for (std::size_t t = 0; t < n; ++t) {
      kernels::finish_layer(cfg, layer, &attn[t * dim], &x[t * dim]);
    }
  }
  LogitsMatrix out;
  out.rows = n;
  out.cols = cfg.vocab_size;
  out.data.assign(n * cfg.vocab_size, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    if (trace) trace->final_hidden.push_back(widen(&x[t * dim], dim));
    kernels::logits_from_hidden(cfg, w, &x[t * dim], &out.data[t * cfg.vocab_size]);
  }
  return out;
}

template <class T>
std::vector<double> step_impl(const ToyDecoder& model, TokenId token, BlockStore& store,
                              SequenceCache& seq, PositionId pos,
                              std::optional<PathIndex> path) {
  const ModelConfig& cfg = model.config();
  const DecoderWeights<T>& w = model.template weights_as<T>();
  const std::size_t dim = cfg.model_dim();
  const std::size_t hd = cfg.head_dim;
  kernels::check_token(cfg, token);
  if (seq.released) throw CacheError("forward_step on a released sequence");
  if (store.geometry().n_layers != cfg.n_layers || store.geometry().kv_dim != dim) {
    throw ShapeError("cache geometry does not match the model");
  }
  if (seq.last_pos && pos <= *seq.last_pos) {
    throw EngineError("position " + std::to_string(pos) + " does not advance past " +
                      std::to_string(*seq.last_pos));
  }
  if (pos < 0) throw EngineError("negative position id");

  const std::vector<SlotRef> slots = store.slots(seq);
  const std::size_t stride = store.layer_stride();
  std::vector<T> x(w.tok_embedding.begin() + static_cast<long>(token * dim),
                   w.tok_embedding.begin() + static_cast<long>((token + 1) * dim));
  std::vector<double> keys(cfg.n_layers * dim), values(cfg.n_layers * dim);
  std::vector<T> q(dim), k(dim), v(dim), attn(dim), scores(slots.size() + 1);
  const T scale = T(1) / std::sqrt(static_cast<T>(hd));

  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    const LayerWeights<T>& layer = w.layers[l];
    kernels::project_token(cfg, w, layer, model.rotary(), x.data(), pos, path, q.data(),
                           k.data(), v.data());
    std::fill(attn.begin(), attn.end(), T(0));
    const std::size_t n = slots.size();
    for (std::size_t head = 0; head < cfg.n_heads; ++head) {
      const std::size_t off = l * stride + head * hd;
      const T* qh = &q[head * hd];
      T max_score = -std::numeric_limits<T>::infinity();
      for (std::size_t j = 0; j <= n; ++j) {
        T acc = T(0);
        if (j < n) {
          const double* kj = slots[j].keys + off;
          for (std::size_t d = 0; d < hd; ++d) acc += qh[d] * static_cast<T>(kj[d]);
        } else {
          const T* kj = &k[head * hd];
          for (std::size_t d = 0; d < hd; ++d) acc += qh[d] * kj[d];
        }
        const T s = acc * scale;
        scores[j] = s;
        if (s > max_score) max_score = s;
      }
      T z = T(0);
      for (std::size_t j = 0; j <= n; ++j) {
        scores[j] = std::exp(scores[j] - max_score);
        z += scores[j];
      }
      T* out = &attn[head * hd];
      for (std::size_t j = 0; j <= n; ++j) {
        const T p = scores[j] / z;
        if (j < n) {
          const double* vj = slots[j].values + off;
          for (std::size_t d = 0; d < hd; ++d) out[d] += p * static_cast<T>(vj[d]);
        } else {
          const T* vj = &v[head * hd];
          for (std::size_t d = 0; d < hd; ++d) out[d] += p * vj[d];
        }
      }
    }
    for (std::size_t i = 0; i < dim; ++i) {
      keys[l * dim + i] = static_cast<double>(k[i]);
      values[l * dim + i] = static_cast<double>(v[i]);
    }
    kernels::finish_layer(cfg, layer, attn.data(), x.data());
  }
  store.append(seq, keys, values);
  seq.last_pos = pos;
  std::vector<double> logits(cfg.vocab_size);
  kernels::logits_from_hidden(cfg, w, x.data(), logits.data());
  return logits;
}

}  // namespace

LogitsMatrix forward_full(const ToyDecoder& model, std::span<const TokenId> tokens,
                          const PaMask& mask, const PositionPlan& plan,
                          ForwardTrace* trace) {
  if (model.config().precision == Precision::kFp32) {
    return forward_full_impl<float>(model, tokens, mask, plan, trace);
  }
  return forward_full_impl<double>(model, tokens, mask, plan, trace);
}

namespace detail {

std::vector<double> cached_step(const ToyDecoder& model, TokenId token, BlockStore& store,
                                SequenceCache& seq, PositionId pos,
                                std::optional<PathIndex> path) {
  if (model.config().precision == Precision::kFp32) {
    return step_impl<float>(model, token, store, seq, pos, path);
  }
  return step_impl<double>(model, token, store, seq, pos, path);
}

}  // namespace detail

std::vector<double> forward_step(const ToyDecoder& model, TokenId token,
                                 BlockStore& store, SequenceCache& seq,
                                 PositionId pos, std::optional<PathIndex> path) {
  auto logits = detail::cached_step(model, token, store, seq, pos, path);
  store.note_decode_step();
  return logits;
}

double loss_from_logits(const LogitsMatrix& logits, const TrainingSample& sample) {
  const std::size_t n = sample.tokens.size();
  if (sample.loss_mask.size() != n || logits.rows != n) {
    throw ShapeError("loss: token, loss-mask and logits lengths differ");
  }
  if (n > 0 && sample.loss_mask[0]) {
    throw ShapeError("loss: the first token has no predecessor and cannot be a target");
  }
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t t = 1; t < n; ++t) {
    if (!sample.loss_mask[t]) continue;
    auto row = logits.row(t - 1);
    double m = -std::numeric_limits<double>::infinity();
    for (double z : row) m = z > m ? z : m;
    double sum = 0.0;
    for (double z : row) sum += std::exp(z - m);
    const double lse = m + std::log(sum);
    total += lse - row[static_cast<std::size_t>(sample.tokens[t])];
    ++count;
  }
  if (count == 0) throw ShapeError("loss: every target is masked");
  return total / static_cast<double>(count);
}

double loss_masked(const ToyDecoder& model, const TrainingSample& sample,
                   const PaMask& mask, const PositionPlan& plan) {
  return loss_from_logits(forward_full(model, sample.tokens, mask, plan), sample);
}

double sgd_step_path_embeddings(ToyDecoder& model, const TrainingSample& sample,
                                const PaMask& mask, const PositionPlan& plan,
                                double learning_rate) {
  const double loss = loss_masked(model, sample, mask, plan);
  PathEmbeddingTable grad = grad_path_embeddings(model, sample, mask, plan);
  PathEmbeddingTable table = model.path_embeddings();
  if (!table.trainable()) return loss;
  auto& data = table.mutable_data();
  for (std::size_t i = 0; i < data.size(); ++i) data[i] -= learning_rate * grad.data()[i];
  model.set_path_embeddings(table);
  return loss;
}

}  // namespace pthk
