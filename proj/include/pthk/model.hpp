// Copyright 2026 The pthk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pthk/kvcache.hpp"
#include "pthk/layout.hpp"
#include "pthk/mask.hpp"
#include "pthk/rope.hpp"

namespace pthk {

enum class Precision : std::uint8_t { kFp32, kFp64 };

std::string to_string(Precision p);
Precision parse_precision(const std::string& text);

struct ModelConfig {
  std::size_t n_layers = 2;
  std::size_t n_heads = 4;
  std::size_t head_dim = 16;
  std::size_t vocab_size = 512;
  std::size_t ffn_dim = 128;
  double rope_base = 10000.0;
  double norm_eps = 1e-6;
  Precision precision = Precision::kFp64;
  std::uint64_t seed = 0;

  std::size_t model_dim() const { return n_heads * head_dim; }
  void validate(const SpecialVocab& vocab) const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

template <class T>
struct LayerWeights {
  std::vector<T> attn_norm;  // model_dim
  std::vector<T> wq, wk, wv, wo;  // model_dim x model_dim, row-major
  std::vector<T> mlp_norm;   // model_dim
  std::vector<T> w_up;       // ffn_dim x model_dim
  std::vector<T> w_down;     // model_dim x ffn_dim
};

template <class T>
struct DecoderWeights {
  std::vector<T> tok_embedding;  // vocab x model_dim
  std::vector<LayerWeights<T>> layers;
  std::vector<T> final_norm;     // model_dim
  std::vector<T> unembedding;    // vocab x model_dim
  // kMaxPaths x head_dim, broadcast over heads and layers.
  std::vector<T> path_embeddings;
};

// Desk-scale pre-norm decoder: RMSNorm, rotary multi-head attention with
// path embeddings on keys and values, SiLU MLP, untied unembedding.
class ToyDecoder {
 public:
  // Uniform [-0.02, 0.02] from SplitMix64(seed), drawn in the order
  // tok_embedding, then per layer wq, wk, wv, wo, w_up, w_down, then
  // unembedding. Norm gains start at 1, path embeddings at 0.
  static ToyDecoder init_weights(const ModelConfig& config);
  // Every parameter zero, including norm gains.
  static ToyDecoder zeros(const ModelConfig& config);
  static ToyDecoder from_weights(const ModelConfig& config,
                                 DecoderWeights<double> weights);

  const ModelConfig& config() const { return config_; }
  const RotaryParams& rotary() const { return rotary_; }
  const DecoderWeights<double>& weights() const { return w64_; }
  template <class T>
  const DecoderWeights<T>& weights_as() const;

  // Mutates the master weights and refreshes the fp32 mirror.
  void update(const std::function<void(DecoderWeights<double>&)>& fn);
  void set_precision(Precision p) { config_.precision = p; }

  PathEmbeddingTable path_embeddings() const;
  void set_path_embeddings(const PathEmbeddingTable& table);

 private:
  ToyDecoder(const ModelConfig& config, DecoderWeights<double> weights);
  void refresh_mirror();
  void check_shapes() const;

  ModelConfig config_;
  RotaryParams rotary_;
  DecoderWeights<double> w64_;
  DecoderWeights<float> w32_;
};

struct LogitsMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(data).subspan(i * cols, cols);
  }
};

// Optional per-token activations of a monolithic pass, widened to double.
struct ForwardTrace {
  // [layer][token] residual stream entering each layer.
  std::vector<std::vector<std::vector<double>>> layer_input;
  // [layer][token] post-rotation keys (with path embedding) and values.
  std::vector<std::vector<std::vector<double>>> keys;
  std::vector<std::vector<std::vector<double>>> values;
  // [token] residual stream after the last layer.
  std::vector<std::vector<double>> final_hidden;
};

// Monolithic masked pass: the reference every cached computation is
// checked against. Masked scores are -inf before the softmax.
LogitsMatrix forward_full(const ToyDecoder& model, std::span<const TokenId> tokens,
                          const PaMask& mask, const PositionPlan& plan,
                          ForwardTrace* trace = nullptr);

// Cached leg: attends to everything `seq` holds plus the token itself,
// appends the token's keys/values to `seq`, returns next-token logits.
std::vector<double> forward_step(const ToyDecoder& model, TokenId token,
                                 BlockStore& store, SequenceCache& seq,
                                 PositionId pos, std::optional<PathIndex> path);

// loss_mask[t] = 1 makes token t a target, predicted from row t - 1.
struct TrainingSample {
  std::vector<TokenId> tokens;
  std::vector<std::uint8_t> loss_mask;
};

// Mean next-token cross-entropy over unmasked targets.
double loss_masked(const ToyDecoder& model, const TrainingSample& sample,
                   const PaMask& mask, const PositionPlan& plan);
double loss_from_logits(const LogitsMatrix& logits, const TrainingSample& sample);

// Reverse-mode gradient of loss_scale * loss_masked with respect to every
// path embedding vector (always evaluated in fp64).
PathEmbeddingTable grad_path_embeddings(const ToyDecoder& model,
                                        const TrainingSample& sample,
                                        const PaMask& mask,
                                        const PositionPlan& plan,
                                        double loss_scale = 1.0);

// One plain SGD step on the path embeddings; returns the pre-step loss.
double sgd_step_path_embeddings(ToyDecoder& model, const TrainingSample& sample,
                                const PaMask& mask, const PositionPlan& plan,
                                double learning_rate);

}  // namespace pthk
