// Copyright 2026 The pthk Authors
// SPDX-License-Identifier: Apache-2.0

#include "pthk/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "pthk/rng.hpp"

namespace pthk {

GradCheckCase make_gradcheck_case(std::uint64_t seed, const ModelConfig& base) {
  SplitMix64 rng(mix_seed(seed, 0x67726164ull));
  const SpecialVocab vocab;
  static constexpr int kPathChoices[] = {1, 2, 4};
  const int n_paths = kPathChoices[rng.below(3)];
  TrainingSample sample;
  auto push = [&](TokenId t, std::uint8_t target) {
    sample.tokens.push_back(t);
    sample.loss_mask.push_back(target);
  };
  const std::size_t shared = 1 + rng.below(8);
  for (std::size_t i = 0; i < shared; ++i) push(static_cast<TokenId>(rng.below(256)), 0);
  for (int k = 1; k <= n_paths; ++k) {
    push(vocab.think_open(k), 0);
    const std::size_t body = rng.below(7);
    for (std::size_t i = 0; i < body; ++i) push(static_cast<TokenId>(rng.below(256)), 1);
    push(vocab.think_close(k), 1);
  }
  push(vocab.summary_open(), 1);
  const std::size_t body = 1 + rng.below(5);
  for (std::size_t i = 0; i < body; ++i) push(static_cast<TokenId>(rng.below(256)), 1);
  push(vocab.summary_close(), 1);

  ModelConfig cfg = base;
  cfg.seed = seed;
  cfg.precision = Precision::kFp64;
  ToyDecoder model = ToyDecoder::init_weights(cfg);
  model.update([&](DecoderWeights<double>& w) {
    for (std::size_t i = 0; i < static_cast<std::size_t>(n_paths) * cfg.head_dim; ++i) {
      w.path_embeddings[i] = rng.uniform(-0.5, 0.5);
    }
  });
  SegmentLayout layout = layout_from_tagged_tokens(sample.tokens, vocab);
  PaMask mask = build_pa_mask(layout);
  PositionPlan plan = assign_positions(layout);
  return GradCheckCase{std::move(model), std::move(sample), std::move(layout), std::move(mask),
                       std::move(plan)};
}

GradCheckReport check_path_gradient(const GradCheckCase& c, double h, double floor) {
  const PathEmbeddingTable analytic = grad_path_embeddings(c.model, c.sample, c.mask, c.plan);
  GradCheckReport report;
  ToyDecoder probe = c.model;
  const std::size_t n = c.model.weights().path_embeddings.size();
  for (std::size_t i = 0; i < n; ++i) {
    const double original = c.model.weights().path_embeddings[i];
    probe.update([&](DecoderWeights<double>& w) { w.path_embeddings[i] = original + h; });
    const double up = loss_masked(probe, c.sample, c.mask, c.plan);
    probe.update([&](DecoderWeights<double>& w) { w.path_embeddings[i] = original - h; });
    const double down = loss_masked(probe, c.sample, c.mask, c.plan);
    probe.update([&](DecoderWeights<double>& w) { w.path_embeddings[i] = original; });
    const double fd = (up - down) / (2.0 * h);
    const double a = analytic.data()[i];
    const double abs_err = std::fabs(a - fd);
    const double rel = abs_err / std::max({std::fabs(a), std::fabs(fd), floor});
    report.max_abs_err = std::max(report.max_abs_err, abs_err);
    report.max_rel_err = std::max(report.max_rel_err, rel);
    report.max_abs_grad = std::max(report.max_abs_grad, std::fabs(a));
    ++report.checked;
  }
  return report;
}

}  // namespace pthk
