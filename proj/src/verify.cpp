// Copyright 2026 The pthk Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>

#include "pthk/engine.hpp"
#include "pthk/error.hpp"
#include "pthk/mask.hpp"

namespace pthk {

namespace {

struct Failure {
  std::string what;
};

void check_record(const SegmentRecord& r, const std::string& name) {
  if (r.forced.size() != r.tokens.size() || r.logits.size() != r.tokens.size()) {
    throw Failure{name + ": token, forced and logits lists differ in length"};
  }
  if (r.tokens.empty()) throw Failure{name + ": empty segment"};
}

// Forced tokens: the opening tag, then an optional run of forced prompt
// tokens before the first sampled one, then the closing tag only once the
// sampling budget is spent.
void check_forced(const SegmentRecord& r, const std::string& name, TokenId open, TokenId close,
                  std::size_t budget, bool prompt_allowed) {
  if (r.tokens.front() != open || !r.forced.front()) {
    throw Failure{name + ": does not start with its forced opening tag"};
  }
  std::size_t sampled = 0;
  bool seen_sampled = false;
  for (std::size_t o = 1; o < r.tokens.size(); ++o) {
    if (!r.forced[o]) {
      seen_sampled = true;
      ++sampled;
      continue;
    }
    const bool last = o + 1 == r.tokens.size();
    if (r.tokens[o] == close) {
      if (!last) throw Failure{name + ": forced close before the end"};
      if (sampled != budget) {
        throw Failure{name + ": close forced with budget left (" + std::to_string(sampled) +
                      " of " + std::to_string(budget) + " sampled)"};
      }
      continue;
    }
    if (!prompt_allowed || seen_sampled) {
      throw Failure{name + ": forced token " + std::to_string(r.tokens[o]) + " at offset " +
                    std::to_string(o) + " is not a permitted forced token"};
    }
  }
  if (sampled > budget) throw Failure{name + ": sampled beyond the budget"};
  if (r.tokens.back() != close) throw Failure{name + ": does not end with its closing tag"};
}

}  // namespace

VerifyReport verify_transcript(const ToyDecoder& model, const Transcript& t) {
  VerifyReport report;
  try {
    const SpecialVocab vocab;
    if (t.paths.empty()) throw Failure{"transcript has no paths"};
    for (std::size_t i = 0; i < t.paths.size(); ++i) {
      check_record(t.paths[i], "path " + std::to_string(i + 1));
    }
    check_record(t.summary, "summary");
    SegmentLayout layout(0, {1}, 0);
    try {
      layout = t.layout();
    } catch (const LayoutError& e) {
      throw Failure{std::string("malformed transcript: ") + e.what()};
    }
    if (static_cast<std::size_t>(layout.n_paths()) != t.paths.size() ||
        layout.shared_len() != t.prompt.size() || layout.summary_len() != t.summary.tokens.size()) {
      throw Failure{"segment boundaries disagree with the recorded lists"};
    }
    const bool sequential = t.mode == Mode::kSequential;
    const PaMask mask = sequential ? build_causal_mask(layout.total()) : build_pa_mask(layout);
    const PositionPlan plan =
        sequential ? assign_positions_disjoint(layout) : assign_positions(layout);
    if (t.plan.size() != 0 && !(t.plan == plan)) {
      throw Failure{"recorded position plan differs from the rebuilt one"};
    }

    for (std::size_t i = 0; i < t.paths.size(); ++i) {
      const auto k = static_cast<PathIndex>(i + 1);
      check_forced(t.paths[i], "path " + std::to_string(k), vocab.think_open(k),
                   vocab.think_close(k), t.config.max_path_tokens, true);
    }
    check_forced(t.summary, "summary", vocab.summary_open(), vocab.summary_close(),
                 t.config.max_summary_tokens, false);

    ToyDecoder oracle = model;
    oracle.set_precision(t.precision);
    const std::vector<TokenId> tokens = t.flattened();
    const LogitsMatrix logits = forward_full(oracle, tokens, mask, plan);
    const std::size_t vocab_size = model.config().vocab_size;

    auto replay = [&](const SegmentRecord& r, TokenRole role, std::uint64_t stream,
                      const AllowMask& allowed, const std::string& name) {
      Sampler sampler(t.config.sampling, stream);
      for (std::size_t o = 0; o < r.tokens.size(); ++o) {
        if (r.forced[o]) continue;
        const std::size_t flat = layout.flat_index(role, o);
        const auto row = logits.row(flat - 1);
        const TokenId choice = sampler.pick(row, allowed);
        if (choice != r.tokens[o]) {
          throw Failure{name + " offset " + std::to_string(o) + ": emitted " +
                        std::to_string(r.tokens[o]) + " but the oracle picks " +
                        std::to_string(choice)};
        }
        if (!r.logits[o].empty()) {
          if (r.logits[o].size() != vocab_size) throw Failure{name + ": logits row has wrong width"};
          for (std::size_t c = 0; c < vocab_size; ++c) {
            const double d = std::fabs(r.logits[o][c] - row[c]);
            if (!(d <= report.max_abs_logit_diff)) report.max_abs_logit_diff = d;
          }
        }
        ++report.tokens_checked;
      }
    };
    for (std::size_t i = 0; i < t.paths.size(); ++i) {
      const auto k = static_cast<PathIndex>(i + 1);
      replay(t.paths[i], TokenRole::path(k), static_cast<std::uint64_t>(k),
             allowed_in_path(vocab_size, vocab, k), "path " + std::to_string(k));
    }
    replay(t.summary, TokenRole::summary(), 0, allowed_in_summary(vocab_size, vocab), "summary");
    const double tol = t.precision == Precision::kFp64 ? kLogitTolFp64 : kLogitTolFp32;
    if (report.max_abs_logit_diff > tol) {
      throw Failure{"recorded logits differ from the oracle by " +
                    std::to_string(report.max_abs_logit_diff)};
    }
    report.ok = true;
  } catch (const Failure& f) {
    report.ok = false;
    report.failure = f.what;
  }
  return report;
}

}  // namespace pthk
