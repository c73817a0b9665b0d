// Copyright 2026 The pthk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pthk/kvcache.hpp"
#include "pthk/layout.hpp"
#include "pthk/model.hpp"
#include "pthk/rope.hpp"
#include "pthk/sampler.hpp"

namespace pthk {

enum class Mode : std::uint8_t { kParallel, kSequential, kReplicated };

std::string to_string(Mode m);
Mode parse_mode(const std::string& text);

struct SessionConfig {
  Mode mode = Mode::kParallel;
  std::size_t n_paths = 2;
  // Cap on sampled tokens per path; </think k> is forced once it is reached.
  std::size_t max_path_tokens = 16;
  // Cap on sampled summary tokens; </summary> is forced once it is reached.
  std::size_t max_summary_tokens = 8;
  SamplingConfig sampling;
  bool reuse_kv = true;
  // Threads advancing paths within one round; 1 runs inline.
  std::size_t workers = 1;
  std::size_t block_size = 16;
  std::size_t max_blocks = 4096;

  void validate() const;
  friend bool operator==(const SessionConfig&, const SessionConfig&) = default;
};

enum class Stage : std::uint8_t { kPrefill, kParallelReasoning, kSummary, kDone };

std::string to_string(Stage s);

// One emitted segment. `logits[o]` holds the distribution the engine sampled
// token o from; it is empty for forced tokens.
struct SegmentRecord {
  std::vector<TokenId> tokens;
  std::vector<std::uint8_t> forced;
  std::vector<std::vector<double>> logits;
};

struct Transcript {
  Mode mode = Mode::kParallel;
  SessionConfig config;
  Precision precision = Precision::kFp64;
  std::vector<TokenId> prompt;
  std::vector<SegmentRecord> paths;
  SegmentRecord summary;
  PositionPlan plan;
  CacheStats stats;

  std::vector<TokenId> flattened() const;
  SegmentLayout layout() const;
};

// Stage machine: Prefill -> ParallelReasoning -> Summary -> Done.
class DecodeSession {
 public:
  // `store` may be shared across sessions; when null the session owns one.
  DecodeSession(const ToyDecoder& model, SessionConfig config,
                std::vector<TokenId> prompt,
                std::vector<std::vector<TokenId>> path_prompts,
                BlockStore* store = nullptr);
  ~DecodeSession();
  DecodeSession(const DecodeSession&) = delete;
  DecodeSession& operator=(const DecodeSession&) = delete;

  Stage stage() const { return stage_; }

  // Runs the shared context once and forks the path caches.
  void prefill();
  // One lockstep round: every unfinished path emits one token. Once all
  // paths are finished the call builds the summary context instead.
  void step_parallel();
  // One summary token.
  void step_summary();
  // Drives the remaining stages and returns the transcript.
  Transcript run_to_end();

  // Order in which paths are advanced inside a round (0-based path slots).
  void set_round_order(std::vector<std::size_t> order);

  bool path_finished(std::size_t slot) const;
  const SegmentRecord& path_record(std::size_t slot) const;
  const SegmentRecord& summary_record() const { return summary_.record; }
  CacheStats stats() const;
  const BlockStore& store() const { return *store_; }
  Transcript transcript() const;

 private:
  struct Lane {
    SegmentRecord record;
    std::vector<TokenId> forced_queue;
    std::size_t forced_next = 0;
    std::size_t sampled = 0;
    bool finished = false;
    std::vector<double> last_logits;
    std::optional<Sampler> sampler;
    SequenceCache seq;
    PositionId next_pos = 0;
    std::optional<PathIndex> path;
    AllowMask allowed;
    TokenId close = 0;
    std::size_t budget = 0;
  };

  void advance(Lane& lane);
  void enter_summary();
  void rebuild_context();
  void release_all();

  const ToyDecoder& model_;
  SessionConfig config_;
  SpecialVocab vocab_;
  std::vector<TokenId> prompt_;
  std::unique_ptr<BlockStore> owned_store_;
  BlockStore* store_;
  CacheStats start_stats_;
  Stage stage_ = Stage::kPrefill;
  SequenceCache shared_;
  std::vector<Lane> lanes_;
  std::vector<std::size_t> round_order_;
  std::size_t current_lane_ = 0;  // sequential mode
  Lane summary_;
  std::vector<SequenceCache> scratch_;
};

// Full session in parallel or sequential mode. Replicated mode delegates
// to run_replicated and returns its first transcript.
Transcript run(const ToyDecoder& model, const SessionConfig& config,
               std::span<const TokenId> prompt,
               const std::vector<std::vector<TokenId>>& path_prompts);

struct ReplicatedResult {
  std::vector<Transcript> transcripts;
  std::vector<std::optional<std::string>> answers;
  std::optional<std::string> majority;
  CacheStats stats;
};

// config.n_paths independent single-path decodes over one block store.
// Replica r samples with seed config.sampling.seed + r.
ReplicatedResult run_replicated(const ToyDecoder& model, const SessionConfig& config,
                                std::span<const TokenId> prompt);

// Text inside the last \boxed{...} of the byte tokens, braces balanced.
std::optional<std::string> extract_boxed_answer(std::span<const TokenId> tokens,
                                                const SpecialVocab& vocab = {});

// Most frequent answer; ties go to the one seen first. Missing answers
// do not vote.
std::optional<std::string> majority_vote(const std::vector<std::optional<std::string>>& answers);

struct VerifyReport {
  bool ok = false;
  double max_abs_logit_diff = 0.0;
  std::size_t tokens_checked = 0;
  std::string failure;
};

// Largest recorded-logit deviation accepted per precision. fp64 replays
// must be exact.
inline constexpr double kLogitTolFp64 = 0.0;
inline constexpr double kLogitTolFp32 = 1e-5;

// Rebuilds layout, mask and plan, runs forward_full, and checks forced
// tokens, sampler agreement and the recorded logits.
VerifyReport verify_transcript(const ToyDecoder& model, const Transcript& transcript);

}  // namespace pthk
