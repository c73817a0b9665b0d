// Copyright 2026 The pthk Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "fixtures.hpp"
#include "pthk/engine.hpp"
#include "pthk/error.hpp"

using namespace pthk;

namespace {

const SpecialVocab kVocab;

SessionConfig session(std::size_t n, Mode mode = Mode::kParallel, bool top_k = false,
                      std::uint64_t seed = 0) {
  SessionConfig c;
  c.mode = mode;
  c.n_paths = n;
  c.max_path_tokens = 6;
  c.max_summary_tokens = 4;
  if (top_k) c.sampling = SamplingConfig::seeded_top_k(8, 1.0, seed);
  return c;
}

std::vector<std::vector<TokenId>> no_prompts(std::size_t n) { return std::vector<std::vector<TokenId>>(n); }

// Recomputes every sampled token's logits with the monolithic forward pass
// and returns the largest deviation from what the engine recorded.
double replay_diff(const ToyDecoder& m, const Transcript& t) {
  const SegmentLayout l = t.layout();
  const bool sequential = t.mode == Mode::kSequential;
  const PositionPlan plan = sequential ? assign_positions_disjoint(l) : assign_positions(l);
  REQUIRE(plan == t.plan);
  const PaMask mask = sequential ? build_causal_mask(l.total()) : build_pa_mask(l);
  const auto flat = t.flattened();
  const auto full = forward_full(m, flat, mask, plan);
  double diff = 0.0;
  std::size_t checked = 0;
  auto check = [&](const SegmentRecord& r, std::size_t begin) {
    for (std::size_t o = 0; o < r.tokens.size(); ++o) {
      if (r.forced[o]) continue;
      const auto row = full.row(begin + o - 1);
      REQUIRE(r.logits[o].size() == row.size());
      for (std::size_t c = 0; c < row.size(); ++c) diff = std::max(diff, std::fabs(row[c] - r.logits[o][c]));
      ++checked;
    }
  };
  for (int k = 1; k <= l.n_paths(); ++k) check(t.paths[k - 1], l.path_begin(k));
  check(t.summary, l.summary_begin());
  CHECK(checked > 0);
  return diff;
}

void check_structure(const Transcript& t, const SessionConfig& c,
                     const std::vector<std::vector<TokenId>>& path_prompts) {
  REQUIRE(t.paths.size() == c.n_paths);
  for (std::size_t i = 0; i < t.paths.size(); ++i) {
    const auto k = static_cast<PathIndex>(i + 1);
    const SegmentRecord& r = t.paths[i];
    REQUIRE(r.tokens.size() >= 2);
    CHECK(r.tokens.front() == kVocab.think_open(k));
    CHECK(r.tokens.back() == kVocab.think_close(k));
    const std::size_t n_forced_prefix = 1 + path_prompts[i].size();
    for (std::size_t o = 0; o < n_forced_prefix; ++o) CHECK(r.forced[o] == 1);
    CHECK(std::equal(path_prompts[i].begin(), path_prompts[i].end(), r.tokens.begin() + 1));
    std::size_t sampled = 0;
    for (std::size_t o = n_forced_prefix; o < r.tokens.size(); ++o) {
      sampled += r.forced[o] ? 0 : 1;
      if (o + 1 < r.tokens.size()) CHECK_FALSE(kVocab.is_special(r.tokens[o]));
    }
    CHECK(sampled <= c.max_path_tokens);
    if (r.forced.back()) CHECK(sampled == c.max_path_tokens);
  }
  CHECK(t.summary.tokens.front() == kVocab.summary_open());
  CHECK(t.summary.tokens.back() == kVocab.summary_close());
}

}  // namespace

TEST_CASE("parallel transcripts replay exactly through the monolithic pass") {
  SplitMix64 rng(1);
  const ToyDecoder m = fixtures::toy_model(1);
  for (std::size_t n : {1, 2, 4}) {
    for (bool top_k : {false, true}) {
      const SessionConfig c = session(n, Mode::kParallel, top_k, 11 + n);
      std::vector<std::vector<TokenId>> pp(n);
      for (auto& p : pp) p = fixtures::byte_prompt(rng, rng.below(3));
      const auto prompt = fixtures::byte_prompt(rng, 3 + rng.below(20));
      const Transcript t = run(m, c, prompt, pp);
      check_structure(t, c, pp);
      CHECK(replay_diff(m, t) == 0.0);
    }
  }
}

TEST_CASE("fp32 transcripts stay within 1e-5 of the fp64 recomputation") {
  SplitMix64 rng(2);
  const ToyDecoder m = fixtures::toy_model(2, Precision::kFp32);
  const Transcript t = run(m, session(3, Mode::kParallel, true, 4), fixtures::byte_prompt(rng, 12),
                           no_prompts(3));
  CHECK(t.precision == Precision::kFp32);
  CHECK(replay_diff(m, t) <= 1e-5);
}

TEST_CASE("sequential transcripts replay with a causal mask and consecutive positions") {
  SplitMix64 rng(3);
  const ToyDecoder m = fixtures::toy_model(3);
  const SessionConfig c = session(3, Mode::kSequential, true, 8);
  const auto pp = no_prompts(3);
  const Transcript t = run(m, c, fixtures::byte_prompt(rng, 9), pp);
  check_structure(t, c, pp);
  CHECK(t.plan.pos.back() == static_cast<PositionId>(t.flattened().size() - 1));
  CHECK(replay_diff(m, t) == 0.0);
}

TEST_CASE("a single path decodes the same in parallel and sequential mode") {
  SplitMix64 rng(4);
  const ToyDecoder m = fixtures::toy_model(4);
  for (bool top_k : {false, true}) {
    const auto prompt = fixtures::byte_prompt(rng, 10);
    const Transcript a = run(m, session(1, Mode::kParallel, top_k, 3), prompt, no_prompts(1));
    const Transcript b = run(m, session(1, Mode::kSequential, top_k, 3), prompt, no_prompts(1));
    CHECK(a.paths[0].tokens == b.paths[0].tokens);
    CHECK(a.paths[0].logits == b.paths[0].logits);
    CHECK(a.summary.tokens == b.summary.tokens);
    CHECK(a.summary.logits == b.summary.logits);
    CHECK(a.plan == b.plan);
  }
}

TEST_CASE("cache reuse changes only the summary prefill counter") {
  SplitMix64 rng(5);
  const ToyDecoder m = fixtures::toy_model(5);
  for (Mode mode : {Mode::kParallel, Mode::kSequential}) {
    for (std::size_t n : {1, 2, 4}) {
      const auto prompt = fixtures::byte_prompt(rng, 7 + n);
      SessionConfig on = session(n, mode, true, n);
      SessionConfig off = on;
      off.reuse_kv = false;
      const Transcript a = run(m, on, prompt, no_prompts(n));
      const Transcript b = run(m, off, prompt, no_prompts(n));
      CHECK(a.paths.size() == b.paths.size());
      for (std::size_t i = 0; i < n; ++i) {
        CHECK(a.paths[i].tokens == b.paths[i].tokens);
        CHECK(a.paths[i].logits == b.paths[i].logits);
      }
      CHECK(a.summary.tokens == b.summary.tokens);
      CHECK(a.summary.logits == b.summary.logits);
      std::size_t path_tokens = 0;
      for (const auto& p : a.paths) path_tokens += p.tokens.size();
      CHECK(a.stats.prefill_tokens_computed == prompt.size());
      CHECK(b.stats.prefill_tokens_computed == prompt.size());
      CHECK(a.stats.summary_prefill_tokens == 0);
      CHECK(b.stats.summary_prefill_tokens == prompt.size() + path_tokens);
      CHECK(a.stats.decode_steps == b.stats.decode_steps);
      CHECK(a.stats.decode_steps == path_tokens + a.summary.tokens.size());
    }
  }
}

TEST_CASE("the order lanes advance within a round does not matter") {
  SplitMix64 rng(6);
  const ToyDecoder m = fixtures::toy_model(6);
  const std::size_t n = 4;
  const SessionConfig c = session(n, Mode::kParallel, true, 21);
  const auto prompt = fixtures::byte_prompt(rng, 8);
  const Transcript base = run(m, c, prompt, no_prompts(n));
  std::vector<std::size_t> order = {0, 1, 2, 3};
  int permutations = 0;
  while (std::next_permutation(order.begin(), order.end())) {
    if (++permutations % 5 != 0) continue;
    DecodeSession s(m, c, prompt, no_prompts(n));
    s.set_round_order(order);
    const Transcript t = s.run_to_end();
    for (std::size_t i = 0; i < n; ++i) REQUIRE(t.paths[i].tokens == base.paths[i].tokens);
    REQUIRE(t.summary.logits == base.summary.logits);
  }
  DecodeSession s(m, c, prompt, no_prompts(n));
  CHECK_THROWS_AS(s.set_round_order({0, 1, 1, 2}), EngineError);
  CHECK_THROWS_AS(s.set_round_order({0, 1}), EngineError);
}

TEST_CASE("worker threads give the same transcript") {
  SplitMix64 rng(7);
  const ToyDecoder m = fixtures::toy_model(7);
  SessionConfig c = session(6, Mode::kParallel, true, 2);
  const auto prompt = fixtures::byte_prompt(rng, 20);
  const Transcript a = run(m, c, prompt, no_prompts(6));
  c.workers = 4;
  const Transcript b = run(m, c, prompt, no_prompts(6));
  for (std::size_t i = 0; i < 6; ++i) CHECK(a.paths[i].logits == b.paths[i].logits);
  CHECK(a.summary.tokens == b.summary.tokens);
  CHECK(a.stats == b.stats);
}

TEST_CASE("a path's prompt does not reach any other path") {
  SplitMix64 rng(8);
  const ToyDecoder m = fixtures::toy_model(8);
  const SessionConfig c = session(3, Mode::kParallel, true, 5);
  const auto prompt = fixtures::byte_prompt(rng, 6);
  std::vector<std::vector<TokenId>> pp = {{10, 11}, {20}, {}};
  const Transcript a = run(m, c, prompt, pp);
  pp[1] = {99, 98, 97};
  const Transcript b = run(m, c, prompt, pp);
  for (std::size_t i : {0u, 2u}) {
    CHECK(a.paths[i].tokens == b.paths[i].tokens);
    CHECK(a.paths[i].logits == b.paths[i].logits);
  }
  CHECK(a.paths[1].tokens != b.paths[1].tokens);
}

TEST_CASE("replicated runs pay the prompt once per replica") {
  SplitMix64 rng(9);
  const ToyDecoder m = fixtures::toy_model(9);
  const auto prompt = fixtures::byte_prompt(rng, 15);
  for (std::size_t n : {1, 2, 4}) {
    const ReplicatedResult r = run_replicated(m, session(n, Mode::kReplicated, true, 30), prompt);
    REQUIRE(r.transcripts.size() == n);
    CHECK(r.stats.prefill_tokens_computed == n * prompt.size());
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(r.transcripts[i].mode == Mode::kReplicated);
      CHECK(r.transcripts[i].paths.size() == 1);
      CHECK(r.transcripts[i].config.sampling.seed == 30 + i);
      CHECK(replay_diff(m, r.transcripts[i]) == 0.0);
    }
  }
  const Transcript parallel = run(m, session(4, Mode::kParallel, true, 30), prompt, no_prompts(4));
  CHECK(parallel.stats.prefill_tokens_computed == prompt.size());
}

TEST_CASE("stepping the session by stage") {
  SplitMix64 rng(10);
  const ToyDecoder m = fixtures::toy_model(10);
  DecodeSession s(m, session(2), fixtures::byte_prompt(rng, 5), no_prompts(2));
  CHECK(s.stage() == Stage::kPrefill);
  CHECK_THROWS_AS(s.step_parallel(), EngineError);
  CHECK_THROWS_AS(s.step_summary(), EngineError);
  s.prefill();
  CHECK_THROWS_AS(s.prefill(), EngineError);
  CHECK(s.stage() == Stage::kParallelReasoning);
  s.step_parallel();
  CHECK(s.path_record(0).tokens.size() == 1);
  CHECK(s.path_record(1).tokens.size() == 1);
  CHECK_FALSE(s.path_finished(0));
  while (s.stage() == Stage::kParallelReasoning) s.step_parallel();
  CHECK(s.path_finished(0));
  CHECK(s.path_finished(1));
  CHECK_THROWS_AS(s.step_parallel(), EngineError);
  while (s.stage() == Stage::kSummary) s.step_summary();
  CHECK(s.stage() == Stage::kDone);
  CHECK(s.summary_record().tokens.back() == kVocab.summary_close());
}

TEST_CASE("sessions over a shared store report their own counters and release blocks") {
  SplitMix64 rng(11);
  const ToyDecoder m = fixtures::toy_model(11);
  CacheGeometry g;
  g.n_layers = m.config().n_layers;
  g.kv_dim = m.config().model_dim();
  BlockStore store(g);
  const auto p1 = fixtures::byte_prompt(rng, 4);
  const auto p2 = fixtures::byte_prompt(rng, 9);
  {
    DecodeSession a(m, session(2), p1, no_prompts(2), &store);
    CHECK(a.run_to_end().stats.prefill_tokens_computed == 4);
  }
  CHECK(store.blocks_in_use() == 0);
  {
    DecodeSession b(m, session(2), p2, no_prompts(2), &store);
    CHECK(b.run_to_end().stats.prefill_tokens_computed == 9);
    // Abandoned mid-session: the destructor still frees everything.
    DecodeSession c(m, session(3), p2, no_prompts(3), &store);
    c.prefill();
    c.step_parallel();
  }
  CHECK(store.blocks_in_use() == 0);
  CHECK(store.stats().prefill_tokens_computed == 22);
}

TEST_CASE("session argument errors") {
  const ToyDecoder m = fixtures::toy_model(12);
  CHECK_THROWS_AS(DecodeSession(m, session(2), {}, no_prompts(2)), EngineError);
  CHECK_THROWS_AS(DecodeSession(m, session(2), {1, 2}, no_prompts(3)), EngineError);
  CHECK_THROWS_AS(DecodeSession(m, session(2), {1, kVocab.think_open(1)}, no_prompts(2)),
                  EngineError);
  CHECK_NOTHROW(DecodeSession(m, session(2), {1, kVocab.pad()}, no_prompts(2)));
  CHECK_THROWS_AS(DecodeSession(m, session(1), {1}, {{kVocab.pad()}}), EngineError);
  CHECK_THROWS_AS(DecodeSession(m, session(1), {600}, no_prompts(1)), EngineError);
  CHECK_THROWS_AS(DecodeSession(m, session(1, Mode::kReplicated), {1}, no_prompts(1)),
                  EngineError);
  CHECK_THROWS_AS(DecodeSession(m, session(0), {1}, {}), ConfigError);
  CHECK_THROWS_AS(DecodeSession(m, session(kMaxPaths + 1), {1}, no_prompts(kMaxPaths + 1)),
                  ConfigError);
  CHECK(parse_mode("sequential") == Mode::kSequential);
  CHECK_THROWS_AS(parse_mode("beam"), ConfigError);
}

namespace {
std::vector<TokenId> bytes(const std::string& s) { return {s.begin(), s.end()}; }
}  // namespace

TEST_CASE("boxed answers and majority vote") {
  CHECK(extract_boxed_answer(bytes("so \\boxed{42}.")) == "42");
  CHECK(extract_boxed_answer(bytes("\\boxed{1} then \\boxed{frac{1}{2}}")) == "frac{1}{2}");
  CHECK_FALSE(extract_boxed_answer(bytes("\\boxed{open")).has_value());
  CHECK_FALSE(extract_boxed_answer(bytes("nothing here")).has_value());
  std::vector<TokenId> tagged = bytes("\\boxed{7");
  tagged.push_back(kVocab.summary_close());
  tagged.push_back('}');
  CHECK(extract_boxed_answer(tagged) == "7");

  using A = std::optional<std::string>;
  CHECK(majority_vote({A("a"), A("b"), A("b")}) == "b");
  CHECK(majority_vote({A("x"), A("y")}) == "x");
  CHECK(majority_vote({std::nullopt, A("z"), std::nullopt}) == "z");
  CHECK_FALSE(majority_vote({std::nullopt}).has_value());
  CHECK_FALSE(majority_vote({}).has_value());
}
