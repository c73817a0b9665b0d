// Copyright 2026 The pthk Authors
// SPDX-License-Identifier: Apache-2.0

#include "pthk/engine.hpp"

#include <exception>
#include <map>
#include <thread>

#include "pthk/error.hpp"
#include "step.hpp"

namespace pthk {

std::string to_string(Mode m) {
  switch (m) {
    case Mode::kParallel: return "parallel";
    case Mode::kSequential: return "sequential";
    case Mode::kReplicated: return "replicated";
  }
  return "?";
}

Mode parse_mode(const std::string& text) {
  if (text == "parallel") return Mode::kParallel;
  if (text == "sequential") return Mode::kSequential;
  if (text == "replicated") return Mode::kReplicated;
  throw ConfigError("mode must be parallel, sequential or replicated, got '" + text + "'");
}

std::string to_string(Stage s) {
  switch (s) {
    case Stage::kPrefill: return "prefill";
    case Stage::kParallelReasoning: return "parallel-reasoning";
    case Stage::kSummary: return "summary";
    case Stage::kDone: return "done";
  }
  return "?";
}

void SessionConfig::validate() const {
  if (n_paths < 1 || n_paths > static_cast<std::size_t>(kMaxPaths)) {
    throw ConfigError("n_paths must be in [1, " + std::to_string(kMaxPaths) + "]");
  }
  if (max_path_tokens < 1) throw ConfigError("max_path_tokens must be at least 1");
  if (max_summary_tokens < 1) throw ConfigError("max_summary_tokens must be at least 1");
  if (workers < 1) throw ConfigError("workers must be at least 1");
  if (block_size < 1) throw ConfigError("block_size must be at least 1");
  if (max_blocks < 1) throw ConfigError("max_blocks must be at least 1");
  if (sampling.kind == SamplingConfig::Kind::kTopK) {
    if (sampling.top_k < 1) throw ConfigError("top_k must be at least 1");
    if (!(sampling.temperature > 0.0)) throw ConfigError("temperature must be positive");
  }
}

std::vector<TokenId> Transcript::flattened() const {
  std::vector<TokenId> out(prompt);
  for (const auto& p : paths) out.insert(out.end(), p.tokens.begin(), p.tokens.end());
  out.insert(out.end(), summary.tokens.begin(), summary.tokens.end());
  return out;
}

SegmentLayout Transcript::layout() const {
  const std::vector<TokenId> tokens = flattened();
  return layout_from_tagged_tokens(tokens, SpecialVocab{});
}

namespace {

CacheStats minus(const CacheStats& a, const CacheStats& b) {
  CacheStats d;
  d.blocks_allocated = a.blocks_allocated - b.blocks_allocated;
  d.blocks_shared = a.blocks_shared - b.blocks_shared;
  d.prefill_tokens_computed = a.prefill_tokens_computed - b.prefill_tokens_computed;
  d.summary_prefill_tokens = a.summary_prefill_tokens - b.summary_prefill_tokens;
  d.decode_steps = a.decode_steps - b.decode_steps;
  d.slots_copied = a.slots_copied - b.slots_copied;
  return d;
}

CacheGeometry geometry_for(const ToyDecoder& model, const SessionConfig& config) {
  CacheGeometry g;
  g.n_layers = model.config().n_layers;
  g.kv_dim = model.config().model_dim();
  g.block_size = config.block_size;
  g.max_blocks = config.max_blocks;
  g.max_fork = kMaxPaths;
  return g;
}

}  // namespace

DecodeSession::DecodeSession(const ToyDecoder& model, SessionConfig config,
                             std::vector<TokenId> prompt,
                             std::vector<std::vector<TokenId>> path_prompts,
                             BlockStore* store)
    : model_(model), config_(std::move(config)), prompt_(std::move(prompt)) {
  config_.validate();
  vocab_.validate(model_.config().vocab_size);
  if (config_.mode == Mode::kReplicated) {
    throw EngineError("replicated sessions are driven by run_replicated");
  }
  if (prompt_.empty()) throw EngineError("the shared prompt must not be empty");
  if (path_prompts.size() != config_.n_paths) {
    throw EngineError("expected " + std::to_string(config_.n_paths) + " path prompts, got " +
                      std::to_string(path_prompts.size()));
  }
  for (TokenId t : prompt_) {
    if (t < 0 || static_cast<std::size_t>(t) >= model_.config().vocab_size) {
      throw EngineError("prompt token " + std::to_string(t) + " outside the vocabulary");
    }
    if (vocab_.is_special(t) && t != vocab_.pad()) {
      throw EngineError("prompt token " + std::to_string(t) + " is a segment tag");
    }
  }
  for (const auto& pp : path_prompts) {
    for (TokenId t : pp) {
      if (t < 0 || static_cast<std::size_t>(t) >= model_.config().vocab_size ||
          vocab_.is_special(t)) {
        throw EngineError("path prompt token " + std::to_string(t) +
                          " is special or outside the vocabulary");
      }
    }
  }
  const CacheGeometry geometry = geometry_for(model_, config_);
  if (store) {
    const CacheGeometry& g = store->geometry();
    if (g.n_layers != geometry.n_layers || g.kv_dim != geometry.kv_dim) {
      throw EngineError("block store geometry does not match the model");
    }
    store_ = store;
  } else {
    owned_store_ = std::make_unique<BlockStore>(geometry);
    store_ = owned_store_.get();
  }
  start_stats_ = store_->stats();

  const std::size_t vocab_size = model_.config().vocab_size;
  lanes_.resize(config_.n_paths);
  for (std::size_t i = 0; i < config_.n_paths; ++i) {
    Lane& lane = lanes_[i];
    const auto k = static_cast<PathIndex>(i + 1);
    lane.forced_queue.push_back(vocab_.think_open(k));
    lane.forced_queue.insert(lane.forced_queue.end(), path_prompts[i].begin(),
                             path_prompts[i].end());
    lane.path = k;
    lane.allowed = allowed_in_path(vocab_size, vocab_, k);
    lane.close = vocab_.think_close(k);
    lane.budget = config_.max_path_tokens;
    lane.sampler.emplace(config_.sampling, static_cast<std::uint64_t>(k));
    round_order_.push_back(i);
  }
  summary_.forced_queue.push_back(vocab_.summary_open());
  summary_.allowed = allowed_in_summary(vocab_size, vocab_);
  summary_.close = vocab_.summary_close();
  summary_.budget = config_.max_summary_tokens;
  summary_.sampler.emplace(config_.sampling, 0);
}

DecodeSession::~DecodeSession() { release_all(); }

void DecodeSession::release_all() {
  for (auto& lane : lanes_) store_->release(lane.seq);
  store_->release(summary_.seq);
  store_->release(shared_);
  for (auto& s : scratch_) store_->release(s);
}

void DecodeSession::set_round_order(std::vector<std::size_t> order) {
  std::vector<std::uint8_t> seen(lanes_.size(), 0);
  if (order.size() != lanes_.size()) throw EngineError("round order must list every path once");
  for (std::size_t s : order) {
    if (s >= lanes_.size() || seen[s]) throw EngineError("round order must list every path once");
    seen[s] = 1;
  }
  round_order_ = std::move(order);
}

bool DecodeSession::path_finished(std::size_t slot) const { return lanes_.at(slot).finished; }

const SegmentRecord& DecodeSession::path_record(std::size_t slot) const {
  return lanes_.at(slot).record;
}

CacheStats DecodeSession::stats() const { return minus(store_->stats(), start_stats_); }

void DecodeSession::prefill() {
  if (stage_ != Stage::kPrefill) {
    throw EngineError("prefill called in stage " + to_string(stage_));
  }
  PositionPlan plan;
  for (std::size_t t = 0; t < prompt_.size(); ++t) {
    plan.pos.push_back(static_cast<PositionId>(t));
    plan.path_of.emplace_back(std::nullopt);
  }
  shared_ = prefill_shared(*store_, model_, prompt_, plan);
  const auto start = static_cast<PositionId>(prompt_.size());
  if (config_.mode == Mode::kParallel) {
    std::vector<SequenceCache> children = store_->fork(shared_, lanes_.size());
    for (std::size_t i = 0; i < lanes_.size(); ++i) {
      lanes_[i].seq = std::move(children[i]);
      lanes_[i].next_pos = start;
    }
  }
  stage_ = Stage::kParallelReasoning;
}

void DecodeSession::advance(Lane& lane) {
  // Sequential mode threads every lane through the single shared chain.
  SequenceCache& seq = config_.mode == Mode::kSequential && &lane != &summary_ ? shared_ : lane.seq;
  const PositionId pos =
      config_.mode == Mode::kSequential ? static_cast<PositionId>(seq.length) : lane.next_pos;
  TokenId token;
  bool forced = true;
  if (lane.forced_next < lane.forced_queue.size()) {
    token = lane.forced_queue[lane.forced_next++];
  } else if (lane.sampled >= lane.budget) {
    token = lane.close;
  } else {
    token = lane.sampler->pick(lane.last_logits, lane.allowed);
    forced = false;
    ++lane.sampled;
  }
  lane.record.tokens.push_back(token);
  lane.record.forced.push_back(forced ? 1 : 0);
  lane.record.logits.push_back(forced ? std::vector<double>{} : lane.last_logits);
  lane.last_logits = forward_step(model_, token, *store_, seq, pos, lane.path);
  lane.next_pos = pos + 1;
  if (token == lane.close) lane.finished = true;
}

void DecodeSession::step_parallel() {
  if (stage_ != Stage::kParallelReasoning) {
    throw EngineError("step_parallel called in stage " + to_string(stage_));
  }
  if (config_.mode == Mode::kSequential) {
    while (current_lane_ < lanes_.size() && lanes_[current_lane_].finished) ++current_lane_;
    if (current_lane_ == lanes_.size()) {
      enter_summary();
      return;
    }
    advance(lanes_[current_lane_]);
    return;
  }
  std::vector<Lane*> active;
  for (std::size_t slot : round_order_) {
    if (!lanes_[slot].finished) active.push_back(&lanes_[slot]);
  }
  if (active.empty()) {
    enter_summary();
    return;
  }
  const std::size_t workers = std::min(config_.workers, active.size());
  if (workers <= 1) {
    for (Lane* lane : active) advance(*lane);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> threads;
  threads.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    threads.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < active.size(); i += workers) advance(*active[i]);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

void DecodeSession::enter_summary() {
  if (config_.reuse_kv) {
    if (config_.mode == Mode::kParallel) {
      std::vector<SequenceCache> paths;
      for (const auto& lane : lanes_) paths.push_back(lane.seq);
      summary_.seq = store_->merge_for_summary(shared_, paths);
    } else {
      summary_.seq = store_->merge_for_summary(shared_, {});
    }
  } else {
    rebuild_context();
  }
  if (config_.mode == Mode::kParallel) {
    std::size_t longest = 0;
    for (const auto& lane : lanes_) longest = std::max(longest, lane.record.tokens.size());
    summary_.next_pos = static_cast<PositionId>(prompt_.size() + longest);
  } else {
    summary_.next_pos = static_cast<PositionId>(summary_.seq.length);
  }
  stage_ = Stage::kSummary;
}

// Recomputes the summary context from raw tokens instead of reusing the
// path caches. Counted as summary prefill work only.
void DecodeSession::rebuild_context() {
  std::size_t computed = 0;
  SequenceCache base = store_->create_sequence(TokenRole::shared());
  for (std::size_t t = 0; t < prompt_.size(); ++t) {
    detail::cached_step(model_, prompt_[t], *store_, base, static_cast<PositionId>(t),
                        std::nullopt);
    ++computed;
  }
  if (config_.mode == Mode::kSequential) {
    for (const auto& lane : lanes_) {
      for (TokenId token : lane.record.tokens) {
        detail::cached_step(model_, token, *store_, base,
                            static_cast<PositionId>(base.length), lane.path);
        ++computed;
      }
    }
    summary_.seq = store_->merge_for_summary(base, {});
    scratch_.push_back(std::move(base));
  } else {
    std::vector<SequenceCache> children = store_->fork(base, lanes_.size());
    for (std::size_t i = 0; i < lanes_.size(); ++i) {
      PositionId pos = static_cast<PositionId>(prompt_.size());
      for (TokenId token : lanes_[i].record.tokens) {
        detail::cached_step(model_, token, *store_, children[i], pos++, lanes_[i].path);
        ++computed;
      }
    }
    summary_.seq = store_->merge_for_summary(base, children);
    scratch_.push_back(std::move(base));
    for (auto& c : children) scratch_.push_back(std::move(c));
  }
  store_->note_summary_prefill(computed);
}

void DecodeSession::step_summary() {
  if (stage_ != Stage::kSummary) {
    throw EngineError("step_summary called in stage " + to_string(stage_));
  }
  advance(summary_);
  if (summary_.finished) stage_ = Stage::kDone;
}

Transcript DecodeSession::run_to_end() {
  if (stage_ == Stage::kPrefill) prefill();
  while (stage_ == Stage::kParallelReasoning) step_parallel();
  while (stage_ == Stage::kSummary) step_summary();
  return transcript();
}

Transcript DecodeSession::transcript() const {
  Transcript t;
  t.mode = config_.mode;
  t.config = config_;
  t.precision = model_.config().precision;
  t.prompt = prompt_;
  for (const auto& lane : lanes_) t.paths.push_back(lane.record);
  t.summary = summary_.record;
  if (stage_ == Stage::kDone) {
    const SegmentLayout layout = t.layout();
    t.plan = config_.mode == Mode::kSequential ? assign_positions_disjoint(layout)
                                               : assign_positions(layout);
  }
  t.stats = stats();
  return t;
}

Transcript run(const ToyDecoder& model, const SessionConfig& config,
               std::span<const TokenId> prompt,
               const std::vector<std::vector<TokenId>>& path_prompts) {
  if (config.mode == Mode::kReplicated) {
    return run_replicated(model, config, prompt).transcripts.front();
  }
  DecodeSession session(model, config, std::vector<TokenId>(prompt.begin(), prompt.end()),
                        path_prompts);
  return session.run_to_end();
}

ReplicatedResult run_replicated(const ToyDecoder& model, const SessionConfig& config,
                                std::span<const TokenId> prompt) {
  config.validate();
  ReplicatedResult result;
  BlockStore store(geometry_for(model, config));
  for (std::size_t r = 0; r < config.n_paths; ++r) {
    SessionConfig replica = config;
    replica.mode = Mode::kParallel;
    replica.n_paths = 1;
    replica.sampling.seed = config.sampling.seed + r;
    DecodeSession session(model, replica, std::vector<TokenId>(prompt.begin(), prompt.end()),
                          {{}}, &store);
    Transcript t = session.run_to_end();
    t.mode = Mode::kReplicated;
    t.config.mode = Mode::kReplicated;
    result.answers.push_back(extract_boxed_answer(t.summary.tokens));
    result.transcripts.push_back(std::move(t));
  }
  result.majority = majority_vote(result.answers);
  result.stats = store.stats();
  return result;
}

std::optional<std::string> extract_boxed_answer(std::span<const TokenId> tokens,
                                                const SpecialVocab& vocab) {
  std::string text;
  for (TokenId t : tokens) {
    if (t >= 0 && t < 256) text.push_back(static_cast<char>(t));
  }
  const std::size_t open = text.rfind(vocab.boxed_open);
  if (open == std::string::npos) return std::nullopt;
  const std::size_t begin = open + vocab.boxed_open.size();
  int depth = 1;
  for (std::size_t i = begin; i < text.size(); ++i) {
    if (text[i] == '{') {
      ++depth;
    } else if (text.compare(i, vocab.boxed_close.size(), vocab.boxed_close) == 0) {
      if (--depth == 0) return text.substr(begin, i - begin);
    }
  }
  return std::nullopt;
}

std::optional<std::string> majority_vote(const std::vector<std::optional<std::string>>& answers) {
  std::map<std::string, std::size_t> counts;
  std::vector<std::string> order;
  for (const auto& a : answers) {
    if (!a) continue;
    if (counts[*a]++ == 0) order.push_back(*a);
  }
  std::optional<std::string> best;
  std::size_t best_count = 0;
  for (const auto& a : order) {
    if (counts[a] > best_count) {
      best = a;
      best_count = counts[a];
    }
  }
  return best;
}

}  // namespace pthk
