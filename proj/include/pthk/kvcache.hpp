// Copyright 2026 The pthk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <mutex>
#include <optional>
#include <span>
#include <vector>

#include "pthk/layout.hpp"
#include "pthk/rope.hpp"

namespace pthk {

class ToyDecoder;

using BlockId = std::uint32_t;
using SequenceId = std::uint64_t;

struct CacheGeometry {
  std::size_t n_layers = 2;
  std::size_t kv_dim = 64;
  std::size_t block_size = 16;
  std::size_t max_blocks = 4096;
  std::size_t max_fork = kMaxPaths;
};

// Monotone counters. `decode_steps` counts cached forward steps outside of
// any prefill; `slots_copied` counts key/value slots duplicated by fork.
struct CacheStats {
  std::uint64_t blocks_allocated = 0;
  std::uint64_t blocks_shared = 0;
  std::uint64_t prefill_tokens_computed = 0;
  std::uint64_t summary_prefill_tokens = 0;
  std::uint64_t decode_steps = 0;
  std::uint64_t slots_copied = 0;

  CacheStats& operator+=(const CacheStats& o);
  friend bool operator==(const CacheStats&, const CacheStats&) = default;
};

// Contiguous run of filled slots [begin, end) inside one block.
struct Extent {
  BlockId block = 0;
  std::uint32_t begin = 0;
  std::uint32_t end = 0;
  std::uint32_t size() const { return end - begin; }
  friend bool operator==(const Extent&, const Extent&) = default;
};

// A sequence's view of the pool: extents in flattened token order. Only the
// owner of a sequence appends to it.
struct SequenceCache {
  SequenceId id = 0;
  std::vector<Extent> extents;
  std::size_t length = 0;
  TokenRole role = TokenRole::shared();
  std::optional<PositionId> last_pos;
  // Lineage: the sequence this one was forked from and its length then.
  std::optional<SequenceId> parent;
  std::size_t fork_length = 0;
  bool released = false;

  std::optional<PathIndex> path() const { return role.path(); }
  std::vector<BlockId> block_ids() const;
};

enum class Access : std::uint8_t { kRead, kWrite };

struct AccessRecord {
  SequenceId seq = 0;
  BlockId block = 0;
  Access kind = Access::kRead;
};

// Pointers to one slot's key and value rows for layer 0; layer l lives at
// offset l * layer_stride().
struct SlotRef {
  const double* keys = nullptr;
  const double* values = nullptr;
};

class BlockStore {
 public:
  explicit BlockStore(CacheGeometry geometry);

  BlockStore(const BlockStore&) = delete;
  BlockStore& operator=(const BlockStore&) = delete;

  const CacheGeometry& geometry() const { return geometry_; }
  std::size_t layer_stride() const { return geometry_.block_size * geometry_.kv_dim; }

  SequenceCache create_sequence(TokenRole role);

  // Children i = 0..n-1 become paths i+1. Full blocks are shared by
  // reference; a partially filled tail is copied once per child.
  std::vector<SequenceCache> fork(const SequenceCache& shared, std::size_t n);

  // `keys` and `values` hold n_layers * kv_dim entries, layer-major.
  void append(SequenceCache& seq, std::span<const double> keys,
              std::span<const double> values);

  // Read-only concatenation: shared, then each path's post-fork suffix in
  // path order. Tokens appended later land in fresh blocks.
  SequenceCache merge_for_summary(const SequenceCache& shared,
                                  std::span<const SequenceCache> paths);

  void release(SequenceCache& seq);

  // Slot references in sequence order; logs one read per visited block.
  std::vector<SlotRef> slots(const SequenceCache& seq) const;

  CacheStats stats() const;
  std::size_t blocks_in_use() const;
  std::uint32_t ref_count(BlockId block) const;
  TokenRole block_tag(BlockId block) const;
  std::uint32_t block_fill(BlockId block) const;

  void note_prefill(std::size_t tokens);
  void note_summary_prefill(std::size_t tokens);
  void note_decode_step();

  void enable_access_log(bool on);
  std::vector<AccessRecord> access_log() const;
  void clear_access_log();

 private:
  struct Block {
    std::vector<double> keys;    // n_layers * block_size * kv_dim
    std::vector<double> values;  // same layout
    std::uint32_t ref_count = 0;
    std::uint32_t filled = 0;
    TokenRole tag = TokenRole::shared();
  };

  BlockId allocate_locked(TokenRole tag);
  void unref_locked(BlockId id);
  Block& block(BlockId id) { return blocks_[id]; }
  const Block& block(BlockId id) const { return blocks_[id]; }
  void log_locked(SequenceId seq, BlockId block, Access kind) const;

  CacheGeometry geometry_;
  mutable std::mutex mu_;
  // Sized once so slot pointers stay valid while other sequences allocate.
  std::vector<Block> blocks_;
  std::vector<BlockId> free_list_;
  SequenceId next_sequence_ = 1;
  CacheStats stats_;
  bool log_enabled_ = false;
  mutable std::vector<AccessRecord> log_;
};

// Runs the shared-context tokens through the model once, producing the
// cache every path forks from. Counts the tokens as prefill work.
SequenceCache prefill_shared(BlockStore& store, const ToyDecoder& model,
                             std::span<const TokenId> tokens,
                             const PositionPlan& plan);

CacheStats stats(const BlockStore& store);

}  // namespace pthk
