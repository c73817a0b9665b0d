// Copyright 2026 The pthk Authors
// SPDX-License-Identifier: Apache-2.0

#include "pthk/kvcache.hpp"

#include <algorithm>
#include <cassert>
#include <string>

#include "pthk/error.hpp"

namespace pthk {

CacheStats& CacheStats::operator+=(const CacheStats& o) {
  blocks_allocated += o.blocks_allocated;
  blocks_shared += o.blocks_shared;
  prefill_tokens_computed += o.prefill_tokens_computed;
  summary_prefill_tokens += o.summary_prefill_tokens;
  decode_steps += o.decode_steps;
  slots_copied += o.slots_copied;
  return *this;
}

std::vector<BlockId> SequenceCache::block_ids() const {
  std::vector<BlockId> ids;
  ids.reserve(extents.size());
  for (const auto& e : extents) ids.push_back(e.block);
  return ids;
}

BlockStore::BlockStore(CacheGeometry geometry)
    : geometry_(geometry), blocks_(geometry.max_blocks) {
  if (geometry_.block_size == 0 || geometry_.kv_dim == 0 || geometry_.n_layers == 0) {
    throw CacheError("cache geometry needs positive block size, kv_dim and layers");
  }
  free_list_.reserve(geometry_.max_blocks);
  for (std::size_t i = geometry_.max_blocks; i-- > 0;) {
    free_list_.push_back(static_cast<BlockId>(i));
  }
}

BlockId BlockStore::allocate_locked(TokenRole tag) {
  if (free_list_.empty()) {
    throw CacheError("block pool exhausted (" + std::to_string(geometry_.max_blocks) +
                     " blocks)");
  }
  BlockId id = free_list_.back();
  free_list_.pop_back();
  Block& b = block(id);
  const std::size_t floats = geometry_.n_layers * layer_stride();
  if (b.keys.size() != floats) {
    b.keys.assign(floats, 0.0);
    b.values.assign(floats, 0.0);
  }
  b.ref_count = 1;
  b.filled = 0;
  b.tag = tag;
  ++stats_.blocks_allocated;
  return id;
}

void BlockStore::unref_locked(BlockId id) {
  Block& b = block(id);
  assert(b.ref_count > 0);
  if (--b.ref_count == 0) {
    b.filled = 0;
    free_list_.push_back(id);
  }
}

void BlockStore::log_locked(SequenceId seq, BlockId id, Access kind) const {
  if (log_enabled_) log_.push_back({seq, id, kind});
}

SequenceCache BlockStore::create_sequence(TokenRole role) {
  std::lock_guard lock(mu_);
  SequenceCache seq;
  seq.id = next_sequence_++;
  seq.role = role;
  return seq;
}

std::vector<SequenceCache> BlockStore::fork(const SequenceCache& shared,
                                            std::size_t n) {
  if (shared.released) throw CacheError("fork of a released sequence");
  if (n == 0) throw CacheError("fork needs at least one child");
  if (n > geometry_.max_fork || n > static_cast<std::size_t>(kMaxPaths)) {
    throw CacheError("fork of " + std::to_string(n) + " exceeds the maximum of " +
                     std::to_string(std::min<std::size_t>(geometry_.max_fork, kMaxPaths)));
  }
  std::lock_guard lock(mu_);

  // The last extent is copied when its block still has room, so each child
  // can keep writing into a block it owns.
  std::size_t by_ref = shared.extents.size();
  bool copy_tail = false;
  if (!shared.extents.empty()) {
    const Block& tail = block(shared.extents.back().block);
    if (tail.filled < geometry_.block_size) {
      copy_tail = true;
      --by_ref;
    }
  }

  std::vector<SequenceCache> children;
  children.reserve(n);
  for (std::size_t c = 0; c < n; ++c) {
    SequenceCache child;
    child.id = next_sequence_++;
    child.role = TokenRole::path(static_cast<PathIndex>(c + 1));
    child.length = shared.length;
    child.last_pos = shared.last_pos;
    child.parent = shared.id;
    child.fork_length = shared.length;
    child.extents.assign(shared.extents.begin(),
                         shared.extents.begin() + static_cast<long>(by_ref));
    for (std::size_t e = 0; e < by_ref; ++e) ++block(shared.extents[e].block).ref_count;
    if (copy_tail) {
      const Extent& src = shared.extents.back();
      BlockId id = allocate_locked(child.role);
      Block& dst = block(id);
      const Block& from = block(src.block);
      const std::size_t kv = geometry_.kv_dim;
      for (std::size_t l = 0; l < geometry_.n_layers; ++l) {
        const std::size_t base = l * layer_stride();
        std::copy_n(from.keys.begin() + static_cast<long>(base + src.begin * kv),
                    src.size() * kv, dst.keys.begin() + static_cast<long>(base));
        std::copy_n(from.values.begin() + static_cast<long>(base + src.begin * kv),
                    src.size() * kv, dst.values.begin() + static_cast<long>(base));
      }
      dst.filled = src.size();
      stats_.slots_copied += src.size();
      log_locked(child.id, src.block, Access::kRead);
      log_locked(child.id, id, Access::kWrite);
      child.extents.push_back({id, 0, src.size()});
    }
    children.push_back(std::move(child));
  }
  stats_.blocks_shared += by_ref;
  return children;
}

void BlockStore::append(SequenceCache& seq, std::span<const double> keys,
                        std::span<const double> values) {
  if (seq.released) throw CacheError("append to a released sequence");
  const std::size_t expect = geometry_.n_layers * geometry_.kv_dim;
  if (keys.size() != expect || values.size() != expect) {
    throw ShapeError("append: expected " + std::to_string(expect) +
                     " key/value entries per token");
  }
  std::lock_guard lock(mu_);
  bool reuse = false;
  if (!seq.extents.empty()) {
    const Extent& last = seq.extents.back();
    const Block& tail = block(last.block);
    reuse = tail.ref_count == 1 && last.end == tail.filled &&
            tail.filled < geometry_.block_size;
  }
  if (!reuse) {
    BlockId id = allocate_locked(seq.role);
    seq.extents.push_back({id, 0, 0});
  }
  const BlockId target = seq.extents.back().block;
  log_locked(seq.id, target, Access::kWrite);
  Block& b = block(target);
  assert(b.ref_count == 1);
  const std::size_t kv = geometry_.kv_dim;
  const std::size_t slot = b.filled;
  for (std::size_t l = 0; l < geometry_.n_layers; ++l) {
    const std::size_t base = l * layer_stride() + slot * kv;
    std::copy_n(keys.begin() + static_cast<long>(l * kv), kv,
                b.keys.begin() + static_cast<long>(base));
    std::copy_n(values.begin() + static_cast<long>(l * kv), kv,
                b.values.begin() + static_cast<long>(base));
  }
  ++b.filled;
  ++seq.extents.back().end;
  ++seq.length;
}

SequenceCache BlockStore::merge_for_summary(const SequenceCache& shared,
                                            std::span<const SequenceCache> paths) {
  if (shared.released) throw CacheError("merge over a released shared sequence");
  for (const auto& p : paths) {
    if (p.released || !p.parent || *p.parent != shared.id ||
        p.fork_length != shared.length) {
      throw CacheError("sequence " + std::to_string(p.id) +
                       " is not descended from shared sequence " +
                       std::to_string(shared.id));
    }
  }
  std::lock_guard lock(mu_);
  SequenceCache merged;
  merged.id = next_sequence_++;
  merged.role = TokenRole::summary();
  merged.extents = shared.extents;
  merged.length = shared.length;
  merged.last_pos = shared.last_pos;
  for (const auto& p : paths) {
    std::size_t skip = shared.length;
    for (const Extent& e : p.extents) {
      if (skip >= e.size()) {
        skip -= e.size();
        continue;
      }
      Extent tail{e.block, e.begin + static_cast<std::uint32_t>(skip), e.end};
      skip = 0;
      merged.extents.push_back(tail);
    }
    merged.length += p.length - shared.length;
    if (p.last_pos && (!merged.last_pos || *p.last_pos > *merged.last_pos)) {
      merged.last_pos = p.last_pos;
    }
  }
  for (const Extent& e : merged.extents) ++block(e.block).ref_count;
  return merged;
}

void BlockStore::release(SequenceCache& seq) {
  if (seq.released) return;
  std::lock_guard lock(mu_);
  for (const Extent& e : seq.extents) unref_locked(e.block);
  seq.extents.clear();
  seq.length = 0;
  seq.released = true;
}

std::vector<SlotRef> BlockStore::slots(const SequenceCache& seq) const {
  if (seq.released) throw CacheError("read of a released sequence");
  std::vector<SlotRef> out;
  out.reserve(seq.length);
  {
    std::lock_guard lock(mu_);
    for (const Extent& e : seq.extents) log_locked(seq.id, e.block, Access::kRead);
  }
  const std::size_t kv = geometry_.kv_dim;
  for (const Extent& e : seq.extents) {
    const Block& b = block(e.block);
    for (std::uint32_t s = e.begin; s < e.end; ++s) {
      out.push_back({b.keys.data() + s * kv, b.values.data() + s * kv});
    }
  }
  return out;
}

CacheStats BlockStore::stats() const {
  std::lock_guard lock(mu_);
  return stats_;
}

std::size_t BlockStore::blocks_in_use() const {
  std::lock_guard lock(mu_);
  return geometry_.max_blocks - free_list_.size();
}

std::uint32_t BlockStore::ref_count(BlockId id) const {
  std::lock_guard lock(mu_);
  if (id >= blocks_.size()) throw CacheError("unknown block " + std::to_string(id));
  return block(id).ref_count;
}

TokenRole BlockStore::block_tag(BlockId id) const {
  std::lock_guard lock(mu_);
  if (id >= blocks_.size()) throw CacheError("unknown block " + std::to_string(id));
  return block(id).tag;
}

std::uint32_t BlockStore::block_fill(BlockId id) const {
  std::lock_guard lock(mu_);
  if (id >= blocks_.size()) throw CacheError("unknown block " + std::to_string(id));
  return block(id).filled;
}

void BlockStore::note_prefill(std::size_t tokens) {
  std::lock_guard lock(mu_);
  stats_.prefill_tokens_computed += tokens;
}

void BlockStore::note_summary_prefill(std::size_t tokens) {
  std::lock_guard lock(mu_);
  stats_.summary_prefill_tokens += tokens;
}

void BlockStore::note_decode_step() {
  std::lock_guard lock(mu_);
  ++stats_.decode_steps;
}

void BlockStore::enable_access_log(bool on) {
  std::lock_guard lock(mu_);
  log_enabled_ = on;
}

std::vector<AccessRecord> BlockStore::access_log() const {
  std::lock_guard lock(mu_);
  return log_;
}

void BlockStore::clear_access_log() {
  std::lock_guard lock(mu_);
  log_.clear();
}

CacheStats stats(const BlockStore& store) { return store.stats(); }

}  // namespace pthk
