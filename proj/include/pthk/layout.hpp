// Copyright 2026 The pthk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace pthk {

using TokenId = std::int32_t;
using PathIndex = int;           // 1-based
using PositionId = std::int64_t;

inline constexpr int kMaxPaths = 16;

// Which segment of a flattened sequence a token belongs to.
class TokenRole {
 public:
  enum class Kind : std::uint8_t { kShared, kPath, kSummary };

  static constexpr TokenRole shared() { return TokenRole(Kind::kShared, 0); }
  static constexpr TokenRole summary() { return TokenRole(Kind::kSummary, 0); }
  static constexpr TokenRole path(PathIndex k) { return TokenRole(Kind::kPath, k); }

  constexpr Kind kind() const { return kind_; }
  // Path index for kPath roles, 0 otherwise.
  constexpr PathIndex path_index() const { return path_; }
  constexpr bool is_shared() const { return kind_ == Kind::kShared; }
  constexpr bool is_path() const { return kind_ == Kind::kPath; }
  constexpr bool is_summary() const { return kind_ == Kind::kSummary; }
  constexpr std::optional<PathIndex> path() const {
    return is_path() ? std::optional<PathIndex>(path_) : std::nullopt;
  }

  std::string to_string() const;

  friend constexpr bool operator==(TokenRole, TokenRole) = default;

 private:
  constexpr TokenRole(Kind kind, PathIndex path) : kind_(kind), path_(path) {}

  Kind kind_;
  PathIndex path_;
};

// Shared context, then paths 1..n concatenated in order, then summary.
class SegmentLayout {
 public:
  SegmentLayout(std::size_t shared_len, std::vector<std::size_t> path_lens,
                std::size_t summary_len);

  std::size_t shared_len() const { return shared_len_; }
  std::size_t summary_len() const { return summary_len_; }
  int n_paths() const { return static_cast<int>(path_lens_.size()); }
  const std::vector<std::size_t>& path_lens() const { return path_lens_; }
  std::size_t path_len(PathIndex k) const;
  std::size_t total() const { return total_; }

  std::size_t path_begin(PathIndex k) const;
  std::size_t summary_begin() const { return total_ - summary_len_; }
  std::size_t segment_len(TokenRole role) const;

  TokenRole role_of(std::size_t index) const;
  // Offset of `index` within its own segment.
  std::size_t offset_in_segment(std::size_t index) const;
  std::size_t flat_index(TokenRole role, std::size_t offset) const;

  friend bool operator==(const SegmentLayout&, const SegmentLayout&) = default;

 private:
  std::size_t shared_len_;
  std::vector<std::size_t> path_lens_;
  std::vector<std::size_t> path_begins_;
  std::size_t summary_len_;
  std::size_t total_;
};

// Special token ids occupy a contiguous band starting at `base`; the byte
// tokenizer keeps ordinary text below 256.
struct SpecialVocab {
  TokenId base = 256;
  std::string boxed_open = "\\boxed{";
  std::string boxed_close = "}";

  TokenId pad() const { return base; }
  TokenId summary_open() const { return base + 1; }
  TokenId summary_close() const { return base + 2; }
  TokenId think_open(PathIndex k) const;
  TokenId think_close(PathIndex k) const;
  TokenId max_id() const { return base + 2 + 2 * kMaxPaths; }

  bool is_special(TokenId t) const { return t >= base && t <= max_id(); }
  std::optional<PathIndex> think_open_index(TokenId t) const;
  std::optional<PathIndex> think_close_index(TokenId t) const;

  // Throws LayoutError unless every special id fits below vocab_size.
  void validate(std::size_t vocab_size) const;
};

// Token content split along a layout.
struct TaggedSegments {
  std::vector<TokenId> shared;
  std::vector<std::vector<TokenId>> paths;
  std::vector<TokenId> summary;
};

// Parses `shared* (<think k> ... </think k>){n} [<summary> ... </summary>]`.
// Tag tokens are counted inside the segment they open or close.
SegmentLayout layout_from_tagged_tokens(std::span<const TokenId> tokens,
                                        const SpecialVocab& vocab);

TaggedSegments split_segments(std::span<const TokenId> tokens,
                              const SegmentLayout& layout);
std::vector<TokenId> render_segments(const TaggedSegments& segments);
SegmentLayout layout_of(const TaggedSegments& segments);

std::string to_string(const SegmentLayout& layout);
// Parses "shared;p1,p2,...;summary", e.g. "2;2,2;1".
SegmentLayout parse_layout_spec(const std::string& text);

}  // namespace pthk
