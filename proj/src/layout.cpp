// Copyright 2026 The pthk Authors
// SPDX-License-Identifier: Apache-2.0

#include "pthk/layout.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

#include "pthk/error.hpp"

namespace pthk {

std::string TokenRole::to_string() const {
  switch (kind_) {
    case Kind::kShared:
      return "shared";
    case Kind::kSummary:
      return "summary";
    case Kind::kPath:
      return "path" + std::to_string(path_);
  }
  return "?";
}

SegmentLayout::SegmentLayout(std::size_t shared_len,
                             std::vector<std::size_t> path_lens,
                             std::size_t summary_len)
    : shared_len_(shared_len),
      path_lens_(std::move(path_lens)),
      summary_len_(summary_len) {
  if (path_lens_.empty()) throw LayoutError("layout needs at least one path");
  if (path_lens_.size() > static_cast<std::size_t>(kMaxPaths)) {
    throw LayoutError("layout has " + std::to_string(path_lens_.size()) +
                      " paths, at most " + std::to_string(kMaxPaths) +
                      " supported");
  }
  std::size_t cursor = shared_len_;
  path_begins_.reserve(path_lens_.size());
  for (std::size_t len : path_lens_) {
    if (len == 0) throw LayoutError("every path holds at least its open tag");
    path_begins_.push_back(cursor);
    cursor += len;
  }
  total_ = cursor + summary_len_;
}

std::size_t SegmentLayout::path_len(PathIndex k) const {
  if (k < 1 || k > n_paths()) {
    throw LayoutError("path index " + std::to_string(k) + " out of range");
  }
  return path_lens_[static_cast<std::size_t>(k - 1)];
}

std::size_t SegmentLayout::path_begin(PathIndex k) const {
  if (k < 1 || k > n_paths()) {
    throw LayoutError("path index " + std::to_string(k) + " out of range");
  }
  return path_begins_[static_cast<std::size_t>(k - 1)];
}

std::size_t SegmentLayout::segment_len(TokenRole role) const {
  switch (role.kind()) {
    case TokenRole::Kind::kShared:
      return shared_len_;
    case TokenRole::Kind::kSummary:
      return summary_len_;
    case TokenRole::Kind::kPath:
      return path_len(role.path_index());
  }
  return 0;
}

TokenRole SegmentLayout::role_of(std::size_t index) const {
  if (index >= total_) {
    throw LayoutError("token index " + std::to_string(index) +
                      " out of range for layout of " + std::to_string(total_));
  }
  if (index < shared_len_) return TokenRole::shared();
  if (index >= summary_begin()) return TokenRole::summary();
  // Last path whose begin is <= index.
  auto it = std::upper_bound(path_begins_.begin(), path_begins_.end(), index);
  return TokenRole::path(static_cast<PathIndex>(it - path_begins_.begin()));
}

std::size_t SegmentLayout::offset_in_segment(std::size_t index) const {
  TokenRole role = role_of(index);
  switch (role.kind()) {
    case TokenRole::Kind::kShared:
      return index;
    case TokenRole::Kind::kSummary:
      return index - summary_begin();
    case TokenRole::Kind::kPath:
      return index - path_begin(role.path_index());
  }
  return 0;
}

std::size_t SegmentLayout::flat_index(TokenRole role,
                                      std::size_t offset) const {
  std::size_t len = segment_len(role);
  if (offset >= len) {
    throw LayoutError("offset " + std::to_string(offset) + " out of range for " +
                      role.to_string() + " of length " + std::to_string(len));
  }
  switch (role.kind()) {
    case TokenRole::Kind::kShared:
      return offset;
    case TokenRole::Kind::kSummary:
      return summary_begin() + offset;
    case TokenRole::Kind::kPath:
      return path_begin(role.path_index()) + offset;
  }
  return 0;
}

TokenId SpecialVocab::think_open(PathIndex k) const {
  if (k < 1 || k > kMaxPaths) {
    throw LayoutError("no think tag for path " + std::to_string(k));
  }
  return base + 1 + 2 * k;
}

TokenId SpecialVocab::think_close(PathIndex k) const {
  if (k < 1 || k > kMaxPaths) {
    throw LayoutError("no think tag for path " + std::to_string(k));
  }
  return base + 2 + 2 * k;
}

std::optional<PathIndex> SpecialVocab::think_open_index(TokenId t) const {
  TokenId rel = t - (base + 3);
  if (rel < 0 || rel % 2 != 0 || rel / 2 >= kMaxPaths) return std::nullopt;
  return rel / 2 + 1;
}

std::optional<PathIndex> SpecialVocab::think_close_index(TokenId t) const {
  TokenId rel = t - (base + 4);
  if (rel < 0 || rel % 2 != 0 || rel / 2 >= kMaxPaths) return std::nullopt;
  return rel / 2 + 1;
}

void SpecialVocab::validate(std::size_t vocab_size) const {
  if (base < 0 || static_cast<std::size_t>(max_id()) >= vocab_size) {
    throw LayoutError("special tokens [" + std::to_string(base) + ", " +
                      std::to_string(max_id()) + "] do not fit vocab of " +
                      std::to_string(vocab_size));
  }
}

namespace {

std::string describe(TokenId t, std::size_t at) {
  return "token " + std::to_string(t) + " at index " + std::to_string(at);
}

}  // namespace

SegmentLayout layout_from_tagged_tokens(std::span<const TokenId> tokens,
                                        const SpecialVocab& vocab) {
  const std::size_t n = tokens.size();
  std::size_t i = 0;

  // Shared context: everything before the first tag. Pad is allowed here.
  while (i < n && !vocab.think_open_index(tokens[i])) {
    TokenId t = tokens[i];
    if (vocab.think_close_index(t)) {
      throw LayoutError("unbalanced tags: close " + describe(t, i) +
                        " without open");
    }
    if (t == vocab.summary_open()) {
      throw LayoutError("summary opened before any reasoning path at index " +
                        std::to_string(i));
    }
    if (t == vocab.summary_close()) {
      throw LayoutError("unbalanced tags: summary close at index " +
                        std::to_string(i));
    }
    ++i;
  }
  const std::size_t shared_len = i;

  std::vector<std::size_t> path_lens;
  std::vector<bool> seen(kMaxPaths + 1, false);
  while (i < n) {
    auto open = vocab.think_open_index(tokens[i]);
    if (!open) break;
    PathIndex k = *open;
    if (seen[static_cast<std::size_t>(k)]) {
      throw LayoutError("duplicate path index " + std::to_string(k));
    }
    PathIndex expected = static_cast<PathIndex>(path_lens.size()) + 1;
    if (k != expected) {
      throw LayoutError("path " + std::to_string(k) + " appears where path " +
                        std::to_string(expected) + " was expected");
    }
    seen[static_cast<std::size_t>(k)] = true;
    std::size_t begin = i++;
    bool closed = false;
    while (i < n) {
      TokenId t = tokens[i];
      if (auto c = vocab.think_close_index(t)) {
        if (*c != k) {
          throw LayoutError("interleaved paths: " + describe(t, i) +
                            " closes path " + std::to_string(*c) +
                            " inside path " + std::to_string(k));
        }
        ++i;
        closed = true;
        break;
      }
      if (auto o = vocab.think_open_index(t)) {
        if (*o == k) {
          throw LayoutError("duplicate path index " + std::to_string(k));
        }
        throw LayoutError("unbalanced tags: path " + std::to_string(*o) +
                          " opened inside path " + std::to_string(k));
      }
      if (t == vocab.summary_open() || t == vocab.summary_close()) {
        throw LayoutError("unbalanced tags: summary tag inside path " +
                          std::to_string(k));
      }
      ++i;
    }
    if (!closed) {
      throw LayoutError("unbalanced tags: path " + std::to_string(k) +
                        " never closed");
    }
    path_lens.push_back(i - begin);
  }

  if (path_lens.empty()) {
    throw LayoutError("tagged stream contains no reasoning path");
  }

  std::size_t summary_len = 0;
  if (i < n) {
    if (tokens[i] != vocab.summary_open()) {
      throw LayoutError("unexpected " + describe(tokens[i], i) +
                        " after the last reasoning path");
    }
    std::size_t begin = i++;
    bool closed = false;
    while (i < n) {
      TokenId t = tokens[i];
      if (t == vocab.summary_close()) {
        ++i;
        closed = true;
        break;
      }
      if (vocab.think_open_index(t)) {
        throw LayoutError("think block after summary open at index " +
                          std::to_string(i));
      }
      if (vocab.think_close_index(t) || t == vocab.summary_open()) {
        throw LayoutError("unbalanced tags: " + describe(t, i) +
                          " inside summary");
      }
      ++i;
    }
    if (!closed) throw LayoutError("unbalanced tags: summary never closed");
    summary_len = i - begin;
    if (i < n) {
      throw LayoutError("trailing " + describe(tokens[i], i) +
                        " after summary close");
    }
  }
  return SegmentLayout(shared_len, std::move(path_lens), summary_len);
}

TaggedSegments split_segments(std::span<const TokenId> tokens,
                              const SegmentLayout& layout) {
  if (tokens.size() != layout.total()) {
    throw LayoutError("token count " + std::to_string(tokens.size()) +
                      " does not match layout total " +
                      std::to_string(layout.total()));
  }
  TaggedSegments out;
  auto slice = [&](std::size_t begin, std::size_t len) {
    return std::vector<TokenId>(tokens.begin() + static_cast<long>(begin),
                                tokens.begin() + static_cast<long>(begin + len));
  };
  out.shared = slice(0, layout.shared_len());
  for (PathIndex k = 1; k <= layout.n_paths(); ++k) {
    out.paths.push_back(slice(layout.path_begin(k), layout.path_len(k)));
  }
  out.summary = slice(layout.summary_begin(), layout.summary_len());
  return out;
}

std::vector<TokenId> render_segments(const TaggedSegments& segments) {
  std::vector<TokenId> out(segments.shared);
  for (const auto& p : segments.paths) out.insert(out.end(), p.begin(), p.end());
  out.insert(out.end(), segments.summary.begin(), segments.summary.end());
  return out;
}

SegmentLayout layout_of(const TaggedSegments& segments) {
  std::vector<std::size_t> lens;
  lens.reserve(segments.paths.size());
  for (const auto& p : segments.paths) lens.push_back(p.size());
  return SegmentLayout(segments.shared.size(), std::move(lens),
                       segments.summary.size());
}

std::string to_string(const SegmentLayout& layout) {
  std::ostringstream os;
  os << "(" << layout.shared_len() << ", [";
  for (int k = 1; k <= layout.n_paths(); ++k) {
    if (k > 1) os << ",";
    os << layout.path_len(k);
  }
  os << "], " << layout.summary_len() << ")";
  return os.str();
}

SegmentLayout parse_layout_spec(const std::string& text) {
  auto fail = [&]() -> SegmentLayout {
    throw LayoutError("bad layout spec '" + text +
                      "', expected shared;p1,p2,...;summary");
  };
  auto first = text.find(';');
  auto second = first == std::string::npos ? first : text.find(';', first + 1);
  if (second == std::string::npos) return fail();
  auto parse_count = [&](const std::string& s) -> std::size_t {
    if (s.empty() ||
        !std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; })) {
      fail();
    }
    return static_cast<std::size_t>(std::stoull(s));
  };
  std::size_t shared = parse_count(text.substr(0, first));
  std::size_t summary = parse_count(text.substr(second + 1));
  std::vector<std::size_t> paths;
  std::string mid = text.substr(first + 1, second - first - 1);
  std::size_t start = 0;
  while (true) {
    auto comma = mid.find(',', start);
    paths.push_back(parse_count(mid.substr(start, comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return SegmentLayout(shared, std::move(paths), summary);
}

}  // namespace pthk
