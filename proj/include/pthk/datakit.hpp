// Copyright 2026 The pthk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "pthk/layout.hpp"

namespace pthk {

struct TokenGrid {
  std::size_t h = 0;
  std::size_t w = 0;
  std::size_t cells() const { return h * w; }
};

struct Cell {
  std::size_t row = 0;
  std::size_t col = 0;
  friend bool operator==(const Cell&, const Cell&) = default;
};

enum class Quadrant : std::uint8_t { kTopLeft, kTopRight, kBottomLeft, kBottomRight };
std::string to_string(Quadrant q);

struct Region {
  Quadrant label = Quadrant::kTopLeft;
  std::vector<Cell> cells;  // row-major
};

// Rows split at ceil(h/2), columns at ceil(w/2); the top-left quadrant
// takes the larger share. Grids smaller than 2x2 are rejected because a
// quadrant would be empty.
std::array<Region, 4> block_partition(const TokenGrid& grid);

enum class ScanOrder : std::uint8_t { kLeftToRight, kTopToBottom, kRightToLeft, kBottomToTop };
std::string to_string(ScanOrder s);
inline constexpr std::array<ScanOrder, 4> kScanOrders = {
    ScanOrder::kLeftToRight, ScanOrder::kTopToBottom, ScanOrder::kRightToLeft,
    ScanOrder::kBottomToTop};

// Visiting order as row-major cell indices.
std::vector<std::size_t> scan_permutation(const TokenGrid& grid, ScanOrder order);

enum class TaskKind : std::uint8_t { kCounting, kGrounding, kPerception, kOther };
enum class Strategy : std::uint8_t { kBlockBased, kScanOrder };
std::string to_string(TaskKind k);
std::string to_string(Strategy s);
Strategy select_strategy(TaskKind kind);

// Textual instruction that steers path k (1-based) under a strategy.
std::string path_instruction(Strategy strategy, PathIndex k);

// One token per byte; special ids render as their tag spelling.
struct ByteTokenizer {
  SpecialVocab vocab;
  std::vector<TokenId> encode(const std::string& text) const;
  std::string decode(const std::vector<TokenId>& tokens) const;
};

inline constexpr char kUserOpen[] = "<|User|>";
inline constexpr char kAssistantOpen[] = "<|Assistant|>";

struct SftSample {
  std::string question;
  std::vector<std::string> paths;
  std::string summary;
  std::string answer;
  std::vector<TokenId> token_ids;
  // 1 marks a token that is a training target.
  std::vector<std::uint8_t> loss_mask;

  friend bool operator==(const SftSample&, const SftSample&) = default;
};

// Builds user turn + pad + <think k> text </think k> blocks + <summary>
// text </summary>. An empty `summary` gets a default sentence ending in
// the boxed answer. Loss mask is 0 on the user turn, the pad and every
// <think k>.
SftSample build_sample(const std::string& question, const std::vector<std::string>& path_texts,
                       const std::string& answer, const std::string& summary = "",
                       const ByteTokenizer& tokenizer = {});

// Length of the user turn plus pad, i.e. the shared context.
std::size_t prompt_length(const SftSample& sample);

// One JSON object per line; returns the number of records written.
std::size_t emit_records(const std::vector<SftSample>& samples, std::ostream& sink);
SftSample parse_record(const std::string& line);
std::vector<SftSample> read_records(std::istream& in);

// Deterministic toy counting/grounding samples over random grids.
std::vector<SftSample> synthetic_samples(std::size_t count, std::uint64_t seed);

}  // namespace pthk
