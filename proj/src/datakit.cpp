// Copyright 2026 The pthk Authors
// SPDX-License-Identifier: Apache-2.0

#include "pthk/datakit.hpp"

#include <istream>
#include <ostream>

#include <json.hpp>

#include "pthk/error.hpp"
#include "pthk/rng.hpp"

namespace pthk {

std::string to_string(Quadrant q) {
  switch (q) {
    case Quadrant::kTopLeft: return "top-left";
    case Quadrant::kTopRight: return "top-right";
    case Quadrant::kBottomLeft: return "bottom-left";
    case Quadrant::kBottomRight: return "bottom-right";
  }
  return "?";
}

std::array<Region, 4> block_partition(const TokenGrid& grid) {
  if (grid.h < 2 || grid.w < 2) {
    throw LayoutError("block_partition needs at least a 2x2 grid, got " +
                      std::to_string(grid.h) + "x" + std::to_string(grid.w));
  }
  const std::size_t rs = (grid.h + 1) / 2;
  const std::size_t cs = (grid.w + 1) / 2;
  std::array<Region, 4> out{Region{Quadrant::kTopLeft, {}}, Region{Quadrant::kTopRight, {}},
                            Region{Quadrant::kBottomLeft, {}}, Region{Quadrant::kBottomRight, {}}};
  for (std::size_t r = 0; r < grid.h; ++r) {
    for (std::size_t c = 0; c < grid.w; ++c) {
      const std::size_t q = (r < rs ? 0 : 2) + (c < cs ? 0 : 1);
      out[q].cells.push_back({r, c});
    }
  }
  return out;
}

std::string to_string(ScanOrder s) {
  switch (s) {
    case ScanOrder::kLeftToRight: return "left-to-right";
    case ScanOrder::kTopToBottom: return "top-to-bottom";
    case ScanOrder::kRightToLeft: return "right-to-left";
    case ScanOrder::kBottomToTop: return "bottom-to-top";
  }
  return "?";
}

std::vector<std::size_t> scan_permutation(const TokenGrid& grid, ScanOrder order) {
  if (grid.h < 1 || grid.w < 1) throw LayoutError("grid dimensions must be positive");
  std::vector<std::size_t> out;
  out.reserve(grid.cells());
  const std::size_t h = grid.h, w = grid.w;
  switch (order) {
    case ScanOrder::kLeftToRight:
      for (std::size_t r = 0; r < h; ++r)
        for (std::size_t c = 0; c < w; ++c) out.push_back(r * w + c);
      break;
    case ScanOrder::kTopToBottom:
      for (std::size_t c = 0; c < w; ++c)
        for (std::size_t r = 0; r < h; ++r) out.push_back(r * w + c);
      break;
    case ScanOrder::kRightToLeft:
      for (std::size_t r = 0; r < h; ++r)
        for (std::size_t c = w; c-- > 0;) out.push_back(r * w + c);
      break;
    case ScanOrder::kBottomToTop:
      for (std::size_t c = 0; c < w; ++c)
        for (std::size_t r = h; r-- > 0;) out.push_back(r * w + c);
      break;
  }
  return out;
}

std::string to_string(TaskKind k) {
  switch (k) {
    case TaskKind::kCounting: return "counting";
    case TaskKind::kGrounding: return "grounding";
    case TaskKind::kPerception: return "perception";
    case TaskKind::kOther: return "other";
  }
  return "?";
}

std::string to_string(Strategy s) {
  return s == Strategy::kScanOrder ? "scan-order" : "block-based";
}

Strategy select_strategy(TaskKind kind) {
  return kind == TaskKind::kCounting ? Strategy::kScanOrder : Strategy::kBlockBased;
}

std::string path_instruction(Strategy strategy, PathIndex k) {
  if (k < 1) throw LayoutError("path index must be positive");
  const auto i = static_cast<std::size_t>(k - 1) % 4;
  if (strategy == Strategy::kScanOrder) {
    return "Sweep the grid " + to_string(kScanOrders[i]) + ".";
  }
  static constexpr std::array<Quadrant, 4> quads = {Quadrant::kTopLeft, Quadrant::kTopRight,
                                                    Quadrant::kBottomLeft, Quadrant::kBottomRight};
  return "Look only at the " + to_string(quads[i]) + " quarter.";
}

std::vector<TokenId> ByteTokenizer::encode(const std::string& text) const {
  std::vector<TokenId> out;
  out.reserve(text.size());
  for (unsigned char c : text) out.push_back(static_cast<TokenId>(c));
  return out;
}

std::string ByteTokenizer::decode(const std::vector<TokenId>& tokens) const {
  std::string out;
  for (TokenId t : tokens) {
    if (t >= 0 && t < 256) {
      out.push_back(static_cast<char>(t));
    } else if (t == vocab.pad()) {
      out += "<pad>";
    } else if (t == vocab.summary_open()) {
      out += "<summary>";
    } else if (t == vocab.summary_close()) {
      out += "</summary>";
    } else if (auto k = vocab.think_open_index(t)) {
      out += "<think" + std::to_string(*k) + ">";
    } else if (auto c = vocab.think_close_index(t)) {
      out += "</think" + std::to_string(*c) + ">";
    } else {
      out += "<" + std::to_string(t) + ">";
    }
  }
  return out;
}

namespace {

bool contains_tag_text(const std::string& s) {
  for (const char* tag : {"<think", "</think", "<summary", "</summary", "<|", "{", "}"}) {
    if (s.find(tag) != std::string::npos) return true;
  }
  return false;
}

void append(SftSample& s, const std::vector<TokenId>& ids, std::uint8_t target) {
  s.token_ids.insert(s.token_ids.end(), ids.begin(), ids.end());
  s.loss_mask.insert(s.loss_mask.end(), ids.size(), target);
}

void append(SftSample& s, TokenId id, std::uint8_t target) {
  s.token_ids.push_back(id);
  s.loss_mask.push_back(target);
}

}  // namespace

SftSample build_sample(const std::string& question, const std::vector<std::string>& path_texts,
                       const std::string& answer, const std::string& summary,
                       const ByteTokenizer& tokenizer) {
  const SpecialVocab& vocab = tokenizer.vocab;
  if (path_texts.empty() || path_texts.size() > static_cast<std::size_t>(kMaxPaths)) {
    throw LayoutError("a sample needs between 1 and " + std::to_string(kMaxPaths) + " paths");
  }
  for (std::size_t i = 0; i < path_texts.size(); ++i) {
    if (path_texts[i].empty()) throw LayoutError("path " + std::to_string(i + 1) + " text is empty");
  }
  if (answer.empty()) throw LayoutError("answer is empty");
  if (contains_tag_text(answer)) throw LayoutError("answer contains tag or brace characters");

  SftSample s;
  s.question = question;
  s.paths = path_texts;
  s.answer = answer;
  s.summary = summary.empty()
                  ? "Putting the " + std::to_string(path_texts.size()) +
                        " views together gives \\boxed{" + answer + "}."
                  : summary;
  const std::string boxed = vocab.boxed_open + answer + vocab.boxed_close;
  if (s.summary.find(boxed) == std::string::npos) {
    throw LayoutError("summary text must contain " + boxed);
  }

  append(s, tokenizer.encode(std::string(kUserOpen) + question + kAssistantOpen), 0);
  append(s, vocab.pad(), 0);
  for (std::size_t i = 0; i < path_texts.size(); ++i) {
    const auto k = static_cast<PathIndex>(i + 1);
    append(s, vocab.think_open(k), 0);
    append(s, tokenizer.encode(path_texts[i]), 1);
    append(s, vocab.think_close(k), 1);
  }
  append(s, vocab.summary_open(), 1);
  append(s, tokenizer.encode(s.summary), 1);
  append(s, vocab.summary_close(), 1);
  return s;
}

std::size_t prompt_length(const SftSample& sample) {
  return std::string(kUserOpen).size() + sample.question.size() +
         std::string(kAssistantOpen).size() + 1;
}

std::size_t emit_records(const std::vector<SftSample>& samples, std::ostream& sink) {
  std::size_t n = 0;
  for (const auto& s : samples) {
    nlohmann::ordered_json j;
    j["question"] = s.question;
    j["paths"] = s.paths;
    j["summary"] = s.summary;
    j["answer"] = s.answer;
    j["token_ids"] = s.token_ids;
    j["loss_mask"] = s.loss_mask;
    sink << j.dump() << '\n';
    if (!sink) throw Error("record sink write failed after " + std::to_string(n) + " records");
    ++n;
  }
  return n;
}

SftSample parse_record(const std::string& line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(std::string("record is not valid JSON: ") + e.what());
  }
  SftSample s;
  try {
    s.question = j.at("question").get<std::string>();
    s.paths = j.at("paths").get<std::vector<std::string>>();
    s.summary = j.at("summary").get<std::string>();
    s.answer = j.at("answer").get<std::string>();
    s.token_ids = j.at("token_ids").get<std::vector<TokenId>>();
    s.loss_mask = j.at("loss_mask").get<std::vector<std::uint8_t>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("record has a missing or mistyped field: ") + e.what());
  }
  if (s.token_ids.size() != s.loss_mask.size()) {
    throw Error("record token_ids and loss_mask lengths differ");
  }
  return s;
}

std::vector<SftSample> read_records(std::istream& in) {
  std::vector<SftSample> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(parse_record(line));
  }
  return out;
}

std::vector<SftSample> synthetic_samples(std::size_t count, std::uint64_t seed) {
  std::vector<SftSample> out;
  SplitMix64 rng(seed);
  for (std::size_t n = 0; n < count; ++n) {
    const TokenGrid grid{2 + rng.below(5), 2 + rng.below(5)};
    std::vector<std::uint8_t> lit(grid.cells());
    for (auto& c : lit) c = rng.below(3) == 0;
    const bool counting = rng.below(2) == 0;
    const TaskKind kind = counting ? TaskKind::kCounting : TaskKind::kGrounding;
    const Strategy strategy = select_strategy(kind);
    std::vector<std::string> paths;
    std::size_t total = 0;
    for (std::uint8_t c : lit) total += c;
    if (strategy == Strategy::kScanOrder) {
      for (ScanOrder order : kScanOrders) {
        std::size_t seen = 0;
        for (std::size_t idx : scan_permutation(grid, order)) seen += lit[idx];
        paths.push_back(path_instruction(strategy, static_cast<PathIndex>(paths.size() + 1)) +
                        " Marked cells met: " + std::to_string(seen) + ".");
      }
    } else {
      for (const Region& region : block_partition(grid)) {
        std::size_t hits = 0;
        for (const Cell& cell : region.cells) hits += lit[cell.row * grid.w + cell.col];
        paths.push_back("Quarter " + to_string(region.label) + ": " + std::to_string(hits) +
                        " marked of " + std::to_string(region.cells.size()) + ".");
      }
    }
    std::string question = "Grid " + std::to_string(grid.h) + "x" + std::to_string(grid.w) + ". ";
    std::string answer;
    if (counting) {
      question += "How many cells are marked?";
      answer = std::to_string(total);
    } else {
      question += "Which quarter holds the most marked cells?";
      std::size_t best = 0, best_hits = 0;
      const auto regions = block_partition(grid);
      for (std::size_t q = 0; q < regions.size(); ++q) {
        std::size_t hits = 0;
        for (const Cell& cell : regions[q].cells) hits += lit[cell.row * grid.w + cell.col];
        if (hits > best_hits) {
          best = q;
          best_hits = hits;
        }
      }
      answer = to_string(regions[best].label);
    }
    out.push_back(build_sample(question, paths, answer));
  }
  return out;
}

}  // namespace pthk
