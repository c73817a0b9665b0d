// Copyright 2026 The pthk Authors
// SPDX-License-Identifier: Apache-2.0

#include "pthk/transcript_io.hpp"

#include <cstdio>
#include <sstream>

#include "pthk/error.hpp"

namespace pthk {

namespace {

std::string g17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void put_ids(std::ostream& out, const std::vector<TokenId>& ids) {
  out << ids.size();
  for (TokenId t : ids) out << ' ' << t;
  out << '\n';
}

std::string bits(const std::vector<std::uint8_t>& v) {
  std::string s;
  for (auto b : v) s.push_back(b ? '1' : '0');
  return s.empty() ? "-" : s;
}

[[noreturn]] void bad(std::size_t line, const std::string& what) {
  throw Error("transcript line " + std::to_string(line) + ": " + what);
}

std::vector<TokenId> read_ids(std::istringstream& in, std::size_t line) {
  std::size_t n = 0;
  if (!(in >> n)) bad(line, "missing token count");
  std::vector<TokenId> ids(n);
  for (auto& t : ids) {
    if (!(in >> t)) bad(line, "fewer token ids than declared");
  }
  return ids;
}

std::vector<std::uint8_t> read_bits(std::istringstream& in, std::size_t line) {
  std::string s;
  if (!(in >> s)) bad(line, "missing forced bits");
  std::vector<std::uint8_t> out;
  if (s == "-") return out;
  for (char c : s) {
    if (c != '0' && c != '1') bad(line, "forced bits must be 0 or 1");
    out.push_back(c == '1');
  }
  return out;
}

}  // namespace

std::string format_transcript(const Transcript& t, bool with_logits) {
  std::ostringstream out;
  out << "PTHK-TRANSCRIPT 1\n";
  out << "mode " << to_string(t.mode) << '\n';
  out << "precision " << to_string(t.precision) << '\n';
  out << "budgets " << t.config.max_path_tokens << ' ' << t.config.max_summary_tokens << '\n';
  if (t.config.sampling.kind == SamplingConfig::Kind::kGreedy) {
    out << "sampling greedy\n";
  } else {
    out << "sampling top-k " << t.config.sampling.top_k << ' ' << g17(t.config.sampling.temperature)
        << ' ' << t.config.sampling.seed << '\n';
  }
  out << "reuse " << (t.config.reuse_kv ? 1 : 0) << '\n';
  out << "prompt ";
  put_ids(out, t.prompt);
  for (std::size_t i = 0; i < t.paths.size(); ++i) {
    out << "path " << i + 1 << ' ';
    put_ids(out, t.paths[i].tokens);
    out << "forced " << i + 1 << ' ' << bits(t.paths[i].forced) << '\n';
  }
  out << "summary ";
  put_ids(out, t.summary.tokens);
  out << "forced summary " << bits(t.summary.forced) << '\n';
  const CacheStats& s = t.stats;
  out << "stats " << s.blocks_allocated << ' ' << s.blocks_shared << ' '
      << s.prefill_tokens_computed << ' ' << s.summary_prefill_tokens << ' ' << s.decode_steps
      << ' ' << s.slots_copied << '\n';
  if (with_logits) {
    auto dump = [&](const SegmentRecord& r, const std::string& name) {
      for (std::size_t o = 0; o < r.logits.size(); ++o) {
        if (r.logits[o].empty()) continue;
        out << "logits " << name << ' ' << o;
        for (double v : r.logits[o]) out << ' ' << g17(v);
        out << '\n';
      }
    };
    for (std::size_t i = 0; i < t.paths.size(); ++i) dump(t.paths[i], std::to_string(i + 1));
    dump(t.summary, "summary");
  }
  out << "end\n";
  return out.str();
}

Transcript parse_transcript(const std::string& text) {
  std::istringstream all(text);
  std::string raw;
  std::size_t line = 0;
  Transcript t;
  bool header = false, ended = false, have_summary = false;
  auto segment = [&](const std::string& name, std::size_t ln) -> SegmentRecord& {
    if (name == "summary") return t.summary;
    std::size_t k = 0;
    try {
      k = std::stoul(name);
    } catch (...) {
      bad(ln, "bad segment name '" + name + "'");
    }
    if (k < 1 || k > t.paths.size()) bad(ln, "unknown path " + name);
    return t.paths[k - 1];
  };
  while (std::getline(all, raw)) {
    ++line;
    if (raw.empty()) continue;
    if (ended) bad(line, "content after end");
    std::istringstream in(raw);
    std::string key;
    in >> key;
    if (!header) {
      int version = 0;
      if (key != "PTHK-TRANSCRIPT" || !(in >> version) || version != 1) {
        bad(line, "missing PTHK-TRANSCRIPT 1 header");
      }
      header = true;
      continue;
    }
    if (key == "mode") {
      std::string m;
      in >> m;
      try {
        t.mode = parse_mode(m);
      } catch (const ConfigError& e) {
        bad(line, e.what());
      }
      t.config.mode = t.mode;
    } else if (key == "precision") {
      std::string p;
      in >> p;
      try {
        t.precision = parse_precision(p);
      } catch (const ConfigError& e) {
        bad(line, e.what());
      }
    } else if (key == "budgets") {
      if (!(in >> t.config.max_path_tokens >> t.config.max_summary_tokens)) bad(line, "bad budgets");
    } else if (key == "sampling") {
      std::string kind;
      in >> kind;
      if (kind == "greedy") {
        t.config.sampling = SamplingConfig::greedy();
      } else if (kind == "top-k") {
        SamplingConfig s;
        s.kind = SamplingConfig::Kind::kTopK;
        if (!(in >> s.top_k >> s.temperature >> s.seed)) bad(line, "bad top-k parameters");
        t.config.sampling = s;
      } else {
        bad(line, "unknown sampling '" + kind + "'");
      }
    } else if (key == "reuse") {
      int r = 0;
      if (!(in >> r) || (r != 0 && r != 1)) bad(line, "reuse must be 0 or 1");
      t.config.reuse_kv = r == 1;
    } else if (key == "prompt") {
      t.prompt = read_ids(in, line);
    } else if (key == "path") {
      std::size_t k = 0;
      if (!(in >> k) || k != t.paths.size() + 1) bad(line, "paths must be numbered 1, 2, ...");
      SegmentRecord r;
      r.tokens = read_ids(in, line);
      t.paths.push_back(std::move(r));
    } else if (key == "forced") {
      std::string name;
      in >> name;
      SegmentRecord& r = segment(name, line);
      r.forced = read_bits(in, line);
      if (r.forced.size() != r.tokens.size()) bad(line, "forced bits do not match the tokens");
      r.logits.assign(r.tokens.size(), {});
    } else if (key == "summary") {
      t.summary.tokens = read_ids(in, line);
      have_summary = true;
    } else if (key == "stats") {
      CacheStats& s = t.stats;
      if (!(in >> s.blocks_allocated >> s.blocks_shared >> s.prefill_tokens_computed >>
            s.summary_prefill_tokens >> s.decode_steps >> s.slots_copied)) {
        bad(line, "bad stats");
      }
    } else if (key == "logits") {
      std::string name;
      std::size_t offset = 0;
      if (!(in >> name >> offset)) bad(line, "bad logits header");
      SegmentRecord& r = segment(name, line);
      if (offset >= r.logits.size()) bad(line, "logits offset out of range");
      std::vector<double> row;
      double v;
      while (in >> v) row.push_back(v);
      if (!in.eof()) bad(line, "non-numeric logit");
      r.logits[offset] = std::move(row);
      continue;
    } else if (key == "end") {
      ended = true;
    } else {
      bad(line, "unknown record '" + key + "'");
    }
    std::string extra;
    if (in >> extra) bad(line, "trailing field '" + extra + "'");
  }
  if (!header) throw Error("transcript: empty input");
  if (!ended) throw Error("transcript: missing end record");
  if (!have_summary) throw Error("transcript: missing summary record");
  t.config.n_paths = t.paths.size();
  for (const auto& p : t.paths) {
    if (p.forced.size() != p.tokens.size()) throw Error("transcript: path without forced bits");
  }
  if (t.summary.forced.size() != t.summary.tokens.size()) {
    throw Error("transcript: summary without forced bits");
  }
  if (!t.paths.empty()) {
    try {
      const SegmentLayout layout = t.layout();
      t.plan = t.mode == Mode::kSequential ? assign_positions_disjoint(layout)
                                           : assign_positions(layout);
    } catch (const LayoutError&) {
      // Left empty; verify_transcript reports the malformed layout.
    }
  }
  return t;
}

}  // namespace pthk
