// Copyright 2026 The pthk Authors
// SPDX-License-Identifier: Apache-2.0

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "pthk/cli.hpp"
#include "pthk/error.hpp"

namespace pthk {

std::string fmt9(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::uint64_t to_u64(const std::string& v, std::uint64_t lo, std::uint64_t hi) {
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) {
    throw ConfigError("'" + v + "' is not a non-negative integer");
  }
  if (out < lo || out > hi) {
    throw ConfigError("value " + v + " outside [" + std::to_string(lo) + ", " +
                      std::to_string(hi) + "]");
  }
  return out;
}

double to_f64(const std::string& v, double lo, double hi) {
  double out = 0.0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) {
    throw ConfigError("'" + v + "' is not a number");
  }
  if (!(out >= lo && out <= hi)) {
    throw ConfigError("value " + v + " outside [" + fmt9(lo) + ", " + fmt9(hi) + "]");
  }
  return out;
}

bool to_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("'" + v + "' is not a boolean");
}

using Setter = std::function<void(CliConfig&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"n_layers", [](CliConfig& c, const std::string& v) { c.model.n_layers = to_u64(v, 1, 16); }},
      {"n_heads", [](CliConfig& c, const std::string& v) { c.model.n_heads = to_u64(v, 1, 64); }},
      {"head_dim", [](CliConfig& c, const std::string& v) {
         c.model.head_dim = to_u64(v, 2, 512);
         if (c.model.head_dim % 2) throw ConfigError("head_dim must be even");
       }},
      {"vocab_size", [](CliConfig& c, const std::string& v) { c.model.vocab_size = to_u64(v, 291, 1u << 20); }},
      {"ffn_dim", [](CliConfig& c, const std::string& v) { c.model.ffn_dim = to_u64(v, 1, 1u << 16); }},
      {"rope_base", [](CliConfig& c, const std::string& v) { c.model.rope_base = to_f64(v, 1.0, 1e12); }},
      {"precision", [](CliConfig& c, const std::string& v) { c.model.precision = parse_precision(v); }},
      {"seed", [](CliConfig& c, const std::string& v) { c.seed = to_u64(v, 0, UINT64_MAX); }},
      {"mode", [](CliConfig& c, const std::string& v) { c.session.mode = parse_mode(v); }},
      {"n_paths", [](CliConfig& c, const std::string& v) { c.session.n_paths = to_u64(v, 1, kMaxPaths); }},
      {"max_path_tokens", [](CliConfig& c, const std::string& v) { c.session.max_path_tokens = to_u64(v, 1, 4096); }},
      {"max_summary_tokens", [](CliConfig& c, const std::string& v) { c.session.max_summary_tokens = to_u64(v, 1, 4096); }},
      {"sampling", [](CliConfig& c, const std::string& v) {
         if (v == "greedy") {
           c.session.sampling.kind = SamplingConfig::Kind::kGreedy;
         } else if (v == "top-k") {
           c.session.sampling.kind = SamplingConfig::Kind::kTopK;
         } else {
           throw ConfigError("sampling must be greedy or top-k");
         }
       }},
      {"top_k", [](CliConfig& c, const std::string& v) { c.session.sampling.top_k = to_u64(v, 1, 1u << 20); }},
      {"temperature", [](CliConfig& c, const std::string& v) { c.session.sampling.temperature = to_f64(v, 1e-3, 1e3); }},
      {"reuse_kv", [](CliConfig& c, const std::string& v) { c.session.reuse_kv = to_bool(v); }},
      {"workers", [](CliConfig& c, const std::string& v) { c.session.workers = to_u64(v, 1, 64); }},
      {"block_size", [](CliConfig& c, const std::string& v) { c.session.block_size = to_u64(v, 1, 4096); }},
      {"max_blocks", [](CliConfig& c, const std::string& v) { c.session.max_blocks = to_u64(v, 1, 1u << 20); }},
      {"checkpoint", [](CliConfig& c, const std::string& v) { c.checkpoint = v; }},
      {"out", [](CliConfig& c, const std::string& v) { c.out = v; }},
      {"layout", [](CliConfig& c, const std::string& v) { c.layout = v; }},
      {"sessions", [](CliConfig& c, const std::string& v) { c.sessions = to_u64(v, 1, 100000); }},
      {"max_prompt", [](CliConfig& c, const std::string& v) { c.max_prompt = to_u64(v, 1, 4096); }},
      {"samples", [](CliConfig& c, const std::string& v) { c.samples = to_u64(v, 0, 1000000); }},
      {"grad_seeds", [](CliConfig& c, const std::string& v) { c.grad_seeds = to_u64(v, 1, 10000); }},
  };
  return table;
}

}  // namespace

void apply_config_text(const std::string& text, CliConfig& config) {
  std::istringstream in(text);
  std::string raw;
  std::size_t line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const auto hash = raw.find('#');
    const std::string body = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line) + ": expected key = value");
    }
    const std::string key = trim(body.substr(0, eq));
    const std::string value = trim(body.substr(eq + 1));
    auto it = setters().find(key);
    if (it == setters().end()) {
      throw ConfigError("config line " + std::to_string(line) + ": unknown key '" + key + "'");
    }
    try {
      it->second(config, value);
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(line) + " (" + key + "): " + e.what());
    }
  }
}

void apply_config_file(const std::string& path, CliConfig& config) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  apply_config_text(buf.str(), config);
}

}  // namespace pthk
