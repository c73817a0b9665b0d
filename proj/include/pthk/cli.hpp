// Copyright 2026 The pthk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>

#include "pthk/engine.hpp"
#include "pthk/model.hpp"

namespace pthk {

struct CliConfig {
  ModelConfig model;
  SessionConfig session;
  std::uint64_t seed = 0;
  std::string checkpoint;
  std::string out;
  std::string transcript;
  std::string layout = "2;2,2;1";
  bool causal = false;
  bool fault = false;
  std::size_t sessions = 50;
  std::size_t max_prompt = 32;
  std::size_t samples = 8;
  std::size_t grad_seeds = 10;
};

// Flat "key = value" lines; '#' starts a comment. Unknown keys and
// out-of-range values throw ConfigError naming the line.
void apply_config_text(const std::string& text, CliConfig& config);
void apply_config_file(const std::string& path, CliConfig& config);

// %.9g
std::string fmt9(double v);

// Exit status: 0 success, 1 failed check or runtime error, 2 usage error.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace pthk
