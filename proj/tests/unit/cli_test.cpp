// Copyright 2026 The pthk Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include "pthk/cli.hpp"
#include "pthk/datakit.hpp"
#include "pthk/error.hpp"

using namespace pthk;

namespace {

struct Run {
  int code = 0;
  std::string out, err;
};

Run cli(std::vector<std::string> args) {
  args.insert(args.begin(), "pthk");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  Run r;
  r.code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::filesystem::path temp_file(const std::string& name, const std::string& body) {
  const auto p = std::filesystem::temp_directory_path() / name;
  std::ofstream(p) << body;
  return p;
}

}  // namespace

TEST_CASE("config text") {
  CliConfig c;
  apply_config_text("# comment\nn_paths = 4\n  top_k=3 \nsampling = top-k\nreuse_kv = false\n", c);
  CHECK(c.session.n_paths == 4);
  CHECK(c.session.sampling.top_k == 3);
  CHECK(c.session.sampling.kind == SamplingConfig::Kind::kTopK);
  CHECK_FALSE(c.session.reuse_kv);
  CHECK_THROWS_AS(apply_config_text("colour = blue", c), ConfigError);
  CHECK_THROWS_AS(apply_config_text("n_paths", c), ConfigError);
  CHECK_THROWS_AS(apply_config_text("n_paths = -1", c), ConfigError);
  CHECK_THROWS_AS(apply_config_text("n_paths = 17", c), ConfigError);
  CHECK_THROWS_AS(apply_config_text("temperature = abc", c), ConfigError);
  CHECK_THROWS_AS(apply_config_text("head_dim = 7", c), ConfigError);
  CHECK_THROWS_AS(apply_config_file("/nonexistent/pthk.cfg", c), ConfigError);
}

TEST_CASE("fixed nine-digit floats") {
  CHECK(fmt9(0.0) == "0");
  CHECK(fmt9(1.0 / 3.0) == "0.333333333");
  CHECK(fmt9(2.5e-7) == "2.5e-07");
}

TEST_CASE("exit codes") {
  CHECK(cli({"mask"}).code == 0);
  CHECK(cli({}).code == 2);
  CHECK(cli({"frobnicate"}).code == 2);
  CHECK(cli({"demo", "--mode", "beam"}).code == 2);
  CHECK(cli({"demo", "--paths", "0"}).code == 2);
  CHECK(cli({"demo", "--precision", "fp8"}).code == 2);
  CHECK(cli({"mask", "--layout", "1;;"}).code == 2);
  CHECK(cli({"demo", "--config", "/nonexistent.cfg"}).code == 2);
  const Run fault = cli({"verify", "--sessions", "2", "--fault"});
  CHECK(fault.code == 1);
  CHECK(fault.err.find("seed 0") != std::string::npos);
  CHECK(cli({"--help"}).code == 0);
}

TEST_CASE("demo counters") {
  const Run four = cli({"demo", "--paths", "4"});
  REQUIRE(four.code == 0);
  const auto shared_len = [](const std::string& s) {
    const auto at = s.find("prompt (");
    return std::stoul(s.substr(at + 8));
  };
  const std::size_t p = shared_len(four.out);
  CHECK(four.out.find("prefill_tokens_computed=" + std::to_string(p) + " ") != std::string::npos);
  const Run rep = cli({"demo", "--mode", "replicated", "--n", "4"});
  REQUIRE(rep.code == 0);
  CHECK(rep.out.find("prefill_tokens_computed=" + std::to_string(4 * p) + " ") !=
        std::string::npos);
}

TEST_CASE("subcommands are deterministic") {
  for (const std::vector<std::string>& args :
       {std::vector<std::string>{"demo", "--seed", "3"}, {"verify", "--sessions", "3"},
        {"bench", "--paths", "2"}, {"dataset", "--samples", "3"}}) {
    const Run a = cli(args), b = cli(args);
    CHECK(a.code == 0);
    CHECK(a.out == b.out);
  }
  CHECK(cli({"demo", "--seed", "3"}).out != cli({"demo", "--seed", "4"}).out);
}

TEST_CASE("seed precedence: flag, then environment, then file") {
  const auto cfg = temp_file("pthk_seed_test.cfg", "seed = 11\n");
  auto seed_line = [&](std::vector<std::string> extra) {
    std::vector<std::string> args = {"demo", "--config", cfg.string()};
    args.insert(args.end(), extra.begin(), extra.end());
    const Run r = cli(args);
    return r.out.substr(0, r.out.find('\n'));
  };
  CHECK(seed_line({}).find("seed 11") != std::string::npos);
  ::setenv("PTHK_SEED", "12", 1);
  CHECK(seed_line({}).find("seed 12") != std::string::npos);
  CHECK(seed_line({"--seed", "13"}).find("seed 13") != std::string::npos);
  ::setenv("PTHK_SEED", "twelve", 1);
  CHECK(cli({"demo"}).code == 2);
  ::unsetenv("PTHK_SEED");
  std::filesystem::remove(cfg);
}

TEST_CASE("mask writes a PGM") {
  const auto path = std::filesystem::temp_directory_path() / "pthk_mask_test.pgm";
  const Run r = cli({"mask", "--out", path.string()});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("popcount 24") != std::string::npos);
  std::ifstream in(path, std::ios::binary);
  std::string body((std::istreambuf_iterator<char>(in)), {});
  CHECK(body.rfind("P5\n7 7\n255\n", 0) == 0);
  CHECK(body.size() == 11 + 49);
  std::filesystem::remove(path);
}

TEST_CASE("dataset records parse back") {
  const auto path = std::filesystem::temp_directory_path() / "pthk_records_test.jsonl";
  REQUIRE(cli({"dataset", "--samples", "5", "--out", path.string()}).code == 0);
  std::ifstream in(path);
  const auto records = read_records(in);
  CHECK(records.size() == 5);
  std::filesystem::remove(path);
}

TEST_CASE("bench compares reuse on and off") {
  const Run r = cli({"bench", "--paths", "4"});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("parallel    yes") != std::string::npos);
  CHECK(r.out.find("parallel    no") != std::string::npos);
}

TEST_CASE("saved transcripts verify from a file") {
  const auto path = std::filesystem::temp_directory_path() / "pthk_transcript_test.txt";
  REQUIRE(cli({"demo", "--out", path.string()}).code == 0);
  CHECK(cli({"verify", "--transcript", path.string()}).code == 0);
  CHECK(cli({"verify", "--transcript", path.string(), "--fault"}).code == 1);
  std::filesystem::remove(path);
}
