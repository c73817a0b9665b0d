// Copyright 2026 The pthk Authors
// SPDX-License-Identifier: Apache-2.0

#include <cstdlib>
#include <fstream>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "pthk/checkpoint.hpp"
#include "pthk/cli.hpp"
#include "pthk/datakit.hpp"
#include "pthk/error.hpp"
#include "pthk/gradcheck.hpp"
#include "pthk/mask.hpp"
#include "pthk/rng.hpp"
#include "pthk/transcript_io.hpp"

namespace pthk {

namespace {

constexpr double kGradTolerance = 1e-5;

struct CheckFailed : Error {
  using Error::Error;
};

std::string printable(const std::vector<TokenId>& tokens) {
  static const char* hex = "0123456789abcdef";
  const ByteTokenizer tok;
  std::string out;
  for (TokenId t : tokens) {
    if (t >= 0x20 && t < 0x7f) {
      out.push_back(static_cast<char>(t));
    } else if (t >= 0 && t < 256) {
      out += "\\x";
      out.push_back(hex[t >> 4]);
      out.push_back(hex[t & 15]);
    } else {
      out += tok.decode({t});
    }
  }
  return out;
}

void print_stats(std::ostream& out, const CacheStats& s) {
  out << "stats blocks_allocated=" << s.blocks_allocated << " blocks_shared=" << s.blocks_shared
      << " prefill_tokens_computed=" << s.prefill_tokens_computed
      << " summary_prefill_tokens=" << s.summary_prefill_tokens
      << " decode_steps=" << s.decode_steps << " slots_copied=" << s.slots_copied << '\n';
}

ToyDecoder make_model(const CliConfig& cfg) {
  if (!cfg.checkpoint.empty()) {
    ToyDecoder m = load_checkpoint(cfg.checkpoint);
    m.set_precision(cfg.model.precision);
    return m;
  }
  ModelConfig mc = cfg.model;
  mc.seed = cfg.seed;
  return ToyDecoder::init_weights(mc);
}

struct DemoInputs {
  std::vector<TokenId> prompt;
  std::vector<std::vector<TokenId>> path_prompts;
};

DemoInputs demo_inputs(const CliConfig& cfg) {
  const SftSample sample = synthetic_samples(1, cfg.seed).front();
  DemoInputs in;
  in.prompt.assign(sample.token_ids.begin(),
                   sample.token_ids.begin() + static_cast<long>(prompt_length(sample)));
  const bool counting = sample.question.find("How many") != std::string::npos;
  const Strategy strategy = select_strategy(counting ? TaskKind::kCounting : TaskKind::kGrounding);
  const ByteTokenizer tok;
  for (std::size_t k = 1; k <= cfg.session.n_paths; ++k) {
    in.path_prompts.push_back(tok.encode(path_instruction(strategy, static_cast<PathIndex>(k))));
  }
  return in;
}

void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open " + path + " for writing");
  f << bytes;
  if (!f) throw Error("write to " + path + " failed");
}

int cmd_demo(const CliConfig& cfg, std::ostream& out) {
  const ToyDecoder model = make_model(cfg);
  const DemoInputs in = demo_inputs(cfg);
  out << "mode " << to_string(cfg.session.mode) << " n_paths " << cfg.session.n_paths
      << " precision " << to_string(model.config().precision) << " seed " << cfg.seed << '\n';
  out << "prompt (" << in.prompt.size() << " tokens): " << printable(in.prompt) << '\n';
  if (cfg.session.mode == Mode::kReplicated) {
    const ReplicatedResult r = run_replicated(model, cfg.session, in.prompt);
    for (std::size_t i = 0; i < r.transcripts.size(); ++i) {
      const Transcript& t = r.transcripts[i];
      out << "replica " << i + 1 << " path: " << printable(t.paths[0].tokens) << '\n';
      out << "replica " << i + 1 << " summary: " << printable(t.summary.tokens) << '\n';
    }
    out << "majority " << (r.majority ? *r.majority : std::string("<none>")) << '\n';
    print_stats(out, r.stats);
    if (!cfg.out.empty()) write_file(cfg.out, format_transcript(r.transcripts.front(), true));
    return 0;
  }
  const Transcript t = run(model, cfg.session, in.prompt, in.path_prompts);
  for (std::size_t i = 0; i < t.paths.size(); ++i) {
    out << "path " << i + 1 << ": " << printable(t.paths[i].tokens) << '\n';
  }
  out << "summary: " << printable(t.summary.tokens) << '\n';
  const auto answer = extract_boxed_answer(t.summary.tokens);
  out << "answer " << (answer ? *answer : std::string("<none>")) << '\n';
  print_stats(out, t.stats);
  if (!cfg.out.empty()) write_file(cfg.out, format_transcript(t, true));
  return 0;
}

// Flips the first sampled ordinary token, or the opening tag if nothing
// was sampled.
void inject_fault(Transcript& t) {
  for (SegmentRecord* r : {&t.paths.front(), &t.summary}) {
    for (std::size_t o = 0; o < r->tokens.size(); ++o) {
      if (!r->forced[o] && r->tokens[o] < 256) {
        r->tokens[o] = (r->tokens[o] + 1) % 256;
        return;
      }
    }
  }
  t.paths.front().tokens.front() = 'x';
}

int cmd_verify(const CliConfig& cfg, std::ostream& out, std::ostream& err) {
  if (!cfg.transcript.empty()) {
    std::ifstream f(cfg.transcript);
    if (!f) throw Error("cannot read transcript " + cfg.transcript);
    std::stringstream buf;
    buf << f.rdbuf();
    Transcript t = parse_transcript(buf.str());
    if (cfg.fault) inject_fault(t);
    const ToyDecoder model = make_model(cfg);
    const VerifyReport r = verify_transcript(model, t);
    out << "transcript " << cfg.transcript << " tokens_checked " << r.tokens_checked
        << " max_abs_logit_diff " << fmt9(r.max_abs_logit_diff) << ' '
        << (r.ok ? "ok" : "FAIL") << '\n';
    if (!r.ok) {
      err << "verify failed: " << r.failure << '\n';
      return 1;
    }
    return 0;
  }
  static constexpr std::size_t kPathChoices[] = {1, 2, 4};
  std::size_t passed = 0;
  double worst = 0.0;
  std::string first_failure;
  for (std::size_t s = 0; s < cfg.sessions; ++s) {
    const std::uint64_t seed = cfg.seed + s;
    SplitMix64 rng(mix_seed(seed, 0x766572ull));
    CliConfig c = cfg;
    c.seed = seed;
    c.session.mode = cfg.session.mode == Mode::kSequential ? Mode::kSequential : Mode::kParallel;
    c.session.n_paths = kPathChoices[s % 3];
    c.session.max_path_tokens = 1 + rng.below(cfg.session.max_path_tokens);
    c.session.max_summary_tokens = 1 + rng.below(cfg.session.max_summary_tokens);
    c.session.sampling.seed = seed;
    const ToyDecoder model = make_model(c);
    std::vector<TokenId> prompt(1 + rng.below(cfg.max_prompt));
    for (auto& t : prompt) t = static_cast<TokenId>(rng.below(256));
    std::vector<std::vector<TokenId>> path_prompts(c.session.n_paths);
    for (auto& pp : path_prompts) {
      pp.resize(rng.below(3));
      for (auto& t : pp) t = static_cast<TokenId>(rng.below(256));
    }
    Transcript t = run(model, c.session, prompt, path_prompts);
    if (cfg.fault) inject_fault(t);
    const VerifyReport r = verify_transcript(model, t);
    out << "session seed=" << seed << " n_paths=" << c.session.n_paths
        << " tokens=" << t.flattened().size() << " checked=" << r.tokens_checked
        << " max_abs_logit_diff=" << fmt9(r.max_abs_logit_diff) << ' ' << (r.ok ? "ok" : "FAIL")
        << '\n';
    if (r.ok) {
      ++passed;
      worst = std::max(worst, r.max_abs_logit_diff);
    } else if (first_failure.empty()) {
      first_failure = "seed " + std::to_string(seed) + ": " + r.failure;
    }
  }
  out << "verified " << passed << "/" << cfg.sessions << " sessions precision "
      << to_string(cfg.model.precision) << " max_abs_logit_diff " << fmt9(worst) << '\n';
  if (passed != cfg.sessions) {
    err << "verify failed at " << first_failure << '\n';
    return 1;
  }
  return 0;
}

int cmd_mask(const CliConfig& cfg, std::ostream& out) {
  const SegmentLayout layout = parse_layout_spec(cfg.layout);
  const PaMask mask = cfg.causal ? build_causal_mask(layout.total()) : build_pa_mask(layout);
  out << "layout " << to_string(layout) << " kind " << (cfg.causal ? "causal" : "pa")
      << " n " << mask.size() << " popcount " << mask.popcount() << '\n';
  for (std::size_t i = 0; i < mask.size(); ++i) {
    std::string row;
    for (std::size_t j = 0; j < mask.size(); ++j) row.push_back(mask.get(i, j) ? '#' : '.');
    out << row << '\n';
  }
  if (!cfg.out.empty()) {
    const auto pgm = mask_to_pgm(mask);
    write_file(cfg.out, std::string(pgm.begin(), pgm.end()));
    out << "wrote " << cfg.out << '\n';
  }
  return 0;
}

int cmd_grad(const CliConfig& cfg, std::ostream& out, std::ostream& err) {
  double worst = 0.0;
  std::string failure;
  for (std::size_t s = 0; s < cfg.grad_seeds; ++s) {
    const std::uint64_t seed = cfg.seed + s;
    const GradCheckCase c = make_gradcheck_case(seed, cfg.model);
    const GradCheckReport r = check_path_gradient(c);
    out << "grad seed=" << seed << " n_paths=" << c.layout.n_paths() << " tokens="
        << c.sample.tokens.size() << " max_rel_err=" << fmt9(r.max_rel_err)
        << " max_abs_grad=" << fmt9(r.max_abs_grad) << '\n';
    worst = std::max(worst, r.max_rel_err);
    if (!(r.max_rel_err <= kGradTolerance) && failure.empty()) {
      failure = "seed " + std::to_string(seed) + " rel err " + fmt9(r.max_rel_err);
    }
  }
  out << "gradient check max_rel_err " << fmt9(worst) << " tolerance " << fmt9(kGradTolerance)
      << '\n';
  if (!failure.empty()) {
    err << "gradient check failed at " << failure << '\n';
    return 1;
  }
  return 0;
}

int cmd_dataset(const CliConfig& cfg, std::ostream& out, std::ostream& err) {
  const std::vector<SftSample> samples = synthetic_samples(cfg.samples, cfg.seed);
  const SpecialVocab vocab;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const SftSample& s = samples[i];
    const SegmentLayout layout = layout_from_tagged_tokens(s.token_ids, vocab);
    for (int k = 1; k <= layout.n_paths(); ++k) {
      if (s.loss_mask[layout.path_begin(k)] != 0) {
        err << "sample " << i << ": <think" << k << "> is a training target\n";
        return 1;
      }
    }
  }
  if (cfg.out.empty()) {
    emit_records(samples, out);
    return 0;
  }
  std::ofstream f(cfg.out);
  if (!f) throw Error("cannot open " + cfg.out + " for writing");
  const std::size_t n = emit_records(samples, f);
  out << "wrote " << n << " records to " << cfg.out << '\n';
  return 0;
}

int cmd_bench(const CliConfig& cfg, std::ostream& out, std::ostream& err) {
  const ToyDecoder model = make_model(cfg);
  const DemoInputs in = demo_inputs(cfg);
  SessionConfig base = cfg.session;
  base.mode = Mode::kParallel;
  auto row = [&](const std::string& mode, bool reuse, const CacheStats& s) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-11s %-5s %14llu %22llu %12llu\n", mode.c_str(),
                  reuse ? "yes" : "no", static_cast<unsigned long long>(s.prefill_tokens_computed),
                  static_cast<unsigned long long>(s.summary_prefill_tokens),
                  static_cast<unsigned long long>(s.decode_steps));
    out << buf;
  };
  out << "shared_len " << in.prompt.size() << " n_paths " << base.n_paths << '\n';
  out << "mode        reuse prefill_tokens summary_prefill_tokens decode_steps\n";
  SessionConfig reuse = base;
  reuse.reuse_kv = true;
  const Transcript with = run(model, reuse, in.prompt, in.path_prompts);
  row("parallel", true, with.stats);
  SessionConfig fresh = base;
  fresh.reuse_kv = false;
  const Transcript without = run(model, fresh, in.prompt, in.path_prompts);
  row("parallel", false, without.stats);
  SessionConfig seq = base;
  seq.mode = Mode::kSequential;
  const Transcript sequential = run(model, seq, in.prompt, in.path_prompts);
  row("sequential", seq.reuse_kv, sequential.stats);
  SessionConfig rep = base;
  rep.mode = Mode::kReplicated;
  const ReplicatedResult replicated = run_replicated(model, rep, in.prompt);
  row("replicated", rep.reuse_kv, replicated.stats);
  if (with.flattened() != without.flattened()) {
    err << "bench: transcripts differ between reuse on and off\n";
    return 1;
  }
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Parallel-thinking decoder toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_path, mode, precision, out_path, layout, transcript;
  std::uint64_t seed = 0;
  std::size_t paths = 0, sessions = 0, samples = 0;
  bool no_reuse = false, fault = false, causal = false;
  app.add_option("--config", config_path, "key = value config file");
  auto* seed_opt = app.add_option("--seed", seed, "base seed");
  auto* mode_opt = app.add_option("--mode", mode, "parallel | sequential | replicated");
  auto* paths_opt = app.add_option("--paths,--n", paths, "number of reasoning paths");
  auto* prec_opt = app.add_option("--precision", precision, "fp32 | fp64");
  app.add_flag("--no-reuse", no_reuse, "re-prefill the summary context");
  auto* out_opt = app.add_option("--out", out_path, "output file");
  auto* layout_opt = app.add_option("--layout", layout, "shared;p1,p2,...;summary");
  auto* transcript_opt = app.add_option("--transcript", transcript, "verify a saved transcript");
  auto* sessions_opt = app.add_option("--sessions", sessions, "sessions for verify");
  auto* samples_opt = app.add_option("--samples", samples, "records for dataset");
  app.add_flag("--fault", fault, "tamper with each transcript before verifying");
  app.add_flag("--causal", causal, "dump the causal mask instead");
  auto* demo = app.add_subcommand("demo", "decode one session and print it");
  auto* verify = app.add_subcommand("verify", "replay seeded sessions through the oracle");
  auto* mask = app.add_subcommand("mask", "print a mask and optionally write a PGM");
  auto* grad = app.add_subcommand("grad", "finite-difference check of path-embedding gradients");
  auto* dataset = app.add_subcommand("dataset", "emit synthetic training records");
  auto* bench = app.add_subcommand("bench", "operation counters across modes");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return 0;
    }
    err << "usage error: " << e.what() << '\n';
    return 2;
  }

  CliConfig cfg;
  try {
    if (!config_path.empty()) apply_config_file(config_path, cfg);
    if (const char* env = std::getenv("PTHK_SEED")) {
      apply_config_text(std::string("seed = ") + env, cfg);
    }
    if (*seed_opt) cfg.seed = seed;
    if (*mode_opt) cfg.session.mode = parse_mode(mode);
    if (*paths_opt) {
      if (paths < 1 || paths > static_cast<std::size_t>(kMaxPaths)) {
        throw ConfigError("--paths must be in [1, " + std::to_string(kMaxPaths) + "]");
      }
      cfg.session.n_paths = paths;
    }
    if (*prec_opt) cfg.model.precision = parse_precision(precision);
    if (no_reuse) cfg.session.reuse_kv = false;
    if (*out_opt) cfg.out = out_path;
    if (*layout_opt) cfg.layout = layout;
    if (*transcript_opt) cfg.transcript = transcript;
    if (*sessions_opt) {
      if (sessions < 1) throw ConfigError("--sessions must be positive");
      cfg.sessions = sessions;
    }
    if (*samples_opt) {
      if (samples < 1) throw ConfigError("--samples must be positive");
      cfg.samples = samples;
    }
    cfg.fault = fault;
    cfg.causal = causal;
    cfg.session.sampling.seed = cfg.seed;
    cfg.model.validate(SpecialVocab{});
    cfg.session.validate();
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return 2;
  }

  try {
    if (*demo) return cmd_demo(cfg, out);
    if (*verify) return cmd_verify(cfg, out, err);
    if (*mask) return cmd_mask(cfg, out);
    if (*grad) return cmd_grad(cfg, out, err);
    if (*dataset) return cmd_dataset(cfg, out, err);
    if (*bench) return cmd_bench(cfg, out, err);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return 2;
  } catch (const LayoutError& e) {
    err << "error: " << e.what() << '\n';
    return *mask ? 2 : 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace pthk
