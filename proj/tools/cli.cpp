// Copyright 2026 The hclab Authors
// SPDX-License-Identifier: Apache-2.0

#include "cli.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "hclab/diagnostics.hpp"
#include "verify.hpp"

namespace hclab::cli {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string dashed(std::string key) {
  std::replace(key.begin(), key.end(), '_', '-');
  return key;
}

std::string fmt_double(double x) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, r.ptr);
}

double parse_double(const std::string& key, const std::string& v) {
  double x = 0.0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), x);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size()) {
    throw std::invalid_argument(key + ": '" + v + "' is not a number");
  }
  return x;
}

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  std::uint64_t x = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), x);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size()) {
    throw std::invalid_argument(key + ": '" + v + "' is not a non-negative integer");
  }
  return x;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw std::invalid_argument(key + ": '" + v + "' is not a boolean");
}

struct Field {
  std::string key;
  std::string help;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename T>
Field size_field(std::string key, std::string help, T RunConfig::*section, std::size_t T::*member) {
  return {key, std::move(help),
          [=](RunConfig& c, const std::string& v) {
            (c.*section).*member = static_cast<std::size_t>(parse_uint(key, v));
          },
          [=](const RunConfig& c) { return std::to_string((c.*section).*member); }};
}

Field train_double(std::string key, std::string help, double TrainConfig::*member) {
  return {key, std::move(help),
          [=](RunConfig& c, const std::string& v) { c.train.*member = parse_double(key, v); },
          [=](const RunConfig& c) { return fmt_double(c.train.*member); }};
}

Field train_bool(std::string key, std::string help, bool TrainConfig::*member) {
  return {key, std::move(help),
          [=](RunConfig& c, const std::string& v) { c.train.*member = parse_bool(key, v); },
          [=](const RunConfig& c) { return std::string(c.train.*member ? "true" : "false"); }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> list{
      {"variant", "rc, hc, mhc, mhc_lite or shc",
       [](RunConfig& c, const std::string& v) { c.model.variant = parse_variant(v); },
       [](const RunConfig& c) { return std::string(variant_name(c.model.variant)); }},
      size_field("layers", "transformer blocks", &RunConfig::model, &ModelConfig::layers),
      size_field("heads", "attention heads", &RunConfig::model, &ModelConfig::heads),
      size_field("channels", "model width C", &RunConfig::model, &ModelConfig::channels),
      size_field("streams", "residual streams n (rc always uses 1)", &RunConfig::model,
                 &ModelConfig::streams),
      size_field("context", "sequence length T", &RunConfig::model, &ModelConfig::context),
      {"sk_iters", "Sinkhorn iterations for mhc",
       [](RunConfig& c, const std::string& v) {
         c.model.sk_iters = static_cast<int>(parse_uint("sk_iters", v));
       },
       [](const RunConfig& c) { return std::to_string(c.model.sk_iters); }},
      {"seed", "seeds both initialization and data sampling",
       [](RunConfig& c, const std::string& v) {
         c.model.seed = c.train.seed = parse_uint("seed", v);
       },
       [](const RunConfig& c) { return std::to_string(c.model.seed); }},
      size_field("batch", "sequences per micro-batch", &RunConfig::train, &TrainConfig::batch),
      size_field("grad_accum", "micro-batches per step", &RunConfig::train,
                 &TrainConfig::grad_accum),
      size_field("iters", "optimizer steps", &RunConfig::train, &TrainConfig::iterations),
      size_field("warmup", "linear warmup steps", &RunConfig::train, &TrainConfig::warmup),
      train_double("lr_max", "peak learning rate", &TrainConfig::lr_max),
      train_double("lr_min", "final learning rate", &TrainConfig::lr_min),
      train_double("weight_decay", "decoupled weight decay on matrices", &TrainConfig::weight_decay),
      train_double("beta1", "AdamW beta1", &TrainConfig::beta1),
      train_double("beta2", "AdamW beta2", &TrainConfig::beta2),
      train_double("adam_eps", "AdamW epsilon", &TrainConfig::adam_eps),
      train_double("clip", "global gradient-norm clip", &TrainConfig::clip),
      size_field("eval_interval", "steps between validation passes (0 = never)",
                 &RunConfig::train, &TrainConfig::eval_interval),
      size_field("eval_batches", "validation batches per pass", &RunConfig::train,
                 &TrainConfig::eval_batches),
      size_field("snapshot_interval", "steps between mapping snapshots (0 = never)",
                 &RunConfig::train, &TrainConfig::snapshot_interval),
      train_bool("freeze_hc_weights", "keep hyper-connection projections at zero",
                 &TrainConfig::freeze_hc_weights),
      train_bool("log_timing", "record wall time per step (false writes ms = 0)",
                 &TrainConfig::log_timing),
      {"corpus", "training bytes",
       [](RunConfig& c, const std::string& v) { c.train.corpus = v; },
       [](const RunConfig& c) { return c.train.corpus.string(); }},
      {"out", "output directory",
       [](RunConfig& c, const std::string& v) { c.train.out = v; },
       [](const RunConfig& c) { return c.train.out.string(); }},
  };
  return list;
}

const Field& field(const std::string& key) {
  for (const Field& f : fields()) {
    if (f.key == key) return f;
  }
  throw std::invalid_argument("unknown config key '" + key + "'");
}

std::uint64_t env_seed(std::uint64_t fallback) {
  if (const char* s = std::getenv(kSeedEnv)) return parse_uint(kSeedEnv, s);
  return fallback;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// --- train -----------------------------------------------------------------

struct TrainArgs {
  std::string config;
  std::map<std::string, std::string> flags;
};

void add_config_flags(CLI::App* cmd, std::map<std::string, std::string>& flags) {
  for (const Field& f : fields()) {
    cmd->add_option("--" + dashed(f.key), flags[f.key], f.help);
  }
}

RunConfig resolve(const std::string& config_file, const std::map<std::string, std::string>& flags,
                  const CLI::App* cmd, std::ostream& err) {
  RunConfig cfg;
  if (!config_file.empty()) load_config_file(cfg, config_file);
  for (const Field& f : fields()) {
    if (cmd->count("--" + dashed(f.key)) > 0) cfg.set(f.key, flags.at(f.key));
  }
  apply_seed_env(cfg);
  if (cfg.model.variant == Variant::kRc && cfg.model.streams != 1) {
    if (cfg.was_given("streams")) {
      err << "warning: variant rc runs a single residual stream; ignoring streams="
          << cfg.model.streams << "\n";
    }
    cfg.model.streams = 1;
  }
  cfg.model.validate();
  cfg.train.validate();
  return cfg;
}

int cmd_train(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  if (cfg.train.corpus.empty()) throw UsageError("train needs --corpus");
  if (cfg.train.out.empty()) throw UsageError("train needs --out");
  if (!std::filesystem::is_regular_file(cfg.train.corpus)) {
    throw UsageError("corpus not found: " + cfg.train.corpus.string());
  }
  const auto corpus = read_corpus(cfg.train.corpus);
  std::filesystem::create_directories(cfg.train.out);
  write_text(cfg.train.out / kResolvedFile, cfg.resolved_text());

  Model model(cfg.model);
  out << "training " << variant_name(cfg.model.variant) << " (n=" << cfg.model.effective_streams()
      << ", " << model.parameter_count() << " parameters) for " << cfg.train.iterations
      << " steps on " << corpus.size() << " bytes\n";
  try {
    const TrainResult r = train_loop(model, cfg.train, corpus);
    for (const MetricsRow& row : r.rows) {
      if (row.val_loss) {
        out << "step " << row.step << "  loss " << row.loss << "  val " << *row.val_loss
            << "  grad_norm " << row.grad_norm << "  lr " << row.lr << "\n";
      }
    }
    if (!r.rows.empty()) out << "final train loss " << r.rows.back().loss << "\n";
  } catch (const NanLossError& e) {
    err << "error: " << e.what() << "\n";
    return kExitNan;
  }
  out << "wrote " << (cfg.train.out / kCheckpointFile).string() << "\n";
  return kExitOk;
}

// --- analyze ---------------------------------------------------------------

struct AnalyzeArgs {
  std::string checkpoint;
  std::string corpus;
  std::string out;
  std::size_t samples = 16;
  std::uint64_t seed = 1337;
  std::size_t n_max = 8;
};

int cmd_analyze(const AnalyzeArgs& a, bool seed_given, std::ostream& out) {
  if (!std::filesystem::is_regular_file(a.checkpoint)) {
    throw UsageError("checkpoint not found: " + a.checkpoint);
  }
  if (!std::filesystem::is_regular_file(a.corpus)) {
    throw UsageError("corpus not found: " + a.corpus);
  }
  if (a.samples == 0) throw UsageError("--samples must be >= 1");
  const std::uint64_t seed = seed_given ? a.seed : env_seed(a.seed);
  const Model model = Model::from_archive(read_archive(a.checkpoint));
  const auto corpus = read_corpus(a.corpus);
  const std::filesystem::path dir =
      a.out.empty() ? std::filesystem::path(a.checkpoint).parent_path() / "analysis"
                    : std::filesystem::path(a.out);

  BatchSampler sampler(corpus, model.config().context, 1, seed);
  std::vector<std::vector<int>> windows;
  for (std::size_t i = 0; i < a.samples; ++i) windows.push_back(sampler.next_val().tokens);
  const diag::AnalysisReport report = diag::analyze_model(model, windows);

  std::filesystem::create_directories(dir);
  diag::write_report(dir, report);
  diag::write_fig7_params(dir / "fig7_params.csv", a.n_max, model.config().channels);
  std::ostringstream cfg;
  cfg << "command=analyze\ncheckpoint=" << a.checkpoint << "\ncorpus=" << a.corpus
      << "\nsamples=" << a.samples << "\nseed=" << seed << "\nn_max=" << a.n_max << "\n";
  write_text(dir / kResolvedFile, cfg.str());

  double marg = 0.0, spec = 0.0;
  for (const auto& p : report.chain) {
    marg = std::max(marg, p.marginal_max_dev);
    spec = std::max(spec, p.spec_max_dev);
  }
  out << "analyzed " << report.samples << " windows (" << report.tokens << " tokens) of a "
      << variant_name(model.config().variant) << " checkpoint\n"
      << "composite depth " << report.chain.size() << ": max marginal deviation " << marg
      << ", max spectral deviation " << spec << "\n"
      << "wrote CSVs to " << dir.string() << "\n";
  return kExitOk;
}

// --- paramcount --------------------------------------------------------------

int cmd_paramcount(std::size_t n_max, std::size_t dim, const std::string& out_dir,
                   std::ostream& out) {
  if (n_max < 2) throw UsageError("--n-max must be >= 2");
  const std::filesystem::path dir = out_dir.empty() ? "." : out_dir;
  std::filesystem::create_directories(dir);
  diag::write_fig7_params(dir / "fig7_params.csv", n_max, dim);
  std::ostringstream cfg;
  cfg << "command=paramcount\nn_max=" << n_max << "\ndim=" << dim << "\n";
  write_text(dir / kResolvedFile, cfg.str());

  out << std::left << std::setw(4) << "n";
  for (Variant v : all_variants()) out << std::setw(14) << variant_name(v);
  out << "(aux parameters per site, C=" << dim << ")\n";
  for (std::size_t n = 2; n <= n_max; ++n) {
    out << std::setw(4) << n;
    for (Variant v : all_variants()) out << std::setw(14) << diag::param_count(v, n, dim).total();
    out << "\n";
  }
  out << "wrote " << (dir / "fig7_params.csv").string() << "\n";
  return kExitOk;
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  field(key).set(*this, value);
  given[key] = value;
}

std::string RunConfig::resolved_text() const {
  std::string s;
  for (const Field& f : fields()) s += f.key + "=" + f.get(*this) + "\n";
  return s;
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const Field& f : fields()) k.push_back(f.key);
    return k;
  }();
  return keys;
}

std::vector<std::pair<std::string, std::string>> parse_config_text(const std::string& text) {
  std::vector<std::pair<std::string, std::string>> out;
  std::istringstream in(text);
  std::string line;
  for (int lineno = 1; std::getline(in, line); ++lineno) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos || trim(line.substr(0, eq)).empty()) {
      throw std::invalid_argument("config line " + std::to_string(lineno) +
                                  ": expected key=value, got '" + line + "'");
    }
    out.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return out;
}

void load_config_file(RunConfig& cfg, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  for (const auto& [k, v] : parse_config_text(buf.str())) cfg.set(k, v);
}

void apply_seed_env(RunConfig& cfg) {
  if (cfg.was_given("seed")) return;
  if (const char* s = std::getenv(kSeedEnv)) cfg.set("seed", s);
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Hyper-connection residual variants: training, verification and diagnostics",
               "hclab"};
  app.require_subcommand(1);

  TrainArgs train_args;
  CLI::App* train = app.add_subcommand("train", "train a model and write metrics and a checkpoint");
  train->add_option("--config", train_args.config, "key=value config file (flags override it)");
  add_config_flags(train, train_args.flags);

  std::vector<std::string> props;
  int samples = 0;
  std::uint64_t verify_seed = 7;
  CLI::App* verify = app.add_subcommand("verify", "run the seeded invariant suite");
  verify->add_option("--property", props, "only these properties (repeat or comma-separate)")
      ->delimiter(',');
  verify->add_option("--samples", samples, "samples per property (default: per-property)");
  verify->add_option("--seed", verify_seed, "suite seed (default: $HCLAB_SEED or 7)");
  verify->add_flag_callback("--list", [&] {
    for (const auto& p : verify::properties()) out << p.name << "  " << p.summary << "\n";
    throw CLI::Success();
  }, "list property names");

  AnalyzeArgs an;
  CLI::App* analyze = app.add_subcommand("analyze", "emit diagnostics CSVs from a checkpoint");
  analyze->add_option("--checkpoint", an.checkpoint, "checkpoint file")->required();
  analyze->add_option("--corpus", an.corpus, "corpus the validation windows come from")->required();
  analyze->add_option("--out", an.out, "output directory (default: <checkpoint dir>/analysis)");
  analyze->add_option("--samples", an.samples, "validation windows to pool");
  analyze->add_option("--seed", an.seed, "window sampling seed (default: $HCLAB_SEED or 1337)");
  analyze->add_option("--n-max", an.n_max, "largest n in fig7_params.csv");

  std::size_t n_max = 8, dim = 768;
  std::string pc_out;
  CLI::App* paramcount = app.add_subcommand("paramcount", "tabulate auxiliary parameter counts");
  paramcount->add_option("--n-max", n_max, "largest stream count");
  paramcount->add_option("--dim", dim, "model width C");
  paramcount->add_option("--out", pc_out, "output directory (default: .)");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (train->parsed()) {
      return cmd_train(resolve(train_args.config, train_args.flags, train, err), out, err);
    }
    if (verify->parsed()) {
      const std::uint64_t seed = verify->count("--seed") ? verify_seed : env_seed(verify_seed);
      const auto rows = verify::run_suite(props, seed, samples);
      out << "seed=" << seed << "\n";
      verify::print_table(out, rows);
      const bool ok = std::all_of(rows.begin(), rows.end(), [](const auto& r) { return r.result.pass; });
      return ok ? kExitOk : kExitVerifyFailed;
    }
    if (analyze->parsed()) return cmd_analyze(an, analyze->count("--seed") > 0, out);
    if (paramcount->parsed()) return cmd_paramcount(n_max, dim, pc_out, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace hclab::cli
