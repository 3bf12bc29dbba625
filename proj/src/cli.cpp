// Command dispatch, config binding, and the provenance/report writers behind
// the bitsnn executable.

#include "bitsnn/cli.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <utility>

#include "CLI11.hpp"
#include "json.hpp"

#include "bitsnn/checkpoint.hpp"
#include "bitsnn/config.hpp"
#include "bitsnn/cost.hpp"
#include "bitsnn/dataset.hpp"
#include "bitsnn/model.hpp"
#include "bitsnn/theory.hpp"
#include "bitsnn/trainer.hpp"

namespace fs = std::filesystem;

namespace bitsnn::cli {

namespace {

// ===== Config binding =====

std::uint64_t parse_seed(const std::string& text) {
  std::size_t pos = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(text, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != text.size() || text.empty())
    throw std::invalid_argument("train.seed: cannot parse '" + text + "'");
  return v;
}

model::ModelSpec spec_from_config(const config::ConfigMap& cfg) {
  model::ModelSpec spec =
      model::desk_model(std::size_t(config::get_int(cfg, "model.channels")),
                        config::get_bool(cfg, "model.batch_norm"));
  spec.tau = config::get_double(cfg, "neuron.tau");
  spec.shift_enabled = config::get_bool(cfg, "neuron.round_shift");
  spec.b_w_bound = config::get_int(cfg, "bits.bound_weight");
  spec.b_s_bound = config::get_int(cfg, "bits.bound_spike");
  spec.t_bound = config::get_int(cfg, "bits.bound_time");
  spec.init_w_bits = config::get_double(cfg, "bits.init_weight");
  spec.init_s_bits = config::get_double(cfg, "bits.init_spike");
  spec.init_t = config::get_double(cfg, "bits.init_time");
  spec.validate();
  return spec;
}

trainer::TrainConfig train_config_from(const config::ConfigMap& cfg) {
  trainer::TrainConfig tc;
  tc.epochs = config::get_int(cfg, "train.epochs");
  tc.batch_size = std::size_t(config::get_int(cfg, "train.batch_size"));
  tc.learning_rate = config::get_double(cfg, "train.learning_rate");
  tc.momentum = config::get_double(cfg, "train.momentum");
  tc.seed = parse_seed(config::get_string(cfg, "train.seed"));
  tc.bits_learning = config::get_bool(cfg, "train.bits_learning");
  tc.renewal_mode = trainer::renewal_mode_from_string(
      config::get_string(cfg, "train.renewal_mode"));
  tc.targets.b_w_tar = config::get_double(cfg, "targets.weight_bits");
  tc.targets.b_s_tar = config::get_double(cfg, "targets.spike_bits");
  tc.targets.t_tar = config::get_double(cfg, "targets.timesteps");
  tc.targets.lambda1 = config::get_double(cfg, "targets.lambda_weight");
  tc.targets.lambda2 = config::get_double(cfg, "targets.lambda_time");
  tc.targets.lambda3 = config::get_double(cfg, "targets.lambda_spike");
  tc.grid.K = config::get_int(cfg, "renewal.k");
  tc.grid.pow = config::get_double(cfg, "renewal.pow");
  tc.relatch = config::get_bool(cfg, "renewal.relatch");
  tc.validate();
  return tc;
}

dataset::Format format_from_config(const config::ConfigMap& cfg) {
  const std::string name = config::get_string(cfg, "data.format");
  if (name == "idx") return dataset::Format::idx;
  if (name == "csv") return dataset::Format::csv;
  throw std::invalid_argument("data.format: unknown format '" + name + "'");
}

// Loads the configured file, or generates the deterministic synthetic digit
// corpus when no path is set. The eval corpus uses a shifted seed so the two
// splits never share samples.
dataset::Dataset dataset_from_config(const config::ConfigMap& cfg, bool train_split) {
  const std::string path = config::get_string(
      cfg, train_split ? "data.train_path" : "data.eval_path");
  if (!path.empty())
    return dataset::load_dataset(path, format_from_config(cfg), 10);
  const int n = config::get_int(
      cfg, train_split ? "data.train_samples" : "data.eval_samples");
  if (n <= 0) throw std::invalid_argument("data: sample counts must be positive");
  const std::uint64_t seed = parse_seed(config::get_string(cfg, "train.seed"));
  return dataset::make_digits(std::size_t(n), seed + (train_split ? 0 : 1));
}

// ===== Output helpers =====

std::string default_output_dir() {
  const char* env = std::getenv("BITSNN_OUTPUT_DIR");
  return env != nullptr && *env != '\0' ? env : "runs";
}

void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  f << text;
  if (!f) throw std::runtime_error("write failed for '" + path.string() + "'");
}

void write_run_record(const fs::path& dir, const std::string& command,
                      const config::ConfigMap& cfg) {
  nlohmann::json j;
  j["command"] = command;
  j["config_hash"] = config::config_hash(cfg);
  j["seed"] = parse_seed(config::get_string(cfg, "train.seed"));
  j["config"] = cfg;
  j["versions"] = {{"bitsnn", kVersion},
                   {"checkpoint_format", checkpoint::kFormatVersion}};
  write_text_file(dir / "run.json", j.dump(2) + "\n");
}

void write_cost_files(const fs::path& dir, const cost::CostReport& report) {
  std::ostringstream csv, json;
  cost::write_report_csv(csv, report);
  cost::write_report_json(json, report);
  write_text_file(dir / "report.csv", csv.str());
  write_text_file(dir / "report.json", json.str());
}

std::string format_cost_row(const bits::BitAverages& avg,
                            const cost::CostReport& report, double accuracy) {
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "W/S/T: %g/%g/%g  Bit Budget: %g  S-ACE: %g  NS-ACE: %g  "
                "Size: %g MB  Top-1: %.2f%%",
                avg.b_w_bar, avg.b_s_bar, avg.t_bar,
                report.totals.bit_budget, report.totals.s_ace,
                report.totals.ns_ace,
                cost::bits_to_mb(report.totals.weight_bits_total),
                100.0 * accuracy);
  return buf;
}

// ===== Commands =====

struct CommonArgs {
  std::string config_path;
  std::string out_dir = default_output_dir();
  std::int64_t seed_override = -1;
  bool verbose = false;
};

config::ConfigMap resolve_config(const CommonArgs& args) {
  config::ConfigMap cfg = args.config_path.empty()
                              ? config::default_config()
                              : config::load_config(args.config_path);
  if (args.seed_override >= 0)
    cfg["train.seed"] = std::to_string(args.seed_override);
  return cfg;
}

int do_train(const CommonArgs& args, std::ostream& out) {
  const config::ConfigMap cfg = resolve_config(args);
  const trainer::TrainConfig tc = train_config_from(cfg);
  const model::ModelSpec spec = spec_from_config(cfg);
  const dataset::Dataset train_data = dataset_from_config(cfg, true);
  const dataset::Dataset eval_data = dataset_from_config(cfg, false);

  const fs::path dir(args.out_dir);
  fs::create_directories(dir);
  write_run_record(dir, "train", cfg);

  trainer::TrainSession session = trainer::make_session(spec, tc);
  std::vector<trainer::EpochRow> rows =
      trainer::train(session, train_data, eval_data);
  if (args.verbose) {
    std::ostringstream log;
    trainer::write_log_csv(log, rows);
    out << log.str();
  }

  std::ostringstream log;
  trainer::write_log_csv(log, rows);
  write_text_file(dir / "log.csv", log.str());
  trainer::save_checkpoint(session, (dir / "checkpoint").string());

  trainer::EvalResult result =
      trainer::evaluate(session.m, eval_data, tc.batch_size);
  write_cost_files(dir, result.cost);
  const bits::BitAverages avg =
      bits::average_bits(model::bit_summary(session.m));
  out << format_cost_row(avg, result.cost, result.accuracy) << "\n";
  out << "wrote " << (dir / "checkpoint.json").string() << ", log.csv, "
      << "report.csv, run.json\n";
  return 0;
}

int do_eval(const CommonArgs& args, const std::string& ckpt,
            const std::string& data_path, std::ostream& out) {
  config::ConfigMap cfg = resolve_config(args);
  if (!data_path.empty()) cfg["data.eval_path"] = data_path;
  const trainer::TrainConfig tc = train_config_from(cfg);
  const dataset::Dataset eval_data = dataset_from_config(cfg, false);

  const fs::path dir(args.out_dir);
  fs::create_directories(dir);
  write_run_record(dir, "eval", cfg);

  trainer::TrainSession session = trainer::load_checkpoint(ckpt, tc);
  trainer::EvalResult result =
      trainer::evaluate(session.m, eval_data, tc.batch_size);
  write_cost_files(dir, result.cost);

  char buf[64];
  std::snprintf(buf, sizeof(buf), "accuracy: %.17g\n", result.accuracy);
  out << buf;
  return 0;
}

int do_report(const CommonArgs& args, const std::string& ckpt,
              const std::string& data_path, std::ostream& out) {
  config::ConfigMap cfg = resolve_config(args);
  if (!data_path.empty()) cfg["data.eval_path"] = data_path;
  const trainer::TrainConfig tc = train_config_from(cfg);
  const dataset::Dataset eval_data = dataset_from_config(cfg, false);

  const fs::path dir(args.out_dir);
  fs::create_directories(dir);
  write_run_record(dir, "report", cfg);

  trainer::TrainSession session = trainer::load_checkpoint(ckpt, tc);
  trainer::EvalResult result =
      trainer::evaluate(session.m, eval_data, tc.batch_size);
  const bits::BitAverages avg =
      bits::average_bits(model::bit_summary(session.m));
  out << format_cost_row(avg, result.cost, result.accuracy) << "\n";
  return 0;
}

// ===== Theory claim suite =====

struct Claim {
  std::string id;
  double analytic = 0.0;
  double empirical = 0.0;
  double tolerance = 0.0;
  bool strict_greater = false;  // pass when empirical > analytic instead
  bool pass() const {
    return strict_greater ? empirical > analytic
                          : std::abs(empirical - analytic) <= tolerance;
  }
};

std::vector<Claim> run_theory_claims(std::size_t n, std::uint64_t seed) {
  std::vector<Claim> claims;

  // Half-normal tail mass beyond 1.5 sigma, the floor of every mismatch
  // probability.
  {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < n; ++i)
      if (std::abs(normal(rng)) > 1.5) ++hits;
    claims.push_back({"tail_bound_1.5sigma",
                      2.0 * (1.0 - theory::normal_cdf(1.5)),
                      double(hits) / double(n), 0.003, false});
  }

  const std::pair<int, int> pairs[] = {{2, 1}, {3, 1}, {4, 2}, {4, 3}};
  for (theory::Domain domain :
       {theory::Domain::half_normal, theory::Domain::full_normal}) {
    const char* tag = domain == theory::Domain::half_normal ? "half" : "full";
    for (auto [b, bp] : pairs) {
      theory::MismatchExperiment exp;
      exp.b = b;
      exp.b_prime = bp;
      exp.n = n;
      exp.seed = seed;
      exp.domain = domain;
      claims.push_back(
          {"mismatch_b" + std::to_string(b) + "_bp" + std::to_string(bp) +
               "_" + tag,
           theory::analytic_mismatch_probability(b, bp, domain),
           theory::simulate_mismatch(exp).saturation_fraction, 0.005, false});
    }
  }

  for (int b : {2, 3, 4}) {
    const theory::FloorRoundErrors err =
        theory::floor_vs_round_error(b, 1.0, n, seed);
    claims.push_back({"floor_exceeds_round_b" + std::to_string(b), err.e_round,
                      err.e_floor, 0.0, true});
  }
  {
    const theory::FloorRoundErrors err =
        theory::floor_vs_round_error(6, 1.0, n, seed);
    claims.push_back({"interior_error_ratio_b6", 4.0,
                      err.e_floor_unsat / err.e_round_unsat, 0.2, false});
  }

  {
    theory::MismatchExperiment exp;
    exp.b = 4;
    exp.b_prime = 2;
    exp.n = n;
    exp.seed = seed;
    const double p = theory::analytic_mismatch_probability(
        4, 2, theory::Domain::half_normal);
    for (int T : {1, 2, 4})
      claims.push_back({"temporal_T" + std::to_string(T),
                        theory::temporal_accumulation(p, T),
                        theory::simulate_temporal_mismatch(exp, T), 0.01,
                        false});
  }
  return claims;
}

int do_verify_theory(const CommonArgs& args, std::size_t samples,
                     std::ostream& out) {
  config::ConfigMap cfg = resolve_config(args);
  const std::uint64_t seed = parse_seed(config::get_string(cfg, "train.seed"));
  if (samples == 0) throw std::invalid_argument("samples must be positive");

  const fs::path dir(args.out_dir);
  fs::create_directories(dir);
  write_run_record(dir, "verify-theory", cfg);

  const std::vector<Claim> claims = run_theory_claims(samples, seed);
  std::ostringstream csv;
  csv << "claim_id,analytic,empirical,tolerance,result\n";
  bool all_pass = true;
  char buf[256];
  for (const Claim& c : claims) {
    const bool ok = c.pass();
    all_pass = all_pass && ok;
    std::snprintf(buf, sizeof(buf), "%s,%.17g,%.17g,%.17g,%s\n", c.id.c_str(),
                  c.analytic, c.empirical, c.tolerance, ok ? "pass" : "fail");
    csv << buf;
    out << c.id << ": " << (ok ? "pass" : "fail") << "\n";
  }
  write_text_file(dir / "theory.csv", csv.str());
  if (!all_pass)
    throw std::runtime_error("theory claim suite failed; see " +
                             (dir / "theory.csv").string());
  out << claims.size() << " claims pass\n";
  return 0;
}

std::string registry_footer() {
  std::string text = "Configuration keys (key = default):\n";
  for (const config::ConfigEntry& entry : config::config_registry())
    text += "  " + entry.key + " = " +
            (entry.default_value.empty() ? "<unset>" : entry.default_value) +
            "\n      " + entry.help + "\n";
  text +=
      "\nThe output directory defaults to $BITSNN_OUTPUT_DIR, then ./runs.\n";
  return text;
}

}  // namespace

int run(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Adaptive-bit spiking network trainer"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  app.footer(registry_footer());

  CommonArgs common;
  std::string ckpt, data_path;
  std::size_t samples = 1'000'000;

  auto add_common = [&common](CLI::App* sub) {
    sub->add_option("--config", common.config_path,
                    "Configuration file overlaying the defaults");
    sub->add_option("--out", common.out_dir, "Output directory")
        ->capture_default_str();
    sub->add_option("--seed", common.seed_override,
                    "Override train.seed from the config");
    sub->add_flag("-v,--verbose", common.verbose, "Per-epoch progress output");
  };

  CLI::App* cmd_train =
      app.add_subcommand("train", "Train a model and write checkpoint + logs");
  add_common(cmd_train);

  CLI::App* cmd_eval =
      app.add_subcommand("eval", "Score a checkpoint and write its cost report");
  add_common(cmd_eval);
  cmd_eval->add_option("--ckpt", ckpt, "Checkpoint stem (no extension)")
      ->required();
  cmd_eval->add_option("--data", data_path, "Evaluation dataset path");

  CLI::App* cmd_theory = app.add_subcommand(
      "verify-theory", "Run the Monte Carlo claim suite and write theory.csv");
  add_common(cmd_theory);
  cmd_theory->add_option("--samples", samples, "Monte Carlo samples per claim")
      ->capture_default_str();

  CLI::App* cmd_report = app.add_subcommand(
      "report", "Print the cost summary row of a checkpoint");
  add_common(cmd_report);
  cmd_report->add_option("--ckpt", ckpt, "Checkpoint stem (no extension)")
      ->required();
  cmd_report->add_option("--data", data_path, "Evaluation dataset path");

  std::vector<const char*> argv;
  argv.reserve(args.size() + 1);
  argv.push_back("bitsnn");
  for (const std::string& a : args) argv.push_back(a.c_str());

  try {
    app.parse(int(argv.size()), argv.data());
    if (*cmd_train) return do_train(common, out);
    if (*cmd_eval) return do_eval(common, ckpt, data_path, out);
    if (*cmd_theory) return do_verify_theory(common, samples, out);
    if (*cmd_report) return do_report(common, ckpt, data_path, out);
    err << app.help();
    return 1;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    if (code == 0) return 0;
    err << app.help();
    return 1;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::runtime_error& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace bitsnn::cli
