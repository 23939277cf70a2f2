// SPDX-License-Identifier: Apache-2.0
//
// kcciol command-line front end.
//
//   kcciol train     --config C [--seed S] [--out D] [--first-order]
//   kcciol eval      --config C --checkpoint P [--trajectories N] [--eval-alpha A]
//   kcciol baseline  --config C --kind scratch|pretrained|kcciol [--checkpoint P]
//   kcciol sweep     --config C [--delta-list a,b] [--seeds N] [--checkpoint phase2]
//   kcciol gradcheck [--seed S] [--first-order]
//   kcciol inspect   --checkpoint P [--out FILE]
//
// Exit status: 0 success, 2 usage errors, 1 any other failure.

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "kcciol/checkpoint.hpp"
#include "kcciol/config.hpp"
#include "kcciol/errors.hpp"
#include "kcciol/evaluation.hpp"
#include "kcciol/experiment.hpp"
#include "kcciol/gradcheck.hpp"
#include "kcciol/metalearner.hpp"
#include "kcciol/rng.hpp"

namespace fs = std::filesystem;
using namespace kcciol;

namespace {

constexpr std::uint64_t kScratchStream = 7;
constexpr std::uint64_t kSweepSeedBase = 1000;

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool first_order = false;
  std::string checkpoint;
  int trajectories = 0;
  std::optional<double> eval_alpha;
};

config::ExperimentConfig load(const Common& c) {
  config::ExperimentConfig cfg = config::parse_config_file(c.config_path);
  if (c.seed) cfg.seed = *c.seed;
  if (!c.out.empty()) cfg.out = c.out;
  if (c.first_order) cfg.constraint_first_order = true;
  if (c.trajectories > 0) cfg.eval.trajectories = c.trajectories;
  if (c.eval_alpha) cfg.eval.alpha = *c.eval_alpha;
  return cfg;
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  return out;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_loss_log(const fs::path& path, const meta::PhaseLog& log, const std::string& hash) {
  std::ofstream out = open_out(path);
  out << "# config_hash=" << hash << " phase=" << log.phase << "\n";
  out << "step, l_meta, l_constraint, l_1, total\n";
  for (const meta::StepRecord& r : log.steps) {
    out << r.step << ", " << fmt(r.losses.meta) << ", " << fmt(r.losses.constraint) << ", " << fmt(r.losses.l1)
        << ", " << fmt(r.losses.total) << "\n";
  }
}

void print_report(const eval::EvalReport& report) {
  std::printf("%-10s %-14s %-14s %s\n", "tasks", "mean", "std", "n");
  for (const eval::Aggregate& a : report.aggregates()) {
    std::printf("%-10d %-14.6g %-14.6g %d\n", a.task_count, a.mean, a.std, a.count);
  }
}

void write_report(const fs::path& dir, const std::string& stem, const eval::EvalReport& report) {
  {
    std::ofstream out = open_out(dir / (stem + "_records.csv"));
    eval::write_records_csv(out, report);
  }
  std::ofstream out = open_out(dir / (stem + "_summary.json"));
  eval::write_summary_json(out, report);
}

int final_task_count(const config::ExperimentConfig& cfg) {
  return cfg.kind == config::ExperimentKind::SineRegression ? data::kFunctionsPerTrajectory
                                                             : cfg.classification.eval_classes;
}

// --- subcommands -----------------------------------------------------------

int cmd_train(const Common& c) {
  const config::ExperimentConfig cfg = load(c);
  const std::string hash = config::config_hash(cfg);
  fs::create_directories(cfg.out);
  {
    std::ofstream out = open_out(cfg.out / "config.resolved");
    out << "# config_hash=" << hash << "\n" << config::canonical_text(cfg);
  }
  const experiment::Pools pools = experiment::make_pools(cfg);
  const meta::TrainConfig train = cfg.train_config();

  meta::TrainHooks hooks;
  hooks.step = [&](int phase, const meta::StepRecord& r) {
    const std::int64_t total = train.phases[static_cast<std::size_t>(phase - 1)].steps;
    if ((r.step + 1) % 100 == 0 || r.step + 1 == total) {
      std::fprintf(stderr, "phase %d step %lld/%lld l_meta=%.6g l_constraint=%.6g l_1=%.6g\n", phase,
                   static_cast<long long>(r.step + 1), static_cast<long long>(total), r.losses.meta,
                   r.losses.constraint, r.losses.l1);
    }
  };
  hooks.phase_end = [&](int phase, const model::ParameterStore& params, const Mask* mask,
                        const meta::PhaseLog& log) {
    const std::string p = std::to_string(phase);
    model::save_checkpoint(cfg.out / ("phase" + p + ".kcml"), params, mask, hash);
    write_loss_log(cfg.out / ("loss_phase" + p + ".log"), log, hash);
  };
  const meta::TrainResult result = meta::train_full(train, experiment::training_source(cfg, pools), hooks);
  std::printf("config_hash=%s parameters=%lld mask_count=%lld\n", hash.c_str(),
              static_cast<long long>(result.params.size()), static_cast<long long>(result.mask.count()));
  std::printf("checkpoints written to %s\n", cfg.out.string().c_str());
  return 0;
}

int cmd_eval(const Common& c) {
  const config::ExperimentConfig cfg = load(c);
  const model::Checkpoint ckpt = model::load_checkpoint(c.checkpoint);
  const experiment::Pools pools = experiment::make_pools(cfg);
  eval::EvalReport report = experiment::evaluate(cfg, pools, ckpt.params, experiment::default_eval_options(cfg));
  report.protocol.source = c.checkpoint;
  write_report(cfg.out, "eval", report);
  print_report(report);
  return 0;
}

int cmd_baseline(const Common& c, const std::string& kind_name) {
  const config::ExperimentConfig cfg = load(c);
  const eval::BaselineKind kind = eval::baseline_from_name(kind_name);
  std::optional<model::Checkpoint> ckpt;
  if (!c.checkpoint.empty()) ckpt = model::load_checkpoint(c.checkpoint);
  const model::ParameterStore params = eval::baseline_params(
      kind, cfg.spec(), ckpt ? &ckpt->params : nullptr, derive_seed(cfg.seed, kScratchStream));
  const experiment::Pools pools = experiment::make_pools(cfg);
  eval::EvalReport report = experiment::evaluate(cfg, pools, params, experiment::default_eval_options(cfg));
  report.protocol.source = eval::baseline_name(kind);
  write_report(cfg.out, std::string("baseline_") + eval::baseline_name(kind), report);
  print_report(report);
  return 0;
}

std::vector<double> parse_deltas(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size()) throw UsageError("--delta-list: '" + item + "' is not a number");
    out.push_back(v);
  }
  if (out.empty()) throw UsageError("--delta-list is empty");
  return out;
}

int cmd_sweep(const Common& c, const std::string& delta_list, int seed_count) {
  const config::ExperimentConfig cfg = load(c);
  if (seed_count < 1) throw UsageError("--seeds must be >= 1");
  const std::vector<double> deltas = parse_deltas(delta_list);
  const std::string hash = config::config_hash(cfg);
  const experiment::Pools pools = experiment::make_pools(cfg);
  const meta::TrajectorySource source = experiment::training_source(cfg, pools);
  const meta::TrainConfig train = cfg.train_config();

  std::optional<model::ParameterStore> phase2;
  if (!c.checkpoint.empty()) {
    phase2 = model::load_checkpoint(c.checkpoint).params;
  } else {
    model::ParameterStore p = meta::initial_params(train);
    for (int phase = 1; phase <= 2; ++phase) {
      std::fprintf(stderr, "sweep: running shared phase %d\n", phase);
      p = meta::kcciol(source, nullptr, std::move(p), meta::effective_phase(train, phase),
                       meta::phase_seed(train.seed, phase), train.options)
              .params;
    }
    phase2 = std::move(p);
    model::save_checkpoint(cfg.out / "sweep_phase2.kcml", *phase2, nullptr, hash);
  }

  std::vector<std::uint64_t> seeds;
  for (int i = 0; i < seed_count; ++i) seeds.push_back(derive_seed(cfg.seed, kSweepSeedBase + i));
  const int task_count = final_task_count(cfg);
  const eval::Scorer score = [&](const model::ParameterStore& trained, std::uint64_t seed) {
    experiment::EvalOptions o = experiment::default_eval_options(cfg);
    o.seed = derive_seed(seed, experiment::kEvalStream);
    const double m = experiment::evaluate(cfg, pools, trained, o).at(task_count).mean;
    std::fprintf(stderr, "sweep: seed %llu metric %.6g\n", static_cast<unsigned long long>(seed), m);
    return m;
  };
  const std::vector<eval::SweepRow> rows = eval::mask_sweep(train, *phase2, source, deltas, seeds, score);
  {
    std::ofstream out = open_out(cfg.out / "sweep.csv");
    eval::write_sweep_csv(out, rows, hash);
  }
  std::ofstream detail = open_out(cfg.out / "sweep_seeds.csv");
  detail << "# config_hash=" << hash << "\ndelta,seed,metric\n";
  for (const eval::SweepRow& r : rows) {
    for (std::size_t i = 0; i < seeds.size(); ++i) detail << fmt(r.delta) << "," << seeds[i] << "," << fmt(r.per_seed[i]) << "\n";
  }
  std::printf("%-8s %-14s %s\n", "delta", "mean", "std");
  for (const eval::SweepRow& r : rows) std::printf("%-8g %-14.6g %.6g\n", r.delta, r.mean, r.std);
  return 0;
}

int cmd_gradcheck(const Common& c) {
  gradcheck::SuiteOptions o;
  o.seed = c.seed.value_or(0);
  o.constraint_first_order = c.first_order;
  const std::vector<gradcheck::CaseResult> results = gradcheck::run_suite(o);
  double worst = 0.0;
  double worst_unconstrained = 0.0;
  int failed = 0;
  for (const gradcheck::CaseResult& r : results) {
    std::printf("%-24s k=%d lambda=%-4g gamma=%-4g max_rel_err=%.3e redraws=%d %s\n", r.name.c_str(),
                r.inner_steps, r.lambda, r.gamma, r.max_rel_error, r.redraws, r.ok() ? "ok" : "FAIL");
    worst = std::max(worst, r.max_rel_error);
    if (r.lambda == 0.0) worst_unconstrained = std::max(worst_unconstrained, r.max_rel_error);
    failed += r.ok() ? 0 : 1;
  }
  std::printf("max relative error: %.3e (lambda=0: %.3e), %d of %zu cases failed\n", worst,
              worst_unconstrained, failed, results.size());
  return failed == 0 ? 0 : 1;
}

int cmd_inspect(const Common& c) {
  const model::Checkpoint ckpt = model::load_checkpoint(c.checkpoint);
  constexpr double kBin = 1e-3;
  const ad::Vector& v = ckpt.params.values();
  const double largest = v.size() ? v.cwiseAbs().maxCoeff() : 0.0;
  std::vector<long long> counts(static_cast<std::size_t>(std::floor(largest / kBin)) + 1, 0);
  for (ad::Index i = 0; i < v.size(); ++i) ++counts[static_cast<std::size_t>(std::floor(std::abs(v[i]) / kBin))];
  const double near_zero = v.size() ? static_cast<double>(counts[0]) / static_cast<double>(v.size()) : 0.0;

  std::ofstream file;
  if (!c.out.empty()) file = open_out(c.out);
  std::ostream& out = c.out.empty() ? std::cout : file;
  out << "# config_hash=" << ckpt.config_hash << " parameters=" << v.size() << " near_zero_fraction=" << fmt(near_zero)
      << " bin_width=" << fmt(kBin) << "\n";
  out << "bin_edge,count\n";
  for (std::size_t b = 0; b < counts.size(); ++b) out << fmt(static_cast<double>(b) * kBin) << "," << counts[b] << "\n";
  if (!c.out.empty()) std::printf("near_zero_fraction=%s\n", fmt(near_zero).c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Knowledge-consolidation class-incremental online meta-learning"};
  app.require_subcommand(1);
  Common common;
  std::string kind;
  std::string delta_list = "0.5,1";
  int seeds = 10;

  auto add_config = [&](CLI::App* sub) {
    sub->add_option("--config", common.config_path, "Experiment config file")->required();
    sub->add_option("--seed", common.seed, "Override the master seed");
    sub->add_option("--out", common.out, "Output directory");
  };

  CLI::App* train = app.add_subcommand("train", "Run the three-phase meta-training");
  add_config(train);
  train->add_flag("--first-order", common.first_order, "First-order constraint gradient");

  CLI::App* ev = app.add_subcommand("eval", "Evaluate a checkpoint on held-out trajectories");
  add_config(ev);
  ev->add_option("--checkpoint", common.checkpoint, "Checkpoint to evaluate")->required();
  ev->add_option("--trajectories", common.trajectories, "Number of evaluation trajectories");
  ev->add_option("--eval-alpha", common.eval_alpha, "Override the evaluation learning rate");

  CLI::App* base = app.add_subcommand("baseline", "Evaluate a baseline representation");
  add_config(base);
  base->add_option("--kind", kind, "scratch, pretrained or kcciol")->required();
  base->add_option("--checkpoint", common.checkpoint, "Checkpoint for pretrained/kcciol");
  base->add_option("--trajectories", common.trajectories, "Number of evaluation trajectories");
  base->add_option("--eval-alpha", common.eval_alpha, "Override the evaluation learning rate");

  CLI::App* sweep = app.add_subcommand("sweep", "Masking-level sweep over delta");
  add_config(sweep);
  sweep->add_option("--delta-list", delta_list, "Comma-separated deltas");
  sweep->add_option("--seeds", seeds, "Number of paired seeds");
  sweep->add_option("--checkpoint", common.checkpoint, "Cached phase-2 checkpoint");
  sweep->add_option("--trajectories", common.trajectories, "Evaluation trajectories per seed");
  sweep->add_flag("--first-order", common.first_order, "First-order constraint gradient");

  CLI::App* grad = app.add_subcommand("gradcheck", "Finite-difference check of the outer objective");
  grad->add_option("--seed", common.seed, "Seed for the random cases");
  grad->add_flag("--first-order", common.first_order, "Check the first-order constraint variant");

  CLI::App* inspect = app.add_subcommand("inspect", "Weight-magnitude histogram of a checkpoint");
  inspect->add_option("--checkpoint", common.checkpoint, "Checkpoint to inspect")->required();
  inspect->add_option("--out", common.out, "Output file (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*train) return cmd_train(common);
    if (*ev) return cmd_eval(common);
    if (*base) return cmd_baseline(common, kind);
    if (*sweep) return cmd_sweep(common, delta_list, seeds);
    if (*grad) return cmd_gradcheck(common);
    if (*inspect) return cmd_inspect(common);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "kcciol: %s: %s\n", e.category(), e.what());
    return 2;
  } catch (const Error& e) {
    std::fprintf(stderr, "kcciol: %s: %s\n", e.category(), e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "kcciol: error: %s\n", e.what());
    return 1;
  }
  return 2;
}
