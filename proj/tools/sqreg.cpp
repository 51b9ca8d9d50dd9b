// sqreg: streaming additive quantile regression over bounded-memory state.
// Subcommands: fit, predict, simulate, inspect.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "sqreg/checkpoint.hpp"
#include "sqreg/ensemble.hpp"
#include "sqreg/io.hpp"
#include "sqreg/simlab.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitInternal = 3;

struct FitOptions {
  std::string input = "-";
  std::string format = "csv";
  std::int64_t dims = 1;
  double tau = 0.5;
  double radius = 1.0;
  double step_scale = 0.0;  // 0 means the tau-based default
  double smoothness = 2.0;
  std::string mode = "single";
  std::int64_t batch_size = 16;
  std::string checkpoint_out;
  std::int64_t checkpoint_interval = 0;
  std::string resume;
  bool lenient = false;
  int replicates = 1;
  double subset_fraction = 0.5;
  bool include_intercept = false;
  std::uint64_t seed = 0;
};

sqreg::EstimatorConfig build_config(const FitOptions& options) {
  sqreg::EstimatorConfig config;
  config.tau = options.tau;
  config.l1_radius = options.radius;
  config.step_scale =
      options.step_scale > 0.0 ? options.step_scale : sqreg::default_step_scale(options.tau);
  config.smoothness = options.smoothness;
  config.basis = sqreg::BasisSpec::trigonometric(options.dims);
  config.mode =
      options.mode == "batch" ? sqreg::UpdateMode::MiniBatch : sqreg::UpdateMode::SingleSample;
  config.validate();
  return config;
}

// Streams records from a CSV or JSONL source with line accounting.
class RecordReader {
 public:
  RecordReader(std::istream& in, sqreg::io::InputFormat format, sqreg::Index dims)
      : in_(in), format_(format), dims_(dims) {}

  // nullopt at end of stream; throws RecordError on malformed lines
  std::optional<sqreg::Sample> next() {
    std::string line;
    while (std::getline(in_, line)) {
      ++line_number_;
      if (line.empty() || line == "\r") continue;
      if (format_ == sqreg::io::InputFormat::Csv) {
        if (line_number_ == 1 && sqreg::io::looks_like_csv_header(line)) continue;
        sqreg::Sample sample = sqreg::io::parse_csv_record(line, dims_, line_number_);
        sqreg::io::check_sample_domain(sample, line_number_);
        return sample;
      }
      sqreg::Sample sample = sqreg::io::parse_jsonl_record(line, dims_, line_number_);
      sqreg::io::check_sample_domain(sample, line_number_);
      return sample;
    }
    return std::nullopt;
  }

  std::int64_t line_number() const { return line_number_; }

 private:
  std::istream& in_;
  sqreg::io::InputFormat format_;
  sqreg::Index dims_;
  std::int64_t line_number_ = 0;
};

void print_summary(const sqreg::OnlineEstimator& estimator, std::int64_t skipped) {
  const auto& state = estimator.state();
  const auto pinball = estimator.streamed_pinball().value();
  std::printf("t=%lld n=%lld J=%lld dim=%lld l1_norm=%.17g streamed_pinball=%s\n",
              static_cast<long long>(state.t), static_cast<long long>(state.n_seen),
              static_cast<long long>(state.basis_dim), static_cast<long long>(state.theta.size()),
              state.theta.lpNorm<1>(),
              pinball ? std::to_string(*pinball).c_str() : "n/a");
  if (skipped > 0) std::printf("skipped_records=%lld\n", static_cast<long long>(skipped));
}

int run_fit(const FitOptions& options) {
  const sqreg::EstimatorConfig config = build_config(options);
  const auto format =
      options.format == "jsonl" ? sqreg::io::InputFormat::Jsonl : sqreg::io::InputFormat::Csv;

  std::ifstream file;
  if (options.input != "-") {
    file.open(options.input);
    if (!file) {
      std::fprintf(stderr, "error: cannot open input '%s'\n", options.input.c_str());
      return kExitData;
    }
  }
  std::istream& in = options.input == "-" ? std::cin : file;
  RecordReader reader(in, format, config.dims());
  std::int64_t skipped = 0;

  auto read_next = [&](std::optional<sqreg::Sample>& slot) -> bool {
    while (true) {
      try {
        slot = reader.next();
        return true;
      } catch (const sqreg::io::RecordError& err) {
        if (!options.lenient) {
          std::fprintf(stderr, "error: %s\n", err.what());
          return false;
        }
        ++skipped;
      }
    }
  };

  // Ensemble fit: replicate learners over the shared stream.
  if (options.replicates > 1) {
    if (!options.resume.empty()) {
      std::fprintf(stderr, "error: --resume is not supported with --replicates > 1\n");
      return kExitUsage;
    }
    if (config.mode != sqreg::UpdateMode::SingleSample) {
      std::fprintf(stderr, "error: ensemble fit requires single-sample mode\n");
      return kExitUsage;
    }
    sqreg::EnsembleConfig ensemble_config;
    ensemble_config.base = config;
    ensemble_config.replicates = options.replicates;
    ensemble_config.seed = options.seed;
    const double fraction = options.subset_fraction;
    ensemble_config.subset_rule = [fraction](std::int64_t, sqreg::Index count) {
      return static_cast<sqreg::Index>(std::ceil(fraction * static_cast<double>(count)));
    };
    ensemble_config.always_include_intercept = options.include_intercept;
    sqreg::EnsembleEstimator ensemble(ensemble_config);

    std::optional<sqreg::Sample> sample;
    while (true) {
      if (!read_next(sample)) return kExitData;
      if (!sample) break;
      ensemble.observe(*sample);
    }
    if (!options.checkpoint_out.empty()) {
      nlohmann::json manifest;
      manifest["replicates"] = options.replicates;
      manifest["seed"] = options.seed;
      manifest["subset_fraction"] = options.subset_fraction;
      manifest["include_intercept"] = options.include_intercept;
      std::vector<std::string> paths;
      for (int r = 0; r < options.replicates; ++r) {
        sqreg::OnlineEstimator view(config);
        view.restore(sqreg::CoefficientState(ensemble.replicate_states()[static_cast<std::size_t>(r)]),
                     sqreg::RunningMean());
        const std::string path = options.checkpoint_out + ".r" + std::to_string(r);
        sqreg::save_checkpoint(path, sqreg::make_checkpoint(view));
        paths.push_back(path);
      }
      manifest["checkpoints"] = paths;
      std::ofstream out(options.checkpoint_out);
      if (!out) {
        std::fprintf(stderr, "error: cannot write manifest '%s'\n", options.checkpoint_out.c_str());
        return kExitData;
      }
      out << manifest.dump(2) << "\n";
    }
    const auto& state = ensemble.replicate_states()[0];
    std::printf("replicates=%d t=%lld J=%lld streamed_pinball=%s\n", options.replicates,
                static_cast<long long>(state.t), static_cast<long long>(state.basis_dim),
                ensemble.streamed_pinball().value()
                    ? std::to_string(*ensemble.streamed_pinball().value()).c_str()
                    : "n/a");
    if (skipped > 0) std::printf("skipped_records=%lld\n", static_cast<long long>(skipped));
    return kExitOk;
  }

  std::unique_ptr<sqreg::OnlineEstimator> estimator;
  if (!options.resume.empty()) {
    const sqreg::Checkpoint checkpoint = sqreg::load_checkpoint(options.resume);
    if (sqreg::config_digest(checkpoint.config) != sqreg::config_digest(config)) {
      std::fprintf(stderr, "error: checkpoint config does not match the requested config\n");
      return kExitData;
    }
    estimator = std::make_unique<sqreg::OnlineEstimator>(sqreg::restore_estimator(checkpoint));
  } else {
    estimator = std::make_unique<sqreg::OnlineEstimator>(config);
  }

  auto maybe_checkpoint = [&](bool force) {
    if (options.checkpoint_out.empty()) return;
    const bool interval_hit = options.checkpoint_interval > 0 &&
                              estimator->state().t % options.checkpoint_interval == 0;
    if (force || interval_hit)
      sqreg::save_checkpoint(options.checkpoint_out, sqreg::make_checkpoint(*estimator));
  };

  std::optional<sqreg::Sample> sample;
  if (config.mode == sqreg::UpdateMode::SingleSample) {
    while (true) {
      if (!read_next(sample)) return kExitData;
      if (!sample) break;
      estimator->observe(*sample);
      maybe_checkpoint(false);
    }
  } else {
    std::vector<sqreg::Sample> batch;
    bool done = false;
    while (!done) {
      batch.clear();
      while (static_cast<std::int64_t>(batch.size()) < options.batch_size) {
        if (!read_next(sample)) return kExitData;
        if (!sample) {
          done = true;
          break;
        }
        batch.push_back(*sample);
      }
      if (!batch.empty()) {
        estimator->observe(std::span<const sqreg::Sample>(batch));
        maybe_checkpoint(false);
      }
    }
  }
  maybe_checkpoint(true);
  print_summary(*estimator, skipped);
  return kExitOk;
}

struct PredictOptions {
  std::string checkpoint;
  std::string queries;
  std::string output = "-";
};

int run_predict(const PredictOptions& options) {
  // a checkpoint path or an ensemble manifest (JSON with "checkpoints")
  std::vector<sqreg::Checkpoint> checkpoints;
  {
    std::ifstream probe(options.checkpoint);
    if (!probe) {
      std::fprintf(stderr, "error: cannot open checkpoint '%s'\n", options.checkpoint.c_str());
      return kExitData;
    }
    char first = 0;
    probe >> first;
    probe.close();
    if (first == '{') {
      std::ifstream manifest_file(options.checkpoint);
      const nlohmann::json manifest = nlohmann::json::parse(manifest_file);
      for (const auto& path : manifest.at("checkpoints"))
        checkpoints.push_back(sqreg::load_checkpoint(path.get<std::string>()));
      if (checkpoints.empty()) {
        std::fprintf(stderr, "error: manifest lists no checkpoints\n");
        return kExitData;
      }
    } else {
      checkpoints.push_back(sqreg::load_checkpoint(options.checkpoint));
    }
  }
  const sqreg::EstimatorConfig& config = checkpoints.front().config;
  std::vector<sqreg::CoefficientState> states;
  for (const sqreg::Checkpoint& checkpoint : checkpoints) {
    if (sqreg::config_digest(checkpoint.config) != sqreg::config_digest(config)) {
      std::fprintf(stderr, "error: ensemble checkpoints disagree on the config\n");
      return kExitData;
    }
    states.push_back(checkpoint.state);
  }

  std::ifstream queries(options.queries);
  if (!queries) {
    std::fprintf(stderr, "error: cannot open queries '%s'\n", options.queries.c_str());
    return kExitData;
  }
  std::ofstream out_file;
  if (options.output != "-") {
    out_file.open(options.output);
    if (!out_file) {
      std::fprintf(stderr, "error: cannot open output '%s'\n", options.output.c_str());
      return kExitData;
    }
  }
  std::ostream& out = options.output == "-" ? std::cout : out_file;

  std::string line;
  std::int64_t line_number = 0;
  char buf[64];
  while (std::getline(queries, line)) {
    ++line_number;
    if (line.empty() || line == "\r") continue;
    if (line_number == 1 && sqreg::io::looks_like_csv_header(line)) continue;
    const sqreg::Vector x =
        sqreg::io::parse_csv_coordinates(line, config.dims(), false, line_number, nullptr);
    for (sqreg::Index k = 0; k < x.size(); ++k)
      if (!(x[k] >= 0.0 && x[k] <= 1.0))
        throw sqreg::io::RecordError(line_number, "query coordinate outside [0,1]");
    const double value = states.size() == 1
                             ? sqreg::predict(states.front(), config.basis, x)
                             : sqreg::ensemble_predict(states, config.basis, x);
    std::snprintf(buf, sizeof(buf), "%.17g\n", value);
    out << buf;
  }
  return kExitOk;
}

struct SimulateOptions {
  std::int64_t dims = 2;
  double smoothness = 2.0;
  double sobolev_radius = 1.0;
  double radius = 3.0;
  double tau = 0.5;
  double step_scale = 0.0;
  std::string noise = "gaussian";
  double noise_a = 0.5;
  double noise_b = 1.0;
  std::int64_t truth_dim = 2000;
  double decay_margin = 0.6;
  double l1_fraction = 0.9;
  std::uint64_t truth_seed = 12345;
  std::int64_t horizon = 1 << 14;
  std::string mode = "single";
  std::int64_t batch_size = 16;
  int runs = 1;
  std::uint64_t seed_base = 1000;
  std::string out_dir = "sqreg-sim";
  std::int64_t window_lo = 1024;
};

int run_simulate(const SimulateOptions& options) {
  sqreg::simlab::TruthParams truth_params;
  truth_params.dims = options.dims;
  truth_params.smoothness = options.smoothness;
  truth_params.sobolev_radius = options.sobolev_radius;
  truth_params.l1_radius = options.radius;
  truth_params.seed = options.truth_seed;
  if (options.noise == "gaussian")
    truth_params.noise = sqreg::NoiseLaw::gaussian(options.noise_a);
  else if (options.noise == "student")
    truth_params.noise = sqreg::NoiseLaw::student_t(options.noise_a);
  else if (options.noise == "uniform")
    truth_params.noise = sqreg::NoiseLaw::uniform(options.noise_a, options.noise_b);
  else {
    std::fprintf(stderr, "error: unknown noise '%s'\n", options.noise.c_str());
    return kExitUsage;
  }
  truth_params.tau = options.tau;
  truth_params.truth_dim = options.truth_dim;
  truth_params.decay_margin = options.decay_margin;
  truth_params.l1_fraction = options.l1_fraction;
  const sqreg::simlab::TrueModel model = sqreg::simlab::make_sobolev_truth(truth_params);

  sqreg::EstimatorConfig config;
  config.tau = options.tau;
  config.l1_radius = options.radius;
  config.step_scale =
      options.step_scale > 0.0 ? options.step_scale : sqreg::default_step_scale(options.tau);
  config.smoothness = options.smoothness;
  config.basis = sqreg::BasisSpec::trigonometric(options.dims);
  config.mode =
      options.mode == "batch" ? sqreg::UpdateMode::MiniBatch : sqreg::UpdateMode::SingleSample;
  config.validate();

  std::filesystem::create_directories(options.out_dir);
  sqreg::simlab::ExperimentParams run;
  run.horizon = options.horizon;
  run.schedule = sqreg::simlab::geometric_schedule(options.horizon);
  run.batch_size = config.mode == sqreg::UpdateMode::MiniBatch ? options.batch_size : 1;

  std::vector<double> slopes;
  std::vector<std::string> csv_paths;
  for (int r = 0; r < options.runs; ++r) {
    run.seed = options.seed_base + static_cast<std::uint64_t>(r);
    const auto reports = sqreg::simlab::run_experiment(config, model, run);
    const std::string path =
        options.out_dir + "/run_" + std::to_string(run.seed) + ".csv";
    std::ofstream out(path);
    if (!out) {
      std::fprintf(stderr, "error: cannot write '%s'\n", path.c_str());
      return kExitData;
    }
    sqreg::io::write_reports_csv(out, reports);
    csv_paths.push_back(path);

    std::size_t first = 0;
    while (first < reports.size() && reports[first].n_seen < options.window_lo) ++first;
    if (reports.size() - first >= 3) {
      const double slope = sqreg::simlab::rate_slope(reports, first, reports.size());
      slopes.push_back(slope);
      std::printf("run seed=%llu final_l2=%.6e slope=%.4f\n",
                  static_cast<unsigned long long>(run.seed), reports.back().l2_error_sq, slope);
    } else {
      std::printf("run seed=%llu final_l2=%.6e slope=n/a (window too short)\n",
                  static_cast<unsigned long long>(run.seed),
                  reports.empty() ? 0.0 : reports.back().l2_error_sq);
    }
  }
  if (!slopes.empty()) {
    double mean = 0.0;
    for (double slope : slopes) mean += slope;
    std::printf("mean_slope=%.4f over %zu runs\n", mean / slopes.size(), slopes.size());
  }

  nlohmann::json manifest;
  manifest["dims"] = options.dims;
  manifest["smoothness"] = options.smoothness;
  manifest["sobolev_radius"] = options.sobolev_radius;
  manifest["radius"] = options.radius;
  manifest["tau"] = options.tau;
  manifest["step_scale"] = config.step_scale;
  manifest["noise"] = options.noise;
  manifest["noise_a"] = options.noise_a;
  manifest["noise_b"] = options.noise_b;
  manifest["truth_dim"] = options.truth_dim;
  manifest["truth_seed"] = options.truth_seed;
  manifest["horizon"] = options.horizon;
  manifest["mode"] = options.mode;
  manifest["batch_size"] = run.batch_size;
  manifest["runs"] = options.runs;
  manifest["seed_base"] = options.seed_base;
  manifest["window_lo"] = options.window_lo;
  manifest["csv"] = csv_paths;
  std::ofstream manifest_out(options.out_dir + "/manifest.json");
  manifest_out << manifest.dump(2) << "\n";
  return kExitOk;
}

int run_inspect(const std::string& path) {
  const sqreg::Checkpoint checkpoint = sqreg::load_checkpoint(path);
  const sqreg::CoefficientState& state = checkpoint.state;
  std::printf("digest=%llu\n",
              static_cast<unsigned long long>(sqreg::config_digest(checkpoint.config)));
  std::printf("dims=%lld tau=%.17g radius=%.17g step_scale=%.17g smoothness=%.17g mode=%s\n",
              static_cast<long long>(checkpoint.config.dims()), checkpoint.config.tau,
              checkpoint.config.l1_radius, checkpoint.config.step_scale,
              checkpoint.config.smoothness,
              checkpoint.config.mode == sqreg::UpdateMode::SingleSample ? "single" : "batch");
  std::printf("t=%lld n=%lld J=%lld dim=%lld l1_norm=%.17g\n", static_cast<long long>(state.t),
              static_cast<long long>(state.n_seen), static_cast<long long>(state.basis_dim),
              static_cast<long long>(state.theta.size()), state.theta.lpNorm<1>());
  std::printf("pinball_count=%lld pinball_mean=%.17g\n",
              static_cast<long long>(checkpoint.pinball_count), checkpoint.pinball_mean);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"streaming additive quantile regression"};
  app.require_subcommand(1);
  // key=value file with one [section] per subcommand; flags take precedence
  app.set_config("--config", "", "config file (sections [fit], [simulate], ...)");

  FitOptions fit;
  CLI::App* fit_cmd = app.add_subcommand("fit", "consume a sample stream and fit the quantile model");
  fit_cmd->add_option("--input", fit.input, "input path, or - for stdin");
  fit_cmd->add_option("--format", fit.format, "csv | jsonl")
      ->check(CLI::IsMember({"csv", "jsonl"}));
  fit_cmd->add_option("--dims", fit.dims, "number of covariates")->required();
  fit_cmd->add_option("--tau", fit.tau, "target quantile in (0,1)");
  fit_cmd->add_option("--radius", fit.radius, "l1 ball radius");
  fit_cmd->add_option("--step-scale", fit.step_scale, "step-size constant (default 1/(tau(1-tau)))");
  fit_cmd->add_option("--smoothness", fit.smoothness, "smoothness degree s > 1/2");
  fit_cmd->add_option("--mode", fit.mode, "single | batch")->check(CLI::IsMember({"single", "batch"}));
  fit_cmd->add_option("--batch-size", fit.batch_size, "samples per step in batch mode");
  fit_cmd->add_option("--checkpoint-out", fit.checkpoint_out, "checkpoint path");
  fit_cmd->add_option("--checkpoint-interval", fit.checkpoint_interval,
                      "write checkpoint every N steps");
  fit_cmd->add_option("--resume", fit.resume, "resume from a checkpoint");
  fit_cmd->add_flag("--lenient", fit.lenient, "skip malformed records instead of aborting");
  fit_cmd->add_option("--replicates", fit.replicates, "ensemble replicates (1 = plain learner)");
  fit_cmd->add_option("--subset-fraction", fit.subset_fraction,
                      "fraction of coordinates each replicate updates per step");
  fit_cmd->add_flag("--include-intercept", fit.include_intercept,
                    "always keep the intercept in the ensemble mask");
  fit_cmd->add_option("--seed", fit.seed, "ensemble coordinate-selection seed");

  PredictOptions predict;
  CLI::App* predict_cmd = app.add_subcommand("predict", "evaluate a checkpointed model");
  predict_cmd->add_option("--checkpoint", predict.checkpoint, "checkpoint or ensemble manifest")
      ->required();
  predict_cmd->add_option("--queries", predict.queries, "CSV of query points x1..xp")->required();
  predict_cmd->add_option("--output", predict.output, "output path, or - for stdout");

  SimulateOptions simulate;
  CLI::App* simulate_cmd = app.add_subcommand("simulate", "synthetic convergence experiments");
  simulate_cmd->add_option("--dims", simulate.dims, "covariate count");
  simulate_cmd->add_option("--smoothness", simulate.smoothness, "smoothness degree");
  simulate_cmd->add_option("--sobolev-radius", simulate.sobolev_radius, "truth ellipsoid radius Q");
  simulate_cmd->add_option("--radius", simulate.radius, "l1 ball radius R");
  simulate_cmd->add_option("--tau", simulate.tau, "target quantile");
  simulate_cmd->add_option("--step-scale", simulate.step_scale, "step-size constant");
  simulate_cmd->add_option("--noise", simulate.noise, "gaussian | student | uniform")
      ->check(CLI::IsMember({"gaussian", "student", "uniform"}));
  simulate_cmd->add_option("--noise-a", simulate.noise_a, "sigma | nu | lower bound");
  simulate_cmd->add_option("--noise-b", simulate.noise_b, "uniform upper bound");
  simulate_cmd->add_option("--truth-dim", simulate.truth_dim, "truth series truncation");
  simulate_cmd->add_option("--decay-margin", simulate.decay_margin, "truth decay exponent margin");
  simulate_cmd->add_option("--l1-fraction", simulate.l1_fraction, "truth l1 budget inside R");
  simulate_cmd->add_option("--truth-seed", simulate.truth_seed, "truth generation seed");
  simulate_cmd->add_option("--horizon", simulate.horizon, "total samples per run");
  simulate_cmd->add_option("--mode", simulate.mode, "single | batch")
      ->check(CLI::IsMember({"single", "batch"}));
  simulate_cmd->add_option("--batch-size", simulate.batch_size, "samples per step in batch mode");
  simulate_cmd->add_option("--runs", simulate.runs, "number of seeds");
  simulate_cmd->add_option("--seed-base", simulate.seed_base, "first stream seed");
  simulate_cmd->add_option("--out-dir", simulate.out_dir, "output directory");
  simulate_cmd->add_option("--window-lo", simulate.window_lo,
                           "smallest sample count in the slope window");

  std::string inspect_path;
  CLI::App* inspect_cmd = app.add_subcommand("inspect", "dump checkpoint metadata");
  inspect_cmd->add_option("--checkpoint", inspect_path, "checkpoint path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (fit_cmd->parsed()) return run_fit(fit);
    if (predict_cmd->parsed()) return run_predict(predict);
    if (simulate_cmd->parsed()) return run_simulate(simulate);
    if (inspect_cmd->parsed()) return run_inspect(inspect_path);
    return kExitUsage;
  } catch (const sqreg::io::RecordError& err) {
    std::fprintf(stderr, "error: %s\n", err.what());
    return kExitData;
  } catch (const std::domain_error& err) {
    std::fprintf(stderr, "error: %s\n", err.what());
    return kExitData;
  } catch (const std::invalid_argument& err) {
    std::fprintf(stderr, "error: %s\n", err.what());
    return kExitUsage;
  } catch (const std::runtime_error& err) {
    std::fprintf(stderr, "error: %s\n", err.what());
    return kExitData;
  } catch (const std::exception& err) {
    std::fprintf(stderr, "internal error: %s\n", err.what());
    return kExitInternal;
  }
}
