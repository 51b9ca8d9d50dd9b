// Acceptance suite: one checked criterion per function, one PASS/FAIL line
// each. Run with no arguments for the full suite or with a number (1-10) for
// a single criterion. Exit code is the number of failed criteria.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "sqreg/checkpoint.hpp"
#include "sqreg/ensemble.hpp"
#include "sqreg/simlab.hpp"

using namespace sqreg;
using namespace sqreg::simlab;

namespace {

using Clock = std::chrono::steady_clock;

bool bitwise_equal(const Vector& a, const Vector& b) {
  return a.size() == b.size() &&
         std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

double median_of(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

struct Fit {
  double slope = 0.0;
  double r_squared = 0.0;
};

Fit linear_fit(const std::vector<double>& xs, const std::vector<double>& ys) {
  const double n = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  Fit fit;
  fit.slope = sxy / sxx;
  fit.r_squared = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
  return fit;
}

// Shared lab setup: p = 2, s = 2, Gaussian sigma = 0.5 ground truth inside
// the learner's ball.
TruthParams lab_truth_params(double tau) {
  TruthParams params;
  params.dims = 2;
  params.smoothness = 2.0;
  params.sobolev_radius = 1.0;
  params.l1_radius = 3.0;
  params.seed = 12345;
  params.noise = NoiseLaw::gaussian(0.5);
  params.tau = tau;
  params.truth_dim = 2000;
  return params;
}

EstimatorConfig lab_config(double tau) {
  EstimatorConfig config;
  config.tau = tau;
  config.l1_radius = 3.0;
  config.step_scale = default_step_scale(tau);
  config.smoothness = 2.0;
  config.basis = BasisSpec::trigonometric(2);
  return config;
}

// Evaluates the fitted function on a fixed lattice through one cached basis
// matrix per truncation dimension.
class GridEvaluator {
 public:
  GridEvaluator(const BasisSpec& basis, Index points_per_axis) : basis_(basis) {
    if (basis.dims == 1) {
      for (Index i = 0; i < points_per_axis * points_per_axis; ++i) {
        Vector x(1);
        x << static_cast<double>(i) / static_cast<double>(points_per_axis * points_per_axis - 1);
        points_.push_back(x);
      }
    } else {
      for (Index i = 0; i < points_per_axis; ++i)
        for (Index j = 0; j < points_per_axis; ++j) {
          Vector x(2);
          x << static_cast<double>(i) / static_cast<double>(points_per_axis - 1),
              static_cast<double>(j) / static_cast<double>(points_per_axis - 1);
          points_.push_back(x);
        }
    }
  }

  double max_abs(const CoefficientState& state) {
    if (state.basis_dim != cached_dim_) {
      matrix_.resize(static_cast<Index>(points_.size()), 1 + basis_.dims * state.basis_dim);
      for (std::size_t i = 0; i < points_.size(); ++i)
        matrix_.row(static_cast<Index>(i)) =
            eval_basis_vector<double>(basis_, state.basis_dim, points_[i]).transpose();
      cached_dim_ = state.basis_dim;
    }
    return (matrix_ * state.theta).cwiseAbs().maxCoeff();
  }

 private:
  BasisSpec basis_;
  std::vector<Vector> points_;
  Eigen::MatrixXd matrix_;
  Index cached_dim_ = -1;
};

struct RateSummary {
  double slope = 0.0;
  double mean_error_lo = 0.0;   // seed-mean l2 at the window start
  double mean_error_hi = 0.0;   // seed-mean l2 at the horizon
};

RateSummary rate_experiment(const EstimatorConfig& config, const TrueModel& model,
                            std::int64_t horizon, std::int64_t batch_size, int seeds,
                            std::int64_t window_lo) {
  ExperimentParams run;
  run.horizon = horizon;
  run.schedule = geometric_schedule(horizon);
  run.batch_size = batch_size;

  std::vector<std::vector<EvaluationReport>> all;
  for (int s = 0; s < seeds; ++s) {
    run.seed = 1000 + static_cast<std::uint64_t>(s);
    all.push_back(run_experiment(config, model, run));
  }
  std::vector<double> xs, ys;
  RateSummary summary;
  for (std::size_t i = 0; i < all[0].size(); ++i) {
    const std::int64_t n_seen = all[0][i].n_seen;
    double mean_log = 0.0, mean = 0.0;
    for (const auto& reports : all) {
      mean_log += std::log(reports[i].l2_error_sq);
      mean += reports[i].l2_error_sq;
    }
    mean_log /= seeds;
    mean /= seeds;
    if (n_seen >= window_lo) {
      xs.push_back(std::log(static_cast<double>(n_seen)));
      ys.push_back(mean_log);
    }
    if (n_seen == window_lo) summary.mean_error_lo = mean;
    if (n_seen == horizon) summary.mean_error_hi = mean;
  }
  summary.slope = linear_fit(xs, ys).slope;
  return summary;
}

// ---------------------------------------------------------------------------

bool criterion_1_projection_oracle() {
  std::mt19937_64 rng(4001);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double worst_gap = 0.0;
  double worst_norm_residual = 0.0;
  for (int rep = 0; rep < 10000; ++rep) {
    const Index dim = 1 + static_cast<Index>(rng() % 500);
    Vector u(dim);
    const int pattern = static_cast<int>(rng() % 5);
    const double scale = std::pow(10.0, -1.0 + 2.0 * unit(rng));
    for (Index i = 0; i < dim; ++i) {
      double magnitude = 0.0;
      switch (pattern) {
        case 0: magnitude = unit(rng); break;                          // generic
        case 1: magnitude = 1.0; break;                                // all equal
        case 2: {                                                      // heavy ties
          static const double levels[] = {0.0, 0.5, 0.5, 1.0};
          magnitude = levels[rng() % 4];
          break;
        }
        case 3: magnitude = unit(rng) < 0.5 ? 0.0 : unit(rng); break;  // sparse
        default: magnitude = 0.01 * unit(rng); break;                  // mostly interior
      }
      u[i] = (unit(rng) < 0.5 ? -1.0 : 1.0) * magnitude * scale;
    }
    const double radius = 0.1 + 4.9 * unit(rng);
    const auto result = l1_project<double>(u, radius);
    const Vector reference = l1_project_oracle<double>(u, radius);
    worst_gap = std::max(worst_gap, (result.v - reference).lpNorm<Eigen::Infinity>());
    if (!result.was_interior)
      worst_norm_residual =
          std::max(worst_norm_residual, std::abs(result.v.lpNorm<1>() - radius));
  }
  std::printf("%s  1 projection-oracle: max|alg-oracle|=%.2e (tol 1e-8), "
              "max|l1-R|=%.2e (tol 1e-9)\n",
              worst_gap < 1e-8 && worst_norm_residual < 1e-9 ? "[PASS]" : "[FAIL]", worst_gap,
              worst_norm_residual);
  return worst_gap < 1e-8 && worst_norm_residual < 1e-9;
}

bool criterion_2_basis_quadrature() {
  const BasisSpec spec = BasisSpec::trigonometric(1);
  const double gram = gram_deviation(spec, 16, 100000);
  const double centering = centering_deviation(spec, 16, 100000);
  const bool pass = gram < 1e-5 && centering < 1e-6;
  std::printf("%s  2 basis-quadrature: gram=%.2e (tol 1e-5), centering=%.2e (tol 1e-6)\n",
              pass ? "[PASS]" : "[FAIL]", gram, centering);
  return pass;
}

bool criterion_3_deterministic_feasibility() {
  TruthParams truth_params = lab_truth_params(0.7);
  truth_params.noise = NoiseLaw::student_t(3.0);
  const TrueModel model = make_sobolev_truth(truth_params);
  const EstimatorConfig config = lab_config(0.7);
  OnlineEstimator estimator(config);
  GridEvaluator grid(config.basis, 32);
  const double radius_tol = config.l1_radius + 1e-9;
  const double sup_tol = M_SQRT2 * config.l1_radius + 1e-6;

  std::mt19937_64 rng(777);
  double worst_l1 = 0.0, worst_sup = 0.0;
  for (int step = 0; step < 100000; ++step) {
    estimator.observe(draw_sample(model, rng));
    worst_l1 = std::max(worst_l1, estimator.state().theta.lpNorm<1>());
    worst_sup = std::max(worst_sup, grid.max_abs(estimator.state()));
    if (worst_l1 > radius_tol || worst_sup > sup_tol) break;
  }
  const bool pass = worst_l1 <= radius_tol && worst_sup <= sup_tol;
  std::printf("%s  3 deterministic-feasibility: max|theta|_1=%.12f (<= %.12f), "
              "grid sup=%.6f (<= %.6f)\n",
              pass ? "[PASS]" : "[FAIL]", worst_l1, radius_tol, worst_sup, sup_tol);
  return pass;
}

bool criterion_4_minibatch_degeneracy() {
  const TrueModel model = make_sobolev_truth(lab_truth_params(0.5));
  const EstimatorConfig single = lab_config(0.5);
  EstimatorConfig batched = single;
  batched.mode = UpdateMode::MiniBatch;

  CoefficientState a = initial_state(single);
  CoefficientState b = initial_state(batched);
  std::mt19937_64 rng(888);
  bool identical = true;
  for (int step = 0; step < 10000 && identical; ++step) {
    const Sample sample = draw_sample(model, rng);
    update_in_place(a, single, sample);
    const Sample batch[1] = {sample};
    update_in_place(b, batched, std::span<const Sample>(batch, 1));
    identical = bitwise_equal(a.theta, b.theta);
  }
  std::printf("%s  4 minibatch-degeneracy: 10^4 steps with n_t=1 %s\n",
              identical ? "[PASS]" : "[FAIL]",
              identical ? "bitwise identical" : "diverged");
  return identical;
}

bool criterion_5_rate_single_sample() {
  const TrueModel model = make_sobolev_truth(lab_truth_params(0.5));
  const RateSummary summary =
      rate_experiment(lab_config(0.5), model, 1 << 17, 1, 20, 1 << 10);
  const double ratio = summary.mean_error_hi / summary.mean_error_lo;
  const bool pass = summary.slope >= -1.0 && summary.slope <= -0.55 && ratio < 0.1;
  std::printf("%s  5 rate-single-sample: slope=%.3f (band [-1.0,-0.55], target -0.8), "
              "err(2^17)/err(2^10)=%.4f (< 0.1)\n",
              pass ? "[PASS]" : "[FAIL]", summary.slope, ratio);
  return pass;
}

bool criterion_6_rate_minibatch() {
  const TrueModel model = make_sobolev_truth(lab_truth_params(0.5));
  EstimatorConfig batched = lab_config(0.5);
  batched.mode = UpdateMode::MiniBatch;
  const RateSummary batch_summary =
      rate_experiment(batched, model, 1 << 17, 16, 20, 1 << 10);
  const RateSummary single_summary =
      rate_experiment(lab_config(0.5), model, 1 << 17, 1, 20, 1 << 10);
  const double final_ratio = batch_summary.mean_error_hi / single_summary.mean_error_hi;
  const bool pass = batch_summary.slope >= -1.0 && batch_summary.slope <= -0.55 &&
                    final_ratio >= 0.5 && final_ratio <= 2.0;
  std::printf("%s  6 rate-minibatch: slope=%.3f (band [-1.0,-0.55]), "
              "final err ratio vs single=%.3f (in [0.5,2])\n",
              pass ? "[PASS]" : "[FAIL]", batch_summary.slope, final_ratio);
  return pass;
}

bool criterion_7_calibration() {
  bool pass = true;
  std::printf("       7 calibration: ");
  for (const double tau : {0.25, 0.5, 0.9}) {
    const TrueModel model = make_sobolev_truth(lab_truth_params(tau));
    const EstimatorConfig config = lab_config(tau);
    std::vector<double> coverages;
    for (int s = 0; s < 10; ++s) {
      OnlineEstimator estimator(config);
      std::mt19937_64 rng(3000 + static_cast<std::uint64_t>(s));
      for (int step = 0; step < 100000; ++step) estimator.observe(draw_sample(model, rng));
      std::mt19937_64 heldout_rng(9000 + static_cast<std::uint64_t>(s));
      coverages.push_back(heldout_coverage(model, 10000, heldout_rng, [&](const Vector& x) {
        return estimator.predict_at(x);
      }));
    }
    const double median = median_of(coverages);
    const bool tau_ok = std::abs(median - tau) <= 0.03;
    pass = pass && tau_ok;
    std::printf("tau=%.2f median=%.4f%s ", tau, median, tau_ok ? "" : "(!)");
  }
  std::printf("(tolerance +-0.03)\n%s  7 calibration\n", pass ? "[PASS]" : "[FAIL]");
  return pass;
}

bool criterion_8_ensemble() {
  const EstimatorConfig config = lab_config(0.5);
  const TrueModel model = make_sobolev_truth(lab_truth_params(0.5));

  // full-mask, B = 1: bit-identical to the base learner
  EnsembleConfig full_config;
  full_config.base = config;
  full_config.replicates = 1;
  full_config.seed = 4;
  full_config.subset_rule = [](std::int64_t, Index count) { return count; };
  EnsembleEstimator full(full_config);
  CoefficientState base = initial_state(config);
  std::mt19937_64 rng(555);
  bool identical = true;
  for (int step = 0; step < 5000 && identical; ++step) {
    const Sample sample = draw_sample(model, rng);
    update_in_place(base, config, sample);
    full.observe(sample);
    identical = bitwise_equal(base.theta, full.replicate_states()[0].theta);
  }

  // half mask, B = 8: per-replicate feasibility plus the sup-norm bound
  EnsembleConfig half_config;
  half_config.base = config;
  half_config.replicates = 8;
  half_config.seed = 5;
  EnsembleEstimator half(half_config);
  GridEvaluator grid(config.basis, 32);
  const double radius_tol = config.l1_radius + 1e-9;
  const double sup_tol = M_SQRT2 * config.l1_radius + 1e-6;
  bool feasible = true;
  std::mt19937_64 feas_rng(556);
  for (int step = 0; step < 100000 && feasible; ++step) {
    half.observe(draw_sample(model, feas_rng));
    for (const CoefficientState& replicate : half.replicate_states())
      feasible = feasible && replicate.theta.lpNorm<1>() <= radius_tol;
    if (step % 10 == 0) {
      feasible = feasible && grid.max_abs(half.mean_state()) <= sup_tol;
      for (const CoefficientState& replicate : half.replicate_states())
        feasible = feasible && grid.max_abs(replicate) <= sup_tol;
    }
  }

  // half mask, B = 8: held-out calibration as in criterion 7
  bool calibrated = true;
  for (const double tau : {0.25, 0.5, 0.9}) {
    const TrueModel tau_model = make_sobolev_truth(lab_truth_params(tau));
    EnsembleConfig run_config;
    run_config.base = lab_config(tau);
    run_config.replicates = 8;
    std::vector<double> coverages;
    for (int s = 0; s < 10; ++s) {
      run_config.seed = 40 + static_cast<std::uint64_t>(s);
      EnsembleEstimator ensemble(run_config);
      std::mt19937_64 stream(5000 + static_cast<std::uint64_t>(s));
      for (int step = 0; step < 100000; ++step) ensemble.observe(draw_sample(tau_model, stream));
      std::mt19937_64 heldout_rng(9500 + static_cast<std::uint64_t>(s));
      coverages.push_back(heldout_coverage(tau_model, 10000, heldout_rng, [&](const Vector& x) {
        return ensemble.predict_at(x);
      }));
    }
    calibrated = calibrated && std::abs(median_of(coverages) - tau) <= 0.03;
  }

  const bool pass = identical && feasible && calibrated;
  std::printf("%s  8 ensemble: full-mask %s, masked feasibility %s, masked calibration %s\n",
              pass ? "[PASS]" : "[FAIL]", identical ? "bit-identical" : "diverged",
              feasible ? "ok" : "violated", calibrated ? "ok" : "off");
  return pass;
}

bool criterion_9_complexity() {
  EstimatorConfig config;
  config.tau = 0.5;
  config.l1_radius = 1.0;
  config.step_scale = 1.0;
  config.smoothness = 0.51;  // fast-growing schedule reaches J = 10^4
  config.basis = BasisSpec::trigonometric(1);

  const std::vector<Index> targets{16, 32, 64, 128, 256, 512, 1024, 2048, 4096, 8192, 10000};
  std::vector<double> update_x, update_y, predict_x, predict_y;
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  for (const Index target : targets) {
    // smallest t whose schedule lands on the target dimension
    std::int64_t lo = 1, hi = 1;
    while (truncation_dim(config, hi) < target) hi *= 2;
    while (lo < hi) {
      const std::int64_t mid = lo + (hi - lo) / 2;
      if (truncation_dim(config, mid) < target)
        lo = mid + 1;
      else
        hi = mid;
    }
    const std::int64_t t0 = lo;

    CoefficientState state = initial_state(config);
    state.t = t0 - 1;
    state.n_seen = t0 - 1;
    align_in_place(state, truncation_dim(config, std::max<std::int64_t>(1, t0 - 1)));
    for (Index i = 0; i < state.theta.size(); ++i) state.theta[i] = unit(rng) - 0.5;
    state.theta *= 0.9 * config.l1_radius / state.theta.lpNorm<1>();

    Sample sample;
    sample.x = Vector(1);
    sample.x << 0.371;
    sample.y = 1.0;

    const int update_reps = static_cast<int>(std::clamp<Index>(2000000 / target, 16, 300));
    std::vector<double> durations;
    for (int rep = 0; rep < update_reps; ++rep) {
      CoefficientState copy = state;
      const auto t_start = Clock::now();
      update_in_place(copy, config, sample);
      durations.push_back(std::chrono::duration<double>(Clock::now() - t_start).count());
    }
    update_x.push_back(static_cast<double>(target) * std::log(static_cast<double>(target)));
    update_y.push_back(median_of(durations));

    align_in_place(state, target);
    const int predict_reps = static_cast<int>(std::clamp<Index>(4000000 / target, 16, 400));
    durations.clear();
    volatile double sink = 0.0;
    for (int rep = 0; rep < predict_reps; ++rep) {
      const auto t_start = Clock::now();
      double acc = 0.0;
      for (int inner = 0; inner < 8; ++inner) acc += predict(state, config.basis, sample.x);
      durations.push_back(std::chrono::duration<double>(Clock::now() - t_start).count() / 8.0);
      sink = sink + acc;
    }
    predict_x.push_back(static_cast<double>(target));
    predict_y.push_back(median_of(durations));
  }

  const Fit update_fit = linear_fit(update_x, update_y);
  const Fit predict_fit = linear_fit(predict_x, predict_y);
  const bool pass = update_fit.slope > 0.0 && update_fit.r_squared > 0.9 &&
                    predict_fit.slope > 0.0 && predict_fit.r_squared > 0.9;
  std::printf("%s  9 complexity: update vs J logJ R^2=%.4f, predict vs J R^2=%.4f "
              "(both > 0.9, positive slopes)\n",
              pass ? "[PASS]" : "[FAIL]", update_fit.r_squared, predict_fit.r_squared);
  return pass;
}

bool criterion_10_exact_error_oracle() {
  TruthParams truth_params = lab_truth_params(0.5);
  truth_params.dims = 1;
  const TrueModel model = make_sobolev_truth(truth_params);

  const int points = 1000000;
  std::mt19937_64 rng(6001);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> xs(points), truth(points);
  for (int i = 0; i < points; ++i) {
    xs[i] = unit(rng);
    Vector x(1);
    x << xs[i];
    truth[i] = model.quantile_function(x);
  }

  bool pass = true;
  double worst_sigmas = 0.0;
  Vector psi;
  for (int state_index = 0; state_index < 20; ++state_index) {
    CoefficientState state;
    state.dims = 1;
    state.basis_dim = 1 + static_cast<Index>(rng() % 16);
    state.theta = Vector::Zero(1 + state.basis_dim);
    for (Index i = 0; i < state.theta.size(); ++i) state.theta[i] = 1.2 * (unit(rng) - 0.5);

    double mean = 0.0, m2 = 0.0;
    for (int i = 0; i < points; ++i) {
      Vector x(1);
      x << xs[i];
      eval_basis_vector<double>(model.basis, state.basis_dim, x, psi);
      const double gap = state.theta.dot(psi) - truth[i];
      const double sq = gap * gap;
      const double delta = sq - mean;
      mean += delta / (i + 1);
      m2 += delta * (sq - mean);
    }
    const double se = std::sqrt(m2 / points) / std::sqrt(static_cast<double>(points));
    const double sigmas = std::abs(exact_l2_error(state, model) - mean) / se;
    worst_sigmas = std::max(worst_sigmas, sigmas);
    pass = pass && sigmas <= 3.0;
  }
  std::printf("%s 10 exact-error-oracle: worst |exact - MC| = %.2f standard errors (<= 3)\n",
              pass ? "[PASS]" : "[FAIL]", worst_sigmas);
  return pass;
}

}  // namespace

int main(int argc, char** argv) {
  using Criterion = bool (*)();
  const std::vector<Criterion> criteria{
      criterion_1_projection_oracle, criterion_2_basis_quadrature,
      criterion_3_deterministic_feasibility, criterion_4_minibatch_degeneracy,
      criterion_5_rate_single_sample, criterion_6_rate_minibatch,
      criterion_7_calibration, criterion_8_ensemble,
      criterion_9_complexity, criterion_10_exact_error_oracle};

  int failures = 0;
  if (argc > 1) {
    const int which = std::atoi(argv[1]);
    if (which < 1 || which > static_cast<int>(criteria.size())) {
      std::fprintf(stderr, "usage: %s [1..%zu]\n", argv[0], criteria.size());
      return 64;
    }
    failures += criteria[static_cast<std::size_t>(which - 1)]() ? 0 : 1;
  } else {
    for (const Criterion& criterion : criteria) failures += criterion() ? 0 : 1;
  }
  return failures;
}
