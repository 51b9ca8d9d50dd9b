#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "sqreg/estimator.hpp"
#include "sqreg/noise.hpp"

namespace sqreg::simlab {

namespace detail {

// uniform draw on [0,1)
template <typename Rng>
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// sin/cos of 2*pi*k*x for k = 1..K by angle-addition recurrence; avoids K
// libm calls per evaluation of a long coefficient series. The drift is
// O(K*eps), far below the lab's statistical tolerances.
struct TrigRecurrence {
  double s, c, s1, c1;
  explicit TrigRecurrence(double x) {
    const double angle = 2.0 * M_PI * x;
    s1 = std::sin(angle);
    c1 = std::cos(angle);
    s = s1;
    c = c1;
  }
  void advance() {
    const double s_next = s * c1 + c * s1;
    const double c_next = c * c1 - s * s1;
    s = s_next;
    c = c_next;
  }
};

}  // namespace detail

// Synthetic ground truth: an additive quantile model with per-covariate
// coefficient series of known smoothness, plus a noise law whose quantiles
// are available in closed form.
struct TrueModel {
  Index dims = 1;
  double smoothness = 2.0;
  double intercept = 0.0;
  std::vector<Vector> coeffs;  // one truncated series per covariate
  NoiseLaw noise = NoiseLaw::gaussian(1.0);
  double tau = 0.5;
  double tau_shift = 0.0;  // noise quantile at tau
  BasisSpec basis = BasisSpec::trigonometric(1);

  Index truth_dim() const { return coeffs.empty() ? 0 : coeffs.front().size(); }

  // f_k(x) = sum_j theta*_{k,j} psi_j(x), evaluated by recurrence.
  double component(Index k, double x) const {
    const Vector& series = coeffs[static_cast<std::size_t>(k)];
    const Index count = series.size();
    detail::TrigRecurrence trig(x);
    double acc = 0.0;
    for (Index j = 1; j <= count; j += 2) {
      acc += series[j - 1] * M_SQRT2 * trig.s;
      if (j + 1 <= count) acc += series[j] * M_SQRT2 * trig.c;
      trig.advance();
    }
    return acc;
  }

  double regression(const Eigen::Ref<const Vector>& x) const {
    double value = intercept;
    for (Index k = 0; k < dims; ++k) value += component(k, x[k]);
    return value;
  }

  // conditional tau-quantile of Y given X = x
  double quantile_function(const Eigen::Ref<const Vector>& x) const {
    return regression(x) + tau_shift;
  }

  double sobolev_norm_sq(Index k) const {
    const Vector& series = coeffs[static_cast<std::size_t>(k)];
    double acc = 0.0;
    for (Index j = 1; j <= series.size(); ++j)
      acc += std::pow(static_cast<double>(j), 2.0 * smoothness) * series[j - 1] * series[j - 1];
    return acc;
  }

  double l1_total() const {
    double acc = std::abs(intercept);
    for (const Vector& series : coeffs) acc += series.lpNorm<1>();
    return acc;
  }

  // sum over covariates of sum_{j > head_dim} theta*^2
  double tail_energy(Index head_dim) const {
    double acc = 0.0;
    for (const Vector& series : coeffs) {
      const Index from = std::min<Index>(head_dim, series.size());
      acc += series.tail(series.size() - from).squaredNorm();
    }
    return acc;
  }
};

struct TruthParams {
  Index dims = 1;
  double smoothness = 2.0;
  double sobolev_radius = 1.0;  // Q
  double l1_radius = 1.0;       // R, shared with the learner config
  std::uint64_t seed = 0;
  NoiseLaw noise = NoiseLaw::gaussian(1.0);
  double tau = 0.5;
  Index truth_dim = 2000;       // series truncation; tail beyond is negligible
  double decay_margin = 0.6;    // decay exponent is smoothness + decay_margin
  double l1_fraction = 0.9;     // headroom inside the learner's ball
};

// Draws per-covariate coefficients theta*_{k,j} = c_k * zeta_{k,j} * j^-(s+m)
// with zeta a random sign times a magnitude in [0.5, 1], scales each series
// onto the Sobolev sphere of radius Q, then shrinks everything uniformly if
// the total l1 mass would exceed the allotted fraction of R.
inline TrueModel make_sobolev_truth(const TruthParams& params) {
  if (!(params.smoothness > 0.5))
    throw std::invalid_argument("make_sobolev_truth: smoothness must be > 1/2");
  if (params.dims < 1 || params.truth_dim < 1)
    throw std::invalid_argument("make_sobolev_truth: dims and truth_dim must be >= 1");
  if (!(params.sobolev_radius > 0.0) || !(params.l1_radius > 0.0))
    throw std::invalid_argument("make_sobolev_truth: radii must be > 0");

  std::mt19937_64 rng(params.seed);
  TrueModel model;
  model.dims = params.dims;
  model.smoothness = params.smoothness;
  model.noise = params.noise;
  model.tau = params.tau;
  model.tau_shift = params.noise.quantile(params.tau);
  model.basis = BasisSpec::trigonometric(params.dims);
  model.intercept = detail::uniform01(rng) - 0.5;

  const double budget = params.l1_fraction * params.l1_radius - std::abs(model.intercept);
  if (budget <= 0.0)
    throw std::invalid_argument("make_sobolev_truth: infeasible (Q,R) combination");

  double l1_mass = 0.0;
  for (Index k = 0; k < params.dims; ++k) {
    Vector series(params.truth_dim);
    for (Index j = 1; j <= params.truth_dim; ++j) {
      const double magnitude = 0.5 + 0.5 * detail::uniform01(rng);
      const double sign = detail::uniform01(rng) < 0.5 ? -1.0 : 1.0;
      series[j - 1] = sign * magnitude *
                      std::pow(static_cast<double>(j),
                               -(params.smoothness + params.decay_margin));
    }
    double sobolev_sq = 0.0;
    for (Index j = 1; j <= params.truth_dim; ++j)
      sobolev_sq += std::pow(static_cast<double>(j), 2.0 * params.smoothness) *
                    series[j - 1] * series[j - 1];
    series *= params.sobolev_radius / std::sqrt(sobolev_sq);
    l1_mass += series.lpNorm<1>();
    model.coeffs.push_back(std::move(series));
  }

  if (l1_mass > budget) {
    const double shrink = budget / l1_mass;
    for (Vector& series : model.coeffs) series *= shrink;
  }
  return model;
}

template <typename Rng>
inline Sample draw_sample(const TrueModel& model, Rng& rng) {
  Sample sample;
  sample.x.resize(model.dims);
  for (Index k = 0; k < model.dims; ++k) sample.x[k] = detail::uniform01(rng);
  sample.y = model.regression(sample.x) + model.noise.sample(rng);
  return sample;
}

template <typename Rng>
inline std::vector<Sample> sample_stream(const TrueModel& model, std::int64_t count, Rng& rng) {
  std::vector<Sample> stream;
  stream.reserve(static_cast<std::size_t>(count));
  for (std::int64_t i = 0; i < count; ++i) stream.push_back(draw_sample(model, rng));
  return stream;
}

struct L2ErrorBreakdown {
  double total = 0.0;
  double intercept_sq = 0.0;  // (theta_0 - alpha - tau_shift)^2
  double head_sq = 0.0;       // coefficient differences up to the state's J
  double tail_sq = 0.0;       // truth energy beyond the state's J
};

// Exact squared L2 distance between the fitted function and the true
// tau-quantile function, via coefficient orthonormality: intercept gap
// squared, plus head coefficient differences, plus the truth's tail energy.
// No quadrature is involved.
inline L2ErrorBreakdown exact_l2_error_breakdown(const CoefficientState& state,
                                                 const TrueModel& model) {
  if (state.dims != model.dims)
    throw std::invalid_argument("exact_l2_error: dimension mismatch");
  if (model.basis.family != BasisFamily::TrigonometricCentered)
    throw std::invalid_argument("exact_l2_error: basis family mismatch");

  L2ErrorBreakdown out;
  const double intercept_gap = state.theta[0] - model.intercept - model.tau_shift;
  out.intercept_sq = intercept_gap * intercept_gap;

  const Index truth_dim = model.truth_dim();
  for (Index k = 0; k < model.dims; ++k) {
    const Vector& series = model.coeffs[static_cast<std::size_t>(k)];
    for (Index j = 1; j <= state.basis_dim; ++j) {
      const double fitted = state.theta[1 + k * state.basis_dim + (j - 1)];
      const double truth = j <= truth_dim ? series[j - 1] : 0.0;
      const double gap = fitted - truth;
      out.head_sq += gap * gap;
    }
  }
  out.tail_sq = model.tail_energy(state.basis_dim);
  out.total = out.intercept_sq + out.head_sq + out.tail_sq;
  return out;
}

inline double exact_l2_error(const CoefficientState& state, const TrueModel& model) {
  return exact_l2_error_breakdown(state, model).total;
}

struct EvaluationReport {
  std::int64_t t = 0;
  std::int64_t n_seen = 0;
  Index basis_dim = 0;
  double gamma = 0.0;
  double l2_error_sq = 0.0;
  double streamed_pinball = 0.0;
  std::int64_t wall_time_ns = 0;
};

// {1, 2, 4, ...} up to horizon, with horizon itself always last.
inline std::vector<std::int64_t> geometric_schedule(std::int64_t horizon) {
  std::vector<std::int64_t> schedule;
  for (std::int64_t value = 1; value < horizon; value *= 2) schedule.push_back(value);
  if (horizon >= 1) schedule.push_back(horizon);
  return schedule;
}

struct ExperimentParams {
  std::int64_t horizon = 0;  // total samples to stream
  std::vector<std::int64_t> schedule;  // cumulative-sample checkpoints
  std::uint64_t seed = 0;
  std::int64_t batch_size = 1;  // used when config.mode == MiniBatch
};

// Streams synthetic samples through the learner and records an evaluation at
// every checkpoint. Checkpoints are matched against the cumulative sample
// count, so single-sample and mini-batch runs share schedules.
inline std::vector<EvaluationReport> run_experiment(const EstimatorConfig& config,
                                                    const TrueModel& model,
                                                    const ExperimentParams& params) {
  config.validate();
  if (params.batch_size < 1)
    throw std::invalid_argument("run_experiment: batch_size must be >= 1");
  OnlineEstimator estimator(config);
  std::mt19937_64 rng(params.seed);
  std::vector<EvaluationReport> reports;
  const auto start = std::chrono::steady_clock::now();
  std::size_t next_checkpoint = 0;
  auto maybe_record = [&](const StepInfo& info) {
    while (next_checkpoint < params.schedule.size() &&
           estimator.state().n_seen >= params.schedule[next_checkpoint]) {
      EvaluationReport report;
      report.t = estimator.state().t;
      report.n_seen = estimator.state().n_seen;
      report.basis_dim = estimator.state().basis_dim;
      report.gamma = info.gamma;
      report.l2_error_sq = exact_l2_error(estimator.state(), model);
      report.streamed_pinball = estimator.streamed_pinball().value().value_or(0.0);
      report.wall_time_ns = std::chrono::duration_cast<std::chrono::nanoseconds>(
                                std::chrono::steady_clock::now() - start)
                                .count();
      reports.push_back(report);
      ++next_checkpoint;
    }
  };

  if (config.mode == UpdateMode::SingleSample) {
    for (std::int64_t t = 0; t < params.horizon; ++t) {
      const Sample sample = draw_sample(model, rng);
      const StepInfo info = estimator.observe(sample);
      maybe_record(info);
    }
  } else {
    std::vector<Sample> batch;
    while (estimator.state().n_seen < params.horizon) {
      const std::int64_t remaining = params.horizon - estimator.state().n_seen;
      const std::int64_t take = std::min(params.batch_size, remaining);
      batch.clear();
      for (std::int64_t i = 0; i < take; ++i) batch.push_back(draw_sample(model, rng));
      const StepInfo info = estimator.observe(batch);
      maybe_record(info);
    }
  }
  return reports;
}

// Ordinary least-squares slope of ys against xs.
inline double ols_slope(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size() || xs.size() < 2)
    throw std::invalid_argument("ols_slope: need at least two matched points");
  const double n = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
  }
  if (sxx <= 0.0) throw std::invalid_argument("ols_slope: degenerate abscissae");
  return sxy / sxx;
}

// Least-squares slope of log(l2 error) against log(cumulative samples) over
// the half-open index window [first, last).
inline double rate_slope(std::span<const EvaluationReport> reports, std::size_t first,
                         std::size_t last) {
  if (last > reports.size() || first >= last || last - first < 3)
    throw std::invalid_argument("rate_slope: window must hold at least three reports");
  std::vector<double> xs, ys;
  for (std::size_t i = first; i < last; ++i) {
    if (i > first && reports[i].n_seen <= reports[i - 1].n_seen)
      throw std::invalid_argument("rate_slope: sample counts must strictly increase");
    xs.push_back(std::log(static_cast<double>(reports[i].n_seen)));
    ys.push_back(std::log(reports[i].l2_error_sq));
  }
  return ols_slope(xs, ys);
}

// Fraction of fresh draws falling at or below the fitted quantile surface.
template <typename Predictor, typename Rng>
inline double heldout_coverage(const TrueModel& model, std::int64_t count, Rng& rng,
                               Predictor&& predictor) {
  std::int64_t hits = 0;
  for (std::int64_t i = 0; i < count; ++i) {
    const Sample sample = draw_sample(model, rng);
    if (sample.y <= predictor(sample.x)) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(count);
}

}  // namespace sqreg::simlab
