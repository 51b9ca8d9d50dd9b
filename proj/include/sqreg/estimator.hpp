#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <utility>

#include "sqreg/basis.hpp"
#include "sqreg/projection.hpp"

namespace sqreg {

enum class UpdateMode { SingleSample, MiniBatch };

struct EstimatorConfig {
  double tau = 0.5;        // target quantile, in (0,1)
  double l1_radius = 1.0;  // radius of the coefficient ball
  double step_scale = 1.0; // step-size constant: gamma_t = step_scale/t (or *n_t/N_t)
  double smoothness = 2.0; // known smoothness degree, > 1/2
  BasisSpec basis = BasisSpec::trigonometric(1);
  UpdateMode mode = UpdateMode::SingleSample;

  Index dims() const { return basis.dims; }

  void validate() const {
    if (!(tau > 0.0 && tau < 1.0)) throw std::invalid_argument("config: tau must be in (0,1)");
    if (!(l1_radius > 0.0)) throw std::invalid_argument("config: l1_radius must be > 0");
    if (!(step_scale > 0.0)) throw std::invalid_argument("config: step_scale must be > 0");
    if (!(smoothness > 0.5)) throw std::invalid_argument("config: smoothness must be > 1/2");
    if (basis.dims < 1) throw std::invalid_argument("config: basis dims must be >= 1");
  }
};

// Heuristic scale for the step-size constant; the theory only asks for a
// sufficiently large constant, so this is advisory and always overridable.
inline double default_step_scale(double tau) { return 1.0 / (tau * (1.0 - tau)); }

struct Sample {
  Vector x;  // covariates in [0,1]^p
  double y = 0.0;
};

using MiniBatch = std::vector<Sample>;

// Learner state: intercept slot plus `dims` contiguous blocks of `basis_dim`
// coefficients, laid out exactly as eval_basis_vector. l1-feasible after
// every completed update.
struct CoefficientState {
  Vector theta = Vector::Zero(1);
  Index dims = 1;           // number of covariate blocks p
  Index basis_dim = 0;      // J: basis functions per covariate, non-decreasing
  std::int64_t t = 0;       // completed updates
  std::int64_t n_seen = 0;  // cumulative samples (equals t in single-sample mode)
};

inline CoefficientState initial_state(const EstimatorConfig& config) {
  config.validate();
  CoefficientState state;
  state.dims = config.dims();
  return state;
}

// rho_tau(u) = u * (tau - 1{u <= 0}); nonnegative, zero only at u = 0.
inline double pinball_loss(double tau, double u) {
  return u * (tau - (u <= 0.0 ? 1.0 : 0.0));
}

// Scalar factor of the pinball subgradient. Ties y == yhat take the
// indicator value 1, so the result is tau - 1.
inline double subgradient_scalar(double tau, double y, double yhat) {
  return tau - (y <= yhat ? 1.0 : 0.0);
}

inline double step_size(const EstimatorConfig& config, std::int64_t t,
                        std::int64_t n_t = 1, std::int64_t cum_n = -1) {
  if (t < 1) throw std::invalid_argument("step_size: t must be >= 1");
  if (config.mode == UpdateMode::SingleSample)
    return config.step_scale / static_cast<double>(t);
  if (cum_n < 0) cum_n = n_t;
  if (n_t < 1 || cum_n < n_t) throw std::invalid_argument("step_size: need n_t >= 1 and N_t >= n_t");
  // (A * n) / N so that n_t = 1 reproduces the single-sample A / t bitwise.
  return config.step_scale * static_cast<double>(n_t) / static_cast<double>(cum_n);
}

// Smallest J with J^(2s+1) >= count, i.e. ceil(count^(1/(2s+1))), computed
// robustly against pow() rounding at exact integer powers.
inline Index truncation_dim(const EstimatorConfig& config, std::int64_t count) {
  if (count < 1) throw std::invalid_argument("truncation_dim: argument must be >= 1");
  const double order = 2.0 * config.smoothness + 1.0;
  const double root = std::pow(static_cast<double>(count), 1.0 / order);
  Index j = std::max<Index>(1, static_cast<Index>(std::floor(root)) - 1);
  while (std::pow(static_cast<double>(j), order) <
         static_cast<double>(count) * (1.0 - 1e-12))
    ++j;
  return j;
}

// Grows theta from basis_dim to new_dim by inserting zeros so every existing
// coefficient keeps its (covariate, index) slot. The l1 norm and all
// predictions are unchanged.
inline void align_in_place(CoefficientState& state, Index new_dim) {
  if (new_dim < state.basis_dim)
    throw std::invalid_argument("align_dimension: truncation dimension cannot shrink");
  if (new_dim == state.basis_dim) return;
  Vector wide = Vector::Zero(1 + state.dims * new_dim);
  wide[0] = state.theta[0];
  for (Index k = 0; k < state.dims; ++k)
    wide.segment(1 + k * new_dim, state.basis_dim) =
        state.theta.segment(1 + k * state.basis_dim, state.basis_dim);
  state.theta = std::move(wide);
  state.basis_dim = new_dim;
}

inline CoefficientState align_dimension(CoefficientState state, Index new_dim) {
  align_in_place(state, new_dim);
  return state;
}

inline double predict(const CoefficientState& state, const BasisSpec& basis,
                      const Eigen::Ref<const Vector>& x) {
  if (basis.dims != state.dims)
    throw std::invalid_argument("predict: basis/state dimension mismatch");
  const Vector psi = eval_basis_vector<double>(basis, state.basis_dim, x);
  return state.theta.dot(psi);
}

// Prequential (streamed) running mean; empty until the first observation.
class RunningMean {
 public:
  void add(double value) {
    ++count_;
    mean_ += (value - mean_) / static_cast<double>(count_);
  }
  std::optional<double> value() const {
    if (count_ == 0) return std::nullopt;
    return mean_;
  }
  std::int64_t count() const { return count_; }

  static RunningMean restore(std::int64_t count, double mean) {
    RunningMean m;
    m.count_ = count;
    m.mean_ = count == 0 ? 0.0 : mean;
    return m;
  }

 private:
  std::int64_t count_ = 0;
  double mean_ = 0.0;
};

struct StepInfo {
  double gamma = 0.0;
  Index basis_dim = 0;
  double yhat = 0.0;  // pre-update prediction of the first sample
  double lambda = 0.0;
  bool was_interior = false;
};

namespace detail {

inline void validate_sample(const EstimatorConfig& config, const Sample& sample) {
  if (sample.x.size() != config.dims())
    throw std::invalid_argument("sample: covariate dimension mismatch");
  for (Index k = 0; k < sample.x.size(); ++k)
    if (!(sample.x[k] >= 0.0 && sample.x[k] <= 1.0))
      throw std::domain_error("sample: covariate outside [0,1]");
  if (!std::isfinite(sample.y)) throw std::invalid_argument("sample: y must be finite");
}

// Shared update path. One code path serves single-sample, mini-batch and
// coordinate-masked updates so their degeneracies (n_t = 1, full mask) are
// bitwise exact. A full-span or empty mask means "update every coordinate".
// All samples are validated before any state mutation.
inline StepInfo step_impl(CoefficientState& state, const EstimatorConfig& config,
                          std::span<const Sample> batch, std::span<const Index> mask,
                          RunningMean* prequential) {
  config.validate();
  if (batch.empty()) throw std::invalid_argument("update: batch must be nonempty");
  if (config.mode == UpdateMode::SingleSample && batch.size() != 1)
    throw std::invalid_argument("update: single-sample mode takes one sample per step");
  if (state.dims != config.dims())
    throw std::invalid_argument("update: state/config dimension mismatch");
  for (const Sample& sample : batch) validate_sample(config, sample);

  const std::int64_t t = state.t + 1;
  const std::int64_t n_t = static_cast<std::int64_t>(batch.size());
  const std::int64_t cum_n = state.n_seen + n_t;
  const std::int64_t schedule_count = config.mode == UpdateMode::SingleSample ? t : cum_n;
  const Index new_dim = truncation_dim(config, schedule_count);
  if (new_dim < state.basis_dim)
    throw std::logic_error("update: truncation schedule decreased");

  const Index full = 1 + state.dims * new_dim;
  for (Index idx : mask)
    if (idx < 0 || idx >= full) throw std::invalid_argument("update: mask index out of range");

  align_in_place(state, new_dim);
  const double gamma = step_size(config, t, n_t, cum_n);

  StepInfo info;
  info.gamma = gamma;
  info.basis_dim = new_dim;

  Vector grad = Vector::Zero(full);
  Vector psi;
  bool first = true;
  for (const Sample& sample : batch) {
    eval_basis_vector<double>(config.basis, new_dim, sample.x, psi);
    const double yhat = state.theta.dot(psi);
    if (first) {
      info.yhat = yhat;
      first = false;
    }
    if (prequential) prequential->add(pinball_loss(config.tau, sample.y - yhat));
    grad.noalias() += subgradient_scalar(config.tau, sample.y, yhat) * psi;
  }
  grad /= static_cast<double>(n_t);

  const bool full_mask = mask.empty() || static_cast<Index>(mask.size()) >= full;
  if (!full_mask) {
    Vector masked = Vector::Zero(full);
    for (Index idx : mask) masked[idx] = grad[idx];
    grad = std::move(masked);
  }

  const Vector unconstrained = state.theta + gamma * grad;
  ProjectionResult<double> projected = l1_project<double>(unconstrained, config.l1_radius);
  state.theta = std::move(projected.v);
  state.t = t;
  state.n_seen = cum_n;
  info.lambda = projected.lambda;
  info.was_interior = projected.was_interior;
  return info;
}

}  // namespace detail

inline StepInfo update_in_place(CoefficientState& state, const EstimatorConfig& config,
                                const Sample& sample, RunningMean* prequential = nullptr) {
  return detail::step_impl(state, config, {&sample, 1}, {}, prequential);
}

inline StepInfo update_in_place(CoefficientState& state, const EstimatorConfig& config,
                                std::span<const Sample> batch,
                                RunningMean* prequential = nullptr) {
  return detail::step_impl(state, config, batch, {}, prequential);
}

// One step of the single-sample learner: t <- t+1, grow J on schedule,
// zero-pad, predict with the pre-update coefficients, take the pinball
// subgradient step, then project back onto the l1 ball.
inline CoefficientState update_single(CoefficientState state, const EstimatorConfig& config,
                                      const Sample& sample) {
  if (config.mode != UpdateMode::SingleSample)
    throw std::invalid_argument("update_single: config mode must be SingleSample");
  update_in_place(state, config, sample);
  return state;
}

// Mini-batch step: the schedules run on the cumulative sample count and the
// gradient is the batch average, every residual indicator evaluated against
// the same pre-update predictor.
inline CoefficientState update_batch(CoefficientState state, const EstimatorConfig& config,
                                     std::span<const Sample> batch) {
  if (config.mode != UpdateMode::MiniBatch)
    throw std::invalid_argument("update_batch: config mode must be MiniBatch");
  update_in_place(state, config, batch);
  return state;
}

// Streaming front end owning the state and the prequential loss: each call
// scores the incoming data with the pre-update predictor, then updates.
class OnlineEstimator {
 public:
  explicit OnlineEstimator(EstimatorConfig config)
      : config_(std::move(config)), state_(initial_state(config_)) {}

  StepInfo observe(const Sample& sample) {
    return update_in_place(state_, config_, sample, &prequential_);
  }
  StepInfo observe(std::span<const Sample> batch) {
    return update_in_place(state_, config_, batch, &prequential_);
  }

  double predict_at(const Eigen::Ref<const Vector>& x) const {
    return predict(state_, config_.basis, x);
  }

  const EstimatorConfig& config() const { return config_; }
  const CoefficientState& state() const { return state_; }
  const RunningMean& streamed_pinball() const { return prequential_; }

  // Cheap snapshot for concurrent readers; the live state stays single-owner.
  CoefficientState snapshot() const { return state_; }

  void restore(CoefficientState state, RunningMean prequential) {
    state_ = std::move(state);
    prequential_ = prequential;
  }

 private:
  EstimatorConfig config_;
  CoefficientState state_;
  RunningMean prequential_;
};

}  // namespace sqreg
