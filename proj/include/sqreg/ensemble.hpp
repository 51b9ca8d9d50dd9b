#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "sqreg/estimator.hpp"

namespace sqreg {

namespace detail {

// Unbiased bounded draw by rejection; keeps coordinate selection independent
// of standard-library distribution internals.
template <typename Rng>
inline std::uint64_t uniform_below(Rng& rng, std::uint64_t bound) {
  const std::uint64_t limit =
      std::numeric_limits<std::uint64_t>::max() -
      std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t draw = rng();
  while (draw >= limit) draw = rng();
  return draw % bound;
}

inline std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace detail

// Uniform random subset of {0, ..., count_available-1} of the given size,
// without replacement, returned sorted. Deterministic given the rng state.
template <typename Rng>
inline std::vector<Index> select_coordinates(Index count_available, Index subset_size,
                                             Rng& rng) {
  if (subset_size < 1 || subset_size > count_available)
    throw std::invalid_argument("select_coordinates: subset size out of bounds");
  std::vector<Index> pool(static_cast<std::size_t>(count_available));
  std::iota(pool.begin(), pool.end(), Index{0});
  for (Index i = 0; i < subset_size; ++i) {
    const Index j =
        i + static_cast<Index>(detail::uniform_below(rng, static_cast<std::uint64_t>(count_available - i)));
    std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
  }
  pool.resize(static_cast<std::size_t>(subset_size));
  std::sort(pool.begin(), pool.end());
  return pool;
}

// Single-sample update restricted to the masked coordinates: unmasked entries
// receive zero gradient, then the full vector is projected as usual.
inline CoefficientState update_masked(CoefficientState state, const EstimatorConfig& config,
                                      const Sample& sample, std::span<const Index> mask) {
  if (mask.empty()) throw std::invalid_argument("update_masked: mask must be nonempty");
  detail::step_impl(state, config, {&sample, 1}, mask, nullptr);
  return state;
}

// Arithmetic mean of the replicate predictions at x.
inline double ensemble_predict(std::span<const CoefficientState> replicates,
                               const BasisSpec& basis, const Eigen::Ref<const Vector>& x) {
  if (replicates.empty()) throw std::invalid_argument("ensemble_predict: no replicates");
  const Index dim = replicates.front().theta.size();
  for (const CoefficientState& state : replicates)
    if (state.theta.size() != dim || state.dims != replicates.front().dims ||
        state.basis_dim != replicates.front().basis_dim)
      throw std::invalid_argument("ensemble_predict: replicate layout mismatch");
  double sum = 0.0;
  for (const CoefficientState& state : replicates) sum += predict(state, basis, x);
  return sum / static_cast<double>(replicates.size());
}

struct EnsembleConfig {
  EstimatorConfig base;
  int replicates = 1;
  std::uint64_t seed = 0;
  // t, coordinate count -> subset size S_t; null means ceil(count/2)
  std::function<Index(std::int64_t, Index)> subset_rule;
  bool always_include_intercept = false;
};

// Bank of replicate learners on a shared sample stream. Randomness enters
// only through per-replicate coordinate selection; a replicate whose subset
// covers every coordinate reproduces the base learner exactly.
class EnsembleEstimator {
 public:
  explicit EnsembleEstimator(EnsembleConfig config)
      : EnsembleEstimator(std::move(config), {}) {}

  EnsembleEstimator(EnsembleConfig config, std::vector<std::uint64_t> replicate_seeds)
      : config_(std::move(config)) {
    config_.base.validate();
    if (config_.base.mode != UpdateMode::SingleSample)
      throw std::invalid_argument("ensemble: base config must be single-sample mode");
    if (config_.replicates < 1)
      throw std::invalid_argument("ensemble: replicates must be >= 1");
    if (!replicate_seeds.empty() &&
        replicate_seeds.size() != static_cast<std::size_t>(config_.replicates))
      throw std::invalid_argument("ensemble: seed list size mismatch");
    for (int r = 0; r < config_.replicates; ++r) {
      states_.push_back(initial_state(config_.base));
      const std::uint64_t seed = replicate_seeds.empty()
                                     ? detail::splitmix64(config_.seed + static_cast<std::uint64_t>(r))
                                     : replicate_seeds[static_cast<std::size_t>(r)];
      rngs_.emplace_back(seed);
    }
  }

  void observe(const Sample& sample) {
    detail::validate_sample(config_.base, sample);
    prequential_.add(pinball_loss(config_.base.tau, sample.y - predict_at(sample.x)));
    for (int r = 0; r < config_.replicates; ++r) {
      CoefficientState& state = states_[static_cast<std::size_t>(r)];
      const std::int64_t t_next = state.t + 1;
      const Index dim_next = 1 + state.dims * truncation_dim(config_.base, t_next);
      Index subset = config_.subset_rule ? config_.subset_rule(t_next, dim_next)
                                         : (dim_next + 1) / 2;
      subset = std::clamp<Index>(subset, 1, dim_next);
      if (subset == dim_next) {
        detail::step_impl(state, config_.base, {&sample, 1}, {}, nullptr);
        continue;
      }
      std::vector<Index> mask;
      auto& rng = rngs_[static_cast<std::size_t>(r)];
      if (config_.always_include_intercept) {
        mask.push_back(0);
        if (subset > 1) {
          std::vector<Index> rest = select_coordinates(dim_next - 1, subset - 1, rng);
          for (Index idx : rest) mask.push_back(idx + 1);
        }
      } else {
        mask = select_coordinates(dim_next, subset, rng);
      }
      detail::step_impl(state, config_.base, {&sample, 1}, mask, nullptr);
    }
  }

  double predict_at(const Eigen::Ref<const Vector>& x) const {
    return ensemble_predict(states_, config_.base.basis, x);
  }

  // Coefficient average of the replicates; because prediction is linear in
  // the coefficients this state predicts exactly the ensemble mean.
  CoefficientState mean_state() const {
    CoefficientState mean = states_.front();
    for (std::size_t r = 1; r < states_.size(); ++r) mean.theta += states_[r].theta;
    mean.theta /= static_cast<double>(states_.size());
    return mean;
  }

  const EnsembleConfig& config() const { return config_; }
  std::span<const CoefficientState> replicate_states() const { return states_; }
  const RunningMean& streamed_pinball() const { return prequential_; }

 private:
  EnsembleConfig config_;
  std::vector<CoefficientState> states_;
  std::vector<std::mt19937_64> rngs_;
  RunningMean prequential_;
};

}  // namespace sqreg
