#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>

#include "sqreg/basis.hpp"

namespace sqreg {

template <typename Scalar>
struct ProjectionResult {
  VectorX<Scalar> v;          // the projected vector
  Scalar lambda = Scalar(0);  // soft-threshold level (0 when interior)
  bool was_interior = false;  // input already inside the ball, returned as-is
};

namespace detail {

template <typename Scalar>
inline void check_projection_args(const Eigen::Ref<const VectorX<Scalar>>& u, Scalar radius) {
  if (!(radius > Scalar(0))) throw std::invalid_argument("l1_project: radius must be > 0");
  if (!u.allFinite()) throw std::invalid_argument("l1_project: input must be finite");
}

template <typename Scalar>
inline Scalar sgn(Scalar v) {
  return (v > Scalar(0)) ? Scalar(1) : (v < Scalar(0) ? Scalar(-1) : Scalar(0));
}

// One pass of the sort-and-scan simplex routine on an exterior input:
// sort |u_i| descending, scan for the pivot rho with
// lambda = (sum of the rho largest - radius)/rho, soft-threshold at lambda
// and restore signs (sgn(0) = 0). O(J log J) from the sort.
template <typename Scalar>
inline Scalar exterior_threshold(const Eigen::Ref<const VectorX<Scalar>>& u, Scalar radius) {
  const Index n = u.size();
  VectorX<Scalar> sorted = u.cwiseAbs();
  std::sort(sorted.data(), sorted.data() + n, std::greater<Scalar>());

  Scalar running = Scalar(0);
  for (Index j = 0; j < n; ++j) {
    running += sorted[j];
    const Scalar candidate = (running - radius) / Scalar(j + 1);
    // The last-index guard must short-circuit: sorted[j + 1] does not exist there.
    if (j == n - 1 || candidate >= sorted[j + 1]) return candidate;
  }
  return Scalar(0);  // unreachable
}

}  // namespace detail

// Exact Euclidean projection of u onto {theta : ||theta||_1 <= radius}.
// Interior inputs are returned unchanged, so callers can apply this
// unconditionally. Exterior inputs go through the sort-and-scan threshold
// search; lambda reports the accumulated soft-threshold level.
template <typename Scalar>
inline ProjectionResult<Scalar> l1_project(const Eigen::Ref<const VectorX<Scalar>>& u,
                                           Scalar radius) {
  detail::check_projection_args<Scalar>(u, radius);
  ProjectionResult<Scalar> result;
  if (u.template lpNorm<1>() <= radius) {
    result.v = u;
    result.was_interior = true;
    return result;
  }

  const Index n = u.size();
  VectorX<Scalar> mags = u.cwiseAbs();
  Scalar lambda_total =
      std::max(detail::exterior_threshold<Scalar>(mags, radius), Scalar(0));
  mags = (mags.array() - lambda_total).max(Scalar(0)).matrix();

  const auto rebuild = [&] {
    result.v.resize(n);
    for (Index i = 0; i < n; ++i) result.v[i] = detail::sgn(u[i]) * mags[i];
  };
  rebuild();

  // Rounding in the soft-threshold can leave the image an ulp outside the
  // ball; shave the residual until the reduction used by the interior test
  // reports feasibility, which makes the projection an exact fixed point.
  for (int pass = 0; pass < 10; ++pass) {
    const Scalar norm1 = result.v.template lpNorm<1>();
    if (norm1 <= radius) break;
    const Index active = (mags.array() > Scalar(0)).count();
    if (active == 0) break;
    const Scalar shave = (norm1 - radius) / Scalar(active);
    if (!(shave > Scalar(0))) break;
    mags = (mags.array() - shave).max(Scalar(0)).matrix();
    lambda_total += shave;
    rebuild();
  }

  result.lambda = lambda_total;
  return result;
}

// Independent reference projection: bisection on the threshold level over
// [0, max|u_i|] using the monotone map lambda -> sum_i max(|u_i| - lambda, 0),
// run to 1e-12 absolute tolerance on the l1 constraint. No sorting; used to
// cross-check l1_project.
template <typename Scalar>
inline VectorX<Scalar> l1_project_oracle(const Eigen::Ref<const VectorX<Scalar>>& u,
                                         Scalar radius) {
  detail::check_projection_args<Scalar>(u, radius);
  if (u.template lpNorm<1>() <= radius) return u;

  const VectorX<Scalar> mags = u.cwiseAbs();
  const auto shrunk_norm = [&](Scalar lambda) {
    return (mags.array() - lambda).max(Scalar(0)).sum();
  };

  Scalar lo = Scalar(0);
  Scalar hi = mags.maxCoeff();
  for (int iter = 0; iter < 200; ++iter) {
    const Scalar mid = (lo + hi) / Scalar(2);
    if (shrunk_norm(mid) > radius)
      lo = mid;
    else
      hi = mid;
    if (hi - lo < Scalar(1e-15) && std::abs(shrunk_norm(hi) - radius) < Scalar(1e-12)) break;
  }
  const Scalar lambda = (lo + hi) / Scalar(2);

  VectorX<Scalar> v(u.size());
  for (Index i = 0; i < u.size(); ++i)
    v[i] = detail::sgn(u[i]) * std::max(mags[i] - lambda, Scalar(0));
  return v;
}

}  // namespace sqreg
