#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>

namespace sqreg {

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Vector = VectorX<double>;
using Index = Eigen::Index;

enum class BasisFamily { TrigonometricCentered };

// Family of per-covariate centered orthonormal bases on [0,1], all sharing a
// uniform sup-norm bound. Immutable after construction.
struct BasisSpec {
  BasisFamily family = BasisFamily::TrigonometricCentered;
  Index dims = 1;          // number of covariates p
  double sup_norm = M_SQRT2;

  static BasisSpec trigonometric(Index p) {
    if (p < 1) throw std::invalid_argument("BasisSpec: dims must be >= 1");
    return BasisSpec{BasisFamily::TrigonometricCentered, p, M_SQRT2};
  }
};

namespace detail {

// Centered trigonometric basis: the constant function is dropped, so
// index 1 is sqrt(2)*sin(2*pi*x), index 2 is sqrt(2)*cos(2*pi*x), and
// index 2k-1 / 2k carry frequency k.
template <typename Scalar>
inline Scalar trig_centered(Index j, Scalar x) {
  const Index k = (j + 1) / 2;
  const Scalar angle = Scalar(2) * Scalar(M_PI) * Scalar(k) * x;
  const Scalar val = (j % 2 != 0) ? std::sin(angle) : std::cos(angle);
  return Scalar(M_SQRT2) * val;
}

}  // namespace detail

// psi_j(x) for the configured family; throws on x outside [0,1] or j < 1.
template <typename Scalar>
inline Scalar eval_univariate(const BasisSpec& spec, Index j, Scalar x) {
  if (j < 1) throw std::invalid_argument("eval_univariate: index must be >= 1");
  if (!(x >= Scalar(0) && x <= Scalar(1)))
    throw std::domain_error("eval_univariate: x outside [0,1]");
  switch (spec.family) {
    case BasisFamily::TrigonometricCentered:
      return detail::trig_centered(j, x);
  }
  throw std::logic_error("eval_univariate: unknown basis family");
}

// Assembles (1, psi_1(x^(1)), ..., psi_J(x^(1)), ..., psi_J(x^(p))) into out.
// Entry 0 is the constant 1; covariate k occupies the contiguous block
// [1 + k*J, 1 + (k+1)*J). This layout is shared with CoefficientState.
template <typename Scalar>
inline void eval_basis_vector(const BasisSpec& spec, Index num_basis,
                              const Eigen::Ref<const VectorX<Scalar>>& x,
                              VectorX<Scalar>& out) {
  if (num_basis < 0) throw std::invalid_argument("eval_basis_vector: J must be >= 0");
  if (x.size() != spec.dims)
    throw std::invalid_argument("eval_basis_vector: x has wrong dimension");
  for (Index k = 0; k < spec.dims; ++k)
    if (!(x[k] >= Scalar(0) && x[k] <= Scalar(1)))
      throw std::domain_error("eval_basis_vector: coordinate outside [0,1]");

  out.resize(1 + spec.dims * num_basis);
  out[0] = Scalar(1);
  for (Index k = 0; k < spec.dims; ++k) {
    const Index base = 1 + k * num_basis;
    for (Index j = 1; j <= num_basis; ++j)
      out[base + j - 1] = eval_univariate<Scalar>(spec, j, x[k]);
  }
}

template <typename Scalar>
inline VectorX<Scalar> eval_basis_vector(const BasisSpec& spec, Index num_basis,
                                         const Eigen::Ref<const VectorX<Scalar>>& x) {
  VectorX<Scalar> out;
  eval_basis_vector<Scalar>(spec, num_basis, x, out);
  return out;
}

namespace detail {

// Values of psi_1..psi_J on the uniform grid {i/n : i=0..n}, one basis
// function per column, plus trapezoid weights. Shared by the quadrature
// checks below.
inline void tabulate_on_grid(const BasisSpec& spec, Index num_basis, Index grid_size,
                             Eigen::MatrixXd& values, Vector& weights) {
  const Index n = grid_size;
  values.resize(n + 1, num_basis);
  weights.setConstant(n + 1, 1.0 / static_cast<double>(n));
  weights[0] *= 0.5;
  weights[n] *= 0.5;
  for (Index i = 0; i <= n; ++i) {
    const double x = static_cast<double>(i) / static_cast<double>(n);
    for (Index j = 1; j <= num_basis; ++j)
      values(i, j - 1) = eval_univariate<double>(spec, j, x);
  }
}

}  // namespace detail

// Max deviation of the trapezoid-quadrature Gram matrix of psi_1..psi_J from
// the identity. grid_size is the number of subintervals; the orthonormality
// contract applies for grid_size >= 1000.
inline double gram_deviation(const BasisSpec& spec, Index num_basis, Index grid_size) {
  if (num_basis < 1) throw std::invalid_argument("gram_deviation: J must be >= 1");
  if (grid_size < 1) throw std::invalid_argument("gram_deviation: grid_size must be >= 1");
  Eigen::MatrixXd values;
  Vector weights;
  detail::tabulate_on_grid(spec, num_basis, grid_size, values, weights);
  Eigen::MatrixXd gram = values.transpose() * weights.asDiagonal() * values;
  gram.diagonal().array() -= 1.0;
  return gram.cwiseAbs().maxCoeff();
}

// Max over j <= J of |trapezoid integral of psi_j| on the same grid.
inline double centering_deviation(const BasisSpec& spec, Index num_basis, Index grid_size) {
  if (num_basis < 1) throw std::invalid_argument("centering_deviation: J must be >= 1");
  if (grid_size < 1) throw std::invalid_argument("centering_deviation: grid_size must be >= 1");
  Eigen::MatrixXd values;
  Vector weights;
  detail::tabulate_on_grid(spec, num_basis, grid_size, values, weights);
  return (values.transpose() * weights).cwiseAbs().maxCoeff();
}

}  // namespace sqreg
