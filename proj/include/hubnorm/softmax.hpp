#pragma once

#include <cmath>
#include <limits>

#include <Eigen/Core>

namespace hubnorm {

/// log(sum(exp(scale * x))) without overflow. Returns -inf for an empty input.
template <typename Derived>
typename Derived::Scalar logsumexp(const Eigen::DenseBase<Derived>& x, typename Derived::Scalar scale = 1) {
  using Scalar = typename Derived::Scalar;
  if (x.size() == 0) return -std::numeric_limits<Scalar>::infinity();
  const Scalar peak = scale >= 0 ? scale * x.maxCoeff() : scale * x.minCoeff();
  Scalar acc = 0;
  for (Eigen::Index i = 0; i < x.size(); ++i) acc += std::exp(scale * x(i) - peak);
  return peak + std::log(acc);
}

/// Row-wise logsumexp of scale * m.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> rowwise_logsumexp(const Eigen::DenseBase<Derived>& m,
                                                                             typename Derived::Scalar scale) {
  Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> out(m.rows());
  for (Eigen::Index i = 0; i < m.rows(); ++i) out(i) = logsumexp(m.row(i), scale);
  return out;
}

/// log(exp(a) + exp(b)).
template <typename Scalar>
Scalar logaddexp(Scalar a, Scalar b) {
  if (a == -std::numeric_limits<Scalar>::infinity()) return b;
  if (b == -std::numeric_limits<Scalar>::infinity()) return a;
  const Scalar hi = a > b ? a : b;
  const Scalar lo = a > b ? b : a;
  return hi + std::log1p(std::exp(lo - hi));
}

}  // namespace hubnorm
