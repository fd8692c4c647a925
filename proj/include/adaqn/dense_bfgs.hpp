#pragma once

// Dense inverse-BFGS reference used to check the two-loop recursion. Only
// sensible for small n.

#include <Eigen/Dense>

#include "adaqn/lbfgs.hpp"

namespace adaqn {

/// Applies H <- (I - rho s y') H (I - rho y s') + rho s s' for every stored pair,
/// oldest first, starting from H = diag(h0).
inline Eigen::MatrixXd bfgs_dense_oracle(const LbfgsMemory& mem, const DiagonalScaling& h0) {
  const auto n = static_cast<Eigen::Index>(h0.size());
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) H(i, i) = h0[static_cast<std::size_t>(i)];
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
  for (const CurvaturePair& p : mem) {
    require_same_size(p.s.size(), h0.size(), "bfgs_dense_oracle");
    const Eigen::Map<const Eigen::VectorXd> s(p.s.data(), n);
    const Eigen::Map<const Eigen::VectorXd> y(p.y.data(), n);
    const Eigen::MatrixXd V = I - p.rho * y * s.transpose();
    H = V.transpose() * H * V + p.rho * s * s.transpose();
  }
  return H;
}

}  // namespace adaqn
