#pragma once

// Primal-dual interior-point solver for the convex QP behind MAP inference:
//
//   min  reg/2 |y|^2 + sum_j w_j max{a_j.y + b_j, 0}^{p_j}
//   s.t. 0 <= y <= 1,  E y = f,  C y <= d
//
// Each hinge gets an epigraph variable s_j >= max{a_j.y + b_j, 0}; the
// Newton systems are reduced to y plus one row per linear constraint and
// factored with a sparse LDL^T.

#include <span>
#include <vector>

#include "linkinfer/hlmrf.hpp"

namespace linkinfer::hlmrf::ipm {

struct QpHinge {
  double weight = 0.0;
  int exponent = 1;
  double offset = 0.0;
  std::vector<LinearTerm> coeffs;
};

struct QpSettings {
  /// Target for the scaled primal and dual residuals.
  double residual_tol = 1e-10;
  /// Target for the mean complementarity product.
  double gap_tol = 1e-12;
  int max_iter = 200;
};

struct QpResult {
  std::vector<double> y;
  int iterations = 0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  double gap = 0.0;
  bool converged = false;
};

/// `reg` and the hinge weights should be O(1); the caller normalizes them.
/// `y0` is a starting guess inside the box.
QpResult solve_qp(std::size_t num_vars, std::span<const QpHinge> hinges, std::span<const LinearConstraint> constraints,
                  double reg, std::span<const double> y0, const QpSettings& settings);

}  // namespace linkinfer::hlmrf::ipm
