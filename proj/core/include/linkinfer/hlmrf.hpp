#pragma once

// Hinge-loss Markov random fields: Lukasiewicz operators, rule grounding and
// constrained MAP inference.
//
// A problem is a set of variables in [0,1] (some fixed as evidence), weighted
// hinge terms w * max{offset + sum c_i y_i, 0}^p with p in {1,2}, and linear
// equality / inequality constraints. MAP inference minimizes the weighted
// hinge sum over the free variables.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

namespace linkinfer::hlmrf {

using VarIndex = std::uint32_t;

/// max{0, a + b - 1}. Inputs must lie in [0,1].
double luk_and(double a, double b);
/// min{1, a + b}.
double luk_or(double a, double b);
/// 1 - a.
double luk_neg(double a);

struct LinearTerm {
  VarIndex var = 0;
  double coeff = 0.0;

  friend bool operator==(const LinearTerm&, const LinearTerm&) = default;
};

struct HingeTerm {
  double weight = 0.0;
  std::vector<LinearTerm> coeffs;
  double offset = 0.0;
  int exponent = 1;

  /// offset + sum coeff * values[var]
  double linear_value(std::span<const double> values) const;
  /// weight * max{linear_value, 0}^exponent
  double penalty(std::span<const double> values) const;
};

enum class ConstraintKind { equality, leq };

struct LinearConstraint {
  std::vector<LinearTerm> coeffs;
  double rhs = 0.0;
  ConstraintKind kind = ConstraintKind::leq;

  double lhs(std::span<const double> values) const;
  /// Amount by which the constraint is violated (0 when satisfied).
  double violation(std::span<const double> values) const;
};

/// Grounds `body -> head` as its distance to satisfaction:
/// max{1 - sum_head y - sum_body (1 - y), 0}, exponent 1. Repeated variables
/// have their coefficients merged.
HingeTerm ground_rule(double weight, std::span<const VarIndex> body, std::span<const VarIndex> head);

class HlMrfProblem {
 public:
  HlMrfProblem() = default;
  explicit HlMrfProblem(std::size_t num_vars);

  std::size_t num_vars() const noexcept { return evidence_.size(); }
  VarIndex add_variable();
  /// Fixes `var` to `value` (the observed block of the model).
  void set_evidence(VarIndex var, double value);
  std::optional<double> evidence(VarIndex var) const { return evidence_.at(var); }
  bool is_free(VarIndex var) const { return !evidence_.at(var).has_value(); }

  /// Validates and appends; throws InvalidInput on negative weights, unknown
  /// exponents or out-of-range variable indices.
  void add_term(HingeTerm term);
  void add_constraint(LinearConstraint constraint);

  std::span<const HingeTerm> terms() const noexcept { return terms_; }
  std::span<const LinearConstraint> constraints() const noexcept { return constraints_; }

 private:
  void check_coeffs(std::span<const LinearTerm> coeffs) const;

  std::vector<std::optional<double>> evidence_;
  std::vector<HingeTerm> terms_;
  std::vector<LinearConstraint> constraints_;
};

struct SolverOptions {
  /// Objective tolerance; the residual and complementarity targets of the
  /// interior-point iteration are derived from it.
  double tol = 1e-4;
  int max_iter = 20000;
  /// Weight of the epsilon * |y|^2 tie-breaking regularizer, relative to the
  /// mean hinge weight.
  double epsilon = 1e-6;
};

struct SolveStats {
  int iterations = 0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  double max_violation = 0.0;
};

struct Assignment {
  /// One value per problem variable; evidence variables carry their fixed value.
  std::vector<double> values;
  /// Unregularized weighted hinge sum at `values`.
  double objective = 0.0;
  SolveStats stats;
};

/// sum_j w_j max{l_j(values), 0}^{p_j}. `values` covers every variable.
double objective(const HlMrfProblem& problem, std::span<const double> values);

/// MAP inference with epsilon * |y|^2 added so the reported optimum is unique
/// (the minimum-norm point among optima once epsilon is small enough). The
/// convex program is solved by a primal-dual interior-point method on its
/// epigraph form; the result is then projected onto the feasible set.
///
/// Throws InfeasibleProblem when no point satisfies box and constraints, and
/// NotConverged when the iteration stalls or exceeds `max_iter`.
Assignment solve(const HlMrfProblem& problem, const SolverOptions& options = {});
Assignment solve(const HlMrfProblem& problem, double tol, int max_iter);

struct ProjectionResult {
  std::vector<double> point;
  double max_violation = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Euclidean projection of `start` (free variables only, in the compact
/// indexing used by `constraints`) onto [0,1]^n intersected with the
/// constraints, by Dykstra's alternating projection.
ProjectionResult project_feasible(std::span<const double> start, std::span<const LinearConstraint> constraints,
                                  double tol = 1e-10, int max_iter = 100000);

/// Line-oriented text dump:
///   VARS n
///   VAR i            (free)     | VAR i = v   (evidence)
///   TERM w p offset (i:c)...
///   CON eq|leq rhs (i:c)...
void write_dump(std::ostream& out, const HlMrfProblem& problem);
HlMrfProblem read_dump(std::istream& in);

}  // namespace linkinfer::hlmrf
