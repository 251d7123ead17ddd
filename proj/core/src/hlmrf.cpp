#include "linkinfer/hlmrf.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>

#include "linkinfer/error.hpp"
#include "qp_ipm.hpp"
#include "text_util.hpp"

namespace linkinfer::hlmrf {

namespace {

void check_unit(double a, const char* op) {
  if (!(a >= 0.0 && a <= 1.0)) throw InvalidInput(std::string(op) + ": argument outside [0,1]");
}

std::vector<LinearTerm> merge_coeffs(std::vector<LinearTerm> coeffs) {
  std::sort(coeffs.begin(), coeffs.end(), [](const LinearTerm& a, const LinearTerm& b) { return a.var < b.var; });
  std::vector<LinearTerm> merged;
  for (const auto& t : coeffs) {
    if (!merged.empty() && merged.back().var == t.var)
      merged.back().coeff += t.coeff;
    else
      merged.push_back(t);
  }
  return merged;
}

}  // namespace

double luk_and(double a, double b) {
  check_unit(a, "luk_and");
  check_unit(b, "luk_and");
  return std::max(0.0, a + b - 1.0);
}

double luk_or(double a, double b) {
  check_unit(a, "luk_or");
  check_unit(b, "luk_or");
  return std::min(1.0, a + b);
}

double luk_neg(double a) {
  check_unit(a, "luk_neg");
  return 1.0 - a;
}

double HingeTerm::linear_value(std::span<const double> values) const {
  double l = offset;
  for (const auto& t : coeffs) l += t.coeff * values[t.var];
  return l;
}

double HingeTerm::penalty(std::span<const double> values) const {
  const double h = std::max(linear_value(values), 0.0);
  return weight * (exponent == 2 ? h * h : h);
}

double LinearConstraint::lhs(std::span<const double> values) const {
  double s = 0.0;
  for (const auto& t : coeffs) s += t.coeff * values[t.var];
  return s;
}

double LinearConstraint::violation(std::span<const double> values) const {
  const double d = lhs(values) - rhs;
  return kind == ConstraintKind::equality ? std::abs(d) : std::max(d, 0.0);
}

HingeTerm ground_rule(double weight, std::span<const VarIndex> body, std::span<const VarIndex> head) {
  if (!(weight >= 0.0) || !std::isfinite(weight)) throw InvalidInput("ground_rule: weight must be finite and nonnegative");
  if (body.empty() && head.empty()) throw InvalidInput("ground_rule: rule has no atoms");
  HingeTerm term;
  term.weight = weight;
  term.exponent = 1;
  term.offset = 1.0 - static_cast<double>(body.size());
  std::vector<LinearTerm> coeffs;
  for (auto v : body) coeffs.push_back({v, 1.0});
  for (auto v : head) coeffs.push_back({v, -1.0});
  term.coeffs = merge_coeffs(std::move(coeffs));
  return term;
}

// ---------------------------------------------------------------------------
// HlMrfProblem

HlMrfProblem::HlMrfProblem(std::size_t num_vars) : evidence_(num_vars) {}

VarIndex HlMrfProblem::add_variable() {
  evidence_.emplace_back();
  return static_cast<VarIndex>(evidence_.size() - 1);
}

void HlMrfProblem::set_evidence(VarIndex var, double value) {
  if (var >= evidence_.size()) throw InvalidInput("set_evidence: variable index out of range");
  if (!(value >= 0.0 && value <= 1.0)) throw InvalidInput("set_evidence: value outside [0,1]");
  evidence_[var] = value;
}

void HlMrfProblem::check_coeffs(std::span<const LinearTerm> coeffs) const {
  for (const auto& t : coeffs) {
    if (t.var >= evidence_.size()) throw InvalidInput("variable index " + std::to_string(t.var) + " out of range");
    if (!std::isfinite(t.coeff)) throw InvalidInput("non-finite coefficient");
  }
}

void HlMrfProblem::add_term(HingeTerm term) {
  if (!(term.weight >= 0.0) || !std::isfinite(term.weight)) throw InvalidInput("hinge weight must be finite and nonnegative");
  if (term.exponent != 1 && term.exponent != 2) throw InvalidInput("hinge exponent must be 1 or 2");
  if (!std::isfinite(term.offset)) throw InvalidInput("non-finite hinge offset");
  check_coeffs(term.coeffs);
  terms_.push_back(std::move(term));
}

void HlMrfProblem::add_constraint(LinearConstraint constraint) {
  if (constraint.coeffs.empty()) throw InvalidInput("linear constraint has no coefficients");
  if (!std::isfinite(constraint.rhs)) throw InvalidInput("non-finite constraint rhs");
  check_coeffs(constraint.coeffs);
  constraints_.push_back(std::move(constraint));
}

double objective(const HlMrfProblem& problem, std::span<const double> values) {
  if (values.size() != problem.num_vars()) throw DimensionMismatch("objective: value vector has the wrong length");
  double f = 0.0;
  for (const auto& t : problem.terms()) f += t.penalty(values);
  return f;
}

// ---------------------------------------------------------------------------
// Dykstra projection

namespace {

struct SparseRow {
  std::vector<LinearTerm> coeffs;
  double rhs = 0.0;
  bool equality = false;
  double norm2 = 0.0;
};

std::vector<SparseRow> to_rows(std::span<const LinearConstraint> constraints) {
  std::vector<SparseRow> rows;
  rows.reserve(constraints.size());
  for (const auto& c : constraints) {
    SparseRow r{c.coeffs, c.rhs, c.kind == ConstraintKind::equality, 0.0};
    for (const auto& t : r.coeffs) r.norm2 += t.coeff * t.coeff;
    rows.push_back(std::move(r));
  }
  return rows;
}

double row_violation(const SparseRow& r, std::span<const double> x) {
  double s = -r.rhs;
  for (const auto& t : r.coeffs) s += t.coeff * x[t.var];
  return r.equality ? std::abs(s) : std::max(s, 0.0);
}

}  // namespace

ProjectionResult project_feasible(std::span<const double> start, std::span<const LinearConstraint> constraints,
                                  double tol, int max_iter) {
  const std::size_t n = start.size();
  for (const auto& c : constraints)
    for (const auto& t : c.coeffs)
      if (t.var >= n) throw InvalidInput("project_feasible: constraint references an unknown variable");

  ProjectionResult result;
  result.point.assign(start.begin(), start.end());
  auto& x = result.point;
  auto rows = to_rows(constraints);

  auto clip_box = [&] {
    for (auto& v : x) v = std::clamp(v, 0.0, 1.0);
  };
  if (rows.empty()) {
    clip_box();
    result.converged = true;
    return result;
  }

  // Dykstra increments: dense for the box, sparse (on the support) per row.
  std::vector<double> box_inc(n, 0.0);
  std::vector<std::vector<double>> row_inc(rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k) row_inc[k].assign(rows[k].coeffs.size(), 0.0);
  std::vector<double> before(n);

  for (int iter = 1; iter <= max_iter; ++iter) {
    before = x;
    for (std::size_t k = 0; k < rows.size(); ++k) {
      const auto& r = rows[k];
      auto& inc = row_inc[k];
      double s = -r.rhs;
      for (std::size_t q = 0; q < r.coeffs.size(); ++q) {
        x[r.coeffs[q].var] += inc[q];
        s += r.coeffs[q].coeff * x[r.coeffs[q].var];
      }
      const double step = (r.equality || s > 0.0) && r.norm2 > 0.0 ? s / r.norm2 : 0.0;
      for (std::size_t q = 0; q < r.coeffs.size(); ++q) {
        const double delta = step * r.coeffs[q].coeff;
        x[r.coeffs[q].var] -= delta;
        inc[q] = delta;
      }
    }
    double change = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double y = x[i] + box_inc[i];
      const double p = std::clamp(y, 0.0, 1.0);
      box_inc[i] = y - p;
      x[i] = p;
      change = std::max(change, std::abs(x[i] - before[i]));
    }
    double violation = 0.0;
    for (const auto& r : rows) violation = std::max(violation, row_violation(r, x));
    result.iterations = iter;
    result.max_violation = violation;
    if (violation <= tol && change <= tol) {
      result.converged = true;
      return result;
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Inference

namespace {

// The problem restricted to its free variables, with evidence folded into
// offsets and right-hand sides.
struct Compact {
  std::vector<VarIndex> free_vars;  // compact -> original
  std::vector<HingeTerm> terms;     // weight > 0, at least one free coefficient
  std::vector<LinearConstraint> constraints;
};

Compact compact(const HlMrfProblem& problem) {
  Compact out;
  std::vector<std::int64_t> map(problem.num_vars(), -1);
  for (VarIndex v = 0; v < problem.num_vars(); ++v) {
    if (problem.is_free(v)) {
      map[v] = static_cast<std::int64_t>(out.free_vars.size());
      out.free_vars.push_back(v);
    }
  }
  auto fold = [&](std::span<const LinearTerm> coeffs, double& fixed) {
    std::vector<LinearTerm> kept;
    for (const auto& t : coeffs) {
      if (map[t.var] >= 0)
        kept.push_back({static_cast<VarIndex>(map[t.var]), t.coeff});
      else
        fixed += t.coeff * *problem.evidence(t.var);
    }
    kept = merge_coeffs(std::move(kept));
    std::erase_if(kept, [](const LinearTerm& t) { return t.coeff == 0.0; });
    return kept;
  };

  for (const auto& t : problem.terms()) {
    double offset = t.offset;
    auto kept = fold(t.coeffs, offset);
    // Terms without free variables are constant; zero-weight terms are inert.
    if (kept.empty() || t.weight == 0.0) continue;
    out.terms.push_back({t.weight, std::move(kept), offset, t.exponent});
  }
  for (const auto& c : problem.constraints()) {
    double fixed = 0.0;
    auto kept = fold(c.coeffs, fixed);
    const double rhs = c.rhs - fixed;
    if (kept.empty()) {
      const bool ok = c.kind == ConstraintKind::equality ? std::abs(rhs) <= 1e-9 : rhs >= -1e-9;
      if (!ok) throw InfeasibleProblem("constraint over evidence variables only is violated", std::abs(rhs));
      continue;
    }
    out.constraints.push_back({std::move(kept), rhs, c.kind});
  }
  return out;
}

double max_violation(std::span<const LinearConstraint> constraints, std::span<const double> y) {
  double v = 0.0;
  for (const auto& c : constraints) v = std::max(v, c.violation(y));
  return v;
}

constexpr double kFeasibilityTol = 1e-6;

}  // namespace

Assignment solve(const HlMrfProblem& problem, double tol, int max_iter) {
  SolverOptions options;
  options.tol = tol;
  options.max_iter = max_iter;
  return solve(problem, options);
}

Assignment solve(const HlMrfProblem& problem, const SolverOptions& options) {
  if (!(options.tol > 0.0) || options.max_iter < 1) throw InvalidInput("solve: tol must be positive and max_iter >= 1");
  if (!(options.epsilon >= 0.0)) throw InvalidInput("solve: epsilon must be nonnegative");
  const Compact cp = compact(problem);
  const std::size_t n = cp.free_vars.size();

  Assignment result;
  result.values.resize(problem.num_vars());
  for (VarIndex v = 0; v < problem.num_vars(); ++v)
    if (auto e = problem.evidence(v)) result.values[v] = *e;

  // The projection of the origin is the minimum-norm feasible point: the
  // answer when no hinge is active, the starting point otherwise, and the
  // infeasibility test.
  auto start = project_feasible(std::vector<double>(n, 0.0), cp.constraints);
  if (!start.converged && start.max_violation > kFeasibilityTol) {
    throw InfeasibleProblem("box and linear constraints admit no common point", start.max_violation);
  }
  std::vector<double> y = std::move(start.point);

  if (!cp.terms.empty()) {
    // Weights are divided by their mean, so scaling every weight by c leaves
    // the iterates unchanged and scales the objective by c.
    double weight_sum = 0.0;
    for (const auto& t : cp.terms) weight_sum += t.weight;
    const double mean_weight = weight_sum / static_cast<double>(cp.terms.size());
    std::vector<ipm::QpHinge> hinges;
    hinges.reserve(cp.terms.size());
    for (const auto& t : cp.terms) hinges.push_back({t.weight / mean_weight, t.exponent, t.offset, t.coeffs});

    ipm::QpSettings settings;
    settings.residual_tol = options.tol * 1e-5;
    settings.gap_tol = options.tol * 1e-7;
    settings.max_iter = options.max_iter;
    // Interior start: the barrier needs room on both sides of every bound.
    std::vector<double> y0(y);
    for (auto& v : y0) v = std::clamp(v, 0.05, 0.95);
    const auto qp = ipm::solve_qp(n, hinges, cp.constraints, 2.0 * options.epsilon, y0, settings);
    result.stats.iterations = qp.iterations;
    result.stats.primal_residual = qp.primal_residual;
    result.stats.dual_residual = qp.dual_residual;
    if (!qp.converged) {
      throw NotConverged("HL-MRF inference did not converge", qp.iterations, qp.primal_residual, qp.dual_residual);
    }

    // Interior iterates meet the linear constraints only up to the residual.
    auto repaired = project_feasible(qp.y, cp.constraints, 1e-12, 20000);
    if (!repaired.converged && repaired.max_violation > kFeasibilityTol) {
      throw InfeasibleProblem("could not restore feasibility of the solver iterate", repaired.max_violation);
    }
    y = std::move(repaired.point);
  }

  result.stats.max_violation = max_violation(cp.constraints, y);
  for (std::size_t i = 0; i < n; ++i) result.values[cp.free_vars[i]] = std::clamp(y[i], 0.0, 1.0);
  result.objective = objective(problem, result.values);
  return result;
}

// ---------------------------------------------------------------------------
// Text dump

void write_dump(std::ostream& out, const HlMrfProblem& problem) {
  out << "VARS " << problem.num_vars() << '\n';
  for (VarIndex v = 0; v < problem.num_vars(); ++v) {
    out << "VAR " << v;
    if (auto e = problem.evidence(v)) out << " = " << detail::format_double(*e);
    out << '\n';
  }
  auto write_coeffs = [&](std::span<const LinearTerm> coeffs) {
    for (const auto& t : coeffs) out << ' ' << t.var << ':' << detail::format_double(t.coeff);
  };
  for (const auto& t : problem.terms()) {
    out << "TERM " << detail::format_double(t.weight) << ' ' << t.exponent << ' ' << detail::format_double(t.offset);
    write_coeffs(t.coeffs);
    out << '\n';
  }
  for (const auto& c : problem.constraints()) {
    out << "CON " << (c.kind == ConstraintKind::equality ? "eq" : "leq") << ' ' << detail::format_double(c.rhs);
    write_coeffs(c.coeffs);
    out << '\n';
  }
}

HlMrfProblem read_dump(std::istream& in) {
  HlMrfProblem problem;
  bool sized = false;
  std::string line;
  std::size_t line_no = 0;
  auto fail = [&](const std::string& why) -> InvalidInput {
    return InvalidInput("problem dump line " + std::to_string(line_no) + ": " + why);
  };
  auto number = [&](std::string_view s) {
    double v = 0.0;
    if (!detail::parse_double(s, v)) throw fail("bad number '" + std::string(s) + "'");
    return v;
  };
  auto index = [&](std::string_view s) {
    long long v = 0;
    if (!detail::parse_integer(s, v) || v < 0) throw fail("bad index '" + std::string(s) + "'");
    return static_cast<VarIndex>(v);
  };
  auto coeffs_from = [&](const std::vector<std::string_view>& f, std::size_t first) {
    std::vector<LinearTerm> coeffs;
    for (std::size_t i = first; i < f.size(); ++i) {
      auto colon = f[i].find(':');
      if (colon == std::string_view::npos) throw fail("expected var:coeff");
      coeffs.push_back({index(f[i].substr(0, colon)), number(f[i].substr(colon + 1))});
    }
    return coeffs;
  };

  while (std::getline(in, line)) {
    ++line_no;
    auto trimmed = detail::trim(line);
    if (trimmed.empty() || trimmed.front() == '#') continue;
    std::vector<std::string_view> f;
    for (auto part : detail::split(trimmed, ' '))
      if (!part.empty()) f.push_back(part);
    const auto& tag = f[0];
    if (tag == "VARS") {
      if (f.size() != 2 || sized) throw fail("malformed VARS line");
      problem = HlMrfProblem(index(f[1]));
      sized = true;
    } else if (!sized) {
      throw fail("VARS must come first");
    } else if (tag == "VAR") {
      if (f.size() == 4 && f[2] == "=")
        problem.set_evidence(index(f[1]), number(f[3]));
      else if (f.size() != 2)
        throw fail("malformed VAR line");
    } else if (tag == "TERM") {
      if (f.size() < 4) throw fail("malformed TERM line");
      HingeTerm t;
      t.weight = number(f[1]);
      t.exponent = static_cast<int>(index(f[2]));
      t.offset = number(f[3]);
      t.coeffs = coeffs_from(f, 4);
      problem.add_term(std::move(t));
    } else if (tag == "CON") {
      if (f.size() < 4 || (f[1] != "eq" && f[1] != "leq")) throw fail("malformed CON line");
      LinearConstraint c;
      c.kind = f[1] == "eq" ? ConstraintKind::equality : ConstraintKind::leq;
      c.rhs = number(f[2]);
      c.coeffs = coeffs_from(f, 3);
      problem.add_constraint(std::move(c));
    } else {
      throw fail("unknown record '" + std::string(tag) + "'");
    }
  }
  if (!sized) throw InvalidInput("problem dump has no VARS line");
  return problem;
}

}  // namespace linkinfer::hlmrf
