#include "qp_ipm.hpp"

#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <utility>

namespace linkinfer::hlmrf::ipm {

namespace {

using SpMat = Eigen::SparseMatrix<double>;
using Vec = Eigen::VectorXd;

// Diagonal regularization keeps every pivot of the quasi-definite system
// away from zero: +delta on the variable rows, -delta on the others.
// Iterative refinement against the unregularized matrix removes its effect
// on the step.
// A factorization that still breaks down is retried with a larger value.
constexpr double kInitialReg = 1e-11;
constexpr double kMaxReg = 1e-5;
constexpr int kRefinementSteps = 3;
constexpr double kStepFraction = 0.995;
constexpr double kStallSlack = 100.0;
constexpr double kTargetFloor = 0.1;
constexpr double kProgress = 0.999;
constexpr int kStallIterations = 30;

double max_step(const Vec& v, const Vec& dv) {
  double a = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (dv[i] < 0.0) a = std::min(a, -v[i] / dv[i]);
  return a;
}

double inf_norm(const Vec& v) { return v.size() == 0 ? 0.0 : v.lpNorm<Eigen::Infinity>(); }

// Inequalities are stored block-wise, all in the form g.x <= h with slack t
// and multiplier z:
//   H_j:  a_j.y - s_j <= -b_j      S_j: -s_j <= 0
//   L_i:  -y_i <= 0                U_i:  y_i <= 1
//   C_k:  c_k.y <= d_k
// plus equalities E_k: e_k.y = f_k with multiplier lambda.
class Solver {
 public:
  Solver(std::size_t n, std::span<const QpHinge> hinges, std::span<const LinearConstraint> constraints, double reg)
      : n_(static_cast<Eigen::Index>(n)), m_(static_cast<Eigen::Index>(hinges.size())), hinges_(hinges), reg_(reg) {
    for (const auto& c : constraints) (c.kind == ConstraintKind::equality ? eq_ : leq_).push_back(&c);
    kc_ = static_cast<Eigen::Index>(leq_.size());
    ke_ = static_cast<Eigen::Index>(eq_.size());
    p_ = 2 * m_ + 2 * n_ + kc_;
    aug_row_.assign(static_cast<std::size_t>(m_), -1);
    for (Eigen::Index j = 0; j < m_; ++j)
      if (hinges_[j].coeffs.size() > 1) aug_row_[j] = n_ + num_aug_++;
    dim_ = n_ + num_aug_ + kc_ + ke_;
    quad_.resize(m_);
    lin_.resize(m_);
    for (Eigen::Index j = 0; j < m_; ++j) {
      const auto& h = hinges_[j];
      quad_[j] = h.exponent == 2 ? 2.0 * h.weight : 0.0;
      lin_[j] = h.exponent == 2 ? 0.0 : h.weight;
    }
    double hmax = 1.0;
    for (const auto& h : hinges_) hmax = std::max(hmax, std::abs(h.offset));
    for (const auto* c : constraints_view()) hmax = std::max(hmax, std::abs(c->rhs));
    primal_scale_ = 1.0 + hmax;
    dual_scale_ = 1.0 + (m_ > 0 ? lin_.cwiseAbs().maxCoeff() : 0.0);
  }

  QpResult run(std::span<const double> y0, const QpSettings& settings) {
    init(y0);
    QpResult result;
    // Near the end the Newton systems lose accuracy, so the last iterate that
    // was accurate up to a small slack on the gap is kept as a fallback.
    std::optional<QpResult> fallback;
    double best_merit = std::numeric_limits<double>::infinity();
    int since_best = 0;
    for (int iter = 0;; ++iter) {
      residuals();
      const double mu = p_ > 0 ? t_.dot(z_) / static_cast<double>(p_) : 0.0;
      const double pres = std::max(inf_norm(rg_), inf_norm(rp_)) / primal_scale_;
      const double dres = std::max(inf_norm(rdy_), inf_norm(rds_)) / dual_scale_;
      result.iterations = iter;
      result.primal_residual = pres;
      result.dual_residual = dres;
      result.gap = mu;
      const bool accurate = pres <= settings.residual_tol && dres <= settings.residual_tol;
      if (accurate && mu <= settings.gap_tol) {
        result.converged = true;
        break;
      }
      if (accurate && mu <= kStallSlack * settings.gap_tol) {
        save();
        fallback = result;
      } else if (fallback) {
        break;
      }
      const double merit = std::max({pres / settings.residual_tol, dres / settings.residual_tol, mu / settings.gap_tol});
      if (merit < kProgress * best_merit) {
        best_merit = merit;
        since_best = 0;
      } else if (++since_best > kStallIterations) {
        break;
      }
      if (iter >= settings.max_iter) break;

      D_ = z_.cwiseQuotient(t_);
      if (!factorize()) break;

      // Predictor.
      Rhs rhs{-rdy_, -rds_, -rp_, -rg_, -t_.cwiseProduct(z_)};
      const Step aff = solve_newton(rhs);
      const double a_aff = std::min({1.0, max_step(t_, aff.dt), max_step(z_, aff.dz)});
      const double mu_aff = (t_ + a_aff * aff.dt).dot(z_ + a_aff * aff.dz) / static_cast<double>(p_);
      const double sigma = std::pow(std::clamp(mu_aff / mu, 0.0, 1.0), 3);

      // Corrector. Driving mu far below the target only worsens conditioning.
      const double target = std::max(sigma * mu, kTargetFloor * settings.gap_tol);
      rhs.c.array() += -aff.dt.cwiseProduct(aff.dz).array() + target;
      const Step st = solve_newton(rhs);
      const double alpha =
          std::min({1.0, kStepFraction * max_step(t_, st.dt), kStepFraction * max_step(z_, st.dz)});
      if (!(alpha > 0.0)) break;
      y_ += alpha * st.dy;
      s_ += alpha * st.ds;
      t_ += alpha * st.dt;
      z_ += alpha * st.dz;
      lambda_ += alpha * st.dlambda;
    }
    if (!result.converged && fallback) {
      restore();
      result = *fallback;
      result.converged = true;
    }
    result.y.assign(y_.data(), y_.data() + n_);
    return result;
  }

 private:
  struct Step {
    Vec dy, ds, dt, dz, dlambda;
  };

  std::vector<const LinearConstraint*> constraints_view() const {
    std::vector<const LinearConstraint*> all(leq_);
    all.insert(all.end(), eq_.begin(), eq_.end());
    return all;
  }

  void save() { saved_ = {y_, s_, t_, z_, lambda_}; }
  void restore() {
    y_ = saved_[0];
    s_ = saved_[1];
    t_ = saved_[2];
    z_ = saved_[3];
    lambda_ = saved_[4];
  }

  // Row offsets of the inequality blocks inside t_ and z_.
  Eigen::Index off_h() const { return 0; }
  Eigen::Index off_s() const { return m_; }
  Eigen::Index off_l() const { return 2 * m_; }
  Eigen::Index off_u() const { return 2 * m_ + n_; }
  Eigen::Index off_c() const { return 2 * m_ + 2 * n_; }
  // Row offsets of the constraint blocks inside K.
  Eigen::Index off_krow_c() const { return n_ + num_aug_; }
  Eigen::Index off_krow_e() const { return n_ + num_aug_ + kc_; }

  static double dot(const std::vector<LinearTerm>& a, const Vec& y) {
    double v = 0.0;
    for (const auto& t : a) v += t.coeff * y[t.var];
    return v;
  }

  // G x for the current or a trial point.
  Vec apply_g(const Vec& y, const Vec& s) const {
    Vec g(p_);
    for (Eigen::Index j = 0; j < m_; ++j) {
      g[off_h() + j] = dot(hinges_[j].coeffs, y) - s[j];
      g[off_s() + j] = -s[j];
    }
    g.segment(off_l(), n_) = -y;
    g.segment(off_u(), n_) = y;
    for (Eigen::Index k = 0; k < kc_; ++k) g[off_c() + k] = dot(leq_[k]->coeffs, y);
    return g;
  }

  Vec rhs_h() const {
    Vec h = Vec::Zero(p_);
    for (Eigen::Index j = 0; j < m_; ++j) h[off_h() + j] = -hinges_[j].offset;
    h.segment(off_u(), n_).setOnes();
    for (Eigen::Index k = 0; k < kc_; ++k) h[off_c() + k] = leq_[k]->rhs;
    return h;
  }

  void init(std::span<const double> y0) {
    y_ = Eigen::Map<const Vec>(y0.data(), n_);
    s_.resize(m_);
    for (Eigen::Index j = 0; j < m_; ++j) s_[j] = std::max(dot(hinges_[j].coeffs, y_) + hinges_[j].offset, 0.0) + 0.1;
    h_ = rhs_h();
    const Vec slack = h_ - apply_g(y_, s_);
    t_ = slack.cwiseMax(0.1);
    z_ = Vec::Ones(p_);
    lambda_ = Vec::Zero(ke_);
  }

  void residuals() {
    rg_ = apply_g(y_, s_) + t_ - h_;
    rp_.resize(ke_);
    for (Eigen::Index k = 0; k < ke_; ++k) rp_[k] = dot(eq_[k]->coeffs, y_) - eq_[k]->rhs;
    auto [gy, gs] = apply_gt(z_);
    rdy_ = reg_ * y_ + gy + apply_at(lambda_);
    rds_ = quad_.cwiseProduct(s_) + lin_ + gs;
  }

  // Reduced KKT matrix over (dy, hinge rows, inequality rows, equality
  // rows), lower triangle. A hinge on one variable adds to the diagonal; a
  // hinge on several keeps its own row, since its rank-one term can be huge
  // at a kink and would cancel the smaller diagonal entries.
  void assemble() {
    kss_.resize(m_);
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<std::size_t>(dim_) * 3);
    for (Eigen::Index i = 0; i < n_; ++i) trip.emplace_back(i, i, reg_ + D_[off_l() + i] + D_[off_u() + i] + delta_);
    for (Eigen::Index j = 0; j < m_; ++j) {
      const double dh = D_[off_h() + j];
      const double ds = quad_[j] + D_[off_s() + j];
      kss_[j] = dh + ds;
      const auto& a = hinges_[j].coeffs;
      if (aug_row_[j] < 0) {
        const double beta = dh * ds / kss_[j];
        for (const auto& t : a) trip.emplace_back(t.var, t.var, beta * t.coeff * t.coeff);
      } else {
        const Eigen::Index r = aug_row_[j];
        for (const auto& t : a) trip.emplace_back(r, t.var, t.coeff);
        trip.emplace_back(r, r, -(1.0 / dh + 1.0 / ds) - delta_);
      }
    }
    for (Eigen::Index k = 0; k < kc_; ++k) {
      const Eigen::Index r = off_krow_c() + k;
      for (const auto& t : leq_[k]->coeffs) trip.emplace_back(r, t.var, t.coeff);
      trip.emplace_back(r, r, -1.0 / D_[off_c() + k] - delta_);
    }
    for (Eigen::Index k = 0; k < ke_; ++k) {
      const Eigen::Index r = off_krow_e() + k;
      for (const auto& t : eq_[k]->coeffs) trip.emplace_back(r, t.var, t.coeff);
      trip.emplace_back(r, r, -delta_);
    }
    K_.resize(dim_, dim_);
    K_.setFromTriplets(trip.begin(), trip.end());
  }

  bool factorize() {
    for (;;) {
      assemble();
      if (!analyzed_) {
        ldlt_.analyzePattern(K_);
        analyzed_ = true;
      }
      ldlt_.factorize(K_);
      if (ldlt_.info() == Eigen::Success) return true;
      if (delta_ >= kMaxReg) return false;
      delta_ *= 100.0;
    }
  }

  // K without the diagonal regularization, applied to a full vector.
  Vec apply_k(const Vec& v) const {
    Vec out = K_.selfadjointView<Eigen::Lower>() * v;
    out.head(n_) -= delta_ * v.head(n_);
    out.tail(dim_ - n_) += delta_ * v.tail(dim_ - n_);
    return out;
  }

  // Right-hand side of the Newton system
  //   Q dx + G^T dz + A^T dlambda = d      A dx = p
  //   G dx + dt = g                        Z dt + T dz = c
  // with d split into its y and s parts.
  struct Rhs {
    Vec dy, ds, p, g, c;
  };

  // G^T v, split into y and s parts.
  std::pair<Vec, Vec> apply_gt(const Vec& v) const {
    Vec gy = v.segment(off_u(), n_) - v.segment(off_l(), n_);
    Vec gs(m_);
    for (Eigen::Index j = 0; j < m_; ++j) {
      for (const auto& t : hinges_[j].coeffs) gy[t.var] += v[off_h() + j] * t.coeff;
      gs[j] = -v[off_h() + j] - v[off_s() + j];
    }
    for (Eigen::Index k = 0; k < kc_; ++k)
      for (const auto& t : leq_[k]->coeffs) gy[t.var] += v[off_c() + k] * t.coeff;
    return {std::move(gy), std::move(gs)};
  }

  Vec apply_at(const Vec& lambda) const {
    Vec out = Vec::Zero(n_);
    for (Eigen::Index k = 0; k < ke_; ++k)
      for (const auto& t : eq_[k]->coeffs) out[t.var] += lambda[k] * t.coeff;
    return out;
  }

  Vec apply_a(const Vec& y) const {
    Vec out(ke_);
    for (Eigen::Index k = 0; k < ke_; ++k) out[k] = dot(eq_[k]->coeffs, y);
    return out;
  }

  // What the full Newton system leaves unexplained by `st`.
  Rhs remainder(const Rhs& rhs, const Step& st) const {
    auto [gy, gs] = apply_gt(st.dz);
    Rhs e;
    e.dy = rhs.dy - (reg_ * st.dy + gy + apply_at(st.dlambda));
    e.ds = rhs.ds - (quad_.cwiseProduct(st.ds) + gs);
    e.p = rhs.p - apply_a(st.dy);
    e.g = rhs.g - (apply_g(st.dy, st.ds) + st.dt);
    e.c = rhs.c - (z_.cwiseProduct(st.dt) + t_.cwiseProduct(st.dz));
    return e;
  }

  Step direction(const Rhs& rhs) const {
    // dt = g - G dx and dz = D G dx + rho eliminate the inequality rows.
    const Vec rho = (rhs.c - z_.cwiseProduct(rhs.g)).cwiseQuotient(t_);
    auto [gy, gs] = apply_gt(rho);
    Vec ry = rhs.dy - gy;
    const Vec rs = rhs.ds - gs;
    for (Eigen::Index j = 0; j < m_; ++j) {
      const double f = D_[off_h() + j] * rs[j] / kss_[j];
      for (const auto& t : hinges_[j].coeffs) ry[t.var] += f * t.coeff;
    }

    Vec k_rhs = Vec::Zero(dim_);
    k_rhs.head(n_) = ry;
    k_rhs.tail(ke_) = rhs.p;
    Vec sol = ldlt_.solve(k_rhs);
    for (int r = 0; r < kRefinementSteps; ++r) sol += ldlt_.solve(k_rhs - apply_k(sol));

    Step st;
    st.dy = sol.head(n_);
    st.dlambda = sol.tail(ke_);
    st.ds.resize(m_);
    for (Eigen::Index j = 0; j < m_; ++j)
      st.ds[j] = (rs[j] + D_[off_h() + j] * dot(hinges_[j].coeffs, st.dy)) / kss_[j];
    const Vec gdx = apply_g(st.dy, st.ds);
    st.dz = D_.cwiseProduct(gdx) + rho;
    st.dt = rhs.g - gdx;
    return st;
  }

  // Newton step with iterative refinement on the unreduced system.
  Step solve_newton(const Rhs& rhs) const {
    Step st = direction(rhs);
    for (int r = 0; r < kRefinementSteps; ++r) {
      const Step corr = direction(remainder(rhs, st));
      st.dy += corr.dy;
      st.ds += corr.ds;
      st.dt += corr.dt;
      st.dz += corr.dz;
      st.dlambda += corr.dlambda;
    }
    return st;
  }

  Eigen::Index n_, m_, kc_ = 0, ke_ = 0, p_ = 0;
  // Position of each hinge's row in K, or -1 when folded into the diagonal.
  std::vector<Eigen::Index> aug_row_;
  Eigen::Index num_aug_ = 0, dim_ = 0;
  double delta_ = kInitialReg;
  bool analyzed_ = false;
  std::span<const QpHinge> hinges_;
  double reg_;
  std::vector<const LinearConstraint*> leq_, eq_;
  Vec quad_, lin_;
  double primal_scale_ = 1.0, dual_scale_ = 1.0;

  Vec y_, s_, t_, z_, lambda_, h_;
  std::array<Vec, 5> saved_;
  Vec rg_, rp_, rdy_, rds_;
  Vec D_, kss_;
  SpMat K_;
  Eigen::SimplicialLDLT<SpMat, Eigen::Lower, Eigen::NaturalOrdering<int>> ldlt_;
};

}  // namespace

QpResult solve_qp(std::size_t num_vars, std::span<const QpHinge> hinges, std::span<const LinearConstraint> constraints,
                  double reg, std::span<const double> y0, const QpSettings& settings) {
  Solver solver(num_vars, hinges, constraints, reg);
  return solver.run(y0, settings);
}

}  // namespace linkinfer::hlmrf::ipm
