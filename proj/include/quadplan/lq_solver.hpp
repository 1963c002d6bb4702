#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "quadplan/common.hpp"

namespace quadplan {

/// One stage of the linear-quadratic subproblem. The last stage of a problem is terminal and has no input.
///   cost        ½ xᵀQx + uᵀSx + ½ uᵀRu + qᵀx + rᵀu
///   dynamics    x⁺ = A x + B u + c
///   equality    C x + D u + e = 0
///   inequality  G x + F u + f ≥ 0
struct LqStage {
  MatrixXd A, B;
  VectorXd c;
  MatrixXd Q, S, R;
  VectorXd q, r;
  MatrixXd C, D;
  VectorXd e;
  MatrixXd G, F;
  VectorXd f;

  int nx() const { return static_cast<int>(Q.rows()); }
  int nu() const { return static_cast<int>(R.rows()); }
  int n_eq() const { return static_cast<int>(e.size()); }
  int n_ineq() const { return static_cast<int>(f.size()); }

  /// Zero-filled stage with the given sizes; nx_next is ignored for terminal stages (nu = 0).
  static LqStage zeros(int nx, int nu, int nx_next, int n_eq = 0, int n_ineq = 0) {
    LqStage s;
    s.A = MatrixXd::Zero(nu > 0 ? nx_next : 0, nx);
    s.B = MatrixXd::Zero(nu > 0 ? nx_next : 0, nu);
    s.c = VectorXd::Zero(nu > 0 ? nx_next : 0);
    s.Q = MatrixXd::Zero(nx, nx);
    s.S = MatrixXd::Zero(nu, nx);
    s.R = MatrixXd::Zero(nu, nu);
    s.q = VectorXd::Zero(nx);
    s.r = VectorXd::Zero(nu);
    s.C = MatrixXd::Zero(n_eq, nx);
    s.D = MatrixXd::Zero(n_eq, nu);
    s.e = VectorXd::Zero(n_eq);
    s.G = MatrixXd::Zero(n_ineq, nx);
    s.F = MatrixXd::Zero(n_ineq, nu);
    s.f = VectorXd::Zero(n_ineq);
    return s;
  }
};

struct LqProblem {
  std::vector<LqStage> stages;
  VectorXd x0;

  int horizon() const { return static_cast<int>(stages.size()) - 1; }

  void validate() const {
    if (stages.size() < 2) throw Error(ErrorCode::kInvalidArgument, "LQ problem needs at least two nodes");
    if (x0.size() != stages.front().nx()) throw Error(ErrorCode::kDimensionMismatch, "x0 size");
    if (!x0.allFinite()) throw Error(ErrorCode::kNanDetected, "initial state is not finite");
    for (std::size_t k = 0; k < stages.size(); ++k) {
      const auto& s = stages[k];
      const bool terminal = k + 1 == stages.size();
      const int nx = s.nx(), nu = s.nu();
      if (terminal && nu != 0) throw Error(ErrorCode::kDimensionMismatch, "terminal stage cannot have inputs");
      const auto check = [&](const MatrixXd& m, int rows, int cols) {
        if (m.rows() != rows || m.cols() != cols) throw Error(ErrorCode::kDimensionMismatch, "LQ stage block size");
      };
      check(s.Q, nx, nx);
      check(s.S, nu, nx);
      check(s.q, nx, 1);
      check(s.r, nu, 1);
      check(s.C, s.n_eq(), nx);
      check(s.D, s.n_eq(), nu);
      check(s.G, s.n_ineq(), nx);
      check(s.F, s.n_ineq(), nu);
      const bool finite = s.Q.allFinite() && s.S.allFinite() && s.R.allFinite() && s.q.allFinite() &&
                          s.r.allFinite() && s.C.allFinite() && s.D.allFinite() && s.e.allFinite() &&
                          s.G.allFinite() && s.F.allFinite() && s.f.allFinite() && s.A.allFinite() &&
                          s.B.allFinite() && s.c.allFinite();
      if (!finite) throw Error(ErrorCode::kNanDetected, "LQ stage data is not finite");
      if (!terminal) {
        const int nn = stages[k + 1].nx();
        check(s.A, nn, nx);
        check(s.B, nn, nu);
        check(s.c, nn, 1);
      }
    }
  }
};

struct LqSettings {
  double tolerance = 1e-9;
  int max_iterations = 60;
  double fraction_to_boundary = 0.995;
  double regularization = 1e-6;
  int max_regularization_steps = 8;
  double rank_tolerance = 1e-9;
  /// Allowed violation of state-only equalities that cannot be met by any input.
  double consistency_tolerance = 1e-7;
  /// Complementarity level beyond which the inequalities are declared infeasible.
  double divergence_threshold = 1e12;
};

struct LqSolution {
  std::vector<VectorXd> x, u;
  /// Inequality multipliers and slacks per stage.
  std::vector<VectorXd> z, s;
  int iterations = 0;
  bool converged = false;
  double mu = 0.0;
  double primal_residual = 0.0;
  std::vector<double> mu_history;
  int regularizations = 0;
};

namespace detail {

/// Constraint elimination data that depends only on the constraint and dynamics matrices.
struct StageStructure {
  /// u = T ê + V2 w on stage rows ê = [e; H⁺c + h⁺] (stacked with Ĉ for the feedback part).
  MatrixXd T, V2, C_hat;
  /// Pure-state rows left on this node: H x + W ê = 0, plus the consistency rows that must vanish.
  MatrixXd H, W, consistency;
};

struct StageFactor {
  MatrixXd Quu, Qux, K, P_next;
  Eigen::LLT<MatrixXd> llt;
};

}  // namespace detail

/// Stagewise Riccati solver for equality-constrained LQ problems with a barrier-modified Hessian,
/// driven by a primal-dual interior point loop for the inequalities.
class LqSolver {
 public:
  explicit LqSolver(LqSettings settings = {}) : settings_(settings) {}

  LqSolution solve(const LqProblem& problem) {
    problem.validate();
    analyze(problem);
    const int N = problem.horizon();
    int m_total = 0;
    for (const auto& st : problem.stages) m_total += st.n_ineq();

    LqSolution sol;
    std::vector<VectorXd> z(N + 1), s(N + 1), zhat(N + 1), w_diag(N + 1);
    for (int k = 0; k <= N; ++k) {
      z[k] = VectorXd::Ones(problem.stages[k].n_ineq());
      w_diag[k] = VectorXd::Zero(problem.stages[k].n_ineq());
    }

    // Stationary starting point: equality-constrained minimizer with the initial multipliers folded in.
    factorize(problem, w_diag, sol.regularizations);
    for (int k = 0; k <= N; ++k) zhat[k] = z[k];
    auto [x, u] = solve_rhs(problem, zhat);
    if (m_total == 0) {
      sol.x = std::move(x);
      sol.u = std::move(u);
      sol.z = std::move(z);
      sol.s.assign(N + 1, VectorXd());
      sol.converged = true;
      return sol;
    }
    std::vector<VectorXd> r(N + 1);
    for (int k = 0; k <= N; ++k) {
      r[k] = ineq_value(problem.stages[k], x[k], k < N ? u[k] : VectorXd());
      s[k] = r[k].cwiseMax(1.0);
    }

    const double tau = settings_.fraction_to_boundary;
    std::vector<VectorXd> ds(N + 1), dz(N + 1), ds_aff(N + 1), dz_aff(N + 1);
    for (int it = 0; it < settings_.max_iterations; ++it) {
      double gap = 0.0, primal = 0.0;
      for (int k = 0; k <= N; ++k) {
        if (!s[k].size()) continue;
        gap += s[k].dot(z[k]);
        primal = std::max(primal, (r[k] - s[k]).cwiseAbs().maxCoeff());
      }
      const double mu = gap / m_total;
      sol.mu_history.push_back(mu);
      sol.mu = mu;
      sol.primal_residual = primal;
      sol.iterations = it;
      if (!std::isfinite(mu) || mu > settings_.divergence_threshold)
        throw Error(ErrorCode::kInfeasibleSubproblem, "interior point iterates diverged");
      if (mu <= settings_.tolerance && primal <= settings_.tolerance) {
        sol.converged = true;
        break;
      }

      for (int k = 0; k <= N; ++k) w_diag[k] = z[k].cwiseQuotient(s[k]);
      factorize(problem, w_diag, sol.regularizations);

      // Predictor.
      for (int k = 0; k <= N; ++k) zhat[k] = z[k] - w_diag[k].cwiseProduct(problem.stages[k].f);
      auto [xa, ua] = solve_rhs(problem, zhat);
      directions(problem, xa, ua, zhat, w_diag, s, z, ds_aff, dz_aff);
      const double a_aff = std::min(max_step(s, ds_aff, 1.0), max_step(z, dz_aff, 1.0));
      double gap_aff = 0.0;
      for (int k = 0; k <= N; ++k)
        gap_aff += (s[k] + a_aff * ds_aff[k]).dot(z[k] + a_aff * dz_aff[k]);
      const double sigma = std::pow(std::max(gap_aff, 0.0) / m_total / mu, 3);

      // Corrector with centering.
      for (int k = 0; k <= N; ++k) {
        const auto& st = problem.stages[k];
        const VectorXd corr = ds_aff[k].cwiseProduct(dz_aff[k]);
        zhat[k] = z[k] + ((sigma * mu) * VectorXd::Ones(st.n_ineq()) - corr).cwiseQuotient(s[k]) -
                  w_diag[k].cwiseProduct(st.f);
      }
      auto [xn, un] = solve_rhs(problem, zhat);
      directions(problem, xn, un, zhat, w_diag, s, z, ds, dz);
      const double alpha = std::min({1.0, max_step(s, ds, tau), max_step(z, dz, tau)});

      for (int k = 0; k <= N; ++k) {
        x[k] += alpha * (xn[k] - x[k]);
        if (k < N) u[k] += alpha * (un[k] - u[k]);
        s[k] += alpha * ds[k];
        z[k] += alpha * dz[k];
        r[k] = ineq_value(problem.stages[k], x[k], k < N ? u[k] : VectorXd());
      }
      sol.iterations = it + 1;
    }
    if (!sol.converged) {
      double gap = 0.0, primal = 0.0;
      for (int k = 0; k <= N; ++k) {
        if (!s[k].size()) continue;
        gap += s[k].dot(z[k]);
        primal = std::max(primal, (r[k] - s[k]).cwiseAbs().maxCoeff());
      }
      sol.mu = gap / m_total;
      sol.primal_residual = primal;
      sol.converged = sol.mu <= settings_.tolerance && primal <= settings_.tolerance;
      if (primal > 1e-3 * std::max(1.0, max_abs(r)))
        throw Error(ErrorCode::kInfeasibleSubproblem, "inequality constraints could not be satisfied");
    }
    sol.x = std::move(x);
    sol.u = std::move(u);
    sol.z = std::move(z);
    sol.s = std::move(s);
    return sol;
  }

  const LqSettings& settings() const { return settings_; }

 private:
  static VectorXd ineq_value(const LqStage& st, const VectorXd& x, const VectorXd& u) {
    VectorXd v = st.G * x + st.f;
    if (st.nu() > 0 && st.n_ineq() > 0) v.noalias() += st.F * u;
    return v;
  }

  static double max_abs(const std::vector<VectorXd>& v) {
    double m = 0.0;
    for (const auto& x : v)
      if (x.size()) m = std::max(m, x.cwiseAbs().maxCoeff());
    return m;
  }

  static double max_step(const std::vector<VectorXd>& v, const std::vector<VectorXd>& dv, double scale) {
    double alpha = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < v.size(); ++k)
      for (int i = 0; i < v[k].size(); ++i)
        if (dv[k][i] < 0.0) alpha = std::min(alpha, -v[k][i] / dv[k][i]);
    return std::min(1.0, scale * alpha);
  }

  void directions(const LqProblem& problem, const std::vector<VectorXd>& x, const std::vector<VectorXd>& u,
                  const std::vector<VectorXd>& zhat, const std::vector<VectorXd>& w_diag,
                  const std::vector<VectorXd>& s, const std::vector<VectorXd>& z, std::vector<VectorXd>& ds,
                  std::vector<VectorXd>& dz) const {
    const int N = problem.horizon();
    for (int k = 0; k <= N; ++k) {
      const auto& st = problem.stages[k];
      VectorXd gw = st.G * x[k];
      if (k < N && st.n_ineq() > 0) gw.noalias() += st.F * u[k];
      ds[k] = gw + st.f - s[k];
      dz[k] = zhat[k] - w_diag[k].cwiseProduct(gw) - z[k];
    }
  }

  /// Eliminates equality constraints stage by stage; pure-state leftovers travel backwards to earlier nodes.
  void analyze(const LqProblem& problem) {
    const int N = problem.horizon();
    structure_.assign(N + 1, {});
    const auto compress = [&](const MatrixXd& M, detail::StageStructure& out, const MatrixXd& rhs_map) {
      const int nx = static_cast<int>(M.cols());
      if (M.rows() == 0) {
        out.H = MatrixXd::Zero(0, nx);
        out.W = MatrixXd::Zero(0, rhs_map.cols());
        out.consistency = MatrixXd::Zero(0, rhs_map.cols());
        return;
      }
      Eigen::JacobiSVD<MatrixXd> svd(M, Eigen::ComputeFullU | Eigen::ComputeFullV);
      const auto& sv = svd.singularValues();
      const double smax = sv.size() ? sv[0] : 0.0;
      int rank = 0;
      while (rank < sv.size() && sv[rank] > settings_.rank_tolerance * std::max(1.0, smax)) ++rank;
      out.H = svd.matrixV().leftCols(rank).transpose();
      out.W = sv.head(rank).cwiseInverse().asDiagonal() * svd.matrixU().leftCols(rank).transpose() * rhs_map;
      out.consistency = svd.matrixU().rightCols(M.rows() - rank).transpose() * rhs_map;
    };

    {
      const auto& st = problem.stages[N];
      auto& out = structure_[N];
      out.C_hat = st.C;
      compress(st.C, out, MatrixXd::Identity(st.n_eq(), st.n_eq()));
    }
    for (int k = N - 1; k >= 0; --k) {
      const auto& st = problem.stages[k];
      const auto& next = structure_[k + 1];
      auto& out = structure_[k];
      const int nu = st.nu(), nx = st.nx();
      const int m = st.n_eq() + static_cast<int>(next.H.rows());
      MatrixXd D_hat(m, nu);
      out.C_hat.resize(m, nx);
      D_hat << st.D, next.H * st.B;
      out.C_hat << st.C, next.H * st.A;
      if (m == 0) {
        out.T = MatrixXd::Zero(nu, 0);
        out.V2 = MatrixXd::Identity(nu, nu);
        compress(MatrixXd::Zero(0, nx), out, MatrixXd::Zero(0, 0));
        continue;
      }
      Eigen::JacobiSVD<MatrixXd> svd(D_hat, Eigen::ComputeFullU | Eigen::ComputeFullV);
      const auto& sv = svd.singularValues();
      const double smax = sv.size() ? sv[0] : 0.0;
      int rank = 0;
      while (rank < sv.size() && sv[rank] > settings_.rank_tolerance * std::max(1.0, smax)) ++rank;
      const MatrixXd U1 = svd.matrixU().leftCols(rank), U2 = svd.matrixU().rightCols(m - rank);
      const MatrixXd V1 = svd.matrixV().leftCols(rank);
      out.T = -V1 * sv.head(rank).cwiseInverse().asDiagonal() * U1.transpose();
      out.V2 = svd.matrixV().rightCols(nu - rank);
      compress(U2.transpose() * out.C_hat, out, U2.transpose());
    }
  }

  void factorize(const LqProblem& problem, const std::vector<VectorXd>& w_diag, int& regularizations) {
    const int N = problem.horizon();
    factors_.resize(N);
    const auto& term = problem.stages[N];
    MatrixXd P = term.Q;
    if (term.n_ineq()) P.noalias() += term.G.transpose() * w_diag[N].asDiagonal() * term.G;
    for (int k = N - 1; k >= 0; --k) {
      const auto& st = problem.stages[k];
      const auto& ss = structure_[k];
      auto& fac = factors_[k];
      MatrixXd Qxx = st.Q, Qux = st.S, Quu = st.R;
      if (st.n_ineq()) {
        const auto Wd = w_diag[k].asDiagonal();
        Qxx.noalias() += st.G.transpose() * Wd * st.G;
        Qux.noalias() += st.F.transpose() * Wd * st.G;
        Quu.noalias() += st.F.transpose() * Wd * st.F;
      }
      const MatrixXd PA = P * st.A, PB = P * st.B;
      Qxx.noalias() += st.A.transpose() * PA;
      Qux.noalias() += st.B.transpose() * PA;
      Quu.noalias() += st.B.transpose() * PB;
      fac.P_next = P;

      const MatrixXd Kc = ss.T * ss.C_hat;
      MatrixXd Hww = ss.V2.transpose() * Quu * ss.V2;
      fac.llt.compute(Hww);
      double reg = settings_.regularization;
      for (int attempt = 0; fac.llt.info() != Eigen::Success; ++attempt) {
        if (attempt >= settings_.max_regularization_steps)
          throw Error(ErrorCode::kFactorizationFailure, "Riccati block is not positive definite");
        ++regularizations;
        Hww.diagonal().array() += reg;
        reg *= 10.0;
        fac.llt.compute(Hww);
      }
      fac.K = Kc;
      if (ss.V2.cols() > 0) fac.K.noalias() -= ss.V2 * fac.llt.solve(ss.V2.transpose() * (Quu * Kc + Qux));
      P = Qxx;
      const MatrixXd QuxT_K = Qux.transpose() * fac.K;
      P.noalias() += fac.K.transpose() * Quu * fac.K;
      P += QuxT_K + QuxT_K.transpose();
      P = 0.5 * (P + P.transpose()).eval();
      fac.Quu = std::move(Quu);
      fac.Qux = std::move(Qux);
    }
  }

  /// Backward pass for the affine terms with gradients shifted by −Gᵀẑ, followed by the forward rollout.
  std::pair<std::vector<VectorXd>, std::vector<VectorXd>> solve_rhs(const LqProblem& problem,
                                                                    const std::vector<VectorXd>& zhat) const {
    const int N = problem.horizon();
    std::vector<VectorXd> k_ff(N);
    const auto check = [&](const detail::StageStructure& ss, const VectorXd& e_hat) {
      if (ss.consistency.rows() == 0) return;
      const double v = (ss.consistency * e_hat).cwiseAbs().maxCoeff();
      if (v > settings_.consistency_tolerance * std::max(1.0, e_hat.cwiseAbs().maxCoeff()))
        throw Error(ErrorCode::kInfeasibleSubproblem, "equality constraints are inconsistent");
    };
    const auto& term = problem.stages[N];
    VectorXd p = term.q;
    if (term.n_ineq()) p.noalias() -= term.G.transpose() * zhat[N];
    check(structure_[N], term.e);
    VectorXd h = structure_[N].W * term.e;
    for (int k = N - 1; k >= 0; --k) {
      const auto& st = problem.stages[k];
      const auto& ss = structure_[k];
      const auto& fac = factors_[k];
      VectorXd qx = st.q, qu = st.r;
      if (st.n_ineq()) {
        qx.noalias() -= st.G.transpose() * zhat[k];
        qu.noalias() -= st.F.transpose() * zhat[k];
      }
      const VectorXd Pc_p = fac.P_next * st.c + p;
      qx.noalias() += st.A.transpose() * Pc_p;
      qu.noalias() += st.B.transpose() * Pc_p;

      VectorXd e_hat(ss.C_hat.rows());
      e_hat << st.e, structure_[k + 1].H * st.c + h;
      VectorXd kk = ss.T * e_hat;
      if (ss.V2.cols() > 0) kk.noalias() -= ss.V2 * fac.llt.solve(ss.V2.transpose() * (fac.Quu * kk + qu));
      p = qx;
      p.noalias() += fac.K.transpose() * (fac.Quu * kk + qu);
      p.noalias() += fac.Qux.transpose() * kk;
      check(ss, e_hat);
      h = ss.W * e_hat;
      k_ff[k] = std::move(kk);
    }
    const auto& s0 = structure_[0];
    if (s0.H.rows() > 0) {
      const double v = (s0.H * problem.x0 + h).cwiseAbs().maxCoeff();
      if (v > settings_.consistency_tolerance * std::max(1.0, h.cwiseAbs().maxCoeff()))
        throw Error(ErrorCode::kInfeasibleSubproblem, "initial state violates propagated equality constraints");
    }
    std::vector<VectorXd> x(N + 1), u(N);
    x[0] = problem.x0;
    for (int k = 0; k < N; ++k) {
      const auto& st = problem.stages[k];
      u[k] = factors_[k].K * x[k] + k_ff[k];
      x[k + 1] = st.A * x[k] + st.B * u[k] + st.c;
    }
    return {std::move(x), std::move(u)};
  }

  LqSettings settings_;
  std::vector<detail::StageStructure> structure_;
  std::vector<detail::StageFactor> factors_;
};

}  // namespace quadplan
