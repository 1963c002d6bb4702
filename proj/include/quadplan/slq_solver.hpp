#pragma once

#include <chrono>
#include <cmath>
#include <concepts>
#include <optional>
#include <vector>

#include "quadplan/common.hpp"
#include "quadplan/contact_constraints.hpp"
#include "quadplan/lq_solver.hpp"

namespace quadplan {

struct Trajectory {
  std::vector<VectorXd> x;
  std::vector<VectorXd> u;
};

struct StepLinearization {
  VectorXd next;
  MatrixXd A, B;
};

struct StageCostQuadratic {
  MatrixXd Q, S, R;
  VectorXd q, r;
};

struct TerminalCostQuadratic {
  MatrixXd Q;
  VectorXd q;
};

/// Discrete-time optimal control problem over nodes 0..N with inputs on the N intervals.
template <class P>
concept OptimalControlProblem = requires(const P& p, int k, const VectorXd& x, const VectorXd& u) {
  { p.node_count() } -> std::convertible_to<int>;
  { p.initial_state() } -> std::convertible_to<VectorXd>;
  { p.step(k, x, u) } -> std::same_as<StepLinearization>;
  { p.next_state(k, x, u) } -> std::convertible_to<VectorXd>;
  { p.stage_cost(k, x, u) } -> std::convertible_to<double>;
  { p.terminal_cost(x) } -> std::convertible_to<double>;
  { p.stage_quadratic(k, x, u) } -> std::same_as<StageCostQuadratic>;
  { p.terminal_quadratic(x) } -> std::same_as<TerminalCostQuadratic>;
  { p.stage_constraints(k, x, u) } -> std::same_as<NodeConstraints>;
  { p.terminal_constraints(x) } -> std::same_as<NodeConstraints>;
  { p.initial_guess() } -> std::same_as<Trajectory>;
};

struct SolverSettings {
  int max_iterations = 20;
  double cost_tolerance = 1e-6;
  double constraint_tolerance = 1e-6;
  double defect_tolerance = 1e-6;
  double backtracking = 0.5;
  double min_step = 1e-4;
  double armijo = 1e-4;
  LqSettings ipm;

  void validate() const {
    if (max_iterations < 1 || !(cost_tolerance > 0) || !(constraint_tolerance > 0) || !(defect_tolerance > 0) ||
        !(min_step > 0) || !(backtracking > 0 && backtracking < 1) || !(armijo > 0 && armijo < 1))
      throw Error(ErrorCode::kInvalidArgument, "invalid solver settings");
  }
};

enum class SolveStatus { kConverged, kMaxIterations, kStalled };

inline const char* status_name(SolveStatus s) {
  switch (s) {
    case SolveStatus::kConverged: return "converged";
    case SolveStatus::kMaxIterations: return "max_iterations";
    case SolveStatus::kStalled: return "stalled";
  }
  return "?";
}

struct IterationRecord {
  double cost = 0.0;
  double merit = 0.0;
  double step = 0.0;
  double penalty = 0.0;
  double max_equality = 0.0;
  double max_inequality = 0.0;
  double max_defect = 0.0;
  int ipm_iterations = 0;
  double wall_ms = 0.0;
};

struct TrajectorySolution {
  Trajectory trajectory;
  std::vector<double> equality_residual;
  std::vector<double> inequality_violation;
  std::vector<double> defects;
  double cost = 0.0;
  int iterations = 0;
  SolveStatus status = SolveStatus::kMaxIterations;
  std::vector<IterationRecord> history;

  bool converged() const { return status == SolveStatus::kConverged; }
  double max_equality_residual() const { return max_of(equality_residual); }
  double max_inequality_violation() const { return max_of(inequality_violation); }
  double max_defect() const { return max_of(defects); }
  double total_ms() const {
    double t = 0.0;
    for (const auto& h : history) t += h.wall_ms;
    return t;
  }

 private:
  static double max_of(const std::vector<double>& v) {
    double m = 0.0;
    for (double d : v) m = std::max(m, d);
    return m;
  }
};

/// Shooting defects F(x_k, u_k) − x_{k+1} per interval.
template <OptimalControlProblem P>
std::vector<VectorXd> compute_defects(const P& problem, const Trajectory& traj) {
  std::vector<VectorXd> d(traj.u.size());
  for (std::size_t k = 0; k < traj.u.size(); ++k)
    d[k] = problem.next_state(static_cast<int>(k), traj.x[k], traj.u[k]) - traj.x[k + 1];
  return d;
}

namespace detail {

struct Evaluation {
  double cost = 0.0;
  double violation = 0.0;
  std::vector<double> eq, ineq, defect;
};

template <OptimalControlProblem P>
Evaluation evaluate(const P& problem, const Trajectory& t) {
  Evaluation ev;
  const int N = problem.node_count() - 1;
  ev.eq.resize(N + 1);
  ev.ineq.resize(N + 1);
  ev.defect.resize(N);
  const VectorXd x0 = problem.initial_state();
  ev.violation += (t.x[0] - x0).lpNorm<1>();
  for (int k = 0; k <= N; ++k) {
    const NodeConstraints c =
        k < N ? problem.stage_constraints(k, t.x[k], t.u[k]) : problem.terminal_constraints(t.x[k]);
    ev.eq[k] = c.max_equality_residual();
    ev.ineq[k] = c.max_inequality_violation();
    ev.violation += c.eq.template lpNorm<1>();
    if (c.ineq.size()) ev.violation += (-c.ineq).cwiseMax(0.0).sum();
    if (k < N) {
      ev.cost += problem.stage_cost(k, t.x[k], t.u[k]);
      const VectorXd d = problem.next_state(k, t.x[k], t.u[k]) - t.x[k + 1];
      ev.defect[k] = d.cwiseAbs().maxCoeff();
      ev.violation += d.lpNorm<1>();
    } else {
      ev.cost += problem.terminal_cost(t.x[k]);
    }
  }
  return ev;
}

inline double max_of(const std::vector<double>& v) {
  double m = 0.0;
  for (double d : v) m = std::max(m, d);
  return m;
}

}  // namespace detail

struct LineSearchResult {
  double step = 0.0;
  bool accepted = false;
  double merit = 0.0;
};

/// Backtracking on the ℓ1 merit J + ν·(constraint and defect violations) with an Armijo condition.
template <class MeritFn>
LineSearchResult line_search(const MeritFn& merit, double merit0, double directional_derivative,
                             const SolverSettings& settings) {
  LineSearchResult out;
  const double slack = 1e-12 * std::max(1.0, std::abs(merit0));
  for (double alpha = 1.0; alpha >= settings.min_step; alpha *= settings.backtracking) {
    const double m = merit(alpha);
    if (std::isfinite(m) && m <= merit0 + settings.armijo * alpha * directional_derivative + slack) {
      out.step = alpha;
      out.accepted = true;
      out.merit = m;
      return out;
    }
  }
  return out;
}

/// Sequential linear-quadratic solver with multiple shooting; each subproblem goes to the interior point LQ solver.
template <OptimalControlProblem P>
TrajectorySolution solve(const P& problem, const SolverSettings& settings = {},
                         std::optional<Trajectory> initial_guess = std::nullopt) {
  settings.validate();
  using clock = std::chrono::steady_clock;
  const int N = problem.node_count() - 1;
  if (N < 1) throw Error(ErrorCode::kInvalidArgument, "problem needs at least two nodes");
  Trajectory traj = initial_guess ? std::move(*initial_guess) : problem.initial_guess();
  if (static_cast<int>(traj.x.size()) != N + 1 || static_cast<int>(traj.u.size()) != N)
    throw Error(ErrorCode::kDimensionMismatch, "initial guess does not match the node grid");

  LqSolver lq(settings.ipm);
  TrajectorySolution sol;
  double penalty = 1.0;
  auto ev = detail::evaluate(problem, traj);
  const auto merit_of = [&](const detail::Evaluation& e) { return e.cost + penalty * e.violation; };

  for (int it = 0; it < settings.max_iterations; ++it) {
    const auto t_start = clock::now();
    LqProblem sub;
    sub.stages.resize(N + 1);
    sub.x0 = problem.initial_state() - traj.x[0];
    for (int k = 0; k <= N; ++k) {
      auto& st = sub.stages[k];
      NodeConstraints c;
      if (k < N) {
        const auto lin = problem.step(k, traj.x[k], traj.u[k]);
        st.A = lin.A;
        st.B = lin.B;
        st.c = lin.next - traj.x[k + 1];
        auto qc = problem.stage_quadratic(k, traj.x[k], traj.u[k]);
        st.Q = std::move(qc.Q);
        st.S = std::move(qc.S);
        st.R = std::move(qc.R);
        st.q = std::move(qc.q);
        st.r = std::move(qc.r);
        c = problem.stage_constraints(k, traj.x[k], traj.u[k]);
      } else {
        auto qc = problem.terminal_quadratic(traj.x[k]);
        const int nx = static_cast<int>(qc.Q.rows());
        st.A = MatrixXd::Zero(0, nx);
        st.B = MatrixXd::Zero(0, 0);
        st.c = VectorXd::Zero(0);
        st.Q = std::move(qc.Q);
        st.q = std::move(qc.q);
        st.S = MatrixXd::Zero(0, nx);
        st.R = MatrixXd::Zero(0, 0);
        st.r = VectorXd::Zero(0);
        c = problem.terminal_constraints(traj.x[k]);
      }
      const int nx = st.nx(), nu = st.nu();
      st.C = std::move(c.eq_x);
      st.D = c.eq_u.size() ? std::move(c.eq_u) : MatrixXd::Zero(c.eq.size(), nu);
      st.e = std::move(c.eq);
      st.G = c.ineq_x.size() ? std::move(c.ineq_x) : MatrixXd::Zero(c.ineq.size(), nx);
      st.F = c.ineq_u.size() ? std::move(c.ineq_u) : MatrixXd::Zero(c.ineq.size(), nu);
      st.f = std::move(c.ineq);
      if (st.C.rows() != st.e.size()) st.C = MatrixXd::Zero(st.e.size(), nx);
    }
    const LqSolution step = lq.solve(sub);

    // Linear and quadratic model terms along the step for the penalty update and the Armijo slope.
    double slope = 0.0, curvature = 0.0;
    for (int k = 0; k <= N; ++k) {
      const auto& st = sub.stages[k];
      const VectorXd& dx = step.x[k];
      slope += st.q.dot(dx);
      curvature += dx.dot(st.Q * dx);
      if (k < N) {
        const VectorXd& du = step.u[k];
        slope += st.r.dot(du);
        curvature += du.dot(st.R * du) + 2.0 * du.dot(st.S * dx);
      }
    }
    if (ev.violation > 1e-12) {
      const double required = (slope + 0.5 * std::max(curvature, 0.0)) / (0.5 * ev.violation);
      penalty = std::max(penalty, required + 1.0);
    }
    const double merit0 = merit_of(ev);
    const double derivative = slope - penalty * ev.violation;

    Trajectory trial = traj;
    detail::Evaluation trial_ev;
    const auto merit = [&](double alpha) {
      for (int k = 0; k <= N; ++k) {
        trial.x[k] = traj.x[k] + alpha * step.x[k];
        if (k < N) trial.u[k] = traj.u[k] + alpha * step.u[k];
      }
      trial_ev = detail::evaluate(problem, trial);
      return merit_of(trial_ev);
    };
    const auto ls = line_search(merit, merit0, derivative, settings);

    IterationRecord rec;
    rec.ipm_iterations = step.iterations;
    rec.penalty = penalty;
    sol.iterations = it + 1;
    if (!ls.accepted) {
      rec.cost = ev.cost;
      rec.merit = merit0;
      rec.max_equality = detail::max_of(ev.eq);
      rec.max_inequality = detail::max_of(ev.ineq);
      rec.max_defect = detail::max_of(ev.defect);
      rec.wall_ms = std::chrono::duration<double, std::milli>(clock::now() - t_start).count();
      sol.history.push_back(rec);
      sol.status = SolveStatus::kStalled;
      break;
    }
    const double previous_cost = ev.cost;
    traj = trial;
    ev = trial_ev;
    if (!std::isfinite(ev.cost)) throw Error(ErrorCode::kNanDetected, "trajectory cost is not finite");

    rec.cost = ev.cost;
    rec.merit = merit_of(ev);
    rec.step = ls.step;
    rec.max_equality = detail::max_of(ev.eq);
    rec.max_inequality = detail::max_of(ev.ineq);
    rec.max_defect = detail::max_of(ev.defect);
    rec.wall_ms = std::chrono::duration<double, std::milli>(clock::now() - t_start).count();
    sol.history.push_back(rec);

    const double rel_decrease = std::abs(previous_cost - ev.cost) / std::max(1.0, std::abs(previous_cost));
    const bool feasible = rec.max_equality <= settings.constraint_tolerance &&
                          rec.max_inequality <= settings.constraint_tolerance &&
                          rec.max_defect <= settings.defect_tolerance;
    if (feasible && rel_decrease < settings.cost_tolerance) {
      sol.status = SolveStatus::kConverged;
      break;
    }
  }
  if (sol.status != SolveStatus::kConverged && sol.status != SolveStatus::kStalled)
    sol.status = SolveStatus::kMaxIterations;
  sol.trajectory = std::move(traj);
  sol.cost = ev.cost;
  sol.equality_residual = ev.eq;
  sol.inequality_violation = ev.ineq;
  sol.defects = ev.defect;
  return sol;
}

}  // namespace quadplan
