#pragma once

#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace gridflex {

/// Dense smooth NLP:
///   min f(x)  s.t.  cE(x) = 0,  cI(x) >= 0,  lb <= x <= ub.
/// All callbacks must be smooth near the iterates; derivative callbacks are
/// analytic (finite differences belong in tests only).
struct NlpProblem {
  int n = 0;
  std::function<double(const Eigen::VectorXd&)> objective;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> gradient;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> eq;        // may be null
  std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> eq_jac;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> ineq;      // may be null
  std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> ineq_jac;
  Eigen::VectorXd lower;  // empty => unbounded below
  Eigen::VectorXd upper;
};

struct NlpOptions {
  double tol_stationarity = 1e-6;
  double tol_feasibility = 1e-8;
  double tol_complementarity = 1e-8;
  int max_iter = 400;
  double elastic_penalty = 1e4;
};

enum class NlpStatus { Optimal, Infeasible, MaxIterations, NumericalFailure };

struct NlpSolution {
  NlpStatus status = NlpStatus::NumericalFailure;
  Eigen::VectorXd x;
  Eigen::VectorXd eq_mult;
  Eigen::VectorXd ineq_mult;   // >= 0
  Eigen::VectorXd lower_mult;  // box multipliers, >= 0
  Eigen::VectorXd upper_mult;
  std::vector<int> active_set;  // binding general inequalities
  int iterations = 0;
  double kkt_stationarity = 0.0;
  double feasibility = 0.0;
  double complementarity = 0.0;
  bool elastic_used = false;
  std::string diagnostic;

  bool ok() const { return status == NlpStatus::Optimal; }
};

/// Sequential quadratic programming with a damped BFGS Lagrangian Hessian,
/// an interior-point solve of the QP subproblem, an l1 merit line search
/// with a second-order correction, and elastic relaxation of infeasible
/// subproblems. Deterministic: identical inputs produce identical iterates.
NlpSolution solve_nlp(const NlpProblem& prob, const Eigen::VectorXd& x0,
                      const NlpOptions& opts = {});

}  // namespace gridflex
