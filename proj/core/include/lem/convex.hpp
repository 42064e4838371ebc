#pragma once

// Convex quadratic programs with linear constraints, solved by a dense
// primal-dual interior-point method.
//
//   minimize    ½ xᵀHx + cᵀx + k
//   subject to  A x = b        (tagged equality rows, duals y)
//               G x ≤ h        (tagged inequality rows, duals z ≥ 0)
//               lo ≤ x ≤ hi    (variable bounds, duals z_lo, z_hi ≥ 0)
//
// Dual sign convention (all pricing depends on it): at an optimum
//
//   Hx + c + Aᵀy + Gᵀz − z_lo + z_hi = 0.
//
// So for `minimize f s.t. g(x) = 0` the reported dual λ satisfies
// ∇f + ∇gᵀλ = 0, and negating a row negates its dual.

#include <Eigen/Dense>

#include <limits>
#include <string>
#include <utility>
#include <vector>

namespace lem::convex {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct Term {
  int var;
  double coef;
};
using LinearExpr = std::vector<Term>;

struct Variable {
  std::string name;
  double lower = -kInf;
  double upper = kInf;
};

struct Constraint {
  LinearExpr terms;
  double rhs = 0.0;
  std::string tag;
};

struct SolveOptions {
  double feasibility_tol = 1e-8;
  double optimality_tol = 1e-8;
  double gap_tol = 1e-8;
  int max_iterations = 200;
};

class ConvexProgram {
public:
  int add_variable(std::string name, double lower = -kInf, double upper = kInf);
  void set_bounds(int var, double lower, double upper);

  /// Adds coef·x_i·x_j to the objective (coef·x_i² when i == j).
  void add_quadratic(int i, int j, double coef);
  void add_linear(int var, double coef);
  void add_constant(double value) { constant_ += value; }

  /// Σ terms = rhs. Returns the row index among equalities.
  int add_equality(LinearExpr terms, double rhs, std::string tag);
  /// Σ terms ≤ rhs. Returns the row index among inequalities.
  int add_inequality(LinearExpr terms, double rhs, std::string tag);
  void set_equality_rhs(int row, double rhs) { equalities_.at(static_cast<std::size_t>(row)).rhs = rhs; }

  int num_variables() const { return static_cast<int>(variables_.size()); }
  const std::vector<Variable>& variables() const { return variables_; }
  const std::vector<Constraint>& equalities() const { return equalities_; }
  const std::vector<Constraint>& inequalities() const { return inequalities_; }
  double constant() const { return constant_; }

  Eigen::MatrixXd hessian() const;
  Eigen::VectorXd linear() const;
  double objective(const Eigen::VectorXd& x) const;
  Eigen::VectorXd gradient(const Eigen::VectorXd& x) const;

  SolveOptions options;

private:
  struct QuadEntry {
    int i;
    int j;
    double coef;
  };
  std::vector<Variable> variables_;
  std::vector<QuadEntry> quad_;
  std::vector<double> linear_;
  double constant_ = 0.0;
  std::vector<Constraint> equalities_;
  std::vector<Constraint> inequalities_;
};

enum class SolveStatus { optimal, infeasible, unbounded, numerical_failure };

const char* to_string(SolveStatus s);

struct KktReport {
  double stationarity = 0.0;        // ‖∇f + Aᵀy + Gᵀz − z_lo + z_hi‖∞
  double primal_feasibility = 0.0;  // max equality / inequality / bound violation
  double dual_feasibility = 0.0;    // max negative part of inequality and bound duals
  double complementarity = 0.0;     // max |dual · slack|
  double duality_gap = 0.0;         // primal objective − dual objective
  double primal_objective = 0.0;
  double dual_objective = 0.0;

  double max_residual() const;
};

struct SolveResult {
  SolveStatus status = SolveStatus::numerical_failure;
  Eigen::VectorXd x;
  Eigen::VectorXd eq_duals;    // one per equality row
  Eigen::VectorXd ineq_duals;  // one per inequality row, ≥ 0
  Eigen::VectorXd lower_duals;
  Eigen::VectorXd upper_duals;
  double objective = 0.0;
  int iterations = 0;
  KktReport diagnostics;  // filled for every status; for failures it is the last iterate
  std::string message;

  bool ok() const { return status == SolveStatus::optimal; }
  /// Equality duals whose row tag equals `tag`, in row order.
  std::vector<std::pair<int, double>> duals_for(const ConvexProgram& prog, const std::string& tag) const;
};

/// Pure: identical programs give bit-identical results. Throws
/// std::invalid_argument for malformed programs (bad indices, non-PSD H).
SolveResult solve(const ConvexProgram& prog);

/// Throws std::logic_error unless `result.status` is optimal.
KktReport kkt_residuals(const ConvexProgram& prog, const SolveResult& result);

}  // namespace lem::convex
