#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <limits>
#include <string>

namespace ddrmpc {

enum class SolveStatus { Optimal, Infeasible, Unbounded, NumericalFailure };

const char* to_string(SolveStatus status);

// Convex program
//   minimize    0.5 x'Px + q'x + r
//   subject to  E x  = e
//               G x <= g
//               lb <= x <= ub
// P must be symmetric positive semidefinite. Bounds may be +-infinity.
struct ProgramDescription {
  int num_vars = 0;
  Eigen::VectorXd lower;  // lb, size num_vars
  Eigen::VectorXd upper;  // ub

  Eigen::SparseMatrix<double> eq_matrix;  // E
  Eigen::VectorXd eq_rhs;                 // e
  Eigen::SparseMatrix<double> ineq_matrix;  // G
  Eigen::VectorXd ineq_rhs;                 // g

  Eigen::SparseMatrix<double> quad;  // P
  Eigen::VectorXd linear;            // q
  double constant = 0.0;             // r

  int num_eq() const { return static_cast<int>(eq_rhs.size()); }
  int num_ineq() const { return static_cast<int>(ineq_rhs.size()); }

  // Structural checks: dimensions, finite rhs, symmetric PSD quadratic term
  // (eigenvalue floor -1e-9 relative, evaluated on the occupied submatrix).
  void validate() const;
};

// Auto picks the interior point method for large programs and operator
// splitting for small ones; splitting is also the only path that produces
// infeasibility and unboundedness certificates, so programs whose status
// matters more than speed should request Admm explicitly.
enum class SolveMethod { Auto, Admm, InteriorPoint };

struct SolverOptions {
  double eps_abs = 1e-8;
  double eps_rel = 1e-8;
  double eps_infeasible = 1e-7;
  int max_iterations = 200000;
  int check_interval = 25;

  SolveMethod method = SolveMethod::Auto;

  double rho = 0.1;      // ADMM penalty
  double sigma = 1e-6;   // proximal regularization
  double alpha = 1.6;    // relaxation
  bool adaptive_rho = true;
  bool polish = true;
  double polish_delta = 1e-8;
  int polish_refine_steps = 4;

  int ipm_max_iterations = 100;
};

struct Solution {
  SolveStatus status = SolveStatus::NumericalFailure;
  Eigen::VectorXd primal;
  double objective = std::numeric_limits<double>::quiet_NaN();
  double solve_time_seconds = 0.0;
  int iterations = 0;
  bool polished = false;
  double primal_residual = std::numeric_limits<double>::infinity();
  double dual_residual = std::numeric_limits<double>::infinity();
  std::string message;
};

// Optional warm start for receding-horizon reuse. Sizes must match the
// program (primal: num_vars, row_dual/row_slack: num_eq + num_ineq + number
// of bounded variables, in that row order); mismatches are ignored.
struct WarmStart {
  Eigen::VectorXd primal;
  Eigen::VectorXd row_dual;
  Eigen::VectorXd row_slack;
};

// Solve with equilibration and optional polishing. Method Auto routes by
// size (see SolveMethod); the warm start is consulted only by the splitting
// path, the interior point path restarts cold and is fast enough not to
// care. Deterministic: identical inputs and options produce identical
// output. Never throws on solvable-but-degenerate inputs; malformed
// programs (dimension mismatches, indefinite quadratic term) throw from
// validate().
Solution solve(const ProgramDescription& prog, const SolverOptions& opts = {},
               const WarmStart* warm = nullptr, WarmStart* warm_out = nullptr);

}  // namespace ddrmpc
