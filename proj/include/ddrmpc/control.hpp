#pragma once

#include <Eigen/Dense>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "ddrmpc/dynamics.hpp"
#include "ddrmpc/reform.hpp"
#include "ddrmpc/solver.hpp"
#include "ddrmpc/uncertainty.hpp"

namespace ddrmpc {

enum class PolicyKind { Adf, Gadf };

// Weekly schedule u = max(b - a x, 0): the dose is fixed from the moisture
// level at the week boundary and held for the next 28 periods.
struct OpenLoopConfig {
  double a = 0.07;  // per mm of week-start moisture
  double b = 6.4;   // mm
};

// Threshold logic: a constant dose whenever the level is at or below the
// threshold, nothing otherwise.
struct RuleBasedConfig {
  double threshold = 33.0;  // mm
  double dose = 3.0;        // mm
};

// Certainty-equivalent MPC: forecasts taken at face value, no recourse.
struct CempcConfig {};

// Robust MPC with an affine disturbance feedback policy against the fixed
// 1-norm ball ||w||_1 <= omega, the shape-agnostic baseline.
struct NormRmpcConfig {
  double omega = 2.0;
};

// Tracks a moisture setpoint on the nominal trajectory under input bounds
// only; never infeasible, never robust.
struct SpTrackingConfig {
  double setpoint = 33.0;  // mm
};

struct DdrmpcConfig {
  PolicyKind policy = PolicyKind::Gadf;
  CostSpec cost;
};

using ControllerConfig = std::variant<OpenLoopConfig, RuleBasedConfig, CempcConfig,
                                      NormRmpcConfig, SpTrackingConfig, DdrmpcConfig>;

// Stable identifier for reports: "open_loop", "rule_based", "cempc",
// "norm_rmpc", "sp_tracking", "ddrmpc_adf" or "ddrmpc_gadf".
std::string controller_name(const ControllerConfig& config);

// Lead 1..H forecasts available at decision time, mm per period. Both
// vectors must be the same length; lengths below the configured horizon
// truncate it.
struct Forecasts {
  Eigen::VectorXd ehat;
  Eigen::VectorXd phat;
};

// Bookkeeping of the last decide() call. The rule controllers report
// Optimal with zero solve time and zero iterations.
struct DecisionInfo {
  SolveStatus status = SolveStatus::Optimal;
  double solve_seconds = 0.0;
  int iterations = 0;
  bool soft_fallback = false;
  double max_slack = 0.0;  // mm, largest state-row relaxation used
  int horizon_used = 0;
};

// Program of a nominal (non-robust) MPC variant; decisions are the inputs
// themselves, u_t at index u0 + t.
struct NominalProgram {
  ProgramDescription program;
  int horizon = 0;
  int u0 = 0;
  std::vector<int> slack_vars;
};

NominalProgram build_cempc_program(const StackedDynamics& dyn, const ConstraintSet& cons,
                                   double x0, const Eigen::VectorXd& v_forecast,
                                   const CostSpec& cost, bool soft_state_slack = false,
                                   double slack_penalty = 1e4);
NominalProgram build_sp_tracking_program(const StackedDynamics& dyn, double x0,
                                         const Eigen::VectorXd& v_forecast, double setpoint,
                                         double u_max);

// Affine-policy robust counterpart of the 1-norm ball. Each robust row's
// worst case max{a'w : ||w||_1 <= omega} enters through its closed form
// omega max_c |a_c|, linearized by one epigraph variable per row family.
struct NormRmpcProgram {
  ProgramDescription program;
  int horizon = 0;
  int h0 = 0;
  Eigen::MatrixXi m_idx;  // gain variables, -1 on the acausal pattern
  std::vector<int> slack_vars;
};

NormRmpcProgram build_norm_rmpc_program(const StackedDynamics& dyn, const ConstraintSet& cons,
                                        double x0, const Eigen::VectorXd& v_forecast,
                                        double omega, const CostSpec& cost,
                                        bool soft_state_slack = false,
                                        double slack_penalty = 1e4);

// One decision maker behind a uniform interface. MPC variants solve their
// receding-horizon program and return the first input; on a failed solve
// they retry once with softened state rows, and only then give up by
// throwing (after dumping the offending program when dump_dir is set).
// Instances hold per-call scratch, so a single instance must not be called
// concurrently; distinct instances are independent.
class Controller {
 public:
  // trained is required for Ddrmpc and ignored elsewhere; the pointer must
  // outlive the controller.
  Controller(const ControllerConfig& config, const WaterBalanceParams& params,
             const ConstraintSet& cons, const TrainedUncertainty* trained = nullptr,
             std::string dump_dir = "");

  const std::string& name() const { return name_; }
  const DecisionInfo& last_decision() const { return info_; }

  // Irrigation for the period at period_index, clamped to [0, u_max].
  double decide(double x_now, const Forecasts& forecasts, int period_index);

 private:
  const StackedDynamics& dyn_for(int horizon);
  ConstraintSet cons_for(int horizon) const;
  const SvcSet& eta_for(int horizon);
  const SvcSet& xi_inner_for(int horizon);
  const CostSpec& cost_for(int horizon);
  double decide_mpc(double x_now, const Forecasts& forecasts);
  Solution attempt(const ProgramDescription& prog, SolveMethod method, bool use_warm);
  double finish_soft(const ProgramDescription& prog, const std::vector<int>& slack_vars,
                     int first_input, const char* what);
  [[noreturn]] void fail_with_dump(const ProgramDescription& prog, const char* what,
                                   const std::string& detail);

  ControllerConfig config_;
  WaterBalanceParams params_;
  ConstraintSet cons_;
  const TrainedUncertainty* trained_;
  std::string dump_dir_;
  std::string name_;
  DecisionInfo info_;

  int last_week_ = -1;
  double week_dose_ = 0.0;
  int period_ = 0;

  std::map<int, StackedDynamics> dyn_cache_;
  std::map<int, SvcSet> eta_cache_, xi_cache_;
  std::map<int, CostSpec> cost_cache_;
  WarmStart warm_;
  bool have_warm_ = false;
};

}  // namespace ddrmpc
