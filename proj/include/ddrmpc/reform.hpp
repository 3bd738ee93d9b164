#pragma once

#include <Eigen/Dense>
#include <vector>

#include "ddrmpc/builder.hpp"
#include "ddrmpc/dynamics.hpp"
#include "ddrmpc/uncertainty.hpp"

namespace ddrmpc {

// Input policies over the prediction horizon. Gains are H x H with entry
// (t, j) nonzero only for j < t: u_t reacts to disturbances realized strictly
// before period t.
struct AdfPolicy {
  Eigen::MatrixXd m_gain;     // on w = xi - eta, mm per mm
  Eigen::VectorXd h_offsets;  // mm

  void validate() const;
};

struct GadfPolicy {
  Eigen::MatrixXd m_plus;   // on normalized forward deviations
  Eigen::MatrixXd m_minus;  // on normalized backward deviations
  Eigen::MatrixXd l_gain;   // on eta
  Eigen::VectorXd h_offsets;

  void validate() const;
  // The substitution u = M(C xi+ - D xi- - eta) + h as a lifted policy; the
  // image policy replicates the affine one exactly, pointwise in the
  // uncertainty.
  static GadfPolicy from_adf(const AdfPolicy& adf, const Scaling& scaling);
};

// Multipliers of one dualized robust constraint. mu is reconstructed from the
// coupling mu_i = k alpha_i 1 - lambda_i, which the emitted blocks enforce by
// substitution rather than as explicit rows.
struct DualCertificate {
  Eigen::MatrixXd lambda;  // one row per support vector
  Eigen::MatrixXd mu;
  double k = 0.0;
  Eigen::VectorXd r, s;  // box multipliers, lifted blocks only (else empty)
};

// Descriptor of an emitted dual block: where its variables live and the dual
// objective to be bounded by the caller's right-hand side.
struct RobustConstraintBlock {
  LinExpr objective;
  int lambda0 = -1;  // n_sv * dim lambdas, row-major by support vector
  int k_index = -1;
  int r0 = -1, s0 = -1;  // lifted blocks only
  int n_sv = 0;
  int dim = 0;
};

// Dual of max a' eta over the eta set; coefficients may involve decision
// variables of the surrounding program.
RobustConstraintBlock lemma1_dual_block(ProgramBuilder& pb, const SvcModel& model,
                                        const std::vector<LinExpr>& a);
RobustConstraintBlock lemma1_dual_block(ProgramBuilder& pb, const SvcModel& model,
                                        const Eigen::VectorXd& a);

// Dual of max a' xi_plus + b' xi_minus over the lifted set (normalized set
// membership of xi_plus - xi_minus intersected with the unit boxes).
RobustConstraintBlock theorem3_dual_block(ProgramBuilder& pb, const SvcModel& model,
                                          const std::vector<LinExpr>& a,
                                          const std::vector<LinExpr>& b);
RobustConstraintBlock theorem3_dual_block(ProgramBuilder& pb, const SvcModel& model,
                                          const Eigen::VectorXd& a,
                                          const Eigen::VectorXd& b);

// Worst-case values by solving the dual block alone; cert (optional) receives
// exactly reconstructed multipliers.
double lemma1_worst_case(const SvcModel& model, const Eigen::VectorXd& a,
                         DualCertificate* cert = nullptr, const SolverOptions& opts = {});
double theorem3_worst_case(const SvcModel& model, const Eigen::VectorXd& a,
                           const Eigen::VectorXd& b, DualCertificate* cert = nullptr,
                           const SolverOptions& opts = {});

enum class CostKind { Nominal, Expected };

struct CostSpec {
  CostKind kind = CostKind::Nominal;
  double terminal_weight = 0.0;  // on the squared nominal terminal state
  // Empirical moments of z = (xi_plus, xi_minus, eta), filled for Expected.
  Eigen::VectorXd z_mean;
  Eigen::MatrixXd z_second;  // E[z z']
};

CostSpec nominal_cost(double terminal_weight = 0.0);
CostSpec expected_cost(const TrainedUncertainty& trained, double terminal_weight = 0.0);

struct ReformOptions {
  CostSpec cost;
  bool soft_state_slack = false;  // exact-penalty slack on state rows
  // Per mm of violation. Large enough to dominate the multipliers of any
  // feasible instance (doses and costs are O(1e1) here), small enough that
  // the relaxed program stays well scaled for the solver.
  double slack_penalty = 1e4;
};

struct AssembledProgram {
  ProgramDescription program;
  int horizon = 0;
  bool lifted_policy = true;  // GADF when true, ADF otherwise
  Scaling scaling;
  int h0 = 0;  // h_t lives at h0 + t
  // Gain variable indices, -1 where the causality pattern pins the entry to
  // zero. ADF programs fill only m_idx; GADF programs fill the other three.
  Eigen::MatrixXi m_idx, m_plus_idx, m_minus_idx, l_idx;
  std::vector<int> policy_vars;
  std::vector<int> slack_vars;
  int num_robust_rows = 0;
  int num_dual_vars = 0;
};

AssembledProgram assemble_gadf_program(const StackedDynamics& dyn, const ConstraintSet& cons,
                                       const SvcSet& eta_set, const ConditionalSet& xi_set,
                                       double x0, const Eigen::VectorXd& v_forecast,
                                       const ReformOptions& opts);
AssembledProgram assemble_adf_program(const StackedDynamics& dyn, const ConstraintSet& cons,
                                      const SvcSet& eta_set, const ConditionalSet& xi_set,
                                      double x0, const Eigen::VectorXd& v_forecast,
                                      const ReformOptions& opts);

GadfPolicy extract_gadf_policy(const AssembledProgram& prog, const Eigen::VectorXd& primal);
AdfPolicy extract_adf_policy(const AssembledProgram& prog, const Eigen::VectorXd& primal);

// Realized inputs and states under a lifted policy for one uncertainty draw.
void propagate_policy(const StackedDynamics& dyn, const GadfPolicy& policy,
                      const Scaling& scaling, double x0, const Eigen::VectorXd& v_forecast,
                      const Eigen::VectorXd& xi_plus, const Eigen::VectorXd& xi_minus,
                      const Eigen::VectorXd& eta, Eigen::VectorXd* states,
                      Eigen::VectorXd* inputs);

}  // namespace ddrmpc
