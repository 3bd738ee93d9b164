#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "ddrmpc/solver.hpp"

namespace ddrmpc {

struct SvcTrainConfig {
  double nu = 0.1;              // upper bound on the outlier fraction
  double delta = 0.0;           // kernel offset; 0 picks 10x the max pairwise distance
  double covariance_ridge = 1e-8;  // relative ridge added as ridge*tr(Sigma)/dim
  double sv_tolerance = 1e-8;      // alpha threshold for support vector extraction
  double bsv_spread_tolerance = 1e-6;
  SolverOptions qp_options{};

  void validate() const;
};

// One-class boundary in the weighted 1-norm geometry. The learned region is
//   { w : sum_i alpha_i ||Q (w - sv_i)||_1 <= theta }
// with Q the inverse square root of the (ridged) sample covariance.
struct SvcModel {
  int dim = 0;
  // Compacted to the support vectors: row k of support_points pairs with
  // alpha(k); sv_indices/bsv_indices record the original training-row ids.
  Eigen::MatrixXd support_points;
  Eigen::VectorXd alpha;  // nonzero weights, summing to 1
  Eigen::MatrixXd q_matrix;        // symmetric positive definite
  double theta = 0.0;
  double delta = 0.0;              // kernel offset used in training
  double nu = 0.0;

  std::vector<int> sv_indices;   // indices into the training sample order
  std::vector<int> bsv_indices;  // boundary subset (0 < alpha < 1/(N nu))
  double bsv_spread = 0.0;       // max-min of the theta candidates over BSVs
  bool theta_from_fallback = false;  // no boundary vector existed
  std::vector<std::string> warnings;
};

// Weighted generalized intersection kernel delta - ||Q(w - v)||_1.
double wgik(const Eigen::VectorXd& w, const Eigen::VectorXd& v, const Eigen::MatrixXd& q,
            double delta);

// sum_i alpha_i ||Q (w - sv_i)||_1; membership holds when <= theta.
double svc_distance(const SvcModel& model, const Eigen::VectorXd& w);

// Trains the boundary on samples (one per row) by solving the dual QP and
// reading theta off the boundary support vectors.
SvcModel train_svc(const Eigen::MatrixXd& samples, const SvcTrainConfig& config = {});

std::string svc_model_to_json(const SvcModel& model);
SvcModel svc_model_from_json(const std::string& text);

}  // namespace ddrmpc
