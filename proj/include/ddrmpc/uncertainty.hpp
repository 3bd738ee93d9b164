#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "ddrmpc/svc.hpp"
#include "ddrmpc/weather.hpp"

namespace ddrmpc {

// Trained set for eta or for normalized precipitation errors; membership is
// svc_distance <= model.theta.
struct SvcSet {
  SvcModel model;

  bool contains(const Eigen::VectorXd& point, double tol = 0.0) const;
};

// Precipitation-error set conditioned on the forecast: xi = C xi_plus - D xi_minus
// with xi_plus, xi_minus in [0,1]^H and xi_plus - xi_minus inside `inner`.
struct ConditionalSet {
  double p_max = 0.0;
  Eigen::VectorXd phat;
  SvcSet inner;  // over normalized errors

  void validate() const;
};

struct GuaranteeBudget {
  double epsilon = 0.1;
  double beta = 1e-3;
  double epsilon1 = 0.05, epsilon2 = 0.05;  // eta split, xi split
  double beta1 = 5e-4, beta2 = 5e-4;

  static GuaranteeBudget even_split(double epsilon, double beta);
  void validate() const;
};

struct CalibrationResult {
  double theta_calibrated = 0.0;
  int n_calib_used = 0;
  int n_calib_required = 0;
  bool guarantee_met = false;
};

struct Scaling {
  Eigen::VectorXd c_diag;  // p_max - phat
  Eigen::VectorXd d_diag;  // phat
};

Scaling scaling_matrices(const Eigen::VectorXd& phat, double p_max);
Eigen::VectorXd realize_xi(const Eigen::VectorXd& xibar, const Eigen::VectorXd& phat,
                           double p_max);
Eigen::VectorXd normalize_xi(const Eigen::VectorXd& xi, const Eigen::VectorXd& phat,
                             double p_max);

int min_calib_size(double epsilon, double beta);

// Shrinks or grows the radius to the largest calibration distance and flags
// whether the sample count meets the guarantee requirement. The set is updated
// in place and should be treated as frozen afterwards.
CalibrationResult calibrate(SvcSet& set, const std::vector<Eigen::VectorXd>& calib_samples,
                            double epsilon, double beta);

// True iff w = xi - eta for some eta in eta_set and xi in the conditional set,
// decided by a feasibility program over (eta, xi_plus, xi_minus).
bool membership_w(const SvcSet& eta_set, const ConditionalSet& xi_set,
                  const Eigen::VectorXd& w, double tol = 1e-7);

enum class SplitRule { Chronological, Random };

struct TrainPlan {
  SvcTrainConfig svc;
  GuaranteeBudget budget;
  double p_max = 50.0;
  SplitRule split = SplitRule::Chronological;
  std::uint64_t split_seed = 0;
  int min_train_windows = 40;

  void validate() const;
};

// Everything the controller needs: both calibrated sets plus the lifted
// training samples (xi_plus, xi_minus, eta per window) that the expected-cost
// moments are computed from.
struct TrainedUncertainty {
  SvcSet eta_set;
  SvcSet xi_set;  // over normalized errors; per-forecast sets wrap it via ConditionalSet
  CalibrationResult eta_calibration;
  CalibrationResult xi_calibration;
  double eta_theta_trained = 0.0;  // radii before calibration, for reporting
  double xi_theta_trained = 0.0;
  GuaranteeBudget budget;
  double p_max = 0.0;
  int horizon = 0;
  int n_train = 0;
  int n_calib = 0;
  int n_dropped_straddle = 0;
  int n_skipped_out_of_range = 0;
  Eigen::MatrixXd train_eta;    // n_train x H
  Eigen::MatrixXd train_xibar;  // n_train x H
  std::vector<std::string> warnings;

  ConditionalSet conditional_for(const Eigen::VectorXd& phat) const;
};

TrainedUncertainty train_uncertainty(const ErrorDataset& data, const TrainPlan& plan);

std::string calibration_report_json(const TrainedUncertainty& trained);
std::string trained_uncertainty_to_json(const TrainedUncertainty& trained);
TrainedUncertainty trained_uncertainty_from_json(const std::string& text);

}  // namespace ddrmpc
