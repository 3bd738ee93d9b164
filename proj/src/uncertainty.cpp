#include "ddrmpc/uncertainty.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "ddrmpc/builder.hpp"
#include "ddrmpc/solver.hpp"

namespace ddrmpc {

namespace {

using nlohmann::json;

json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(i, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const json& j, int cols_hint) {
  const int rows = static_cast<int>(j.size());
  if (rows == 0) return Eigen::MatrixXd(0, cols_hint);
  const int cols = static_cast<int>(j.at(0).size());
  Eigen::MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int c = 0; c < cols; ++c) m(i, c) = j.at(i).at(c).get<double>();
  return m;
}

json calibration_to_json(const CalibrationResult& r) {
  return json{{"theta_calibrated", r.theta_calibrated},
              {"n_calib_used", r.n_calib_used},
              {"n_calib_required", r.n_calib_required},
              {"guarantee_met", r.guarantee_met}};
}

CalibrationResult calibration_from_json(const json& j) {
  CalibrationResult r;
  r.theta_calibrated = j.at("theta_calibrated").get<double>();
  r.n_calib_used = j.at("n_calib_used").get<int>();
  r.n_calib_required = j.at("n_calib_required").get<int>();
  r.guarantee_met = j.at("guarantee_met").get<bool>();
  return r;
}

// Adds the epigraph rows for sum_i alpha_i ||Q(point - sv_i)||_1 <= radius to a
// feasibility program; `point` is given per coordinate as a linear expression.
// Deliberately kept a pure feasibility block: an objective on the distance
// pins the optimum to a degenerate edge and first-order solvers crawl.
void add_svc_membership_rows(ProgramBuilder& pb, const SvcModel& model,
                             const std::vector<LinExpr>& point, double radius) {
  const int h = model.dim;
  const int n_sv = static_cast<int>(model.support_points.rows());
  LinExpr total;
  for (int si = 0; si < n_sv; ++si) {
    const double alpha = model.alpha(si);
    for (int r = 0; r < h; ++r) {
      const int rho = pb.add_variable(0.0, std::numeric_limits<double>::infinity());
      LinExpr expr;  // (Q(point - sv))_r
      for (int c = 0; c < h; ++c) {
        expr += model.q_matrix(r, c) * point[c];
        expr += -model.q_matrix(r, c) * model.support_points(si, c);
      }
      LinExpr upper = expr;
      upper -= LinExpr::variable(rho, 1.0);
      pb.add_inequality(upper);  // expr - rho <= 0
      LinExpr lower = -expr;
      lower -= LinExpr::variable(rho, 1.0);
      pb.add_inequality(lower);  // -expr - rho <= 0
      total += alpha * LinExpr::variable(rho, 1.0);
    }
  }
  total -= radius;
  pb.add_inequality(total);
}

}  // namespace

bool SvcSet::contains(const Eigen::VectorXd& point, double tol) const {
  return svc_distance(model, point) <= model.theta + tol;
}

void ConditionalSet::validate() const {
  if (!(p_max > 0.0)) throw std::invalid_argument("conditional set: p_max must be positive");
  if (phat.size() != inner.model.dim)
    throw std::invalid_argument("conditional set: forecast length does not match set dimension");
  for (Eigen::Index t = 0; t < phat.size(); ++t) {
    if (!(phat(t) >= 0.0) || phat(t) > p_max)
      throw std::invalid_argument("conditional set: forecast outside [0, p_max] at step " +
                                  std::to_string(t));
  }
}

GuaranteeBudget GuaranteeBudget::even_split(double epsilon, double beta) {
  GuaranteeBudget b;
  b.epsilon = epsilon;
  b.beta = beta;
  b.epsilon1 = b.epsilon2 = epsilon / 2.0;
  b.beta1 = b.beta2 = beta / 2.0;
  b.validate();
  return b;
}

void GuaranteeBudget::validate() const {
  auto in_unit = [](double v) { return v > 0.0 && v < 1.0; };
  if (!in_unit(epsilon) || !in_unit(beta) || !in_unit(epsilon1) || !in_unit(epsilon2) ||
      !in_unit(beta1) || !in_unit(beta2))
    throw std::invalid_argument("guarantee budget: all levels must lie in (0,1)");
  if (std::abs(epsilon1 + epsilon2 - epsilon) > 1e-12 ||
      std::abs(beta1 + beta2 - beta) > 1e-12)
    throw std::invalid_argument("guarantee budget: splits must sum to the totals");
}

Scaling scaling_matrices(const Eigen::VectorXd& phat, double p_max) {
  if (!(p_max > 0.0)) throw std::invalid_argument("scaling: p_max must be positive");
  for (Eigen::Index t = 0; t < phat.size(); ++t) {
    if (!(phat(t) >= 0.0) || phat(t) > p_max)
      throw std::invalid_argument("scaling: forecast outside [0, p_max] at step " +
                                  std::to_string(t));
  }
  Scaling s;
  s.c_diag = Eigen::VectorXd::Constant(phat.size(), p_max) - phat;
  s.d_diag = phat;
  return s;
}

Eigen::VectorXd realize_xi(const Eigen::VectorXd& xibar, const Eigen::VectorXd& phat,
                           double p_max) {
  if (xibar.size() != phat.size()) throw std::invalid_argument("realize_xi: length mismatch");
  for (Eigen::Index t = 0; t < xibar.size(); ++t) {
    if (!(xibar(t) >= -1.0) || !(xibar(t) <= 1.0))
      throw std::invalid_argument("realize_xi: normalized error outside [-1,1] at step " +
                                  std::to_string(t));
  }
  const Scaling s = scaling_matrices(phat, p_max);
  return s.c_diag.cwiseProduct(xibar.cwiseMax(0.0)) +
         s.d_diag.cwiseProduct(xibar.cwiseMin(0.0));
}

Eigen::VectorXd normalize_xi(const Eigen::VectorXd& xi, const Eigen::VectorXd& phat,
                             double p_max) {
  if (xi.size() != phat.size()) throw std::invalid_argument("normalize_xi: length mismatch");
  const Scaling s = scaling_matrices(phat, p_max);
  const double grace = 1e-9 * p_max;  // absorb float dust at the bounds, nothing more
  std::ostringstream bad;
  Eigen::VectorXd out(xi.size());
  for (Eigen::Index t = 0; t < xi.size(); ++t) {
    const double lo = -s.d_diag(t), hi = s.c_diag(t);
    if (xi(t) < lo - grace || xi(t) > hi + grace) {
      bad << (bad.tellp() > 0 ? ", " : "") << "step " << t << ": " << xi(t)
          << " outside [" << lo << ", " << hi << "]";
      continue;
    }
    const double v = std::clamp(xi(t), lo, hi);
    if (v >= 0.0) {
      out(t) = hi > 0.0 ? v / hi : 0.0;
    } else {
      out(t) = -lo > 0.0 ? -v / lo : 0.0;
    }
  }
  if (bad.tellp() > 0)
    throw std::invalid_argument("normalize_xi: error outside conditional bounds (" +
                                bad.str() + ")");
  return out;
}

int min_calib_size(double epsilon, double beta) {
  if (!(epsilon > 0.0 && epsilon < 1.0 && beta > 0.0 && beta < 1.0))
    throw std::invalid_argument("min_calib_size: epsilon and beta must lie in (0,1)");
  const double raw = std::log(beta) / std::log1p(-epsilon);
  return static_cast<int>(std::ceil(raw - 1e-9));
}

CalibrationResult calibrate(SvcSet& set, const std::vector<Eigen::VectorXd>& calib_samples,
                            double epsilon, double beta) {
  if (calib_samples.empty())
    throw std::invalid_argument("calibrate: calibration set is empty");
  CalibrationResult result;
  result.n_calib_used = static_cast<int>(calib_samples.size());
  result.n_calib_required = min_calib_size(epsilon, beta);
  result.guarantee_met = result.n_calib_used >= result.n_calib_required;
  double theta = 0.0;
  for (const auto& sample : calib_samples)
    theta = std::max(theta, svc_distance(set.model, sample));
  result.theta_calibrated = theta;
  set.model.theta = theta;
  return result;
}

bool membership_w(const SvcSet& eta_set, const ConditionalSet& xi_set,
                  const Eigen::VectorXd& w, double tol) {
  xi_set.validate();
  const int h = eta_set.model.dim;
  if (xi_set.inner.model.dim != h || w.size() != h)
    throw std::invalid_argument("membership_w: dimension mismatch");
  const Scaling s = scaling_matrices(xi_set.phat, xi_set.p_max);

  ProgramBuilder pb;
  const int eta0 = pb.add_variables(h);
  const int xp0 = pb.add_variables(h, -tol, 1.0 + tol);
  const int xm0 = pb.add_variables(h, -tol, 1.0 + tol);

  std::vector<LinExpr> eta_expr(h), xibar_expr(h);
  for (int t = 0; t < h; ++t) {
    eta_expr[t] = LinExpr::variable(eta0 + t, 1.0);
    xibar_expr[t] = LinExpr::variable(xp0 + t, 1.0);
    xibar_expr[t] -= LinExpr::variable(xm0 + t, 1.0);
    // w_t = C_t xi+_t - D_t xi-_t - eta_t
    LinExpr link = LinExpr::variable(xp0 + t, s.c_diag(t));
    link -= LinExpr::variable(xm0 + t, s.d_diag(t));
    link -= LinExpr::variable(eta0 + t, 1.0);
    link -= w(t);
    pb.add_equality(link);
  }
  add_svc_membership_rows(pb, eta_set.model, eta_expr, eta_set.model.theta + tol);
  add_svc_membership_rows(pb, xi_set.inner.model, xibar_expr,
                          xi_set.inner.model.theta + tol);

  Solution sol = solve(pb.build());
  if (sol.status == SolveStatus::Optimal) return true;
  if (sol.status == SolveStatus::Infeasible) return false;
  throw std::runtime_error(std::string("membership_w: solver returned ") +
                           to_string(sol.status) + " (" + sol.message + ")");
}

void TrainPlan::validate() const {
  svc.validate();
  budget.validate();
  if (!(p_max > 0.0)) throw std::invalid_argument("train plan: p_max must be positive");
  if (min_train_windows < 2)
    throw std::invalid_argument("train plan: need at least two training windows");
}

ConditionalSet TrainedUncertainty::conditional_for(const Eigen::VectorXd& phat) const {
  ConditionalSet cs;
  cs.p_max = p_max;
  cs.phat = phat;
  cs.inner = xi_set;
  cs.validate();
  return cs;
}

TrainedUncertainty train_uncertainty(const ErrorDataset& data, const TrainPlan& plan) {
  plan.validate();
  const int h = data.horizon;
  const int n_total = data.size();
  if (h < 1) throw std::invalid_argument("train_uncertainty: dataset has no horizon");

  TrainedUncertainty out;
  out.budget = plan.budget;
  out.p_max = plan.p_max;
  out.horizon = h;

  // Normalize precipitation errors per window; a window whose error falls
  // outside the conditional bounds (observed p above p_max, say) is unusable
  // for the xi set and is dropped from both sets to keep the pairing intact.
  std::vector<int> usable;
  std::vector<Eigen::VectorXd> xibar(n_total);
  usable.reserve(n_total);
  for (int i = 0; i < n_total; ++i) {
    try {
      xibar[i] = normalize_xi(data.xi_windows[i], data.phat_windows[i], plan.p_max);
      usable.push_back(i);
    } catch (const std::invalid_argument&) {
      ++out.n_skipped_out_of_range;
    }
  }
  if (out.n_skipped_out_of_range > 0)
    out.warnings.push_back(std::to_string(out.n_skipped_out_of_range) +
                           " window(s) outside conditional bounds, skipped");

  const int m = static_cast<int>(usable.size());
  const int n_req = std::max(min_calib_size(plan.budget.epsilon1, plan.budget.beta1),
                             min_calib_size(plan.budget.epsilon2, plan.budget.beta2));
  if (m < plan.min_train_windows + 1)
    throw std::invalid_argument("train_uncertainty: only " + std::to_string(m) +
                                " usable windows, need " +
                                std::to_string(plan.min_train_windows + 1));
  const int n_calib = std::min(n_req, m - plan.min_train_windows);

  std::vector<int> train_idx, calib_idx;
  if (plan.split == SplitRule::Chronological) {
    // Calibration takes the latest windows; training windows that overlap the
    // calibration boundary are dropped so the two subsets share no records.
    calib_idx.assign(usable.end() - n_calib, usable.end());
    const int boundary_row = data.start_rows[calib_idx.front()];
    for (int i = 0; i < m - n_calib; ++i) {
      const int idx = usable[i];
      if (data.start_rows[idx] + h <= boundary_row)
        train_idx.push_back(idx);
      else
        ++out.n_dropped_straddle;
    }
  } else {
    std::vector<int> shuffled = usable;
    std::mt19937_64 rng(plan.split_seed);
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    calib_idx.assign(shuffled.begin(), shuffled.begin() + n_calib);
    train_idx.assign(shuffled.begin() + n_calib, shuffled.end());
    std::sort(calib_idx.begin(), calib_idx.end());
    std::sort(train_idx.begin(), train_idx.end());
  }
  out.n_train = static_cast<int>(train_idx.size());
  out.n_calib = n_calib;
  if (out.n_train < plan.min_train_windows)
    throw std::invalid_argument("train_uncertainty: only " + std::to_string(out.n_train) +
                                " training windows left after the split");
  if (n_calib < n_req)
    out.warnings.push_back("calibration shortfall: " + std::to_string(n_calib) + " of " +
                           std::to_string(n_req) + " required windows");

  out.train_eta.resize(out.n_train, h);
  out.train_xibar.resize(out.n_train, h);
  for (int i = 0; i < out.n_train; ++i) {
    out.train_eta.row(i) = data.eta_windows[train_idx[i]].transpose();
    out.train_xibar.row(i) = xibar[train_idx[i]].transpose();
  }

  out.eta_set.model = train_svc(out.train_eta, plan.svc);
  out.xi_set.model = train_svc(out.train_xibar, plan.svc);
  out.eta_theta_trained = out.eta_set.model.theta;
  out.xi_theta_trained = out.xi_set.model.theta;
  for (const auto& w : out.eta_set.model.warnings) out.warnings.push_back("eta set: " + w);
  for (const auto& w : out.xi_set.model.warnings) out.warnings.push_back("xi set: " + w);

  std::vector<Eigen::VectorXd> calib_eta, calib_xibar;
  calib_eta.reserve(n_calib);
  calib_xibar.reserve(n_calib);
  for (int idx : calib_idx) {
    calib_eta.push_back(data.eta_windows[idx]);
    calib_xibar.push_back(xibar[idx]);
  }
  out.eta_calibration =
      calibrate(out.eta_set, calib_eta, plan.budget.epsilon1, plan.budget.beta1);
  out.xi_calibration =
      calibrate(out.xi_set, calib_xibar, plan.budget.epsilon2, plan.budget.beta2);
  return out;
}

std::string calibration_report_json(const TrainedUncertainty& trained) {
  json j;
  j["eta"] = calibration_to_json(trained.eta_calibration);
  j["eta"]["theta_trained"] = trained.eta_theta_trained;
  j["xi"] = calibration_to_json(trained.xi_calibration);
  j["xi"]["theta_trained"] = trained.xi_theta_trained;
  j["budget"] = {{"epsilon", trained.budget.epsilon},   {"beta", trained.budget.beta},
                 {"epsilon1", trained.budget.epsilon1}, {"beta1", trained.budget.beta1},
                 {"epsilon2", trained.budget.epsilon2}, {"beta2", trained.budget.beta2}};
  j["windows"] = {{"train", trained.n_train},
                  {"calib", trained.n_calib},
                  {"dropped_straddle", trained.n_dropped_straddle},
                  {"skipped_out_of_range", trained.n_skipped_out_of_range}};
  j["p_max"] = trained.p_max;
  j["horizon"] = trained.horizon;
  j["warnings"] = trained.warnings;
  return j.dump(2);
}

std::string trained_uncertainty_to_json(const TrainedUncertainty& trained) {
  json j;
  j["format"] = "ddrmpc-uncertainty";
  j["version"] = 1;
  j["eta_model"] = json::parse(svc_model_to_json(trained.eta_set.model));
  j["xi_model"] = json::parse(svc_model_to_json(trained.xi_set.model));
  j["eta_calibration"] = calibration_to_json(trained.eta_calibration);
  j["xi_calibration"] = calibration_to_json(trained.xi_calibration);
  j["eta_theta_trained"] = trained.eta_theta_trained;
  j["xi_theta_trained"] = trained.xi_theta_trained;
  j["budget"] = {{"epsilon", trained.budget.epsilon},   {"beta", trained.budget.beta},
                 {"epsilon1", trained.budget.epsilon1}, {"beta1", trained.budget.beta1},
                 {"epsilon2", trained.budget.epsilon2}, {"beta2", trained.budget.beta2}};
  j["p_max"] = trained.p_max;
  j["horizon"] = trained.horizon;
  j["n_train"] = trained.n_train;
  j["n_calib"] = trained.n_calib;
  j["n_dropped_straddle"] = trained.n_dropped_straddle;
  j["n_skipped_out_of_range"] = trained.n_skipped_out_of_range;
  j["train_eta"] = matrix_to_json(trained.train_eta);
  j["train_xibar"] = matrix_to_json(trained.train_xibar);
  j["warnings"] = trained.warnings;
  return j.dump();
}

TrainedUncertainty trained_uncertainty_from_json(const std::string& text) {
  json j = json::parse(text);
  if (j.value("format", "") != "ddrmpc-uncertainty")
    throw std::invalid_argument("trained_uncertainty_from_json: unrecognized format tag");
  TrainedUncertainty t;
  t.eta_set.model = svc_model_from_json(j.at("eta_model").dump());
  t.xi_set.model = svc_model_from_json(j.at("xi_model").dump());
  t.eta_calibration = calibration_from_json(j.at("eta_calibration"));
  t.xi_calibration = calibration_from_json(j.at("xi_calibration"));
  t.eta_theta_trained = j.at("eta_theta_trained").get<double>();
  t.xi_theta_trained = j.at("xi_theta_trained").get<double>();
  const json& b = j.at("budget");
  t.budget.epsilon = b.at("epsilon").get<double>();
  t.budget.beta = b.at("beta").get<double>();
  t.budget.epsilon1 = b.at("epsilon1").get<double>();
  t.budget.beta1 = b.at("beta1").get<double>();
  t.budget.epsilon2 = b.at("epsilon2").get<double>();
  t.budget.beta2 = b.at("beta2").get<double>();
  t.p_max = j.at("p_max").get<double>();
  t.horizon = j.at("horizon").get<int>();
  t.n_train = j.at("n_train").get<int>();
  t.n_calib = j.at("n_calib").get<int>();
  t.n_dropped_straddle = j.at("n_dropped_straddle").get<int>();
  t.n_skipped_out_of_range = j.at("n_skipped_out_of_range").get<int>();
  t.train_eta = matrix_from_json(j.at("train_eta"), t.horizon);
  t.train_xibar = matrix_from_json(j.at("train_xibar"), t.horizon);
  t.warnings = j.at("warnings").get<std::vector<std::string>>();
  return t;
}

}  // namespace ddrmpc
