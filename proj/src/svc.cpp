#include "ddrmpc/svc.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <stdexcept>

namespace ddrmpc {

namespace {

using nlohmann::json;

Eigen::MatrixXd inverse_sqrt(const Eigen::MatrixXd& sigma) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sigma);
  if (eig.info() != Eigen::Success)
    throw std::runtime_error("svc: covariance eigendecomposition failed");
  const Eigen::VectorXd& vals = eig.eigenvalues();
  if (vals.minCoeff() <= 0.0)
    throw std::runtime_error(
        "svc: covariance is numerically singular; increase covariance_ridge");
  Eigen::VectorXd inv_sqrt = vals.cwiseSqrt().cwiseInverse();
  return eig.eigenvectors() * inv_sqrt.asDiagonal() * eig.eigenvectors().transpose();
}

json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (int i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const json& j) {
  const int rows = static_cast<int>(j.size());
  if (rows == 0) return Eigen::MatrixXd(0, 0);
  const int cols = static_cast<int>(j.at(0).size());
  Eigen::MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    if (static_cast<int>(j.at(i).size()) != cols)
      throw std::invalid_argument("svc model json: ragged matrix");
    for (int c = 0; c < cols; ++c) m(i, c) = j.at(i).at(c).get<double>();
  }
  return m;
}

}  // namespace

void SvcTrainConfig::validate() const {
  if (!(nu > 0.0) || !(nu < 1.0))
    throw std::invalid_argument("svc: nu must lie in (0, 1)");
  if (!std::isfinite(delta) || delta < 0.0)
    throw std::invalid_argument("svc: delta must be nonnegative (0 = automatic)");
  if (!std::isfinite(covariance_ridge) || covariance_ridge <= 0.0)
    throw std::invalid_argument("svc: covariance ridge must be positive");
  if (sv_tolerance <= 0.0 || bsv_spread_tolerance <= 0.0)
    throw std::invalid_argument("svc: tolerances must be positive");
}

double wgik(const Eigen::VectorXd& w, const Eigen::VectorXd& v, const Eigen::MatrixXd& q,
            double delta) {
  if (w.size() != v.size() || q.rows() != q.cols() || q.rows() != w.size())
    throw std::invalid_argument("wgik: dimension mismatch");
  return delta - (q * (w - v)).lpNorm<1>();
}

double svc_distance(const SvcModel& model, const Eigen::VectorXd& w) {
  if (w.size() != model.dim) throw std::invalid_argument("svc_distance: dimension mismatch");
  double acc = 0.0;
  for (int i = 0; i < model.support_points.rows(); ++i)
    acc += model.alpha(i) *
           (model.q_matrix * (w - model.support_points.row(i).transpose())).lpNorm<1>();
  return acc;
}

SvcModel train_svc(const Eigen::MatrixXd& samples, const SvcTrainConfig& config) {
  config.validate();
  const int n = static_cast<int>(samples.rows());
  const int dim = static_cast<int>(samples.cols());
  if (n < 2) throw std::invalid_argument("svc: need at least two samples");
  if (dim < 1) throw std::invalid_argument("svc: need at least one dimension");
  if (!samples.allFinite()) throw std::invalid_argument("svc: nonfinite sample");

  SvcModel model;
  model.dim = dim;
  model.nu = config.nu;

  // Whitening matrix from the ridged sample covariance. The ridge is relative
  // to the mean variance so uniform rescaling of the data leaves Q*data and
  // hence all distances unchanged. All-identical samples get a unit-scale
  // ridge; every distance is then zero anyway.
  Eigen::RowVectorXd mean = samples.colwise().mean();
  Eigen::MatrixXd centered = samples.rowwise() - mean;
  Eigen::MatrixXd sigma = centered.transpose() * centered / double(n - 1);
  const double tr = sigma.trace();
  const double ridge = config.covariance_ridge * (tr > 0.0 ? tr / dim : 1.0);
  sigma += ridge * Eigen::MatrixXd::Identity(dim, dim);
  model.q_matrix = inverse_sqrt(sigma);

  // Pairwise weighted 1-norm distances double as the kernel data: on the
  // simplex the dual objective reduces to maximizing alpha' G alpha.
  Eigen::MatrixXd whitened = samples * model.q_matrix;  // row i = (Q w_i)'
  Eigen::MatrixXd g(n, n);
  for (int i = 0; i < n; ++i) {
    g(i, i) = 0.0;
    for (int j = i + 1; j < n; ++j) {
      const double d = (whitened.row(i) - whitened.row(j)).lpNorm<1>();
      g(i, j) = d;
      g(j, i) = d;
    }
  }
  // delta only shifts the kernel, but the model is a valid classifier only if
  // the kernel stays positive over the data, i.e. delta beats every pairwise
  // distance. Automatic choice leaves a wide margin; explicit choices are
  // checked against the same floor.
  model.delta = config.delta > 0.0 ? config.delta : std::max(10.0 * g.maxCoeff(), 1.0);
  if (config.delta > 0.0 && model.delta <= g.maxCoeff()) {
    throw std::invalid_argument(
        "svc: delta must exceed the largest pairwise weighted distance " +
        std::to_string(g.maxCoeff()));
  }

  // The 1-norm metric is of negative type, so G is negative semidefinite on
  // the zero-sum subspace; centering exposes that as a PSD quadratic term.
  // Small eigenvalue noise is clipped to keep the program well posed.
  Eigen::MatrixXd j_center =
      Eigen::MatrixXd::Identity(n, n) - Eigen::MatrixXd::Constant(n, n, 1.0 / n);
  Eigen::MatrixXd p_dense = -2.0 * j_center * g * j_center;
  p_dense = 0.5 * (p_dense + p_dense.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(p_dense);
  Eigen::VectorXd clipped = eig.eigenvalues().cwiseMax(0.0);
  p_dense = eig.eigenvectors() * clipped.asDiagonal() * eig.eigenvectors().transpose();
  Eigen::VectorXd q_lin = -(2.0 / n) * (j_center * (g * Eigen::VectorXd::Ones(n)));

  const double ub = 1.0 / (n * config.nu);
  ProgramDescription qp;
  qp.num_vars = n;
  qp.lower = Eigen::VectorXd::Zero(n);
  qp.upper = Eigen::VectorXd::Constant(n, ub);
  qp.quad = p_dense.sparseView(1.0, 1e-300);
  qp.linear = q_lin;
  qp.eq_matrix.resize(1, n);
  for (int i = 0; i < n; ++i) qp.eq_matrix.insert(0, i) = 1.0;
  qp.eq_rhs = Eigen::VectorXd::Ones(1);
  qp.ineq_matrix.resize(0, n);
  qp.ineq_rhs.resize(0);

  Solution sol = solve(qp, config.qp_options);
  if (sol.status != SolveStatus::Optimal)
    throw std::runtime_error(std::string("svc: dual QP did not solve to optimality (") +
                             to_string(sol.status) + ")");
  Eigen::VectorXd alpha = sol.primal.cwiseMax(0.0).cwiseMin(ub);

  const double thr = config.sv_tolerance * std::max(ub, 1e-12);
  std::vector<int> sv, bsv;
  for (int i = 0; i < n; ++i) {
    if (alpha(i) > thr) {
      sv.push_back(i);
      if (alpha(i) < ub - thr) bsv.push_back(i);
    }
  }
  if (sv.empty()) throw std::runtime_error("svc: no support vectors extracted");

  model.support_points.resize(static_cast<int>(sv.size()), dim);
  model.alpha.resize(static_cast<int>(sv.size()));
  for (size_t k = 0; k < sv.size(); ++k) {
    model.support_points.row(static_cast<int>(k)) = samples.row(sv[k]);
    model.alpha(static_cast<int>(k)) = alpha(sv[k]);
  }
  model.sv_indices = sv;
  model.bsv_indices = bsv;

  // theta is the boundary distance, identical (at exact optimality) for every
  // boundary support vector; averaging suppresses solver noise.
  auto distance_at = [&](int sample_idx) {
    double acc = 0.0;
    for (int i : sv) acc += alpha(i) * g(sample_idx, i);
    return acc;
  };
  if (!bsv.empty()) {
    double sum = 0.0, lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    for (int i : bsv) {
      const double d = distance_at(i);
      sum += d;
      lo = std::min(lo, d);
      hi = std::max(hi, d);
    }
    model.theta = sum / static_cast<double>(bsv.size());
    model.bsv_spread = hi - lo;
    if (model.bsv_spread > config.bsv_spread_tolerance * std::max(1.0, model.theta))
      throw std::runtime_error(
          "svc: boundary support vector distances disagree beyond tolerance; "
          "tighten qp_options or raise bsv_spread_tolerance");
  } else {
    double hi = 0.0;
    for (int i : sv) hi = std::max(hi, distance_at(i));
    model.theta = hi;
    model.theta_from_fallback = true;
    model.warnings.push_back(
        "no boundary support vector (all weights at a bound); theta taken as the "
        "max distance over support vectors");
  }
  return model;
}

std::string svc_model_to_json(const SvcModel& model) {
  json j;
  j["format"] = "ddrmpc-svc-model";
  j["version"] = 1;
  j["dim"] = model.dim;
  j["support_points"] = matrix_to_json(model.support_points);
  j["alpha"] = std::vector<double>(model.alpha.data(), model.alpha.data() + model.alpha.size());
  j["q_matrix"] = matrix_to_json(model.q_matrix);
  j["theta"] = model.theta;
  j["delta"] = model.delta;
  j["nu"] = model.nu;
  j["sv_indices"] = model.sv_indices;
  j["bsv_indices"] = model.bsv_indices;
  j["bsv_spread"] = model.bsv_spread;
  j["theta_from_fallback"] = model.theta_from_fallback;
  j["warnings"] = model.warnings;
  return j.dump(2);
}

SvcModel svc_model_from_json(const std::string& text) {
  json j = json::parse(text);
  if (j.value("format", "") != "ddrmpc-svc-model")
    throw std::invalid_argument("svc model json: unrecognized format tag");
  SvcModel model;
  model.dim = j.at("dim").get<int>();
  model.support_points = matrix_from_json(j.at("support_points"));
  std::vector<double> alpha = j.at("alpha").get<std::vector<double>>();
  model.alpha = Eigen::Map<Eigen::VectorXd>(alpha.data(), static_cast<int>(alpha.size()));
  model.q_matrix = matrix_from_json(j.at("q_matrix"));
  model.theta = j.at("theta").get<double>();
  model.delta = j.at("delta").get<double>();
  model.nu = j.at("nu").get<double>();
  model.sv_indices = j.at("sv_indices").get<std::vector<int>>();
  model.bsv_indices = j.at("bsv_indices").get<std::vector<int>>();
  model.bsv_spread = j.at("bsv_spread").get<double>();
  model.theta_from_fallback = j.at("theta_from_fallback").get<bool>();
  model.warnings = j.at("warnings").get<std::vector<std::string>>();
  if (model.support_points.rows() != model.alpha.size() ||
      model.support_points.cols() != model.dim || model.q_matrix.rows() != model.dim)
    throw std::invalid_argument("svc model json: inconsistent dimensions");
  return model;
}

}  // namespace ddrmpc
