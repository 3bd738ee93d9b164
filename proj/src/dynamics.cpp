#include "ddrmpc/dynamics.hpp"

#include <cmath>
#include <stdexcept>

namespace ddrmpc {

void WaterBalanceParams::validate() const {
  if (!std::isfinite(decay) || decay < 0.0 || decay >= 1.0)
    throw std::invalid_argument("water balance: decay must lie in [0, 1)");
  if (horizon_steps < 1)
    throw std::invalid_argument("water balance: horizon must be at least one step");
  if (!std::isfinite(period_hours) || period_hours <= 0.0)
    throw std::invalid_argument("water balance: period length must be positive");
}

void ConstraintSet::validate() const {
  if (!std::isfinite(x_min) || x_min < 0.0)
    throw std::invalid_argument("constraints: moisture floor must be nonnegative");
  if (!std::isfinite(u_max) || u_max <= 0.0)
    throw std::invalid_argument("constraints: irrigation capacity must be positive");
}

double step(double x, double u, double e, double p, const WaterBalanceParams& params) {
  params.validate();
  if (!std::isfinite(x) || !std::isfinite(u) || !std::isfinite(e) || !std::isfinite(p))
    throw std::invalid_argument("step: nonfinite input");
  if (u < 0.0 || e < 0.0 || p < 0.0)
    throw std::invalid_argument("step: u, e, p must be nonnegative");
  return (1.0 - params.decay) * x + u - e + p;
}

StackedDynamics build_stacked(const WaterBalanceParams& params) {
  params.validate();
  const int h = params.horizon_steps;
  const double a = 1.0 - params.decay;

  StackedDynamics dyn;
  dyn.horizon = h;
  dyn.a_stack.resize(h + 1);
  for (int t = 0; t <= h; ++t) dyn.a_stack(t) = std::pow(a, t);

  dyn.bu_stack = Eigen::MatrixXd::Zero(h + 1, h);
  for (int t = 1; t <= h; ++t)
    for (int j = 0; j < t; ++j) dyn.bu_stack(t, j) = std::pow(a, t - 1 - j);
  dyn.bv_stack = dyn.bu_stack;  // v and w enter the balance with unit gain, like u
  dyn.bw_stack = dyn.bu_stack;
  return dyn;
}

ConstraintSet make_constraints(int horizon_steps, double x_min, double u_max) {
  if (horizon_steps < 1) throw std::invalid_argument("constraints: horizon must be positive");
  ConstraintSet cons;
  cons.x_min = x_min;
  cons.u_max = u_max;
  cons.validate();

  const int h = horizon_steps;
  cons.fx_stack = Eigen::MatrixXd::Zero(h, h + 1);
  cons.fx_rhs = Eigen::VectorXd::Constant(h, -x_min);
  for (int t = 1; t <= h; ++t) cons.fx_stack(t - 1, t) = -1.0;

  cons.fu_stack = Eigen::MatrixXd::Zero(2 * h, h);
  cons.fu_rhs.resize(2 * h);
  for (int t = 0; t < h; ++t) {
    cons.fu_stack(2 * t, t) = 1.0;
    cons.fu_rhs(2 * t) = u_max;
    cons.fu_stack(2 * t + 1, t) = -1.0;
    cons.fu_rhs(2 * t + 1) = 0.0;
  }
  return cons;
}

Eigen::VectorXd predict_trajectory(const StackedDynamics& dyn, double x0,
                                   const Eigen::VectorXd& u, const Eigen::VectorXd& v,
                                   const Eigen::VectorXd& w) {
  const int h = dyn.horizon;
  if (u.size() != h || v.size() != h || w.size() != h)
    throw std::invalid_argument("predict_trajectory: sequence length must equal the horizon");
  if (!std::isfinite(x0)) throw std::invalid_argument("predict_trajectory: nonfinite state");
  return dyn.a_stack * x0 + dyn.bu_stack * u + dyn.bv_stack * v + dyn.bw_stack * w;
}

}  // namespace ddrmpc
