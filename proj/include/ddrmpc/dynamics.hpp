#pragma once

#include <Eigen/Dense>

namespace ddrmpc {

// Root-zone water balance over fixed sampling periods:
//   x_{t+1} = (1 - c) x_t + u_t - e_t + p_t
// with x soil moisture storage (mm), u irrigation (mm), e evapotranspiration
// (mm) and p precipitation (mm). c is the fraction of storage lost to deep
// percolation / runoff per period.
struct WaterBalanceParams {
  double decay = 0.025;     // c, dimensionless, in [0, 1)
  int horizon_steps = 8;    // H
  double period_hours = 6.0;

  void validate() const;  // throws std::invalid_argument
};

// Dense horizon form. With z = [u_0..u_{H-1}] (same layout for v and w):
//   x = a_stack x0 + bu_stack u + bv_stack v + bw_stack w
// where x stacks x_0..x_H. Row t of each input map carries (1-c)^(t-1-j) in
// column j < t and zeros elsewhere, so row 0 is zero and inputs never act on
// earlier states.
struct StackedDynamics {
  int horizon = 0;
  Eigen::VectorXd a_stack;   // (H+1)
  Eigen::MatrixXd bu_stack;  // (H+1) x H
  Eigen::MatrixXd bv_stack;  // (H+1) x H, net forecast flow v_t = phat_t - ehat_t
  Eigen::MatrixXd bw_stack;  // (H+1) x H, disturbance w_t = xi_t - eta_t
};

// Per-period polytopes F_x x_t <= f_x (t = 1..H) and F_u u_t <= f_u
// (t = 0..H-1), plus their block-diagonal horizon stacks. The state rows
// encode the moisture floor, the input rows the irrigation capacity.
struct ConstraintSet {
  double x_min = 30.0;  // mm
  double u_max = 10.0;  // mm per period

  Eigen::MatrixXd fx_stack;  // H x (H+1), row t-1 selects -x_t
  Eigen::VectorXd fx_rhs;    // H, all -x_min
  Eigen::MatrixXd fu_stack;  // 2H x H, rows (u_t <= u_max, -u_t <= 0)
  Eigen::VectorXd fu_rhs;    // 2H

  void validate() const;
};

double step(double x, double u, double e, double p, const WaterBalanceParams& params);

StackedDynamics build_stacked(const WaterBalanceParams& params);

ConstraintSet make_constraints(int horizon_steps, double x_min, double u_max);

// Applies the stacked maps; u, v, w must each have H entries.
Eigen::VectorXd predict_trajectory(const StackedDynamics& dyn, double x0,
                                   const Eigen::VectorXd& u, const Eigen::VectorXd& v,
                                   const Eigen::VectorXd& w);

}  // namespace ddrmpc
