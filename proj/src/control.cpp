#include "ddrmpc/control.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "ddrmpc/builder.hpp"
#include "ddrmpc/lp_format.hpp"
#include "ddrmpc/svc.hpp"

namespace ddrmpc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Nominal state expressions x_0..x_H over input variables u0..u0+H-1.
std::vector<LinExpr> nominal_states(const StackedDynamics& dyn, double x0,
                                    const Eigen::VectorXd& v, int u0) {
  const int h = dyn.horizon;
  std::vector<LinExpr> xs(h + 1);
  for (int t = 0; t <= h; ++t) {
    LinExpr e(dyn.a_stack(t) * x0 + dyn.bv_stack.row(t).dot(v));
    for (int j = 0; j < t; ++j) e.add(u0 + j, dyn.bu_stack(t, j));
    xs[t] = std::move(e);
  }
  return xs;
}

void check_nominal_inputs(const StackedDynamics& dyn, double x0, const Eigen::VectorXd& v,
                          const char* what) {
  if (dyn.horizon < 1)
    throw std::invalid_argument(std::string(what) + ": horizon must be at least 1");
  if (v.size() != dyn.horizon)
    throw std::invalid_argument(std::string(what) +
                                ": forecast flow size does not match the horizon");
  if (!std::isfinite(x0) || !v.allFinite())
    throw std::invalid_argument(std::string(what) + ": non-finite input");
}

// When the run tail leaves fewer than H forecast steps the horizon shrinks,
// and the learned sets must shrink with it. The calibration split is not
// retained after training, so the prefix boundary is refit on the stored
// training windows and the full set's calibration inflation is carried over
// as a ratio.
SvcSet prefix_set(const SvcSet& full, const Eigen::MatrixXd& windows, int h,
                  double theta_calibrated, double theta_trained) {
  SvcTrainConfig cfg;
  cfg.nu = full.model.nu;
  cfg.delta = full.model.delta;
  SvcSet out;
  out.model = train_svc(windows.leftCols(h), cfg);
  if (theta_trained > 0.0 && theta_calibrated >= 0.0)
    out.model.theta *= theta_calibrated / theta_trained;
  return out;
}

}  // namespace

std::string controller_name(const ControllerConfig& config) {
  if (std::holds_alternative<OpenLoopConfig>(config)) return "open_loop";
  if (std::holds_alternative<RuleBasedConfig>(config)) return "rule_based";
  if (std::holds_alternative<CempcConfig>(config)) return "cempc";
  if (std::holds_alternative<NormRmpcConfig>(config)) return "norm_rmpc";
  if (std::holds_alternative<SpTrackingConfig>(config)) return "sp_tracking";
  return std::get<DdrmpcConfig>(config).policy == PolicyKind::Adf ? "ddrmpc_adf"
                                                                  : "ddrmpc_gadf";
}

NominalProgram build_cempc_program(const StackedDynamics& dyn, const ConstraintSet& cons,
                                   double x0, const Eigen::VectorXd& v_forecast,
                                   const CostSpec& cost, bool soft_state_slack,
                                   double slack_penalty) {
  check_nominal_inputs(dyn, x0, v_forecast, "cempc");
  cons.validate();
  if (cost.terminal_weight < 0.0)
    throw std::invalid_argument("cempc: negative terminal weight");
  const int h = dyn.horizon;

  ProgramBuilder pb;
  NominalProgram np;
  np.horizon = h;
  np.u0 = pb.add_variables(h, 0.0, cons.u_max);
  const std::vector<LinExpr> xs = nominal_states(dyn, x0, v_forecast, np.u0);

  int s0 = -1;
  if (soft_state_slack) {
    if (!(slack_penalty > 0.0))
      throw std::invalid_argument("cempc: slack penalty must be positive");
    s0 = pb.add_variables(h, 0.0, kInf);
    for (int t = 0; t < h; ++t) {
      np.slack_vars.push_back(s0 + t);
      pb.add_linear_cost(LinExpr::variable(s0 + t, slack_penalty));
    }
  }
  for (int t = 1; t <= h; ++t) {
    LinExpr row(cons.x_min);
    row -= xs[t];
    if (soft_state_slack) row.add(s0 + t - 1, -1.0);
    pb.add_inequality(row);
  }

  // With the forecasts taken as exact there is no disturbance to average
  // over, so the nominal and expected stage costs coincide.
  for (int t = 0; t < h; ++t) pb.add_quadratic_cost(np.u0 + t, np.u0 + t, 1.0);
  if (cost.terminal_weight > 0.0) pb.add_squared_cost(xs[h], cost.terminal_weight);
  np.program = pb.build();
  return np;
}

NominalProgram build_sp_tracking_program(const StackedDynamics& dyn, double x0,
                                         const Eigen::VectorXd& v_forecast, double setpoint,
                                         double u_max) {
  check_nominal_inputs(dyn, x0, v_forecast, "sp tracking");
  if (!(setpoint >= 0.0) || !std::isfinite(setpoint))
    throw std::invalid_argument("sp tracking: setpoint must be nonnegative");
  if (!(u_max > 0.0)) throw std::invalid_argument("sp tracking: u_max must be positive");
  const int h = dyn.horizon;

  ProgramBuilder pb;
  NominalProgram np;
  np.horizon = h;
  np.u0 = pb.add_variables(h, 0.0, u_max);
  const std::vector<LinExpr> xs = nominal_states(dyn, x0, v_forecast, np.u0);
  for (int t = 1; t <= h; ++t) {
    LinExpr d = xs[t];
    d -= setpoint;
    pb.add_squared_cost(d, 1.0);
  }
  np.program = pb.build();
  return np;
}

NormRmpcProgram build_norm_rmpc_program(const StackedDynamics& dyn, const ConstraintSet& cons,
                                        double x0, const Eigen::VectorXd& v_forecast,
                                        double omega, const CostSpec& cost,
                                        bool soft_state_slack, double slack_penalty) {
  check_nominal_inputs(dyn, x0, v_forecast, "norm rmpc");
  cons.validate();
  if (!(omega >= 0.0) || !std::isfinite(omega))
    throw std::invalid_argument("norm rmpc: budget must be nonnegative");
  if (cost.kind != CostKind::Nominal)
    throw std::invalid_argument(
        "norm rmpc: the expected cost is defined on learned sets, use the nominal cost");
  if (cost.terminal_weight < 0.0)
    throw std::invalid_argument("norm rmpc: negative terminal weight");
  const int h = dyn.horizon;

  ProgramBuilder pb;
  NormRmpcProgram rp;
  rp.horizon = h;
  rp.m_idx = Eigen::MatrixXi::Constant(h, h, -1);
  // u_0 = h_0 has no disturbance term, so its bounds go on the variable.
  rp.h0 = pb.add_variable(0.0, cons.u_max);
  if (h > 1) pb.add_variables(h - 1);
  for (int t = 1; t < h; ++t)
    for (int j = 0; j < t; ++j) rp.m_idx(t, j) = pb.add_variable();

  std::vector<int> n_state(h + 1, -1), n_input(h, -1);
  for (int t = 1; t <= h; ++t) n_state[t] = pb.add_variable(0.0, kInf);
  for (int t = 1; t < h; ++t) n_input[t] = pb.add_variable(0.0, kInf);

  int s0 = -1;
  if (soft_state_slack) {
    if (!(slack_penalty > 0.0))
      throw std::invalid_argument("norm rmpc: slack penalty must be positive");
    s0 = pb.add_variables(h, 0.0, kInf);
    for (int t = 0; t < h; ++t) {
      rp.slack_vars.push_back(s0 + t);
      pb.add_linear_cost(LinExpr::variable(s0 + t, slack_penalty));
    }
  }

  const std::vector<LinExpr> det = nominal_states(dyn, x0, v_forecast, rp.h0);

  // State rows: x_t >= x_min for every ||w||_1 <= omega. The disturbance
  // coefficient of x_t on w_c is bw(t,c) plus the policy response routed
  // through later inputs; its sup over the ball is omega times the largest
  // coefficient magnitude, held by the epigraph variable.
  for (int t = 1; t <= h; ++t) {
    for (int c = 0; c < t; ++c) {
      LinExpr a(dyn.bw_stack(t, c));
      for (int k = c + 1; k < t; ++k)
        if (rp.m_idx(k, c) >= 0) a.add(rp.m_idx(k, c), dyn.bu_stack(t, k));
      LinExpr up = a;
      up.add(n_state[t], -1.0);
      pb.add_inequality(up);
      LinExpr dn = -a;
      dn.add(n_state[t], -1.0);
      pb.add_inequality(dn);
    }
    LinExpr row(cons.x_min);
    row -= det[t];
    row.add(n_state[t], omega);
    if (soft_state_slack) row.add(s0 + t - 1, -1.0);
    pb.add_inequality(row);
  }

  // Input rows: u_t = h_t + M_t w shares one worst case for both sides.
  for (int t = 1; t < h; ++t) {
    for (int c = 0; c < t; ++c) {
      LinExpr up = LinExpr::variable(rp.m_idx(t, c));
      up.add(n_input[t], -1.0);
      pb.add_inequality(up);
      LinExpr dn = LinExpr::variable(rp.m_idx(t, c), -1.0);
      dn.add(n_input[t], -1.0);
      pb.add_inequality(dn);
    }
    LinExpr hi = LinExpr::variable(rp.h0 + t);
    hi.add(n_input[t], omega);
    hi -= cons.u_max;
    pb.add_inequality(hi);
    LinExpr lo = LinExpr::variable(rp.h0 + t, -1.0);
    lo.add(n_input[t], omega);
    pb.add_inequality(lo);
  }

  for (int t = 0; t < h; ++t) pb.add_quadratic_cost(rp.h0 + t, rp.h0 + t, 1.0);
  if (cost.terminal_weight > 0.0) pb.add_squared_cost(det[h], cost.terminal_weight);
  rp.program = pb.build();
  return rp;
}

Controller::Controller(const ControllerConfig& config, const WaterBalanceParams& params,
                       const ConstraintSet& cons, const TrainedUncertainty* trained,
                       std::string dump_dir)
    : config_(config),
      params_(params),
      cons_(cons),
      trained_(trained),
      dump_dir_(std::move(dump_dir)),
      name_(controller_name(config)) {
  params_.validate();
  cons_.validate();
  if (const auto* ol = std::get_if<OpenLoopConfig>(&config_)) {
    if (!(ol->a >= 0.0) || !(ol->b >= 0.0))
      throw std::invalid_argument("open loop: coefficients must be nonnegative");
  } else if (const auto* rb = std::get_if<RuleBasedConfig>(&config_)) {
    if (!(rb->threshold >= 0.0) || !(rb->dose >= 0.0))
      throw std::invalid_argument("rule based: threshold and dose must be nonnegative");
  } else if (const auto* nr = std::get_if<NormRmpcConfig>(&config_)) {
    if (!(nr->omega >= 0.0) || !std::isfinite(nr->omega))
      throw std::invalid_argument("norm rmpc: budget must be nonnegative");
  } else if (const auto* sp = std::get_if<SpTrackingConfig>(&config_)) {
    if (!(sp->setpoint >= 0.0))
      throw std::invalid_argument("sp tracking: setpoint must be nonnegative");
  } else if (const auto* dd = std::get_if<DdrmpcConfig>(&config_)) {
    if (trained_ == nullptr)
      throw std::invalid_argument("ddrmpc: trained uncertainty sets are required");
    if (trained_->horizon < params_.horizon_steps)
      throw std::invalid_argument("ddrmpc: sets were trained for a shorter horizon");
    if (dd->cost.terminal_weight < 0.0)
      throw std::invalid_argument("ddrmpc: negative terminal weight");
  }
}

double Controller::decide(double x_now, const Forecasts& forecasts, int period_index) {
  if (!std::isfinite(x_now)) throw std::invalid_argument("decide: non-finite moisture level");
  if (period_index < 0) throw std::invalid_argument("decide: negative period index");
  info_ = DecisionInfo{};
  period_ = period_index;

  double u = 0.0;
  if (const auto* ol = std::get_if<OpenLoopConfig>(&config_)) {
    // The weekly dose is set from the level at the week boundary (28
    // periods, aligned to the run start) and held until the next one.
    const int week = period_index / 28;
    if (week != last_week_) {
      week_dose_ = std::max(ol->b - ol->a * x_now, 0.0);
      last_week_ = week;
    }
    u = week_dose_;
  } else if (const auto* rb = std::get_if<RuleBasedConfig>(&config_)) {
    u = x_now <= rb->threshold ? rb->dose : 0.0;
  } else {
    u = decide_mpc(x_now, forecasts);
  }
  return std::min(std::max(u, 0.0), cons_.u_max);
}

double Controller::decide_mpc(double x_now, const Forecasts& fc) {
  const int avail = static_cast<int>(fc.ehat.size());
  if (avail < 1 || fc.phat.size() != avail)
    throw std::invalid_argument("decide: forecast vectors must be nonempty and equally sized");
  if (!fc.ehat.allFinite() || !fc.phat.allFinite() || fc.ehat.minCoeff() < 0.0 ||
      fc.phat.minCoeff() < 0.0)
    throw std::invalid_argument("decide: forecasts must be finite and nonnegative");
  const int hp = std::min(params_.horizon_steps, avail);
  info_.horizon_used = hp;
  const StackedDynamics& dyn = dyn_for(hp);
  const ConstraintSet cons = cons_for(hp);
  const Eigen::VectorXd ehat = fc.ehat.head(hp);
  Eigen::VectorXd phat = fc.phat.head(hp);
  const Eigen::VectorXd v = phat - ehat;

  if (std::holds_alternative<CempcConfig>(config_)) {
    NominalProgram hard = build_cempc_program(dyn, cons, x_now, v, CostSpec{});
    Solution sol = attempt(hard.program, SolveMethod::Auto, true);
    if (sol.status == SolveStatus::Optimal) return sol.primal(hard.u0);
    NominalProgram relaxed = build_cempc_program(dyn, cons, x_now, v, CostSpec{}, true);
    return finish_soft(relaxed.program, relaxed.slack_vars, relaxed.u0, "cempc");
  }
  if (const auto* sp = std::get_if<SpTrackingConfig>(&config_)) {
    NominalProgram prog = build_sp_tracking_program(dyn, x_now, v, sp->setpoint, cons.u_max);
    Solution sol = attempt(prog.program, SolveMethod::Auto, true);
    if (sol.status != SolveStatus::Optimal)
      fail_with_dump(prog.program, "sp tracking", sol.message);
    return sol.primal(prog.u0);
  }
  if (const auto* nr = std::get_if<NormRmpcConfig>(&config_)) {
    NormRmpcProgram hard = build_norm_rmpc_program(dyn, cons, x_now, v, nr->omega, CostSpec{});
    Solution sol = attempt(hard.program, SolveMethod::Auto, true);
    if (sol.status == SolveStatus::Optimal) return sol.primal(hard.h0);
    NormRmpcProgram relaxed =
        build_norm_rmpc_program(dyn, cons, x_now, v, nr->omega, CostSpec{}, true);
    return finish_soft(relaxed.program, relaxed.slack_vars, relaxed.h0, "norm rmpc");
  }

  const auto& dd = std::get<DdrmpcConfig>(config_);
  // A precipitation forecast above the physical cap carries no extra
  // information for the bounded error model; clamp rather than refuse.
  phat = phat.cwiseMin(trained_->p_max);
  const Eigen::VectorXd vd = phat - ehat;
  ConditionalSet cset;
  cset.p_max = trained_->p_max;
  cset.phat = phat;
  cset.inner = xi_inner_for(hp);
  ReformOptions ro;
  ro.cost = cost_for(hp);
  const SvcSet& eta = eta_for(hp);
  AssembledProgram hard = dd.policy == PolicyKind::Gadf
                              ? assemble_gadf_program(dyn, cons, eta, cset, x_now, vd, ro)
                              : assemble_adf_program(dyn, cons, eta, cset, x_now, vd, ro);
  Solution sol = attempt(hard.program, SolveMethod::Auto, true);
  if (sol.status == SolveStatus::Optimal) return sol.primal(hard.h0);
  ro.soft_state_slack = true;
  AssembledProgram relaxed = dd.policy == PolicyKind::Gadf
                                 ? assemble_gadf_program(dyn, cons, eta, cset, x_now, vd, ro)
                                 : assemble_adf_program(dyn, cons, eta, cset, x_now, vd, ro);
  return finish_soft(relaxed.program, relaxed.slack_vars, relaxed.h0, "ddrmpc");
}

Solution Controller::attempt(const ProgramDescription& prog, SolveMethod method,
                             bool use_warm) {
  SolverOptions opts;
  opts.method = method;
  WarmStart out;
  Solution sol =
      solve(prog, opts, use_warm && have_warm_ ? &warm_ : nullptr, use_warm ? &out : nullptr);
  if (use_warm) {
    warm_ = std::move(out);
    have_warm_ = true;
  }
  info_.status = sol.status;
  info_.solve_seconds += sol.solve_time_seconds;
  info_.iterations += sol.iterations;
  return sol;
}

double Controller::finish_soft(const ProgramDescription& prog, const std::vector<int>& slack_vars,
                               int first_input, const char* what) {
  // The relaxation is feasible by construction, so certificates are beside
  // the point and the interior point path is the quick reliable choice.
  Solution sol = attempt(prog, SolveMethod::InteriorPoint, false);
  if (sol.status != SolveStatus::Optimal) fail_with_dump(prog, what, sol.message);
  info_.soft_fallback = true;
  for (int idx : slack_vars) info_.max_slack = std::max(info_.max_slack, sol.primal(idx));
  return sol.primal(first_input);
}

void Controller::fail_with_dump(const ProgramDescription& prog, const char* what,
                                const std::string& detail) {
  std::string note;
  if (!dump_dir_.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(dump_dir_, ec);
    const std::string path =
        dump_dir_ + "/" + name_ + "_period" + std::to_string(period_) + ".lp";
    std::ofstream out(path);
    if (out) {
      out << write_lp(prog);
      note = ", program dumped to " + path;
    }
  }
  throw std::runtime_error(std::string(what) + ": no usable decision, " + detail + note);
}

const StackedDynamics& Controller::dyn_for(int horizon) {
  auto it = dyn_cache_.find(horizon);
  if (it != dyn_cache_.end()) return it->second;
  WaterBalanceParams p = params_;
  p.horizon_steps = horizon;
  return dyn_cache_.emplace(horizon, build_stacked(p)).first->second;
}

ConstraintSet Controller::cons_for(int horizon) const {
  return horizon == params_.horizon_steps ? cons_
                                          : make_constraints(horizon, cons_.x_min, cons_.u_max);
}

const SvcSet& Controller::eta_for(int horizon) {
  if (horizon == trained_->horizon) return trained_->eta_set;
  auto it = eta_cache_.find(horizon);
  if (it != eta_cache_.end()) return it->second;
  return eta_cache_
      .emplace(horizon, prefix_set(trained_->eta_set, trained_->train_eta, horizon,
                                   trained_->eta_calibration.theta_calibrated,
                                   trained_->eta_theta_trained))
      .first->second;
}

const SvcSet& Controller::xi_inner_for(int horizon) {
  if (horizon == trained_->horizon) return trained_->xi_set;
  auto it = xi_cache_.find(horizon);
  if (it != xi_cache_.end()) return it->second;
  return xi_cache_
      .emplace(horizon, prefix_set(trained_->xi_set, trained_->train_xibar, horizon,
                                   trained_->xi_calibration.theta_calibrated,
                                   trained_->xi_theta_trained))
      .first->second;
}

const CostSpec& Controller::cost_for(int horizon) {
  const auto& dd = std::get<DdrmpcConfig>(config_);
  if (dd.cost.kind == CostKind::Nominal) return dd.cost;
  auto it = cost_cache_.find(horizon);
  if (it != cost_cache_.end()) return it->second;
  CostSpec cs;
  if (horizon == trained_->horizon && dd.cost.z_mean.size() == 3 * horizon) {
    cs = dd.cost;
  } else {
    TrainedUncertainty prefix;
    prefix.horizon = horizon;
    prefix.train_eta = trained_->train_eta.leftCols(horizon);
    prefix.train_xibar = trained_->train_xibar.leftCols(horizon);
    cs = expected_cost(prefix, dd.cost.terminal_weight);
  }
  return cost_cache_.emplace(horizon, std::move(cs)).first->second;
}

}  // namespace ddrmpc
