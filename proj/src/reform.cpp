#include "ddrmpc/reform.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace ddrmpc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_gain_shape(const Eigen::MatrixXd& m, const Eigen::VectorXd& h, const char* what) {
  if (m.rows() != m.cols())
    throw std::invalid_argument(std::string(what) + ": gain matrix must be square");
  if (h.size() != m.rows())
    throw std::invalid_argument(std::string(what) + ": offset size does not match the gain");
  if (!m.allFinite() || !h.allFinite())
    throw std::invalid_argument(std::string(what) + ": non-finite policy entry");
  for (int t = 0; t < m.rows(); ++t)
    for (int j = t; j < m.cols(); ++j)
      if (m(t, j) != 0.0)
        throw std::invalid_argument(std::string(what) +
                                    ": gain entry (" + std::to_string(t) + ", " +
                                    std::to_string(j) + ") would react to an unseen disturbance");
}

void check_model(const SvcModel& model, int dim, const char* what) {
  const int nsv = static_cast<int>(model.support_points.rows());
  if (nsv < 1) throw std::invalid_argument(std::string(what) + ": model has no support vectors");
  if (model.dim != dim || model.support_points.cols() != dim)
    throw std::invalid_argument(std::string(what) + ": model dimension mismatch");
  if (model.q_matrix.rows() != dim || model.q_matrix.cols() != dim)
    throw std::invalid_argument(std::string(what) + ": weight matrix dimension mismatch");
  if (model.alpha.size() != nsv)
    throw std::invalid_argument(std::string(what) + ": alpha size does not match support points");
  if (!(model.theta >= 0.0))
    throw std::invalid_argument(std::string(what) + ": negative radius");
}

std::vector<LinExpr> constant_exprs(const Eigen::VectorXd& a) {
  std::vector<LinExpr> out(a.size());
  for (int t = 0; t < a.size(); ++t) out[t] = LinExpr(a(t));
  return out;
}

// Common skeleton of both dual blocks. mu_i is substituted out through the
// coupling mu_i = k alpha_i 1 - lambda_i, which halves the block and makes
// that identity hold by construction; what remains of it is the box
// 0 <= lambda_i <= k alpha_i.
struct BlockCore {
  Eigen::MatrixXd qsv;   // row i = (Q sv_i)'
  Eigen::VectorXd qone;  // Q 1
  double alpha_sum = 0.0;
  double k_obj = 0.0;  // objective coefficient of k
};

BlockCore block_core(const SvcModel& model) {
  BlockCore core;
  core.qsv = model.support_points * model.q_matrix.transpose();
  core.qone = model.q_matrix * Eigen::VectorXd::Ones(model.dim);
  core.alpha_sum = model.alpha.sum();
  core.k_obj = model.theta;
  for (int i = 0; i < core.qsv.rows(); ++i)
    core.k_obj += model.alpha(i) * core.qsv.row(i).sum();
  return core;
}

void emit_lambda_box(ProgramBuilder& pb, const RobustConstraintBlock& blk,
                     const Eigen::VectorXd& alpha) {
  for (int i = 0; i < blk.n_sv; ++i)
    for (int c = 0; c < blk.dim; ++c) {
      LinExpr e = LinExpr::variable(blk.lambda0 + i * blk.dim + c);
      e.add(blk.k_index, -alpha(i));
      pb.add_inequality(e);
    }
}

// 2 sum_i (Q lambda_i)_t - k alpha_sum (Q1)_t, the uncertain-coordinate part
// shared by the coupling rows of both blocks.
LinExpr dual_coordinate_expr(const RobustConstraintBlock& blk, const BlockCore& core,
                             const Eigen::MatrixXd& q, int t) {
  LinExpr e;
  for (int i = 0; i < blk.n_sv; ++i)
    for (int c = 0; c < blk.dim; ++c)
      e.add(blk.lambda0 + i * blk.dim + c, 2.0 * q(t, c));
  e.add(blk.k_index, -core.alpha_sum * core.qone(t));
  return e;
}

void fill_objective(RobustConstraintBlock& blk, const BlockCore& core) {
  blk.objective.add(blk.k_index, core.k_obj);
  for (int i = 0; i < blk.n_sv; ++i)
    for (int c = 0; c < blk.dim; ++c)
      blk.objective.add(blk.lambda0 + i * blk.dim + c, -2.0 * core.qsv(i, c));
}

DualCertificate reconstruct(const SvcModel& model, const RobustConstraintBlock& blk,
                            const Eigen::VectorXd& primal) {
  DualCertificate cert;
  cert.k = std::max(primal(blk.k_index), 0.0);
  cert.lambda.resize(blk.n_sv, blk.dim);
  cert.mu.resize(blk.n_sv, blk.dim);
  for (int i = 0; i < blk.n_sv; ++i) {
    const double cap = cert.k * model.alpha(i);
    for (int c = 0; c < blk.dim; ++c) {
      const double l = std::min(std::max(primal(blk.lambda0 + i * blk.dim + c), 0.0), cap);
      cert.lambda(i, c) = l;
      cert.mu(i, c) = cap - l;
    }
  }
  return cert;
}

}  // namespace

void AdfPolicy::validate() const { check_gain_shape(m_gain, h_offsets, "adf policy"); }

void GadfPolicy::validate() const {
  check_gain_shape(m_plus, h_offsets, "gadf policy");
  check_gain_shape(m_minus, h_offsets, "gadf policy");
  check_gain_shape(l_gain, h_offsets, "gadf policy");
}

GadfPolicy GadfPolicy::from_adf(const AdfPolicy& adf, const Scaling& scaling) {
  adf.validate();
  const int h = static_cast<int>(adf.m_gain.rows());
  if (scaling.c_diag.size() != h || scaling.d_diag.size() != h)
    throw std::invalid_argument("gadf policy: scaling size does not match the gain");
  GadfPolicy g;
  g.m_plus = adf.m_gain * scaling.c_diag.asDiagonal();
  g.m_minus = -(adf.m_gain * scaling.d_diag.asDiagonal());
  g.l_gain = -adf.m_gain;
  g.h_offsets = adf.h_offsets;
  return g;
}

RobustConstraintBlock lemma1_dual_block(ProgramBuilder& pb, const SvcModel& model,
                                        const std::vector<LinExpr>& a) {
  const int d = model.dim;
  check_model(model, d, "lemma1 block");
  if (static_cast<int>(a.size()) != d)
    throw std::invalid_argument("lemma1 block: coefficient size does not match the model");
  const BlockCore core = block_core(model);

  RobustConstraintBlock blk;
  blk.n_sv = static_cast<int>(model.support_points.rows());
  blk.dim = d;
  blk.lambda0 = pb.add_variables(blk.n_sv * d, 0.0, kInf);
  blk.k_index = pb.add_variable(0.0, kInf);

  emit_lambda_box(pb, blk, model.alpha);
  for (int t = 0; t < d; ++t) {
    LinExpr e = a[t];
    e += dual_coordinate_expr(blk, core, model.q_matrix, t);
    pb.add_equality(e);
  }
  fill_objective(blk, core);
  return blk;
}

RobustConstraintBlock lemma1_dual_block(ProgramBuilder& pb, const SvcModel& model,
                                        const Eigen::VectorXd& a) {
  return lemma1_dual_block(pb, model, constant_exprs(a));
}

RobustConstraintBlock theorem3_dual_block(ProgramBuilder& pb, const SvcModel& model,
                                          const std::vector<LinExpr>& a,
                                          const std::vector<LinExpr>& b) {
  const int d = model.dim;
  check_model(model, d, "theorem3 block");
  if (static_cast<int>(a.size()) != d || static_cast<int>(b.size()) != d)
    throw std::invalid_argument("theorem3 block: coefficient size does not match the model");
  const BlockCore core = block_core(model);

  RobustConstraintBlock blk;
  blk.n_sv = static_cast<int>(model.support_points.rows());
  blk.dim = d;
  blk.lambda0 = pb.add_variables(blk.n_sv * d, 0.0, kInf);
  blk.k_index = pb.add_variable(0.0, kInf);
  blk.r0 = pb.add_variables(d, 0.0, kInf);
  blk.s0 = pb.add_variables(d, 0.0, kInf);

  emit_lambda_box(pb, blk, model.alpha);
  for (int t = 0; t < d; ++t) {
    LinExpr up = a[t];
    up += dual_coordinate_expr(blk, core, model.q_matrix, t);
    up.add(blk.r0 + t, -1.0);
    pb.add_inequality(up);

    LinExpr lo = b[t];
    lo -= dual_coordinate_expr(blk, core, model.q_matrix, t);
    lo.add(blk.s0 + t, -1.0);
    pb.add_inequality(lo);
  }
  fill_objective(blk, core);
  for (int t = 0; t < d; ++t) {
    blk.objective.add(blk.r0 + t, 1.0);
    blk.objective.add(blk.s0 + t, 1.0);
  }
  return blk;
}

RobustConstraintBlock theorem3_dual_block(ProgramBuilder& pb, const SvcModel& model,
                                          const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return theorem3_dual_block(pb, model, constant_exprs(a), constant_exprs(b));
}

double lemma1_worst_case(const SvcModel& model, const Eigen::VectorXd& a, DualCertificate* cert,
                         const SolverOptions& opts) {
  ProgramBuilder pb;
  RobustConstraintBlock blk = lemma1_dual_block(pb, model, a);
  pb.add_linear_cost(blk.objective);
  Solution sol = solve(pb.build(), opts);
  if (sol.status != SolveStatus::Optimal)
    throw std::runtime_error(std::string("lemma1 worst case: solver returned ") +
                             to_string(sol.status));
  if (cert) *cert = reconstruct(model, blk, sol.primal);
  return sol.objective;
}

double theorem3_worst_case(const SvcModel& model, const Eigen::VectorXd& a,
                           const Eigen::VectorXd& b, DualCertificate* cert,
                           const SolverOptions& opts) {
  ProgramBuilder pb;
  RobustConstraintBlock blk = theorem3_dual_block(pb, model, a, b);
  pb.add_linear_cost(blk.objective);
  Solution sol = solve(pb.build(), opts);
  if (sol.status != SolveStatus::Optimal)
    throw std::runtime_error(std::string("theorem3 worst case: solver returned ") +
                             to_string(sol.status));
  if (cert) {
    *cert = reconstruct(model, blk, sol.primal);
    // Box multipliers are re-lifted so the dual rows hold exactly for the
    // reconstructed lambda and k.
    const BlockCore core = block_core(model);
    cert->r.resize(model.dim);
    cert->s.resize(model.dim);
    for (int t = 0; t < model.dim; ++t) {
      double coord = -core.alpha_sum * cert->k * core.qone(t);
      for (int i = 0; i < blk.n_sv; ++i)
        for (int c = 0; c < blk.dim; ++c) coord += 2.0 * model.q_matrix(t, c) * cert->lambda(i, c);
      cert->r(t) = std::max(a(t) + coord, 0.0);
      cert->s(t) = std::max(b(t) - coord, 0.0);
    }
  }
  return sol.objective;
}

CostSpec nominal_cost(double terminal_weight) {
  CostSpec c;
  c.kind = CostKind::Nominal;
  c.terminal_weight = terminal_weight;
  return c;
}

CostSpec expected_cost(const TrainedUncertainty& trained, double terminal_weight) {
  const int h = trained.horizon;
  const int n = static_cast<int>(trained.train_xibar.rows());
  if (h < 1 || n < 1 || trained.train_eta.rows() != n)
    throw std::invalid_argument("expected cost: trained uncertainty has no usable windows");
  Eigen::MatrixXd z(n, 3 * h);
  z.leftCols(h) = trained.train_xibar.cwiseMax(0.0);
  z.middleCols(h, h) = (-trained.train_xibar).cwiseMax(0.0);
  z.rightCols(h) = trained.train_eta;

  CostSpec c;
  c.kind = CostKind::Expected;
  c.terminal_weight = terminal_weight;
  c.z_mean = z.colwise().mean().transpose();
  Eigen::MatrixXd second = (z.transpose() * z) / static_cast<double>(n);
  c.z_second = 0.5 * (second + second.transpose());
  return c;
}

namespace {

// Coefficient expressions of the three gain families, indexed (t, j) with the
// causal entries j < t populated; everything else stays the zero expression.
struct GainGrid {
  std::vector<std::vector<LinExpr>> plus, minus, lg;

  explicit GainGrid(int h)
      : plus(h, std::vector<LinExpr>(h)),
        minus(h, std::vector<LinExpr>(h)),
        lg(h, std::vector<LinExpr>(h)) {}
};

AssembledProgram assemble_core(const StackedDynamics& dyn, const ConstraintSet& cons,
                               const SvcSet& eta_set, const ConditionalSet& xi_set,
                               double x0, const Eigen::VectorXd& v_forecast,
                               const ReformOptions& opts, bool lifted) {
  const int h = dyn.horizon;
  if (h < 1) throw std::invalid_argument("assemble: horizon must be at least 1");
  if (v_forecast.size() != h)
    throw std::invalid_argument("assemble: forecast flow size does not match the horizon");
  if (!std::isfinite(x0)) throw std::invalid_argument("assemble: non-finite initial state");
  cons.validate();
  xi_set.validate();
  if (xi_set.phat.size() != h)
    throw std::invalid_argument("assemble: conditional set horizon mismatch");
  check_model(eta_set.model, h, "assemble (eta set)");
  check_model(xi_set.inner.model, h, "assemble (xi set)");
  if (opts.cost.kind == CostKind::Expected &&
      (opts.cost.z_mean.size() != 3 * h || opts.cost.z_second.rows() != 3 * h ||
       opts.cost.z_second.cols() != 3 * h))
    throw std::invalid_argument("assemble: expected-cost moments do not match the horizon");

  const Scaling sc = scaling_matrices(xi_set.phat, xi_set.p_max);

  ProgramBuilder pb;
  AssembledProgram out;
  out.horizon = h;
  out.lifted_policy = lifted;
  out.scaling = sc;

  // u_0 has no feedback term, so its bounds live on the variable itself.
  out.h0 = pb.add_variable(0.0, cons.u_max);
  if (h > 1) pb.add_variables(h - 1);
  for (int t = 0; t < h; ++t) out.policy_vars.push_back(out.h0 + t);

  out.m_idx = Eigen::MatrixXi::Constant(h, h, -1);
  out.m_plus_idx = Eigen::MatrixXi::Constant(h, h, -1);
  out.m_minus_idx = Eigen::MatrixXi::Constant(h, h, -1);
  out.l_idx = Eigen::MatrixXi::Constant(h, h, -1);

  GainGrid g(h);
  for (int t = 1; t < h; ++t)
    for (int j = 0; j < t; ++j) {
      if (lifted) {
        out.m_plus_idx(t, j) = pb.add_variable();
        out.m_minus_idx(t, j) = pb.add_variable();
        out.l_idx(t, j) = pb.add_variable();
        g.plus[t][j] = LinExpr::variable(out.m_plus_idx(t, j));
        g.minus[t][j] = LinExpr::variable(out.m_minus_idx(t, j));
        g.lg[t][j] = LinExpr::variable(out.l_idx(t, j));
        out.policy_vars.push_back(out.m_plus_idx(t, j));
        out.policy_vars.push_back(out.m_minus_idx(t, j));
        out.policy_vars.push_back(out.l_idx(t, j));
      } else {
        out.m_idx(t, j) = pb.add_variable();
        g.plus[t][j] = LinExpr::variable(out.m_idx(t, j), sc.c_diag(j));
        g.minus[t][j] = LinExpr::variable(out.m_idx(t, j), -sc.d_diag(j));
        g.lg[t][j] = LinExpr::variable(out.m_idx(t, j), -1.0);
        out.policy_vars.push_back(out.m_idx(t, j));
      }
    }

  if (opts.soft_state_slack) {
    if (!(opts.slack_penalty > 0.0))
      throw std::invalid_argument("assemble: slack penalty must be positive");
    for (int t = 0; t < h; ++t) {
      const int s = pb.add_variable(0.0, kInf);
      out.slack_vars.push_back(s);
      pb.add_linear_cost(LinExpr::variable(s, opts.slack_penalty));
    }
  }
  const int overhead = pb.num_variables();

  // Deterministic part of the state trajectory, affine in the offsets.
  std::vector<LinExpr> det(h + 1);
  for (int t = 0; t <= h; ++t) {
    LinExpr e(dyn.a_stack(t) * x0 + dyn.bv_stack.row(t).dot(v_forecast));
    for (int j = 0; j < t && j < h; ++j) e.add(out.h0 + j, dyn.bu_stack(t, j));
    det[t] = e;
  }

  if (opts.cost.kind == CostKind::Nominal) {
    for (int t = 0; t < h; ++t)
      pb.add_squared_cost(LinExpr::variable(out.h0 + t), 1.0);
  } else {
    for (int t = 0; t < h; ++t) {
      std::vector<int> coords;
      for (int grp = 0; grp < 3; ++grp)
        for (int j = 0; j < t; ++j) coords.push_back(grp * h + j);
      std::vector<LinExpr> exprs;
      exprs.reserve(coords.size() + 1);
      exprs.push_back(LinExpr::variable(out.h0 + t));
      for (int j = 0; j < t; ++j) exprs.push_back(g.plus[t][j]);
      for (int j = 0; j < t; ++j) exprs.push_back(g.minus[t][j]);
      for (int j = 0; j < t; ++j) exprs.push_back(g.lg[t][j]);

      const int m = static_cast<int>(coords.size());
      Eigen::MatrixXd w(m + 1, m + 1);
      w(0, 0) = 1.0;
      for (int p = 0; p < m; ++p) {
        w(0, p + 1) = opts.cost.z_mean(coords[p]);
        w(p + 1, 0) = w(0, p + 1);
        for (int q = 0; q < m; ++q) w(p + 1, q + 1) = opts.cost.z_second(coords[p], coords[q]);
      }
      pb.add_quadratic_form(exprs, w);
    }
  }
  if (opts.cost.terminal_weight > 0.0) pb.add_squared_cost(det[h], opts.cost.terminal_weight);

  // Robust moisture floor, one dualized row per predicted state. The state
  // reads x_t = det_t + (BuM+ + BwC) xi+ + (BuM- - BwD) xi- + (BuL - Bw) eta,
  // so the floor holds for the whole set iff the maximum of the negated
  // uncertain part stays below det_t - x_min.
  for (int t = 1; t <= h; ++t) {
    std::vector<LinExpr> a_eta(h), a_xp(h), a_xm(h);
    for (int c = 0; c < h; ++c) {
      LinExpr ae(dyn.bw_stack(t, c));
      LinExpr ap(-dyn.bw_stack(t, c) * sc.c_diag(c));
      LinExpr am(dyn.bw_stack(t, c) * sc.d_diag(c));
      for (int k = c + 1; k < t && k < h; ++k) {
        ae -= dyn.bu_stack(t, k) * g.lg[k][c];
        ap -= dyn.bu_stack(t, k) * g.plus[k][c];
        am -= dyn.bu_stack(t, k) * g.minus[k][c];
      }
      a_eta[c] = ae;
      a_xp[c] = ap;
      a_xm[c] = am;
    }
    RobustConstraintBlock l1 = lemma1_dual_block(pb, eta_set.model, a_eta);
    RobustConstraintBlock t3 = theorem3_dual_block(pb, xi_set.inner.model, a_xp, a_xm);
    LinExpr link = l1.objective + t3.objective;
    link += cons.x_min;
    link -= det[t];
    if (opts.soft_state_slack) link.add(out.slack_vars[t - 1], -1.0);
    pb.add_inequality(link);
    out.num_robust_rows += 1;
  }

  // Robust irrigation capacity for t >= 1, where feedback makes u_t uncertain.
  for (int t = 1; t < h; ++t) {
    std::vector<LinExpr> up_eta(h), up_xp(h), up_xm(h), lo_eta(h), lo_xp(h), lo_xm(h);
    for (int c = 0; c < t; ++c) {
      up_eta[c] = g.lg[t][c];
      up_xp[c] = g.plus[t][c];
      up_xm[c] = g.minus[t][c];
      lo_eta[c] = -g.lg[t][c];
      lo_xp[c] = -g.plus[t][c];
      lo_xm[c] = -g.minus[t][c];
    }
    RobustConstraintBlock u1 = lemma1_dual_block(pb, eta_set.model, up_eta);
    RobustConstraintBlock u3 = theorem3_dual_block(pb, xi_set.inner.model, up_xp, up_xm);
    LinExpr cap = u1.objective + u3.objective;
    cap.add(out.h0 + t, 1.0);
    cap -= cons.u_max;
    pb.add_inequality(cap);

    RobustConstraintBlock l1 = lemma1_dual_block(pb, eta_set.model, lo_eta);
    RobustConstraintBlock l3 = theorem3_dual_block(pb, xi_set.inner.model, lo_xp, lo_xm);
    LinExpr floor = l1.objective + l3.objective;
    floor.add(out.h0 + t, -1.0);
    pb.add_inequality(floor);
    out.num_robust_rows += 2;
  }

  out.num_dual_vars = pb.num_variables() - overhead;
  out.program = pb.build();
  return out;
}

}  // namespace

AssembledProgram assemble_gadf_program(const StackedDynamics& dyn, const ConstraintSet& cons,
                                       const SvcSet& eta_set, const ConditionalSet& xi_set,
                                       double x0, const Eigen::VectorXd& v_forecast,
                                       const ReformOptions& opts) {
  return assemble_core(dyn, cons, eta_set, xi_set, x0, v_forecast, opts, true);
}

AssembledProgram assemble_adf_program(const StackedDynamics& dyn, const ConstraintSet& cons,
                                      const SvcSet& eta_set, const ConditionalSet& xi_set,
                                      double x0, const Eigen::VectorXd& v_forecast,
                                      const ReformOptions& opts) {
  return assemble_core(dyn, cons, eta_set, xi_set, x0, v_forecast, opts, false);
}

GadfPolicy extract_gadf_policy(const AssembledProgram& prog, const Eigen::VectorXd& primal) {
  if (!prog.lifted_policy)
    throw std::invalid_argument("extract: program does not carry a lifted policy");
  if (primal.size() != prog.program.num_vars)
    throw std::invalid_argument("extract: primal size does not match the program");
  const int h = prog.horizon;
  GadfPolicy p;
  p.m_plus = Eigen::MatrixXd::Zero(h, h);
  p.m_minus = Eigen::MatrixXd::Zero(h, h);
  p.l_gain = Eigen::MatrixXd::Zero(h, h);
  p.h_offsets = primal.segment(prog.h0, h);
  for (int t = 1; t < h; ++t)
    for (int j = 0; j < t; ++j) {
      p.m_plus(t, j) = primal(prog.m_plus_idx(t, j));
      p.m_minus(t, j) = primal(prog.m_minus_idx(t, j));
      p.l_gain(t, j) = primal(prog.l_idx(t, j));
    }
  return p;
}

AdfPolicy extract_adf_policy(const AssembledProgram& prog, const Eigen::VectorXd& primal) {
  if (prog.lifted_policy)
    throw std::invalid_argument("extract: program carries a lifted policy");
  if (primal.size() != prog.program.num_vars)
    throw std::invalid_argument("extract: primal size does not match the program");
  const int h = prog.horizon;
  AdfPolicy p;
  p.m_gain = Eigen::MatrixXd::Zero(h, h);
  p.h_offsets = primal.segment(prog.h0, h);
  for (int t = 1; t < h; ++t)
    for (int j = 0; j < t; ++j) p.m_gain(t, j) = primal(prog.m_idx(t, j));
  return p;
}

void propagate_policy(const StackedDynamics& dyn, const GadfPolicy& policy,
                      const Scaling& scaling, double x0, const Eigen::VectorXd& v_forecast,
                      const Eigen::VectorXd& xi_plus, const Eigen::VectorXd& xi_minus,
                      const Eigen::VectorXd& eta, Eigen::VectorXd* states,
                      Eigen::VectorXd* inputs) {
  policy.validate();
  const int h = static_cast<int>(policy.h_offsets.size());
  if (dyn.horizon != h || v_forecast.size() != h || xi_plus.size() != h ||
      xi_minus.size() != h || eta.size() != h || scaling.c_diag.size() != h)
    throw std::invalid_argument("propagate: dimension mismatch");

  Eigen::VectorXd u = policy.h_offsets + policy.m_plus * xi_plus + policy.m_minus * xi_minus +
                      policy.l_gain * eta;
  Eigen::VectorXd w = scaling.c_diag.cwiseProduct(xi_plus) -
                      scaling.d_diag.cwiseProduct(xi_minus) - eta;
  Eigen::VectorXd x = predict_trajectory(dyn, x0, u, v_forecast, w);
  if (inputs) *inputs = u;
  if (states) *states = x;
}

}  // namespace ddrmpc
