#include "ddrmpc/solver.hpp"

#include <Eigen/SparseCholesky>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace ddrmpc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Internal row-stacked form  l <= A x <= u  covering equalities (l = u),
// inequalities (l = -inf) and finite variable bounds (identity rows).
struct StackedForm {
  Eigen::SparseMatrix<double> a;
  Eigen::VectorXd l, u;
  int n = 0;
  int m = 0;
  int n_eq = 0;
  int n_ineq = 0;
};

StackedForm stack_rows(const ProgramDescription& prog) {
  StackedForm f;
  f.n = prog.num_vars;
  f.n_eq = prog.num_eq();
  f.n_ineq = prog.num_ineq();

  std::vector<int> bounded;
  for (int j = 0; j < f.n; ++j)
    if (prog.lower(j) > -kInf || prog.upper(j) < kInf) bounded.push_back(j);

  f.m = f.n_eq + f.n_ineq + static_cast<int>(bounded.size());
  f.a.resize(f.m, f.n);
  f.l.resize(f.m);
  f.u.resize(f.m);

  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(prog.eq_matrix.nonZeros() + prog.ineq_matrix.nonZeros() + bounded.size());
  for (int k = 0; k < prog.eq_matrix.outerSize(); ++k)
    for (Eigen::SparseMatrix<double>::InnerIterator it(prog.eq_matrix, k); it; ++it)
      trips.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
  for (int k = 0; k < prog.ineq_matrix.outerSize(); ++k)
    for (Eigen::SparseMatrix<double>::InnerIterator it(prog.ineq_matrix, k); it; ++it)
      trips.emplace_back(f.n_eq + static_cast<int>(it.row()), static_cast<int>(it.col()),
                         it.value());
  for (size_t b = 0; b < bounded.size(); ++b)
    trips.emplace_back(f.n_eq + f.n_ineq + static_cast<int>(b), bounded[b], 1.0);
  f.a.setFromTriplets(trips.begin(), trips.end());

  f.l.head(f.n_eq) = prog.eq_rhs;
  f.u.head(f.n_eq) = prog.eq_rhs;
  f.l.segment(f.n_eq, f.n_ineq).setConstant(-kInf);
  f.u.segment(f.n_eq, f.n_ineq) = prog.ineq_rhs;
  for (size_t b = 0; b < bounded.size(); ++b) {
    f.l(f.n_eq + f.n_ineq + static_cast<int>(b)) = prog.lower(bounded[b]);
    f.u(f.n_eq + f.n_ineq + static_cast<int>(b)) = prog.upper(bounded[b]);
  }
  return f;
}

// Modified Ruiz equilibration of the (P, A, q) data with cost normalization.
struct Scaling {
  Eigen::VectorXd d;  // variable scaling
  Eigen::VectorXd e;  // row scaling
  double gamma = 1.0;
};

Scaling equilibrate(Eigen::SparseMatrix<double>& p, Eigen::VectorXd& q,
                    Eigen::SparseMatrix<double>& a, Eigen::VectorXd& l, Eigen::VectorXd& u) {
  const int n = static_cast<int>(p.rows());
  const int m = static_cast<int>(a.rows());
  Scaling s;
  s.d = Eigen::VectorXd::Ones(n);
  s.e = Eigen::VectorXd::Ones(m);

  Eigen::VectorXd dd(n), de(m);
  for (int iter = 0; iter < 10; ++iter) {
    dd.setZero();
    de.setZero();
    for (int j = 0; j < n; ++j) {
      for (Eigen::SparseMatrix<double>::InnerIterator it(p, j); it; ++it)
        dd(j) = std::max(dd(j), std::abs(it.value()));
      for (Eigen::SparseMatrix<double>::InnerIterator it(a, j); it; ++it) {
        dd(j) = std::max(dd(j), std::abs(it.value()));
        de(it.row()) = std::max(de(it.row()), std::abs(it.value()));
      }
    }
    for (int j = 0; j < n; ++j) dd(j) = dd(j) > 1e-12 ? 1.0 / std::sqrt(dd(j)) : 1.0;
    for (int i = 0; i < m; ++i) de(i) = de(i) > 1e-12 ? 1.0 / std::sqrt(de(i)) : 1.0;

    p = dd.asDiagonal() * p * dd.asDiagonal();
    q = dd.cwiseProduct(q);
    a = de.asDiagonal() * a * dd.asDiagonal();
    for (int i = 0; i < m; ++i) {
      if (l(i) > -kInf) l(i) *= de(i);
      if (u(i) < kInf) u(i) *= de(i);
    }
    s.d = s.d.cwiseProduct(dd);
    s.e = s.e.cwiseProduct(de);

    // Cost normalization averages only over columns the quadratic term
    // occupies; averaging over all columns makes the factor explode on
    // programs whose quadratic support is a sliver of the variables (the
    // factor then feeds back through the column scaling every pass).
    double pcol_mean = 0.0;
    int pcols = 0;
    if (p.nonZeros() > 0) {
      for (int j = 0; j < n; ++j) {
        double cn = 0.0;
        for (Eigen::SparseMatrix<double>::InnerIterator it(p, j); it; ++it)
          cn = std::max(cn, std::abs(it.value()));
        if (cn > 0.0) {
          pcol_mean += cn;
          ++pcols;
        }
      }
      if (pcols > 0) pcol_mean /= pcols;
    }
    double gs = std::max(pcol_mean, q.lpNorm<Eigen::Infinity>());
    gs = gs > 1e-12 ? 1.0 / gs : 1.0;
    p *= gs;
    q *= gs;
    s.gamma *= gs;
  }
  return s;
}

Eigen::SparseMatrix<double> build_kkt(const Eigen::SparseMatrix<double>& p,
                                      const Eigen::SparseMatrix<double>& a, double sigma,
                                      const Eigen::VectorXd& rho) {
  const int n = static_cast<int>(p.rows());
  const int m = static_cast<int>(a.rows());
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(p.nonZeros() + 2 * a.nonZeros() + n + m);
  for (int j = 0; j < n; ++j)
    for (Eigen::SparseMatrix<double>::InnerIterator it(p, j); it; ++it)
      trips.emplace_back(static_cast<int>(it.row()), j, it.value());
  for (int j = 0; j < n; ++j) trips.emplace_back(j, j, sigma);
  for (int j = 0; j < n; ++j)
    for (Eigen::SparseMatrix<double>::InnerIterator it(a, j); it; ++it) {
      trips.emplace_back(n + static_cast<int>(it.row()), j, it.value());
      trips.emplace_back(j, n + static_cast<int>(it.row()), it.value());
    }
  for (int i = 0; i < m; ++i) trips.emplace_back(n + i, n + i, -1.0 / rho(i));
  Eigen::SparseMatrix<double> kkt(n + m, n + m);
  kkt.setFromTriplets(trips.begin(), trips.end());
  return kkt;
}

double inf_norm(const Eigen::VectorXd& v) {
  return v.size() == 0 ? 0.0 : v.lpNorm<Eigen::Infinity>();
}

struct PolishResult {
  bool ok = false;
  Eigen::VectorXd x, y;
};

// Solve the equality-constrained KKT system restricted to the active rows.
// The initial guess activates rows by dual sign or by the projected slack
// sitting on its bound; a bounded repair loop then adds rows the restricted
// solution violates and drops rows whose multiplier has the wrong sign.
// Reaching a fixpoint means the full KKT conditions hold, so the result is an
// exact optimum; anything else is discarded by the residual gate at the call
// site. Weakly active rows defeat the one-shot guess (their slack approaches
// the bound from inside and their multiplier vanishes), which is why the
// repair loop and not the guess carries the correctness burden.
PolishResult polish(const Eigen::SparseMatrix<double>& p, const Eigen::VectorXd& q,
                    const StackedForm& f, const Eigen::VectorXd& y, const Eigen::VectorXd& z,
                    const SolverOptions& opts, const std::vector<int>* state_hint = nullptr) {
  PolishResult res;
  const int n = f.n;
  const double ytol = 1e-9 * std::max(1.0, inf_norm(y));

  // -1 pinned at lower bound, +1 at upper, +2 equality, 0 free. A caller with
  // sharper activity information (the interior point path reads it off the
  // complementarity pairs) seeds the loop directly.
  std::vector<int> state(f.m, 0);
  if (state_hint && static_cast<int>(state_hint->size()) == f.m) state = *state_hint;
  else
  for (int i = 0; i < f.m; ++i) {
    if (i < f.n_eq) continue;
    const bool has_u = f.u(i) < kInf, has_l = f.l(i) > -kInf;
    if (y(i) > ytol && has_u) state[i] = 1;
    else if (y(i) < -ytol && has_l) state[i] = -1;
    else if (has_u && z(i) >= f.u(i) - 1e-9 * std::max(1.0, std::abs(f.u(i)))) state[i] = 1;
    else if (has_l && z(i) <= f.l(i) + 1e-9 * std::max(1.0, std::abs(f.l(i)))) state[i] = -1;
  }
  for (int i = 0; i < f.n_eq; ++i) state[i] = 2;

  std::vector<Eigen::Triplet<double>> ptrips;
  for (int j = 0; j < p.outerSize(); ++j)
    for (Eigen::SparseMatrix<double>::InnerIterator it(p, j); it; ++it)
      ptrips.emplace_back(static_cast<int>(it.row()), j, it.value());

  const int max_passes = 40;
  Eigen::VectorXd xs, ys;
  for (int pass = 0; pass < max_passes; ++pass) {
    std::vector<int> act;
    for (int i = 0; i < f.m; ++i)
      if (state[i] != 0) act.push_back(i);
    const int k = static_cast<int>(act.size());
    // More active rows than variables cannot form a consistent vertex; the
    // exchange has derailed and further passes only burn factorizations.
    if (k > n) return res;

    std::vector<Eigen::Triplet<double>> trips = ptrips;
    std::vector<int> row_slot(f.m, -1);
    for (int r = 0; r < k; ++r) row_slot[act[r]] = r;
    for (int j = 0; j < f.a.outerSize(); ++j)
      for (Eigen::SparseMatrix<double>::InnerIterator it(f.a, j); it; ++it) {
        const int slot = row_slot[it.row()];
        if (slot >= 0) {
          trips.emplace_back(n + slot, j, it.value());
          trips.emplace_back(j, n + slot, it.value());
        }
      }
    for (int j = 0; j < n + k; ++j)
      trips.emplace_back(j, j, j < n ? opts.polish_delta : -opts.polish_delta);
    Eigen::SparseMatrix<double> kkt_reg(n + k, n + k);
    kkt_reg.setFromTriplets(trips.begin(), trips.end());
    Eigen::SparseMatrix<double> kkt0 = kkt_reg;
    for (int j = 0; j < n + k; ++j) kkt0.coeffRef(j, j) -= j < n ? opts.polish_delta : -opts.polish_delta;

    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(kkt_reg);
    if (ldlt.info() != Eigen::Success) return res;

    Eigen::VectorXd rhs(n + k);
    rhs.head(n) = -q;
    for (int r = 0; r < k; ++r) rhs(n + r) = state[act[r]] == 1 ? f.u(act[r]) : f.l(act[r]);

    Eigen::VectorXd sol = ldlt.solve(rhs);
    for (int it = 0; it < opts.polish_refine_steps; ++it) {
      Eigen::VectorXd resid = rhs - kkt0 * sol;
      sol += ldlt.solve(resid);
    }
    if (!sol.allFinite()) return res;
    xs = sol.head(n);
    ys = Eigen::VectorXd::Zero(f.m);
    for (int r = 0; r < k; ++r) ys(act[r]) = sol(n + r);

    // Releasing many rows at once makes the active set oscillate on
    // degenerate programs; freeing only the worst offender per pass keeps the
    // exchange monotone enough to settle.
    bool changed = false;
    const double dtol = 1e-7 * std::max(1.0, inf_norm(ys));
    int drop = -1;
    double worst = dtol;
    for (int r = 0; r < k; ++r) {
      const int i = act[r];
      const double wrong = state[i] == 1 ? -ys(i) : state[i] == -1 ? ys(i) : 0.0;
      if (wrong > worst) {
        worst = wrong;
        drop = i;
      }
    }
    if (drop >= 0) {
      state[drop] = 0;
      changed = true;
    }
    Eigen::VectorXd ax = f.a * xs;
    for (int i = 0; i < f.m; ++i) {
      if (state[i] != 0) continue;
      const double vtol_u = 1e-9 * std::max(1.0, std::abs(f.u(i)));
      const double vtol_l = 1e-9 * std::max(1.0, std::abs(f.l(i)));
      if (f.u(i) < kInf && ax(i) > f.u(i) + vtol_u) {
        state[i] = 1;
        changed = true;
      } else if (f.l(i) > -kInf && ax(i) < f.l(i) - vtol_l) {
        state[i] = -1;
        changed = true;
      }
    }
    if (!changed) {
      res.ok = true;
      res.x = xs;
      res.y = ys;
      return res;
    }
  }
  return res;
}

// Stacked rows split into equalities and one-sided inequalities G x <= h for
// the interior point path. Two-sided rows contribute one row per finite side;
// g_side records which stacked row and sign each G row came from so duals can
// be folded back into the row-dual convention shared with the ADMM path.
struct SideSplit {
  Eigen::SparseMatrix<double> ae, g;
  Eigen::VectorXd b, h;
  std::vector<int> eq_src;
  std::vector<std::pair<int, int>> g_src;  // (stacked row, +1 upper / -1 lower)
};

SideSplit split_sides(const Eigen::SparseMatrix<double>& as, const Eigen::VectorXd& ls,
                      const Eigen::VectorXd& us) {
  const int m = static_cast<int>(as.rows());
  const int n = static_cast<int>(as.cols());
  SideSplit sp;
  std::vector<int> eq_slot(m, -1), up_slot(m, -1), lo_slot(m, -1);
  for (int i = 0; i < m; ++i) {
    if (ls(i) == us(i)) {
      eq_slot[i] = static_cast<int>(sp.eq_src.size());
      sp.eq_src.push_back(i);
    } else {
      if (us(i) < kInf) {
        up_slot[i] = static_cast<int>(sp.g_src.size());
        sp.g_src.emplace_back(i, 1);
      }
      if (ls(i) > -kInf) {
        lo_slot[i] = static_cast<int>(sp.g_src.size());
        sp.g_src.emplace_back(i, -1);
      }
    }
  }
  const int me = static_cast<int>(sp.eq_src.size());
  const int mi = static_cast<int>(sp.g_src.size());
  std::vector<Eigen::Triplet<double>> te, tg;
  for (int j = 0; j < as.outerSize(); ++j)
    for (Eigen::SparseMatrix<double>::InnerIterator it(as, j); it; ++it) {
      const int i = static_cast<int>(it.row());
      if (eq_slot[i] >= 0) te.emplace_back(eq_slot[i], j, it.value());
      if (up_slot[i] >= 0) tg.emplace_back(up_slot[i], j, it.value());
      if (lo_slot[i] >= 0) tg.emplace_back(lo_slot[i], j, -it.value());
    }
  sp.ae.resize(me, n);
  sp.ae.setFromTriplets(te.begin(), te.end());
  sp.g.resize(mi, n);
  sp.g.setFromTriplets(tg.begin(), tg.end());
  sp.b.resize(me);
  for (int k = 0; k < me; ++k) sp.b(k) = us(sp.eq_src[k]);
  sp.h.resize(mi);
  for (int k = 0; k < mi; ++k)
    sp.h(k) = sp.g_src[k].second > 0 ? us(sp.g_src[k].first) : -ls(sp.g_src[k].first);
  return sp;
}

double max_step(const Eigen::VectorXd& v, const Eigen::VectorXd& dv) {
  double a = 1.0;
  for (int i = 0; i < v.size(); ++i)
    if (dv(i) < 0.0) a = std::min(a, -v(i) / dv(i));
  return a;
}

// Predictor-corrector interior point method on the scaled data. The Newton
// systems share one quasi-definite KKT pattern whose symbolic factorization
// is computed once; static regularization keeps the unpivoted LDLT valid and
// iterative refinement against the unregularized matrix removes its bias.
// Returns true on convergence with unscaled primal, row duals and projected
// row values ready for the shared polish and packaging tail.
bool ipm_run(const Eigen::SparseMatrix<double>& ps, const Eigen::VectorXd& qs,
             const Eigen::SparseMatrix<double>& as, const Eigen::VectorXd& ls,
             const Eigen::VectorXd& us, const Scaling& sc, const ProgramDescription& prog,
             const StackedForm& orig, const SolverOptions& opts, Eigen::VectorXd& x_out,
             Eigen::VectorXd& y_out, Eigen::VectorXd& z_out, double& rp_out, double& rd_out,
             int& iters, std::string& msg, std::vector<int>& state_hint) {
  const int n = static_cast<int>(ps.rows());
  SideSplit sp = split_sides(as, ls, us);
  const int me = static_cast<int>(sp.b.size());
  const int mi = static_cast<int>(sp.h.size());
  const int nn = n + me + mi;
  const double delta = std::max(opts.polish_delta, 1e-10);

  std::vector<Eigen::Triplet<double>> base;
  base.reserve(ps.nonZeros() + 2 * sp.ae.nonZeros() + 2 * sp.g.nonZeros() + nn);
  for (int j = 0; j < ps.outerSize(); ++j)
    for (Eigen::SparseMatrix<double>::InnerIterator it(ps, j); it; ++it)
      base.emplace_back(static_cast<int>(it.row()), j, it.value());
  for (int j = 0; j < n; ++j) base.emplace_back(j, j, delta);
  for (int j = 0; j < sp.ae.outerSize(); ++j)
    for (Eigen::SparseMatrix<double>::InnerIterator it(sp.ae, j); it; ++it) {
      base.emplace_back(n + static_cast<int>(it.row()), j, it.value());
      base.emplace_back(j, n + static_cast<int>(it.row()), it.value());
    }
  for (int k = 0; k < me; ++k) base.emplace_back(n + k, n + k, -delta);
  for (int j = 0; j < sp.g.outerSize(); ++j)
    for (Eigen::SparseMatrix<double>::InnerIterator it(sp.g, j); it; ++it) {
      base.emplace_back(n + me + static_cast<int>(it.row()), j, it.value());
      base.emplace_back(j, n + me + static_cast<int>(it.row()), it.value());
    }

  Eigen::SparseMatrix<double> kkt(nn, nn);
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt;
  bool analyzed = false;
  auto factorize = [&](const Eigen::VectorXd& w) -> bool {
    std::vector<Eigen::Triplet<double>> trips = base;
    for (int k = 0; k < mi; ++k) trips.emplace_back(n + me + k, n + me + k, -w(k) - delta);
    kkt.setFromTriplets(trips.begin(), trips.end());
    if (!analyzed) {
      ldlt.analyzePattern(kkt);
      analyzed = true;
    }
    ldlt.factorize(kkt);
    return ldlt.info() == Eigen::Success;
  };
  // The regularized operator differs from the exact one by
  // delta * diag(I, -I, -I + w-shift handled in kkt); refinement corrects
  // against the exact matrix algebraically instead of building it twice.
  auto refine_solve = [&](const Eigen::VectorXd& rhs) {
    Eigen::VectorXd s = ldlt.solve(rhs);
    for (int it = 0; it < 2; ++it) {
      Eigen::VectorXd corr(nn);
      corr.head(n) = s.head(n);
      corr.segment(n, me) = -s.segment(n, me);
      corr.tail(mi) = -s.tail(mi);
      Eigen::VectorXd resid = rhs - kkt * s + delta * corr;
      s += ldlt.solve(resid);
    }
    return s;
  };

  Eigen::VectorXd x, y, z, s;
  if (!factorize(Eigen::VectorXd::Ones(mi))) {
    msg = "interior point: initial factorization failed";
    return false;
  }
  {
    Eigen::VectorXd rhs(nn);
    rhs.head(n) = -qs;
    rhs.segment(n, me) = sp.b;
    rhs.tail(mi) = sp.h;
    Eigen::VectorXd sol0 = refine_solve(rhs);
    x = sol0.head(n);
    y = sol0.segment(n, me);
    Eigen::VectorXd st = sp.h - sp.g * x;
    const double shift = std::max(0.0, -1.5 * (mi > 0 ? st.minCoeff() : 0.0));
    Eigen::VectorXd v = (st.array() + shift).matrix();
    const double vs = v.sum();
    const double extra = vs > 1e-12 ? 0.5 * v.dot(v) / vs : 1.0;
    const double floor_sz = 1e-8 * (1.0 + inf_norm(sp.h));
    s = (v.array() + extra).max(floor_sz).matrix();
    z = s;
  }

  const Eigen::SparseMatrix<double> gt = sp.g.transpose();
  const Eigen::SparseMatrix<double> aet = sp.ae.transpose();
  const double mu0 = mi > 0 ? s.dot(z) / mi : 0.0;
  int stalls = 0;
  for (int k = 1; k <= opts.ipm_max_iterations; ++k) {
    iters = k;
    Eigen::VectorXd rd = ps * x + qs + aet * y + gt * z;
    Eigen::VectorXd rpe = sp.ae * x - sp.b;
    Eigen::VectorXd rg = sp.g * x + s - sp.h;
    const double mu = mi > 0 ? s.dot(z) / mi : 0.0;

    // Convergence is judged on the original data, matching the ADMM check.
    x_out = sc.d.cwiseProduct(x);
    Eigen::VectorXd y_stack = Eigen::VectorXd::Zero(orig.m);
    for (int r = 0; r < me; ++r) y_stack(sp.eq_src[r]) = y(r);
    for (int r = 0; r < mi; ++r) y_stack(sp.g_src[r].first) += sp.g_src[r].second * z(r);
    y_out = sc.e.cwiseProduct(y_stack) / sc.gamma;
    Eigen::VectorXd ax = orig.a * x_out;
    z_out = ax.cwiseMax(orig.l).cwiseMin(orig.u);
    Eigen::VectorXd px = prog.quad.rows() > 0 ? Eigen::VectorXd(prog.quad * x_out)
                                              : Eigen::VectorXd::Zero(n);
    Eigen::VectorXd aty = orig.a.transpose() * y_out;
    rp_out = inf_norm(ax - z_out);
    rd_out = inf_norm(px + prog.linear + aty);
    const double eps_pri = opts.eps_abs + opts.eps_rel * std::max(inf_norm(ax), inf_norm(z_out));
    const double eps_dua = opts.eps_abs + opts.eps_rel * std::max({inf_norm(px), inf_norm(aty),
                                                                   inf_norm(prog.linear)});
    // Row scalings cancel inside each complementarity product, so the
    // duality gap in original units is the scaled gap over gamma.
    const double gap_u = mi > 0 ? s.dot(z) / sc.gamma : 0.0;
    double obj_u = prog.linear.dot(x_out);
    if (prog.quad.rows() > 0) obj_u += 0.5 * x_out.dot(prog.quad * x_out);
    const double gap_tol = opts.eps_abs + opts.eps_rel * std::abs(obj_u);
    // mu bottoms out near machine epsilon relative to its start; past that
    // point the leftover unscaled gap is certification noise from the cost
    // scaling (small gamma inflates it), not suboptimality another step
    // could remove. The residual gates above still bind on their own.
    const bool mu_floor =
        mi > 0 && mu <= 1e3 * std::numeric_limits<double>::epsilon() * (1.0 + mu0);
    if (rp_out <= eps_pri && rd_out <= eps_dua && (gap_u <= gap_tol || mu_floor)) {
      // Activity read off the complementarity pairs: at an interior point
      // optimum the active rows carry z >> s and the inactive ones s >> z.
      state_hint.assign(orig.m, 0);
      for (int r = 0; r < me; ++r) state_hint[sp.eq_src[r]] = 2;
      std::vector<double> best(orig.m, 0.0);
      for (int r = 0; r < mi; ++r) {
        const int i = sp.g_src[r].first;
        if (z(r) > s(r) && z(r) > best[i]) {
          best[i] = z(r);
          state_hint[i] = sp.g_src[r].second;
        }
      }
      return true;
    }

    if (mi == 0) {
      // Pure equality program: one Newton step is exact, so failing the check
      // above means the refinement could not reach tolerance.
      if (k >= 3) {
        msg = "interior point: equality system residual above tolerance";
        return false;
      }
      Eigen::VectorXd rhs(nn);
      rhs.head(n) = -rd;
      rhs.segment(n, me) = -rpe;
      Eigen::VectorXd d = refine_solve(rhs);
      x += d.head(n);
      y += d.segment(n, me);
      continue;
    }

    const double dual_norm = std::max(inf_norm(y), inf_norm(z));
    if (dual_norm > 1e13 * (1.0 + inf_norm(qs))) {
      msg = "interior point: diverging duals, program may be infeasible";
      return false;
    }

    Eigen::VectorXd w = (s.array() / z.array().max(1e-300)).min(1e14).max(1e-14).matrix();
    if (!factorize(w)) {
      msg = "interior point: factorization failed";
      return false;
    }

    Eigen::VectorXd rhs(nn);
    rhs.head(n) = -rd;
    rhs.segment(n, me) = -rpe;
    rhs.tail(mi) = -rg + s;
    Eigen::VectorXd da = refine_solve(rhs);
    Eigen::VectorXd dza = da.tail(mi);
    Eigen::VectorXd dsa = -rg - sp.g * da.head(n);

    const double apa = max_step(s, dsa);
    const double ada = max_step(z, dza);
    const double mu_aff = (s + apa * dsa).dot(z + ada * dza) / mi;
    const double ratio = mu > 0 ? mu_aff / mu : 0.0;
    const double sigma = std::clamp(ratio * ratio * ratio, 1e-8, 0.999);

    Eigen::VectorXd zsafe = z.array().max(1e-300).matrix();
    rhs.tail(mi) =
        -rg + s - (sigma * mu - dsa.cwiseProduct(dza).array()).matrix().cwiseQuotient(zsafe);
    Eigen::VectorXd d = refine_solve(rhs);
    Eigen::VectorXd dz = d.tail(mi);
    Eigen::VectorXd ds = -rg - sp.g * d.head(n);

    const double tau = std::min(0.9999, std::max(0.995, 1.0 - 10.0 * mu));
    const double alpha = std::min(tau * std::min(max_step(s, ds), max_step(z, dz)), 1.0);
    x += alpha * d.head(n);
    y += alpha * d.segment(n, me);
    z += alpha * dz;
    s += alpha * ds;

    if (alpha < 1e-9) {
      if (++stalls >= 3) {
        msg = "interior point: step collapsed, program may be infeasible";
        return false;
      }
    } else {
      stalls = 0;
    }
  }
  msg = "interior point: iteration limit reached";
  return false;
}

}  // namespace

const char* to_string(SolveStatus status) {
  switch (status) {
    case SolveStatus::Optimal: return "optimal";
    case SolveStatus::Infeasible: return "infeasible";
    case SolveStatus::Unbounded: return "unbounded";
    case SolveStatus::NumericalFailure: return "numerical_failure";
  }
  return "unknown";
}

void ProgramDescription::validate() const {
  if (num_vars < 0) throw std::invalid_argument("program: negative variable count");
  if (lower.size() != num_vars || upper.size() != num_vars)
    throw std::invalid_argument("program: bound vectors must have num_vars entries");
  if (eq_matrix.rows() != eq_rhs.size() || (eq_matrix.rows() > 0 && eq_matrix.cols() != num_vars))
    throw std::invalid_argument("program: equality block dimensions");
  if (ineq_matrix.rows() != ineq_rhs.size() ||
      (ineq_matrix.rows() > 0 && ineq_matrix.cols() != num_vars))
    throw std::invalid_argument("program: inequality block dimensions");
  if (linear.size() != num_vars)
    throw std::invalid_argument("program: linear cost must have num_vars entries");
  if (!eq_rhs.allFinite() || !ineq_rhs.allFinite())
    throw std::invalid_argument("program: constraint offsets must be finite");
  if (!linear.allFinite() || !std::isfinite(constant))
    throw std::invalid_argument("program: cost terms must be finite");
  for (int j = 0; j < num_vars; ++j)
    if (std::isnan(lower(j)) || std::isnan(upper(j)))
      throw std::invalid_argument("program: NaN variable bound");

  if (quad.rows() != quad.cols() || (quad.rows() > 0 && quad.rows() != num_vars))
    throw std::invalid_argument("program: quadratic term must be num_vars square");
  if (quad.nonZeros() > 0) {
    Eigen::SparseMatrix<double> asym = Eigen::SparseMatrix<double>(quad.transpose()) - quad;
    double max_abs = 0.0;
    for (int j = 0; j < quad.outerSize(); ++j)
      for (Eigen::SparseMatrix<double>::InnerIterator it(quad, j); it; ++it)
        max_abs = std::max(max_abs, std::abs(it.value()));
    for (int j = 0; j < asym.outerSize(); ++j)
      for (Eigen::SparseMatrix<double>::InnerIterator it(asym, j); it; ++it)
        if (std::abs(it.value()) > 1e-10 * (1.0 + max_abs))
          throw std::invalid_argument("program: quadratic term must be symmetric");

    // Spectral floor on the occupied principal submatrix; untouched variables
    // contribute zero eigenvalues which are always admissible.
    std::vector<int> occ;
    std::vector<int> slot(num_vars, -1);
    for (int j = 0; j < quad.outerSize(); ++j)
      for (Eigen::SparseMatrix<double>::InnerIterator it(quad, j); it; ++it) {
        if (slot[it.row()] < 0) { slot[it.row()] = 0; occ.push_back(static_cast<int>(it.row())); }
        if (slot[it.col()] < 0) { slot[it.col()] = 0; occ.push_back(static_cast<int>(it.col())); }
      }
    if (occ.size() <= 1500) {
      std::sort(occ.begin(), occ.end());
      for (size_t i = 0; i < occ.size(); ++i) slot[occ[i]] = static_cast<int>(i);
      Eigen::MatrixXd dense = Eigen::MatrixXd::Zero(occ.size(), occ.size());
      for (int j = 0; j < quad.outerSize(); ++j)
        for (Eigen::SparseMatrix<double>::InnerIterator it(quad, j); it; ++it)
          dense(slot[it.row()], slot[it.col()]) = it.value();
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(dense, Eigen::EigenvaluesOnly);
      const double lo = eig.eigenvalues().minCoeff();
      const double hi = std::max(std::abs(eig.eigenvalues().maxCoeff()), 1.0);
      if (lo < -1e-9 * hi)
        throw std::invalid_argument("program: quadratic term is not positive semidefinite");
    }
  }
}

Solution solve(const ProgramDescription& prog, const SolverOptions& opts, const WarmStart* warm,
               WarmStart* warm_out) {
  const auto t_start = std::chrono::steady_clock::now();
  prog.validate();

  Solution sol;
  auto finish = [&](Solution& s) -> Solution& {
    s.solve_time_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return s;
  };

  if (prog.num_vars == 0) {
    sol.status = (prog.num_eq() == 0 || prog.eq_rhs.isZero(1e-12)) &&
                         (prog.num_ineq() == 0 || (prog.ineq_rhs.array() >= -1e-12).all())
                     ? SolveStatus::Optimal
                     : SolveStatus::Infeasible;
    sol.primal.resize(0);
    if (sol.status == SolveStatus::Optimal) {
      sol.objective = prog.constant;
      sol.primal_residual = sol.dual_residual = 0.0;
    }
    return finish(sol);
  }
  for (int j = 0; j < prog.num_vars; ++j)
    if (prog.lower(j) > prog.upper(j)) {
      sol.status = SolveStatus::Infeasible;
      sol.message = "crossed variable bounds";
      return finish(sol);
    }

  StackedForm orig = stack_rows(prog);
  const int n = orig.n;
  const int m = orig.m;

  // Scaled working copies.
  Eigen::SparseMatrix<double> ps = prog.quad.rows() > 0
                                       ? prog.quad
                                       : Eigen::SparseMatrix<double>(n, n);
  Eigen::VectorXd qs = prog.linear;
  Eigen::SparseMatrix<double> as = orig.a;
  Eigen::VectorXd ls = orig.l, us = orig.u;
  Scaling sc = equilibrate(ps, qs, as, ls, us);

  // Unscaled converged iterate, filled by whichever method runs.
  Eigen::VectorXd x(n), z(m), y(m);
  double rp = kInf, rd = kInf;

  const bool use_ipm = opts.method == SolveMethod::InteriorPoint ||
                       (opts.method == SolveMethod::Auto && m >= 500);
  std::vector<int> ipm_state;
  if (use_ipm) {
    std::string msg;
    int iters = 0;
    if (!ipm_run(ps, qs, as, ls, us, sc, prog, orig, opts, x, y, z, rp, rd, iters, msg,
                 ipm_state)) {
      sol.status = SolveStatus::NumericalFailure;
      sol.message = msg;
      sol.iterations = iters;
      if (x.size() == n) sol.primal = x;
      sol.primal_residual = rp;
      sol.dual_residual = rd;
      return finish(sol);
    }
    sol.iterations = iters;
  } else {

  Eigen::VectorXd rho(m);
  double rho_base = opts.rho;
  auto set_rho = [&]() {
    for (int i = 0; i < m; ++i)
      rho(i) = i < orig.n_eq ? std::min(rho_base * 1e3, 1e6) : rho_base;
  };
  set_rho();

  Eigen::SparseMatrix<double> kkt = build_kkt(ps, as, opts.sigma, rho);
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt;
  ldlt.analyzePattern(kkt);
  ldlt.factorize(kkt);
  if (ldlt.info() != Eigen::Success) {
    sol.status = SolveStatus::NumericalFailure;
    sol.message = "KKT factorization failed";
    return finish(sol);
  }

  Eigen::VectorXd xh = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd zh = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd yh = Eigen::VectorXd::Zero(m);
  if (warm && warm->primal.size() == n && warm->row_dual.size() == m &&
      warm->row_slack.size() == m) {
    xh = warm->primal.cwiseQuotient(sc.d);
    zh = warm->row_slack.cwiseProduct(sc.e);
    yh = sc.gamma * warm->row_dual.cwiseQuotient(sc.e);
  }

  Eigen::VectorXd x_chk = xh, y_chk = yh;  // snapshots for infeasibility deltas
  Eigen::VectorXd rhs(n + m), xz(n + m), ztil(m), zrel(m);

  const double inf_tol = opts.eps_infeasible;
  int iter = 0;
  int adaptations = 0, last_adapt = 0, restarts = 0, milestone_iter = 0;
  double milestone_rp = kInf;
  bool converged = false;

  // Unscaled views recomputed at check points.
  double eps_pri = 0.0, eps_dua = 0.0;

  for (iter = 1; iter <= opts.max_iterations; ++iter) {
    rhs.head(n) = opts.sigma * xh - qs;
    rhs.tail(m) = zh - yh.cwiseQuotient(rho);
    xz = ldlt.solve(rhs);
    const auto& xt = xz.head(n);
    ztil = zh + (xz.tail(m) - yh).cwiseQuotient(rho);

    zrel = opts.alpha * ztil + (1.0 - opts.alpha) * zh;
    xh = opts.alpha * xt + (1.0 - opts.alpha) * xh;
    Eigen::VectorXd z_prev = zh;
    zh = (zrel + yh.cwiseQuotient(rho)).cwiseMax(ls).cwiseMin(us);
    yh += rho.cwiseProduct(zrel - zh);

    if (iter % opts.check_interval != 0 && iter != opts.max_iterations) continue;

    x = sc.d.cwiseProduct(xh);
    z = zh.cwiseQuotient(sc.e);
    y = sc.e.cwiseProduct(yh) / sc.gamma;

    Eigen::VectorXd ax = orig.a * x;
    Eigen::VectorXd px = prog.quad.rows() > 0 ? Eigen::VectorXd(prog.quad * x)
                                              : Eigen::VectorXd::Zero(n);
    Eigen::VectorXd aty = orig.a.transpose() * y;
    rp = inf_norm(ax - z);
    rd = inf_norm(px + prog.linear + aty);
    eps_pri = opts.eps_abs + opts.eps_rel * std::max(inf_norm(ax), inf_norm(z));
    eps_dua = opts.eps_abs +
              opts.eps_rel * std::max({inf_norm(px), inf_norm(aty), inf_norm(prog.linear)});
    if (rp <= eps_pri && rd <= eps_dua) {
      converged = true;
      break;
    }

    // Primal infeasibility: y-direction certifying empty feasible set.
    Eigen::VectorXd dy = sc.e.cwiseProduct(yh - y_chk) / sc.gamma;
    const double dy_norm = inf_norm(dy);
    if (dy_norm > 1e-14) {
      bool cert = inf_norm(orig.a.transpose() * dy) <= inf_tol * dy_norm;
      if (cert) {
        double support = 0.0;
        for (int i = 0; i < m && cert; ++i) {
          const double pos = std::max(dy(i), 0.0), neg = std::min(dy(i), 0.0);
          if (pos > 0.0) {
            if (orig.u(i) < kInf) support += orig.u(i) * pos;
            else if (pos > inf_tol * dy_norm) cert = false;
          }
          if (neg < 0.0) {
            if (orig.l(i) > -kInf) support += orig.l(i) * neg;
            else if (-neg > inf_tol * dy_norm) cert = false;
          }
        }
        if (cert && support <= -inf_tol * dy_norm) {
          sol.status = SolveStatus::Infeasible;
          sol.message = "primal infeasibility certificate found";
          sol.iterations = iter;
          return finish(sol);
        }
      }
    }

    // Dual infeasibility: unbounded descent direction.
    Eigen::VectorXd dx = sc.d.cwiseProduct(xh - x_chk);
    const double dx_norm = inf_norm(dx);
    if (dx_norm > 1e-14) {
      bool cert = prog.linear.dot(dx) <= -inf_tol * dx_norm;
      if (cert && prog.quad.rows() > 0) cert = inf_norm(prog.quad * dx) <= inf_tol * dx_norm;
      if (cert) {
        Eigen::VectorXd adx = orig.a * dx;
        for (int i = 0; i < m && cert; ++i) {
          if (orig.u(i) < kInf && adx(i) > inf_tol * dx_norm) cert = false;
          if (orig.l(i) > -kInf && adx(i) < -inf_tol * dx_norm) cert = false;
        }
        if (cert) {
          sol.status = SolveStatus::Unbounded;
          sol.message = "dual infeasibility certificate found";
          sol.iterations = iter;
          return finish(sol);
        }
      }
    }
    x_chk = xh;
    y_chk = yh;

    // Residual balancing is confined to a short early window while the duals
    // are still small; changing rho under a mature y can leave a null-space
    // component of y so large that z saturates at its bounds and the
    // iteration freezes (the telltale is rd at machine scale with rp stuck,
    // so residual ratios measured there are meaningless). Past the window, a
    // run making no primal progress is restarted from the current iterate
    // with the initial penalty and a clean dual; ADMM converges from any
    // starting point, so finitely many restarts are harmless.
    if (opts.adaptive_rho) {
      const double pri_scale = std::max({inf_norm(ax), inf_norm(z), 1e-12});
      const double dua_scale =
          std::max({inf_norm(px), inf_norm(aty), inf_norm(prog.linear), 1e-12});
      const double ratio = std::sqrt((rp / pri_scale) / std::max(rd / dua_scale, 1e-16));
      bool change_rho = false;
      if (iter <= 500 && adaptations < 4 && iter - last_adapt >= 100 &&
          std::isfinite(ratio) && (ratio > 5.0 || ratio < 0.2)) {
        rho_base = std::clamp(rho_base * std::clamp(ratio, 0.2, 5.0), 1e-3, 1e3);
        change_rho = true;
        ++adaptations;
        last_adapt = iter;
      } else if (iter > 500 && iter - milestone_iter >= 5000) {
        if (rp > 0.25 * milestone_rp && restarts < 5) {
          rho_base = opts.rho;
          yh.setZero();
          change_rho = true;
          ++restarts;
        }
        milestone_rp = rp;
        milestone_iter = iter;
      }
      if (change_rho) {
        set_rho();
        kkt = build_kkt(ps, as, opts.sigma, rho);
        ldlt.factorize(kkt);
        if (ldlt.info() != Eigen::Success) {
          sol.status = SolveStatus::NumericalFailure;
          sol.message = "KKT refactorization failed";
          sol.iterations = iter;
          return finish(sol);
        }
      }
    }
  }

  sol.iterations = std::min(iter, opts.max_iterations);
  if (!converged) {
    // No certificate and no convergence: before reporting failure, give the
    // interior point path a try when the caller left the method choice open.
    std::string msg;
    int iters = 0;
    if (opts.method == SolveMethod::Auto &&
        ipm_run(ps, qs, as, ls, us, sc, prog, orig, opts, x, y, z, rp, rd, iters, msg,
                ipm_state)) {
      sol.iterations += iters;
    } else {
      sol.status = SolveStatus::NumericalFailure;
      sol.message = "iteration limit reached";
      sol.primal = x;
      sol.primal_residual = rp;
      sol.dual_residual = rd;
      return finish(sol);
    }
  }
  }  // splitting path

  if (opts.polish && m > 0) {
    PolishResult pol = polish(prog.quad.rows() > 0 ? prog.quad
                                                   : Eigen::SparseMatrix<double>(n, n),
                              prog.linear, orig, y, z, opts,
                              ipm_state.empty() ? nullptr : &ipm_state);
    if (pol.ok) {
      Eigen::VectorXd ax = orig.a * pol.x;
      Eigen::VectorXd zp = ax.cwiseMax(orig.l).cwiseMin(orig.u);
      Eigen::VectorXd px = prog.quad.rows() > 0 ? Eigen::VectorXd(prog.quad * pol.x)
                                                : Eigen::VectorXd::Zero(n);
      Eigen::VectorXd aty = orig.a.transpose() * pol.y;
      const double rp_pol = inf_norm(ax - zp);
      const double rd_pol = inf_norm(px + prog.linear + aty);
      const double ep = opts.eps_abs + opts.eps_rel * std::max(inf_norm(ax), inf_norm(zp));
      const double ed = opts.eps_abs + opts.eps_rel * std::max({inf_norm(px), inf_norm(aty),
                                                                inf_norm(prog.linear)});
      if (rp_pol <= ep && rd_pol <= ed && rp_pol <= rp + 1e-12) {
        x = pol.x;
        y = pol.y;
        z = zp;
        rp = rp_pol;
        rd = rd_pol;
        sol.polished = true;
      }
    }
  }

  sol.status = SolveStatus::Optimal;
  sol.primal = x;
  sol.primal_residual = rp;
  sol.dual_residual = rd;
  double obj = prog.linear.dot(x) + prog.constant;
  if (prog.quad.rows() > 0) obj += 0.5 * x.dot(prog.quad * x);
  sol.objective = obj;

  if (warm_out) {
    warm_out->primal = x;
    warm_out->row_dual = y;
    warm_out->row_slack = z;
  }
  return finish(sol);
}

}  // namespace ddrmpc
