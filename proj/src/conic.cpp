// Homogeneous self-dual embedding interior-point method for
//   min c'x  s.t.  Ax = b,  s = h - Gx in K
// with Nesterov-Todd scaling, Mehrotra predictor-corrector and normal-equation KKT solves.
#include "ccopf/conic.hpp"

#include <Eigen/SparseCholesky>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

namespace ccopf {

std::string to_string(SolveStatus status) {
  switch (status) {
    case SolveStatus::Optimal:
      return "optimal";
    case SolveStatus::Infeasible:
      return "infeasible";
    case SolveStatus::Unbounded:
      return "unbounded";
    case SolveStatus::MaxIterations:
      return "max_iter";
    case SolveStatus::NumericalError:
      return "numerical_error";
  }
  return "unknown";
}

void ConicProblem::check() const {
  const Eigen::Index n = c.size();
  if (A.cols() != n || G.cols() != n) throw std::invalid_argument("conic problem: column count mismatch");
  if (A.rows() != b.size() || G.rows() != h.size()) throw std::invalid_argument("conic problem: row count mismatch");
  Eigen::Index m = 0;
  for (const Cone& k : cones) {
    if (k.dim < 1) throw std::invalid_argument("conic problem: cone dimension must be >= 1");
    m += k.dim;
  }
  if (m != h.size()) throw std::invalid_argument("conic problem: cones do not cover the rows of G");
  if (!c.allFinite() || !b.allFinite() || !h.allFinite()) throw std::invalid_argument("conic problem: non-finite data");
  if (!var_names.empty() && static_cast<Eigen::Index>(var_names.size()) != n)
    throw std::invalid_argument("conic problem: variable name count mismatch");
}

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

double inf_norm(const VectorXd& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

struct Equilibration {
  VectorXd col;   // x = col .* x_scaled
  VectorXd row_a; // A_scaled = diag(row_a) A diag(col)
  VectorXd row_g; // G_scaled = diag(row_g) G diag(col)
};

Equilibration equilibrate(ConicProblem& P, int rounds) {
  const Index n = P.n(), p = P.p(), m = P.m();
  Equilibration eq{VectorXd::Ones(n), VectorXd::Ones(p), VectorXd::Ones(m)};
  auto safe = [](double v) { return v > 1e-12 ? 1.0 / std::sqrt(v) : 1.0; };
  for (int r = 0; r < rounds; ++r) {
    VectorXd cmax = VectorXd::Zero(n), amax = VectorXd::Zero(p), gmax = VectorXd::Zero(m);
    for (Index j = 0; j < n; ++j) {
      for (SpMat::InnerIterator it(P.A, j); it; ++it) {
        const double v = std::abs(it.value());
        cmax[j] = std::max(cmax[j], v);
        amax[it.row()] = std::max(amax[it.row()], v);
      }
      for (SpMat::InnerIterator it(P.G, j); it; ++it) {
        const double v = std::abs(it.value());
        cmax[j] = std::max(cmax[j], v);
        gmax[it.row()] = std::max(gmax[it.row()], v);
      }
    }
    // Rows of a second-order cone share one factor so the cone is preserved.
    Index off = 0;
    for (const Cone& k : P.cones) {
      if (k.kind == Cone::Kind::SecondOrder) {
        const double mx = gmax.segment(off, k.dim).maxCoeff();
        gmax.segment(off, k.dim).setConstant(mx);
      }
      off += k.dim;
    }
    VectorXd dc(n), da(p), dg(m);
    for (Index j = 0; j < n; ++j) dc[j] = safe(cmax[j]);
    for (Index i = 0; i < p; ++i) da[i] = safe(amax[i]);
    for (Index i = 0; i < m; ++i) dg[i] = safe(gmax[i]);
    P.A = da.asDiagonal() * P.A * dc.asDiagonal();
    P.G = dg.asDiagonal() * P.G * dc.asDiagonal();
    eq.col = eq.col.cwiseProduct(dc);
    eq.row_a = eq.row_a.cwiseProduct(da);
    eq.row_g = eq.row_g.cwiseProduct(dg);
  }
  P.c = P.c.cwiseProduct(eq.col);
  P.b = P.b.cwiseProduct(eq.row_a);
  P.h = P.h.cwiseProduct(eq.row_g);
  return eq;
}

// Quasi-definite KKT system [0 A' G'; A 0 0; G 0 -W^2] factored as a regularized sparse LDL'.
// The pattern is analyzed once; every factorization only refreshes the W^2 block values.
class KktSolver {
 public:
  KktSolver(const SpMat& A, const SpMat& G, const ConeSet& cones, const SolverSettings& settings)
      : A_(A), G_(G), cones_(cones), settings_(settings) {
    n_ = A.cols();
    p_ = A.rows();
    m_ = G.rows();
    At_ = A.transpose();
    Gt_ = G.transpose();
    const Index N = n_ + p_ + m_;
    // Lower triangle: reg on the x block, A and G below it, -reg on the y block, -(W^2 + reg) on the z block.
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(A.nonZeros() + G.nonZeros() + N);
    for (Index j = 0; j < n_; ++j) trip.emplace_back(j, j, 1.0);
    for (Index j = 0; j < n_; ++j) {
      for (SpMat::InnerIterator it(A, j); it; ++it) trip.emplace_back(n_ + it.row(), j, it.value());
      for (SpMat::InnerIterator it(G, j); it; ++it) trip.emplace_back(n_ + p_ + it.row(), j, it.value());
    }
    for (Index i = 0; i < p_; ++i) trip.emplace_back(n_ + i, n_ + i, -1.0);
    for (size_t k = 0; k < cones.cones().size(); ++k) {
      const Cone& cone = cones.cones()[k];
      const Index off = n_ + p_ + cones.offset(k);
      if (cone.kind == Cone::Kind::NonNeg) {
        for (Index r = 0; r < cone.dim; ++r) trip.emplace_back(off + r, off + r, -1.0);
      } else {
        for (Index c = 0; c < cone.dim; ++c)
          for (Index r = c; r < cone.dim; ++r) trip.emplace_back(off + r, off + c, -1.0);
      }
    }
    K_.resize(N, N);
    K_.setFromTriplets(trip.begin(), trip.end());
    K_.makeCompressed();
    ldl_.analyzePattern(K_);
    // Value slots rewritten on every factorization.
    for (Index j = 0; j < N; ++j) {
      for (SpMat::InnerIterator it(K_, j); it; ++it) {
        const Index r = it.row();
        double* slot = &it.valueRef();
        if (r == j && j < n_)
          x_diag_.push_back(slot);
        else if (r == j && j >= n_ && j < n_ + p_)
          y_diag_.push_back(slot);
        else if (j >= n_ + p_)
          z_slots_.push_back({slot, r - n_ - p_, j - n_ - p_});
      }
    }
    cone_of_.resize(m_);
    for (size_t k = 0; k < cones.cones().size(); ++k)
      for (Index r = 0; r < cones.cones()[k].dim; ++r) cone_of_[cones.offset(k) + r] = static_cast<int>(k);
  }

  bool factor() {
    double reg = settings_.static_reg;
    for (int attempt = 0; attempt < 6; ++attempt, reg *= 100.0) {
      if (assemble_and_factor(reg)) return true;
    }
    return false;
  }

  void solve(const VectorXd& r1, const VectorXd& r2, const VectorXd& r3, VectorXd& dx, VectorXd& dy, VectorXd& dz) {
    VectorXd rhs(n_ + p_ + m_);
    rhs << r1, r2, r3;
    VectorXd sol = ldl_.solve(rhs);
    const double rnorm = std::max(inf_norm(rhs), 1.0);
    double prev = std::numeric_limits<double>::infinity();
    for (int it = 0; it < settings_.refine_steps; ++it) {
      const VectorXd err = rhs - apply_exact(sol);
      const double e = inf_norm(err);
      if (e <= 1e-15 * rnorm || e >= 0.5 * prev) break;
      prev = e;
      sol += ldl_.solve(err);
    }
    dx = sol.head(n_);
    dy = sol.segment(n_, p_);
    dz = sol.tail(m_);
  }

 private:
  struct ZSlot {
    double* value;
    Index row, col;  // within the z block
  };

  bool assemble_and_factor(double reg) {
    for (double* v : x_diag_) *v = reg;
    for (double* v : y_diag_) *v = -reg;
    std::vector<MatrixXd> W2(cones_.cones().size());
    for (size_t k = 0; k < cones_.cones().size(); ++k) {
      if (cones_.cones()[k].kind == Cone::Kind::SecondOrder) W2[k] = cones_.W2_block(k);
    }
    const VectorXd w2diag = cones_.apply_W2(VectorXd::Ones(m_));
    for (const ZSlot& s : z_slots_) {
      const int k = cone_of_[s.row];
      const Index o = cones_.offset(k);
      const double w2 = cones_.cones()[k].kind == Cone::Kind::NonNeg ? w2diag[s.row] : W2[k](s.row - o, s.col - o);
      *s.value = -w2 - (s.row == s.col ? reg : 0.0);
    }
    ldl_.factorize(K_);
    if (ldl_.info() != Eigen::Success) return false;
    // Quasi-definite inertia: n positive pivots, p + m negative ones.
    const VectorXd& d = ldl_.vectorD();
    const Eigen::VectorXi& orig = ldl_.permutationPinv().indices();
    for (Index i = 0; i < d.size(); ++i) {
      const bool x_block = orig[i] < n_;
      if (!std::isfinite(d[i]) || (x_block ? d[i] <= 0.0 : d[i] >= 0.0)) return false;
    }
    return true;
  }

  // Unregularized K applied to (dx, dy, dz).
  VectorXd apply_exact(const VectorXd& v) const {
    const VectorXd vx = v.head(n_);
    const VectorXd vz = v.tail(m_);
    VectorXd out(n_ + p_ + m_);
    out.head(n_) = At_ * v.segment(n_, p_) + Gt_ * vz;
    out.segment(n_, p_) = A_ * vx;
    out.tail(m_) = G_ * vx - cones_.apply_W2(vz);
    return out;
  }

  const SpMat& A_;
  const SpMat& G_;
  const ConeSet& cones_;
  const SolverSettings& settings_;
  Index n_ = 0, p_ = 0, m_ = 0;
  SpMat At_, Gt_, K_;
  std::vector<double*> x_diag_, y_diag_;
  std::vector<ZSlot> z_slots_;
  std::vector<int> cone_of_;
  Eigen::SimplicialLDLT<SpMat, Eigen::Lower, Eigen::AMDOrdering<int>> ldl_;
};

struct Metrics {
  double pres, dres, pcost, dcost, gap, relgap;
};

Solution solve_core(const ConicProblem& original, const SolverSettings& settings) {
  Solution sol;
  const Index n = original.n(), p = original.p(), m = original.m();
  ConicProblem P = original;
  Equilibration eq{VectorXd::Ones(n), VectorXd::Ones(p), VectorXd::Ones(m)};
  if (settings.equilibrate) eq = equilibrate(P, 3);

  ConeSet cones(P.cones);
  KktSolver kkt(P.A, P.G, cones, settings);

  auto finish = [&](const VectorXd& x, const VectorXd& y, const VectorXd& z, const VectorXd& s, double scale, SolveStatus st) {
    sol.x = eq.col.cwiseProduct(x) / scale;
    sol.y = eq.row_a.cwiseProduct(y) / scale;
    sol.z = eq.row_g.cwiseProduct(z) / scale;
    sol.s = s.cwiseQuotient(eq.row_g) / scale;
    sol.status = st;
  };

  // Trivial problem: every variable removed.
  if (n == 0) {
    if (m > 0 && cones.min_eigenvalue(P.h) < -settings.tol) {
      sol.status = SolveStatus::Infeasible;
      sol.message = "constant cone constraints violated";
      return sol;
    }
    finish(VectorXd(0), VectorXd::Zero(p), VectorXd::Zero(m), P.h, 1.0, SolveStatus::Optimal);
    return sol;
  }

  // Initial point: least-squares primal and dual, shifted into the cone.
  cones.set_identity_scaling();
  if (!kkt.factor()) {
    sol.status = SolveStatus::NumericalError;
    sol.message = "initial KKT factorization failed";
    return sol;
  }
  VectorXd x, y, z, s, tmp_y, tmp_z, tmp_x;
  kkt.solve(VectorXd::Zero(n), P.b, P.h, x, tmp_y, tmp_z);
  s = -tmp_z;
  cones.bring_to_cone(s);
  kkt.solve(-P.c, VectorXd::Zero(p), VectorXd::Zero(m), tmp_x, y, z);
  cones.bring_to_cone(z);
  double tau = 1.0, kappa = 1.0;
  const double D = cones.degree();
  const VectorXd e = cones.identity();

  const double bnorm = inf_norm(original.b), hnorm = inf_norm(original.h), cnorm = inf_norm(original.c);

  auto metrics = [&]() {
    const VectorXd xs = eq.col.cwiseProduct(x) / tau;
    const VectorXd ys = eq.row_a.cwiseProduct(y) / tau;
    const VectorXd zs = eq.row_g.cwiseProduct(z) / tau;
    const VectorXd ss = s.cwiseQuotient(eq.row_g) / tau;
    Metrics mt;
    const double pa = p ? inf_norm(original.A * xs - original.b) / (1.0 + bnorm) : 0.0;
    const double pg = m ? inf_norm(original.G * xs + ss - original.h) / (1.0 + hnorm) : 0.0;
    mt.pres = std::max(pa, pg);
    VectorXd dr = original.c;
    if (p) dr += original.A.transpose() * ys;
    if (m) dr += original.G.transpose() * zs;
    mt.dres = inf_norm(dr) / (1.0 + cnorm);
    mt.pcost = original.c.dot(xs);
    mt.dcost = -(p ? original.b.dot(ys) : 0.0) - (m ? original.h.dot(zs) : 0.0);
    mt.gap = ss.dot(zs);
    mt.relgap = std::abs(mt.pcost - mt.dcost) / (1.0 + std::abs(mt.pcost));
    return mt;
  };

  const double tol = settings.tol;
  // Best iterate seen so far, returned if the method breaks down before reaching tol.
  double best_score = std::numeric_limits<double>::infinity();
  VectorXd bx = x, by = y, bz = z, bs = s;
  double btau = tau;
  auto finish_best = [&](SolveStatus st, const std::string& why) {
    finish(bx, by, bz, bs, btau, st);
    char buf[96];
    std::snprintf(buf, sizeof buf, " (best iterate accuracy %.2e)", best_score);
    sol.message = why + buf;
    return sol;
  };
  for (int iter = 0; iter <= settings.max_iter; ++iter) {
    sol.iterations = iter;
    const VectorXd R1 = P.A.transpose() * y + P.G.transpose() * z + tau * P.c;
    const VectorXd R2 = P.A * x - tau * P.b;
    const VectorXd R3 = s + P.G * x - tau * P.h;
    const double R4 = kappa + P.c.dot(x) + P.b.dot(y) + P.h.dot(z);

    const Metrics mt = metrics();
    IterationInfo info;
    info.iter = iter;
    info.pcost = mt.pcost;
    info.dcost = mt.dcost;
    info.gap = mt.gap;
    info.pres = mt.pres;
    info.dres = mt.dres;
    info.kappa_over_tau = kappa / tau;

    const double gap_scale = 1.0 + std::abs(mt.pcost);
    const double score = std::max({mt.pres, mt.dres, mt.relgap, mt.gap / gap_scale});
    if (score < best_score) {
      best_score = score;
      bx = x;
      by = y;
      bz = z;
      bs = s;
      btau = tau;
    }
    if (mt.pres <= tol && mt.dres <= tol && mt.gap <= tol * gap_scale && mt.relgap <= tol) {
      sol.trace.push_back(info);
      finish(x, y, z, s, tau, SolveStatus::Optimal);
      return sol;
    }

    // Certificates use the unscaled-by-tau iterate.
    {
      const VectorXd yu = eq.row_a.cwiseProduct(y), zu = eq.row_g.cwiseProduct(z);
      const double btyz = (p ? original.b.dot(yu) : 0.0) + original.h.dot(zu);
      if (btyz < 0.0) {
        VectorXd r = original.G.transpose() * zu;
        if (p) r += original.A.transpose() * yu;
        if (inf_norm(r) / -btyz <= tol) {
          sol.trace.push_back(info);
          finish(VectorXd::Zero(n), y, z, VectorXd::Zero(m), -btyz, SolveStatus::Infeasible);
          sol.x = VectorXd::Zero(n);
          sol.s = VectorXd::Zero(m);
          sol.message = "primal infeasibility certificate";
          return sol;
        }
      }
      const VectorXd xu = eq.col.cwiseProduct(x), su = s.cwiseQuotient(eq.row_g);
      const double ctx = original.c.dot(xu);
      if (ctx < 0.0) {
        double r = m ? inf_norm(original.G * xu + su) : 0.0;
        if (p) r = std::max(r, inf_norm(original.A * xu));
        if (r / -ctx <= tol) {
          sol.trace.push_back(info);
          finish(x, VectorXd::Zero(p), VectorXd::Zero(m), s, -ctx, SolveStatus::Unbounded);
          sol.y = VectorXd::Zero(p);
          sol.z = VectorXd::Zero(m);
          sol.message = "dual infeasibility certificate";
          return sol;
        }
      }
    }
    if (iter == settings.max_iter) {
      sol.trace.push_back(info);
      break;
    }

    if (!cones.update_scaling(s, z) || !kkt.factor()) {
      sol.trace.push_back(info);
      return finish_best(SolveStatus::NumericalError, "scaling or factorization breakdown at iteration " + std::to_string(iter));
    }
    const VectorXd& lambda = cones.lambda();

    VectorXd x1, y1, z1;
    kkt.solve(-P.c, P.b, P.h, x1, y1, z1);
    const double denom = P.c.dot(x1) + P.b.dot(y1) + P.h.dot(z1) - kappa / tau;

    auto direction = [&](double eta, const VectorXd& rc, double rtau, VectorXd& dx, VectorXd& dy, VectorXd& dz,
                         VectorXd& ds, double& dtau, double& dkappa) {
      const VectorXd ldiv = cones.divide(lambda, rc);
      VectorXd x2, y2, z2;
      kkt.solve(-eta * R1, -eta * R2, -eta * R3 - cones.apply_W(ldiv), x2, y2, z2);
      dtau = (-eta * R4 - rtau / tau - (P.c.dot(x2) + P.b.dot(y2) + P.h.dot(z2))) / denom;
      dx = x2 + dtau * x1;
      dy = y2 + dtau * y1;
      dz = z2 + dtau * z1;
      ds = cones.apply_W(ldiv - cones.apply_W(dz));
      dkappa = (rtau - kappa * dtau) / tau;
    };

    auto step_to_boundary = [&](const VectorXd& ds, const VectorXd& dz, double dtau, double dkappa) {
      double a = std::min(cones.max_step(lambda, cones.apply_Winv(ds)), cones.max_step(lambda, cones.apply_W(dz)));
      if (dtau < 0.0) a = std::min(a, -tau / dtau);
      if (dkappa < 0.0) a = std::min(a, -kappa / dkappa);
      return a;
    };

    // Predictor.
    VectorXd dxa, dya, dza, dsa;
    double dtaua, dkappaa;
    const VectorXd lam2 = cones.product(lambda, lambda);
    direction(1.0, -lam2, -tau * kappa, dxa, dya, dza, dsa, dtaua, dkappaa);
    const double alpha_aff = std::min(1.0, step_to_boundary(dsa, dza, dtaua, dkappaa));
    const double sigma = std::clamp(std::pow(1.0 - alpha_aff, 3), 1e-8, 1.0);
    const double mu = (s.dot(z) + tau * kappa) / (D + 1.0);

    // Corrector.
    const VectorXd rc = -lam2 - cones.product(cones.apply_Winv(dsa), cones.apply_W(dza)) + sigma * mu * e;
    const double rtau = sigma * mu - tau * kappa - dtaua * dkappaa;
    VectorXd dx, dy, dz, ds;
    double dtau, dkappa;
    direction(1.0 - sigma, rc, rtau, dx, dy, dz, ds, dtau, dkappa);
    const double alpha = std::min(1.0, settings.step_fraction * step_to_boundary(ds, dz, dtau, dkappa));

    info.step = alpha;
    info.sigma = sigma;
    sol.trace.push_back(info);
    if (settings.verbose)
      std::fprintf(stderr, "%3d pcost %+.9e dcost %+.9e gap %.2e pres %.2e dres %.2e k/t %.2e step %.3f sig %.2e\n", iter,
                   mt.pcost, mt.dcost, mt.gap, mt.pres, mt.dres, kappa / tau, alpha, sigma);
    if (!(alpha > 1e-10)) return finish_best(SolveStatus::NumericalError, "step length collapsed at iteration " + std::to_string(iter));

    x += alpha * dx;
    y += alpha * dy;
    z += alpha * dz;
    s += alpha * ds;
    tau += alpha * dtau;
    kappa += alpha * dkappa;
  }
  return finish_best(SolveStatus::MaxIterations, "iteration limit reached");
}

}  // namespace

KktResiduals kkt_residuals(const ConicProblem& P, const Solution& sol) {
  KktResiduals r;
  const double pa = P.p() ? inf_norm(P.A * sol.x - P.b) / (1.0 + inf_norm(P.b)) : 0.0;
  const double pg = P.m() ? inf_norm(P.G * sol.x + sol.s - P.h) / (1.0 + inf_norm(P.h)) : 0.0;
  r.primal = std::max(pa, pg);
  VectorXd dr = P.c;
  if (P.p()) dr += P.A.transpose() * sol.y;
  if (P.m()) dr += P.G.transpose() * sol.z;
  r.dual = inf_norm(dr) / (1.0 + inf_norm(P.c));
  const double pcost = P.c.dot(sol.x);
  const double dcost = -(P.p() ? P.b.dot(sol.y) : 0.0) - (P.m() ? P.h.dot(sol.z) : 0.0);
  r.gap = std::abs(pcost - dcost) / (1.0 + std::abs(pcost));
  return r;
}

Solution solve(const ConicProblem& problem, const SolverSettings& settings) {
  const auto start = std::chrono::steady_clock::now();
  problem.check();
  Solution sol;
  if (settings.presolve) {
    const PresolveResult pre = presolve(problem, 1e-9);
    if (pre.infeasible || pre.unbounded) {
      sol.status = pre.infeasible ? SolveStatus::Infeasible : SolveStatus::Unbounded;
      sol.message = "presolve: " + pre.reason;
      sol.presolve = pre.report;
    } else {
      Solution core = solve_core(pre.reduced, settings);
      if (settings.polish && core.optimal()) core.polished = polish(pre.reduced, core);
      sol = pre.restore(core);
      sol.presolve = pre.report;
    }
  } else {
    sol = solve_core(problem, settings);
    if (settings.polish && sol.optimal()) sol.polished = polish(problem, sol);
  }
  if (sol.x.size() == problem.n()) {
    sol.objective = problem.c.dot(sol.x) + problem.objective_offset;
    if (sol.status != SolveStatus::Infeasible && sol.status != SolveStatus::Unbounded) sol.kkt = kkt_residuals(problem, sol);
  }
  sol.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return sol;
}

}  // namespace ccopf
