#include <Eigen/QR>

#include <cmath>

#include "ccopf/conic.hpp"

namespace ccopf {

namespace {
using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using RowMat = Eigen::SparseMatrix<double, Eigen::RowMajor>;

SpMat select(const SpMat& M, const std::vector<int>& rows, const std::vector<int>& cols) {
  std::vector<int> rmap(M.rows(), -1), cmap(M.cols(), -1);
  for (size_t i = 0; i < rows.size(); ++i) rmap[rows[i]] = static_cast<int>(i);
  for (size_t j = 0; j < cols.size(); ++j) cmap[cols[j]] = static_cast<int>(j);
  std::vector<Eigen::Triplet<double>> trip;
  for (Index j = 0; j < M.outerSize(); ++j)
    for (SpMat::InnerIterator it(M, j); it; ++it)
      if (rmap[it.row()] >= 0 && cmap[it.col()] >= 0) trip.emplace_back(rmap[it.row()], cmap[it.col()], it.value());
  SpMat out(rows.size(), cols.size());
  out.setFromTriplets(trip.begin(), trip.end());
  return out;
}
}  // namespace

PresolveResult presolve(const ConicProblem& P, double tol) {
  P.check();
  PresolveResult res;
  res.original_ = P;
  const Index n = P.n(), p = P.p(), m = P.m();
  PresolveReport& rep = res.report;
  rep.n_before = n;
  rep.p_before = p;
  rep.m_before = m;

  const RowMat Ar(P.A);
  std::vector<char> col_active(n, 1), row_active(p, 1), g_active(m, 1);
  res.is_fixed_.assign(n, 0);
  res.fixed_value_ = VectorXd::Zero(n);
  VectorXd b = P.b, h = P.h;
  double offset = P.objective_offset;

  auto fail = [&](bool infeasible, std::string why) {
    res.infeasible = infeasible;
    res.unbounded = !infeasible;
    res.reason = std::move(why);
    return res;
  };
  auto fix = [&](Index j, double v) {
    col_active[j] = 0;
    res.is_fixed_[j] = 1;
    res.fixed_value_[j] = v;
    offset += P.c[j] * v;
    for (SpMat::InnerIterator it(P.A, j); it; ++it) b[it.row()] -= it.value() * v;
    for (SpMat::InnerIterator it(P.G, j); it; ++it) h[it.row()] -= it.value() * v;
    ++rep.fixed_variables;
  };

  // Singleton and empty equality rows, repeated until nothing changes.
  bool changed = true;
  while (changed) {
    changed = false;
    for (Index r = 0; r < p; ++r) {
      if (!row_active[r]) continue;
      int count = 0;
      Index col = -1;
      double coef = 0.0;
      for (RowMat::InnerIterator it(Ar, r); it; ++it)
        if (col_active[it.col()] && std::abs(it.value()) > tol) {
          ++count;
          col = it.col();
          coef = it.value();
        }
      if (count == 0) {
        if (std::abs(b[r]) > tol * (1.0 + std::abs(P.b[r])))
          return fail(true, "equality row " + std::to_string(r) + " reduces to 0 = " + std::to_string(b[r]));
        row_active[r] = 0;
        ++rep.empty_rows;
        changed = true;
      } else if (count == 1) {
        row_active[r] = 0;
        res.singleton_.emplace_back(static_cast<int>(r), static_cast<int>(col));
        fix(col, b[r] / coef);
        ++rep.singleton_rows;
        changed = true;
      }
    }
  }

  // Cone rows with no remaining variables.
  const RowMat Gr(P.G);
  auto row_has_active = [&](const RowMat& M, Index r) {
    for (RowMat::InnerIterator it(M, r); it; ++it)
      if (col_active[it.col()] && it.value() != 0.0) return true;
    return false;
  };
  std::vector<Cone> kept_cones;
  Index off = 0;
  for (const Cone& k : P.cones) {
    if (k.kind == Cone::Kind::NonNeg) {
      std::vector<Index> live;
      for (Index r = off; r < off + k.dim; ++r) {
        if (row_has_active(Gr, r)) {
          live.push_back(r);
        } else {
          if (h[r] < -tol * (1.0 + std::abs(P.h[r])))
            return fail(true, "constant cone row " + std::to_string(r) + " violated");
          g_active[r] = 0;
          ++rep.constant_cone_rows;
        }
      }
      if (!live.empty()) kept_cones.push_back(Cone::nonneg(static_cast<Index>(live.size())));
    } else {
      bool any = false;
      for (Index r = off; r < off + k.dim && !any; ++r) any = row_has_active(Gr, r);
      if (any) {
        kept_cones.push_back(k);
      } else {
        const VectorXd seg = h.segment(off, k.dim);
        if (seg[0] - seg.tail(k.dim - 1).norm() < -tol * (1.0 + seg.cwiseAbs().maxCoeff()))
          return fail(true, "constant second-order cone at row " + std::to_string(off) + " violated");
        for (Index r = off; r < off + k.dim; ++r) g_active[r] = 0;
        rep.constant_cone_rows += static_cast<int>(k.dim);
      }
    }
    off += k.dim;
  }

  // Columns that no remaining constraint touches.
  for (Index j = 0; j < n; ++j) {
    if (!col_active[j]) continue;
    bool used = false;
    for (SpMat::InnerIterator it(P.A, j); it && !used; ++it) used = row_active[it.row()] && it.value() != 0.0;
    for (SpMat::InnerIterator it(P.G, j); it && !used; ++it) used = g_active[it.row()] && it.value() != 0.0;
    if (used) continue;
    if (std::abs(P.c[j]) > tol) return fail(false, "variable " + std::to_string(j) + " is free with nonzero cost");
    fix(j, 0.0);
    --rep.fixed_variables;
    ++rep.free_columns;
  }

  for (Index j = 0; j < n; ++j)
    if (col_active[j]) res.kept_cols_.push_back(static_cast<int>(j));
  std::vector<int> live_rows;
  for (Index r = 0; r < p; ++r)
    if (row_active[r]) live_rows.push_back(static_cast<int>(r));
  for (Index r = 0; r < m; ++r)
    if (g_active[r]) res.kept_g_rows_.push_back(static_cast<int>(r));

  // Linearly dependent equality rows: keep a pivoted-QR basis, check the rest for consistency.
  if (!live_rows.empty()) {
    const SpMat Asub = select(P.A, live_rows, res.kept_cols_);
    const MatrixXd At = MatrixXd(Asub).transpose();
    Eigen::ColPivHouseholderQR<MatrixXd> qr(At);
    qr.setThreshold(1e-10);
    const Index rank = qr.rank();
    std::vector<int> basis, dependent;
    std::vector<char> in_basis(live_rows.size(), 0);
    for (Index k = 0; k < rank; ++k) in_basis[qr.colsPermutation().indices()[k]] = 1;
    for (size_t k = 0; k < live_rows.size(); ++k) (in_basis[k] ? basis : dependent).push_back(static_cast<int>(k));
    if (!dependent.empty()) {
      VectorXd bsub(live_rows.size());
      for (size_t k = 0; k < live_rows.size(); ++k) bsub[k] = b[live_rows[k]];
      MatrixXd Ab(basis.size(), At.rows());
      VectorXd bb(basis.size());
      for (size_t k = 0; k < basis.size(); ++k) {
        Ab.row(k) = At.col(basis[k]).transpose();
        bb[k] = bsub[basis[k]];
      }
      const VectorXd xmn = Ab.completeOrthogonalDecomposition().solve(bb);
      for (int k : dependent) {
        const double lhs = At.col(k).dot(xmn);
        if (std::abs(lhs - bsub[k]) > 1e-7 * (1.0 + std::abs(bsub[k])))
          return fail(true, "equality row " + std::to_string(live_rows[k]) + " is dependent and inconsistent");
      }
      rep.dependent_rows = static_cast<int>(dependent.size());
      std::sort(basis.begin(), basis.end());
      for (int k : basis) res.kept_rows_.push_back(live_rows[k]);
    } else {
      res.kept_rows_ = live_rows;
    }
  }

  ConicProblem& R = res.reduced;
  R.c.resize(res.kept_cols_.size());
  for (size_t j = 0; j < res.kept_cols_.size(); ++j) R.c[j] = P.c[res.kept_cols_[j]];
  R.A = select(P.A, res.kept_rows_, res.kept_cols_);
  R.b.resize(res.kept_rows_.size());
  for (size_t i = 0; i < res.kept_rows_.size(); ++i) R.b[i] = b[res.kept_rows_[i]];
  R.G = select(P.G, res.kept_g_rows_, res.kept_cols_);
  R.h.resize(res.kept_g_rows_.size());
  for (size_t i = 0; i < res.kept_g_rows_.size(); ++i) R.h[i] = h[res.kept_g_rows_[i]];
  R.cones = std::move(kept_cones);
  R.objective_offset = offset;
  if (!P.var_names.empty())
    for (int j : res.kept_cols_) R.var_names.push_back(P.var_names[j]);
  rep.n_after = R.n();
  rep.p_after = R.p();
  rep.m_after = R.m();
  return res;
}

Solution PresolveResult::restore(const Solution& rs) const {
  const ConicProblem& P = original_;
  const Index n = P.n(), p = P.p(), m = P.m();
  Solution sol = rs;
  const bool certificate = rs.status == SolveStatus::Infeasible || rs.status == SolveStatus::Unbounded;
  sol.x = certificate ? VectorXd::Zero(n) : fixed_value_;
  sol.y = VectorXd::Zero(p);
  sol.z = VectorXd::Zero(m);
  if (rs.x.size() == static_cast<Index>(kept_cols_.size()))
    for (size_t j = 0; j < kept_cols_.size(); ++j) sol.x[kept_cols_[j]] = rs.x[j];
  if (rs.y.size() == static_cast<Index>(kept_rows_.size()))
    for (size_t i = 0; i < kept_rows_.size(); ++i) sol.y[kept_rows_[i]] = rs.y[i];
  if (rs.z.size() == static_cast<Index>(kept_g_rows_.size()))
    for (size_t i = 0; i < kept_g_rows_.size(); ++i) sol.z[kept_g_rows_[i]] = rs.z[i];

  // s on dropped rows is whatever the constraint leaves; kept rows come from the solver.
  sol.s = (rs.status == SolveStatus::Unbounded ? VectorXd(-(P.G * sol.x)) : VectorXd(P.h - P.G * sol.x));
  if (rs.s.size() == static_cast<Index>(kept_g_rows_.size()))
    for (size_t i = 0; i < kept_g_rows_.size(); ++i) sol.s[kept_g_rows_[i]] = rs.s[i];

  // Duals of singleton rows from stationarity of the column they fixed, newest first.
  if (rs.status != SolveStatus::Unbounded) {
    const VectorXd gz = P.G.transpose() * sol.z;
    for (auto it = singleton_.rbegin(); it != singleton_.rend(); ++it) {
      const int r = it->first, j = it->second;
      double acc = (certificate ? 0.0 : P.c[j]) + gz[j];
      double arj = 0.0;
      for (SpMat::InnerIterator e(P.A, j); e; ++e) {
        if (e.row() == r)
          arj = e.value();
        else
          acc += e.value() * sol.y[e.row()];
      }
      sol.y[r] = -acc / arj;
    }
  }
  return sol;
}

}  // namespace ccopf
