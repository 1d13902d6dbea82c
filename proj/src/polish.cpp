#include <Eigen/SparseLU>

#include <cmath>

#include "ccopf/conic.hpp"

namespace ccopf {

namespace {

using Eigen::Index;
using Eigen::VectorXd;

enum class Role { Interior, Boundary, Zero };

double inf_norm(const VectorXd& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

// (s0 - |s_bar|) / s0, or -1 when s0 <= 0.
double interiority(const VectorXd& v) {
  if (v[0] <= 0.0) return -1.0;
  return (v[0] - v.tail(v.size() - 1).norm()) / v[0];
}

struct Block {
  Index row, dim;
  Role role;
  Index unknown;  // first multiplier slot
};

// Newton on the square system fixed by the roles; on success sol holds the polished point.
bool newton(const ConicProblem& P, Solution& sol, std::vector<Block> blocks) {
  const Index n = P.n(), p = P.p(), m = P.m();
  const double scale = 1.0 + std::max({inf_norm(P.c), inf_norm(P.b), inf_norm(P.h)});
  Index n_mult = 0;
  for (Block& b : blocks) {
    b.unknown = n_mult;
    n_mult += b.role == Role::Boundary ? 1 : b.role == Role::Zero ? b.dim : 0;
  }

  const Index N = n + p + n_mult;
  VectorXd w(N);
  w.head(n) = sol.x;
  w.segment(n, p) = sol.y;
  for (const Block& b : blocks) {
    if (b.role == Role::Zero) {
      w.segment(n + p + b.unknown, b.dim) = sol.z.segment(b.row, b.dim);
    } else if (b.role == Role::Boundary) {
      VectorXd js = sol.s.segment(b.row, b.dim);
      js.tail(b.dim - 1) *= -1.0;
      w[n + p + b.unknown] = std::max(0.0, js.dot(sol.z.segment(b.row, b.dim)) / js.squaredNorm());
    }
  }

  const SpMat Gt = P.G.transpose();
  const SpMat At = P.A.transpose();

  // z and s implied by the unknowns.
  auto duals = [&](const VectorXd& w, const VectorXd& s) {
    VectorXd z = VectorXd::Zero(m);
    for (const Block& b : blocks) {
      if (b.role == Role::Zero) {
        z.segment(b.row, b.dim) = w.segment(n + p + b.unknown, b.dim);
      } else if (b.role == Role::Boundary) {
        VectorXd js = s.segment(b.row, b.dim);
        js.tail(b.dim - 1) *= -1.0;
        z.segment(b.row, b.dim) = w[n + p + b.unknown] * js;
      }
    }
    return z;
  };
  auto residual = [&](const VectorXd& w) {
    const VectorXd x = w.head(n);
    const VectorXd s = P.h - P.G * x;
    VectorXd F(N);
    F.head(n) = P.c + At * w.segment(n, p) + Gt * duals(w, s);
    F.segment(n, p) = P.A * x - P.b;
    for (const Block& b : blocks) {
      if (b.role == Role::Zero) {
        F.segment(n + p + b.unknown, b.dim) = s.segment(b.row, b.dim);
      } else if (b.role == Role::Boundary) {
        const VectorXd sk = s.segment(b.row, b.dim);
        F[n + p + b.unknown] = 0.5 * (sk[0] * sk[0] - sk.tail(b.dim - 1).squaredNorm()) / std::max(sk[0], 1e-300);
      }
    }
    return F;
  };

  Eigen::SparseLU<SpMat, Eigen::COLAMDOrdering<int>> lu;
  bool analyzed = false;
  VectorXd F = residual(w);
  double fnorm = inf_norm(F);
  for (int it = 0; it < 12 && fnorm > 1e-14 * scale; ++it) {
    const VectorXd s = P.h - P.G * w.head(n);
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(P.A.nonZeros() * 2 + P.G.nonZeros() * 4);
    for (Index j = 0; j < P.A.outerSize(); ++j)
      for (SpMat::InnerIterator e(P.A, j); e; ++e) {
        trip.emplace_back(n + e.row(), j, e.value());
        trip.emplace_back(j, n + e.row(), e.value());
      }
    // d/dx of G'z on boundary cones: -lambda G_k' J G_k.
    VectorXd weight = VectorXd::Zero(m);
    for (const Block& b : blocks)
      if (b.role == Role::Boundary) {
        const double lam = w[n + p + b.unknown];
        weight[b.row] = -lam;
        weight.segment(b.row + 1, b.dim - 1).setConstant(lam);
      }
    const SpMat curv = Gt * weight.asDiagonal() * P.G;
    for (Index j = 0; j < curv.outerSize(); ++j)
      for (SpMat::InnerIterator e(curv, j); e; ++e) trip.emplace_back(e.row(), j, e.value());
    for (const Block& b : blocks) {
      const Index col = n + p + b.unknown;
      if (b.role == Role::Zero) {
        for (Index r = 0; r < b.dim; ++r)
          for (SpMat::InnerIterator e(Gt, b.row + r); e; ++e) {
            trip.emplace_back(e.row(), col + r, e.value());
            trip.emplace_back(col + r, e.row(), -e.value());
          }
      } else if (b.role == Role::Boundary) {
        // F_b = (s0^2 - |s_bar|^2) / (2 s0) has gradient -(J s)' G / s0 + F_b / s0 * G_0; the second term vanishes at a root.
        const double s0 = std::max(s[b.row], 1e-300);
        for (Index r = 0; r < b.dim; ++r) {
          const double js = r == 0 ? s[b.row] : -s[b.row + r];
          for (SpMat::InnerIterator e(Gt, b.row + r); e; ++e) {
            trip.emplace_back(e.row(), col, js * e.value());
            trip.emplace_back(col, e.row(), -js * e.value() / s0);
          }
        }
      }
    }
    SpMat Jac(N, N);
    Jac.setFromTriplets(trip.begin(), trip.end());
    Jac.makeCompressed();
    if (!analyzed) {
      lu.analyzePattern(Jac);
      analyzed = true;
    }
    lu.factorize(Jac);
    if (lu.info() != Eigen::Success) return false;
    const VectorXd step = lu.solve(-F);
    if (lu.info() != Eigen::Success || !step.allFinite()) return false;
    w += step;
    const VectorXd Fn = residual(w);
    const double nn = inf_norm(Fn);
    if (!(nn < fnorm) && nn > 1e-14 * scale) return false;
    F = Fn;
    fnorm = nn;
  }
  if (!(fnorm <= 1e-11 * scale)) return false;

  Solution out = sol;
  out.x = w.head(n);
  out.y = w.segment(n, p);
  out.s = P.h - P.G * out.x;
  out.z = duals(w, out.s);
  const double ftol = 1e-10 * scale;
  for (const Block& b : blocks) {
    auto s = out.s.segment(b.row, b.dim);
    auto z = out.z.segment(b.row, b.dim);
    switch (b.role) {
      case Role::Interior:
        if (b.dim == 1 ? s[0] < -ftol : s[0] - s.tail(b.dim - 1).norm() < -ftol) return false;
        break;
      case Role::Zero:
        if (b.dim == 1 ? z[0] < -ftol : z[0] - z.tail(b.dim - 1).norm() < -ftol) return false;
        s.setZero();
        break;
      case Role::Boundary:
        if (s[0] <= 0.0 || w[n + p + b.unknown] < -ftol) return false;
        break;
    }
  }
  const KktResiduals before = kkt_residuals(P, sol), after = kkt_residuals(P, out);
  const double worst_before = std::max({before.primal, before.dual, before.gap});
  const double worst_after = std::max({after.primal, after.dual, after.gap});
  if (!(worst_after <= worst_before)) return false;
  out.objective = P.c.dot(out.x) + P.objective_offset;
  sol = std::move(out);
  return true;
}

}  // namespace

bool polish(const ConicProblem& P, Solution& sol) {
  if (sol.x.size() != P.n() || sol.y.size() != P.p() || sol.z.size() != P.m() || sol.s.size() != P.m()) return false;
  constexpr double kBoundary = 1e-4;
  // NonNeg rows where s and z are within this ratio of each other are treated as undecided.
  constexpr double kAmbiguous = 0.01;

  std::vector<Block> blocks;
  std::vector<size_t> ambiguous;
  Index off = 0;
  for (const Cone& k : P.cones) {
    if (k.kind == Cone::Kind::NonNeg) {
      for (Index r = off; r < off + k.dim; ++r) {
        const double s = std::max(sol.s[r], 0.0), z = std::max(sol.z[r], 0.0);
        if (std::min(s, z) > kAmbiguous * std::max(s, z)) ambiguous.push_back(blocks.size());
        blocks.push_back({r, 1, z > s ? Role::Zero : Role::Interior, 0});
      }
    } else {
      const VectorXd s = sol.s.segment(off, k.dim), z = sol.z.segment(off, k.dim);
      const double rs = interiority(s), rz = interiority(z);
      Role role;
      if (rs < kBoundary && rz < kBoundary && s[0] > 0.0 && z[0] > 0.0)
        role = Role::Boundary;
      else
        role = s[0] >= z[0] ? Role::Interior : Role::Zero;
      blocks.push_back({off, k.dim, role, 0});
    }
    off += k.dim;
  }
  if (newton(P, sol, blocks)) return true;
  if (ambiguous.empty()) return false;
  // Degenerate rows (a tie in marginal cost, say) often move together, so try them all inactive, then all active.
  for (Role forced : {Role::Interior, Role::Zero}) {
    std::vector<Block> trial = blocks;
    for (size_t q : ambiguous) trial[q].role = forced;
    if (newton(P, sol, trial)) return true;
  }
  return false;
}

}  // namespace ccopf
