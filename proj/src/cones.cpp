#include "ccopf/cones.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace ccopf {

namespace {
constexpr double kInfStep = std::numeric_limits<double>::infinity();
}

ConeSet::ConeSet(std::vector<Cone> cones) : cones_(std::move(cones)) {
  offset_.reserve(cones_.size());
  for (const Cone& c : cones_) {
    if (c.dim < 1) throw std::invalid_argument("cone dimension must be >= 1");
    offset_.push_back(m_);
    m_ += c.dim;
    degree_ += c.kind == Cone::Kind::NonNeg ? static_cast<double>(c.dim) : 1.0;
  }
  soc_.resize(cones_.size());
  set_identity_scaling();
}

Eigen::VectorXd ConeSet::identity() const {
  Eigen::VectorXd e = Eigen::VectorXd::Zero(m_);
  for (size_t k = 0; k < cones_.size(); ++k) {
    if (cones_[k].kind == Cone::Kind::NonNeg)
      e.segment(offset_[k], cones_[k].dim).setOnes();
    else
      e[offset_[k]] = 1.0;
  }
  return e;
}

double ConeSet::min_eigenvalue(const Eigen::VectorXd& v) const {
  double lo = std::numeric_limits<double>::infinity();
  for (size_t k = 0; k < cones_.size(); ++k) {
    const auto seg = v.segment(offset_[k], cones_[k].dim);
    if (cones_[k].kind == Cone::Kind::NonNeg)
      lo = std::min(lo, seg.minCoeff());
    else
      lo = std::min(lo, seg[0] - seg.tail(seg.size() - 1).norm());
  }
  return lo;
}

void ConeSet::bring_to_cone(Eigen::VectorXd& v) const {
  const double alpha = -min_eigenvalue(v);
  if (alpha >= -1e-8) v += (1.0 + std::max(alpha, 0.0)) * identity();
}

Eigen::VectorXd ConeSet::product(const Eigen::VectorXd& u, const Eigen::VectorXd& v) const {
  Eigen::VectorXd out(m_);
  for (size_t k = 0; k < cones_.size(); ++k) {
    const Eigen::Index o = offset_[k], d = cones_[k].dim;
    if (cones_[k].kind == Cone::Kind::NonNeg) {
      out.segment(o, d) = u.segment(o, d).cwiseProduct(v.segment(o, d));
    } else {
      out[o] = u.segment(o, d).dot(v.segment(o, d));
      out.segment(o + 1, d - 1) = u[o] * v.segment(o + 1, d - 1) + v[o] * u.segment(o + 1, d - 1);
    }
  }
  return out;
}

Eigen::VectorXd ConeSet::divide(const Eigen::VectorXd& lambda, const Eigen::VectorXd& v) const {
  Eigen::VectorXd out(m_);
  for (size_t k = 0; k < cones_.size(); ++k) {
    const Eigen::Index o = offset_[k], d = cones_[k].dim;
    if (cones_[k].kind == Cone::Kind::NonNeg) {
      out.segment(o, d) = v.segment(o, d).cwiseQuotient(lambda.segment(o, d));
    } else {
      const double l0 = lambda[o];
      const auto l1 = lambda.segment(o + 1, d - 1);
      const auto v1 = v.segment(o + 1, d - 1);
      const double rho = l0 * l0 - l1.squaredNorm();
      const double x0 = (l0 * v[o] - l1.dot(v1)) / rho;
      out[o] = x0;
      out.segment(o + 1, d - 1) = (v1 - x0 * l1) / l0;
    }
  }
  return out;
}

double ConeSet::max_step(const Eigen::VectorXd& lambda, const Eigen::VectorXd& dir) const {
  double step = kInfStep;
  for (size_t k = 0; k < cones_.size(); ++k) {
    const Eigen::Index o = offset_[k], d = cones_[k].dim;
    if (cones_[k].kind == Cone::Kind::NonNeg) {
      for (Eigen::Index i = o; i < o + d; ++i)
        if (dir[i] < 0.0) step = std::min(step, -lambda[i] / dir[i]);
      continue;
    }
    // Jordan-frame form: the step is 1 / max(0, ||rho1|| - rho0) with rho the lambda^-1/2 transform of dir.
    const double l0 = lambda[o];
    const auto l1 = lambda.segment(o + 1, d - 1);
    const double lnorm = std::sqrt(std::max(l0 * l0 - l1.squaredNorm(), 0.0));
    if (!(lnorm > 0.0)) return 0.0;
    const double lb0 = l0 / lnorm;
    const Eigen::VectorXd lb1 = l1 / lnorm;
    const double d0 = dir[o];
    const auto d1 = dir.segment(o + 1, d - 1);
    const double lbd = lb0 * d0 - lb1.dot(d1);
    const double rho0 = lbd / lnorm;
    const double factor = (lbd + d0) / (lb0 + 1.0);
    const double rho1 = (d1 - factor * lb1).norm() / lnorm;
    const double denom = rho1 - rho0;
    if (denom > 0.0) step = std::min(step, 1.0 / denom);
  }
  return step;
}

void ConeSet::set_identity_scaling() {
  lp_w_ = Eigen::VectorXd::Ones(m_);
  for (size_t k = 0; k < cones_.size(); ++k) {
    soc_[k].eta = 1.0;
    soc_[k].a = 1.0;
    soc_[k].q = Eigen::VectorXd::Zero(cones_[k].kind == Cone::Kind::SecondOrder ? cones_[k].dim - 1 : 0);
  }
  lambda_ = Eigen::VectorXd::Zero(m_);
}

bool ConeSet::update_scaling(const Eigen::VectorXd& s, const Eigen::VectorXd& z) {
  for (size_t k = 0; k < cones_.size(); ++k) {
    const Eigen::Index o = offset_[k], d = cones_[k].dim;
    if (cones_[k].kind == Cone::Kind::NonNeg) {
      for (Eigen::Index i = o; i < o + d; ++i) {
        if (!(s[i] > 0.0) || !(z[i] > 0.0)) return false;
        lp_w_[i] = std::sqrt(s[i] / z[i]);
      }
      continue;
    }
    const auto s1 = s.segment(o + 1, d - 1);
    const auto z1 = z.segment(o + 1, d - 1);
    const double sres2 = s[o] * s[o] - s1.squaredNorm();
    const double zres2 = z[o] * z[o] - z1.squaredNorm();
    if (!(s[o] > 0.0) || !(z[o] > 0.0) || !(sres2 > 0.0) || !(zres2 > 0.0)) return false;
    const double sres = std::sqrt(sres2), zres = std::sqrt(zres2);
    const double sb0 = s[o] / sres, zb0 = z[o] / zres;
    const Eigen::VectorXd sb1 = s1 / sres, zb1 = z1 / zres;
    const double gamma = std::sqrt(0.5 * (1.0 + sb0 * zb0 + sb1.dot(zb1)));
    SocScaling& sc = soc_[k];
    sc.a = (sb0 + zb0) / (2.0 * gamma);
    sc.q = (sb1 - zb1) / (2.0 * gamma);
    sc.eta = std::sqrt(sres / zres);
  }
  lambda_ = apply_W(z);
  return true;
}

Eigen::VectorXd ConeSet::apply_W(const Eigen::VectorXd& v) const {
  Eigen::VectorXd out(m_);
  for (size_t k = 0; k < cones_.size(); ++k) {
    const Eigen::Index o = offset_[k], d = cones_[k].dim;
    if (cones_[k].kind == Cone::Kind::NonNeg) {
      out.segment(o, d) = lp_w_.segment(o, d).cwiseProduct(v.segment(o, d));
    } else {
      const SocScaling& sc = soc_[k];
      const auto v1 = v.segment(o + 1, d - 1);
      const double qv = sc.q.dot(v1);
      out[o] = sc.eta * (sc.a * v[o] + qv);
      out.segment(o + 1, d - 1) = sc.eta * (v1 + (v[o] + qv / (1.0 + sc.a)) * sc.q);
    }
  }
  return out;
}

Eigen::VectorXd ConeSet::apply_Winv(const Eigen::VectorXd& v) const {
  Eigen::VectorXd out(m_);
  for (size_t k = 0; k < cones_.size(); ++k) {
    const Eigen::Index o = offset_[k], d = cones_[k].dim;
    if (cones_[k].kind == Cone::Kind::NonNeg) {
      out.segment(o, d) = v.segment(o, d).cwiseQuotient(lp_w_.segment(o, d));
    } else {
      const SocScaling& sc = soc_[k];
      const auto v1 = v.segment(o + 1, d - 1);
      const double qv = sc.q.dot(v1);
      out[o] = (sc.a * v[o] - qv) / sc.eta;
      out.segment(o + 1, d - 1) = (v1 + (-v[o] + qv / (1.0 + sc.a)) * sc.q) / sc.eta;
    }
  }
  return out;
}

Eigen::MatrixXd ConeSet::apply_Winv_block(size_t k, const Eigen::MatrixXd& rows) const {
  const Eigen::Index o = offset_[k], d = cones_[k].dim;
  if (cones_[k].kind == Cone::Kind::NonNeg)
    return lp_w_.segment(o, d).cwiseInverse().asDiagonal() * rows;
  const SocScaling& sc = soc_[k];
  Eigen::MatrixXd out(d, rows.cols());
  const Eigen::RowVectorXd qv = sc.q.transpose() * rows.bottomRows(d - 1);
  out.row(0) = (sc.a * rows.row(0) - qv) / sc.eta;
  const Eigen::RowVectorXd coef = (-rows.row(0) + qv / (1.0 + sc.a)) / sc.eta;
  out.bottomRows(d - 1) = rows.bottomRows(d - 1) / sc.eta + sc.q * coef;
  return out;
}

Eigen::MatrixXd ConeSet::W_block(size_t k) const {
  const Eigen::Index o = offset_[k], d = cones_[k].dim;
  Eigen::MatrixXd W(d, d);
  for (Eigen::Index j = 0; j < d; ++j) {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(m_);
    e[o + j] = 1.0;
    W.col(j) = apply_W(e).segment(o, d);
  }
  return W;
}

Eigen::MatrixXd ConeSet::W2_block(size_t k) const {
  const Eigen::Index o = offset_[k], d = cones_[k].dim;
  if (cones_[k].kind == Cone::Kind::NonNeg) return lp_w_.segment(o, d).array().square().matrix().asDiagonal();
  // eta^2 (2 w w' - J) with w = (a, q).
  const SocScaling& sc = soc_[k];
  Eigen::VectorXd w(d);
  w << sc.a, sc.q;
  Eigen::MatrixXd W2 = 2.0 * w * w.transpose();
  W2(0, 0) -= 1.0;
  W2.diagonal().tail(d - 1).array() += 1.0;
  return sc.eta * sc.eta * W2;
}

}  // namespace ccopf
