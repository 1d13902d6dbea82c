#pragma once

#include <Eigen/Dense>

#include <vector>

namespace ccopf {

struct Cone {
  enum class Kind { NonNeg, SecondOrder };
  Kind kind = Kind::NonNeg;
  Eigen::Index dim = 1;

  static Cone nonneg(Eigen::Index dim) { return {Kind::NonNeg, dim}; }
  static Cone soc(Eigen::Index dim) { return {Kind::SecondOrder, dim}; }
};

// Cone algebra on a product of nonnegative orthants and second-order cones, plus Nesterov-Todd scaling.
class ConeSet {
 public:
  ConeSet() = default;
  explicit ConeSet(std::vector<Cone> cones);

  const std::vector<Cone>& cones() const { return cones_; }
  Eigen::Index offset(size_t k) const { return offset_[k]; }
  Eigen::Index dim() const { return m_; }
  double degree() const { return degree_; }

  Eigen::VectorXd identity() const;
  // Smallest value t such that v - t e is on the boundary; negative means v is outside.
  double min_eigenvalue(const Eigen::VectorXd& v) const;
  // v + (1 + alpha) e when v is not strictly interior (alpha = -min eigenvalue).
  void bring_to_cone(Eigen::VectorXd& v) const;
  Eigen::VectorXd product(const Eigen::VectorXd& u, const Eigen::VectorXd& v) const;
  // Solves lambda o x = v for x.
  Eigen::VectorXd divide(const Eigen::VectorXd& lambda, const Eigen::VectorXd& v) const;
  // Largest step t with lambda + t*d in the cone (lambda interior); +inf if unbounded.
  double max_step(const Eigen::VectorXd& lambda, const Eigen::VectorXd& d) const;

  // NT scaling W with W^-1 s = W z = lambda. Returns false when s or z leaves the interior.
  bool update_scaling(const Eigen::VectorXd& s, const Eigen::VectorXd& z);
  void set_identity_scaling();
  const Eigen::VectorXd& lambda() const { return lambda_; }

  Eigen::VectorXd apply_W(const Eigen::VectorXd& v) const;
  Eigen::VectorXd apply_Winv(const Eigen::VectorXd& v) const;
  Eigen::VectorXd apply_W2(const Eigen::VectorXd& v) const { return apply_W(apply_W(v)); }
  Eigen::VectorXd apply_Winv2(const Eigen::VectorXd& v) const { return apply_Winv(apply_Winv(v)); }
  // W^-1 restricted to cone k applied to the rows of a dense block (dim_k x cols).
  Eigen::MatrixXd apply_Winv_block(size_t k, const Eigen::MatrixXd& rows) const;
  // Dense W and W^2 of cone k.
  Eigen::MatrixXd W_block(size_t k) const;
  Eigen::MatrixXd W2_block(size_t k) const;

 private:
  struct SocScaling {
    double eta = 1.0;
    double a = 1.0;
    Eigen::VectorXd q;
  };

  std::vector<Cone> cones_;
  std::vector<Eigen::Index> offset_;
  Eigen::Index m_ = 0;
  double degree_ = 0.0;
  Eigen::VectorXd lp_w_;             // diagonal W on every row (only NonNeg rows used)
  std::vector<SocScaling> soc_;      // per cone; unused entries for NonNeg
  Eigen::VectorXd lambda_;
};

}  // namespace ccopf
