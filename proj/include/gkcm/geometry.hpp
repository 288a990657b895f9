#pragma once

// Planar range-SLAM geometry: SE(2) poses, radical-center trilateration, the
// group-4 range consistency metric with first-order covariance propagation,
// and the pairwise circle-intersection check used as the k=2 baseline.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace gkcm {

using Vec2 = Eigen::Vector2d;

inline double wrap_angle(double a) {
  a = std::remainder(a, 2.0 * std::numbers::pi);  // [-pi, pi]
  if (a <= -std::numbers::pi) a += 2.0 * std::numbers::pi;
  return a;
}

struct Pose2 {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;  // (-pi, pi]

  Pose2() = default;
  Pose2(double x_, double y_, double theta_) : x(x_), y(y_), theta(wrap_angle(theta_)) {}

  static Pose2 identity() { return {}; }
  Vec2 translation() const { return {x, y}; }
  Eigen::Matrix2d rotation() const {
    const double c = std::cos(theta), s = std::sin(theta);
    return (Eigen::Matrix2d() << c, -s, s, c).finished();
  }
  friend bool operator==(const Pose2&, const Pose2&) = default;
};

// a ⊕ b
inline Pose2 compose(const Pose2& a, const Pose2& b) {
  const double c = std::cos(a.theta), s = std::sin(a.theta);
  return {a.x + c * b.x - s * b.y, a.y + s * b.x + c * b.y, a.theta + b.theta};
}

// a⁻¹ ⊕ b, the transform taking a to b.
inline Pose2 between(const Pose2& a, const Pose2& b) {
  const double c = std::cos(a.theta), s = std::sin(a.theta);
  const double dx = b.x - a.x, dy = b.y - a.y;
  return {c * dx + s * dy, -s * dx + c * dy, b.theta - a.theta};
}

inline Pose2 inverse(const Pose2& a) { return between(a, Pose2::identity()); }

constexpr int kUnknownBeacon = -1;

struct Beacon {
  int id = 0;
  Vec2 position = Vec2::Zero();
};

struct RangeMeasurement {
  int pose_id = 0;
  int beacon_id = kUnknownBeacon;
  double range = 0.0;
  double sigma = 0.0;
};

struct OdometryMeasurement {
  int from_id = 0;
  int to_id = 1;
  Pose2 delta;
  Eigen::Matrix3d covariance = Eigen::Matrix3d::Identity();
};

enum class Degeneracy { none, collinear, coincident, singular };

inline const char* to_string(Degeneracy d) {
  switch (d) {
    case Degeneracy::none: return "none";
    case Degeneracy::collinear: return "collinear";
    case Degeneracy::coincident: return "coincident";
    case Degeneracy::singular: return "singular";
  }
  return "?";
}

struct TrilaterationResult {
  Vec2 position = Vec2::Constant(std::numeric_limits<double>::quiet_NaN());
  double residual = std::numeric_limits<double>::infinity();
  Degeneracy degenerate = Degeneracy::none;
  // One solution, or both mirror solutions when the centers are collinear.
  std::array<Vec2, 2> candidates{};
  std::size_t candidate_count = 0;

  bool ok() const { return degenerate == Degeneracy::none; }
  bool has_solution() const { return candidate_count > 0; }
};

struct TrilaterationTolerance {
  double det_relative = 1e-9;  // |det A| < det_relative * scale^2 is degenerate
  double coincident = 1e-6;    // meters
  // A second least-squares minimum is scored only if its whitened
  // three-circle fit stays below this (99% chi-square, 1 DOF).
  double mirror_fit_chi2 = 6.634896601021214;
};

namespace detail {

inline double circle_residual(std::span<const Vec2, 3> p, std::span<const double, 3> r, const Vec2& l) {
  double worst = 0.0;
  for (int i = 0; i < 3; ++i) worst = std::max(worst, std::abs((l - p[i]).norm() - r[i]));
  return worst;
}

// Intersections of the circles around c0 and c1; the tangent point when they
// miss each other.
inline std::array<Vec2, 2> two_circle_points(const Vec2& c0, double r0, const Vec2& c1, double r1) {
  const Vec2 d = c1 - c0;
  const double D = d.norm();
  const Vec2 u = d / D;
  const Vec2 n(-u.y(), u.x());
  const double t = (r0 * r0 - r1 * r1 + D * D) / (2.0 * D);
  const double s = std::sqrt(std::max(0.0, r0 * r0 - t * t));
  return {c0 + t * u + s * n, c0 + t * u - s * n};
}

}  // namespace detail

// Radical center of three circles: subtracting the circle at p[0] from those
// at p[1], p[2] gives A·l = b with A = 2[(p1-p0)ᵀ; (p2-p0)ᵀ]. The solution is
// the same for any ordering of the three circles.
inline TrilaterationResult trilaterate_2d(std::span<const Vec2, 3> p, std::span<const double, 3> r,
                                          const TrilaterationTolerance& tol = {}) {
  TrilaterationResult out;
  for (int i = 0; i < 3; ++i)
    if (!p[i].allFinite() || !std::isfinite(r[i]))
      throw std::invalid_argument("trilaterate_2d: non-finite input");

  int close_pairs = 0;
  int far_a = 0, far_b = 1;
  double scale = 0.0;
  for (int i = 0; i < 3; ++i)
    for (int j = i + 1; j < 3; ++j) {
      const double d = (p[i] - p[j]).norm();
      if (d < tol.coincident) ++close_pairs;
      if (d > scale) {
        scale = d;
        far_a = i;
        far_b = j;
      }
    }
  if (close_pairs == 3) {
    out.degenerate = Degeneracy::singular;
    return out;
  }
  if (close_pairs > 0) {
    out.degenerate = Degeneracy::coincident;
    return out;
  }

  Eigen::Matrix2d A;
  A.row(0) = 2.0 * (p[1] - p[0]).transpose();
  A.row(1) = 2.0 * (p[2] - p[0]).transpose();
  const double det = A.determinant();
  if (std::abs(det) < tol.det_relative * scale * scale) {
    out.degenerate = Degeneracy::collinear;
    const auto mirrors = detail::two_circle_points(p[far_a], r[far_a], p[far_b], r[far_b]);
    out.candidates = mirrors;
    out.candidate_count = 2;
    out.position = mirrors[0];
    out.residual = detail::circle_residual(p, r, mirrors[0]);
    return out;
  }
  const Eigen::Vector2d b(r[0] * r[0] - r[1] * r[1] + p[1].squaredNorm() - p[0].squaredNorm(),
                          r[0] * r[0] - r[2] * r[2] + p[2].squaredNorm() - p[0].squaredNorm());
  // Explicit 2x2 inverse keeps this branch-free and allocation-free.
  out.position = Vec2((A(1, 1) * b(0) - A(0, 1) * b(1)) / det, (-A(1, 0) * b(0) + A(0, 0) * b(1)) / det);
  out.residual = detail::circle_residual(p, r, out.position);
  out.candidates[0] = out.position;
  out.candidate_count = 1;
  return out;
}

inline TrilaterationResult trilaterate_2d(const std::array<Vec2, 3>& p, const std::array<double, 3>& r,
                                          const TrilaterationTolerance& tol = {}) {
  return trilaterate_2d(std::span<const Vec2, 3>(p), std::span<const double, 3>(r), tol);
}

// Least-squares beacon fix from three circles: a local minimum of
// Σ (‖l − p_i‖ − r_i)², with derivatives of the minimizer from the implicit
// function theorem. Unlike the radical center this stays well conditioned
// when the centers are nearly collinear but the beacon is off their line.
struct BeaconFix {
  Vec2 position;
  double cost = 0.0;                  // Σ e_i²
  std::array<double, 3> errors{};     // e_i = ‖l − p_i‖ − r_i
  Eigen::Matrix<double, 2, 6> dl_dp;  // ∂l/∂(p_a, p_b, p_c)
  Eigen::Matrix<double, 2, 3> dl_dr;  // ∂l/∂(r_a, r_b, r_c)
};

struct LeastSquaresTrilateration {
  std::array<BeaconFix, 2> fixes;  // distinct local minima, ascending cost
  std::size_t count = 0;
  Degeneracy degenerate = Degeneracy::none;  // of the closed-form solve
};

namespace detail {

struct CircleFit {
  double cost;
  Eigen::Vector2d grad;
  Eigen::Matrix2d hess;  // exact
  Eigen::Matrix2d gn;    // Gauss-Newton part
  bool regular;          // l is away from every center
};

inline CircleFit circle_fit(std::span<const Vec2, 3> p, std::span<const double, 3> r, const Vec2& l) {
  CircleFit f{0.0, Eigen::Vector2d::Zero(), Eigen::Matrix2d::Zero(), Eigen::Matrix2d::Zero(), true};
  for (int i = 0; i < 3; ++i) {
    const Vec2 d = l - p[i];
    const double rho = d.norm();
    if (!(rho > 1e-12)) {
      f.regular = false;
      return f;
    }
    const Vec2 u = d / rho;
    const double e = rho - r[i];
    const Eigen::Matrix2d uu = u * u.transpose();
    f.cost += e * e;
    f.grad += e * u;
    f.gn += uu;
    f.hess += uu + (e / rho) * (Eigen::Matrix2d::Identity() - uu);
  }
  return f;
}

inline bool positive_definite(const Eigen::Matrix2d& m) {
  return m(0, 0) > 0.0 && m.determinant() > 1e-12 * m.trace() * m.trace();
}

// Damped Newton from `seed`; falls back to Gauss-Newton steps where the
// Hessian is indefinite.
inline std::optional<Vec2> refine_fix(std::span<const Vec2, 3> p, std::span<const double, 3> r, Vec2 l,
                                      double scale) {
  CircleFit f = circle_fit(p, r, l);
  if (!f.regular) return std::nullopt;
  for (int it = 0; it < 40; ++it) {
    const Eigen::Matrix2d& M = positive_definite(f.hess) ? f.hess : f.gn;
    if (!positive_definite(M)) return std::nullopt;
    const Eigen::Vector2d step = -M.inverse() * f.grad;
    double alpha = 1.0;
    bool moved = false;
    for (int h = 0; h < 40; ++h, alpha *= 0.5) {
      const Vec2 cand = l + alpha * step;
      const CircleFit g = circle_fit(p, r, cand);
      if (g.regular && g.cost <= f.cost) {
        l = cand;
        f = g;
        moved = true;
        break;
      }
    }
    if (!moved || alpha * step.norm() <= 1e-10 * scale) break;
  }
  // Undamped polish; the line search cannot resolve cost changes below rounding.
  for (int it = 0; it < 3 && positive_definite(f.hess); ++it) {
    const Eigen::Vector2d step = -f.hess.inverse() * f.grad;
    if (!(step.norm() <= 1e-6 * scale)) break;
    const CircleFit g = circle_fit(p, r, l + step);
    if (!g.regular || g.grad.norm() >= f.grad.norm()) break;
    l += step;
    f = g;
  }
  return l;
}

}  // namespace detail

inline LeastSquaresTrilateration trilaterate_least_squares(std::span<const Vec2, 3> p, std::span<const double, 3> r,
                                                           const TrilaterationTolerance& tol = {}) {
  LeastSquaresTrilateration out;
  const auto closed = trilaterate_2d(p, r, tol);
  out.degenerate = closed.degenerate;
  if (closed.degenerate == Degeneracy::coincident || closed.degenerate == Degeneracy::singular) return out;

  int a = 0, b = 1;
  double scale = 0.0;
  for (int i = 0; i < 3; ++i)
    for (int j = i + 1; j < 3; ++j)
      if (const double d = (p[i] - p[j]).norm(); d > scale) {
        scale = d;
        a = i;
        b = j;
      }
  scale = std::max({scale, r[0], r[1], r[2]});
  const auto seeds = detail::two_circle_points(p[a], r[a], p[b], r[b]);
  for (const Vec2& seed : seeds) {
    const auto l = detail::refine_fix(p, r, seed, scale);
    if (!l) continue;
    bool duplicate = false;
    for (std::size_t k = 0; k < out.count; ++k)
      duplicate = duplicate || (out.fixes[k].position - *l).norm() <= 1e-7 * scale;
    if (duplicate) continue;
    const auto f = detail::circle_fit(p, r, *l);
    if (!f.regular || !detail::positive_definite(f.hess)) continue;  // saddle or flat direction
    BeaconFix fix;
    fix.position = *l;
    fix.cost = f.cost;
    const Eigen::Matrix2d Hinv = f.hess.inverse();
    for (int i = 0; i < 3; ++i) {
      const Vec2 d = *l - p[i];
      const double rho = d.norm();
      const Vec2 u = d / rho;
      const double e = rho - r[i];
      fix.errors[static_cast<std::size_t>(i)] = e;
      const Eigen::Matrix2d uu = u * u.transpose();
      const Eigen::Matrix2d K = uu + (e / rho) * (Eigen::Matrix2d::Identity() - uu);
      fix.dl_dp.block<2, 2>(0, 2 * i) = Hinv * K;
      fix.dl_dr.col(i) = Hinv * u;
    }
    out.fixes[out.count++] = fix;
  }
  if (out.count == 2 && out.fixes[1].cost < out.fixes[0].cost) std::swap(out.fixes[0], out.fixes[1]);
  return out;
}

inline LeastSquaresTrilateration trilaterate_least_squares(const std::array<Vec2, 3>& p,
                                                           const std::array<double, 3>& r,
                                                           const TrilaterationTolerance& tol = {}) {
  return trilaterate_least_squares(std::span<const Vec2, 3>(p), std::span<const double, 3>(r), tol);
}

// h(X_abcd, R_abc) = ‖l(X_abc, R_abc) − p_d‖ with l the best least-squares
// fix. Empty when no fix exists.
inline std::optional<double> measurement_model_h(const std::array<Vec2, 4>& positions,
                                                 const std::array<double, 3>& ranges,
                                                 const TrilaterationTolerance& tol = {}) {
  const std::array<Vec2, 3> abc{positions[0], positions[1], positions[2]};
  const auto tri = trilaterate_least_squares(abc, ranges, tol);
  if (tri.count == 0) return std::nullopt;
  return (tri.fixes[0].position - positions[3]).norm();
}

// Gradient of g = h − r_d with respect to
// (p_a, p_b, p_c, p_d, r_a, r_b, r_c, r_d).
struct ResidualLinearization {
  double residual = 0.0;   // g
  Vec2 beacon;             // l
  double fit_cost = 0.0;   // Σ e_i² of the three-circle fix
  std::array<double, 3> fit_errors{};
  Eigen::Matrix<double, 2, 6> dl_dp;   // ∂l/∂(p_a, p_b, p_c)
  Eigen::Matrix<double, 2, 3> dl_dr;   // ∂l/∂(r_a, r_b, r_c)
  Eigen::RowVector2d dh_dl;            // ∂h/∂l
  Eigen::RowVector2d dh_dpd;           // ∂h/∂p_d
};

inline ResidualLinearization linearize_at(const BeaconFix& fix, const Vec2& pd, double rd) {
  ResidualLinearization lin;
  lin.beacon = fix.position;
  lin.fit_cost = fix.cost;
  lin.fit_errors = fix.errors;
  lin.dl_dp = fix.dl_dp;
  lin.dl_dr = fix.dl_dr;
  const Vec2 diff = fix.position - pd;
  const double h = diff.norm();
  lin.residual = h - rd;
  if (h > 0.0) {
    lin.dh_dl = (diff / h).transpose();
  } else {
    lin.dh_dl.setZero();
  }
  lin.dh_dpd = -lin.dh_dl;
  return lin;
}

// Linearization at the best least-squares fix of (a, b, c).
inline std::optional<ResidualLinearization> linearize_residual(const std::array<Vec2, 4>& p,
                                                               const std::array<double, 4>& r,
                                                               const TrilaterationTolerance& tol = {}) {
  const std::array<Vec2, 3> abc{p[0], p[1], p[2]};
  const std::array<double, 3> rabc{r[0], r[1], r[2]};
  const auto tri = trilaterate_least_squares(abc, rabc, tol);
  if (tri.count == 0) return std::nullopt;
  return linearize_at(tri.fixes[0], p[3], r[3]);
}

// Joint covariance Σ_j of (x_a, x_b, x_c, x_d, l) (14x14) obtained by pushing
// the pose covariance (12x12, poses as x, y, θ) and the three range variances
// through the trilateration.
inline Eigen::Matrix<double, 14, 14> beacon_joint_covariance(const ResidualLinearization& lin,
                                                             const Eigen::Matrix<double, 12, 12>& pose_cov,
                                                             const std::array<double, 3>& range_sigmas) {
  Eigen::Matrix<double, 14, 15> M = Eigen::Matrix<double, 14, 15>::Zero();
  M.block<12, 12>(0, 0).setIdentity();
  for (int pose = 0; pose < 3; ++pose) M.block<2, 2>(12, 3 * pose) = lin.dl_dp.block<2, 2>(0, 2 * pose);
  M.block<2, 3>(12, 12) = lin.dl_dr;
  Eigen::Matrix<double, 15, 15> in = Eigen::Matrix<double, 15, 15>::Zero();
  in.block<12, 12>(0, 0) = pose_cov;
  for (int i = 0; i < 3; ++i) in(12 + i, 12 + i) = range_sigmas[i] * range_sigmas[i];
  return M * in * M.transpose();
}

// H = ∂g/∂(x_a, x_b, x_c, x_d, l, r_d), 1x15.
inline Eigen::Matrix<double, 1, 15> residual_jacobian(const ResidualLinearization& lin) {
  Eigen::Matrix<double, 1, 15> H = Eigen::Matrix<double, 1, 15>::Zero();
  H.block<1, 2>(0, 9) = lin.dh_dpd;
  H.block<1, 2>(0, 12) = lin.dh_dl;
  H(0, 14) = -1.0;
  return H;
}

// Σ = H Σ_T Hᵀ with Σ_T = blockdiag(Σ_j, σ_rd²). Σ_j must be symmetric
// positive semi-definite.
inline double propagate_covariance(const Eigen::Matrix<double, 1, 15>& H,
                                   const Eigen::Matrix<double, 14, 14>& joint, double sigma_rd) {
  const double scale = std::max(1.0, joint.cwiseAbs().maxCoeff());
  if ((joint - joint.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
    throw std::invalid_argument("propagate_covariance: joint covariance is not symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 14, 14>> eig(joint, Eigen::EigenvaluesOnly);
  if (eig.eigenvalues().minCoeff() < -1e-10 * scale)
    throw std::invalid_argument("propagate_covariance: joint covariance is not positive semi-definite");
  if (!(sigma_rd > 0.0)) throw std::invalid_argument("propagate_covariance: sigma_rd must be positive");
  Eigen::Matrix<double, 15, 15> T = Eigen::Matrix<double, 15, 15>::Zero();
  T.block<14, 14>(0, 0) = joint;
  T(14, 14) = sigma_rd * sigma_rd;
  return (H * T * H.transpose())(0, 0);
}

// Pose estimates with first-order dead-reckoning covariances. The cross
// covariance of poses i <= j follows from x_j = x_i ⊕ Δ_ij with Δ_ij
// independent of x_i: Cov(x_j, x_i) = F_ji P_i.
class TrajectoryContext {
 public:
  TrajectoryContext() = default;
  TrajectoryContext(std::vector<Pose2> poses, std::vector<Eigen::Matrix3d> covariances)
      : poses_(std::move(poses)), cov_(std::move(covariances)) {
    if (poses_.size() != cov_.size()) throw std::invalid_argument("TrajectoryContext: size mismatch");
  }

  std::size_t size() const { return poses_.size(); }
  const Pose2& pose(std::size_t i) const { return poses_.at(i); }
  Vec2 position(std::size_t i) const { return poses_[i].translation(); }
  const Eigen::Matrix3d& covariance(std::size_t i) const { return cov_.at(i); }
  const std::vector<Pose2>& poses() const { return poses_; }

  // Cov(x_i, x_j) for any ordering.
  Eigen::Matrix3d cross_covariance(std::size_t i, std::size_t j) const {
    if (i == j) return cov_[i];
    if (i > j) return cross_covariance(j, i).transpose();
    // i < j: Cov(x_i, x_j) = P_i F_jiᵀ
    Eigen::Matrix3d F = Eigen::Matrix3d::Identity();
    F(0, 2) = -(poses_[j].y - poses_[i].y);
    F(1, 2) = poses_[j].x - poses_[i].x;
    return cov_[i] * F.transpose();
  }

  // Joint covariance of four poses, 12x12.
  Eigen::Matrix<double, 12, 12> joint_covariance(const std::array<std::size_t, 4>& ids) const {
    Eigen::Matrix<double, 12, 12> out;
    for (int a = 0; a < 4; ++a)
      for (int b = 0; b < 4; ++b) out.block<3, 3>(3 * a, 3 * b) = cross_covariance(ids[a], ids[b]);
    return out;
  }

  // Position-only cross covariance, 2x2.
  Eigen::Matrix2d position_cross(std::size_t i, std::size_t j) const {
    if (i == j) return cov_[i].topLeftCorner<2, 2>();
    if (i > j) return position_cross(j, i).transpose();
    const Eigen::Matrix3d& P = cov_[i];
    const double dy = poses_[j].y - poses_[i].y, dx = poses_[j].x - poses_[i].x;
    // (P Fᵀ) restricted to the position rows / columns.
    Eigen::Matrix2d out;
    out(0, 0) = P(0, 0) - P(0, 2) * dy;
    out(0, 1) = P(0, 1) + P(0, 2) * dx;
    out(1, 0) = P(1, 0) - P(1, 2) * dy;
    out(1, 1) = P(1, 1) + P(1, 2) * dx;
    return out;
  }

 private:
  std::vector<Pose2> poses_;
  std::vector<Eigen::Matrix3d> cov_;
};

enum class DegeneracyPolicy { reject, buffer };

struct GroupCheckOptions {
  TrilaterationTolerance tolerance;
  // Stop once the running score exceeds this value; the returned score is
  // then a lower bound of the full score. Infinity disables it.
  double early_exit_above = std::numeric_limits<double>::infinity();
};

namespace detail {

// g² / Var(g) for one leave-one-out ordering (d = index 3). The best
// least-squares fix is scored. For collinear centers the mirror solution is
// scored too when its own three-circle fit is plausible, and the better
// score is kept.
inline double variance_of(const ResidualLinearization& lin, const std::array<double, 4>& sigma,
                          const std::array<std::size_t, 4>& pose_ids, const TrajectoryContext& ctx) {
  // Gradient over positions of a..d (8) and ranges (4).
  Eigen::Matrix<double, 1, 8> gp;
  gp.head<6>() = lin.dh_dl * lin.dl_dp;
  gp.tail<2>() = lin.dh_dpd;
  const Eigen::RowVector3d gr = lin.dh_dl * lin.dl_dr;
  double var = sigma[3] * sigma[3];
  for (int i = 0; i < 3; ++i) var += gr(i) * gr(i) * sigma[i] * sigma[i];
  for (int a = 0; a < 4; ++a)
    for (int b = 0; b < 4; ++b)
      var += gp.segment<2>(2 * a) * ctx.position_cross(pose_ids[a], pose_ids[b]) * gp.segment<2>(2 * b).transpose();
  return var;
}

inline std::optional<double> leave_one_out_score(const std::array<Vec2, 4>& p, const std::array<double, 4>& r,
                                                 const std::array<double, 4>& sigma,
                                                 const std::array<std::size_t, 4>& pose_ids,
                                                 const TrajectoryContext& ctx, const TrilaterationTolerance& tol) {
  const std::array<Vec2, 3> abc{p[0], p[1], p[2]};
  const std::array<double, 3> rabc{r[0], r[1], r[2]};
  const auto tri = trilaterate_least_squares(abc, rabc, tol);
  std::optional<double> best;
  for (std::size_t m = 0; m < tri.count; ++m) {
    const auto lin = linearize_at(tri.fixes[m], p[3], r[3]);
    if (m > 0) {
      if (tri.degenerate != Degeneracy::collinear) break;
      double fit = 0.0;
      for (int i = 0; i < 3; ++i) {
        const Vec2 u = (lin.beacon - p[i]).normalized();
        const double v = sigma[i] * sigma[i] + u.dot(ctx.position_cross(pose_ids[i], pose_ids[i]) * u);
        fit += lin.fit_errors[static_cast<std::size_t>(i)] * lin.fit_errors[static_cast<std::size_t>(i)] / v;
      }
      if (fit > tol.mirror_fit_chi2) continue;
    }
    const double var = variance_of(lin, sigma, pose_ids, ctx);
    if (!(var > 0.0)) continue;
    const double score = lin.residual * lin.residual / var;
    best = std::min(best.value_or(score), score);
  }
  return best;
}

}  // namespace detail

// Group-4 range consistency: each of the four measurements in turn is
// predicted from the beacon trilaterated with the other three, and the score
// is the largest squared Mahalanobis residual. Accepting means all four
// predictions pass. Empty when every ordering is degenerate.
inline std::optional<double> consistency_check_group4(std::span<const RangeMeasurement, 4> m,
                                                      const TrajectoryContext& ctx,
                                                      const GroupCheckOptions& opt = {}) {
  for (int i = 0; i < 4; ++i)
    for (int j = i + 1; j < 4; ++j)
      if (m[i].pose_id == m[j].pose_id)
        throw std::invalid_argument("consistency_check_group4: measurements must come from distinct poses");
  std::optional<double> score;
  for (int d = 0; d < 4; ++d) {
    std::array<Vec2, 4> p;
    std::array<double, 4> r, s;
    std::array<std::size_t, 4> ids;
    int slot = 0;
    for (int i = 0; i < 4; ++i) {
      if (i == d) continue;
      ids[slot] = static_cast<std::size_t>(m[i].pose_id);
      p[slot] = ctx.position(ids[slot]);
      r[slot] = m[i].range;
      s[slot] = m[i].sigma;
      ++slot;
    }
    ids[3] = static_cast<std::size_t>(m[d].pose_id);
    p[3] = ctx.position(ids[3]);
    r[3] = m[d].range;
    s[3] = m[d].sigma;
    if (auto sub = detail::leave_one_out_score(p, r, s, ids, ctx, opt.tolerance)) {
      score = std::max(score.value_or(0.0), *sub);
      if (*score > opt.early_exit_above) return score;
    }
  }
  return score;
}

inline std::optional<double> consistency_check_group4(const std::array<RangeMeasurement, 4>& m,
                                                      const TrajectoryContext& ctx,
                                                      const GroupCheckOptions& opt = {}) {
  return consistency_check_group4(std::span<const RangeMeasurement, 4>(m), ctx, opt);
}

// Pairwise circle-intersection feasibility: the gap by which the two range
// circles fail to intersect, squared and divided by its variance. Zero when
// the circles intersect.
inline double pairwise_range_check(const RangeMeasurement& a, const RangeMeasurement& b,
                                   const TrajectoryContext& ctx) {
  if (a.pose_id == b.pose_id)
    throw std::invalid_argument("pairwise_range_check: measurements must come from distinct poses");
  const auto ia = static_cast<std::size_t>(a.pose_id), ib = static_cast<std::size_t>(b.pose_id);
  const Vec2 diff = ctx.position(ia) - ctx.position(ib);
  const double d = diff.norm();
  const double outer = d - (a.range + b.range);
  const double inner = std::abs(a.range - b.range) - d;
  const double gap = std::max({0.0, outer, inner});
  if (gap == 0.0) return 0.0;
  double var = a.sigma * a.sigma + b.sigma * b.sigma;
  if (d > 0.0) {
    const Vec2 u = diff / d;
    const Eigen::Matrix2d rel = ctx.position_cross(ia, ia) + ctx.position_cross(ib, ib) -
                                ctx.position_cross(ia, ib) - ctx.position_cross(ib, ia);
    var += u.dot(rel * u);
  }
  return gap * gap / var;
}

}  // namespace gkcm
