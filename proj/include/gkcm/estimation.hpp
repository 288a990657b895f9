#pragma once

// Small dense factor-graph solver for planar range-only SLAM: dead
// reckoning, damped Gauss-Newton, marginal covariance recovery and the
// trial metrics (RMSE, beacon error, TPR/FPR, normalized chi-square).

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "gkcm/geometry.hpp"

namespace gkcm {

class EstimationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline std::vector<Pose2> dead_reckon(std::span<const OdometryMeasurement> odometry, const Pose2& origin) {
  std::vector<Pose2> poses{origin};
  poses.reserve(odometry.size() + 1);
  for (std::size_t i = 0; i < odometry.size(); ++i) {
    const auto& z = odometry[i];
    if (z.from_id != static_cast<int>(i) || z.to_id != static_cast<int>(i) + 1)
      throw EstimationError("dead_reckon: broken odometry chain at step " + std::to_string(i));
    poses.push_back(compose(poses.back(), z.delta));
  }
  return poses;
}

// Dead reckoning with first-order covariance compounding
// P_{i+1} = F P_i Fᵀ + G Q_i Gᵀ.
inline TrajectoryContext dead_reckon_with_covariance(std::span<const OdometryMeasurement> odometry,
                                                     const Pose2& origin,
                                                     const Eigen::Matrix3d& origin_cov = Eigen::Matrix3d::Zero()) {
  auto poses = dead_reckon(odometry, origin);
  std::vector<Eigen::Matrix3d> cov{origin_cov};
  cov.reserve(poses.size());
  for (std::size_t i = 0; i < odometry.size(); ++i) {
    const Pose2& a = poses[i];
    const Pose2& b = poses[i + 1];
    Eigen::Matrix3d F = Eigen::Matrix3d::Identity();
    F(0, 2) = -(b.y - a.y);
    F(1, 2) = b.x - a.x;
    Eigen::Matrix3d G = Eigen::Matrix3d::Identity();
    G.topLeftCorner<2, 2>() = a.rotation();
    cov.push_back(F * cov.back() * F.transpose() + G * odometry[i].covariance * G.transpose());
  }
  return TrajectoryContext(std::move(poses), std::move(cov));
}

struct PriorFactor {
  int pose = 0;
  Pose2 mean;
  Eigen::Matrix3d covariance = Eigen::Matrix3d::Identity() * 1e-6;
};

struct OdometryFactor {
  int from = 0, to = 1;
  Pose2 delta;
  Eigen::Matrix3d covariance = Eigen::Matrix3d::Identity();
};

struct RangeFactor {
  int pose = 0;
  int beacon = 0;  // index into the beacon variables
  double range = 0.0;
  double sigma = 1.0;
};

struct Values {
  std::vector<Pose2> poses;
  std::vector<Vec2> beacons;
};

class FactorGraph {
 public:
  FactorGraph(std::size_t num_poses, std::size_t num_beacons) : poses_(num_poses), beacons_(num_beacons) {}

  std::size_t num_poses() const { return poses_; }
  std::size_t num_beacons() const { return beacons_; }
  std::size_t dimension() const { return 3 * poses_ + 2 * beacons_; }
  std::size_t residual_dimension() const {
    return 3 * priors_.size() + 3 * odometry_.size() + ranges_.size();
  }

  void add(const PriorFactor& f) {
    check_pose(f.pose);
    priors_.push_back(f);
  }
  void add(const OdometryFactor& f) {
    check_pose(f.from);
    check_pose(f.to);
    odometry_.push_back(f);
  }
  void add(const RangeFactor& f) {
    check_pose(f.pose);
    if (f.beacon < 0 || static_cast<std::size_t>(f.beacon) >= beacons_)
      throw EstimationError("range factor references unknown beacon " + std::to_string(f.beacon));
    if (!(f.sigma > 0.0)) throw EstimationError("range factor sigma must be positive");
    ranges_.push_back(f);
  }

  const std::vector<PriorFactor>& priors() const { return priors_; }
  const std::vector<OdometryFactor>& odometry() const { return odometry_; }
  const std::vector<RangeFactor>& ranges() const { return ranges_; }

  static std::size_t pose_col(int i) { return 3 * static_cast<std::size_t>(i); }
  std::size_t beacon_col(int j) const { return 3 * poses_ + 2 * static_cast<std::size_t>(j); }

  // Whitened residual vector and Jacobian at `v`.
  void linearize(const Values& v, Eigen::VectorXd& r, Eigen::MatrixXd* J) const {
    check_values(v);
    r.resize(static_cast<Eigen::Index>(residual_dimension()));
    if (J) J->setZero(static_cast<Eigen::Index>(residual_dimension()), static_cast<Eigen::Index>(dimension()));
    Eigen::Index row = 0;
    for (const auto& f : priors_) {
      const Pose2& x = v.poses[f.pose];
      const Eigen::Matrix3d W = sqrt_information(f.covariance);
      const Eigen::Vector3d e(x.x - f.mean.x, x.y - f.mean.y, wrap_angle(x.theta - f.mean.theta));
      r.segment<3>(row) = W * e;
      if (J) J->block<3, 3>(row, pose_col(f.pose)) = W;
      row += 3;
    }
    for (const auto& f : odometry_) {
      const Pose2& a = v.poses[f.from];
      const Pose2& b = v.poses[f.to];
      const Eigen::Matrix3d W = sqrt_information(f.covariance);
      const double c = std::cos(a.theta), s = std::sin(a.theta);
      const double dx = b.x - a.x, dy = b.y - a.y;
      const Eigen::Vector3d e(c * dx + s * dy - f.delta.x, -s * dx + c * dy - f.delta.y,
                              wrap_angle(b.theta - a.theta - f.delta.theta));
      r.segment<3>(row) = W * e;
      if (J) {
        Eigen::Matrix3d Ja, Jb;
        Ja << -c, -s, -s * dx + c * dy,
               s, -c, -c * dx - s * dy,
               0, 0, -1;
        Jb << c, s, 0,
             -s, c, 0,
              0, 0, 1;
        J->block<3, 3>(row, pose_col(f.from)) = W * Ja;
        J->block<3, 3>(row, pose_col(f.to)) = W * Jb;
      }
      row += 3;
    }
    for (const auto& f : ranges_) {
      const Pose2& x = v.poses[f.pose];
      const Vec2 d = v.beacons[f.beacon] - x.translation();
      const double dist = d.norm();
      r(row) = (dist - f.range) / f.sigma;
      if (J && dist > 0.0) {
        const Vec2 u = d / dist / f.sigma;
        J->block<1, 2>(row, pose_col(f.pose)) = -u.transpose();
        J->block<1, 2>(row, beacon_col(f.beacon)) = u.transpose();
      }
      row += 1;
    }
  }

  double cost(const Values& v) const {
    Eigen::VectorXd r;
    linearize(v, r, nullptr);
    return r.squaredNorm();
  }

  void check_values(const Values& v) const {
    if (v.poses.size() != poses_ || v.beacons.size() != beacons_)
      throw EstimationError("values do not match the graph's variables");
  }

 private:
  void check_pose(int i) const {
    if (i < 0 || static_cast<std::size_t>(i) >= poses_)
      throw EstimationError("factor references unknown pose " + std::to_string(i));
  }

  static Eigen::Matrix3d sqrt_information(const Eigen::Matrix3d& cov) {
    Eigen::LLT<Eigen::Matrix3d> llt(cov.inverse());
    if (llt.info() != Eigen::Success) throw EstimationError("factor covariance is not positive definite");
    return llt.matrixU();
  }

  std::size_t poses_, beacons_;
  std::vector<PriorFactor> priors_;
  std::vector<OdometryFactor> odometry_;
  std::vector<RangeFactor> ranges_;
};

inline Values retract(const Values& v, const Eigen::VectorXd& delta) {
  Values out = v;
  for (std::size_t i = 0; i < v.poses.size(); ++i) {
    const auto c = static_cast<Eigen::Index>(3 * i);
    out.poses[i] = Pose2(v.poses[i].x + delta(c), v.poses[i].y + delta(c + 1), v.poses[i].theta + delta(c + 2));
  }
  const auto base = static_cast<Eigen::Index>(3 * v.poses.size());
  for (std::size_t j = 0; j < v.beacons.size(); ++j)
    out.beacons[j] = v.beacons[j] + delta.segment<2>(base + static_cast<Eigen::Index>(2 * j));
  return out;
}

struct SolverOptions {
  int max_iterations = 100;
  double relative_tolerance = 1e-9;
  int max_step_halvings = 5;
};

struct SolveReport {
  bool converged = false;
  bool diverged = false;
  int iterations = 0;
  double final_cost = 0.0;        // sum of squared whitened residuals
  double chi2_normalized = 0.0;   // final_cost / dof
  long dof = 0;                   // residuals − variables
};

// Damped Gauss-Newton: full steps, halved up to max_step_halvings times while
// the cost does not decrease. A step that never decreases the cost ends the
// solve as diverged unless the cost is already at a stationary point.
inline std::pair<Values, SolveReport> gauss_newton_solve(const FactorGraph& graph, const Values& init,
                                                         const SolverOptions& opt = {}) {
  if (graph.priors().empty()) throw EstimationError("gauss_newton_solve: graph has no prior (gauge not fixed)");
  Values v = init;
  SolveReport rep;
  rep.dof = static_cast<long>(graph.residual_dimension()) - static_cast<long>(graph.dimension());
  Eigen::VectorXd r;
  Eigen::MatrixXd J;
  graph.linearize(v, r, &J);
  double cost = r.squaredNorm();
  for (int it = 0; it < opt.max_iterations; ++it) {
    const Eigen::MatrixXd H = J.transpose() * J;
    const Eigen::VectorXd g = J.transpose() * r;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(H);
    if (ldlt.info() != Eigen::Success) {
      rep.diverged = true;
      break;
    }
    const Eigen::VectorXd step = -ldlt.solve(g);
    if (!step.allFinite()) {
      rep.diverged = true;
      break;
    }
    rep.iterations = it + 1;
    double alpha = 1.0;
    bool improved = false;
    Values candidate;
    double new_cost = cost;
    for (int h = 0; h <= opt.max_step_halvings; ++h, alpha *= 0.5) {
      candidate = retract(v, alpha * step);
      new_cost = graph.cost(candidate);
      if (std::isfinite(new_cost) && new_cost <= cost) {
        improved = true;
        break;
      }
    }
    if (!improved) {
      // No descent left along the Gauss-Newton direction.
      rep.converged = g.norm() <= 1e-8 * std::max(1.0, cost);
      rep.diverged = !rep.converged;
      break;
    }
    const double decrease = cost - new_cost;
    v = std::move(candidate);
    cost = new_cost;
    graph.linearize(v, r, &J);
    if (decrease <= opt.relative_tolerance * std::max(cost, 1e-300) || cost < 1e-24) {
      rep.converged = true;
      break;
    }
  }
  rep.final_cost = cost;
  rep.chi2_normalized = cost / static_cast<double>(std::max(1L, rep.dof));
  return {v, rep};
}

struct VariableKey {
  enum class Kind { pose, beacon } kind;
  int index;
  static VariableKey pose(int i) { return {Kind::pose, i}; }
  static VariableKey beacon(int j) { return {Kind::beacon, j}; }
};

// Marginal covariance of the queried variables, taken from (JᵀJ)⁻¹ of the
// whitened Jacobian at `at`. Poses contribute 3 rows (x, y, θ), beacons 2.
inline Eigen::MatrixXd joint_covariance(const FactorGraph& graph, const Values& at,
                                        std::span<const VariableKey> query) {
  Eigen::VectorXd r;
  Eigen::MatrixXd J;
  graph.linearize(at, r, &J);
  const Eigen::MatrixXd info = J.transpose() * J;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(info);
  if (!lu.isInvertible()) throw EstimationError("joint_covariance: information matrix is singular");
  const Eigen::MatrixXd cov = lu.inverse();
  std::vector<Eigen::Index> cols;
  for (const auto& q : query) {
    if (q.kind == VariableKey::Kind::pose) {
      if (q.index < 0 || static_cast<std::size_t>(q.index) >= graph.num_poses())
        throw EstimationError("joint_covariance: unknown pose");
      for (int d = 0; d < 3; ++d) cols.push_back(static_cast<Eigen::Index>(FactorGraph::pose_col(q.index)) + d);
    } else {
      if (q.index < 0 || static_cast<std::size_t>(q.index) >= graph.num_beacons())
        throw EstimationError("joint_covariance: unknown beacon");
      for (int d = 0; d < 2; ++d) cols.push_back(static_cast<Eigen::Index>(graph.beacon_col(q.index)) + d);
    }
  }
  Eigen::MatrixXd out(cols.size(), cols.size());
  for (std::size_t a = 0; a < cols.size(); ++a)
    for (std::size_t b = 0; b < cols.size(); ++b) out(a, b) = cov(cols[a], cols[b]);
  return 0.5 * (out + out.transpose());
}

// Linear least-squares multilateration over all given circles (differences
// against the first circle). Empty when the centers do not span the plane.
inline std::optional<Vec2> multilaterate(std::span<const Vec2> centers, std::span<const double> ranges) {
  if (centers.size() < 3 || centers.size() != ranges.size()) return std::nullopt;
  const auto rows = static_cast<Eigen::Index>(centers.size() - 1);
  Eigen::MatrixXd A(rows, 2);
  Eigen::VectorXd b(rows);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const auto& c = centers[static_cast<std::size_t>(i) + 1];
    A.row(i) = 2.0 * (c - centers[0]).transpose();
    b(i) = ranges[0] * ranges[0] - ranges[static_cast<std::size_t>(i) + 1] * ranges[static_cast<std::size_t>(i) + 1] +
           c.squaredNorm() - centers[0].squaredNorm();
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  if (sv(1) <= 1e-9 * std::max(1.0, sv(0))) return std::nullopt;
  Vec2 l = svd.solve(b);
  if (!l.allFinite()) return std::nullopt;
  return l;
}

struct TrialResult {
  double trans_rmse = 0.0;
  double rot_rmse = 0.0;
  double beacon_error = 0.0;  // mean over estimated beacons, meters
  double residual = 0.0;      // final_cost of the solve
  double chi2 = 0.0;          // normalized
  double tpr = 0.0;
  double fpr = 0.0;
  std::size_t selected = 0;
  std::size_t true_positives = 0, false_positives = 0, true_negatives = 0, false_negatives = 0;
  bool converged = false;
  double select_seconds = 0.0;
  double solve_seconds = 0.0;
};

struct ConfusionCounts {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  double tpr() const { return tp + fn == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(tp + fn); }
  // No outliers at all: reported as 0.
  double fpr() const { return fp + tn == 0 ? 0.0 : static_cast<double>(fp) / static_cast<double>(fp + tn); }
};

inline ConfusionCounts confusion(const std::vector<bool>& selected, const std::vector<bool>& inlier) {
  if (selected.size() != inlier.size()) throw EstimationError("confusion: selection / label size mismatch");
  ConfusionCounts c;
  for (std::size_t i = 0; i < selected.size(); ++i) {
    if (selected[i]) (inlier[i] ? c.tp : c.fp)++;
    else (inlier[i] ? c.fn : c.tn)++;
  }
  return c;
}

// `beacon_truth[j]` is the ground-truth position matched to estimated beacon j.
inline TrialResult metrics(const Values& estimate, const std::vector<Pose2>& truth_poses,
                           const std::vector<Vec2>& beacon_truth, const std::vector<bool>& selected,
                           const std::vector<bool>& true_inliers) {
  if (estimate.poses.size() != truth_poses.size()) throw EstimationError("metrics: pose count mismatch");
  if (estimate.beacons.size() != beacon_truth.size()) throw EstimationError("metrics: beacon count mismatch");
  TrialResult out;
  double t2 = 0.0, r2 = 0.0;
  for (std::size_t i = 0; i < truth_poses.size(); ++i) {
    t2 += (estimate.poses[i].translation() - truth_poses[i].translation()).squaredNorm();
    const double dth = wrap_angle(estimate.poses[i].theta - truth_poses[i].theta);
    r2 += dth * dth;
  }
  const double n = std::max<double>(1.0, static_cast<double>(truth_poses.size()));
  out.trans_rmse = std::sqrt(t2 / n);
  out.rot_rmse = std::sqrt(r2 / n);
  double be = 0.0;
  for (std::size_t j = 0; j < beacon_truth.size(); ++j) be += (estimate.beacons[j] - beacon_truth[j]).norm();
  out.beacon_error = beacon_truth.empty() ? 0.0 : be / static_cast<double>(beacon_truth.size());
  const auto c = confusion(selected, true_inliers);
  out.true_positives = c.tp;
  out.false_positives = c.fp;
  out.true_negatives = c.tn;
  out.false_negatives = c.fn;
  out.tpr = c.tpr();
  out.fpr = c.fpr();
  out.selected = c.tp + c.fp;
  return out;
}

}  // namespace gkcm
