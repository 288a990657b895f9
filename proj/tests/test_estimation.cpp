#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "gkcm/estimation.hpp"
#include "oracles.hpp"

using namespace gkcm;

namespace {

std::vector<Pose2> random_walk(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> turn(-0.6, 0.6);
  std::vector<Pose2> poses{Pose2()};
  for (std::size_t i = 1; i < n; ++i) poses.push_back(compose(poses.back(), Pose2(1.0, 0.0, turn(rng))));
  return poses;
}

struct Problem {
  FactorGraph graph;
  Values truth;
};

// A trajectory observing two beacons, with the ranges optionally perturbed.
Problem make_problem(std::uint64_t seed, double range_noise, double odom_noise) {
  std::mt19937_64 rng(seed);
  const auto poses = random_walk(rng, 25);
  const std::vector<Vec2> beacons{Vec2(4.0, 6.0), Vec2(-3.0, 8.0)};
  Problem p{FactorGraph(poses.size(), beacons.size()), {poses, beacons}};
  p.graph.add(PriorFactor{0, poses[0]});
  std::normal_distribution<double> n(0.0, 1.0);
  const Eigen::Matrix3d q = Eigen::Vector3d(0.02, 0.02, 0.005).array().square().matrix().asDiagonal();
  for (std::size_t i = 0; i + 1 < poses.size(); ++i) {
    Pose2 d = between(poses[i], poses[i + 1]);
    d = Pose2(d.x + odom_noise * 0.02 * n(rng), d.y + odom_noise * 0.02 * n(rng), d.theta + odom_noise * 0.005 * n(rng));
    p.graph.add(OdometryFactor{static_cast<int>(i), static_cast<int>(i) + 1, d, q});
  }
  for (std::size_t i = 0; i < poses.size(); ++i)
    for (int j = 0; j < 2; ++j) {
      const double r = (poses[i].translation() - beacons[static_cast<std::size_t>(j)]).norm();
      p.graph.add(RangeFactor{static_cast<int>(i), j, r + range_noise * 0.1 * n(rng), 0.1});
    }
  return p;
}

Values dead_reckoned_init(const Problem& p) {
  Values v;
  std::vector<OdometryMeasurement> odo;
  for (const auto& f : p.graph.odometry()) odo.push_back({f.from, f.to, f.delta, f.covariance});
  v.poses = dead_reckon(odo, p.truth.poses[0]);
  v.beacons = {p.truth.beacons[0] + Vec2(0.5, -0.4), p.truth.beacons[1] + Vec2(-0.3, 0.6)};
  return v;
}

}  // namespace

TEST(DeadReckon, EmptyAndStraightLine) {
  EXPECT_EQ(dead_reckon({}, Pose2(1, 2, 0.5)), (std::vector<Pose2>{Pose2(1, 2, 0.5)}));
  std::vector<OdometryMeasurement> odo;
  for (int i = 0; i < 10; ++i) odo.push_back({i, i + 1, Pose2(1.0, 0.0, 0.0), Eigen::Matrix3d::Identity()});
  const auto poses = dead_reckon(odo, Pose2());
  ASSERT_EQ(poses.size(), 11u);
  for (int i = 0; i <= 10; ++i) {
    EXPECT_NEAR(poses[static_cast<std::size_t>(i)].x, i, 1e-12);
    EXPECT_NEAR(poses[static_cast<std::size_t>(i)].y, 0.0, 1e-12);
  }
}

TEST(DeadReckon, RandomChainRoundTrip) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  std::vector<OdometryMeasurement> odo;
  for (int i = 0; i < 200; ++i) odo.push_back({i, i + 1, Pose2(u(rng), u(rng), u(rng)), Eigen::Matrix3d::Identity()});
  const auto poses = dead_reckon(odo, Pose2(3, -1, 0.2));
  for (std::size_t i = 0; i < odo.size(); ++i) {
    const Pose2 d = between(poses[i], poses[i + 1]);
    EXPECT_NEAR(d.x, odo[i].delta.x, 1e-12);
    EXPECT_NEAR(d.y, odo[i].delta.y, 1e-12);
    EXPECT_NEAR(std::remainder(d.theta - odo[i].delta.theta, 2 * std::numbers::pi), 0.0, 1e-12);
  }
}

TEST(DeadReckon, BrokenChain) {
  std::vector<OdometryMeasurement> odo{{0, 1, Pose2(), Eigen::Matrix3d::Identity()},
                                       {2, 3, Pose2(), Eigen::Matrix3d::Identity()}};
  EXPECT_THROW(dead_reckon(odo, Pose2()), EstimationError);
}

TEST(JointCovariance, SinglePosePrior) {
  FactorGraph g(1, 0);
  Eigen::Matrix3d P;
  P << 0.5, 0.1, 0.0, 0.1, 0.4, 0.05, 0.0, 0.05, 0.2;
  g.add(PriorFactor{0, Pose2(), P});
  const VariableKey q[] = {VariableKey::pose(0)};
  const auto cov = joint_covariance(g, Values{{Pose2()}, {}}, q);
  EXPECT_LT((cov - P).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(JointCovariance, TwoPosesMatchCompounding) {
  const Pose2 x0(1.0, 2.0, 0.3);
  const Pose2 delta(2.0, 0.5, 0.4);
  const Pose2 x1 = compose(x0, delta);
  Eigen::Matrix3d P0 = Eigen::Vector3d(0.01, 0.02, 0.003).asDiagonal();
  Eigen::Matrix3d Q = Eigen::Vector3d(0.04, 0.01, 0.002).asDiagonal();
  FactorGraph g(2, 0);
  g.add(PriorFactor{0, x0, P0});
  g.add(OdometryFactor{0, 1, delta, Q});
  const VariableKey q[] = {VariableKey::pose(1)};
  const auto cov = joint_covariance(g, Values{{x0, x1}, {}}, q);
  // x1 = x0 ⊕ Δ: F = ∂/∂x0, G = ∂/∂Δ.
  const double c = std::cos(x0.theta), s = std::sin(x0.theta);
  Eigen::Matrix3d F = Eigen::Matrix3d::Identity();
  F(0, 2) = -s * delta.x - c * delta.y;
  F(1, 2) = c * delta.x - s * delta.y;
  Eigen::Matrix3d G = Eigen::Matrix3d::Identity();
  G(0, 0) = c;
  G(0, 1) = -s;
  G(1, 0) = s;
  G(1, 1) = c;
  const Eigen::Matrix3d expected = F * P0 * F.transpose() + G * Q * G.transpose();
  EXPECT_LT((cov - expected).cwiseAbs().maxCoeff(), 1e-9);

  const auto ctx = dead_reckon_with_covariance(std::vector<OdometryMeasurement>{{0, 1, delta, Q}}, x0, P0);
  EXPECT_LT((ctx.covariance(1) - expected).cwiseAbs().maxCoeff(), 1e-12);
  const VariableKey both[] = {VariableKey::pose(0), VariableKey::pose(1)};
  const auto joint = joint_covariance(g, Values{{x0, x1}, {}}, both);
  EXPECT_LT((joint.block<3, 3>(0, 3) - ctx.cross_covariance(0, 1)).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(JointCovariance, SymmetricPositiveDefiniteAndMatchesNumericPropagation) {
  auto p = make_problem(3, 0.0, 0.0);
  const VariableKey q[] = {VariableKey::pose(2), VariableKey::pose(9), VariableKey::beacon(0)};
  const auto cov = joint_covariance(p.graph, p.truth, q);
  EXPECT_LT((cov - cov.transpose()).cwiseAbs().maxCoeff(), 1e-12);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  EXPECT_GT(eig.eigenvalues().minCoeff(), 0.0);

  // Numeric oracle: Jacobian of the whitened residual stack by central
  // differences, then the same marginal of (JᵀJ)⁻¹.
  Eigen::VectorXd r0;
  p.graph.linearize(p.truth, r0, nullptr);
  const auto dim = static_cast<Eigen::Index>(p.graph.dimension());
  Eigen::MatrixXd J(r0.size(), dim);
  const double h = 1e-6;
  for (Eigen::Index c = 0; c < dim; ++c) {
    Eigen::VectorXd d = Eigen::VectorXd::Zero(dim);
    d(c) = h;
    Eigen::VectorXd rp, rm;
    p.graph.linearize(retract(p.truth, d), rp, nullptr);
    p.graph.linearize(retract(p.truth, -d), rm, nullptr);
    J.col(c) = (rp - rm) / (2 * h);
  }
  const Eigen::MatrixXd full = (J.transpose() * J).inverse();
  const std::vector<Eigen::Index> cols{6, 7, 8, 27, 28, 29, 75, 76};
  Eigen::MatrixXd want(8, 8);
  for (int a = 0; a < 8; ++a)
    for (int b = 0; b < 8; ++b) want(a, b) = full(cols[static_cast<std::size_t>(a)], cols[static_cast<std::size_t>(b)]);
  EXPECT_LT((cov - want).cwiseAbs().maxCoeff() / want.cwiseAbs().maxCoeff(), 1e-4);
}

TEST(JointCovariance, UnderConstrainedIsError) {
  FactorGraph g(2, 0);
  g.add(PriorFactor{0, Pose2()});
  const VariableKey q[] = {VariableKey::pose(1)};
  EXPECT_THROW(joint_covariance(g, Values{{Pose2(), Pose2()}, {}}, q), EstimationError);
}

TEST(FactorJacobians, MatchFiniteDifferences) {
  auto p = make_problem(4, 1.0, 1.0);
  Values at = dead_reckoned_init(p);
  Eigen::VectorXd r0;
  Eigen::MatrixXd J;
  p.graph.linearize(at, r0, &J);
  const auto dim = static_cast<Eigen::Index>(p.graph.dimension());
  const double h = 1e-6;
  double worst = 0.0;
  for (Eigen::Index c = 0; c < dim; ++c) {
    Eigen::VectorXd d = Eigen::VectorXd::Zero(dim);
    d(c) = h;
    Eigen::VectorXd rp, rm;
    p.graph.linearize(retract(at, d), rp, nullptr);
    p.graph.linearize(retract(at, -d), rm, nullptr);
    const Eigen::VectorXd num = (rp - rm) / (2 * h);
    worst = std::max(worst, (num - J.col(c)).cwiseAbs().maxCoeff() / std::max(1.0, num.cwiseAbs().maxCoeff()));
  }
  EXPECT_LT(worst, 1e-5);
}

TEST(GaussNewton, AtOptimum) {
  auto p = make_problem(5, 0.0, 0.0);
  const auto [v, rep] = gauss_newton_solve(p.graph, p.truth);
  EXPECT_LE(rep.iterations, 1);
  EXPECT_NEAR(rep.final_cost, 0.0, 1e-18);
  EXPECT_TRUE(rep.converged);
}

TEST(GaussNewton, NoiselessRecoversBeacons) {
  auto p = make_problem(6, 0.0, 0.0);
  const auto [v, rep] = gauss_newton_solve(p.graph, dead_reckoned_init(p));
  EXPECT_TRUE(rep.converged);
  for (int j = 0; j < 2; ++j) EXPECT_LT((v.beacons[static_cast<std::size_t>(j)] - p.truth.beacons[static_cast<std::size_t>(j)]).norm(), 1e-6);
  EXPECT_LT(rep.final_cost, 1e-12);
}

TEST(GaussNewton, NoisyInliersAreCalibrated) {
  int pass = 0;
  double mean = 0.0;
  const int trials = 60;
  for (int t = 0; t < trials; ++t) {
    auto p = make_problem(100 + static_cast<std::uint64_t>(t), 1.0, 1.0);
    const auto [v, rep] = gauss_newton_solve(p.graph, dead_reckoned_init(p));
    EXPECT_TRUE(rep.converged);
    EXPECT_EQ(rep.dof, static_cast<long>(p.graph.residual_dimension()) - static_cast<long>(p.graph.dimension()));
    if (rep.chi2_normalized < 3.84) ++pass;
    mean += rep.chi2_normalized / trials;
  }
  EXPECT_GE(pass, static_cast<int>(0.95 * trials));
  EXPECT_NEAR(mean, 1.0, 0.3);
}

TEST(GaussNewton, GaugeInvariance) {
  auto p = make_problem(7, 1.0, 1.0);
  const Values init = dead_reckoned_init(p);
  const auto [v0, rep0] = gauss_newton_solve(p.graph, init);

  const Pose2 T(5.0, -3.0, 0.8);
  auto moved_pose = [&](const Pose2& x) { return compose(T, x); };
  auto moved_point = [&](const Vec2& l) { return Vec2(T.rotation() * l + T.translation()); };
  FactorGraph g(p.graph.num_poses(), p.graph.num_beacons());
  for (auto f : p.graph.priors()) {
    f.mean = moved_pose(f.mean);
    g.add(f);
  }
  for (const auto& f : p.graph.odometry()) g.add(f);
  for (const auto& f : p.graph.ranges()) g.add(f);
  Values init2 = init;
  for (auto& x : init2.poses) x = moved_pose(x);
  for (auto& l : init2.beacons) l = moved_point(l);
  const auto [v1, rep1] = gauss_newton_solve(g, init2);
  EXPECT_NEAR(rep1.final_cost, rep0.final_cost, 1e-6 * std::max(1.0, rep0.final_cost));
}

TEST(GaussNewton, RequiresPrior) {
  FactorGraph g(1, 0);
  EXPECT_THROW(gauss_newton_solve(g, Values{{Pose2()}, {}}), EstimationError);
}

TEST(Metrics, PerfectEstimate) {
  std::mt19937_64 rng(8);
  const auto poses = random_walk(rng, 10);
  const std::vector<Vec2> beacons{Vec2(1, 1)};
  const std::vector<bool> inl{true, false, true, true, false};
  const auto r = metrics(Values{poses, beacons}, poses, beacons, inl, inl);
  EXPECT_EQ(r.trans_rmse, 0.0);
  EXPECT_EQ(r.rot_rmse, 0.0);
  EXPECT_EQ(r.beacon_error, 0.0);
  EXPECT_EQ(r.tpr, 1.0);
  EXPECT_EQ(r.fpr, 0.0);
}

TEST(Metrics, SelectAllGivesFullFalsePositiveRate) {
  std::vector<bool> inl(100, false);
  for (int i = 0; i < 20; ++i) inl[static_cast<std::size_t>(i)] = true;
  const std::vector<bool> all(100, true);
  const auto r = metrics(Values{{Pose2()}, {}}, {Pose2()}, {}, all, inl);
  EXPECT_EQ(r.fpr, 1.0);
  EXPECT_EQ(r.tpr, 1.0);
}

TEST(Metrics, RatesMatchRecount) {
  std::mt19937_64 rng(9);
  std::bernoulli_distribution coin(0.5);
  for (int t = 0; t < 200; ++t) {
    std::vector<bool> sel(30), inl(30);
    for (int i = 0; i < 30; ++i) {
      sel[static_cast<std::size_t>(i)] = coin(rng);
      inl[static_cast<std::size_t>(i)] = coin(rng);
    }
    const auto r = metrics(Values{{Pose2()}, {}}, {Pose2()}, {}, sel, inl);
    const auto c = oracle::recount(sel, inl);
    EXPECT_EQ(r.true_positives, c.tp);
    EXPECT_EQ(r.false_positives, c.fp);
    if (c.tp + c.fn) {
      EXPECT_DOUBLE_EQ(r.tpr, static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn));
    }
    if (c.fp + c.tn) {
      EXPECT_DOUBLE_EQ(r.fpr, static_cast<double>(c.fp) / static_cast<double>(c.fp + c.tn));
    }
  }
}

TEST(Metrics, RotationErrorIsWrapped) {
  const std::vector<Pose2> truth{Pose2(0, 0, 3.1)};
  const auto r = metrics(Values{{Pose2(0, 0, -3.1)}, {}}, truth, {}, {}, {});
  EXPECT_NEAR(r.rot_rmse, 2 * std::numbers::pi - 6.2, 1e-12);
  EXPECT_THROW(metrics(Values{{}, {}}, truth, {}, {}, {}), EstimationError);
}

TEST(Multilaterate, RecoversBeacon) {
  const std::vector<Vec2> c{Vec2(0, 0), Vec2(10, 0), Vec2(0, 10), Vec2(7, 7)};
  const Vec2 b(3, 4);
  std::vector<double> r;
  for (const auto& x : c) r.push_back((x - b).norm());
  const auto l = multilaterate(c, r);
  ASSERT_TRUE(l);
  EXPECT_LT((*l - b).norm(), 1e-9);
  const std::vector<Vec2> line{Vec2(0, 0), Vec2(1, 0), Vec2(2, 0)};
  EXPECT_FALSE(multilaterate(line, std::vector<double>{1, 1, 1}));
}
