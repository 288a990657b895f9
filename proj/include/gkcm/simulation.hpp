#pragma once

// Seeded generation of simulated range-SLAM worlds and of random k-uniform
// hypergraphs with a planted clique.
//
// Randomness comes from std::mt19937_64, whose output sequence is fixed by
// the standard; uniform and normal variates are derived here rather than by
// the <random> distributions, whose algorithms differ between standard
// libraries. Each purpose draws from its own stream so that, for example,
// changing the outlier fraction leaves the trajectory and beacons untouched.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "gkcm/geometry.hpp"
#include "gkcm/hypergraph.hpp"

namespace gkcm {

class Rng {
 public:
  enum class Stream : std::uint64_t { trajectory = 1, beacons = 2, noise = 3, outliers = 4, graph = 5 };

  Rng(std::uint64_t seed, Stream stream) : engine_(mix(seed, static_cast<std::uint64_t>(stream))) {}
  explicit Rng(std::uint64_t seed) : engine_(mix(seed, 0)) {}

  std::uint64_t next() { return engine_(); }

  // [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Unbiased integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("Rng::below(0)");
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do x = engine_(); while (x >= limit);
    return x % n;
  }

  // Marsaglia polar method.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * f;
    has_spare_ = true;
    return u * f;
  }
  double normal(double mean, double sigma) { return mean + sigma * normal(); }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(i)]);
  }

 private:
  static std::uint64_t mix(std::uint64_t seed, std::uint64_t stream) {
    // splitmix64 finalizer over (seed, stream)
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

enum class TrajectoryKind { manhattan, circle, line };

inline const char* to_string(TrajectoryKind k) {
  switch (k) {
    case TrajectoryKind::manhattan: return "manhattan";
    case TrajectoryKind::circle: return "circle";
    case TrajectoryKind::line: return "line";
  }
  return "?";
}

inline TrajectoryKind trajectory_from_string(const std::string& s) {
  if (s == "manhattan") return TrajectoryKind::manhattan;
  if (s == "circle") return TrajectoryKind::circle;
  if (s == "line") return TrajectoryKind::line;
  throw std::invalid_argument("unknown trajectory kind '" + s + "'");
}

struct OdometrySigma {
  double x = 0.02;      // m
  double y = 0.02;      // m
  double theta = 0.005; // rad
};

struct WorldConfig {
  TrajectoryKind trajectory_kind = TrajectoryKind::manhattan;
  int pose_count = 100;
  int beacon_count = 1;
  double range_sigma = 0.1;
  OdometrySigma odom_sigma;
  double outlier_fraction = 0.8;
  int outlier_cluster_size = 5;
  std::uint64_t seed = 1;
  bool known_association = true;
  double step_length = 1.0;
  double turn_probability = 0.3;  // manhattan only
  double min_world_extent = 20.0; // beacon / fake-beacon box is at least this wide
};

class SimulationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SimulatedRange {
  int pose_id = 0;
  int beacon_id = 0;   // ground truth; only used by the selection when association is known
  double range = 0.0;
  double sigma = 0.0;
  bool is_true_inlier = true;
};

struct Dataset {
  static constexpr const char* kVersion = "gkcm-dataset/1";

  WorldConfig config;
  std::vector<Pose2> poses;      // ground truth
  std::vector<Beacon> beacons;   // ground truth
  std::vector<OdometryMeasurement> odometry;
  std::vector<SimulatedRange> ranges;

  std::vector<RangeMeasurement> range_measurements(bool with_association) const {
    std::vector<RangeMeasurement> out;
    out.reserve(ranges.size());
    for (const auto& r : ranges)
      out.push_back({r.pose_id, with_association ? r.beacon_id : kUnknownBeacon, r.range, r.sigma});
    return out;
  }

  std::vector<bool> inlier_mask() const {
    std::vector<bool> out;
    out.reserve(ranges.size());
    for (const auto& r : ranges) out.push_back(r.is_true_inlier);
    return out;
  }

  std::size_t outlier_count() const {
    return static_cast<std::size_t>(std::count_if(ranges.begin(), ranges.end(),
                                                   [](const SimulatedRange& r) { return !r.is_true_inlier; }));
  }
};

// Floors keep measurement covariances invertible in noiseless worlds.
constexpr double kMinRangeSigma = 1e-6;
constexpr double kMinOdomSigma = 1e-6;

namespace detail {

inline std::vector<Pose2> simulate_trajectory(const WorldConfig& cfg, Rng& rng) {
  std::vector<Pose2> poses{Pose2::identity()};
  const double step = cfg.step_length;
  for (int i = 1; i < cfg.pose_count; ++i) {
    Pose2 delta;
    switch (cfg.trajectory_kind) {
      case TrajectoryKind::manhattan: {
        double turn = 0.0;
        if (rng.uniform() < cfg.turn_probability) turn = rng.uniform() < 0.5 ? std::numbers::pi / 2 : -std::numbers::pi / 2;
        delta = Pose2(step, 0.0, turn);
        break;
      }
      case TrajectoryKind::circle: {
        const double dtheta = 2.0 * std::numbers::pi / cfg.pose_count;
        const double radius = step / (2.0 * std::sin(dtheta / 2.0));
        const double chord = 2.0 * radius * std::sin(dtheta / 2.0);
        // Chord of the circle, heading advanced by the full arc angle.
        delta = Pose2(chord * std::cos(dtheta / 2.0), chord * std::sin(dtheta / 2.0), dtheta);
        break;
      }
      case TrajectoryKind::line:
        delta = Pose2(step, 0.0, 0.0);
        break;
    }
    poses.push_back(compose(poses.back(), delta));
  }
  return poses;
}

struct Box {
  Vec2 lo, hi;
  Vec2 sample(Rng& rng) const { return {rng.uniform(lo.x(), hi.x()), rng.uniform(lo.y(), hi.y())}; }
};

// Bounding box of the trajectory, widened by 20% and to the minimum extent.
inline Box world_box(const std::vector<Pose2>& poses, double min_extent) {
  Vec2 lo = poses.front().translation(), hi = lo;
  for (const auto& p : poses) {
    lo = lo.cwiseMin(p.translation());
    hi = hi.cwiseMax(p.translation());
  }
  const Vec2 center = 0.5 * (lo + hi);
  Vec2 half = 0.5 * (hi - lo) * 1.2;
  half = half.cwiseMax(Vec2::Constant(0.5 * min_extent));
  return {center - half, center + half};
}

inline double positive_range(double r) { return std::max(r, 1e-3); }

}  // namespace detail

// Measurements are ordered pose-major: index = pose * beacon_count + beacon.
// Outliers: floor(n_out / 2 / cluster) clusters of `cluster` consecutive
// measurements to one beacon, each cluster consistent with its own random
// false beacon, and the remaining n_out − clusters·cluster as single
// measurements to independent false beacons, n_out = round(fraction · m).
inline Dataset generate_world(const WorldConfig& cfg) {
  if (cfg.pose_count < 4) throw SimulationError("pose_count must be >= 4");
  if (cfg.beacon_count < 1) throw SimulationError("beacon_count must be >= 1");
  if (!(cfg.outlier_fraction >= 0.0 && cfg.outlier_fraction < 1.0))
    throw SimulationError("outlier_fraction must lie in [0, 1)");
  if (cfg.outlier_cluster_size < 1) throw SimulationError("outlier_cluster_size must be >= 1");
  if (cfg.range_sigma < 0.0 || cfg.odom_sigma.x < 0.0 || cfg.odom_sigma.y < 0.0 || cfg.odom_sigma.theta < 0.0)
    throw SimulationError("noise sigmas must be non-negative");

  Dataset ds;
  ds.config = cfg;
  Rng traj_rng(cfg.seed, Rng::Stream::trajectory);
  Rng beacon_rng(cfg.seed, Rng::Stream::beacons);
  Rng noise_rng(cfg.seed, Rng::Stream::noise);
  Rng outlier_rng(cfg.seed, Rng::Stream::outliers);

  ds.poses = detail::simulate_trajectory(cfg, traj_rng);
  const auto box = detail::world_box(ds.poses, cfg.min_world_extent);
  for (int j = 0; j < cfg.beacon_count; ++j) ds.beacons.push_back({j, box.sample(beacon_rng)});

  const double sx = std::max(cfg.odom_sigma.x, kMinOdomSigma), sy = std::max(cfg.odom_sigma.y, kMinOdomSigma),
               st = std::max(cfg.odom_sigma.theta, kMinOdomSigma);
  for (int i = 0; i + 1 < cfg.pose_count; ++i) {
    const Pose2 truth = between(ds.poses[i], ds.poses[i + 1]);
    OdometryMeasurement z;
    z.from_id = i;
    z.to_id = i + 1;
    z.delta = Pose2(truth.x + traj_rng.normal(0.0, cfg.odom_sigma.x), truth.y + traj_rng.normal(0.0, cfg.odom_sigma.y),
                    truth.theta + traj_rng.normal(0.0, cfg.odom_sigma.theta));
    z.covariance = Eigen::Vector3d(sx * sx, sy * sy, st * st).asDiagonal();
    ds.odometry.push_back(z);
  }

  const double sigma = std::max(cfg.range_sigma, kMinRangeSigma);
  for (int i = 0; i < cfg.pose_count; ++i)
    for (int j = 0; j < cfg.beacon_count; ++j) {
      const double truth = (ds.poses[i].translation() - ds.beacons[j].position).norm();
      ds.ranges.push_back({i, j, detail::positive_range(truth + noise_rng.normal(0.0, cfg.range_sigma)), sigma, true});
    }

  const std::size_t m = ds.ranges.size();
  const auto n_out = static_cast<std::size_t>(std::llround(cfg.outlier_fraction * static_cast<double>(m)));
  if (n_out > m) throw SimulationError("more outliers than measurements");
  const auto cs = static_cast<std::size_t>(cfg.outlier_cluster_size);
  const std::size_t clusters = n_out / 2 / cs;
  const std::size_t singles = n_out - clusters * cs;

  auto index_of = [&](int pose, int beacon) {
    return static_cast<std::size_t>(pose) * static_cast<std::size_t>(cfg.beacon_count) + static_cast<std::size_t>(beacon);
  };
  std::vector<bool> corrupted(m, false);
  auto corrupt = [&](std::size_t idx, const Vec2& fake) {
    const auto& p = ds.poses[ds.ranges[idx].pose_id].translation();
    ds.ranges[idx].range = detail::positive_range((p - fake).norm() + outlier_rng.normal(0.0, cfg.range_sigma));
    ds.ranges[idx].is_true_inlier = false;
    corrupted[idx] = true;
  };
  auto run_free = [&](int beacon, int start) {
    for (std::size_t t = 0; t < cs; ++t)
      if (corrupted[index_of(start + static_cast<int>(t), beacon)]) return false;
    return true;
  };
  const int last_start = cfg.pose_count - static_cast<int>(cs);
  for (std::size_t c = 0; c < clusters; ++c) {
    if (last_start < 0) throw SimulationError("outlier cluster longer than the trajectory");
    int beacon = -1, start = -1;
    for (int attempt = 0; attempt < 1000 && start < 0; ++attempt) {
      const auto b = static_cast<int>(outlier_rng.below(static_cast<std::uint64_t>(cfg.beacon_count)));
      const auto s = static_cast<int>(outlier_rng.below(static_cast<std::uint64_t>(last_start + 1)));
      if (run_free(b, s)) {
        beacon = b;
        start = s;
      }
    }
    for (int b = 0; b < cfg.beacon_count && start < 0; ++b)
      for (int s = 0; s <= last_start && start < 0; ++s)
        if (run_free(b, s)) {
          beacon = b;
          start = s;
        }
    if (start < 0) throw SimulationError("cannot place outlier clusters; lower the outlier fraction");
    const Vec2 fake = box.sample(outlier_rng);
    for (std::size_t t = 0; t < cs; ++t) corrupt(index_of(start + static_cast<int>(t), beacon), fake);
  }
  std::vector<std::size_t> free_idx;
  for (std::size_t i = 0; i < m; ++i)
    if (!corrupted[i]) free_idx.push_back(i);
  if (singles > free_idx.size()) throw SimulationError("more outliers than measurements");
  outlier_rng.shuffle(free_idx);
  std::sort(free_idx.begin(), free_idx.begin() + static_cast<std::ptrdiff_t>(singles));
  for (std::size_t s = 0; s < singles; ++s) corrupt(free_idx[s], box.sample(outlier_rng));
  return ds;
}

struct PlantedGraphConfig {
  std::size_t k = 3;
  std::size_t n = 100;
  double density = 0.1;
  std::size_t planted_clique_size = 10;
  std::uint64_t seed = 1;
};

struct PlantedGraph {
  Hypergraph graph;
  std::vector<VertexId> planted;  // sorted
};

// All C(s, k) edges among s randomly chosen vertices, then uniformly random
// further edges until |E| = round(density · C(n, k)).
inline PlantedGraph generate_planted_hypergraph(const PlantedGraphConfig& cfg) {
  if (cfg.k < 2) throw SimulationError("k must be >= 2");
  if (cfg.planted_clique_size > cfg.n) throw SimulationError("planted clique larger than the graph");
  if (!(cfg.density >= 0.0 && cfg.density <= 1.0)) throw SimulationError("density must lie in [0, 1]");
  Rng rng(cfg.seed, Rng::Stream::graph);
  std::vector<VertexId> order(cfg.n);
  for (std::size_t i = 0; i < cfg.n; ++i) order[i] = static_cast<VertexId>(i);
  rng.shuffle(order);
  std::vector<VertexId> planted(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(cfg.planted_clique_size));
  std::sort(planted.begin(), planted.end());

  Hypergraph g(cfg.k, cfg.n);
  for_each_combination(planted, cfg.k, [&](std::span<const VertexId> t) { g.add_edge(HyperEdge(Tuple(t.begin(), t.end()))); });

  const std::uint64_t total = binomial(cfg.n, cfg.k);
  const auto target = static_cast<std::uint64_t>(std::llround(cfg.density * static_cast<double>(total)));
  if (target < g.num_edges())
    throw SimulationError("density " + std::to_string(cfg.density) + " is below the planted clique's own " +
                          std::to_string(g.num_edges()) + " edges");
  if (target * 2 <= total) {
    Tuple t(cfg.k);
    while (g.num_edges() < target) {
      // Random k-subset by partial Fisher-Yates over the vertex ids.
      for (std::size_t i = 0; i < cfg.k; ++i) {
        bool fresh;
        do {
          t[i] = static_cast<VertexId>(rng.below(cfg.n));
          fresh = std::find(t.begin(), t.begin() + static_cast<std::ptrdiff_t>(i), t[i]) ==
                  t.begin() + static_cast<std::ptrdiff_t>(i);
        } while (!fresh);
      }
      g.add_edge(HyperEdge(t));
    }
  } else {
    std::vector<Tuple> absent;
    std::vector<VertexId> all(cfg.n);
    for (std::size_t i = 0; i < cfg.n; ++i) all[i] = static_cast<VertexId>(i);
    for_each_combination(all, cfg.k, [&](std::span<const VertexId> t) {
      if (!g.has_edge(t)) absent.emplace_back(t.begin(), t.end());
    });
    rng.shuffle(absent);
    for (std::size_t i = 0; g.num_edges() < target; ++i) g.add_edge(HyperEdge(absent[i]));
  }
  return {std::move(g), std::move(planted)};
}

// Dataset file: JSON with a version tag and sections config, poses, beacons,
// odometry, ranges. Doubles are written in shortest round-trip form, so
// write → read → write is byte-identical.
inline nlohmann::json to_json(const Dataset& ds) {
  using nlohmann::json;
  const auto& c = ds.config;
  json out;
  out["version"] = Dataset::kVersion;
  out["config"] = {
      {"trajectory_kind", to_string(c.trajectory_kind)},
      {"pose_count", c.pose_count},
      {"beacon_count", c.beacon_count},
      {"range_sigma", c.range_sigma},
      {"odom_sigma", {c.odom_sigma.x, c.odom_sigma.y, c.odom_sigma.theta}},
      {"outlier_fraction", c.outlier_fraction},
      {"outlier_cluster_size", c.outlier_cluster_size},
      {"seed", c.seed},
      {"known_association", c.known_association},
      {"step_length", c.step_length},
      {"turn_probability", c.turn_probability},
      {"min_world_extent", c.min_world_extent},
  };
  json poses = json::array();
  for (const auto& p : ds.poses) poses.push_back({p.x, p.y, p.theta});
  out["poses"] = std::move(poses);
  json beacons = json::array();
  for (const auto& b : ds.beacons) beacons.push_back({{"id", b.id}, {"position", {b.position.x(), b.position.y()}}});
  out["beacons"] = std::move(beacons);
  json odom = json::array();
  for (const auto& z : ds.odometry) {
    json cov = json::array();
    for (int r = 0; r < 3; ++r)
      for (int col = 0; col < 3; ++col) cov.push_back(z.covariance(r, col));
    odom.push_back({{"from_id", z.from_id},
                    {"to_id", z.to_id},
                    {"delta", {z.delta.x, z.delta.y, z.delta.theta}},
                    {"covariance", std::move(cov)}});
  }
  out["odometry"] = std::move(odom);
  json ranges = json::array();
  for (const auto& r : ds.ranges)
    ranges.push_back({{"pose_id", r.pose_id},
                      {"beacon_id", r.beacon_id},
                      {"range", r.range},
                      {"sigma", r.sigma},
                      {"is_true_inlier", r.is_true_inlier}});
  out["ranges"] = std::move(ranges);
  return out;
}

inline Dataset dataset_from_json(const nlohmann::json& j) {
  if (j.value("version", std::string{}) != Dataset::kVersion)
    throw SimulationError("unsupported dataset version '" + j.value("version", std::string{}) + "'");
  Dataset ds;
  const auto& c = j.at("config");
  auto& cfg = ds.config;
  cfg.trajectory_kind = trajectory_from_string(c.at("trajectory_kind").get<std::string>());
  cfg.pose_count = c.at("pose_count").get<int>();
  cfg.beacon_count = c.at("beacon_count").get<int>();
  cfg.range_sigma = c.at("range_sigma").get<double>();
  const auto& os = c.at("odom_sigma");
  cfg.odom_sigma = {os.at(0).get<double>(), os.at(1).get<double>(), os.at(2).get<double>()};
  cfg.outlier_fraction = c.at("outlier_fraction").get<double>();
  cfg.outlier_cluster_size = c.at("outlier_cluster_size").get<int>();
  cfg.seed = c.at("seed").get<std::uint64_t>();
  cfg.known_association = c.at("known_association").get<bool>();
  cfg.step_length = c.at("step_length").get<double>();
  cfg.turn_probability = c.at("turn_probability").get<double>();
  cfg.min_world_extent = c.at("min_world_extent").get<double>();
  for (const auto& p : j.at("poses")) {
    Pose2 pose;
    pose.x = p.at(0).get<double>();
    pose.y = p.at(1).get<double>();
    pose.theta = p.at(2).get<double>();
    ds.poses.push_back(pose);
  }
  for (const auto& b : j.at("beacons"))
    ds.beacons.push_back({b.at("id").get<int>(), Vec2(b.at("position").at(0).get<double>(), b.at("position").at(1).get<double>())});
  for (const auto& z : j.at("odometry")) {
    OdometryMeasurement m;
    m.from_id = z.at("from_id").get<int>();
    m.to_id = z.at("to_id").get<int>();
    const auto& d = z.at("delta");
    m.delta.x = d.at(0).get<double>();
    m.delta.y = d.at(1).get<double>();
    m.delta.theta = d.at(2).get<double>();
    const auto& cov = z.at("covariance");
    for (int r = 0; r < 3; ++r)
      for (int col = 0; col < 3; ++col) m.covariance(r, col) = cov.at(static_cast<std::size_t>(3 * r + col)).get<double>();
    ds.odometry.push_back(m);
  }
  for (const auto& r : j.at("ranges"))
    ds.ranges.push_back({r.at("pose_id").get<int>(), r.at("beacon_id").get<int>(), r.at("range").get<double>(),
                         r.at("sigma").get<double>(), r.at("is_true_inlier").get<bool>()});
  if (ds.poses.size() != static_cast<std::size_t>(cfg.pose_count))
    throw SimulationError("dataset pose count does not match its config");
  return ds;
}

}  // namespace gkcm
