#pragma once

// End-to-end pipeline (simulate → select → solve → score) and the experiment
// runners behind the command-line tool.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "gkcm/consistency.hpp"
#include "gkcm/estimation.hpp"
#include "gkcm/maxclique.hpp"
#include "gkcm/range_consistency.hpp"
#include "gkcm/simulation.hpp"

namespace gkcm {

enum class Method { gkcm, pcm };

inline const char* to_string(Method m) { return m == Method::gkcm ? "gkcm" : "pcm"; }

inline std::vector<Method> methods_from_string(const std::string& s) {
  if (s == "gkcm") return {Method::gkcm};
  if (s == "pcm") return {Method::pcm};
  if (s == "both") return {Method::gkcm, Method::pcm};
  throw std::invalid_argument("unknown method '" + s + "'");
}

using Clock = std::chrono::steady_clock;

inline double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// ---------------------------------------------------------------- selection

struct SelectionConfig {
  Method method = Method::gkcm;
  double confidence = 0.95;
  SearchMode mode = SearchMode::heuristic;
  unsigned threads = 1;
  // Hidden associations: one joint graph, top-n disjoint cliques.
  bool known_association = true;
  std::size_t beacon_count = 1;  // n for the top-n search when associations are hidden
};

struct Selection {
  std::vector<bool> selected;          // per measurement
  std::vector<Clique> cliques;         // vertex ids are measurement indices
  std::vector<int> clique_beacon;      // beacon id per clique under known association, else kUnknownBeacon
  std::size_t edges = 0;
  BuildReport build;
  double search_seconds = 0.0;
  double seconds = 0.0;
};

inline RangeConsistency make_consistency(const Dataset& ds, Method method, double confidence, bool known_association,
                                         std::shared_ptr<const TrajectoryContext> ctx) {
  RangeConsistencyConfig rc;
  rc.check = method == Method::gkcm ? RangeCheck::group4 : RangeCheck::pairwise;
  rc.gamma = chi2_threshold(confidence);
  rc.known_association = known_association;
  return RangeConsistency(ds.range_measurements(known_association), std::move(ctx), rc);
}

inline std::shared_ptr<const TrajectoryContext> dead_reckoned_context(const Dataset& ds) {
  return std::make_shared<const TrajectoryContext>(dead_reckon_with_covariance(ds.odometry, ds.poses.front()));
}

// Cliques with fewer than k members carry no consistency evidence and are
// not selected.
inline Selection select_measurements(const Dataset& ds, const SelectionConfig& cfg) {
  const auto t0 = Clock::now();
  Selection out;
  const auto f = make_consistency(ds, cfg.method, cfg.confidence, cfg.known_association, dead_reckoned_context(ds));
  BuildOptions bo;
  bo.threads = cfg.threads;
  const Hypergraph g = build_graph_batch(f, bo, &out.build);
  out.edges = g.num_edges();
  out.selected.assign(f.size(), false);

  SearchConfig sc;
  sc.mode = cfg.mode;
  sc.threads = cfg.threads;
  const auto ts = Clock::now();
  auto accept = [&](const Clique& c, int beacon) {
    if (c.size() < g.k()) return;
    for (auto v : c.vertices) out.selected[v] = true;
    out.cliques.push_back(c);
    out.clique_beacon.push_back(beacon);
  };
  if (cfg.known_association) {
    for (const auto& members : detail::groups_of(f, f.size())) {
      const Hypergraph sub = g.induced(members);
      Clique c = max_clique(sub, sc);
      for (auto& v : c.vertices) v = members[v];
      accept(c, f.group_of(members.front()));
    }
  } else {
    sc.top_n = std::max<std::size_t>(1, cfg.beacon_count);
    for (const auto& c : top_n_disjoint_cliques(g, sc)) accept(c, kUnknownBeacon);
  }
  out.search_seconds = seconds_since(ts);
  out.seconds = seconds_since(t0);
  return out;
}

// -------------------------------------------------------------------- solve

namespace detail {

inline int majority_label(const Dataset& ds, const Clique& c) {
  std::map<int, int> votes;
  for (auto v : c.vertices) ++votes[ds.ranges[v].beacon_id];
  int best = kUnknownBeacon, count = 0;
  for (const auto& [label, n] : votes)
    if (n > count) {
      best = label;
      count = n;
    }
  return best;
}

}  // namespace detail

// Gauss-Newton over odometry plus the selected ranges, initialised by dead
// reckoning and least-squares multilateration. A clique needs three members
// to place its beacon; smaller cliques stay selected but are not solved.
inline TrialResult solve_selection(const Dataset& ds, const Selection& sel, const SolverOptions& opt = {}) {
  const auto t0 = Clock::now();
  const auto dr = dead_reckon(ds.odometry, ds.poses.front());
  std::vector<const Clique*> solvable;
  std::vector<int> labels;
  for (std::size_t c = 0; c < sel.cliques.size(); ++c) {
    if (sel.cliques[c].size() < 3) continue;
    solvable.push_back(&sel.cliques[c]);
    labels.push_back(sel.clique_beacon[c] != kUnknownBeacon ? sel.clique_beacon[c]
                                                           : detail::majority_label(ds, sel.cliques[c]));
  }
  FactorGraph graph(ds.poses.size(), solvable.size());
  graph.add(PriorFactor{0, ds.poses.front(), Eigen::Matrix3d::Identity() * 1e-6});
  for (const auto& z : ds.odometry) graph.add(OdometryFactor{z.from_id, z.to_id, z.delta, z.covariance});
  Values init;
  init.poses = dr;
  std::vector<Vec2> beacon_truth;
  for (std::size_t b = 0; b < solvable.size(); ++b) {
    std::vector<Vec2> centers;
    std::vector<double> ranges;
    for (auto v : solvable[b]->vertices) {
      const auto& r = ds.ranges[v];
      centers.push_back(dr[static_cast<std::size_t>(r.pose_id)].translation());
      ranges.push_back(r.range);
      graph.add(RangeFactor{r.pose_id, static_cast<int>(b), r.range, r.sigma});
    }
    const auto guess = multilaterate(centers, ranges);
    init.beacons.push_back(guess ? *guess : centers.front() + Vec2(ranges.front(), 0.0));
    beacon_truth.push_back(ds.beacons[static_cast<std::size_t>(labels[b])].position);
  }
  auto [estimate, rep] = gauss_newton_solve(graph, init, opt);
  TrialResult out = metrics(estimate, ds.poses, beacon_truth, sel.selected, ds.inlier_mask());
  out.residual = rep.final_cost;
  out.chi2 = rep.chi2_normalized;
  out.converged = rep.converged;
  out.select_seconds = sel.seconds;
  out.solve_seconds = seconds_since(t0);
  return out;
}

inline TrialResult run_trial(const Dataset& ds, const SelectionConfig& cfg) {
  return solve_selection(ds, select_measurements(ds, cfg));
}

// -------------------------------------------------------------- statistics

struct Summary {
  double mean = 0.0, stddev = 0.0, median = 0.0;
  std::size_t count = 0;
};

inline Summary summarize(std::vector<double> x) {
  Summary s;
  s.count = x.size();
  if (x.empty()) return s;
  s.mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
  double ss = 0.0;
  for (double v : x) ss += (v - s.mean) * (v - s.mean);
  s.stddev = x.size() > 1 ? std::sqrt(ss / static_cast<double>(x.size() - 1)) : 0.0;
  std::sort(x.begin(), x.end());
  const std::size_t h = x.size() / 2;
  s.median = x.size() % 2 ? x[h] : 0.5 * (x[h - 1] + x[h]);
  return s;
}

// Fractional (average) ranks, 1-based.
inline std::vector<double> ranks(const std::vector<double>& x) {
  std::vector<std::size_t> idx(x.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> r(x.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && x[idx[j + 1]] == x[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) r[idx[t]] = avg;
    i = j + 1;
  }
  return r;
}

// Pearson correlation of the ranks; 0 when either side is constant.
inline double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("spearman: need two equal-length samples");
  const auto rx = ranks(x), ry = ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n, my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  return sxx == 0.0 || syy == 0.0 ? 0.0 : sxy / std::sqrt(sxx * syy);
}

// Runs body(i) for i in [0, count) on `threads` workers. Results must be
// written to per-index slots, which keeps outputs independent of scheduling.
template <typename Body>
void parallel_trials(std::size_t count, unsigned threads, Body&& body) {
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(1, count))));
  if (threads == 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(threads);
  {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t)
      pool.emplace_back([&, t] {
        try {
          for (std::size_t i; (i = next.fetch_add(1)) < count;) body(i);
        } catch (...) {
          errors[t] = std::current_exception();
          next = count;
        }
      });
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

inline std::uint64_t trial_seed(std::uint64_t base, std::size_t trial) { return base + trial; }

// ------------------------------------------------------------- experiments

struct ExperimentSpec {
  int trials = 30;
  std::vector<Method> methods{Method::gkcm, Method::pcm};
  unsigned threads = 1;
  std::uint64_t seed = 1;
  double confidence = 0.95;
  SearchMode mode = SearchMode::heuristic;
};

inline void validate(const ExperimentSpec& s) {
  if (s.trials < 1) throw std::invalid_argument("trials must be >= 1");
  if (s.methods.empty()) throw std::invalid_argument("no method selected");
  if (!(s.confidence > 0.0 && s.confidence < 1.0)) throw std::invalid_argument("confidence must lie in (0, 1)");
}

struct MethodTrial {
  Method method = Method::gkcm;
  int trial = 0;
  std::uint64_t seed = 0;
  TrialResult result;
};

struct MethodSummary {
  Summary trans_rmse, rot_rmse, beacon_error, residual, chi2, tpr, fpr, selected;
  std::size_t diverged = 0;
};

inline MethodSummary summarize(const std::vector<MethodTrial>& rows, Method m) {
  std::vector<double> c[8];
  MethodSummary s;
  for (const auto& r : rows) {
    if (r.method != m) continue;
    const auto& t = r.result;
    const double v[8] = {t.trans_rmse, t.rot_rmse, t.beacon_error, t.residual, t.chi2, t.tpr, t.fpr,
                         static_cast<double>(t.selected)};
    for (int i = 0; i < 8; ++i) c[i].push_back(v[i]);
    if (!t.converged) ++s.diverged;
  }
  s.trans_rmse = summarize(c[0]);
  s.rot_rmse = summarize(c[1]);
  s.beacon_error = summarize(c[2]);
  s.residual = summarize(c[3]);
  s.chi2 = summarize(c[4]);
  s.tpr = summarize(c[5]);
  s.fpr = summarize(c[6]);
  s.selected = summarize(c[7]);
  return s;
}

struct MonteCarloResult {
  std::vector<MethodTrial> trials;  // trial-major, methods in ExperimentSpec::methods order
  std::map<Method, MethodSummary> summary;
};

// One world per trial (seed + trial); every method sees the same world.
inline MonteCarloResult run_montecarlo(const ExperimentSpec& spec, const WorldConfig& world,
                                       bool known_association = true) {
  validate(spec);
  const std::size_t nm = spec.methods.size();
  MonteCarloResult out;
  out.trials.resize(static_cast<std::size_t>(spec.trials) * nm);
  const unsigned inner = spec.trials == 1 ? spec.threads : 1u;
  parallel_trials(static_cast<std::size_t>(spec.trials), spec.threads, [&](std::size_t t) {
    WorldConfig w = world;
    w.seed = trial_seed(spec.seed, t);
    w.known_association = known_association;
    const Dataset ds = generate_world(w);
    for (std::size_t mi = 0; mi < nm; ++mi) {
      SelectionConfig sc;
      sc.method = spec.methods[mi];
      sc.confidence = spec.confidence;
      sc.mode = spec.mode;
      sc.threads = inner;
      sc.known_association = known_association;
      sc.beacon_count = static_cast<std::size_t>(w.beacon_count);
      out.trials[t * nm + mi] = {spec.methods[mi], static_cast<int>(t), w.seed, run_trial(ds, sc)};
    }
  });
  for (auto m : spec.methods) out.summary[m] = summarize(out.trials, m);
  return out;
}

inline WorldConfig montecarlo_world() {
  WorldConfig w;
  w.pose_count = 100;
  w.beacon_count = 1;
  w.outlier_fraction = 0.8;
  return w;
}

struct SweepPoint {
  double x = 0.0;  // outlier fraction or confidence
  Method method = Method::gkcm;
  MethodSummary summary;
};

inline std::vector<double> default_outlier_fractions() {
  std::vector<double> f;
  for (int i = 2; i <= 18; ++i) f.push_back(0.05 * i);
  return f;
}

inline std::vector<SweepPoint> run_outlier_sweep(const ExperimentSpec& spec, const WorldConfig& world,
                                                 const std::vector<double>& fractions) {
  std::vector<SweepPoint> out;
  for (double fr : fractions) {
    WorldConfig w = world;
    w.outlier_fraction = fr;
    const auto mc = run_montecarlo(spec, w);
    for (auto m : spec.methods) out.push_back({fr, m, mc.summary.at(m)});
  }
  return out;
}

inline std::vector<double> default_confidences() {
  return {0.01, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.99};
}

inline WorldConfig gamma_sweep_world() {
  WorldConfig w;
  w.pose_count = 50;
  w.beacon_count = 1;
  w.outlier_fraction = 0.8;  // 40 of 50
  return w;
}

inline std::vector<SweepPoint> run_gamma_sweep(const ExperimentSpec& spec, const WorldConfig& world,
                                               const std::vector<double>& confidences) {
  std::vector<SweepPoint> out;
  for (double c : confidences) {
    ExperimentSpec s = spec;
    s.confidence = c;
    const auto mc = run_montecarlo(s, world);
    for (auto m : spec.methods) out.push_back({c, m, mc.summary.at(m)});
  }
  return out;
}

inline WorldConfig data_association_world() {
  WorldConfig w;
  w.pose_count = 30;
  w.beacon_count = 5;
  w.outlier_fraction = 0.2;
  w.known_association = false;
  return w;
}

struct DataAssociationTrial {
  Method method = Method::gkcm;
  int trial = 0;
  std::size_t cliques = 0;
  std::size_t distinct_beacons = 0;  // distinct majority labels among the cliques
  bool disjoint = true;
  TrialResult result;
};

struct DataAssociationResult {
  std::vector<DataAssociationTrial> trials;
  std::map<Method, MethodSummary> summary;
};

inline DataAssociationResult run_data_association(const ExperimentSpec& spec, const WorldConfig& world) {
  validate(spec);
  const std::size_t nm = spec.methods.size();
  DataAssociationResult out;
  out.trials.resize(static_cast<std::size_t>(spec.trials) * nm);
  const unsigned inner = spec.trials == 1 ? spec.threads : 1u;
  parallel_trials(static_cast<std::size_t>(spec.trials), spec.threads, [&](std::size_t t) {
    WorldConfig w = world;
    w.seed = trial_seed(spec.seed, t);
    w.known_association = false;
    const Dataset ds = generate_world(w);
    for (std::size_t mi = 0; mi < nm; ++mi) {
      SelectionConfig sc;
      sc.method = spec.methods[mi];
      sc.confidence = spec.confidence;
      sc.mode = spec.mode;
      sc.threads = inner;
      sc.known_association = false;
      sc.beacon_count = static_cast<std::size_t>(w.beacon_count);
      const auto sel = select_measurements(ds, sc);
      DataAssociationTrial row;
      row.method = spec.methods[mi];
      row.trial = static_cast<int>(t);
      row.cliques = sel.cliques.size();
      std::vector<int> seen(ds.ranges.size(), 0);
      std::vector<int> labels;
      for (const auto& c : sel.cliques) {
        for (auto v : c.vertices)
          if (++seen[v] > 1) row.disjoint = false;
        labels.push_back(detail::majority_label(ds, c));
      }
      std::sort(labels.begin(), labels.end());
      row.distinct_beacons = static_cast<std::size_t>(std::unique(labels.begin(), labels.end()) - labels.begin());
      row.result = solve_selection(ds, sel);
      out.trials[t * nm + mi] = row;
    }
  });
  std::vector<MethodTrial> flat;
  for (const auto& r : out.trials) flat.push_back({r.method, r.trial, 0, r.result});
  for (auto m : spec.methods) out.summary[m] = summarize(flat, m);
  return out;
}

struct IncrementalStep {
  Method method = Method::gkcm;
  std::size_t measurements = 0;
  double incremental_seconds = 0.0;
  double batch_seconds = 0.0;
  std::size_t incremental_size = 0;
  std::size_t batch_size = 0;
  bool graphs_equal = true;
};

// Streams the measurements of one world in order. Each step appends one
// measurement and times (a) the incremental graph extension plus the
// warm-started search against (b) a full rebuild plus a fresh search.
// Dead-reckoned marginals of earlier poses do not depend on later odometry,
// so one trajectory context serves every prefix.
inline std::vector<IncrementalStep> run_incremental_timing(const ExperimentSpec& spec, const WorldConfig& world,
                                                           bool compare_graphs = true) {
  validate(spec);
  std::vector<IncrementalStep> out;
  WorldConfig w = world;
  w.seed = spec.seed;
  const Dataset ds = generate_world(w);
  const auto ctx = dead_reckoned_context(ds);
  for (auto method : spec.methods) {
    const auto full = make_consistency(ds, method, spec.confidence, true, ctx);
    BuildOptions bo;
    bo.threads = spec.threads;
    SearchConfig sc;
    sc.mode = spec.mode;
    sc.threads = spec.threads;
    Hypergraph inc(full.arity(), 0);
    Clique prev;
    const auto all = full.measurements();
    for (std::size_t s = 1; s <= all.size(); ++s) {
      IncrementalStep step;
      step.method = method;
      step.measurements = s;
      auto t0 = Clock::now();
      build_graph_incremental(inc, full, s - 1, bo);
      const VertexId added[1] = {static_cast<VertexId>(s - 1)};
      prev = incremental_search(inc, prev, added, sc);
      step.incremental_seconds = seconds_since(t0);
      step.incremental_size = prev.size();

      t0 = Clock::now();
      RangeConsistency prefix(std::vector<RangeMeasurement>(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(s)),
                              ctx, full.config());
      const Hypergraph batch = build_graph_batch(prefix, bo);
      const Clique bc = max_clique(batch, sc);
      step.batch_seconds = seconds_since(t0);
      step.batch_size = bc.size();
      if (compare_graphs) step.graphs_equal = batch == inc;
      out.push_back(step);
    }
  }
  return out;
}

struct BenchTimingRow {
  std::size_t n = 0;
  SearchMode mode = SearchMode::heuristic;
  unsigned threads = 1;
  double index_seconds = 0.0;   // mean
  double search_seconds = 0.0;  // mean
  double total_seconds = 0.0;   // mean
  std::size_t clique_size = 0;  // of the last trial
};

// Random 3-uniform graphs of density 0.1 with a planted 10-clique. Exact
// search only runs for n ≤ 100.
inline std::vector<BenchTimingRow> run_bench_timing(const ExperimentSpec& spec, const std::vector<std::size_t>& sizes,
                                                    const std::vector<unsigned>& thread_counts,
                                                    const std::vector<SearchMode>& modes, std::size_t k = 3,
                                                    double density = 0.1) {
  validate(spec);
  std::vector<BenchTimingRow> out;
  for (auto n : sizes)
    for (auto mode : modes) {
      if (mode == SearchMode::exact && n > 100) continue;
      for (auto threads : thread_counts) {
        BenchTimingRow row{n, mode, threads};
        for (int t = 0; t < spec.trials; ++t) {
          auto pg = generate_planted_hypergraph({k, n, density, std::min<std::size_t>(10, n), trial_seed(spec.seed, static_cast<std::size_t>(t))});
          SearchConfig sc;
          sc.mode = mode;
          sc.threads = threads;
          SearchStats st;
          row.clique_size = max_clique(pg.graph, sc, &st).size();
          row.index_seconds += st.index_seconds;
          row.search_seconds += st.search_seconds;
        }
        row.index_seconds /= spec.trials;
        row.search_seconds /= spec.trials;
        row.total_seconds = row.index_seconds + row.search_seconds;
        out.push_back(row);
      }
    }
  return out;
}

struct BenchHeuristicCell {
  std::size_t planted = 0;
  double density = 0.0;
  int successes = 0;  // returned clique is the planted vertex set
  int dropped = 0;    // heuristic found a clique larger than the planted one
  int trials = 0;
  double success_rate() const {
    const int denom = trials - dropped;
    return denom > 0 ? static_cast<double>(successes) / denom : 1.0;
  }
};

inline std::vector<BenchHeuristicCell> run_bench_heuristic(const ExperimentSpec& spec,
                                                           const std::vector<std::size_t>& planted_sizes,
                                                           const std::vector<double>& densities, std::size_t n = 100,
                                                           std::size_t k = 3) {
  validate(spec);
  std::vector<BenchHeuristicCell> out;
  for (auto s : planted_sizes)
    for (double d : densities) {
      BenchHeuristicCell cell{s, d, 0, 0, spec.trials};
      std::vector<int> outcome(static_cast<std::size_t>(spec.trials));  // 1 success, 2 dropped
      parallel_trials(outcome.size(), spec.threads, [&](std::size_t t) {
        auto pg = generate_planted_hypergraph({k, n, d, s, trial_seed(spec.seed, t)});
        SearchConfig sc;
        sc.mode = SearchMode::heuristic;
        const Clique c = max_clique(pg.graph, sc);
        outcome[t] = c.size() > s ? 2 : c.vertices == pg.planted ? 1 : 0;
      });
      for (int o : outcome) {
        cell.successes += o == 1;
        cell.dropped += o == 2;
      }
      out.push_back(cell);
    }
  return out;
}

}  // namespace gkcm
