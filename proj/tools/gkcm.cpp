// gkcm: clique benchmarks, outlier-rejection experiments and one-off
// selection / solving on files.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "gkcm/experiments.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace gkcm;

namespace {

struct GlobalOptions {
  std::uint64_t seed = 1;
  unsigned threads = 1;
  int trials = 30;
  std::string method = "both";
  std::size_t k = 3;
  double confidence = 0.95;
  std::string out = "results";
  std::string mode = "heuristic";
};

struct WorldOverrides {
  int poses = 0;
  int beacons = 0;
  double outlier_fraction = -1.0;
  std::string trajectory;
  double range_sigma = -1.0;
  double odom_sigma = -1.0;
  double odom_sigma_theta = -1.0;

  void add_to(CLI::App* app) {
    app->add_option("--poses", poses, "Poses per world")->check(CLI::Range(4, 1000000));
    app->add_option("--beacons", beacons, "Beacons per world")->check(CLI::PositiveNumber);
    app->add_option("--outlier-fraction", outlier_fraction, "Fraction of corrupted ranges")->check(CLI::Range(0.0, 0.999));
    app->add_option("--trajectory", trajectory, "manhattan | circle | line")
        ->check(CLI::IsMember({"manhattan", "circle", "line"}));
    app->add_option("--range-sigma", range_sigma, "Range noise sigma (m)")->check(CLI::NonNegativeNumber);
    app->add_option("--odom-sigma", odom_sigma, "Odometry translation noise sigma (m)")->check(CLI::NonNegativeNumber);
    app->add_option("--odom-sigma-theta", odom_sigma_theta, "Odometry heading noise sigma (rad)")
        ->check(CLI::NonNegativeNumber);
  }

  WorldConfig apply(WorldConfig w) const {
    if (poses > 0) w.pose_count = poses;
    if (beacons > 0) w.beacon_count = beacons;
    if (outlier_fraction >= 0.0) w.outlier_fraction = outlier_fraction;
    if (!trajectory.empty()) w.trajectory_kind = trajectory_from_string(trajectory);
    if (range_sigma >= 0.0) w.range_sigma = range_sigma;
    if (odom_sigma >= 0.0) w.odom_sigma.x = w.odom_sigma.y = odom_sigma;
    if (odom_sigma_theta >= 0.0) w.odom_sigma.theta = odom_sigma_theta;
    return w;
  }
};

SearchMode mode_from_string(const std::string& s) {
  if (s == "exact") return SearchMode::exact;
  if (s == "heuristic") return SearchMode::heuristic;
  throw std::invalid_argument("unknown search mode '" + s + "'");
}

const char* to_string(SearchMode m) { return m == SearchMode::exact ? "exact" : "heuristic"; }

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

class Csv {
 public:
  explicit Csv(std::vector<std::string> header) : header_(std::move(header)) {}
  template <typename... T>
  void row(const T&... cells) {
    std::vector<std::string> r;
    (r.push_back(cell(cells)), ...);
    rows_.push_back(std::move(r));
  }
  void write(const fs::path& p) const {
    std::ofstream os(p);
    if (!os) throw std::runtime_error("cannot write " + p.string());
    write(os);
  }
  void write(std::ostream& os) const {
    line(os, header_);
    for (const auto& r : rows_) line(os, r);
  }

 private:
  static std::string cell(const std::string& s) { return s; }
  static std::string cell(const char* s) { return s; }
  static std::string cell(double v) { return num(v); }
  static std::string cell(bool v) { return v ? "1" : "0"; }
  template <typename I>
    requires std::is_integral_v<I>
  static std::string cell(I v) { return std::to_string(v); }
  static void line(std::ostream& os, const std::vector<std::string>& r) {
    for (std::size_t i = 0; i < r.size(); ++i) os << (i ? "," : "") << r[i];
    os << '\n';
  }
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

json to_json(const Summary& s) { return {{"mean", s.mean}, {"std", s.stddev}, {"median", s.median}, {"count", s.count}}; }

json to_json(const MethodSummary& s) {
  return {{"trans_rmse", to_json(s.trans_rmse)}, {"rot_rmse", to_json(s.rot_rmse)},
          {"beacon_error", to_json(s.beacon_error)}, {"residual", to_json(s.residual)},
          {"chi2", to_json(s.chi2)}, {"tpr", to_json(s.tpr)},
          {"fpr", to_json(s.fpr)}, {"selected", to_json(s.selected)},
          {"not_converged", s.diverged}};
}

json to_json(const WorldConfig& w) {
  Dataset d;
  d.config = w;
  return gkcm::to_json(d)["config"];
}

json resolved(const std::string& command, const GlobalOptions& g) {
  return {{"command", command}, {"seed", g.seed}, {"threads", g.threads}, {"trials", g.trials},
          {"method", g.method}, {"k", g.k}, {"confidence", g.confidence}, {"mode", g.mode}};
}

struct Output {
  fs::path dir;
  std::string name;
  fs::path file(const std::string& suffix) const { return dir / (name + suffix); }
};

Output prepare(const GlobalOptions& g, const std::string& name) {
  fs::create_directories(g.out);
  return {g.out, name};
}

void write_json(const fs::path& p, const json& j) {
  std::ofstream os(p);
  if (!os) throw std::runtime_error("cannot write " + p.string());
  os << j.dump(2) << '\n';
}

ExperimentSpec spec_from(const GlobalOptions& g) {
  ExperimentSpec s;
  s.trials = g.trials;
  s.methods = methods_from_string(g.method);
  s.threads = g.threads;
  s.seed = g.seed;
  s.confidence = g.confidence;
  s.mode = mode_from_string(g.mode);
  validate(s);
  return s;
}

void trial_rows(Csv& csv, Csv& timing, const std::vector<MethodTrial>& rows) {
  for (const auto& r : rows) {
    const auto& t = r.result;
    csv.row(r.trial, r.seed, to_string(r.method), t.tpr, t.fpr, t.selected, t.true_positives, t.false_positives,
            t.trans_rmse, t.rot_rmse, t.beacon_error, t.residual, t.chi2, t.converged);
    timing.row(r.trial, to_string(r.method), t.select_seconds, t.solve_seconds);
  }
}

const std::vector<std::string> kTrialHeader{"trial", "seed", "method", "tpr", "fpr", "selected", "tp", "fp",
                                            "trans_rmse", "rot_rmse", "beacon_error", "residual", "chi2",
                                            "converged"};

json summaries(const std::map<Method, MethodSummary>& m) {
  json j = json::object();
  for (const auto& [method, s] : m) j[to_string(method)] = to_json(s);
  return j;
}

int cmd_montecarlo(const GlobalOptions& g, const WorldOverrides& wo) {
  const auto spec = spec_from(g);
  const WorldConfig world = wo.apply(montecarlo_world());
  const auto res = run_montecarlo(spec, world);
  const auto out = prepare(g, "montecarlo");
  Csv csv(kTrialHeader), timing({"trial", "method", "select_seconds", "solve_seconds"});
  trial_rows(csv, timing, res.trials);
  csv.write(out.file(".csv"));
  timing.write(out.file("_timing.csv"));
  json j{{"config", resolved("montecarlo", g)}, {"world", to_json(world)}, {"summary", summaries(res.summary)}};
  write_json(out.file(".json"), j);
  std::cout << j["summary"].dump(2) << '\n';
  return 0;
}

void sweep_rows(Csv& csv, const std::vector<SweepPoint>& pts) {
  for (const auto& p : pts)
    csv.row(p.x, to_string(p.method), p.summary.tpr.mean, p.summary.fpr.mean, p.summary.chi2.mean, p.summary.chi2.median,
            p.summary.selected.mean, p.summary.tpr.count);
}

int cmd_outlier_sweep(const GlobalOptions& g, const WorldOverrides& wo, const std::vector<double>& fractions) {
  const auto spec = spec_from(g);
  const WorldConfig world = wo.apply(montecarlo_world());
  const auto pts = run_outlier_sweep(spec, world, fractions);
  const auto out = prepare(g, "outlier_sweep");
  Csv csv({"outlier_fraction", "method", "tpr_mean", "fpr_mean", "chi2_mean", "chi2_median", "selected_mean", "trials"});
  sweep_rows(csv, pts);
  csv.write(out.file(".csv"));
  json j{{"config", resolved("outlier-sweep", g)}, {"world", to_json(world)}, {"fractions", fractions}};
  for (auto m : spec.methods) {
    std::vector<double> x, y;
    for (const auto& p : pts)
      if (p.method == m) {
        x.push_back(p.x);
        y.push_back(p.summary.fpr.mean);
      }
    if (x.size() >= 2) j["fpr_spearman"][to_string(m)] = spearman(x, y);
  }
  write_json(out.file(".json"), j);
  csv.write(std::cout);
  return 0;
}

int cmd_gamma_sweep(const GlobalOptions& g, const WorldOverrides& wo, const std::vector<double>& confidences) {
  const auto spec = spec_from(g);
  const WorldConfig world = wo.apply(gamma_sweep_world());
  const auto pts = run_gamma_sweep(spec, world, confidences);
  const auto out = prepare(g, "gamma_sweep");
  Csv csv({"confidence", "method", "tpr_mean", "fpr_mean", "chi2_mean", "chi2_median", "selected_mean", "trials"});
  sweep_rows(csv, pts);
  csv.write(out.file(".csv"));
  write_json(out.file(".json"), {{"config", resolved("gamma-sweep", g)}, {"world", to_json(world)}, {"confidences", confidences}});
  csv.write(std::cout);
  return 0;
}

int cmd_data_association(const GlobalOptions& g, const WorldOverrides& wo) {
  const auto spec = spec_from(g);
  const WorldConfig world = wo.apply(data_association_world());
  const auto res = run_data_association(spec, world);
  const auto out = prepare(g, "data_association");
  Csv csv({"trial", "method", "cliques", "distinct_beacons", "disjoint", "tpr", "fpr", "selected", "trans_rmse",
           "beacon_error", "chi2"});
  Csv timing({"trial", "method", "select_seconds", "solve_seconds"});
  for (const auto& r : res.trials) {
    const auto& t = r.result;
    csv.row(r.trial, to_string(r.method), r.cliques, r.distinct_beacons, r.disjoint, t.tpr, t.fpr, t.selected,
            t.trans_rmse, t.beacon_error, t.chi2);
    timing.row(r.trial, to_string(r.method), t.select_seconds, t.solve_seconds);
  }
  csv.write(out.file(".csv"));
  timing.write(out.file("_timing.csv"));
  json j{{"config", resolved("data-association", g)}, {"world", to_json(world)}, {"summary", summaries(res.summary)}};
  write_json(out.file(".json"), j);
  std::cout << j["summary"].dump(2) << '\n';
  return 0;
}

int cmd_incremental(const GlobalOptions& g, const WorldOverrides& wo) {
  const auto spec = spec_from(g);
  const WorldConfig world = wo.apply(montecarlo_world());
  const auto steps = run_incremental_timing(spec, world);
  const auto out = prepare(g, "incremental_timing");
  Csv csv({"method", "measurements", "incremental_size", "batch_size", "graphs_equal"});
  Csv timing({"method", "measurements", "incremental_seconds", "batch_seconds"});
  std::map<Method, std::pair<double, double>> totals;
  bool sizes_equal = true;
  for (const auto& s : steps) {
    csv.row(to_string(s.method), s.measurements, s.incremental_size, s.batch_size, s.graphs_equal);
    timing.row(to_string(s.method), s.measurements, s.incremental_seconds, s.batch_seconds);
    totals[s.method].first += s.incremental_seconds;
    totals[s.method].second += s.batch_seconds;
    sizes_equal = sizes_equal && s.incremental_size == s.batch_size && s.graphs_equal;
  }
  csv.write(out.file(".csv"));
  timing.write(out.file("_timing.csv"));
  json j{{"config", resolved("incremental-timing", g)}, {"world", to_json(world)}, {"all_steps_equal", sizes_equal}};
  for (const auto& [m, t] : totals)
    j["timing"][to_string(m)] = {{"incremental_total_seconds", t.first}, {"batch_total_seconds", t.second}};
  write_json(out.file(".json"), j);
  std::cout << j.dump(2) << '\n';
  return 0;
}

int cmd_bench_timing(const GlobalOptions& g, const std::vector<std::size_t>& sizes, const std::vector<unsigned>& threads,
                     const std::vector<std::string>& modes, double density) {
  auto spec = spec_from(g);
  std::vector<SearchMode> ms;
  for (const auto& m : modes) ms.push_back(mode_from_string(m));
  const auto rows = run_bench_timing(spec, sizes, threads, ms, g.k, density);
  const auto out = prepare(g, "bench_timing");
  Csv csv({"n", "mode", "threads", "index_seconds", "search_seconds", "total_seconds", "clique_size"});
  for (const auto& r : rows)
    csv.row(r.n, to_string(r.mode), r.threads, r.index_seconds, r.search_seconds, r.total_seconds, r.clique_size);
  csv.write(out.file(".csv"));
  write_json(out.file(".json"), {{"config", resolved("bench-timing", g)}, {"density", density}, {"sizes", sizes}});
  csv.write(std::cout);
  return 0;
}

int cmd_bench_heuristic(const GlobalOptions& g, const std::vector<std::size_t>& planted,
                        const std::vector<double>& densities, std::size_t n) {
  const auto spec = spec_from(g);
  const auto cells = run_bench_heuristic(spec, planted, densities, n, g.k);
  const auto out = prepare(g, "bench_heuristic");
  Csv csv({"planted", "density", "successes", "dropped", "trials", "success_rate"});
  for (const auto& c : cells) csv.row(c.planted, c.density, c.successes, c.dropped, c.trials, c.success_rate());
  csv.write(out.file(".csv"));
  write_json(out.file(".json"), {{"config", resolved("bench-heuristic", g)}, {"n", n}});
  csv.write(std::cout);
  return 0;
}

int cmd_simulate(const GlobalOptions& g, const WorldOverrides& wo, bool hidden, const std::string& path) {
  WorldConfig w = wo.apply(montecarlo_world());
  w.seed = g.seed;
  w.known_association = !hidden;
  const Dataset ds = generate_world(w);
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  os << gkcm::to_json(ds).dump(1) << '\n';
  std::cout << "wrote " << ds.ranges.size() << " ranges (" << ds.outlier_count() << " outliers) to " << path << '\n';
  return 0;
}

Dataset load_dataset(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::invalid_argument("cannot read " + path);
  return dataset_from_json(json::parse(is));
}

int cmd_select(const GlobalOptions& g, const std::string& graph_path, const std::string& dataset_path,
               std::size_t top_n) {
  if (graph_path.empty() == dataset_path.empty()) throw std::invalid_argument("select needs exactly one of --graph, --dataset");
  if (!graph_path.empty()) {
    std::ifstream is(graph_path);
    if (!is) throw std::invalid_argument("cannot read " + graph_path);
    const Hypergraph graph = read_hypergraph(is);
    SearchConfig sc;
    sc.mode = mode_from_string(g.mode);
    sc.threads = g.threads;
    sc.top_n = top_n;
    SearchStats st;
    std::vector<Clique> cliques;
    if (top_n > 1) {
      cliques = top_n_disjoint_cliques(graph, sc);
    } else {
      cliques.push_back(max_clique(graph, sc, &st));
    }
    for (const auto& c : cliques) {
      for (std::size_t i = 0; i < c.vertices.size(); ++i) std::cout << (i ? " " : "") << c.vertices[i];
      std::cout << '\n';
    }
    if (top_n <= 1)
      std::cerr << "index_seconds " << st.index_seconds << " search_seconds " << st.search_seconds << " total_seconds "
                << st.total_seconds() << '\n';
    return 0;
  }
  const Dataset ds = load_dataset(dataset_path);
  for (auto m : methods_from_string(g.method)) {
    SelectionConfig sc;
    sc.method = m;
    sc.confidence = g.confidence;
    sc.mode = mode_from_string(g.mode);
    sc.threads = g.threads;
    sc.known_association = ds.config.known_association;
    sc.beacon_count = static_cast<std::size_t>(ds.config.beacon_count);
    const auto sel = select_measurements(ds, sc);
    std::cout << to_string(m) << ':';
    for (std::size_t i = 0; i < sel.selected.size(); ++i)
      if (sel.selected[i]) std::cout << ' ' << i;
    std::cout << '\n';
  }
  return 0;
}

int cmd_solve(const GlobalOptions& g, const std::string& dataset_path) {
  const Dataset ds = load_dataset(dataset_path);
  json j{{"config", resolved("solve", g)}, {"dataset", dataset_path}};
  for (auto m : methods_from_string(g.method)) {
    SelectionConfig sc;
    sc.method = m;
    sc.confidence = g.confidence;
    sc.mode = mode_from_string(g.mode);
    sc.threads = g.threads;
    sc.known_association = ds.config.known_association;
    sc.beacon_count = static_cast<std::size_t>(ds.config.beacon_count);
    const auto t = run_trial(ds, sc);
    j["results"][to_string(m)] = {{"tpr", t.tpr},           {"fpr", t.fpr},
                                  {"selected", t.selected}, {"trans_rmse", t.trans_rmse},
                                  {"rot_rmse", t.rot_rmse}, {"beacon_error", t.beacon_error},
                                  {"residual", t.residual}, {"chi2", t.chi2},
                                  {"converged", t.converged}};
  }
  std::cout << j.dump(2) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Group-k consistency maximization for range-only SLAM outlier rejection"};
  app.require_subcommand(1);
  GlobalOptions g;
  app.add_option("--seed", g.seed, "Base seed; trial t uses seed + t");
  app.add_option("--threads", g.threads, "Worker threads")->check(CLI::Range(1u, 1024u));
  app.add_option("--trials", g.trials, "Trials per configuration")->check(CLI::PositiveNumber);
  app.add_option("--method", g.method, "gkcm | pcm | both")->check(CLI::IsMember({"gkcm", "pcm", "both"}));
  app.add_option("--k", g.k, "Hyperedge arity for the clique benchmarks")->check(CLI::Range(std::size_t{2}, std::size_t{8}));
  app.add_option("--confidence", g.confidence, "Chi-square confidence for the consistency threshold")
      ->check(CLI::Range(1e-6, 1.0 - 1e-9));
  app.add_option("--mode", g.mode, "Clique search: heuristic | exact")->check(CLI::IsMember({"heuristic", "exact"}));
  app.add_option("--out", g.out, "Output directory");
  app.fallthrough();

  WorldOverrides wo;
  std::vector<std::size_t> sizes{25, 50, 100, 150, 200, 250, 300};
  std::vector<unsigned> thread_counts{1, 8};
  std::vector<std::string> modes{"heuristic", "exact"};
  double density = 0.1;
  auto* bt = app.add_subcommand("bench-timing", "Clique search time on random hypergraphs");
  bt->add_option("--sizes", sizes, "Vertex counts");
  bt->add_option("--thread-counts", thread_counts, "Thread counts");
  bt->add_option("--modes", modes, "Search modes")->check(CLI::IsMember({"heuristic", "exact"}));
  bt->add_option("--density", density, "Edge density")->check(CLI::Range(0.0, 1.0));

  std::vector<std::size_t> planted{5, 14, 17, 20, 23, 26, 29};
  std::vector<double> densities{0.1, 0.2, 0.3};
  std::size_t n = 100;
  auto* bh = app.add_subcommand("bench-heuristic", "Planted-clique recovery rate of the heuristic");
  bh->add_option("--planted", planted, "Planted clique sizes");
  bh->add_option("--densities", densities, "Edge densities");
  bh->add_option("--n", n, "Vertices per graph");

  bool hidden = false;
  std::string dataset_path;
  auto* sim = app.add_subcommand("simulate", "Write a simulated range-SLAM dataset");
  wo.add_to(sim);
  sim->add_flag("--hidden-association", hidden, "Hide beacon ids from the selection");
  sim->add_option("--dataset", dataset_path, "Output dataset file")->required();

  std::string graph_path;
  std::size_t top_n = 1;
  auto* sel = app.add_subcommand("select", "Maximum clique of a hypergraph file, or selected measurements of a dataset");
  sel->add_option("--graph", graph_path, "Hypergraph text file");
  sel->add_option("--dataset", dataset_path, "Dataset file");
  sel->add_option("--top-n", top_n, "Number of disjoint cliques")->check(CLI::PositiveNumber);

  auto* solve = app.add_subcommand("solve", "Select and solve a dataset, print metrics");
  solve->add_option("--dataset", dataset_path, "Dataset file")->required();

  auto* mc = app.add_subcommand("montecarlo", "Monte Carlo outlier rejection");
  wo.add_to(mc);

  std::vector<double> fractions = default_outlier_fractions();
  auto* os = app.add_subcommand("outlier-sweep", "TPR / FPR against outlier fraction");
  wo.add_to(os);
  os->add_option("--fractions", fractions, "Outlier fractions")->check(CLI::Range(0.0, 0.999));

  std::vector<double> confidences = default_confidences();
  auto* gs = app.add_subcommand("gamma-sweep", "TPR / FPR / chi-square against threshold confidence");
  wo.add_to(gs);
  gs->add_option("--confidences", confidences, "Confidence levels")->check(CLI::Range(1e-6, 1.0 - 1e-9));

  auto* da = app.add_subcommand("data-association", "Hidden associations, top-n disjoint cliques");
  wo.add_to(da);

  auto* it = app.add_subcommand("incremental-timing", "Incremental against batch updates while streaming");
  wo.add_to(it);

  CLI11_PARSE(app, argc, argv);
  try {
    if (*bt) return cmd_bench_timing(g, sizes, thread_counts, modes, density);
    if (*bh) return cmd_bench_heuristic(g, planted, densities, n);
    if (*sim) return cmd_simulate(g, wo, hidden, dataset_path);
    if (*sel) return cmd_select(g, graph_path, dataset_path, top_n);
    if (*solve) return cmd_solve(g, dataset_path);
    if (*mc) return cmd_montecarlo(g, wo);
    if (*os) return cmd_outlier_sweep(g, wo, fractions);
    if (*gs) return cmd_gamma_sweep(g, wo, confidences);
    if (*da) return cmd_data_association(g, wo);
    if (*it) return cmd_incremental(g, wo);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
