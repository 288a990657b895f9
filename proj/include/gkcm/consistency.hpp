#pragma once

// Generalized consistency graph construction. Vertex i is measurement i; a
// k-tuple becomes an edge when the consistency function accepts it.
//
// A consistency function F provides
//   arity()     -> k
//   size()      -> number of measurements m
//   threshold() -> γ
//   evaluate(sorted k-tuple of indices) -> optional score, empty on an
//                  evaluation failure (e.g. degenerate geometry)
// and optionally group_of(i) -> int. When present, only tuples whose members
// share a group are evaluated; the rest are skipped as known-inconsistent.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <concepts>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <thread>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>

#include "gkcm/hypergraph.hpp"

namespace gkcm {

template <typename F>
concept ConsistencyFunction = requires(const F& f, std::span<const VertexId> t) {
  { f.arity() } -> std::convertible_to<std::size_t>;
  { f.size() } -> std::convertible_to<std::size_t>;
  { f.threshold() } -> std::convertible_to<double>;
  { f.evaluate(t) } -> std::same_as<std::optional<double>>;
};

template <typename F>
concept GroupedConsistencyFunction = ConsistencyFunction<F> && requires(const F& f, std::size_t i) {
  { f.group_of(i) } -> std::convertible_to<int>;
};

// γ for a confidence level in (0, 1): the chi-square quantile with `dof`
// degrees of freedom (3.84 at 95% with one degree of freedom).
inline double chi2_threshold(double confidence, double dof = 1.0) {
  if (!(confidence > 0.0 && confidence < 1.0))
    throw std::invalid_argument("confidence must lie in (0, 1)");
  return boost::math::quantile(boost::math::chi_squared(dof), confidence);
}

// A consistency function assembled from a callable; handy for tests and for
// problems without a dedicated type.
class CallableConsistency {
 public:
  using Evaluate = std::function<std::optional<double>(std::span<const VertexId>)>;

  CallableConsistency(std::size_t k, std::size_t m, double gamma, Evaluate eval)
      : k_(k), m_(m), gamma_(gamma), eval_(std::move(eval)) {}

  std::size_t arity() const { return k_; }
  std::size_t size() const { return m_; }
  double threshold() const { return gamma_; }
  std::optional<double> evaluate(std::span<const VertexId> t) const { return eval_(t); }

 private:
  std::size_t k_, m_;
  double gamma_;
  Evaluate eval_;
};

struct BuildOptions {
  unsigned threads = 1;
  // Keep the tuples whose evaluation failed, for later testing against the
  // found clique. Otherwise they are only counted.
  bool buffer_failures = false;
};

struct BuildReport {
  std::uint64_t checks = 0;     // evaluations performed
  std::uint64_t accepted = 0;
  std::uint64_t failures = 0;   // evaluations that returned no score
  std::uint64_t skipped = 0;    // tuples spanning groups, never evaluated
  double seconds = 0.0;
  std::vector<Tuple> buffered;
};

namespace detail {

// Colexicographic unranking of a c-subset of {0..n-1}.
inline void unrank_colex(std::uint64_t rank, std::size_t n, std::size_t c, std::vector<std::size_t>& out) {
  out.assign(c, 0);
  std::size_t v = n;
  for (std::size_t i = c; i > 0; --i) {
    // largest v with C(v, i) <= rank
    do --v; while (binomial(v, i) > rank);
    out[i - 1] = v;
    rank -= binomial(v, i);
  }
}

inline void next_colex(std::vector<std::size_t>& c) {
  for (std::size_t i = 0; i < c.size(); ++i) {
    if (i + 1 == c.size() || c[i] + 1 < c[i + 1]) {
      ++c[i];
      for (std::size_t j = 0; j < i; ++j) c[j] = j;
      return;
    }
  }
}

struct WorkerResult {
  std::vector<Tuple> edges;
  std::vector<Tuple> failed;
  std::uint64_t failures = 0;
  std::uint64_t checks = 0;
};

// Evaluates fixed ∪ {pool[c] : c a colex-ranked subset of size `choose`} for
// ranks in [begin, end).
template <ConsistencyFunction F>
void evaluate_range(const F& f, std::span<const VertexId> pool, std::size_t choose,
                    std::span<const VertexId> fixed, std::uint64_t begin, std::uint64_t end,
                    const BuildOptions& opt, WorkerResult& out) {
  if (begin >= end) return;
  const double gamma = f.threshold();
  std::vector<std::size_t> c;
  unrank_colex(begin, pool.size(), choose, c);
  Tuple t(choose + fixed.size());
  for (std::uint64_t r = begin; r < end; ++r) {
    for (std::size_t i = 0; i < choose; ++i) t[i] = pool[c[i]];
    std::copy(fixed.begin(), fixed.end(), t.begin() + static_cast<std::ptrdiff_t>(choose));
    std::sort(t.begin(), t.end());
    const auto score = f.evaluate(t);
    ++out.checks;
    if (!score) {
      ++out.failures;
      if (opt.buffer_failures) out.failed.push_back(t);
    } else if (*score <= gamma) {
      out.edges.push_back(t);
    }
    if (r + 1 < end) next_colex(c);
  }
}

struct Task {
  std::vector<VertexId> pool;
  std::size_t choose;
};

template <ConsistencyFunction F>
BuildReport run_tasks(const F& f, const std::vector<Task>& tasks, std::span<const VertexId> fixed,
                      const BuildOptions& opt, Hypergraph& g) {
  // Split each task into contiguous rank ranges.
  struct Chunk {
    std::size_t task;
    std::uint64_t begin, end;
  };
  const unsigned threads = std::max(1u, opt.threads);
  std::vector<Chunk> chunks;
  for (std::size_t ti = 0; ti < tasks.size(); ++ti) {
    const auto total = binomial(tasks[ti].pool.size(), tasks[ti].choose);
    if (total == 0) continue;
    const std::uint64_t pieces = std::min<std::uint64_t>(total, threads == 1 ? 1 : threads * 8ull);
    for (std::uint64_t p = 0; p < pieces; ++p)
      chunks.push_back({ti, total * p / pieces, total * (p + 1) / pieces});
  }
  std::vector<WorkerResult> results(chunks.size());
  auto work = [&](std::size_t ci) {
    const auto& ch = chunks[ci];
    evaluate_range(f, tasks[ch.task].pool, tasks[ch.task].choose, fixed, ch.begin, ch.end, opt, results[ci]);
  };
  if (threads == 1) {
    for (std::size_t ci = 0; ci < chunks.size(); ++ci) work(ci);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t)
      pool.emplace_back([&] {
        for (std::size_t ci; (ci = next.fetch_add(1)) < chunks.size();) work(ci);
      });
  }
  BuildReport rep;
  std::vector<Tuple> edges;
  for (auto& r : results) {
    rep.checks += r.checks;
    rep.failures += r.failures;
    if (opt.buffer_failures)
      rep.buffered.insert(rep.buffered.end(), std::make_move_iterator(r.failed.begin()),
                          std::make_move_iterator(r.failed.end()));
    edges.insert(edges.end(), std::make_move_iterator(r.edges.begin()), std::make_move_iterator(r.edges.end()));
  }
  std::sort(edges.begin(), edges.end());
  std::sort(rep.buffered.begin(), rep.buffered.end());
  for (auto& e : edges)
    if (g.add_edge(HyperEdge(std::move(e)))) ++rep.accepted;
  return rep;
}

template <ConsistencyFunction F>
std::vector<std::vector<VertexId>> groups_of(const F& f, std::size_t count) {
  if constexpr (GroupedConsistencyFunction<F>) {
    std::map<int, std::vector<VertexId>> by;
    for (std::size_t i = 0; i < count; ++i) by[f.group_of(i)].push_back(static_cast<VertexId>(i));
    std::vector<std::vector<VertexId>> out;
    for (auto& [label, members] : by) out.push_back(std::move(members));
    return out;
  } else {
    std::vector<VertexId> all(count);
    for (std::size_t i = 0; i < count; ++i) all[i] = static_cast<VertexId>(i);
    return {all};
  }
}

}  // namespace detail

// One vertex per measurement and C(m, k) evaluations (fewer when grouping
// skips cross-group tuples). The edge set does not depend on opt.threads.
template <ConsistencyFunction F>
Hypergraph build_graph_batch(const F& f, const BuildOptions& opt = {}, BuildReport* report = nullptr) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t k = f.arity(), m = f.size();
  Hypergraph g(k, m);
  std::vector<detail::Task> tasks;
  std::uint64_t evaluated = 0;
  for (auto& members : detail::groups_of(f, m)) {
    evaluated += binomial(members.size(), k);
    tasks.push_back({std::move(members), k});
  }
  auto rep = detail::run_tasks(f, tasks, {}, opt, g);
  rep.skipped = binomial(m, k) - evaluated;
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (report) *report = std::move(rep);
  return g;
}

// Appends measurement `new_index` (== g.num_vertices()) as a vertex and adds
// its edges: C(m-1, k-1) evaluations of the new measurement with every
// (k-1)-subset of the existing ones.
template <ConsistencyFunction F>
BuildReport build_graph_incremental(Hypergraph& g, const F& f, std::size_t new_index,
                                    const BuildOptions& opt = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  if (g.num_vertices() != new_index)
    throw std::invalid_argument("build_graph_incremental: graph has " + std::to_string(g.num_vertices()) +
                                " vertices, expected " + std::to_string(new_index));
  if (new_index >= f.size())
    throw std::invalid_argument("build_graph_incremental: measurement index out of range");
  if (g.k() != f.arity()) throw std::invalid_argument("build_graph_incremental: arity mismatch");
  g.add_vertices(1);
  const std::size_t k = f.arity();
  std::vector<VertexId> pool;
  std::uint64_t skipped = 0;
  if constexpr (GroupedConsistencyFunction<F>) {
    const int label = f.group_of(new_index);
    std::size_t others = 0;
    for (std::size_t i = 0; i < new_index; ++i) {
      if (f.group_of(i) == label) pool.push_back(static_cast<VertexId>(i));
      ++others;
    }
    skipped = binomial(others, k - 1) - binomial(pool.size(), k - 1);
  } else {
    for (std::size_t i = 0; i < new_index; ++i) pool.push_back(static_cast<VertexId>(i));
  }
  const VertexId fixed[1] = {static_cast<VertexId>(new_index)};
  std::vector<detail::Task> tasks{{std::move(pool), k - 1}};
  auto rep = detail::run_tasks(f, tasks, fixed, opt, g);
  rep.skipped = skipped;
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

enum class CliqueAgreement { consistent, inconsistent, undetermined };

// Tests a measurement held back from the graph (e.g. a buffered degenerate
// tuple member) against a found clique: every (k-1)-subset of the clique is
// evaluated together with the candidate. Failed evaluations are ignored; if
// all of them fail the result is undetermined.
template <ConsistencyFunction F>
CliqueAgreement test_against_clique(const F& f, std::span<const VertexId> clique, VertexId candidate) {
  std::vector<VertexId> members;
  for (VertexId v : clique)
    if (v != candidate) members.push_back(v);
  std::sort(members.begin(), members.end());
  if (members.size() + 1 < f.arity()) return CliqueAgreement::undetermined;
  bool any = false, all_ok = true;
  Tuple t;
  for_each_combination(members, f.arity() - 1, [&](std::span<const VertexId> p) {
    t.assign(p.begin(), p.end());
    t.push_back(candidate);
    std::sort(t.begin(), t.end());
    const auto score = f.evaluate(t);
    if (!score) return true;
    any = true;
    if (*score > f.threshold()) {
      all_ok = false;
      return false;
    }
    return true;
  });
  if (!all_ok) return CliqueAgreement::inconsistent;
  return any ? CliqueAgreement::consistent : CliqueAgreement::undetermined;
}

// Members of buffered (failed) tuples that are outside the clique and test
// consistent with it. Sorted, no duplicates.
template <ConsistencyFunction F>
std::vector<VertexId> resolve_buffered(const F& f, std::span<const VertexId> clique,
                                       const std::vector<Tuple>& buffered) {
  std::vector<VertexId> candidates;
  for (const auto& t : buffered)
    for (VertexId v : t)
      if (std::find(clique.begin(), clique.end(), v) == clique.end()) candidates.push_back(v);
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
  std::vector<VertexId> out;
  for (VertexId v : candidates)
    if (test_against_clique(f, clique, v) == CliqueAgreement::consistent) out.push_back(v);
  return out;
}

}  // namespace gkcm
