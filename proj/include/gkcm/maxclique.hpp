#pragma once

// Maximum clique search on k-uniform hypergraphs: the exact branch and bound
// search, the greedy heuristic, top-n disjoint extraction by peeling, and the
// warm-started incremental search.
//
// Both searches run the outer loop over start vertices on a thread pool. The
// only shared state is the incumbent clique; its size is an atomic that only
// grows, so a thread reading a stale value only prunes less.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <mutex>
#include <optional>
#include <thread>
#include <vector>

#include "gkcm/hypergraph.hpp"

namespace gkcm {

struct Clique {
  std::vector<VertexId> vertices;  // sorted

  std::size_t size() const { return vertices.size(); }
  bool empty() const { return vertices.empty(); }
  friend bool operator==(const Clique&, const Clique&) = default;
};

enum class SearchMode { exact, heuristic };

struct SearchConfig {
  SearchMode mode = SearchMode::heuristic;
  unsigned threads = 1;
  std::optional<Clique> warm_start;
  std::size_t top_n = 1;
  bool disjoint = true;
  // Degree and |S|+|U| bound pruning. Off only for differential testing.
  bool prune = true;
};

struct SearchStats {
  double index_seconds = 0.0;   // neighborhoods / edge sets
  double search_seconds = 0.0;
  double total_seconds() const { return index_seconds + search_seconds; }
};

// Partial clique during the recursive search. R holds the packed (k-1)-stubs
// every candidate's edge set must contain, i.e. all (k-1)-subsets of S.
struct SearchState {
  std::vector<VertexId> S;
  std::vector<VertexId> U;
  std::vector<std::uint64_t> R;
};

namespace detail {

class Incumbent {
 public:
  explicit Incumbent(const std::optional<Clique>& warm) {
    if (warm) {
      best_ = *warm;
      size_.store(warm->size(), std::memory_order_relaxed);
    }
  }

  std::size_t size() const { return size_.load(std::memory_order_acquire); }

  // Keeps the larger clique; on equal size keeps the lexicographically
  // smaller one so single-threaded runs are reproducible.
  void offer(const std::vector<VertexId>& s) {
    if (s.size() < size()) return;
    std::vector<VertexId> sorted = s;
    std::sort(sorted.begin(), sorted.end());
    std::lock_guard lock(mutex_);
    if (sorted.size() > best_.size() ||
        (sorted.size() == best_.size() && sorted < best_.vertices)) {
      best_.vertices = std::move(sorted);
      size_.store(best_.size(), std::memory_order_release);
    }
  }

  Clique take() { return std::move(best_); }

 private:
  std::mutex mutex_;
  Clique best_;
  std::atomic<std::size_t> size_{0};
};

// Dynamic schedule of the outer loop over start vertices.
template <typename Body>
void parallel_for_vertices(std::size_t n, unsigned threads, Body&& body) {
  threads = std::max(1u, threads);
  if (threads == 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) body(static_cast<VertexId>(i));
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::jthread> pool;
  pool.reserve(threads);
  for (unsigned t = 0; t < threads; ++t)
    pool.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1, std::memory_order_relaxed)) < n;)
        body(static_cast<VertexId>(i));
    });
}

// Packed stubs p ∪ {u} for every (k-2)-subset p of S.
inline void new_stubs(const Hypergraph& g, const std::vector<VertexId>& S, VertexId u,
                      std::vector<std::uint64_t>& out) {
  out.clear();
  std::vector<VertexId> sorted = S;
  std::sort(sorted.begin(), sorted.end());
  for_each_combination(sorted, g.k() - 2, [&](std::span<const VertexId> p) {
    out.push_back(g.codec().pack_with(p, u));
  });
}

inline bool has_all_stubs(const Hypergraph& g, VertexId v, std::span<const std::uint64_t> stubs) {
  for (auto key : stubs)
    if (!g.has_stub_key(v, key)) return false;
  return true;
}

inline std::vector<std::uint64_t> all_stubs(const Hypergraph& g, const std::vector<VertexId>& S) {
  std::vector<VertexId> sorted = S;
  std::sort(sorted.begin(), sorted.end());
  std::vector<std::uint64_t> out;
  for_each_combination(sorted, g.k() - 1,
                       [&](std::span<const VertexId> t) { out.push_back(g.codec().pack(t)); });
  return out;
}

// Clique without any edge: every set smaller than k is vacuously a clique.
inline Clique vacuous_clique(const Hypergraph& g) {
  Clique c;
  const auto m = std::min(g.num_vertices(), g.k() - 1);
  for (std::size_t i = 0; i < m; ++i) c.vertices.push_back(static_cast<VertexId>(i));
  return c;
}

inline bool should_prune(bool prune, std::size_t bound, std::size_t best) {
  return prune && bound <= best;
}

// Depth-first expansion of one root state (the Clique procedure).
inline void expand_exact(const Hypergraph& g, SearchState root, Incumbent& best, bool prune) {
  struct Frame {
    SearchState st;
    std::size_t cursor = 0;  // U[cursor..] not yet branched on
  };
  std::vector<Frame> stack;
  auto enter = [&](SearchState st) {
    if (st.U.empty()) {
      if (st.S.size() > best.size()) best.offer(st.S);
      return;
    }
    stack.push_back({std::move(st), 0});
  };
  enter(std::move(root));
  std::vector<std::uint64_t> delta;
  while (!stack.empty()) {
    auto& f = stack.back();
    const std::size_t remaining = f.st.U.size() - f.cursor;
    if (remaining == 0 || should_prune(prune, f.st.S.size() + remaining, best.size())) {
      stack.pop_back();
      continue;
    }
    const VertexId u = f.st.U[f.cursor++];
    const std::size_t bar = best.size();
    new_stubs(g, f.st.S, u, delta);
    SearchState child;
    child.S = f.st.S;
    child.S.push_back(u);
    child.R = f.st.R;
    child.R.insert(child.R.end(), delta.begin(), delta.end());
    // Every q in U already holds R; only the stubs through u need checking.
    for (std::size_t i = f.cursor; i < f.st.U.size(); ++i) {
      const VertexId q = f.st.U[i];
      if (!g.adjacent(u, q)) continue;
      if (prune && g.degree(q) < bar) continue;
      if (has_all_stubs(g, q, delta)) child.U.push_back(q);
    }
    enter(std::move(child));  // may invalidate f
  }
}

}  // namespace detail

// Exact maximum clique. The size is unique; the vertex set may vary with the
// thread count when several maximum cliques exist.
inline Clique max_clique_exact(const Hypergraph& g, const SearchConfig& cfg = {},
                               SearchStats* stats = nullptr) {
  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();
  g.build_index();
  const auto t1 = clock::now();

  detail::Incumbent best(cfg.warm_start);
  if (g.num_edges() == 0) {
    best.offer(detail::vacuous_clique(g).vertices);
  } else {
    detail::parallel_for_vertices(g.num_vertices(), cfg.threads, [&](VertexId vi) {
      if (cfg.prune && g.degree(vi) + 1 < best.size()) return;
      for (auto ei : g.incident_edges(vi)) {
        // Stubs reaching below vi belong to a clique already searched from
        // its lowest vertex.
        const auto& edge = g.edges()[ei];
        if (edge[0] < vi) continue;
        SearchState st;
        st.S.assign(edge.vertices().begin(), edge.vertices().end());
        st.R = detail::all_stubs(g, st.S);
        const std::size_t bar = best.size();
        for (VertexId vj : g.neighborhood(vi)) {
          if (vj <= vi || std::find(st.S.begin(), st.S.end(), vj) != st.S.end()) continue;
          if (cfg.prune && g.degree(vj) + 1 < bar) continue;
          if (detail::has_all_stubs(g, vj, st.R)) st.U.push_back(vj);
        }
        detail::expand_exact(g, std::move(st), best, cfg.prune);
      }
    });
  }
  const auto t2 = clock::now();
  if (stats) {
    stats->index_seconds = std::chrono::duration<double>(t1 - t0).count();
    stats->search_seconds = std::chrono::duration<double>(t2 - t1).count();
  }
  return best.take();
}

namespace detail {

// Greedy descent from start vertex vi. Independent of the incumbent except
// for early exits that cannot change the maximum size, so the best size over
// all starts does not depend on scheduling.
inline void greedy_from(const Hypergraph& g, VertexId vi, Incumbent& best, bool prune,
                        std::vector<std::uint32_t>& conn) {
  const auto nbrs = g.neighborhood(vi);
  const auto incident = g.incident_edges(vi);
  if (incident.empty()) return;

  // Connections of each neighbor within E(vi).
  for (VertexId w : nbrs) conn[w] = 0;
  for (auto ei : incident)
    for (VertexId w : g.edges()[ei].vertices())
      if (w != vi) ++conn[w];

  // Edge of E(vi) with the largest total connections; ties go to the
  // lexicographically smallest edge.
  const HyperEdge* chosen = nullptr;
  std::uint64_t chosen_score = 0;
  for (auto ei : incident) {
    const auto& e = g.edges()[ei];
    std::uint64_t score = 0;
    for (VertexId w : e.vertices())
      if (w != vi) score += conn[w];
    if (!chosen || score > chosen_score || (score == chosen_score && e < *chosen)) {
      chosen = &e;
      chosen_score = score;
    }
  }

  std::vector<VertexId> S(chosen->vertices().begin(), chosen->vertices().end());
  std::vector<std::uint64_t> R = all_stubs(g, S);
  std::vector<VertexId> U;
  for (VertexId vj : nbrs) {
    if (std::find(S.begin(), S.end(), vj) != S.end()) continue;
    if (has_all_stubs(g, vj, R)) U.push_back(vj);
  }
  std::vector<std::uint64_t> delta;
  while (true) {
    if (should_prune(prune, S.size() + U.size(), best.size())) return;
    if (U.empty()) {
      best.offer(S);
      return;
    }
    auto it = std::max_element(U.begin(), U.end(), [&](VertexId a, VertexId b) {
      return conn[a] < conn[b] || (conn[a] == conn[b] && a > b);
    });
    const VertexId u = *it;
    U.erase(it);
    new_stubs(g, S, u, delta);
    S.push_back(u);
    std::vector<VertexId> next;
    for (VertexId q : U)
      if (g.adjacent(u, q) && has_all_stubs(g, q, delta)) next.push_back(q);
    U = std::move(next);
  }
}

}  // namespace detail

// Greedy heuristic. Always returns a valid clique; the size never exceeds
// the exact maximum and does not depend on the thread count.
inline Clique max_clique_heuristic(const Hypergraph& g, const SearchConfig& cfg = {},
                                   SearchStats* stats = nullptr) {
  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();
  g.build_index();
  const auto t1 = clock::now();

  detail::Incumbent best(cfg.warm_start);
  if (g.num_edges() == 0) {
    best.offer(detail::vacuous_clique(g).vertices);
  } else {
    const unsigned threads = std::max(1u, cfg.threads);
    std::vector<std::vector<std::uint32_t>> conn(threads);
    if (threads == 1) {
      conn[0].assign(g.num_vertices(), 0);
      for (std::size_t i = 0; i < g.num_vertices(); ++i) {
        const auto vi = static_cast<VertexId>(i);
        if (cfg.prune && g.degree(vi) + 1 < best.size()) continue;
        detail::greedy_from(g, vi, best, cfg.prune, conn[0]);
      }
    } else {
      std::atomic<std::size_t> next{0};
      std::vector<std::jthread> pool;
      for (unsigned t = 0; t < threads; ++t)
        pool.emplace_back([&, t] {
          conn[t].assign(g.num_vertices(), 0);
          for (std::size_t i; (i = next.fetch_add(1, std::memory_order_relaxed)) < g.num_vertices();) {
            const auto vi = static_cast<VertexId>(i);
            if (cfg.prune && g.degree(vi) + 1 < best.size()) continue;
            detail::greedy_from(g, vi, best, cfg.prune, conn[t]);
          }
        });
    }
  }
  const auto t2 = clock::now();
  if (stats) {
    stats->index_seconds = std::chrono::duration<double>(t1 - t0).count();
    stats->search_seconds = std::chrono::duration<double>(t2 - t1).count();
  }
  return best.take();
}

inline Clique max_clique(const Hypergraph& g, const SearchConfig& cfg = {},
                         SearchStats* stats = nullptr) {
  return cfg.mode == SearchMode::exact ? max_clique_exact(g, cfg, stats)
                                       : max_clique_heuristic(g, cfg, stats);
}

// Up to cfg.top_n pairwise vertex-disjoint cliques with non-increasing sizes,
// found by repeatedly removing the vertices of the current maximum clique.
// Stops early once no edge remains among the unused vertices.
inline std::vector<Clique> top_n_disjoint_cliques(const Hypergraph& g, const SearchConfig& cfg) {
  if (cfg.top_n == 0) throw std::invalid_argument("top_n must be >= 1");
  std::vector<Clique> out;
  std::vector<VertexId> alive(g.num_vertices());
  for (std::size_t i = 0; i < alive.size(); ++i) alive[i] = static_cast<VertexId>(i);
  SearchConfig sub = cfg;
  sub.warm_start.reset();
  Hypergraph current = g;
  while (out.size() < cfg.top_n) {
    if (current.num_edges() == 0) break;
    Clique local = max_clique(current, sub);
    Clique mapped;
    for (VertexId v : local.vertices) mapped.vertices.push_back(alive[v]);
    std::sort(mapped.vertices.begin(), mapped.vertices.end());
    out.push_back(mapped);
    std::vector<VertexId> keep_local, keep_global;
    for (std::size_t i = 0; i < alive.size(); ++i)
      if (!std::binary_search(local.vertices.begin(), local.vertices.end(), static_cast<VertexId>(i))) {
        keep_local.push_back(static_cast<VertexId>(i));
        keep_global.push_back(alive[i]);
      }
    current = current.induced(keep_local);
    alive = std::move(keep_global);
  }
  return out;
}

class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Re-solves after g grew by `new_vertices`. First extends `previous` greedily
// with new vertices that complete every required stub, then runs the
// configured search seeded with that clique so bound pruning starts tight.
inline Clique incremental_search(const Hypergraph& g, const Clique& previous,
                                 std::span<const VertexId> new_vertices, const SearchConfig& cfg,
                                 SearchStats* stats = nullptr) {
  for (VertexId v : previous.vertices)
    if (v >= g.num_vertices()) throw ContractError("incremental_search: previous clique vertex out of range");
  if (!g.is_clique(previous.vertices))
    throw ContractError("incremental_search: previous set is not a clique in the graph");
  g.build_index();

  std::vector<VertexId> S = previous.vertices;
  std::vector<VertexId> candidates;
  for (VertexId v : new_vertices)
    if (v < g.num_vertices() && !std::binary_search(S.begin(), S.end(), v)) candidates.push_back(v);
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

  if (S.size() + 1 >= g.k()) {
    std::vector<std::uint64_t> required = detail::all_stubs(g, S);
    std::vector<std::uint64_t> delta;
    for (VertexId c : candidates) {
      if (S.size() + 1 < g.k()) break;
      if (!detail::has_all_stubs(g, c, required)) continue;
      detail::new_stubs(g, S, c, delta);
      S.push_back(c);
      required.insert(required.end(), delta.begin(), delta.end());
    }
  }
  std::sort(S.begin(), S.end());

  SearchConfig seeded = cfg;
  seeded.warm_start = Clique{S};
  return max_clique(g, seeded, stats);
}

}  // namespace gkcm
