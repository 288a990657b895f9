#include <gtest/gtest.h>

#include <random>

#include "gkcm/maxclique.hpp"
#include "gkcm/simulation.hpp"
#include "oracles.hpp"

using namespace gkcm;

namespace {

Hypergraph from_oracle(const oracle::EdgeList& e) {
  Hypergraph g(e.k, e.n);
  for (const auto& t : e.edges) g.add_edge(HyperEdge(Tuple(t.begin(), t.end())));
  return g;
}

void add_complete(Hypergraph& g, const Tuple& members) {
  for_each_combination(members, g.k(), [&](std::span<const VertexId> t) {
    g.add_edge(HyperEdge(Tuple(t.begin(), t.end())));
  });
}

Tuple range(VertexId a, VertexId b) {
  Tuple t;
  for (VertexId v = a; v < b; ++v) t.push_back(v);
  return t;
}

SearchConfig exact(unsigned threads = 1) {
  SearchConfig c;
  c.mode = SearchMode::exact;
  c.threads = threads;
  return c;
}

SearchConfig heuristic(unsigned threads = 1) {
  SearchConfig c;
  c.mode = SearchMode::heuristic;
  c.threads = threads;
  return c;
}

}  // namespace

TEST(MaxClique, CompleteGraph) {
  Hypergraph g(3, 6);
  add_complete(g, range(0, 6));
  EXPECT_EQ(max_clique_exact(g, exact()).size(), 6u);
  EXPECT_EQ(max_clique_heuristic(g, heuristic()).size(), 6u);
}

TEST(MaxClique, EmptyGraph) {
  EXPECT_TRUE(max_clique_exact(Hypergraph(3, 0), exact()).empty());
  EXPECT_TRUE(max_clique_heuristic(Hypergraph(3, 0), heuristic()).empty());
  const auto c = max_clique_exact(Hypergraph(3, 5), exact());
  EXPECT_TRUE(Hypergraph(3, 5).is_clique(c.vertices));
  EXPECT_GE(c.size(), 1u);
}

TEST(MaxClique, ExactMatchesSubsetOracleK3) {
  std::mt19937_64 rng(101);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 3 + trial % 6;
    const double density = 0.05 + 0.9 * static_cast<double>(trial % 10) / 9.0;
    const auto e = oracle::random_edges(3, n, density, rng);
    const auto g = from_oracle(e);
    const auto c = max_clique_exact(g, exact());
    ASSERT_TRUE(g.is_clique(c.vertices));
    ASSERT_EQ(c.size(), oracle::max_clique_size(e)) << "trial " << trial;
    const auto h = max_clique_heuristic(g, heuristic());
    ASSERT_TRUE(g.is_clique(h.vertices));
    ASSERT_LE(h.size(), c.size());
  }
}

TEST(MaxClique, ExactMatchesSubsetOracleK4) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    const auto e = oracle::random_edges(4, 8, 0.3 + 0.05 * (trial % 12), rng);
    const auto g = from_oracle(e);
    ASSERT_EQ(max_clique_exact(g, exact()).size(), oracle::max_clique_size(e));
  }
}

TEST(MaxClique, ExactMatchesSubsetOracleK2) {
  std::mt19937_64 rng(202);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + trial % 11;
    const auto e = oracle::random_edges(2, n, 0.1 + 0.08 * (trial % 10), rng);
    const auto g = from_oracle(e);
    ASSERT_EQ(max_clique_exact(g, exact()).size(), oracle::max_clique_size(e));
  }
}

TEST(MaxClique, PairwiseMatchesBronKerbosch) {
  std::mt19937_64 rng(303);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t n = 10 + trial % 21;
    const auto e = oracle::random_edges(2, n, 0.2 + 0.1 * (trial % 6), rng);
    std::vector<std::vector<bool>> adj(n, std::vector<bool>(n, false));
    for (const auto& t : e.edges) adj[t[0]][t[1]] = adj[t[1]][t[0]] = true;
    const auto g = from_oracle(e);
    const auto c = max_clique_exact(g, exact());
    ASSERT_TRUE(g.is_clique(c.vertices));
    ASSERT_EQ(c.size(), std::max<std::size_t>(oracle::pairwise_max_clique(adj), n > 0 ? 1 : 0));
  }
}

TEST(MaxClique, PruningDoesNotChangeExactSize) {
  std::mt19937_64 rng(404);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t k = 2 + trial % 3;
    const auto e = oracle::random_edges(k, 12, 0.25 + 0.05 * (trial % 8), rng);
    const auto g = from_oracle(e);
    auto off = exact();
    off.prune = false;
    ASSERT_EQ(max_clique_exact(g, exact()).size(), max_clique_exact(g, off).size());
  }
}

TEST(MaxClique, ThreadCountIndependence) {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    PlantedGraphConfig pc;
    pc.n = 40;
    pc.planted_clique_size = 8;
    pc.density = 0.08;
    pc.seed = seed;
    const auto g = generate_planted_hypergraph(pc).graph;
    const auto base_exact = max_clique_exact(g, exact(1));
    const auto base_heur = max_clique_heuristic(g, heuristic(1));
    for (unsigned t : {2u, 4u, 8u}) {
      const auto ce = max_clique_exact(g, exact(t));
      EXPECT_EQ(ce.size(), base_exact.size());
      EXPECT_TRUE(g.is_clique(ce.vertices));
      const auto ch = max_clique_heuristic(g, heuristic(t));
      EXPECT_EQ(ch.size(), base_heur.size());
      EXPECT_TRUE(g.is_clique(ch.vertices));
    }
  }
}

TEST(MaxClique, PlantedCliqueRecovered) {
  PlantedGraphConfig pc;
  pc.n = 100;
  pc.planted_clique_size = 10;
  pc.density = 0.1;
  pc.seed = 5;
  const auto planted = generate_planted_hypergraph(pc);
  const auto c = max_clique_exact(planted.graph, exact());
  EXPECT_EQ(c.size(), 10u);
}

TEST(MaxClique, HeuristicRecoversLargePlantedCliques) {
  for (std::size_t size : {14u, 20u, 29u}) {
    PlantedGraphConfig pc;
    pc.n = 100;
    pc.planted_clique_size = size;
    pc.density = 0.1;
    pc.seed = 11 + size;
    const auto planted = generate_planted_hypergraph(pc);
    EXPECT_EQ(max_clique_heuristic(planted.graph, heuristic()).size(), size);
  }
}

TEST(MaxClique, WarmStartNeverShrinks) {
  std::mt19937_64 rng(505);
  for (int trial = 0; trial < 40; ++trial) {
    const auto e = oracle::random_edges(3, 10, 0.4, rng);
    const auto g = from_oracle(e);
    const auto best = max_clique_exact(g, exact());
    for (auto mode : {SearchMode::exact, SearchMode::heuristic}) {
      SearchConfig c;
      c.mode = mode;
      c.warm_start = best;
      const auto r = max_clique(g, c);
      EXPECT_GE(r.size(), best.size());
      EXPECT_TRUE(g.is_clique(r.vertices));
    }
  }
}

TEST(TopN, DisjointComponents) {
  Hypergraph g(3, 11);
  add_complete(g, range(0, 6));
  add_complete(g, range(6, 11));
  SearchConfig c = exact();
  c.top_n = 2;
  const auto out = top_n_disjoint_cliques(g, c);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0].vertices, range(0, 6));
  EXPECT_EQ(out[1].vertices, range(6, 11));
  c.top_n = 5;
  EXPECT_EQ(top_n_disjoint_cliques(g, c).size(), 2u);
  c.top_n = 0;
  EXPECT_THROW(top_n_disjoint_cliques(g, c), std::invalid_argument);
}

TEST(TopN, FivePlantedGroups) {
  Hypergraph g(4, 150);
  std::mt19937_64 rng(9);
  std::vector<VertexId> perm = range(0, 150);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<Tuple> groups(5);
  for (std::size_t i = 0; i < 150; ++i) groups[i / 30].push_back(perm[i]);
  for (auto& grp : groups) {
    std::sort(grp.begin(), grp.end());
    add_complete(g, grp);
  }
  std::sort(groups.begin(), groups.end());
  SearchConfig c = heuristic();
  c.top_n = 5;
  auto out = top_n_disjoint_cliques(g, c);
  ASSERT_EQ(out.size(), 5u);
  std::vector<Tuple> found;
  for (const auto& q : out) found.push_back(q.vertices);
  std::sort(found.begin(), found.end());
  EXPECT_EQ(found, groups);
}

TEST(TopN, FirstMatchesSingleSearchAndSizesDecrease) {
  std::mt19937_64 rng(606);
  for (int trial = 0; trial < 20; ++trial) {
    const auto g = from_oracle(oracle::random_edges(3, 12, 0.3, rng));
    SearchConfig c = exact();
    c.top_n = 4;
    const auto out = top_n_disjoint_cliques(g, c);
    if (out.empty()) continue;
    EXPECT_EQ(out[0].size(), max_clique_exact(g, exact()).size());
    std::vector<bool> used(12, false);
    for (std::size_t i = 0; i < out.size(); ++i) {
      EXPECT_TRUE(g.is_clique(out[i].vertices));
      if (i) {
        EXPECT_LE(out[i].size(), out[i - 1].size());
      }
      for (auto v : out[i].vertices) {
        EXPECT_FALSE(used[v]);
        used[v] = true;
      }
    }
  }
}

TEST(Incremental, DirectExtension) {
  Hypergraph g(3, 5);
  add_complete(g, range(0, 5));
  const Clique prev{range(0, 4)};
  const VertexId fresh[] = {4};
  const auto r = incremental_search(g, prev, fresh, heuristic());
  EXPECT_EQ(r.vertices, range(0, 5));
}

TEST(Incremental, IsolatedVertexKeepsPrevious) {
  Hypergraph g(3, 5);
  add_complete(g, range(0, 4));
  const Clique prev{range(0, 4)};
  const VertexId fresh[] = {4};
  EXPECT_EQ(incremental_search(g, prev, fresh, heuristic()), prev);
}

TEST(Incremental, RejectsNonClique) {
  Hypergraph g(3, 4);
  g.add_edge(HyperEdge({0, 1, 2}));
  const Clique prev{{0, 1, 2, 3}};
  const VertexId fresh[] = {3};
  EXPECT_THROW(incremental_search(g, prev, fresh, heuristic()), ContractError);
}

TEST(Incremental, DominatesPreviousOnRandomGrowth) {
  std::mt19937_64 rng(707);
  for (int trial = 0; trial < 30; ++trial) {
    const auto e = oracle::random_edges(3, 11, 0.45, rng);
    Hypergraph small(3, 10);
    for (const auto& t : e.edges)
      if (t.back() < 10) small.add_edge(HyperEdge(Tuple(t.begin(), t.end())));
    const auto prev = max_clique_heuristic(small, heuristic());
    const auto g = from_oracle(e);
    const VertexId fresh[] = {10};
    const auto r = incremental_search(g, prev, fresh, heuristic());
    EXPECT_GE(r.size(), prev.size());
    EXPECT_TRUE(g.is_clique(r.vertices));
  }
}
