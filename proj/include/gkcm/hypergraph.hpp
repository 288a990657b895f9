#pragma once

// k-uniform hypergraph storage with the per-vertex derived quantities the
// clique searches query: neighborhood N(v), degree d(v) = |N(v)| and the
// edge set E(v) of (k-1)-tuple stubs.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <istream>
#include <mutex>
#include <ostream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace gkcm {

using VertexId = std::uint32_t;
using Tuple = std::vector<VertexId>;

class HypergraphError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Binomial coefficient; saturates at UINT64_MAX instead of overflowing.
inline std::uint64_t binomial(std::uint64_t n, std::uint64_t k) {
  if (k > n) return 0;
  k = std::min(k, n - k);
  unsigned __int128 r = 1;
  for (std::uint64_t i = 1; i <= k; ++i) {
    r = r * (n - k + i) / i;
    if (r > UINT64_MAX) return UINT64_MAX;
  }
  return static_cast<std::uint64_t>(r);
}

// Calls fn(span) for every sorted c-subset of `set` (which must be sorted),
// in lexicographic order. Returns false early if fn returns false.
template <typename Fn>
bool for_each_combination(std::span<const VertexId> set, std::size_t c, Fn&& fn) {
  if (c > set.size()) return true;
  std::vector<std::size_t> idx(c);
  for (std::size_t i = 0; i < c; ++i) idx[i] = i;
  Tuple out(c);
  const std::size_t n = set.size();
  while (true) {
    for (std::size_t i = 0; i < c; ++i) out[i] = set[idx[i]];
    if constexpr (std::is_same_v<std::invoke_result_t<Fn, std::span<const VertexId>>, bool>) {
      if (!fn(std::span<const VertexId>(out))) return false;
    } else {
      fn(std::span<const VertexId>(out));
    }
    std::size_t i = c;
    while (i > 0 && idx[i - 1] == n - c + i - 1) --i;
    if (i == 0) return true;
    ++idx[i - 1];
    for (std::size_t j = i; j < c; ++j) idx[j] = idx[j - 1] + 1;
  }
}

// All C(|s|, c) canonical c-subsets of s. s need not be sorted.
inline std::vector<Tuple> combinations_of_size(std::span<const VertexId> s, std::size_t c) {
  if (c > s.size())
    throw std::invalid_argument("combinations_of_size: c=" + std::to_string(c) +
                                " exceeds set size " + std::to_string(s.size()));
  Tuple sorted(s.begin(), s.end());
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
    throw std::invalid_argument("combinations_of_size: duplicate elements");
  std::vector<Tuple> out;
  out.reserve(binomial(sorted.size(), c));
  for_each_combination(sorted, c, [&](std::span<const VertexId> t) {
    out.emplace_back(t.begin(), t.end());
  });
  return out;
}

// Packs sorted tuples of at most k vertices into one 64-bit key. Each vertex
// gets 64/k bits, so vertex ids must stay below 2^(64/k).
class TupleCodec {
 public:
  explicit TupleCodec(std::size_t k) : bits_(static_cast<unsigned>(64 / k)) {}

  std::uint64_t max_vertices() const {
    return bits_ >= 64 ? UINT64_MAX : (std::uint64_t{1} << bits_);
  }

  std::uint64_t pack(std::span<const VertexId> t) const {
    std::uint64_t key = 0;
    for (std::size_t i = 0; i < t.size(); ++i) key |= std::uint64_t{t[i]} << (bits_ * i);
    return key;
  }

  // Packs the sorted merge of `t` and `extra` (extra not in t).
  std::uint64_t pack_with(std::span<const VertexId> t, VertexId extra) const {
    std::uint64_t key = 0;
    std::size_t slot = 0;
    bool placed = false;
    for (VertexId v : t) {
      if (!placed && extra < v) {
        key |= std::uint64_t{extra} << (bits_ * slot++);
        placed = true;
      }
      key |= std::uint64_t{v} << (bits_ * slot++);
    }
    if (!placed) key |= std::uint64_t{extra} << (bits_ * slot);
    return key;
  }

 private:
  unsigned bits_;
};

// Sorted, duplicate-free k-tuple.
class HyperEdge {
 public:
  HyperEdge() = default;
  explicit HyperEdge(Tuple vertices) : v_(std::move(vertices)) {
    std::sort(v_.begin(), v_.end());
    if (std::adjacent_find(v_.begin(), v_.end()) != v_.end())
      throw HypergraphError("hyperedge has duplicate vertices");
  }
  HyperEdge(std::initializer_list<VertexId> vs) : HyperEdge(Tuple(vs)) {}

  std::span<const VertexId> vertices() const { return v_; }
  std::size_t arity() const { return v_.size(); }
  VertexId operator[](std::size_t i) const { return v_[i]; }
  auto operator<=>(const HyperEdge&) const = default;

 private:
  Tuple v_;
};

struct VertexEdgeSet {
  VertexId owner = 0;
  std::vector<Tuple> stubs;  // lexicographically sorted
};

class Hypergraph {
 public:
  explicit Hypergraph(std::size_t k, std::size_t n = 0) : k_(k), n_(0), codec_(k < 2 ? 2 : k) {
    if (k < 2) throw HypergraphError("hypergraph arity k must be >= 2");
    add_vertices(n);
  }

  Hypergraph(const Hypergraph& o)
      : k_(o.k_), n_(o.n_), codec_(o.codec_), edges_(o.edges_), edge_keys_(o.edge_keys_) {}
  Hypergraph& operator=(const Hypergraph& o) {
    if (this != &o) {
      k_ = o.k_;
      n_ = o.n_;
      codec_ = o.codec_;
      edges_ = o.edges_;
      edge_keys_ = o.edge_keys_;
      invalidate();
    }
    return *this;
  }
  Hypergraph(Hypergraph&& o) noexcept
      : k_(o.k_), n_(o.n_), codec_(o.codec_), edges_(std::move(o.edges_)),
        edge_keys_(std::move(o.edge_keys_)) {}
  Hypergraph& operator=(Hypergraph&& o) noexcept {
    k_ = o.k_;
    n_ = o.n_;
    codec_ = o.codec_;
    edges_ = std::move(o.edges_);
    edge_keys_ = std::move(o.edge_keys_);
    invalidate();
    return *this;
  }

  std::size_t k() const { return k_; }
  std::size_t num_vertices() const { return n_; }
  std::size_t num_edges() const { return edges_.size(); }
  const TupleCodec& codec() const { return codec_; }

  // |edges| / C(n, k); 0 when C(n, k) == 0.
  double density() const {
    const auto total = binomial(n_, k_);
    return total == 0 ? 0.0 : static_cast<double>(edges_.size()) / static_cast<double>(total);
  }

  // Appends vertices; returns the first new id.
  VertexId add_vertices(std::size_t count) {
    if (n_ + count > codec_.max_vertices())
      throw HypergraphError("vertex count " + std::to_string(n_ + count) +
                            " exceeds the packing limit for k=" + std::to_string(k_));
    const auto first = static_cast<VertexId>(n_);
    n_ += count;
    invalidate();
    return first;
  }

  // Inserts e in canonical form. Returns false if it was already present.
  bool add_edge(const HyperEdge& e) {
    if (e.arity() != k_)
      throw HypergraphError("edge arity " + std::to_string(e.arity()) + " != k=" + std::to_string(k_));
    for (VertexId v : e.vertices())
      if (v >= n_) throw HypergraphError("edge vertex " + std::to_string(v) + " out of range");
    const auto key = codec_.pack(e.vertices());
    if (!edge_keys_.insert(key).second) return false;
    edges_.push_back(e);
    invalidate();
    return true;
  }
  bool add_edge(std::initializer_list<VertexId> vs) { return add_edge(HyperEdge(vs)); }

  bool has_edge(std::span<const VertexId> sorted_tuple) const {
    return sorted_tuple.size() == k_ && edge_keys_.count(codec_.pack(sorted_tuple)) != 0;
  }

  // Insertion order.
  const std::vector<HyperEdge>& edges() const { return edges_; }

  // Edges in lexicographic order.
  std::vector<HyperEdge> sorted_edges() const {
    auto out = edges_;
    std::sort(out.begin(), out.end());
    return out;
  }

  // Builds neighborhoods and edge sets. Called lazily by the queries below;
  // call it explicitly before sharing the graph across threads to keep the
  // build out of timed regions.
  void build_index() const {
    if (indexed_.load(std::memory_order_acquire)) return;
    std::lock_guard lock(index_mutex_);
    if (indexed_.load(std::memory_order_relaxed)) return;
    Index idx;
    idx.neighbors.assign(n_, {});
    idx.stub_keys.assign(n_, {});
    idx.incident.assign(n_, {});
    idx.adjacent.assign(n_ * n_, false);
    Tuple stub;
    for (std::size_t ei = 0; ei < edges_.size(); ++ei) {
      const auto vs = edges_[ei].vertices();
      for (std::size_t a = 0; a < vs.size(); ++a) {
        stub.clear();
        for (std::size_t b = 0; b < vs.size(); ++b)
          if (b != a) {
            stub.push_back(vs[b]);
            idx.adjacent[vs[a] * n_ + vs[b]] = true;
          }
        idx.stub_keys[vs[a]].insert(codec_.pack(stub));
        idx.incident[vs[a]].push_back(static_cast<std::uint32_t>(ei));
      }
    }
    for (std::size_t v = 0; v < n_; ++v)
      for (std::size_t w = 0; w < n_; ++w)
        if (idx.adjacent[v * n_ + w]) idx.neighbors[v].push_back(static_cast<VertexId>(w));
    index_ = std::move(idx);
    indexed_.store(true, std::memory_order_release);
  }

  // N(v), sorted ascending.
  std::span<const VertexId> neighborhood(VertexId v) const {
    check_vertex(v);
    build_index();
    return index_.neighbors[v];
  }

  // d(v) = |N(v)|, not the incident-edge count.
  std::size_t degree(VertexId v) const { return neighborhood(v).size(); }

  bool adjacent(VertexId a, VertexId b) const {
    build_index();
    return index_.adjacent[std::size_t{a} * n_ + b];
  }

  std::size_t incident_edge_count(VertexId v) const {
    check_vertex(v);
    build_index();
    return index_.incident[v].size();
  }

  // Indices into edges() of the edges containing v.
  std::span<const std::uint32_t> incident_edges(VertexId v) const {
    check_vertex(v);
    build_index();
    return index_.incident[v];
  }

  VertexEdgeSet vertex_edge_set(VertexId v) const {
    check_vertex(v);
    build_index();
    VertexEdgeSet out{v, {}};
    out.stubs.reserve(index_.incident[v].size());
    for (auto ei : index_.incident[v]) {
      Tuple stub;
      for (VertexId w : edges_[ei].vertices())
        if (w != v) stub.push_back(w);
      out.stubs.push_back(std::move(stub));
    }
    std::sort(out.stubs.begin(), out.stubs.end());
    return out;
  }

  // Membership of a packed (k-1)-stub in E(v). The hot check of the searches.
  bool has_stub_key(VertexId v, std::uint64_t key) const {
    return index_.stub_keys[v].count(key) != 0;
  }
  bool has_stub(VertexId v, std::span<const VertexId> sorted_stub) const {
    check_vertex(v);
    build_index();
    return sorted_stub.size() + 1 == k_ && has_stub_key(v, codec_.pack(sorted_stub));
  }

  // True iff |s| < k or every k-subset of s is an edge.
  bool is_clique(std::span<const VertexId> s) const {
    Tuple sorted(s.begin(), s.end());
    std::sort(sorted.begin(), sorted.end());
    for (VertexId v : sorted) check_vertex(v);
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
      throw HypergraphError("is_clique: duplicate vertex");
    if (sorted.size() < k_) return true;
    return for_each_combination(sorted, k_, [&](std::span<const VertexId> t) { return has_edge(t); });
  }

  // Subgraph induced by `keep`; vertex i of the result is keep[i].
  Hypergraph induced(std::span<const VertexId> keep) const {
    std::vector<std::int64_t> remap(n_, -1);
    for (std::size_t i = 0; i < keep.size(); ++i) remap[keep[i]] = static_cast<std::int64_t>(i);
    Hypergraph out(k_, keep.size());
    Tuple t(k_);
    for (const auto& e : edges_) {
      bool ok = true;
      for (std::size_t i = 0; i < k_ && ok; ++i) {
        const auto m = remap[e[i]];
        ok = m >= 0;
        if (ok) t[i] = static_cast<VertexId>(m);
      }
      if (ok) out.add_edge(HyperEdge(t));
    }
    return out;
  }

  friend bool operator==(const Hypergraph& a, const Hypergraph& b) {
    return a.k_ == b.k_ && a.n_ == b.n_ && a.edge_keys_ == b.edge_keys_;
  }

 private:
  struct Index {
    std::vector<std::vector<VertexId>> neighbors;
    std::vector<std::unordered_set<std::uint64_t>> stub_keys;
    std::vector<std::vector<std::uint32_t>> incident;
    std::vector<bool> adjacent;
  };

  void check_vertex(VertexId v) const {
    if (v >= n_) throw HypergraphError("vertex " + std::to_string(v) + " out of range [0, " +
                                       std::to_string(n_) + ")");
  }
  void invalidate() {
    indexed_.store(false, std::memory_order_release);
    index_ = {};
  }

  std::size_t k_;
  std::size_t n_;
  TupleCodec codec_;
  std::vector<HyperEdge> edges_;
  std::unordered_set<std::uint64_t> edge_keys_;
  mutable std::mutex index_mutex_;
  mutable std::atomic<bool> indexed_{false};
  mutable Index index_;
};

// Text format: "k n" header, then one edge per line; '#' starts a comment line.
inline void write_hypergraph(std::ostream& os, const Hypergraph& g) {
  os << g.k() << ' ' << g.num_vertices() << '\n';
  for (const auto& e : g.sorted_edges()) {
    for (std::size_t i = 0; i < e.arity(); ++i) os << (i ? " " : "") << e[i];
    os << '\n';
  }
}

inline std::string to_text(const Hypergraph& g) {
  std::ostringstream os;
  write_hypergraph(os, g);
  return os.str();
}

inline Hypergraph read_hypergraph(std::istream& is) {
  std::string line;
  std::size_t line_no = 0;
  auto next_line = [&]() -> bool {
    while (std::getline(is, line)) {
      ++line_no;
      const auto first = line.find_first_not_of(" \t\r");
      if (first == std::string::npos || line[first] == '#') continue;
      return true;
    }
    return false;
  };
  if (!next_line()) throw HypergraphError("hypergraph text: missing 'k n' header");
  std::istringstream header(line);
  long long k = -1, n = -1;
  if (!(header >> k >> n) || k < 2 || n < 0)
    throw HypergraphError("hypergraph text: bad header on line " + std::to_string(line_no));
  Hypergraph g(static_cast<std::size_t>(k), static_cast<std::size_t>(n));
  while (next_line()) {
    std::istringstream row(line);
    Tuple t;
    long long v;
    while (row >> v) {
      if (v < 0) throw HypergraphError("hypergraph text: negative vertex on line " + std::to_string(line_no));
      t.push_back(static_cast<VertexId>(v));
    }
    if (!row.eof())
      throw HypergraphError("hypergraph text: non-integer token on line " + std::to_string(line_no));
    try {
      g.add_edge(HyperEdge(std::move(t)));
    } catch (const HypergraphError& err) {
      throw HypergraphError("hypergraph text line " + std::to_string(line_no) + ": " + err.what());
    }
  }
  return g;
}

inline Hypergraph from_text(const std::string& text) {
  std::istringstream is(text);
  return read_hypergraph(is);
}

}  // namespace gkcm
