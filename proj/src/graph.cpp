#include "bamsim/graph.hpp"

#include <algorithm>
#include <bit>
#include <fstream>
#include <random>

#include "bamsim/common.hpp"

namespace bamsim {

static_assert(std::endian::native == std::endian::little, "graph files are written natively");

void CsrGraph::validate() const {
  if (row_offsets.size() != num_nodes + 1 || col_indices.size() != num_edges) {
    throw ConfigError("csr: array sizes do not match header");
  }
  if (row_offsets.front() != 0 || row_offsets.back() != num_edges) throw ConfigError("csr: bad row offset bounds");
  for (uint64_t v = 0; v < num_nodes; ++v) {
    if (row_offsets[v] > row_offsets[v + 1]) throw ConfigError("csr: row offsets decrease");
  }
  for (uint64_t c : col_indices) {
    if (c >= num_nodes) throw ConfigError("csr: column index out of range");
  }
}

GraphKind parse_graph_kind(std::string_view s) {
  if (s == "uniform") return GraphKind::uniform;
  if (s == "kron") return GraphKind::kron;
  throw ConfigError("unknown graph kind '" + std::string(s) + "' (uniform|kron)");
}

namespace {

uint64_t below(std::mt19937_64& rng, uint64_t n) {
  // Lemire-free simple rejection keeps the stream identical across platforms.
  const uint64_t limit = ~uint64_t{0} - (~uint64_t{0} % n);
  uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % n;
}


}  // namespace

CsrGraph gen_graph(GraphKind kind, uint64_t nodes, uint32_t avg_degree, uint64_t seed, bool undirected) {
  if (nodes < 2) throw ConfigError("graph needs at least two nodes");
  if (avg_degree == 0) throw ConfigError("graph average degree must be positive");
  if (undirected && avg_degree % 2 != 0) throw ConfigError("undirected graphs need an even average degree");
  std::mt19937_64 rng(seed);
  const uint64_t target = nodes * avg_degree;
  const uint64_t draws = undirected ? target / 2 : target;
  const uint32_t scale = static_cast<uint32_t>(std::bit_width(nodes - 1));

  auto draw = [&]() -> std::pair<uint64_t, uint64_t> {
    for (;;) {
      uint64_t u, v;
      if (kind == GraphKind::uniform) {
        u = below(rng, nodes);
        v = below(rng, nodes);
      } else {
        u = v = 0;
        for (uint32_t bit = 0; bit < scale; ++bit) {
          const double r = std::generate_canonical<double, 53>(rng);
          const uint64_t ub = r >= 0.57 + 0.19 ? 1 : 0;                    // quadrants c, d
          const uint64_t vb = (r >= 0.57 && r < 0.76) || r >= 0.95 ? 1 : 0;  // quadrants b, d
          u = (u << 1) | ub;
          v = (v << 1) | vb;
        }
        if (u >= nodes || v >= nodes) continue;
      }
      if (u != v) return {u, v};
    }
  };

  std::vector<std::pair<uint64_t, uint64_t>> edges;
  edges.reserve(target);
  for (uint64_t i = 0; i < draws; ++i) {
    const auto [u, v] = draw();
    edges.emplace_back(u, v);
    if (undirected) edges.emplace_back(v, u);
  }
  std::sort(edges.begin(), edges.end());

  CsrGraph g;
  g.num_nodes = nodes;
  g.num_edges = edges.size();
  g.row_offsets.assign(nodes + 1, 0);
  g.col_indices.resize(edges.size());
  for (size_t i = 0; i < edges.size(); ++i) {
    ++g.row_offsets[edges[i].first + 1];
    g.col_indices[i] = edges[i].second;
  }
  for (uint64_t v = 0; v < nodes; ++v) g.row_offsets[v + 1] += g.row_offsets[v];
  return g;
}

void store_graph(const CsrGraph& g, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(&g.num_nodes), 8);
  out.write(reinterpret_cast<const char*>(&g.num_edges), 8);
  out.write(reinterpret_cast<const char*>(g.row_offsets.data()), static_cast<std::streamsize>(g.row_offsets.size() * 8));
  out.write(reinterpret_cast<const char*>(g.col_indices.data()), static_cast<std::streamsize>(g.col_indices.size() * 8));
  if (!out) throw IoError("write to '" + path + "' failed");
}

CsrGraph load_graph(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  CsrGraph g;
  in.read(reinterpret_cast<char*>(&g.num_nodes), 8);
  in.read(reinterpret_cast<char*>(&g.num_edges), 8);
  if (!in) throw IoError("'" + path + "': truncated header");
  in.seekg(0, std::ios::end);
  const auto size = static_cast<uint64_t>(in.tellg());
  if (g.num_nodes > size / 8 || g.num_edges > size / 8 || size != 16 + 8 * (g.num_nodes + 1 + g.num_edges)) {
    throw IoError("'" + path + "': size does not match header");
  }
  in.seekg(16);
  g.row_offsets.resize(g.num_nodes + 1);
  g.col_indices.resize(g.num_edges);
  in.read(reinterpret_cast<char*>(g.row_offsets.data()), static_cast<std::streamsize>(g.row_offsets.size() * 8));
  in.read(reinterpret_cast<char*>(g.col_indices.data()), static_cast<std::streamsize>(g.col_indices.size() * 8));
  if (!in) throw IoError("'" + path + "': truncated body");
  g.validate();
  return g;
}

}  // namespace bamsim
