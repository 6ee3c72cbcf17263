#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace bamsim {

struct CsrGraph {
  uint64_t num_nodes = 0;
  uint64_t num_edges = 0;
  std::vector<uint64_t> row_offsets;  // num_nodes + 1
  std::vector<uint64_t> col_indices;  // num_edges

  // Throws ConfigError if the CSR invariants do not hold.
  void validate() const;
  bool operator==(const CsrGraph&) const = default;
};

enum class GraphKind : uint8_t { uniform, kron };
GraphKind parse_graph_kind(std::string_view s);

// Deterministic under `seed`. Undirected graphs store both directions of every
// edge; either way num_edges == nodes * avg_degree (self loops are redrawn,
// duplicate edges kept). kron draws R-MAT (0.57, 0.19, 0.19, 0.05) endpoints.
CsrGraph gen_graph(GraphKind kind, uint64_t nodes, uint32_t avg_degree, uint64_t seed, bool undirected = true);

// Little-endian [u64 nodes][u64 edges][row_offsets][col_indices].
void store_graph(const CsrGraph& g, const std::string& path);
CsrGraph load_graph(const std::string& path);

}  // namespace bamsim
