#pragma once

// Columnar trip-record stand-in: six 8-byte metric columns.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace bamsim {

inline constexpr std::array<const char*, 6> kColumnNames = {"distance", "total_cost", "surcharge",
                                                            "hail_fee", "tolls",      "taxes"};
// Rows with distance >= this qualify.
inline constexpr uint64_t kDistanceThreshold = 30;

struct DatasetSpec {
  uint64_t rows = 1'000'000;
  double selectivity = 0.0003;
  // Qualifying rows packed into runs of this many consecutive rows
  // (1 = uniformly scattered).
  uint32_t cluster = 1;
  uint64_t seed = 1;
};

struct ColumnarDataset {
  uint64_t num_rows = 0;
  std::array<std::vector<uint64_t>, 6> columns;

  const std::vector<uint64_t>& distance() const { return columns[0]; }
  bool qualifies(uint64_t row) const { return columns[0][row] >= kDistanceThreshold; }
  std::vector<uint64_t> qualifying_rows() const;
  bool operator==(const ColumnarDataset&) const = default;
};

// Exactly round(rows * selectivity) qualifying rows, placed deterministically.
ColumnarDataset gen_dataset(const DatasetSpec& spec);

// Reference answer: level 0 counts qualifying rows; level k sums columns
// 1..k over them.
uint64_t reference_answer(const ColumnarDataset& ds, uint32_t level);

// Little-endian [u64 rows][6 columns of u64].
void store_dataset(const ColumnarDataset& ds, const std::string& path);
ColumnarDataset load_dataset(const std::string& path);

}  // namespace bamsim
