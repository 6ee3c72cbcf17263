#include "bamsim/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "bamsim/common.hpp"

namespace bamsim {

std::vector<uint64_t> ColumnarDataset::qualifying_rows() const {
  std::vector<uint64_t> rows;
  for (uint64_t r = 0; r < num_rows; ++r) {
    if (qualifies(r)) rows.push_back(r);
  }
  return rows;
}

ColumnarDataset gen_dataset(const DatasetSpec& spec) {
  if (spec.rows == 0) throw ConfigError("dataset needs rows");
  if (!(spec.selectivity >= 0.0 && spec.selectivity <= 1.0)) throw ConfigError("selectivity must be in [0, 1]");
  if (spec.cluster == 0) throw ConfigError("cluster must be positive");
  std::mt19937_64 rng(spec.seed);
  const uint64_t want = static_cast<uint64_t>(std::llround(static_cast<double>(spec.rows) * spec.selectivity));

  // Choose qualifying rows: whole clusters first, sampled without replacement.
  std::vector<bool> hit(spec.rows, false);
  const uint64_t clusters = (spec.rows + spec.cluster - 1) / spec.cluster;
  std::vector<uint64_t> order(clusters);
  std::iota(order.begin(), order.end(), 0);
  uint64_t chosen = 0;
  for (uint64_t i = 0; i < clusters && chosen < want; ++i) {
    const uint64_t j = i + rng() % (clusters - i);
    std::swap(order[i], order[j]);
    const uint64_t first = order[i] * spec.cluster;
    for (uint64_t r = first; r < std::min(first + spec.cluster, spec.rows) && chosen < want; ++r) {
      hit[r] = true;
      ++chosen;
    }
  }

  ColumnarDataset ds;
  ds.num_rows = spec.rows;
  for (auto& c : ds.columns) c.resize(spec.rows);
  for (uint64_t r = 0; r < spec.rows; ++r) {
    ds.columns[0][r] = hit[r] ? kDistanceThreshold + rng() % 70 : rng() % kDistanceThreshold;
    ds.columns[1][r] = 250 + rng() % 20000;  // cents
    ds.columns[2][r] = rng() % 500;
    ds.columns[3][r] = rng() % 300;
    ds.columns[4][r] = rng() % 2000;
    ds.columns[5][r] = rng() % 1500;
  }
  return ds;
}

uint64_t reference_answer(const ColumnarDataset& ds, uint32_t level) {
  if (level > 5) throw ConfigError("query level must be 0..5");
  uint64_t acc = 0;
  for (uint64_t r = 0; r < ds.num_rows; ++r) {
    if (!ds.qualifies(r)) continue;
    if (level == 0) {
      ++acc;
      continue;
    }
    for (uint32_t k = 1; k <= level; ++k) acc += ds.columns[k][r];
  }
  return acc;
}

void store_dataset(const ColumnarDataset& ds, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(&ds.num_rows), 8);
  for (const auto& c : ds.columns) {
    out.write(reinterpret_cast<const char*>(c.data()), static_cast<std::streamsize>(c.size() * 8));
  }
  if (!out) throw IoError("write to '" + path + "' failed");
}

ColumnarDataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  ColumnarDataset ds;
  in.read(reinterpret_cast<char*>(&ds.num_rows), 8);
  if (!in) throw IoError("'" + path + "': truncated header");
  in.seekg(0, std::ios::end);
  const auto size = static_cast<uint64_t>(in.tellg());
  if (ds.num_rows > size / 48 || size != 8 + 48 * ds.num_rows) throw IoError("'" + path + "': size does not match header");
  in.seekg(8);
  for (auto& c : ds.columns) {
    c.resize(ds.num_rows);
    in.read(reinterpret_cast<char*>(c.data()), static_cast<std::streamsize>(c.size() * 8));
  }
  if (!in) throw IoError("'" + path + "': truncated body");
  return ds;
}

}  // namespace bamsim
