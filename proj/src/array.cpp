#include "bamsim/array.hpp"

namespace bamsim {

ArrayLayout::ArrayLayout(ArraySpec spec, uint32_t line_size) : spec_(std::move(spec)), line_size_(line_size) {
  if (!is_power_of_two(line_size_) || line_size_ < kBlockSize) throw ConfigError("bad line size");
  if (spec_.element_size == 0 || line_size_ % spec_.element_size != 0) {
    throw ConfigError("array '" + spec_.name + "': element size must divide the line size");
  }
  blocks_per_line_ = line_size_ / kBlockSize;
  lines_needed_ = (spec_.length * spec_.element_size + line_size_ - 1) / line_size_;
  uint64_t lines = 0;
  for (const Extent& e : spec_.extents) {
    if (e.block_count % blocks_per_line_ != 0 || e.start_lba % blocks_per_line_ != 0) {
      throw ConfigError("array '" + spec_.name + "': extents must be line aligned and hold whole lines");
    }
    first_line_.push_back(lines);
    lines += e.block_count / blocks_per_line_;
  }
  if (lines < lines_needed_) throw ConfigError("array '" + spec_.name + "': extents too small for its length");
}

LineId ArrayLayout::line(uint64_t line_index) const {
  if (line_index >= lines_needed_) throw RangeError("array line out of range");
  const auto it = std::upper_bound(first_line_.begin(), first_line_.end(), line_index);
  const size_t x = static_cast<size_t>(it - first_line_.begin()) - 1;
  const Extent& e = spec_.extents[x];
  return LineId{e.device, e.start_lba + (line_index - first_line_[x]) * blocks_per_line_};
}

LineLocation ArrayLayout::locate(uint64_t i) const {
  if (i >= spec_.length) {
    throw RangeError("array '" + spec_.name + "': index " + std::to_string(i) + " out of range");
  }
  const uint64_t byte = i * spec_.element_size;
  const uint64_t li = byte / line_size_;
  return LineLocation{line(li), li, static_cast<uint32_t>(byte % line_size_)};
}

uint64_t array_blocks(uint32_t element_size, uint64_t length, uint32_t line_size) {
  const uint64_t lines = (uint64_t{element_size} * length + line_size - 1) / line_size;
  return lines * (line_size / kBlockSize);
}

ArraySpec contiguous_array(std::string name, uint32_t element_size, uint64_t length, uint32_t device,
                           uint64_t start_lba, uint32_t line_size) {
  ArraySpec s;
  s.name = std::move(name);
  s.element_size = element_size;
  s.length = length;
  s.extents.push_back({device, start_lba, array_blocks(element_size, length, line_size)});
  return s;
}

namespace {

template <typename Fn>
void for_each_extent(const ArraySpec& spec, uint64_t image_bytes, Fn&& fn) {
  uint64_t pos = 0;
  for (const Extent& e : spec.extents) {
    if (pos >= image_bytes) break;
    const uint64_t n = std::min<uint64_t>(e.block_count * kBlockSize, image_bytes - pos);
    fn(e, pos, n);
    pos += n;
  }
  if (pos < image_bytes) throw RangeError("array '" + spec.name + "': image larger than its extents");
}

}  // namespace

void store_array(std::span<SimDevice* const> devices, const ArraySpec& spec, std::span<const std::byte> image) {
  for_each_extent(spec, image.size(), [&](const Extent& e, uint64_t pos, uint64_t n) {
    devices[e.device]->store_blocks(e.start_lba, image.subspan(pos, n));
  });
}

void load_array(std::span<SimDevice* const> devices, const ArraySpec& spec, std::span<std::byte> image) {
  for_each_extent(spec, image.size(), [&](const Extent& e, uint64_t pos, uint64_t n) {
    devices[e.device]->load_blocks(e.start_lba, image.subspan(pos, n));
  });
}

}  // namespace bamsim
