#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "mirrorbench/nand_chip.hpp"

namespace mirrorbench {

// Inclusive range of logical page numbers.
struct LpnRange {
  std::uint32_t first = 0;
  std::uint32_t last = 0;

  bool contains(std::uint32_t lpn) const { return lpn >= first && lpn <= last; }
  std::uint32_t size() const { return last - first + 1; }
  friend bool operator==(const LpnRange&, const LpnRange&) = default;
};

// 16-byte per-sector index record written behind every sector's data.
//   [0..4)   logical page number, LE
//   [4..8)   sequence number, LE
//   [8]      flags
//   [9..14)  reserved, zero
//   [14..16) CRC-16 of bytes [0..14), LE
struct SectorIndex {
  static constexpr std::uint8_t kValid = 0x01;
  static constexpr std::uint8_t kCounterRegion = 0x02;
  static constexpr std::size_t kSize = 16;

  std::uint32_t lpn = 0;
  std::uint32_t seq = 0;
  std::uint8_t flags = kValid;

  std::array<std::uint8_t, kSize> encode() const;
  static std::optional<SectorIndex> decode(std::span<const std::uint8_t> bytes);

  friend bool operator==(const SectorIndex&, const SectorIndex&) = default;
};

// Logical addresses use the same 24-bit row space as the physical bus.
inline constexpr std::uint32_t kLogicalSpaceSize = 1u << 24;

struct FtlConfig {
  // Writes to these ranges erase and rewrite the backing block in place
  // when bug_enabled is set.
  std::vector<LpnRange> hot_bug_regions = default_hot_regions();
  bool bug_enabled = false;
  // Pages in these ranges carry the counter flag and go to their own
  // write stream so they never share a block with bulk data.
  std::vector<LpnRange> counter_regions;
  // Physical blocks the FTL neither scans nor allocates, in addition to the
  // chip's hidden regions.
  std::vector<std::uint32_t> reserved_blocks;

  static std::vector<LpnRange> default_hot_regions();
};

struct MapEntry {
  PageAddress addr;
  std::uint32_t seq = 0;
  friend bool operator==(const MapEntry&, const MapEntry&) = default;
};

using LogicalMap = std::map<std::uint32_t, MapEntry>;

struct RebuildResult {
  LogicalMap map;
  std::vector<PageAddress> corrupt;
  std::uint32_t max_seq = 0;
};

// Reconstructs the logical map from index bytes alone. Bad and reserved
// blocks (including the chip's hidden regions) are skipped.
RebuildResult rebuild_map(const NandChip& chip, std::span<const std::uint32_t> reserved_blocks = {});

// Splits a physical page into its data bytes and the per-sector index copies.
std::vector<std::uint8_t> page_data(const NandGeometry& geometry, std::span<const std::uint8_t> payload);
std::optional<SectorIndex> page_index(const NandGeometry& geometry, std::span<const std::uint8_t> payload);

struct LpnHistory {
  std::uint64_t writes = 0;
  std::uint32_t first_block = 0;
  bool block_changed = false;
};

class Ftl {
 public:
  // Mounts onto whatever is on the chip: map, sequence counter and open
  // write blocks are all derived from media.
  Ftl(NandChip& chip, FtlConfig config);

  PageAddress logical_write(std::uint32_t lpn, std::span<const std::uint8_t> data);
  std::vector<std::uint8_t> logical_read(std::uint32_t lpn) const;
  std::size_t reclaim();

  const LogicalMap& map() const { return map_; }
  const std::vector<PageAddress>& corrupt_pages() const { return corrupt_; }
  const std::map<std::uint32_t, LpnHistory>& history() const { return history_; }
  std::uint64_t logical_capacity() const { return capacity_; }
  bool is_mapped(std::uint32_t lpn) const { return map_.contains(lpn); }
  std::optional<PageAddress> lookup(std::uint32_t lpn) const;
  const FtlConfig& config() const { return config_; }
  NandChip& chip() { return chip_; }

 private:
  enum Stream { kData = 0, kCounter = 1, kStreams = 2 };
  struct Cursor {
    std::optional<std::uint32_t> block;
    std::uint32_t next_page = 0;
  };
  struct LivePage {
    std::uint32_t page;
    SectorIndex index;
    std::vector<std::uint8_t> data;
  };

  bool reserved(std::uint32_t block) const;
  bool is_counter(std::uint32_t lpn) const;
  bool is_hot(std::uint32_t lpn) const;
  std::size_t page_slot(PageAddress addr) const;
  bool block_free(std::uint32_t block) const;
  std::size_t free_block_count() const;
  std::optional<std::uint32_t> pick_free_block() const;
  std::optional<std::uint32_t> pick_victim() const;
  std::uint32_t live_count(std::uint32_t block) const;
  bool block_has_corrupt(std::uint32_t block) const;

  PageAddress allocate(Stream stream);
  PageAddress program(PageAddress addr, const SectorIndex& index, std::span<const std::uint8_t> data);
  void relocate(std::uint32_t victim, Stream stream);
  PageAddress rewrite_in_place(std::uint32_t lpn, std::span<const std::uint8_t> data);
  void record_history(std::uint32_t lpn, PageAddress addr);
  void erase(std::uint32_t block);

  NandChip& chip_;
  FtlConfig config_;
  std::vector<std::uint32_t> reserved_;
  LogicalMap map_;
  std::vector<PageAddress> corrupt_;
  std::vector<bool> corrupt_slot_;
  // Owning lpn of each physical page while it is live.
  std::vector<std::uint32_t> owner_;
  std::array<Cursor, kStreams> cursors_{};
  std::uint32_t next_seq_ = 1;
  std::uint64_t capacity_ = 0;
  std::map<std::uint32_t, LpnHistory> history_;
};

}  // namespace mirrorbench
