#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <vector>

#include "mirrorbench/error.hpp"
#include "mirrorbench/geometry.hpp"

namespace mirrorbench {

using GateTag = std::array<std::uint8_t, 8>;

struct PageRecord {
  std::uint8_t status = kStatusErased;
  // Empty while erased; the logical content is then page_total_bytes of 0xFF.
  std::vector<std::uint8_t> payload;

  bool erased() const { return status == kStatusErased; }
  friend bool operator==(const PageRecord&, const PageRecord&) = default;
};

struct BlockState {
  std::uint32_t erase_count = 0;
  bool is_bad = false;
  std::vector<PageRecord> pages;

  friend bool operator==(const BlockState&, const BlockState&) = default;
};

struct PageRead {
  std::vector<std::uint8_t> payload;
  std::uint8_t status = kStatusErased;
  // Set to HiddenViewLocked when a hidden-view read was refused; payload is
  // then all 0xFF with status 0x49.
  std::optional<ErrorCode> soft_error;
};

// Maps a hidden-view page index onto the physical page of the same block:
// 0 -> 0, 1 -> 1, n -> 2n - 1 for n >= 2. Throws ResultOutOfBlock.
std::uint32_t hidden_to_physical(std::uint32_t n, std::uint32_t pages_per_block);

class NandChip {
 public:
  static constexpr std::uint32_t kDefaultEndurance = 10000;

  NandChip(const NandGeometry& geometry, std::uint32_t endurance_limit, std::uint64_t seed);

  const NandGeometry& geometry() const { return geometry_; }
  std::uint32_t endurance_limit() const { return endurance_limit_; }
  std::uint64_t seed() const { return seed_; }
  // Five ONFI-style identification bytes; the last three are seed-derived.
  std::array<std::uint8_t, 5> id_bytes() const { return id_bytes_; }

  void erase_block(std::uint32_t block);
  void program_page(PageAddress addr, std::span<const std::uint8_t> payload,
                    std::uint8_t status = kStatusProgrammed);
  PageRead read_page(PageAddress addr) const;

  const BlockState& block(std::uint32_t index) const;
  std::uint32_t erase_count(std::uint32_t index) const { return block(index).erase_count; }
  bool is_bad(std::uint32_t index) const { return block(index).is_bad; }
  bool page_erased(PageAddress addr) const;
  std::uint64_t total_erases() const;

  // Hidden view: a configured block exposes remapped pages behind bit 23,
  // readable only after its 8-byte gate tag was presented this session.
  void install_hidden_region(std::uint32_t block, const GateTag& tag);
  const std::map<std::uint32_t, GateTag>& hidden_regions() const { return hidden_regions_; }
  bool unlock_hidden(std::uint32_t block, const GateTag& tag);
  bool hidden_unlocked(std::uint32_t block) const { return unlocked_.contains(block); }
  void lock_hidden_views() { unlocked_.clear(); }

  // Reinstates persisted wear state when a chip is rebuilt from an image.
  void restore_wear(std::uint32_t block, std::uint32_t erase_count, bool is_bad);

  // Compares everything persisted on the media (geometry, wear, pages,
  // hidden table); session unlock state is ignored.
  bool same_media(const NandChip& other) const;

 private:
  BlockState& mutable_block(std::uint32_t index);
  void check_page(PageAddress addr) const;

  NandGeometry geometry_;
  std::uint32_t endurance_limit_;
  std::uint64_t seed_;
  std::array<std::uint8_t, 5> id_bytes_{};
  std::vector<BlockState> blocks_;
  std::map<std::uint32_t, GateTag> hidden_regions_;
  std::set<std::uint32_t> unlocked_;
};

}  // namespace mirrorbench
