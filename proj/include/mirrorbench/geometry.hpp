#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace mirrorbench {

// Page status bytes as they appear in a raw dump.
inline constexpr std::uint8_t kStatusErased = 0x49;
inline constexpr std::uint8_t kStatusProgrammed = 0x61;
inline constexpr std::uint8_t kStatusHidden = 0x40;

struct NandGeometry {
  std::uint32_t planes = 2;
  std::uint32_t blocks_per_plane = 1064;
  std::uint32_t pages_per_block = 256;
  std::uint32_t sectors_per_page = 4;
  std::uint32_t sector_data_bytes = 4096;
  std::uint32_t sector_index_bytes = 16;

  std::uint32_t sector_total_bytes() const { return sector_data_bytes + sector_index_bytes; }
  std::uint32_t page_total_bytes() const { return sectors_per_page * sector_total_bytes(); }
  std::uint32_t page_data_bytes() const { return sectors_per_page * sector_data_bytes; }
  std::uint32_t block_count() const { return planes * blocks_per_plane; }
  std::uint64_t page_count() const {
    return std::uint64_t{block_count()} * pages_per_block;
  }
  std::uint64_t total_bytes() const { return page_count() * page_total_bytes(); }

  // Throws InvalidGeometry on zero counts or when the row address cannot
  // represent the array (page index is 8 bits, block index is 15 bits).
  void validate() const;

  friend bool operator==(const NandGeometry&, const NandGeometry&) = default;
};

// 2 planes x 1064 blocks x 256 pages, 4 x (4096 + 16) byte sectors.
NandGeometry iphone5c_8g();
// 1 plane x 16 blocks x 16 pages, 4 x (256 + 16) byte sectors.
NandGeometry desk_small();

std::optional<NandGeometry> profile_by_name(std::string_view name);

// 24-bit row address: bits[7:0] page-in-block, bits[22:8] linear block
// (plane-major), bit 23 selects the hidden view.
class PageAddress {
 public:
  static constexpr std::uint32_t kHiddenBit = 1u << 23;
  static constexpr std::uint32_t kMaxRow = 0x00FFFFFF;

  constexpr PageAddress() = default;
  constexpr explicit PageAddress(std::uint32_t row) : row_(row) {}

  static constexpr PageAddress make(std::uint32_t block, std::uint32_t page, bool hidden = false) {
    return PageAddress(((block & 0x7FFF) << 8) | (page & 0xFF) | (hidden ? kHiddenBit : 0));
  }

  constexpr std::uint32_t row() const { return row_; }
  constexpr std::uint32_t page() const { return row_ & 0xFF; }
  constexpr std::uint32_t block() const { return (row_ >> 8) & 0x7FFF; }
  constexpr bool hidden() const { return (row_ & kHiddenBit) != 0; }
  constexpr PageAddress physical() const { return PageAddress(row_ & ~kHiddenBit); }

  friend constexpr bool operator==(PageAddress, PageAddress) = default;
  friend constexpr auto operator<=>(PageAddress, PageAddress) = default;

 private:
  std::uint32_t row_ = 0;
};

std::string to_hex_row(PageAddress addr);

}  // namespace mirrorbench
