#include <gtest/gtest.h>

#include <string_view>

#include "mirrorbench/checksum.hpp"
#include "mirrorbench/geometry.hpp"
#include "mirrorbench/nand_chip.hpp"
#include "test_support.hpp"

using namespace mirrorbench;
using mbtest::filled;

namespace {

std::vector<std::uint8_t> bytes_of(std::string_view s) { return {s.begin(), s.end()}; }

}  // namespace

// Expected values come from tests/oracles/compute_oracles.py (bitwise CRC).
TEST(Checksum, MatchesBitwiseOracle) {
  EXPECT_EQ(crc16(bytes_of("123456789")), 0x29B1);
  EXPECT_EQ(crc16({}), 0xFFFF);
  EXPECT_EQ(page_checksum(filled(1088, 0xFF)), 0xB75A);
  EXPECT_EQ(page_checksum(filled(16448, 0xFF)), 0x1540);
}

TEST(Checksum, ChainsAcrossSplits) {
  const auto data = bytes_of("the quick brown fox");
  const std::span<const std::uint8_t> all(data);
  EXPECT_EQ(crc16(all.subspan(7), crc16(all.first(7))), crc16(all));
}

TEST(Geometry, ProfilesAndSizes) {
  const auto big = iphone5c_8g();
  EXPECT_EQ(big.block_count(), 2128u);
  EXPECT_EQ(big.page_total_bytes(), 16448u);
  EXPECT_EQ(big.page_data_bytes(), 16384u);
  EXPECT_EQ(big.page_count(), 2128ull * 256);

  const auto small = desk_small();
  EXPECT_EQ(small.block_count(), 16u);
  EXPECT_EQ(small.pages_per_block, 16u);
  EXPECT_EQ(small.page_total_bytes(), 1088u);
  EXPECT_EQ(profile_by_name("desk-small"), small);
  EXPECT_EQ(profile_by_name("iphone5c-8g"), big);
  EXPECT_FALSE(profile_by_name("iphone6"));
}

TEST(Geometry, ValidateRejects) {
  auto g = desk_small();
  g.pages_per_block = 0;
  EXPECT_THROW(g.validate(), Error);
  g = desk_small();
  g.pages_per_block = 257;
  EXPECT_THROW(g.validate(), Error);
  g = desk_small();
  g.planes = 2;
  g.blocks_per_plane = 0x4001;
  EXPECT_THROW(g.validate(), Error);
  EXPECT_THROW(NandChip(g, 10, 1), Error);
}

TEST(PageAddress, Fields) {
  const auto a = PageAddress::make(0x41A, 0x11, true);
  EXPECT_EQ(a.row(), 0x841A11u);
  EXPECT_EQ(a.block(), 0x41Au);
  EXPECT_EQ(a.page(), 0x11u);
  EXPECT_TRUE(a.hidden());
  EXPECT_FALSE(a.physical().hidden());
  EXPECT_EQ(a.physical().block(), 0x41Au);
  EXPECT_EQ(to_hex_row(a), "0x00841A11");
}

TEST(HiddenMapping, KnownRows) {
  const std::pair<std::uint32_t, std::uint32_t> rows[] = {{0, 0}, {1, 1}, {2, 3}, {3, 5}, {4, 7},
                                                          {5, 9}, {6, 11}, {7, 13}, {8, 15}, {9, 0x11}};
  for (auto [n, p] : rows) EXPECT_EQ(hidden_to_physical(n, 256), p) << n;
  EXPECT_EQ(hidden_to_physical(128, 256), 255u);
  try {
    hidden_to_physical(129, 256);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ResultOutOfBlock);
  }
  EXPECT_THROW(hidden_to_physical(9, 16), Error);
}

class ChipTest : public ::testing::Test {
 protected:
  NandGeometry g = desk_small();
  NandChip chip{g, 3, 42};
  std::vector<std::uint8_t> page = filled(g.page_total_bytes(), 0xA5);
};

TEST_F(ChipTest, FreshReadsErased) {
  const auto r = chip.read_page(PageAddress::make(3, 4));
  EXPECT_EQ(r.status, kStatusErased);
  EXPECT_EQ(r.payload, filled(g.page_total_bytes(), 0xFF));
  EXPECT_FALSE(r.soft_error);
  EXPECT_EQ(chip.id_bytes()[0], 0x45);
  EXPECT_EQ(chip.id_bytes()[1], 0xDE);
}

TEST_F(ChipTest, ProgramThenRead) {
  chip.program_page(PageAddress::make(2, 5), page);
  const auto r = chip.read_page(PageAddress::make(2, 5));
  EXPECT_EQ(r.status, kStatusProgrammed);
  EXPECT_EQ(r.payload, page);
}

TEST_F(ChipTest, ProgramErrors) {
  auto code_of = [](auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::InvalidArgument;
  };
  chip.program_page(PageAddress::make(1, 0), page);
  EXPECT_EQ(code_of([&] { chip.program_page(PageAddress::make(1, 0), page); }), ErrorCode::ProgramOnDirtyPage);
  EXPECT_EQ(code_of([&] { chip.program_page(PageAddress::make(1, 1), filled(10, 0)); }),
            ErrorCode::PayloadSizeMismatch);
  EXPECT_EQ(code_of([&] { chip.program_page(PageAddress::make(1, 1, true), page); }), ErrorCode::HiddenViewWrite);
  EXPECT_EQ(code_of([&] { chip.program_page(PageAddress::make(16, 0), page); }), ErrorCode::BlockOutOfRange);
  EXPECT_EQ(code_of([&] { chip.program_page(PageAddress::make(1, 16), page); }), ErrorCode::PageOutOfRange);
}

TEST_F(ChipTest, EraseClearsAndCounts) {
  chip.program_page(PageAddress::make(4, 0), page);
  chip.erase_block(4);
  EXPECT_TRUE(chip.page_erased(PageAddress::make(4, 0)));
  EXPECT_EQ(chip.erase_count(4), 1u);
  chip.program_page(PageAddress::make(4, 0), page);
  EXPECT_EQ(chip.total_erases(), 1u);
}

TEST_F(ChipTest, EnduranceLimitRetiresBlock) {
  // Limit 3: the fourth erase still completes and leaves the block bad.
  for (int i = 0; i < 3; ++i) chip.erase_block(7);
  EXPECT_FALSE(chip.is_bad(7));
  chip.erase_block(7);
  EXPECT_TRUE(chip.is_bad(7));
  EXPECT_EQ(chip.erase_count(7), 4u);
  EXPECT_THROW(chip.erase_block(7), Error);
  EXPECT_THROW(chip.program_page(PageAddress::make(7, 0), page), Error);
  EXPECT_THROW(chip.read_page(PageAddress::make(7, 0)), Error);
}

TEST_F(ChipTest, HiddenViewStatusBytes) {
  const GateTag tag{1, 2, 3, 4, 5, 6, 7, 8};
  chip.install_hidden_region(15, tag);
  chip.program_page(PageAddress::make(15, 3), page);

  auto locked = chip.read_page(PageAddress::make(15, 2, true));
  EXPECT_EQ(locked.soft_error, ErrorCode::HiddenViewLocked);
  EXPECT_EQ(locked.status, kStatusErased);
  EXPECT_EQ(locked.payload, filled(g.page_total_bytes(), 0xFF));

  GateTag wrong = tag;
  wrong[7] ^= 1;
  EXPECT_FALSE(chip.unlock_hidden(15, wrong));
  EXPECT_FALSE(chip.unlock_hidden(14, tag));
  EXPECT_TRUE(chip.unlock_hidden(15, tag));

  // Hidden n=2 is physical page 3.
  const auto hidden = chip.read_page(PageAddress::make(15, 2, true));
  EXPECT_EQ(hidden.status, kStatusHidden);
  EXPECT_EQ(hidden.payload, page);
  EXPECT_EQ(chip.read_page(PageAddress::make(15, 3)).status, kStatusProgrammed);
  EXPECT_EQ(chip.read_page(PageAddress::make(15, 1, true)).status, kStatusErased);

  chip.lock_hidden_views();
  EXPECT_TRUE(chip.read_page(PageAddress::make(15, 2, true)).soft_error);
}

TEST_F(ChipTest, SameMediaIgnoresSessionState) {
  NandChip other(g, 3, 42);
  const GateTag tag{9, 9, 9, 9, 9, 9, 9, 9};
  chip.install_hidden_region(3, tag);
  other.install_hidden_region(3, tag);
  chip.unlock_hidden(3, tag);
  EXPECT_TRUE(chip.same_media(other));
  other.erase_block(0);
  EXPECT_FALSE(chip.same_media(other));
}
