#include <gtest/gtest.h>

#include <json.hpp>
#include <numeric>
#include <set>

#include "mirrorbench/wear.hpp"
#include "test_support.hpp"

using namespace mirrorbench;

namespace {

// Roomy enough for the 256-page hot range plus cold data.
NandGeometry wear_geometry() {
  NandGeometry g;
  g.planes = 1;
  g.blocks_per_plane = 64;
  g.pages_per_block = 32;
  g.sectors_per_page = 4;
  g.sector_data_bytes = 64;
  return g;
}

constexpr LpnRange kHot{0x000BB100, 0x000BB1FF};

std::vector<std::uint8_t> data(const NandGeometry& g, std::uint32_t tag) {
  return std::vector<std::uint8_t>(g.page_data_bytes(), static_cast<std::uint8_t>(tag));
}

// Cold fill, then the hot range written once and rewritten `passes` times.
std::map<std::uint32_t, LpnHistory> hammer(NandChip& chip, bool bug, std::uint32_t passes = 4) {
  FtlConfig cfg;
  cfg.bug_enabled = bug;
  Ftl ftl(chip, cfg);
  const auto& g = chip.geometry();
  for (std::uint32_t lpn = 0; lpn < 300; ++lpn) ftl.logical_write(lpn, data(g, lpn));
  for (std::uint32_t pass = 0; pass <= passes; ++pass) {
    for (std::uint32_t lpn = kHot.first; lpn <= kHot.last; lpn += 4) ftl.logical_write(lpn, data(g, pass));
  }
  return ftl.history();
}

std::set<std::uint32_t> blocks_in(const std::vector<BlockRange>& ranges) {
  std::set<std::uint32_t> out;
  for (const auto& r : ranges) {
    for (auto b = r.first; b <= r.last; ++b) out.insert(b);
  }
  return out;
}

}  // namespace

TEST(Histogram, MatchesChip) {
  NandChip chip(desk_small(), 100, 1);
  EXPECT_EQ(erase_histogram(dump_chip(chip).image), std::vector<std::uint32_t>(16, 0));
  for (int i = 0; i < 7; ++i) chip.erase_block(5);
  chip.erase_block(2);
  const auto h = erase_histogram(dump_chip(chip).image);
  EXPECT_EQ(h[5], 7u);
  EXPECT_EQ(h[2], 1u);
  EXPECT_EQ(std::accumulate(h.begin(), h.end(), std::uint64_t{0}), chip.total_erases());
}

TEST(Histogram, ConservedUnderWorkload) {
  NandChip chip(wear_geometry(), 100000, 3);
  hammer(chip, true);
  const auto h = erase_histogram(dump_chip(chip).image);
  EXPECT_EQ(std::accumulate(h.begin(), h.end(), std::uint64_t{0}), chip.total_erases());
  for (std::uint32_t b = 0; b < h.size(); ++b) EXPECT_EQ(h[b], chip.erase_count(b));
}

TEST(Median, OddAndEven) {
  EXPECT_EQ(median_erases({}), 0.0);
  EXPECT_EQ(median_erases({5, 1, 3}), 3.0);
  EXPECT_EQ(median_erases({4, 1, 3, 10}), 3.5);
}

TEST(Hotspots, BugModeFlagsBlocksBackingHotRange) {
  NandChip chip(wear_geometry(), 100000, 3);
  const auto history = hammer(chip, true);
  const auto image = dump_chip(chip).image;

  // Oracle: blocks holding the hot range, straight from the map.
  std::set<std::uint32_t> backing;
  for (const auto& [lpn, e] : rebuild_map(chip).map) {
    if (kHot.contains(lpn)) backing.insert(e.addr.block());
  }
  ASSERT_FALSE(backing.empty());

  const auto r = detect_hotspots(image, 3.0, &history);
  EXPECT_EQ(blocks_in(r.hotspots), backing);
  for (auto b : blocks_in(r.hotspots)) EXPECT_GE(image.erase_counts[b], r.threshold);
  ASSERT_EQ(r.in_place.size(), 64u);  // every 4th lpn: no contiguous runs
  EXPECT_EQ(r.in_place.front().lpns.first, kHot.first);
  EXPECT_EQ(r.in_place.back().lpns.last, kHot.last - 3);
  EXPECT_EQ(r.in_place.front().writes, 5u);

  // Without history the same blocks are found and the ranges come from the map.
  const auto bare = detect_hotspots(image, 3.0);
  EXPECT_EQ(bare.hotspots, r.hotspots);
  std::set<std::uint32_t> lpns;
  for (const auto& x : bare.in_place) {
    for (auto l = x.lpns.first; l <= x.lpns.last; ++l) lpns.insert(l);
  }
  for (auto l = kHot.first; l <= kHot.last; l += 4) EXPECT_TRUE(lpns.contains(l)) << l;
}

TEST(Hotspots, ContiguousHotRangeGroups) {
  NandChip chip(desk_small(), 100000, 3);
  FtlConfig cfg;
  cfg.bug_enabled = true;
  Ftl ftl(chip, cfg);
  for (std::uint32_t lpn = 0xBB100; lpn < 0xBB108; ++lpn) ftl.logical_write(lpn, data(desk_small(), 1));
  for (int i = 0; i < 6; ++i) ftl.logical_write(0xBB103, data(desk_small(), i));
  const auto r = detect_hotspots(dump_chip(chip).image, 3.0, &ftl.history());
  ASSERT_EQ(r.in_place.size(), 1u);
  EXPECT_EQ(r.in_place[0].lpns, (LpnRange{0xBB103, 0xBB103}));
  EXPECT_EQ(r.in_place[0].writes, 7u);
}

TEST(Hotspots, UniformWorkloadWithoutBugIsClean) {
  NandChip chip(wear_geometry(), 100000, 9);
  Ftl ftl(chip, {});
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<std::uint32_t> pick(0, 1199);
  for (int i = 0; i < 20000; ++i) ftl.logical_write(pick(rng), data(chip.geometry(), i));
  const auto image = dump_chip(chip).image;
  const auto r = detect_hotspots(image, 3.0, &ftl.history());
  EXPECT_GT(r.median, 1.0);
  EXPECT_TRUE(r.hotspots.empty());
  EXPECT_TRUE(r.in_place.empty());
}

TEST(Hotspots, BugOffMovesHotRangeAround) {
  NandChip chip(wear_geometry(), 100000, 3);
  const auto history = hammer(chip, false);
  const auto r = detect_hotspots(dump_chip(chip).image, 3.0, &history);
  EXPECT_TRUE(r.hotspots.empty());
  EXPECT_TRUE(r.in_place.empty());
}

TEST(Hotspots, HalfTheBatchTrips) {
  int flagged = 0;
  const int batch = 10;
  for (int i = 0; i < batch; ++i) {
    NandChip chip(wear_geometry(), 100000, 100 + i);
    hammer(chip, i % 2 == 0, 3);
    flagged += !detect_hotspots(dump_chip(chip).image).hotspots.empty();
  }
  EXPECT_EQ(flagged * 2, batch);
}

TEST(Hotspots, RatioMustExceedOne) {
  NandChip chip(desk_small(), 100, 1);
  EXPECT_THROW(detect_hotspots(dump_chip(chip).image, 1.0), Error);
}

class Endurance : public ::testing::Test {
 protected:
  AttackTemplate tmpl = make_template(desk_small(), 10000, mbtest::device_config(1, mbtest::kFastKdf), "1234");

  std::uint32_t counter_block() const {
    const auto chip = materialize(tmpl.backup);
    return rebuild_map(chip, DeviceLayout::for_geometry(chip.geometry()).hidden_blocks).map.at(0x20).addr.block();
  }
};

// Oracle: tests/oracles/compute_oracles.py (10000 - 1667).
TEST_F(Endurance, FreshChipLowRisk) {
  const auto r = endurance_report(tmpl.backup, AttackStrategy::in_place(), PasscodeSpace::digits(4));
  EXPECT_EQ(r.risk, Risk::Low);
  EXPECT_EQ(r.headroom, 8333);
  ASSERT_EQ(r.counter_blocks.size(), 1u);
  EXPECT_EQ(r.counter_blocks[0].block, counter_block());
}

TEST_F(Endurance, PreWornCounterBlockHighRisk) {
  auto img = tmpl.backup;
  img.erase_counts[counter_block()] = 9000;
  const auto r = endurance_report(img, AttackStrategy::in_place(), PasscodeSpace::digits(4));
  EXPECT_EQ(r.risk, Risk::High);
  EXPECT_EQ(r.counter_blocks[0].remaining, 1000u);
  EXPECT_EQ(r.headroom, 1000 - 1667);
}

TEST_F(Endurance, SixDigitsAlwaysHigh) {
  const auto r = endurance_report(tmpl.backup, AttackStrategy::in_place(), PasscodeSpace::digits(6));
  EXPECT_EQ(r.risk, Risk::High);
  EXPECT_EQ(r.budget.required, 166667u);
}

TEST_F(Endurance, NoCounterIsAnError) {
  NandChip chip(desk_small(), 100, 1);
  EXPECT_THROW(endurance_report(dump_chip(chip).image, AttackStrategy::in_place(), PasscodeSpace::digits(4)), Error);
}

TEST_F(Endurance, JsonReport) {
  const auto hs = detect_hotspots(tmpl.backup);
  const auto risk = endurance_report(tmpl.backup, AttackStrategy::in_place(), PasscodeSpace::digits(4));
  const auto j = nlohmann::json::parse(wear_report_json(tmpl.backup, hs, risk));
  EXPECT_EQ(j["histogram"].size(), 16u);
  EXPECT_EQ(j["risk"]["level"], "low");
  EXPECT_EQ(j["risk"]["headroom"], 8333);
  EXPECT_TRUE(nlohmann::json::parse(wear_report_json(tmpl.backup, hs, std::nullopt))["risk"].is_null());
}
