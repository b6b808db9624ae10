#include <gtest/gtest.h>

#include <functional>

#include "mirrorbench/mirror.hpp"
#include "test_support.hpp"

using namespace mirrorbench;
using mbtest::byte_diff_blocks;
using mbtest::filled;
using mbtest::Rig;

namespace {

DeviceConfig fast() { return mbtest::device_config(1, mbtest::kFastKdf); }

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::InvalidArgument;
}

std::vector<std::uint32_t> within(const std::vector<std::uint32_t>& blocks, const std::vector<BlockRange>& regions) {
  std::vector<std::uint32_t> out;
  for (auto b : blocks) {
    for (const auto& r : regions) {
      if (b >= r.first && b <= r.last) {
        out.push_back(b);
        break;
      }
    }
  }
  return out;
}

std::vector<BlockRange> whole(const NandGeometry& g) { return {{0, g.block_count() - 1}}; }

void fail_attempts(Device& phone, int n) {
  for (int i = 0; i < n; ++i) {
    phone.wait(phone.pending_delay_s());
    phone.try_passcode("0" + std::to_string(i));
  }
}

}  // namespace

TEST(Dump, FreshChipIsAllErased) {
  NandChip chip(desk_small(), 100, 1);
  const auto d = dump_chip(chip, "fresh", 17);
  EXPECT_EQ(d.image.pages.size(), desk_small().page_count());
  for (const auto& p : d.image.pages) EXPECT_TRUE(p.erased());
  EXPECT_EQ(d.image.metadata.label, "fresh");
  EXPECT_EQ(d.image.metadata.created_ns, 17u);
  EXPECT_TRUE(verify(chip, d.image));
}

TEST(Dump, DurationUsesBoardRates) {
  const std::uint64_t bytes = iphone5c_8g().page_count() * iphone5c_8g().page_total_bytes();
  EXPECT_DOUBLE_EQ(transfer_seconds(bytes), bytes / 40e6 + bytes / 80e6);
  NandChip chip(desk_small(), 100, 1);
  const std::uint64_t small = desk_small().page_count() * desk_small().page_total_bytes();
  EXPECT_DOUBLE_EQ(dump_chip(chip).duration_s, small / 40e6 + small / 80e6);
}

TEST(Dump, CapturesHiddenTagsAndStaysPure) {
  Rig rig(desk_small(), "1234", fast());
  const NandChip before = rig.chip;
  const auto img = dump_chip(rig.chip).image;
  EXPECT_TRUE(rig.chip.same_media(before));
  EXPECT_EQ(img.hidden_regions, rig.chip.hidden_regions());
  EXPECT_EQ(img.hidden_regions.size(), 1u);
  EXPECT_TRUE(verify(rig.chip, img));
}

TEST(Dump, RecordsBadBlocks) {
  NandChip chip(desk_small(), 1, 1);
  chip.erase_block(3);
  chip.erase_block(3);
  const auto img = dump_chip(chip).image;
  EXPECT_EQ(img.bad_blocks, std::vector<std::uint32_t>{3});
  EXPECT_EQ(img.erase_counts[3], 2u);
  const auto again = materialize(img);
  EXPECT_TRUE(again.is_bad(3));
  EXPECT_TRUE(again.same_media(chip));
}

TEST(Scan, DeterministicAndScoped) {
  Rig rig(desk_small(), "1234", fast());
  const std::vector<BlockRange> regions{{2, 4}, {9, 9}};
  const auto a = scan(rig.chip, regions);
  EXPECT_EQ(a, scan(rig.chip, regions));
  EXPECT_EQ(a.block_crc.size(), 4u);
  EXPECT_EQ(a, scan(dump_chip(rig.chip).image, regions));
  EXPECT_TRUE(scan(rig.chip, std::vector<BlockRange>{}).block_crc.empty());
  EXPECT_EQ(code_of([&] { scan(rig.chip, std::vector<BlockRange>{{3, 16}}); }), ErrorCode::BlockOutOfRange);
}

TEST(Scan, DefaultRegionCoversCounter) {
  Rig rig(desk_small(), "1234", fast());
  const auto regions = default_scan_regions(rig.chip);
  const auto counter_block = rebuild_map(rig.chip, rig.phone.layout().hidden_blocks).map.at(0x20).addr.block();
  ASSERT_EQ(regions.size(), 1u);
  EXPECT_LE(regions[0].first, counter_block);
  EXPECT_GE(regions[0].last, counter_block);
  EXPECT_EQ(regions[0].first, counter_block > 4 ? counter_block - 4 : 0);
  EXPECT_EQ(regions[0].last, std::min(counter_block + 4, 15u));
  EXPECT_EQ(default_scan_regions(rig.chip, 0), (std::vector<BlockRange>{{counter_block, counter_block}}));
}

TEST(Scan, FailedAttemptChangesOnlyCounterBlocks) {
  Rig rig(desk_small(), "1234", fast());
  const auto backup = dump_chip(rig.chip).image;
  const auto g = backup.geometry;
  rig.phone.boot();
  fail_attempts(rig.phone, 1);
  rig.phone.power_down();

  const auto d = diff(scan(rig.chip, whole(g)), scan(backup, whole(g)));
  EXPECT_EQ(d.changed_blocks, byte_diff_blocks(rig.chip, backup));
  const auto counter_block = rebuild_map(rig.chip, rig.phone.layout().hidden_blocks).map.at(0x20).addr.block();
  EXPECT_EQ(d.changed_blocks, std::vector<std::uint32_t>{counter_block});
  EXPECT_EQ(d.scanned_blocks, 16u);
}

TEST(Diff, IdenticalAndMismatchedRegions) {
  Rig rig(desk_small(), "1234", fast());
  const std::vector<BlockRange> r1{{0, 5}}, r2{{6, 9}};
  const auto m = scan(rig.chip, r1);
  const auto d = diff(m, m);
  EXPECT_TRUE(d.changed_blocks.empty());
  EXPECT_EQ(d.scanned_blocks, 6u);
  EXPECT_EQ(code_of([&] { diff(m, scan(rig.chip, r2)); }), ErrorCode::RegionMismatch);
}

TEST(Diff, OneModifiedBlockListed) {
  NandChip chip(desk_small(), 100, 1);
  const auto backup = dump_chip(chip).image;
  chip.program_page(PageAddress::make(11, 4), filled(chip.geometry().page_total_bytes(), 0));
  const auto d = diff(scan(chip, whole(chip.geometry())), scan(backup, whole(chip.geometry())));
  EXPECT_EQ(d.changed_blocks, std::vector<std::uint32_t>{11});
  EXPECT_EQ(d.changed_blocks, byte_diff_blocks(chip, backup));
}

TEST(Restore, AfterSixAttemptsMatchesBackup) {
  Rig rig(desk_small(), "1234", fast());
  const auto backup = dump_chip(rig.chip).image;
  const auto regions = default_scan_regions(rig.chip);
  const auto ref = scan(backup, regions);
  rig.phone.boot();
  fail_attempts(rig.phone, 6);
  rig.phone.power_down();
  rig.phone.detach();

  const auto report = diff(scan(rig.chip, regions), ref);
  EXPECT_EQ(report.changed_blocks, within(byte_diff_blocks(rig.chip, backup), regions));
  std::vector<std::uint32_t> erases_before;
  for (std::uint32_t b = 0; b < 16; ++b) erases_before.push_back(rig.chip.erase_count(b));
  const auto stats = restore(rig.chip, backup, report);
  EXPECT_EQ(stats.blocks_erased, report.changed_blocks.size());
  EXPECT_GE(stats.duration_s, 30.0);
  EXPECT_LE(stats.duration_s, 60.0);
  EXPECT_TRUE(within(byte_diff_blocks(rig.chip, backup), regions).empty());
  EXPECT_TRUE(byte_diff_blocks(rig.chip, backup).empty());

  // Scope: only listed blocks were erased, each exactly once.
  for (std::uint32_t b = 0; b < 16; ++b) {
    const bool listed = std::count(report.changed_blocks.begin(), report.changed_blocks.end(), b) > 0;
    EXPECT_EQ(rig.chip.erase_count(b), erases_before[b] + (listed ? 1 : 0)) << b;
  }

  // Idempotent: a second pass finds nothing.
  EXPECT_TRUE(diff(scan(rig.chip, regions), ref).changed_blocks.empty());
}

TEST(Restore, EmptyDiffCostsMinimum) {
  NandChip chip(desk_small(), 100, 1);
  const auto backup = dump_chip(chip).image;
  const auto stats = restore(chip, backup, diff(scan(chip, whole(chip.geometry())), scan(backup, whole(chip.geometry()))));
  EXPECT_EQ(stats.blocks_erased, 0u);
  EXPECT_EQ(stats.duration_s, 30.0);
  EXPECT_EQ(chip.total_erases(), 0u);
}

TEST(Restore, DurationIsLinearInChangedFraction) {
  NandChip chip(desk_small(), 100, 1);
  const auto backup = dump_chip(chip).image;
  DiffReport r;
  r.regions = whole(chip.geometry());
  r.scanned_blocks = 16;
  r.changed_blocks = {0, 1, 2, 3};
  EXPECT_DOUBLE_EQ(restore(chip, backup, r).duration_s, 30 + 0.25 * 30);
  r.changed_blocks.clear();
  for (std::uint32_t b = 0; b < 16; ++b) r.changed_blocks.push_back(b);
  EXPECT_DOUBLE_EQ(restore(chip, backup, r).duration_s, 60.0);
}

TEST(Restore, WornBlockSurfacesBadBlock) {
  NandChip chip(desk_small(), 2, 1);
  const auto backup = dump_chip(chip).image;
  DiffReport r;
  r.regions = {{5, 5}};
  r.scanned_blocks = 1;
  r.changed_blocks = {5};
  restore(chip, backup, r);
  restore(chip, backup, r);
  restore(chip, backup, r);  // third erase retires the block
  EXPECT_TRUE(chip.is_bad(5));
  EXPECT_EQ(code_of([&] { restore(chip, backup, r); }), ErrorCode::BadBlock);
}

TEST(Clone, FullCloneBehavesLikeSource) {
  Rig rig(desk_small(), "1234", fast());
  rig.phone.boot();
  fail_attempts(rig.phone, 3);
  rig.phone.power_down();
  const auto backup = dump_chip(rig.chip).image;
  auto copy = clone(backup, NandChip(backup.geometry, backup.endurance_limit, 77), true);
  EXPECT_TRUE(verify(copy, backup));

  Device twin(fast());
  twin.attach(copy);
  rig.phone.boot();
  EXPECT_EQ(twin.boot().outcome, BootOutcome::Booted);
  EXPECT_EQ(twin.fail_count(), rig.phone.fail_count());
  for (int i = 0; i < 4; ++i) {
    twin.wait(twin.pending_delay_s());
    rig.phone.wait(rig.phone.pending_delay_s());
    EXPECT_EQ(twin.try_passcode("55" + std::to_string(i)), rig.phone.try_passcode("55" + std::to_string(i)));
  }
}

TEST(Clone, WithoutHiddenFailsVerifyOnTags) {
  Rig rig(desk_small(), "1234", fast());
  const auto backup = dump_chip(rig.chip).image;
  const auto copy = clone(backup, NandChip(backup.geometry, backup.endurance_limit, 77), false);
  const auto v = verify(copy, backup);
  ASSERT_FALSE(v);
  EXPECT_EQ(v.first_mismatch->kind, Mismatch::Kind::HiddenTag);
  EXPECT_EQ(v.first_mismatch->block, 15u);
}

TEST(Clone, DirtyBlankIsErasedFirstAndGeometryChecked) {
  NandChip src(desk_small(), 100, 1);
  src.program_page(PageAddress::make(2, 0), filled(1088, 1));
  const auto backup = dump_chip(src).image;
  NandChip dirty(desk_small(), 100, 2);
  dirty.program_page(PageAddress::make(2, 0), filled(1088, 2));
  dirty.program_page(PageAddress::make(9, 9), filled(1088, 3));
  EXPECT_TRUE(verify(clone(backup, dirty, true), backup));

  auto g = desk_small();
  g.blocks_per_plane = 8;
  EXPECT_EQ(code_of([&] { clone(backup, NandChip(g, 100, 1), true); }), ErrorCode::GeometryMismatch);
}

TEST(Verify, ReportsFirstMismatch) {
  NandChip chip(desk_small(), 100, 1);
  const auto page = filled(1088, 0x5A);
  chip.program_page(PageAddress::make(6, 2), page);
  auto img = dump_chip(chip).image;
  img.pages[6 * 16 + 2].payload[700] ^= 1;
  auto v = verify(chip, img);
  ASSERT_FALSE(v);
  EXPECT_EQ(*v.first_mismatch, (Mismatch{Mismatch::Kind::Payload, 6, 2, 700}));

  img = dump_chip(chip).image;
  img.pages[6 * 16 + 2].status = 0x71;
  EXPECT_EQ(verify(chip, img).first_mismatch->kind, Mismatch::Kind::Status);
}

TEST(Verify, BadOnBothSidesSkipped) {
  NandChip a(desk_small(), 0, 1);
  a.erase_block(4);
  const auto img = dump_chip(a).image;
  NandChip b(desk_small(), 0, 2);
  b.program_page(PageAddress::make(4, 0), filled(1088, 9));
  b.erase_block(4);
  EXPECT_TRUE(verify(b, img));
  NandChip c(desk_small(), 0, 3);
  EXPECT_EQ(verify(c, img).first_mismatch->kind, Mismatch::Kind::BadBlock);
}
