#include "mirrorbench/mirror.hpp"

#include <algorithm>
#include <set>

#include "mirrorbench/checksum.hpp"

namespace mirrorbench {
namespace {

std::uint16_t erased_page_crc(const NandGeometry& g) {
  std::vector<std::uint8_t> ff(g.page_total_bytes(), 0xFF);
  return page_checksum(ff);
}

template <typename PageAt>
std::uint16_t block_checksum(const NandGeometry& g, std::uint16_t erased_crc, PageAt&& page_at) {
  std::vector<std::uint8_t> crcs;
  crcs.reserve(std::size_t{g.pages_per_block} * 2);
  for (std::uint32_t p = 0; p < g.pages_per_block; ++p) {
    const PageRecord& rec = page_at(p);
    const std::uint16_t c = rec.erased() ? erased_crc : page_checksum(rec.payload);
    crcs.push_back(static_cast<std::uint8_t>(c >> 8));
    crcs.push_back(static_cast<std::uint8_t>(c & 0xFF));
  }
  return crc16(crcs);
}

void check_regions(const NandGeometry& g, std::span<const BlockRange> regions) {
  for (const auto& r : regions) {
    if (r.first > r.last || r.last >= g.block_count()) {
      throw Error(ErrorCode::BlockOutOfRange, "scan region outside the array");
    }
  }
}

template <typename IsBad, typename PageAt>
ScanManifest scan_impl(const NandGeometry& g, std::span<const BlockRange> regions, IsBad&& is_bad,
                       PageAt&& page_at) {
  check_regions(g, regions);
  ScanManifest m;
  m.regions.assign(regions.begin(), regions.end());
  const std::uint16_t erased_crc = erased_page_crc(g);
  for (const auto& r : regions) {
    for (std::uint32_t b = r.first; b <= r.last; ++b) {
      if (is_bad(b)) {
        // No readable pages: checksum of the empty sequence.
        m.block_crc[b] = crc16({});
        continue;
      }
      m.block_crc[b] = block_checksum(g, erased_crc, [&](std::uint32_t p) -> const PageRecord& { return page_at(b, p); });
    }
  }
  return m;
}

}  // namespace

bool BackupImage::is_bad(std::uint32_t block) const {
  return std::binary_search(bad_blocks.begin(), bad_blocks.end(), block);
}

double transfer_seconds(std::uint64_t bytes) {
  return static_cast<double>(bytes) / kDumpReadRate + static_cast<double>(bytes) / kDumpWriteRate;
}

DumpResult dump_chip(NandChip& chip, std::string label, std::uint64_t created_ns) {
  const auto& g = chip.geometry();
  DumpResult out;
  BackupImage& img = out.image;
  img.geometry = g;
  img.endurance_limit = chip.endurance_limit();
  img.metadata = {std::move(label), created_ns, chip.seed(), std::string("reported full copy: ") + std::string(kReportedFullCopy)};
  img.erase_counts.reserve(g.block_count());
  img.pages.resize(g.page_count());
  for (std::uint32_t b = 0; b < g.block_count(); ++b) {
    const auto& state = chip.block(b);
    img.erase_counts.push_back(state.erase_count);
    if (state.is_bad) {
      img.bad_blocks.push_back(b);
      continue;
    }
    for (std::uint32_t p = 0; p < g.pages_per_block; ++p) {
      img.pages[std::size_t{b} * g.pages_per_block + p] = state.pages[p];
    }
  }
  // Replaying the unlock confirms each captured tag against the chip.
  for (const auto& [block, tag] : chip.hidden_regions()) {
    execute(chip, BusCommand{CommandKind::HiddenUnlock, PageAddress::make(block, 0), {}, BusMode::SDR17, tag});
    img.hidden_regions[block] = tag;
  }
  chip.lock_hidden_views();
  out.duration_s = transfer_seconds(g.total_bytes());
  return out;
}

NandChip materialize(const BackupImage& image) {
  NandChip chip(image.geometry, image.endurance_limit, image.metadata.chip_seed);
  const auto& g = image.geometry;
  for (std::uint32_t b = 0; b < g.block_count(); ++b) {
    if (image.is_bad(b)) continue;
    for (std::uint32_t p = 0; p < g.pages_per_block; ++p) {
      const auto& rec = image.page(b, p);
      if (!rec.erased()) chip.program_page(PageAddress::make(b, p), rec.payload, rec.status);
    }
  }
  for (std::uint32_t b = 0; b < g.block_count(); ++b) {
    chip.restore_wear(b, image.erase_counts.at(b), image.is_bad(b));
  }
  for (const auto& [block, tag] : image.hidden_regions) chip.install_hidden_region(block, tag);
  return chip;
}

ScanManifest scan(const NandChip& chip, std::span<const BlockRange> regions) {
  return scan_impl(
      chip.geometry(), regions, [&](std::uint32_t b) { return chip.is_bad(b); },
      [&](std::uint32_t b, std::uint32_t p) -> const PageRecord& { return chip.block(b).pages[p]; });
}

ScanManifest scan(const BackupImage& image, std::span<const BlockRange> regions) {
  return scan_impl(
      image.geometry, regions, [&](std::uint32_t b) { return image.is_bad(b); },
      [&](std::uint32_t b, std::uint32_t p) -> const PageRecord& { return image.page(b, p); });
}

std::vector<BlockRange> default_scan_regions(const NandChip& chip, std::uint32_t halo) {
  const auto layout = DeviceLayout::for_geometry(chip.geometry());
  const auto rebuilt = rebuild_map(chip, layout.hidden_blocks);
  std::set<std::uint32_t> blocks;
  for (const auto& [lpn, entry] : rebuilt.map) {
    if (layout.counter.contains(lpn)) blocks.insert(entry.addr.block());
  }
  std::vector<BlockRange> out;
  const std::uint32_t last_block = chip.geometry().block_count() - 1;
  for (std::uint32_t b : blocks) {
    BlockRange r{b > halo ? b - halo : 0, std::min(last_block, b + halo)};
    if (!out.empty() && r.first <= out.back().last + 1) {
      out.back().last = std::max(out.back().last, r.last);
    } else {
      out.push_back(r);
    }
  }
  return out;
}

DiffReport diff(const ScanManifest& current, const ScanManifest& backup) {
  if (current.regions != backup.regions) {
    throw Error(ErrorCode::RegionMismatch, "manifests were taken over different regions");
  }
  DiffReport report;
  report.regions = current.regions;
  for (const auto& r : current.regions) report.scanned_blocks += r.size();
  for (const auto& [block, crc] : current.block_crc) {
    auto it = backup.block_crc.find(block);
    if (it == backup.block_crc.end() || it->second != crc) {
      report.changed_blocks.push_back(block);
      report.block_crc[block] = crc;
    }
  }
  return report;
}

RestoreStats restore(NandChip& chip, const BackupImage& backup, const DiffReport& report,
                     const TimingModel& timing) {
  if (chip.geometry() != backup.geometry) throw Error(ErrorCode::GeometryMismatch, "backup geometry differs");
  RestoreStats stats;
  const auto& g = backup.geometry;
  for (std::uint32_t b : report.changed_blocks) {
    chip.erase_block(b);
    ++stats.blocks_erased;
    if (backup.is_bad(b)) continue;
    for (std::uint32_t p = 0; p < g.pages_per_block; ++p) {
      const auto& rec = backup.page(b, p);
      if (rec.erased()) continue;
      chip.program_page(PageAddress::make(b, p), rec.payload, rec.status);
      ++stats.pages_programmed;
    }
  }
  const double span = timing.restore_max_s - timing.restore_min_s;
  const double fraction = report.scanned_blocks == 0
                              ? 0.0
                              : static_cast<double>(report.changed_blocks.size()) / report.scanned_blocks;
  stats.duration_s = std::clamp(timing.restore_min_s + fraction * span, double(timing.restore_min_s),
                                double(timing.restore_max_s));
  return stats;
}

NandChip clone(const BackupImage& backup, NandChip blank, bool include_hidden) {
  if (blank.geometry() != backup.geometry) throw Error(ErrorCode::GeometryMismatch, "blank chip geometry differs");
  const auto& g = backup.geometry;
  for (std::uint32_t b = 0; b < g.block_count(); ++b) {
    if (backup.is_bad(b) || blank.is_bad(b)) continue;
    const auto& pages = blank.block(b).pages;
    if (std::any_of(pages.begin(), pages.end(), [](const PageRecord& p) { return !p.erased(); })) {
      blank.erase_block(b);
    }
    for (std::uint32_t p = 0; p < g.pages_per_block; ++p) {
      const auto& rec = backup.page(b, p);
      if (!rec.erased()) blank.program_page(PageAddress::make(b, p), rec.payload, rec.status);
    }
  }
  if (include_hidden) {
    for (const auto& [block, tag] : backup.hidden_regions) blank.install_hidden_region(block, tag);
  }
  return blank;
}

std::string_view to_string(Mismatch::Kind kind) {
  switch (kind) {
    case Mismatch::Kind::BadBlock: return "bad_block";
    case Mismatch::Kind::Status: return "status";
    case Mismatch::Kind::Payload: return "payload";
    case Mismatch::Kind::HiddenTag: return "hidden_tag";
  }
  return "?";
}

VerifyResult verify(const NandChip& chip, const BackupImage& backup) {
  if (chip.geometry() != backup.geometry) throw Error(ErrorCode::GeometryMismatch, "backup geometry differs");
  const auto& g = backup.geometry;
  auto fail = [](Mismatch m) { return VerifyResult{false, m}; };
  for (std::uint32_t b = 0; b < g.block_count(); ++b) {
    const bool chip_bad = chip.is_bad(b);
    const bool image_bad = backup.is_bad(b);
    if (chip_bad && image_bad) continue;
    if (chip_bad != image_bad) return fail({Mismatch::Kind::BadBlock, b, 0, 0});
    const auto& pages = chip.block(b).pages;
    for (std::uint32_t p = 0; p < g.pages_per_block; ++p) {
      const auto& have = pages[p];
      const auto& want = backup.page(b, p);
      if (have.status != want.status) return fail({Mismatch::Kind::Status, b, p, 0});
      if (have.erased()) continue;
      const auto [a, _] = std::mismatch(have.payload.begin(), have.payload.end(), want.payload.begin(), want.payload.end());
      if (a != have.payload.end() || have.payload.size() != want.payload.size()) {
        return fail({Mismatch::Kind::Payload, b, p, static_cast<std::size_t>(a - have.payload.begin())});
      }
    }
  }
  if (chip.hidden_regions() != backup.hidden_regions) {
    std::uint32_t block = 0;
    for (std::uint32_t b = 0; b < g.block_count(); ++b) {
      auto x = chip.hidden_regions().find(b);
      auto y = backup.hidden_regions.find(b);
      const bool xe = x != chip.hidden_regions().end();
      const bool ye = y != backup.hidden_regions.end();
      if (xe != ye || (xe && x->second != y->second)) {
        block = b;
        break;
      }
    }
    return fail({Mismatch::Kind::HiddenTag, block, 0, 0});
  }
  return {};
}

}  // namespace mirrorbench
