#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mirrorbench/device.hpp"
#include "mirrorbench/nand_chip.hpp"

namespace mirrorbench {

// Programmer board throughput, bytes per second.
inline constexpr double kDumpReadRate = 40e6;
inline constexpr double kDumpWriteRate = 80e6;
// Full-copy time reported for the real board; kept as metadata only.
inline constexpr std::string_view kReportedFullCopy = "about 80 minutes";
inline constexpr std::uint32_t kDefaultScanHalo = 4;

struct ImageMetadata {
  std::string label;
  std::uint64_t created_ns = 0;
  std::uint64_t chip_seed = 0;
  std::string note;

  friend bool operator==(const ImageMetadata&, const ImageMetadata&) = default;
};

// Full raw copy of a chip, including the hidden-region table.
struct BackupImage {
  NandGeometry geometry;
  std::uint32_t endurance_limit = NandChip::kDefaultEndurance;
  std::vector<std::uint32_t> erase_counts;
  std::vector<std::uint32_t> bad_blocks;
  std::map<std::uint32_t, GateTag> hidden_regions;
  // Plane-major / block / page order; erased pages keep an empty payload.
  std::vector<PageRecord> pages;
  ImageMetadata metadata;

  const PageRecord& page(std::uint32_t block, std::uint32_t page) const {
    return pages[std::size_t{block} * geometry.pages_per_block + page];
  }
  bool is_bad(std::uint32_t block) const;

  friend bool operator==(const BackupImage&, const BackupImage&) = default;
};

struct DumpResult {
  BackupImage image;
  double duration_s = 0;
};

// Seconds to read and write `bytes` through the programmer board.
double transfer_seconds(std::uint64_t bytes);

DumpResult dump_chip(NandChip& chip, std::string label = {}, std::uint64_t created_ns = 0);

// Rebuilds a chip with exactly the imaged state: pages, wear, bad blocks
// and hidden regions.
NandChip materialize(const BackupImage& image);

// Inclusive block range.
struct BlockRange {
  std::uint32_t first = 0;
  std::uint32_t last = 0;

  std::uint32_t size() const { return last - first + 1; }
  friend bool operator==(const BlockRange&, const BlockRange&) = default;
};

struct ScanManifest {
  std::vector<BlockRange> regions;
  std::map<std::uint32_t, std::uint16_t> block_crc;

  friend bool operator==(const ScanManifest&, const ScanManifest&) = default;
};

// Block checksum: CRC-16 over the big-endian page checksums of the block.
ScanManifest scan(const NandChip& chip, std::span<const BlockRange> regions);
ScanManifest scan(const BackupImage& image, std::span<const BlockRange> regions);

// Physical blocks currently backing the device's counter region, padded by
// `halo` blocks each side and clamped to the array.
std::vector<BlockRange> default_scan_regions(const NandChip& chip, std::uint32_t halo = kDefaultScanHalo);

struct DiffReport {
  std::vector<BlockRange> regions;
  std::vector<std::uint32_t> changed_blocks;
  // Current checksum of every changed block.
  std::map<std::uint32_t, std::uint16_t> block_crc;
  std::uint32_t scanned_blocks = 0;

  friend bool operator==(const DiffReport&, const DiffReport&) = default;
};

// Throws RegionMismatch unless both manifests cover the same regions.
DiffReport diff(const ScanManifest& current, const ScanManifest& backup);

struct RestoreStats {
  std::uint32_t blocks_erased = 0;
  std::uint32_t pages_programmed = 0;
  double duration_s = 0;
};

RestoreStats restore(NandChip& chip, const BackupImage& backup, const DiffReport& report,
                     const TimingModel& timing = {});

// Programs a blank chip from the backup. Without hidden regions the copy
// carries every normal page but no gate table.
NandChip clone(const BackupImage& backup, NandChip blank, bool include_hidden);

struct Mismatch {
  enum class Kind { BadBlock, Status, Payload, HiddenTag };
  Kind kind = Kind::Payload;
  std::uint32_t block = 0;
  std::uint32_t page = 0;
  std::size_t offset = 0;

  friend bool operator==(const Mismatch&, const Mismatch&) = default;
};

std::string_view to_string(Mismatch::Kind kind);

struct VerifyResult {
  bool ok = true;
  std::optional<Mismatch> first_mismatch;

  explicit operator bool() const { return ok; }
};

// Byte compare of statuses, payloads and hidden tags. Blocks bad on both
// sides are skipped.
VerifyResult verify(const NandChip& chip, const BackupImage& backup);

}  // namespace mirrorbench
