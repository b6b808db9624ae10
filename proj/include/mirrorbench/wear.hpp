#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mirrorbench/attack.hpp"
#include "mirrorbench/ftl.hpp"
#include "mirrorbench/mirror.hpp"

namespace mirrorbench {

inline constexpr double kDefaultHotspotRatio = 3.0;

std::vector<std::uint32_t> erase_histogram(const BackupImage& image);

// Median of the per-block counts (mean of the middle pair for even sizes).
double median_erases(const std::vector<std::uint32_t>& counts);

struct InPlaceRange {
  LpnRange lpns;
  std::vector<std::uint32_t> blocks;
  std::uint64_t writes = 0;

  friend bool operator==(const InPlaceRange&, const InPlaceRange&) = default;
};

struct HotspotReport {
  double ratio = kDefaultHotspotRatio;
  double median = 0;
  // Blocks at or above this count are hot: ratio x max(median, 1).
  double threshold = 0;
  std::vector<BlockRange> hotspots;
  std::vector<InPlaceRange> in_place;
};

// With FTL history, in-place findings are the logical pages rewritten more
// than once without ever leaving their first block. Without it they are the
// mapped logical pages that sit in hot blocks.
HotspotReport detect_hotspots(const BackupImage& image, double ratio = kDefaultHotspotRatio,
                              const std::map<std::uint32_t, LpnHistory>* history = nullptr);

enum class Risk { Low, High };
std::string_view to_string(Risk risk);

struct CounterBlockWear {
  std::uint32_t block = 0;
  std::uint32_t erase_count = 0;
  std::uint64_t remaining = 0;
  std::int64_t headroom = 0;
};

struct EnduranceReport {
  WearBudget budget;
  std::vector<CounterBlockWear> counter_blocks;
  // Smallest headroom over the counter blocks.
  std::int64_t headroom = 0;
  Risk risk = Risk::Low;
};

EnduranceReport endurance_report(const BackupImage& image, const AttackStrategy& strategy, const PasscodeSpace& space);

std::string wear_report_json(const BackupImage& image, const HotspotReport& hotspots,
                             const std::optional<EnduranceReport>& risk);

}  // namespace mirrorbench
