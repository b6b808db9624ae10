#include "mirrorbench/wear.hpp"

#include <algorithm>
#include <limits>
#include <set>

#include <json.hpp>

namespace mirrorbench {
namespace {

// Groups ascending lpns into contiguous ranges.
template <typename Fn>
void group_runs(const std::map<std::uint32_t, std::pair<std::uint32_t, std::uint64_t>>& lpns, Fn&& emit) {
  std::optional<InPlaceRange> cur;
  std::set<std::uint32_t> blocks;
  auto flush = [&]() {
    if (!cur) return;
    cur->blocks.assign(blocks.begin(), blocks.end());
    emit(std::move(*cur));
    cur.reset();
    blocks.clear();
  };
  for (const auto& [lpn, info] : lpns) {
    if (cur && lpn == cur->lpns.last + 1) {
      cur->lpns.last = lpn;
    } else {
      flush();
      cur = InPlaceRange{{lpn, lpn}, {}, 0};
    }
    blocks.insert(info.first);
    cur->writes += info.second;
  }
  flush();
}

std::vector<std::uint32_t> counter_blocks_of(const BackupImage& image) {
  const auto chip = materialize(image);
  const auto layout = DeviceLayout::for_geometry(image.geometry);
  const auto rebuilt = rebuild_map(chip, layout.hidden_blocks);
  std::set<std::uint32_t> blocks;
  for (const auto& [lpn, entry] : rebuilt.map) {
    if (layout.counter.contains(lpn)) blocks.insert(entry.addr.block());
  }
  return {blocks.begin(), blocks.end()};
}

}  // namespace

std::vector<std::uint32_t> erase_histogram(const BackupImage& image) { return image.erase_counts; }

double median_erases(const std::vector<std::uint32_t>& counts) {
  if (counts.empty()) return 0;
  std::vector<std::uint32_t> sorted = counts;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t mid = sorted.size() / 2;
  if (sorted.size() % 2 == 1) return sorted[mid];
  return (double(sorted[mid - 1]) + double(sorted[mid])) / 2.0;
}

HotspotReport detect_hotspots(const BackupImage& image, double ratio,
                              const std::map<std::uint32_t, LpnHistory>* history) {
  if (!(ratio > 1.0)) throw Error(ErrorCode::InvalidArgument, "threshold ratio must exceed 1");
  HotspotReport r;
  r.ratio = ratio;
  const auto& counts = image.erase_counts;
  r.median = median_erases(counts);
  r.threshold = ratio * std::max(r.median, 1.0);

  for (std::uint32_t b = 0; b < counts.size(); ++b) {
    if (counts[b] < r.threshold) continue;
    if (!r.hotspots.empty() && r.hotspots.back().last + 1 == b) {
      r.hotspots.back().last = b;
    } else {
      r.hotspots.push_back({b, b});
    }
  }

  std::map<std::uint32_t, std::pair<std::uint32_t, std::uint64_t>> lpns;
  if (history) {
    for (const auto& [lpn, h] : *history) {
      if (h.writes >= 2 && !h.block_changed) lpns[lpn] = {h.first_block, h.writes};
    }
  } else if (!r.hotspots.empty()) {
    auto hot = [&](std::uint32_t b) {
      return std::any_of(r.hotspots.begin(), r.hotspots.end(),
                         [b](const BlockRange& x) { return b >= x.first && b <= x.last; });
    };
    const auto chip = materialize(image);
    const auto rebuilt = rebuild_map(chip, DeviceLayout::for_geometry(image.geometry).hidden_blocks);
    for (const auto& [lpn, entry] : rebuilt.map) {
      if (hot(entry.addr.block())) lpns[lpn] = {entry.addr.block(), 0};
    }
  }
  group_runs(lpns, [&](InPlaceRange x) { r.in_place.push_back(std::move(x)); });
  return r;
}

std::string_view to_string(Risk risk) { return risk == Risk::Low ? "low" : "high"; }

EnduranceReport endurance_report(const BackupImage& image, const AttackStrategy& strategy, const PasscodeSpace& space) {
  EnduranceReport rep;
  rep.budget = wear_budget(space, strategy, image.endurance_limit);
  const auto blocks = counter_blocks_of(image);
  if (blocks.empty()) throw Error(ErrorCode::Unmapped, "image holds no retry counter");
  rep.headroom = std::numeric_limits<std::int64_t>::max();
  for (std::uint32_t b : blocks) {
    CounterBlockWear w;
    w.block = b;
    w.erase_count = image.erase_counts.at(b);
    w.remaining = image.is_bad(b) || w.erase_count >= image.endurance_limit ? 0 : image.endurance_limit - w.erase_count;
    w.headroom = static_cast<std::int64_t>(w.remaining) - static_cast<std::int64_t>(rep.budget.required);
    rep.headroom = std::min(rep.headroom, w.headroom);
    rep.counter_blocks.push_back(w);
  }
  rep.risk = rep.headroom < 0 ? Risk::High : Risk::Low;
  return rep;
}

std::string wear_report_json(const BackupImage& image, const HotspotReport& hotspots,
                             const std::optional<EnduranceReport>& risk) {
  nlohmann::ordered_json j;
  j["histogram"] = erase_histogram(image);
  j["bad_blocks"] = image.bad_blocks;
  j["median"] = hotspots.median;
  j["threshold"] = hotspots.threshold;
  auto& hs = j["hotspots"] = nlohmann::ordered_json::array();
  for (const auto& h : hotspots.hotspots) hs.push_back({{"first", h.first}, {"last", h.last}});
  auto& ip = j["in_place_ranges"] = nlohmann::ordered_json::array();
  for (const auto& x : hotspots.in_place) {
    ip.push_back({{"first_lpn", x.lpns.first}, {"last_lpn", x.lpns.last}, {"blocks", x.blocks}, {"writes", x.writes}});
  }
  if (risk) {
    nlohmann::ordered_json rj;
    rj["level"] = to_string(risk->risk);
    rj["required"] = risk->budget.required;
    rj["limit"] = risk->budget.available;
    rj["headroom"] = risk->headroom;
    auto& cb = rj["counter_blocks"] = nlohmann::ordered_json::array();
    for (const auto& w : risk->counter_blocks) {
      cb.push_back({{"block", w.block}, {"erase_count", w.erase_count}, {"remaining", w.remaining}, {"headroom", w.headroom}});
    }
    j["risk"] = std::move(rj);
  } else {
    j["risk"] = nullptr;
  }
  return j.dump(2);
}

}  // namespace mirrorbench
