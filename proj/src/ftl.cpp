#include "mirrorbench/ftl.hpp"

#include <algorithm>
#include <string>

#include "mirrorbench/checksum.hpp"

namespace mirrorbench {
namespace {

constexpr std::uint32_t kNoOwner = 0xFFFFFFFF;

void put_le32(std::uint8_t* out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out[i] = static_cast<std::uint8_t>(v >> (8 * i));
}

std::uint32_t get_le32(const std::uint8_t* in) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t{in[i]} << (8 * i);
  return v;
}

std::vector<std::uint32_t> merge_reserved(const NandChip& chip, std::span<const std::uint32_t> extra) {
  std::vector<std::uint32_t> out(extra.begin(), extra.end());
  for (const auto& [block, tag] : chip.hidden_regions()) out.push_back(block);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

// Visits every programmed page outside bad/reserved blocks.
template <typename Fn>
void for_each_programmed(const NandChip& chip, std::span<const std::uint32_t> reserved, Fn&& fn) {
  const auto& g = chip.geometry();
  for (std::uint32_t b = 0; b < g.block_count(); ++b) {
    const auto& state = chip.block(b);
    if (state.is_bad || std::binary_search(reserved.begin(), reserved.end(), b)) continue;
    for (std::uint32_t p = 0; p < g.pages_per_block; ++p) {
      const auto& page = state.pages[p];
      if (page.erased()) continue;
      fn(PageAddress::make(b, p), page);
    }
  }
}

}  // namespace

std::array<std::uint8_t, SectorIndex::kSize> SectorIndex::encode() const {
  std::array<std::uint8_t, kSize> out{};
  put_le32(out.data(), lpn);
  put_le32(out.data() + 4, seq);
  out[8] = flags;
  const std::uint16_t crc = crc16(std::span(out.data(), 14));
  out[14] = static_cast<std::uint8_t>(crc & 0xFF);
  out[15] = static_cast<std::uint8_t>(crc >> 8);
  return out;
}

std::optional<SectorIndex> SectorIndex::decode(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kSize) return std::nullopt;
  const std::uint16_t stored = static_cast<std::uint16_t>(bytes[14] | (bytes[15] << 8));
  if (crc16(bytes.first(14)) != stored) return std::nullopt;
  for (std::size_t i = 9; i < 14; ++i) {
    if (bytes[i] != 0) return std::nullopt;
  }
  SectorIndex idx;
  idx.lpn = get_le32(bytes.data());
  idx.seq = get_le32(bytes.data() + 4);
  idx.flags = bytes[8];
  if (!(idx.flags & kValid) || idx.lpn >= kLogicalSpaceSize) return std::nullopt;
  return idx;
}

std::vector<LpnRange> FtlConfig::default_hot_regions() {
  return {{0x000BB100, 0x000BB1FF},
          {0x000BD000, 0x000BD0FF},
          {0x0003B100, 0x0003B1FF},
          {0x0003D000, 0x0003D0FF}};
}

std::vector<std::uint8_t> page_data(const NandGeometry& g, std::span<const std::uint8_t> payload) {
  std::vector<std::uint8_t> out;
  out.reserve(g.page_data_bytes());
  for (std::uint32_t s = 0; s < g.sectors_per_page; ++s) {
    auto sector = payload.subspan(std::size_t{s} * g.sector_total_bytes(), g.sector_data_bytes);
    out.insert(out.end(), sector.begin(), sector.end());
  }
  return out;
}

std::optional<SectorIndex> page_index(const NandGeometry& g, std::span<const std::uint8_t> payload) {
  if (payload.size() != g.page_total_bytes() || g.sector_index_bytes < SectorIndex::kSize) {
    return std::nullopt;
  }
  std::optional<SectorIndex> first;
  for (std::uint32_t s = 0; s < g.sectors_per_page; ++s) {
    auto raw = payload.subspan(std::size_t{s} * g.sector_total_bytes() + g.sector_data_bytes,
                               SectorIndex::kSize);
    auto idx = SectorIndex::decode(raw);
    if (!idx) return std::nullopt;
    if (first && *first != *idx) return std::nullopt;
    first = idx;
  }
  return first;
}

RebuildResult rebuild_map(const NandChip& chip, std::span<const std::uint32_t> reserved_blocks) {
  const auto reserved = merge_reserved(chip, reserved_blocks);
  RebuildResult result;
  for_each_programmed(chip, reserved, [&](PageAddress addr, const PageRecord& page) {
    auto idx = page_index(chip.geometry(), page.payload);
    if (!idx) {
      result.corrupt.push_back(addr);
      return;
    }
    result.max_seq = std::max(result.max_seq, idx->seq);
    auto [it, inserted] = result.map.try_emplace(idx->lpn, MapEntry{addr, idx->seq});
    if (!inserted && idx->seq > it->second.seq) it->second = MapEntry{addr, idx->seq};
  });
  return result;
}

Ftl::Ftl(NandChip& chip, FtlConfig config)
    : chip_(chip), config_(std::move(config)) {
  const auto& g = chip_.geometry();
  if (g.sector_index_bytes < SectorIndex::kSize) {
    throw Error(ErrorCode::InvalidGeometry, "index area smaller than 16 bytes per sector");
  }
  reserved_ = merge_reserved(chip_, config_.reserved_blocks);
  capacity_ = g.page_count() * 9 / 10;

  auto rebuilt = rebuild_map(chip_, reserved_);
  map_ = std::move(rebuilt.map);
  corrupt_ = std::move(rebuilt.corrupt);
  next_seq_ = rebuilt.max_seq + 1;

  owner_.assign(g.page_count(), kNoOwner);
  corrupt_slot_.assign(g.page_count(), false);
  for (const auto& [lpn, entry] : map_) owner_[page_slot(entry.addr)] = lpn;
  for (auto addr : corrupt_) corrupt_slot_[page_slot(addr)] = true;

  // Reopen each stream on the block holding its newest page, if that block
  // still has erased pages past its last programmed one.
  struct Newest {
    std::uint32_t seq = 0;
    std::optional<std::uint32_t> block;
  };
  std::array<Newest, kStreams> newest{};
  for_each_programmed(chip_, reserved_, [&](PageAddress addr, const PageRecord& page) {
    auto idx = page_index(g, page.payload);
    if (!idx) return;
    auto& n = newest[(idx->flags & SectorIndex::kCounterRegion) ? kCounter : kData];
    if (!n.block || idx->seq > n.seq) n = Newest{idx->seq, addr.block()};
  });
  if (newest[kData].block && newest[kData].block == newest[kCounter].block) {
    newest[newest[kData].seq > newest[kCounter].seq ? kCounter : kData].block.reset();
  }
  for (int s = 0; s < kStreams; ++s) {
    if (!newest[s].block) continue;
    const std::uint32_t b = *newest[s].block;
    const auto& pages = chip_.block(b).pages;
    std::uint32_t last = 0;
    for (std::uint32_t p = 0; p < g.pages_per_block; ++p) {
      if (!pages[p].erased()) last = p;
    }
    if (last + 1 < g.pages_per_block) cursors_[s] = Cursor{b, last + 1};
  }
}

bool Ftl::reserved(std::uint32_t block) const {
  return std::binary_search(reserved_.begin(), reserved_.end(), block);
}

bool Ftl::is_counter(std::uint32_t lpn) const {
  return std::any_of(config_.counter_regions.begin(), config_.counter_regions.end(),
                     [&](const LpnRange& r) { return r.contains(lpn); });
}

bool Ftl::is_hot(std::uint32_t lpn) const {
  return std::any_of(config_.hot_bug_regions.begin(), config_.hot_bug_regions.end(),
                     [&](const LpnRange& r) { return r.contains(lpn); });
}

std::size_t Ftl::page_slot(PageAddress addr) const {
  return std::size_t{addr.block()} * chip_.geometry().pages_per_block + addr.page();
}

std::optional<PageAddress> Ftl::lookup(std::uint32_t lpn) const {
  auto it = map_.find(lpn);
  if (it == map_.end()) return std::nullopt;
  return it->second.addr;
}

bool Ftl::block_free(std::uint32_t block) const {
  if (reserved(block) || chip_.is_bad(block)) return false;
  for (const auto& c : cursors_) {
    if (c.block == block) return false;
  }
  const auto& pages = chip_.block(block).pages;
  return std::all_of(pages.begin(), pages.end(), [](const PageRecord& p) { return p.erased(); });
}

std::size_t Ftl::free_block_count() const {
  std::size_t n = 0;
  for (std::uint32_t b = 0; b < chip_.geometry().block_count(); ++b) n += block_free(b) ? 1 : 0;
  return n;
}

std::optional<std::uint32_t> Ftl::pick_free_block() const {
  std::optional<std::uint32_t> best;
  for (std::uint32_t b = 0; b < chip_.geometry().block_count(); ++b) {
    if (!block_free(b)) continue;
    if (!best || chip_.erase_count(b) < chip_.erase_count(*best)) best = b;
  }
  return best;
}

std::uint32_t Ftl::live_count(std::uint32_t block) const {
  const std::size_t base = std::size_t{block} * chip_.geometry().pages_per_block;
  std::uint32_t n = 0;
  for (std::uint32_t p = 0; p < chip_.geometry().pages_per_block; ++p) {
    n += owner_[base + p] != kNoOwner ? 1 : 0;
  }
  return n;
}

bool Ftl::block_has_corrupt(std::uint32_t block) const {
  const std::size_t base = std::size_t{block} * chip_.geometry().pages_per_block;
  for (std::uint32_t p = 0; p < chip_.geometry().pages_per_block; ++p) {
    if (corrupt_slot_[base + p]) return true;
  }
  return false;
}

std::optional<std::uint32_t> Ftl::pick_victim() const {
  std::optional<std::uint32_t> best;
  std::uint32_t best_live = 0;
  for (std::uint32_t b = 0; b < chip_.geometry().block_count(); ++b) {
    if (reserved(b) || chip_.is_bad(b) || block_has_corrupt(b)) continue;
    if (std::any_of(cursors_.begin(), cursors_.end(), [&](const Cursor& c) { return c.block == b; })) {
      continue;
    }
    const auto& pages = chip_.block(b).pages;
    const auto programmed = static_cast<std::uint32_t>(
        std::count_if(pages.begin(), pages.end(), [](const PageRecord& p) { return !p.erased(); }));
    const std::uint32_t live = live_count(b);
    if (live >= programmed) continue;
    if (!best || live < best_live) {
      best = b;
      best_live = live;
    }
  }
  return best;
}

void Ftl::erase(std::uint32_t block) {
  chip_.erase_block(block);
  const std::size_t base = std::size_t{block} * chip_.geometry().pages_per_block;
  for (std::uint32_t p = 0; p < chip_.geometry().pages_per_block; ++p) {
    owner_[base + p] = kNoOwner;
    corrupt_slot_[base + p] = false;
  }
  std::erase_if(corrupt_, [&](PageAddress a) { return a.block() == block; });
  for (auto& c : cursors_) {
    if (c.block == block) c = Cursor{};
  }
}

std::size_t Ftl::reclaim() {
  std::size_t erased = 0;
  for (std::uint32_t b = 0; b < chip_.geometry().block_count(); ++b) {
    if (reserved(b) || chip_.is_bad(b) || block_has_corrupt(b)) continue;
    const auto& pages = chip_.block(b).pages;
    const bool any_programmed =
        std::any_of(pages.begin(), pages.end(), [](const PageRecord& p) { return !p.erased(); });
    if (!any_programmed || live_count(b) != 0) continue;
    erase(b);
    ++erased;
  }
  return erased;
}

PageAddress Ftl::program(PageAddress addr, const SectorIndex& index, std::span<const std::uint8_t> data) {
  const auto& g = chip_.geometry();
  std::vector<std::uint8_t> payload(g.page_total_bytes(), 0xFF);
  const auto encoded = index.encode();
  for (std::uint32_t s = 0; s < g.sectors_per_page; ++s) {
    auto* sector = payload.data() + std::size_t{s} * g.sector_total_bytes();
    std::copy_n(data.data() + std::size_t{s} * g.sector_data_bytes, g.sector_data_bytes, sector);
    std::copy(encoded.begin(), encoded.end(), sector + g.sector_data_bytes);
  }
  chip_.program_page(addr, payload, kStatusProgrammed);
  return addr;
}

void Ftl::relocate(std::uint32_t victim, Stream stream) {
  const auto dest = pick_free_block();
  if (!dest) throw Error(ErrorCode::NoFreePages, "no destination for relocation");
  auto& cursor = cursors_[stream];
  cursor = Cursor{*dest, 0};
  const auto& g = chip_.geometry();
  const std::size_t base = std::size_t{victim} * g.pages_per_block;
  for (std::uint32_t p = 0; p < g.pages_per_block; ++p) {
    const std::uint32_t lpn = owner_[base + p];
    if (lpn == kNoOwner) continue;
    const auto& src = chip_.block(victim).pages[p];
    auto idx = *page_index(g, src.payload);
    const auto data = page_data(g, src.payload);
    idx.seq = next_seq_++;
    const auto addr = program(PageAddress::make(*dest, cursor.next_page++), idx, data);
    owner_[base + p] = kNoOwner;
    owner_[page_slot(addr)] = lpn;
    map_[lpn] = MapEntry{addr, idx.seq};
    record_history(lpn, addr);
  }
  erase(victim);
}

PageAddress Ftl::allocate(Stream stream) {
  const auto& g = chip_.geometry();
  auto& cursor = cursors_[stream];
  if (cursor.block && cursor.next_page < g.pages_per_block) {
    return PageAddress::make(*cursor.block, cursor.next_page++);
  }
  cursor = Cursor{};
  // One free block is held back so relocation always has a destination.
  if (free_block_count() <= 1) reclaim();
  const std::size_t free = free_block_count();
  if (free == 0) throw Error(ErrorCode::NoFreePages, "no erased block available");
  if (free == 1) {
    if (auto victim = pick_victim()) {
      relocate(*victim, stream);
      return PageAddress::make(*cursor.block, cursor.next_page++);
    }
  }
  cursor = Cursor{*pick_free_block(), 0};
  return PageAddress::make(*cursor.block, cursor.next_page++);
}

void Ftl::record_history(std::uint32_t lpn, PageAddress addr) {
  auto& h = history_[lpn];
  if (h.writes == 0) {
    h.first_block = addr.block();
  } else if (addr.block() != h.first_block) {
    h.block_changed = true;
  }
  ++h.writes;
}

PageAddress Ftl::rewrite_in_place(std::uint32_t lpn, std::span<const std::uint8_t> data) {
  const auto& g = chip_.geometry();
  const PageAddress target = map_.at(lpn).addr;
  const std::uint32_t block = target.block();
  const std::size_t base = std::size_t{block} * g.pages_per_block;

  const std::uint32_t new_seq = next_seq_++;
  std::vector<LivePage> live;
  for (std::uint32_t p = 0; p < g.pages_per_block; ++p) {
    if (owner_[base + p] == kNoOwner) continue;
    const auto& src = chip_.block(block).pages[p];
    LivePage lp{p, *page_index(g, src.payload), page_data(g, src.payload)};
    if (p == target.page()) {
      lp.index.seq = new_seq;
      lp.data.assign(data.begin(), data.end());
    }
    live.push_back(std::move(lp));
  }

  // Cursors are left alone: pages past an open cursor stay erased.
  chip_.erase_block(block);
  for (std::uint32_t p = 0; p < g.pages_per_block; ++p) corrupt_slot_[base + p] = false;
  std::erase_if(corrupt_, [&](PageAddress a) { return a.block() == block; });
  if (chip_.is_bad(block)) {
    for (const auto& lp : live) {
      map_.erase(lp.index.lpn);
      owner_[base + lp.page] = kNoOwner;
    }
    throw Error(ErrorCode::BadBlock,
                "block " + std::to_string(block) + " wore out during in-place rewrite");
  }
  for (const auto& lp : live) {
    program(PageAddress::make(block, lp.page), lp.index, lp.data);
  }
  map_[lpn] = MapEntry{target, new_seq};
  record_history(lpn, target);
  return target;
}

PageAddress Ftl::logical_write(std::uint32_t lpn, std::span<const std::uint8_t> data) {
  if (lpn >= kLogicalSpaceSize) {
    throw Error(ErrorCode::LogicalOutOfRange, "lpn " + std::to_string(lpn));
  }
  if (data.size() != chip_.geometry().page_data_bytes()) {
    throw Error(ErrorCode::PayloadSizeMismatch, "logical page must be " +
                                                    std::to_string(chip_.geometry().page_data_bytes()) +
                                                    " bytes");
  }
  if (!map_.contains(lpn) && map_.size() >= capacity_) {
    throw Error(ErrorCode::NoFreePages, "logical capacity exhausted");
  }
  if (config_.bug_enabled && is_hot(lpn) && map_.contains(lpn)) {
    return rewrite_in_place(lpn, data);
  }

  const bool counter = is_counter(lpn);
  const PageAddress addr = allocate(counter ? kCounter : kData);
  SectorIndex idx{lpn, next_seq_++,
                  static_cast<std::uint8_t>(SectorIndex::kValid | (counter ? SectorIndex::kCounterRegion : 0))};
  program(addr, idx, data);
  if (auto it = map_.find(lpn); it != map_.end()) owner_[page_slot(it->second.addr)] = kNoOwner;
  map_[lpn] = MapEntry{addr, idx.seq};
  owner_[page_slot(addr)] = lpn;
  record_history(lpn, addr);
  return addr;
}

std::vector<std::uint8_t> Ftl::logical_read(std::uint32_t lpn) const {
  auto it = map_.find(lpn);
  if (it == map_.end()) throw Error(ErrorCode::Unmapped, "lpn " + std::to_string(lpn));
  const auto page = chip_.read_page(it->second.addr);
  return page_data(chip_.geometry(), page.payload);
}

}  // namespace mirrorbench
