#include "mirrorbench/nand_chip.hpp"

#include <random>
#include <string>

namespace mirrorbench {

std::uint32_t hidden_to_physical(std::uint32_t n, std::uint32_t pages_per_block) {
  const std::uint64_t physical = n < 2 ? n : 2ull * n - 1;
  if (physical >= pages_per_block) {
    throw Error(ErrorCode::ResultOutOfBlock,
                "hidden page " + std::to_string(n) + " maps past the end of the block");
  }
  return static_cast<std::uint32_t>(physical);
}

NandChip::NandChip(const NandGeometry& geometry, std::uint32_t endurance_limit, std::uint64_t seed)
    : geometry_(geometry), endurance_limit_(endurance_limit), seed_(seed) {
  geometry_.validate();
  std::mt19937_64 rng(seed);
  id_bytes_ = {0x45, 0xDE, 0, 0, 0};
  for (std::size_t i = 2; i < id_bytes_.size(); ++i) {
    id_bytes_[i] = static_cast<std::uint8_t>(rng());
  }
  blocks_.resize(geometry_.block_count());
  for (auto& b : blocks_) b.pages.resize(geometry_.pages_per_block);
}

const BlockState& NandChip::block(std::uint32_t index) const {
  if (index >= blocks_.size()) {
    throw Error(ErrorCode::BlockOutOfRange, "block " + std::to_string(index));
  }
  return blocks_[index];
}

BlockState& NandChip::mutable_block(std::uint32_t index) {
  return const_cast<BlockState&>(std::as_const(*this).block(index));
}

void NandChip::check_page(PageAddress addr) const {
  const auto& b = block(addr.block());
  if (addr.page() >= geometry_.pages_per_block) {
    throw Error(ErrorCode::PageOutOfRange, to_hex_row(addr));
  }
  if (b.is_bad) throw Error(ErrorCode::BadBlock, "block " + std::to_string(addr.block()));
}

void NandChip::erase_block(std::uint32_t index) {
  auto& b = mutable_block(index);
  if (b.is_bad) throw Error(ErrorCode::BadBlock, "block " + std::to_string(index));
  for (auto& page : b.pages) page = PageRecord{};
  ++b.erase_count;
  if (b.erase_count > endurance_limit_) b.is_bad = true;
}

void NandChip::program_page(PageAddress addr, std::span<const std::uint8_t> payload,
                            std::uint8_t status) {
  if (addr.hidden()) throw Error(ErrorCode::HiddenViewWrite, to_hex_row(addr));
  check_page(addr);
  if (payload.size() != geometry_.page_total_bytes()) {
    throw Error(ErrorCode::PayloadSizeMismatch,
                std::to_string(payload.size()) + " != " + std::to_string(geometry_.page_total_bytes()));
  }
  if (status == kStatusErased) {
    throw Error(ErrorCode::InvalidArgument, "cannot program with the erased status byte");
  }
  auto& page = mutable_block(addr.block()).pages[addr.page()];
  if (!page.erased()) throw Error(ErrorCode::ProgramOnDirtyPage, to_hex_row(addr));
  page.status = status;
  page.payload.assign(payload.begin(), payload.end());
}

PageRead NandChip::read_page(PageAddress addr) const {
  check_page(addr);
  PageRead out;
  const std::uint32_t blk = addr.block();
  std::uint32_t page_index = addr.page();
  if (addr.hidden()) {
    if (!hidden_regions_.contains(blk) || !unlocked_.contains(blk)) {
      out.payload.assign(geometry_.page_total_bytes(), 0xFF);
      out.soft_error = ErrorCode::HiddenViewLocked;
      return out;
    }
    page_index = hidden_to_physical(page_index, geometry_.pages_per_block);
  }
  const auto& page = blocks_[blk].pages[page_index];
  if (page.erased()) {
    out.payload.assign(geometry_.page_total_bytes(), 0xFF);
    return out;
  }
  out.payload = page.payload;
  out.status = addr.hidden() ? kStatusHidden : page.status;
  return out;
}

bool NandChip::page_erased(PageAddress addr) const {
  check_page(addr);
  return blocks_[addr.block()].pages[addr.page()].erased();
}

std::uint64_t NandChip::total_erases() const {
  std::uint64_t sum = 0;
  for (const auto& b : blocks_) sum += b.erase_count;
  return sum;
}

void NandChip::install_hidden_region(std::uint32_t index, const GateTag& tag) {
  block(index);
  hidden_regions_[index] = tag;
}

bool NandChip::unlock_hidden(std::uint32_t index, const GateTag& tag) {
  auto it = hidden_regions_.find(index);
  if (it == hidden_regions_.end() || it->second != tag) return false;
  unlocked_.insert(index);
  return true;
}

void NandChip::restore_wear(std::uint32_t index, std::uint32_t erase_count, bool is_bad) {
  auto& b = mutable_block(index);
  b.erase_count = erase_count;
  b.is_bad = is_bad;
}

bool NandChip::same_media(const NandChip& other) const {
  return geometry_ == other.geometry_ && endurance_limit_ == other.endurance_limit_ &&
         seed_ == other.seed_ && blocks_ == other.blocks_ &&
         hidden_regions_ == other.hidden_regions_;
}

}  // namespace mirrorbench
