#include "mirrorbench/geometry.hpp"

#include <cstdio>

#include "mirrorbench/error.hpp"

namespace mirrorbench {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidGeometry: return "InvalidGeometry";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::BlockOutOfRange: return "BlockOutOfRange";
    case ErrorCode::PageOutOfRange: return "PageOutOfRange";
    case ErrorCode::BadBlock: return "BadBlock";
    case ErrorCode::ProgramOnDirtyPage: return "ProgramOnDirtyPage";
    case ErrorCode::PayloadSizeMismatch: return "PayloadSizeMismatch";
    case ErrorCode::HiddenViewWrite: return "HiddenViewWrite";
    case ErrorCode::HiddenViewLocked: return "HiddenViewLocked";
    case ErrorCode::ResultOutOfBlock: return "ResultOutOfBlock";
    case ErrorCode::NoFreePages: return "NoFreePages";
    case ErrorCode::Unmapped: return "Unmapped";
    case ErrorCode::LogicalOutOfRange: return "LogicalOutOfRange";
    case ErrorCode::MalformedCommand: return "MalformedCommand";
    case ErrorCode::UnparseableTrace: return "UnparseableTrace";
    case ErrorCode::GateRejected: return "GateRejected";
    case ErrorCode::PoweredOff: return "PoweredOff";
    case ErrorCode::PoweredOn: return "PoweredOn";
    case ErrorCode::DelayPending: return "DelayPending";
    case ErrorCode::UnsafeRemoval: return "UnsafeRemoval";
    case ErrorCode::NoChipAttached: return "NoChipAttached";
    case ErrorCode::NotBooted: return "NotBooted";
    case ErrorCode::GeometryMismatch: return "GeometryMismatch";
    case ErrorCode::RegionMismatch: return "RegionMismatch";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::TruncatedFile: return "TruncatedFile";
    case ErrorCode::HeaderParseError: return "HeaderParseError";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::EnduranceExceeded: return "EnduranceExceeded";
    case ErrorCode::WipedUnexpectedly: return "WipedUnexpectedly";
  }
  return "Unknown";
}

void NandGeometry::validate() const {
  if (planes == 0 || blocks_per_plane == 0 || pages_per_block == 0 || sectors_per_page == 0 ||
      sector_data_bytes == 0 || sector_index_bytes == 0) {
    throw Error(ErrorCode::InvalidGeometry, "all geometry counts must be >= 1");
  }
  if (pages_per_block > 256) {
    throw Error(ErrorCode::InvalidGeometry, "pages_per_block exceeds the 8-bit page field");
  }
  if (std::uint64_t{planes} * blocks_per_plane > 0x8000) {
    throw Error(ErrorCode::InvalidGeometry, "block count exceeds the 15-bit block field");
  }
}

NandGeometry iphone5c_8g() { return NandGeometry{}; }

NandGeometry desk_small() {
  return NandGeometry{.planes = 1,
                      .blocks_per_plane = 16,
                      .pages_per_block = 16,
                      .sectors_per_page = 4,
                      .sector_data_bytes = 256,
                      .sector_index_bytes = 16};
}

std::optional<NandGeometry> profile_by_name(std::string_view name) {
  if (name == "iphone5c-8g") return iphone5c_8g();
  if (name == "desk-small") return desk_small();
  return std::nullopt;
}

std::string to_hex_row(PageAddress addr) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "0x%08X", addr.row());
  return buf;
}

}  // namespace mirrorbench
