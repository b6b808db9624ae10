#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace mirrorbench {

enum class ErrorCode {
  InvalidGeometry,
  InvalidArgument,
  BlockOutOfRange,
  PageOutOfRange,
  BadBlock,
  ProgramOnDirtyPage,
  PayloadSizeMismatch,
  HiddenViewWrite,
  HiddenViewLocked,
  ResultOutOfBlock,
  // ftl
  NoFreePages,
  Unmapped,
  LogicalOutOfRange,
  // bus
  MalformedCommand,
  UnparseableTrace,
  GateRejected,
  // device
  PoweredOff,
  PoweredOn,
  DelayPending,
  UnsafeRemoval,
  NoChipAttached,
  NotBooted,
  // mirror
  GeometryMismatch,
  RegionMismatch,
  // image container
  BadMagic,
  TruncatedFile,
  HeaderParseError,
  IoError,
  // attack
  EnduranceExceeded,
  WipedUnexpectedly,
};

std::string_view to_string(ErrorCode code);

// Every domain failure in the library surfaces as this exception type.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Container parse failures carry the byte offset at which parsing stopped.
class FormatError : public Error {
 public:
  FormatError(ErrorCode code, std::uint64_t offset, const std::string& what)
      : Error(code, what + " (offset " + std::to_string(offset) + ")"), offset_(offset) {}

  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

}  // namespace mirrorbench
