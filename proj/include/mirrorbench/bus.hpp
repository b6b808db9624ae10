#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "mirrorbench/nand_chip.hpp"

namespace mirrorbench {

enum class BusMode {
  SDR17,        // ONFI single data rate, 17 MHz
  PROP50,       // vendor commands, 50 MHz
  DDR128,       // 128 MHz double data rate
  SMUGGLED256,  // burst embedded inside a slow command envelope
};

std::uint64_t bytes_per_second(BusMode mode);
std::string_view to_string(BusMode mode);
std::optional<BusMode> parse_bus_mode(std::string_view text);

enum class CycleKind { Cmd, Addr, DataIn, DataOut, SmuggledData };

std::string_view to_string(CycleKind kind);
std::optional<CycleKind> parse_cycle_kind(std::string_view text);

struct TraceEvent {
  std::uint64_t t_ns = 0;
  CycleKind kind = CycleKind::Cmd;
  std::uint8_t value = 0;
  BusMode mode = BusMode::SDR17;
  bool dummy_bit7 = false;

  friend bool operator==(const TraceEvent&, const TraceEvent&) = default;
};

enum class CommandKind { Reset, ReadId, ReadPage, ProgramPage, EraseBlock, SetFeature, HiddenUnlock, HiddenRead };

std::string_view to_string(CommandKind kind);

struct BusCommand {
  CommandKind kind = CommandKind::Reset;
  // Row address for page/block commands; feature or ID address byte for
  // ReadId and SetFeature.
  PageAddress row;
  std::vector<std::uint8_t> data;
  BusMode mode = BusMode::SDR17;
  std::optional<GateTag> smuggled;

  friend bool operator==(const BusCommand&, const BusCommand&) = default;
};

namespace opcode {
inline constexpr std::uint8_t kRead = 0x00;
inline constexpr std::uint8_t kProgramConfirm = 0x10;
inline constexpr std::uint8_t kReadConfirm = 0x30;
inline constexpr std::uint8_t kVendorPrefix = 0x5C;
inline constexpr std::uint8_t kErase = 0x60;
inline constexpr std::uint8_t kProgram = 0x80;
inline constexpr std::uint8_t kReadId = 0x90;
inline constexpr std::uint8_t kHiddenUnlock = 0xA5;
inline constexpr std::uint8_t kEraseConfirm = 0xD0;
inline constexpr std::uint8_t kSetFeature = 0xEF;
inline constexpr std::uint8_t kReset = 0xFF;
}  // namespace opcode

// Configuration envelope of a HiddenUnlock runs at about 1 MHz.
inline constexpr std::uint64_t kEnvelopeSpacingNs = 1000;
// Bit 7 carries a dummy value for this long after a smuggled burst starts.
inline constexpr std::uint64_t kDummyBit7WindowNs = 23;
// Hold time eaten by the dummy bit-7 transition when estimating setup.
inline constexpr std::int64_t kDummyHoldNs = 3;
// A data run this many times faster than its envelope is a smuggled burst.
inline constexpr double kSmuggleRatio = 100.0;
inline constexpr std::size_t kGateTagBytes = 8;

// Throws MalformedCommand when the command cannot be put on the wire.
void validate(const BusCommand& cmd);

// Cycle-level encoding starting at start_ns. Timestamps derive from the
// mode's byte rate; the last event's time is the command's end.
std::vector<TraceEvent> encode(const BusCommand& cmd, std::uint64_t start_ns = 0);

// Appends commands back to back with a fixed idle gap between them.
class TraceRecorder {
 public:
  static constexpr std::uint64_t kGapNs = 100;

  explicit TraceRecorder(std::uint64_t start_ns = 0) : next_ns_(start_ns) {}

  void append(const BusCommand& cmd);
  const std::vector<TraceEvent>& events() const { return events_; }
  std::vector<TraceEvent> take() { return std::move(events_); }

 private:
  std::uint64_t next_ns_;
  std::vector<TraceEvent> events_;
};

std::vector<TraceEvent> encode_all(std::span<const BusCommand> cmds, std::uint64_t start_ns = 0);

enum class AnomalyKind { SmuggledBurst, SubNanosecondSetup };

std::string_view to_string(AnomalyKind kind);

struct Anomaly {
  AnomalyKind kind = AnomalyKind::SmuggledBurst;
  std::size_t event_offset = 0;
  std::size_t command_index = 0;
  // Burst byte rate. When the timestamps are exactly the floor-quantised
  // schedule of the events' nominal mode rate, that rate is reported.
  double rate_bps = 0;
  double envelope_rate_bps = 0;
  std::int64_t setup_ns = 0;
};

struct CommandSpan {
  std::size_t first_event = 0;
  std::size_t last_event = 0;
};

struct DecodeResult {
  std::vector<BusCommand> commands;
  std::vector<CommandSpan> spans;
  std::vector<Anomaly> anomalies;
};

// Throws FormatError(UnparseableTrace) with the offending event offset.
DecodeResult decode(std::span<const TraceEvent> events);

struct Phase {
  BusMode mode = BusMode::SDR17;
  std::uint64_t start_ns = 0;
  std::uint64_t end_ns = 0;
  std::size_t command_count = 0;
  std::size_t event_count = 0;

  friend bool operator==(const Phase&, const Phase&) = default;
};

using PhaseReport = std::vector<Phase>;

// Segments a trace by command mode; adjacent same-mode commands merge.
PhaseReport detect_phases(std::span<const TraceEvent> events);

struct BusResponse {
  std::vector<std::uint8_t> data;
  std::uint8_t status = kStatusErased;
};

BusResponse execute(NandChip& chip, const BusCommand& cmd);

// JSON Lines trace files, one event per line.
void write_trace_jsonl(std::ostream& out, std::span<const TraceEvent> events);
std::vector<TraceEvent> read_trace_jsonl(std::istream& in);

}  // namespace mirrorbench
