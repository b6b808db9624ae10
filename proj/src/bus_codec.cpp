#include <algorithm>
#include <string>

#include "mirrorbench/bus.hpp"

namespace mirrorbench {
namespace {

constexpr std::uint64_t kNsPerSecond = 1'000'000'000;

// Offset of the k-th cycle from the start of a run clocked at `mode`.
std::uint64_t cycle_offset(BusMode mode, std::uint64_t k) {
  return k * kNsPerSecond / bytes_per_second(mode);
}

bool is_envelope(CycleKind k) { return k == CycleKind::Cmd || k == CycleKind::Addr; }

bool is_data(CycleKind k) {
  return k == CycleKind::DataIn || k == CycleKind::DataOut || k == CycleKind::SmuggledData;
}

[[noreturn]] void unparseable(std::size_t offset, const std::string& what) {
  throw FormatError(ErrorCode::UnparseableTrace, offset, what);
}

class Emitter {
 public:
  Emitter(BusMode mode, std::uint64_t start) : mode_(mode), start_(start) {}

  void cycle(CycleKind kind, std::uint8_t value) {
    out_.push_back({start_ + cycle_offset(mode_, k_++), kind, value, mode_, false});
  }
  void row_bytes(PageAddress row, int n) {
    for (int i = 0; i < n; ++i) cycle(CycleKind::Addr, static_cast<std::uint8_t>(row.row() >> (8 * i)));
  }
  void page_address(PageAddress row) {
    cycle(CycleKind::Addr, 0);
    cycle(CycleKind::Addr, 0);
    row_bytes(row, 3);
  }
  void data(CycleKind kind, std::span<const std::uint8_t> bytes) {
    for (auto b : bytes) cycle(kind, b);
  }

  std::vector<TraceEvent> out_;

 private:
  BusMode mode_;
  std::uint64_t start_;
  std::uint64_t k_ = 0;
};

std::vector<TraceEvent> encode_hidden_unlock(const BusCommand& cmd, std::uint64_t start) {
  std::vector<TraceEvent> out;
  std::uint64_t t = start;
  auto envelope = [&](CycleKind kind, std::uint8_t value) {
    out.push_back({t, kind, value, cmd.mode, false});
    t += kEnvelopeSpacingNs;
  };
  if (cmd.mode == BusMode::PROP50) envelope(CycleKind::Cmd, opcode::kVendorPrefix);
  envelope(CycleKind::Cmd, opcode::kHiddenUnlock);
  for (int i = 0; i < 3; ++i) envelope(CycleKind::Addr, static_cast<std::uint8_t>(cmd.row.row() >> (8 * i)));
  const std::uint64_t burst = t;
  for (std::size_t i = 0; i < kGateTagBytes; ++i) {
    const std::uint64_t ts = burst + cycle_offset(BusMode::SMUGGLED256, i);
    out.push_back({ts, CycleKind::SmuggledData, (*cmd.smuggled)[i], BusMode::SMUGGLED256,
                   ts - burst < kDummyBit7WindowNs});
  }
  return out;
}

// Cursor over the event stream with framing checks.
class Reader {
 public:
  explicit Reader(std::span<const TraceEvent> ev) : ev_(ev) {}

  bool done() const { return pos_ >= ev_.size(); }
  std::size_t pos() const { return pos_; }
  const TraceEvent& peek() const { return ev_[pos_]; }

  const TraceEvent& expect(CycleKind kind, const char* what) {
    if (done()) unparseable(pos_, std::string("trace ended, expected ") + what);
    if (ev_[pos_].kind != kind) unparseable(pos_, std::string("expected ") + what);
    return ev_[pos_++];
  }
  void expect_cmd(std::uint8_t value, const char* what) {
    const auto& e = expect(CycleKind::Cmd, what);
    if (e.value != value) unparseable(pos_ - 1, std::string("expected ") + what);
  }
  std::uint32_t addr_bytes(int n) {
    std::uint32_t v = 0;
    for (int i = 0; i < n; ++i) v |= std::uint32_t{expect(CycleKind::Addr, "address cycle").value} << (8 * i);
    return v;
  }
  std::vector<std::uint8_t> data_run(CycleKind kind) {
    std::vector<std::uint8_t> out;
    while (!done() && ev_[pos_].kind == kind) out.push_back(ev_[pos_++].value);
    return out;
  }

 private:
  std::span<const TraceEvent> ev_;
  std::size_t pos_ = 0;
};

void scan_anomalies(std::span<const TraceEvent> ev, const CommandSpan& span, std::size_t command_index,
                    std::vector<Anomaly>& out) {
  std::vector<std::uint64_t> spacing;
  for (std::size_t i = span.first_event + 1; i <= span.last_event; ++i) {
    if (is_envelope(ev[i - 1].kind) && is_envelope(ev[i].kind)) spacing.push_back(ev[i].t_ns - ev[i - 1].t_ns);
  }
  double envelope_rate = 0;
  if (!spacing.empty()) {
    std::nth_element(spacing.begin(), spacing.begin() + spacing.size() / 2, spacing.end());
    envelope_rate = static_cast<double>(kNsPerSecond) / static_cast<double>(spacing[spacing.size() / 2]);
  }

  std::size_t i = span.first_event;
  while (i <= span.last_event) {
    if (!is_data(ev[i].kind)) {
      ++i;
      continue;
    }
    std::size_t end = i;
    while (end + 1 <= span.last_event && ev[end + 1].kind == ev[i].kind) ++end;
    const std::size_t n = end - i + 1;
    if (n >= 2) {
      const std::uint64_t first = ev[i].t_ns;
      double rate = static_cast<double>(n - 1) * kNsPerSecond / static_cast<double>(ev[end].t_ns - first);
      const BusMode mode = ev[i].mode;
      bool on_schedule = true;
      for (std::size_t j = i; j <= end && on_schedule; ++j) {
        on_schedule = ev[j].mode == mode && ev[j].t_ns - first == cycle_offset(mode, j - i);
      }
      if (on_schedule) rate = static_cast<double>(bytes_per_second(mode));

      if (envelope_rate > 0 && rate >= kSmuggleRatio * envelope_rate) {
        out.push_back({AnomalyKind::SmuggledBurst, i, command_index, rate, envelope_rate, 0});
      }

      std::int64_t min_setup = INT64_MAX;
      std::size_t min_at = i;
      for (std::size_t j = i + 1; j <= end; ++j) {
        const auto setup = static_cast<std::int64_t>(ev[j].t_ns - ev[j - 1].t_ns) -
                           (ev[j].dummy_bit7 ? kDummyHoldNs : 0);
        if (setup < min_setup) {
          min_setup = setup;
          min_at = j;
        }
      }
      if (min_setup < 1) {
        out.push_back({AnomalyKind::SubNanosecondSetup, min_at, command_index, rate, envelope_rate, min_setup});
      }
    }
    i = end + 1;
  }
}

}  // namespace

std::uint64_t bytes_per_second(BusMode mode) {
  switch (mode) {
    case BusMode::SDR17: return 17'000'000;
    case BusMode::PROP50: return 50'000'000;
    case BusMode::DDR128: return 256'000'000;
    case BusMode::SMUGGLED256: return 256'000'000;
  }
  return 1;
}

std::string_view to_string(BusMode mode) {
  switch (mode) {
    case BusMode::SDR17: return "SDR17";
    case BusMode::PROP50: return "PROP50";
    case BusMode::DDR128: return "DDR128";
    case BusMode::SMUGGLED256: return "SMUGGLED256";
  }
  return "?";
}

std::optional<BusMode> parse_bus_mode(std::string_view text) {
  for (auto m : {BusMode::SDR17, BusMode::PROP50, BusMode::DDR128, BusMode::SMUGGLED256}) {
    if (to_string(m) == text) return m;
  }
  return std::nullopt;
}

std::string_view to_string(CycleKind kind) {
  switch (kind) {
    case CycleKind::Cmd: return "cmd";
    case CycleKind::Addr: return "addr";
    case CycleKind::DataIn: return "data_in";
    case CycleKind::DataOut: return "data_out";
    case CycleKind::SmuggledData: return "smuggled_data";
  }
  return "?";
}

std::optional<CycleKind> parse_cycle_kind(std::string_view text) {
  for (auto k : {CycleKind::Cmd, CycleKind::Addr, CycleKind::DataIn, CycleKind::DataOut, CycleKind::SmuggledData}) {
    if (to_string(k) == text) return k;
  }
  return std::nullopt;
}

std::string_view to_string(CommandKind kind) {
  switch (kind) {
    case CommandKind::Reset: return "Reset";
    case CommandKind::ReadId: return "ReadId";
    case CommandKind::ReadPage: return "ReadPage";
    case CommandKind::ProgramPage: return "ProgramPage";
    case CommandKind::EraseBlock: return "EraseBlock";
    case CommandKind::SetFeature: return "SetFeature";
    case CommandKind::HiddenUnlock: return "HiddenUnlock";
    case CommandKind::HiddenRead: return "HiddenRead";
  }
  return "?";
}

std::string_view to_string(AnomalyKind kind) {
  return kind == AnomalyKind::SmuggledBurst ? "SmuggledBurst" : "SubNanosecondSetup";
}

void validate(const BusCommand& cmd) {
  auto fail = [&](const std::string& why) {
    throw Error(ErrorCode::MalformedCommand, std::string(to_string(cmd.kind)) + ": " + why);
  };
  if (cmd.mode == BusMode::SMUGGLED256) fail("SMUGGLED256 is a burst rate, not a command mode");
  if (cmd.row.row() > PageAddress::kMaxRow) fail("row exceeds 24 bits");
  if (cmd.kind != CommandKind::HiddenUnlock && cmd.smuggled) fail("only HiddenUnlock carries smuggled bytes");
  const bool hidden = cmd.row.hidden();
  switch (cmd.kind) {
    case CommandKind::Reset:
      if (cmd.row.row() != 0 || !cmd.data.empty()) fail("reset takes no address or data");
      break;
    case CommandKind::ReadId:
    case CommandKind::SetFeature:
      if (cmd.row.row() > 0xFF) fail("single address byte expected");
      break;
    case CommandKind::ReadPage:
    case CommandKind::ProgramPage:
      if (hidden) fail("hidden flag set on a physical-view command");
      break;
    case CommandKind::EraseBlock:
      if (hidden) fail("hidden flag set on erase");
      if (!cmd.data.empty()) fail("erase carries no data");
      break;
    case CommandKind::HiddenRead:
      if (!hidden) fail("hidden read requires the hidden flag");
      break;
    case CommandKind::HiddenUnlock:
      if (!cmd.smuggled) fail("missing 8-byte gate tag");
      if (!cmd.data.empty()) fail("unlock carries no data phase");
      break;
  }
}

std::vector<TraceEvent> encode(const BusCommand& cmd, std::uint64_t start_ns) {
  validate(cmd);
  if (cmd.kind == CommandKind::HiddenUnlock) return encode_hidden_unlock(cmd, start_ns);

  Emitter em(cmd.mode, start_ns);
  if (cmd.mode == BusMode::PROP50) em.cycle(CycleKind::Cmd, opcode::kVendorPrefix);
  switch (cmd.kind) {
    case CommandKind::Reset:
      em.cycle(CycleKind::Cmd, opcode::kReset);
      break;
    case CommandKind::ReadId:
      em.cycle(CycleKind::Cmd, opcode::kReadId);
      em.cycle(CycleKind::Addr, static_cast<std::uint8_t>(cmd.row.row()));
      em.data(CycleKind::DataOut, cmd.data);
      break;
    case CommandKind::ReadPage:
    case CommandKind::HiddenRead:
      em.cycle(CycleKind::Cmd, opcode::kRead);
      em.page_address(cmd.row);
      em.cycle(CycleKind::Cmd, opcode::kReadConfirm);
      em.data(CycleKind::DataOut, cmd.data);
      break;
    case CommandKind::ProgramPage:
      em.cycle(CycleKind::Cmd, opcode::kProgram);
      em.page_address(cmd.row);
      em.data(CycleKind::DataIn, cmd.data);
      em.cycle(CycleKind::Cmd, opcode::kProgramConfirm);
      break;
    case CommandKind::EraseBlock:
      em.cycle(CycleKind::Cmd, opcode::kErase);
      em.row_bytes(cmd.row, 3);
      em.cycle(CycleKind::Cmd, opcode::kEraseConfirm);
      break;
    case CommandKind::SetFeature:
      em.cycle(CycleKind::Cmd, opcode::kSetFeature);
      em.cycle(CycleKind::Addr, static_cast<std::uint8_t>(cmd.row.row()));
      em.data(CycleKind::DataIn, cmd.data);
      break;
    case CommandKind::HiddenUnlock:
      break;
  }
  return std::move(em.out_);
}

void TraceRecorder::append(const BusCommand& cmd) {
  auto ev = encode(cmd, next_ns_);
  next_ns_ = ev.back().t_ns + kGapNs;
  events_.insert(events_.end(), ev.begin(), ev.end());
}

std::vector<TraceEvent> encode_all(std::span<const BusCommand> cmds, std::uint64_t start_ns) {
  TraceRecorder rec(start_ns);
  for (const auto& c : cmds) rec.append(c);
  return rec.take();
}

DecodeResult decode(std::span<const TraceEvent> events) {
  for (std::size_t i = 1; i < events.size(); ++i) {
    if (events[i].t_ns <= events[i - 1].t_ns) unparseable(i, "timestamps must be strictly increasing");
  }

  DecodeResult result;
  Reader rd(events);
  while (!rd.done()) {
    const std::size_t first = rd.pos();
    const auto* op = &rd.expect(CycleKind::Cmd, "command cycle");
    const bool vendor = op->value == opcode::kVendorPrefix;
    if (vendor) op = &rd.expect(CycleKind::Cmd, "opcode after vendor prefix");
    const std::size_t op_at = rd.pos() - 1;
    if (op->mode == BusMode::SMUGGLED256) unparseable(op_at, "command cycle in smuggled mode");
    if (vendor != (op->mode == BusMode::PROP50)) unparseable(op_at, "vendor prefix does not match PROP50 mode");

    BusCommand cmd;
    cmd.mode = op->mode;
    switch (op->value) {
      case opcode::kReset:
        cmd.kind = CommandKind::Reset;
        break;
      case opcode::kReadId:
        cmd.kind = CommandKind::ReadId;
        cmd.row = PageAddress(rd.addr_bytes(1));
        cmd.data = rd.data_run(CycleKind::DataOut);
        break;
      case opcode::kRead: {
        const std::size_t col_at = rd.pos();
        if (rd.addr_bytes(2) != 0) unparseable(col_at, "non-zero column address");
        cmd.row = PageAddress(rd.addr_bytes(3));
        cmd.kind = cmd.row.hidden() ? CommandKind::HiddenRead : CommandKind::ReadPage;
        rd.expect_cmd(opcode::kReadConfirm, "read confirm 0x30");
        cmd.data = rd.data_run(CycleKind::DataOut);
        break;
      }
      case opcode::kProgram: {
        cmd.kind = CommandKind::ProgramPage;
        const std::size_t col_at = rd.pos();
        if (rd.addr_bytes(2) != 0) unparseable(col_at, "non-zero column address");
        cmd.row = PageAddress(rd.addr_bytes(3));
        cmd.data = rd.data_run(CycleKind::DataIn);
        rd.expect_cmd(opcode::kProgramConfirm, "program confirm 0x10");
        break;
      }
      case opcode::kErase:
        cmd.kind = CommandKind::EraseBlock;
        cmd.row = PageAddress(rd.addr_bytes(3));
        rd.expect_cmd(opcode::kEraseConfirm, "erase confirm 0xD0");
        break;
      case opcode::kSetFeature:
        cmd.kind = CommandKind::SetFeature;
        cmd.row = PageAddress(rd.addr_bytes(1));
        cmd.data = rd.data_run(CycleKind::DataIn);
        break;
      case opcode::kHiddenUnlock: {
        cmd.kind = CommandKind::HiddenUnlock;
        cmd.row = PageAddress(rd.addr_bytes(3));
        GateTag tag{};
        for (auto& b : tag) b = rd.expect(CycleKind::SmuggledData, "smuggled tag byte").value;
        cmd.smuggled = tag;
        break;
      }
      default:
        unparseable(op_at, "unknown opcode");
    }
    try {
      validate(cmd);
    } catch (const Error& e) {
      unparseable(first, e.what());
    }
    const CommandSpan span{first, rd.pos() - 1};
    scan_anomalies(events, span, result.commands.size(), result.anomalies);
    result.commands.push_back(std::move(cmd));
    result.spans.push_back(span);
  }
  return result;
}

PhaseReport detect_phases(std::span<const TraceEvent> events) {
  const auto decoded = decode(events);
  PhaseReport report;
  for (std::size_t i = 0; i < decoded.commands.size(); ++i) {
    const auto& span = decoded.spans[i];
    const BusMode mode = decoded.commands[i].mode;
    const std::size_t n = span.last_event - span.first_event + 1;
    if (!report.empty() && report.back().mode == mode) {
      auto& p = report.back();
      p.end_ns = events[span.last_event].t_ns;
      ++p.command_count;
      p.event_count += n;
    } else {
      report.push_back({mode, events[span.first_event].t_ns, events[span.last_event].t_ns, 1, n});
    }
  }
  return report;
}

}  // namespace mirrorbench
