#include "mirrorbench/device.hpp"

#include <algorithm>
#include <random>

#include "mirrorbench/checksum.hpp"

namespace mirrorbench {
namespace {

constexpr std::string_view kKeybagMagic = "KEYBAG01";
constexpr std::string_view kCounterMagic = "RETRYCNT";
constexpr std::uint32_t kHiddenBlock5c = 0x041A;
constexpr int kLabelFirmware = 14;
constexpr int kLabelTrace = 4013;

void append_le32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_le32(const std::uint8_t* in) {
  return std::uint32_t{in[0]} | std::uint32_t{in[1]} << 8 | std::uint32_t{in[2]} << 16 | std::uint32_t{in[3]} << 24;
}

bool has_magic(std::span<const std::uint8_t> data, std::string_view magic) {
  return data.size() >= magic.size() && std::equal(magic.begin(), magic.end(), data.begin());
}

struct BootFailure {
  BootOutcome outcome;
  int label;
  std::string detail;
};

}  // namespace

std::string_view to_string(BootOutcome outcome) {
  switch (outcome) {
    case BootOutcome::Booted: return "Booted";
    case BootOutcome::BootLoop: return "BootLoop";
    case BootOutcome::RecoveryRequired: return "RecoveryRequired";
  }
  return "?";
}

std::string_view to_string(AttemptOutcome outcome) {
  switch (outcome) {
    case AttemptOutcome::Unlocked: return "Unlocked";
    case AttemptOutcome::Failed: return "Failed";
    case AttemptOutcome::Wiped: return "Wiped";
  }
  return "?";
}

void TimingModel::validate() const {
  if (boot_s == 0 || power_down_s == 0 || restore_min_s == 0 || restore_max_s < restore_min_s ||
      cycle_serial_s == 0 || cycle_pool_s == 0) {
    throw Error(ErrorCode::InvalidArgument, "timing constants must be positive with restore_min <= restore_max");
  }
}

DeviceLayout DeviceLayout::for_geometry(const NandGeometry& g) {
  DeviceLayout layout;
  layout.hidden_blocks = {g.block_count() > kHiddenBlock5c ? kHiddenBlock5c : g.block_count() - 1};
  // Largest n with 2n - 1 < pages_per_block.
  const std::uint32_t max_n = g.pages_per_block < 2 ? g.pages_per_block : g.pages_per_block / 2 + 1;
  layout.hidden_pages = std::min<std::uint32_t>(8, max_n);
  return layout;
}

FtlConfig DeviceLayout::ftl_config() const {
  FtlConfig cfg;
  cfg.counter_regions = {counter};
  cfg.reserved_blocks = hidden_blocks;
  return cfg;
}

GateTag gate_tag(const Uid& uid, std::uint32_t block) {
  std::vector<std::uint8_t> buf{'g', 'a', 't', 'e'};
  buf.insert(buf.end(), uid.begin(), uid.end());
  append_le32(buf, block);
  const auto h = sha256(buf);
  GateTag tag{};
  std::copy_n(h.begin(), tag.size(), tag.begin());
  return tag;
}

std::vector<std::uint8_t> hidden_page_payload(const Uid& uid, std::uint32_t block, std::uint32_t n,
                                              std::uint32_t page_bytes) {
  std::vector<std::uint8_t> out;
  out.reserve(page_bytes + 32);
  for (std::uint32_t counter = 0; out.size() < page_bytes; ++counter) {
    std::vector<std::uint8_t> buf{'h', 'i', 'd', 'e'};
    buf.insert(buf.end(), uid.begin(), uid.end());
    append_le32(buf, block);
    append_le32(buf, n);
    append_le32(buf, counter);
    const auto h = sha256(buf);
    out.insert(out.end(), h.begin(), h.end());
  }
  out.resize(page_bytes);
  return out;
}

std::vector<std::uint8_t> firmware_page(std::uint64_t firmware_seed, std::uint32_t index, std::uint32_t data_bytes) {
  std::mt19937_64 rng(firmware_seed * 0x9E3779B97F4A7C15ull + index);
  std::vector<std::uint8_t> out(data_bytes);
  for (auto& b : out) b = static_cast<std::uint8_t>(rng());
  const std::uint16_t crc = crc16(std::span(out).first(data_bytes - 2));
  out[data_bytes - 2] = static_cast<std::uint8_t>(crc >> 8);
  out[data_bytes - 1] = static_cast<std::uint8_t>(crc & 0xFF);
  return out;
}

bool firmware_page_intact(std::span<const std::uint8_t> data) {
  if (data.size() < 2) return false;
  const std::uint16_t stored = static_cast<std::uint16_t>((data[data.size() - 2] << 8) | data.back());
  return crc16(data.first(data.size() - 2)) == stored;
}

Device::Device(DeviceConfig config) : config_(config) {
  config_.timing.validate();
  if (config_.kdf_iterations == 0) throw Error(ErrorCode::InvalidArgument, "kdf_iterations must be positive");
  std::mt19937_64 rng(config_.seed);
  for (auto& b : uid_) b = static_cast<std::uint8_t>(rng());
}

DeviceLayout Device::layout() const { return DeviceLayout::for_geometry(chip().geometry()); }

NandChip& Device::chip() const {
  if (!chip_) throw Error(ErrorCode::NoChipAttached, "no NAND attached");
  return *chip_;
}

void Device::attach(NandChip& chip) {
  if (chip_ && powered_) throw Error(ErrorCode::UnsafeRemoval, "cannot swap NAND while powered");
  chip_ = &chip;
}

void Device::detach() {
  if (powered_) throw Error(ErrorCode::UnsafeRemoval, "NAND removed while powered");
  chip_ = nullptr;
}

std::uint64_t Device::pending_delay_s() const {
  return next_attempt_ns_ > clock_ns_ ? (next_attempt_ns_ - clock_ns_ + kNs - 1) / kNs : 0;
}

std::vector<std::uint8_t> Device::counter_page(std::uint32_t count) const {
  std::vector<std::uint8_t> data(kCounterMagic.begin(), kCounterMagic.end());
  append_le32(data, count);
  data.resize(chip().geometry().page_data_bytes(), 0);
  return data;
}

void Device::provision(std::string_view passcode, std::uint64_t firmware_seed) {
  if (powered_) throw Error(ErrorCode::PoweredOn, "provisioning needs the device powered off");
  auto& nand = chip();
  const auto& g = nand.geometry();
  const auto lay = layout();

  for (std::uint32_t b = 0; b < g.block_count(); ++b) {
    const auto& state = nand.block(b);
    if (state.is_bad) continue;
    if (std::any_of(state.pages.begin(), state.pages.end(), [](const PageRecord& p) { return !p.erased(); })) {
      nand.erase_block(b);
    }
  }

  for (std::uint32_t b : lay.hidden_blocks) {
    nand.install_hidden_region(b, gate_tag(uid_, b));
    for (std::uint32_t n = 0; n < lay.hidden_pages; ++n) {
      const std::uint32_t physical = hidden_to_physical(n, g.pages_per_block);
      nand.program_page(PageAddress::make(b, physical), hidden_page_payload(uid_, b, n, g.page_total_bytes()),
                        kStatusProgrammed);
    }
  }

  Ftl ftl(nand, lay.ftl_config());
  for (std::uint32_t lpn = lay.firmware.first; lpn <= lay.firmware.last; ++lpn) {
    ftl.logical_write(lpn, firmware_page(firmware_seed, lpn - lay.firmware.first, g.page_data_bytes()));
  }
  std::vector<std::uint8_t> keybag(kKeybagMagic.begin(), kKeybagMagic.end());
  const auto verifier = kdf(uid_, passcode, config_.kdf_iterations);
  keybag.insert(keybag.end(), verifier.begin(), verifier.end());
  keybag.resize(g.page_data_bytes(), 0);
  ftl.logical_write(lay.keybag_lpn, keybag);
  ftl.logical_write(lay.counter.first, counter_page(0));
  nand.lock_hidden_views();
}

BootReport Device::boot() {
  if (powered_) throw Error(ErrorCode::PoweredOn, "already running");
  auto& nand = chip();
  const auto lay = layout();
  const auto& g = nand.geometry();

  BootReport report;
  TraceRecorder trace;
  auto issue = [&](BusCommand cmd) {
    auto resp = execute(nand, cmd);
    if (cmd.kind == CommandKind::ReadId || cmd.kind == CommandKind::ReadPage || cmd.kind == CommandKind::HiddenRead) {
      cmd.data = std::move(resp.data);
    }
    trace.append(cmd);
    return cmd.data;
  };

  std::optional<BootFailure> failure;
  std::unique_ptr<Ftl> ftl;
  std::optional<Digest> verifier;
  std::uint32_t fail_count = 0;

  try {
    // Boot ROM: plain ONFI at 17 MHz.
    issue({CommandKind::Reset, {}, {}, BusMode::SDR17, {}});
    issue({CommandKind::ReadId, PageAddress(0x00), {}, BusMode::SDR17, {}});
    ftl = std::make_unique<Ftl>(nand, lay.ftl_config());
    for (std::uint32_t lpn = lay.firmware.first; lpn <= lay.firmware.last && !failure; ++lpn) {
      const auto addr = ftl->lookup(lpn);
      if (!addr) {
        failure = BootFailure{BootOutcome::RecoveryRequired, kLabelFirmware, "firmware page unmapped"};
        break;
      }
      const auto raw = issue({CommandKind::ReadPage, *addr, {}, BusMode::SDR17, {}});
      if (!firmware_page_intact(page_data(g, raw))) {
        failure = BootFailure{BootOutcome::RecoveryRequired, kLabelFirmware,
                              "firmware checksum mismatch at " + to_hex_row(*addr)};
      }
    }

    for (std::uint32_t b : lay.hidden_blocks) {
      if (failure) break;
      try {
        issue({CommandKind::HiddenUnlock, PageAddress::make(b, 0), {}, BusMode::SDR17, gate_tag(uid_, b)});
        for (std::uint32_t n = 0; n < lay.hidden_pages; ++n) {
          const auto raw = issue({CommandKind::HiddenRead, PageAddress::make(b, n, true), {}, BusMode::SDR17, {}});
          if (raw != hidden_page_payload(uid_, b, n, g.page_total_bytes())) {
            failure = BootFailure{BootOutcome::BootLoop, 0, "hidden page content mismatch"};
            break;
          }
        }
      } catch (const Error& e) {
        if (e.code() != ErrorCode::GateRejected && e.code() != ErrorCode::HiddenViewLocked) throw;
        failure = BootFailure{BootOutcome::BootLoop, 0, e.what()};
      }
    }

    if (!failure) {
      // Vendor configuration at 50 MHz, then switch the interface to DDR.
      issue({CommandKind::SetFeature, PageAddress(0x01), {0x20, 0x00, 0x00, 0x00}, BusMode::PROP50, {}});
      issue({CommandKind::SetFeature, PageAddress(0x80), {0x01, 0x00, 0x00, 0x00}, BusMode::PROP50, {}});

      if (const auto addr = ftl->lookup(lay.keybag_lpn)) {
        const auto data = page_data(g, issue({CommandKind::ReadPage, *addr, {}, BusMode::DDR128, {}}));
        if (has_magic(data, kKeybagMagic)) {
          Digest v{};
          std::copy_n(data.begin() + kKeybagMagic.size(), v.size(), v.begin());
          verifier = v;
        }
      }
      const auto counter_addr = ftl->lookup(lay.counter.first);
      if (!counter_addr) {
        failure = BootFailure{BootOutcome::RecoveryRequired, kLabelFirmware, "retry counter missing"};
      } else {
        const auto data = page_data(g, issue({CommandKind::ReadPage, *counter_addr, {}, BusMode::DDR128, {}}));
        if (!has_magic(data, kCounterMagic)) {
          failure = BootFailure{BootOutcome::RecoveryRequired, kLabelFirmware, "retry counter corrupt"};
        } else {
          fail_count = get_le32(data.data() + kCounterMagic.size());
        }
      }
    }
  } catch (const Error& e) {
    if (e.code() != ErrorCode::BadBlock) throw;
    failure = BootFailure{BootOutcome::RecoveryRequired, kLabelFirmware, e.what()};
  }

  report.trace = trace.take();
  try {
    report.phases = detect_phases(report.trace);
  } catch (const Error& e) {
    failure = BootFailure{BootOutcome::RecoveryRequired, kLabelTrace, e.what()};
  }

  clock_ns_ += std::uint64_t{config_.timing.boot_s} * kNs;
  report.duration_s = config_.timing.boot_s;
  nand.lock_hidden_views();
  if (failure) {
    report.outcome = failure->outcome;
    report.error_code = failure->label;
    report.detail = failure->detail;
    return report;
  }

  ftl_ = std::move(ftl);
  verifier_ = verifier;
  fail_count_ = fail_count;
  unlocked_ = false;
  powered_ = true;
  next_attempt_ns_ = clock_ns_ + std::uint64_t{delay_for(fail_count_)} * kNs;
  report.outcome = BootOutcome::Booted;
  return report;
}

void Device::persist_fail_count() {
  ftl_->logical_write(layout().counter.first, counter_page(fail_count_));
}

AttemptResult Device::try_passcode(std::string_view passcode) {
  if (!powered_) throw Error(ErrorCode::PoweredOff, "device is off");
  if (clock_ns_ < next_attempt_ns_) {
    throw Error(ErrorCode::DelayPending, std::to_string(pending_delay_s()) + " s remaining");
  }
  if (!verifier_) return {AttemptOutcome::Wiped, 0, fail_count_};
  clock_ns_ += std::uint64_t{config_.timing.attempt_entry_s} * kNs;

  if (kdf(uid_, passcode, config_.kdf_iterations) == *verifier_) {
    unlocked_ = true;
    fail_count_ = 0;
    persist_fail_count();
    next_attempt_ns_ = clock_ns_;
    return {AttemptOutcome::Unlocked, 0, 0};
  }

  // The counter reaches NAND before the caller learns the result.
  ++fail_count_;
  persist_fail_count();
  if (config_.wipe_after_10 && fail_count_ >= 10) {
    std::vector<std::uint8_t> blank(chip().geometry().page_data_bytes(), 0xFF);
    ftl_->logical_write(layout().keybag_lpn, blank);
    verifier_.reset();
    return {AttemptOutcome::Wiped, 0, fail_count_};
  }
  const std::uint32_t wait = delay_for(fail_count_);
  next_attempt_ns_ = clock_ns_ + std::uint64_t{wait} * kNs;
  return {AttemptOutcome::Failed, wait, fail_count_};
}

void Device::power_down() {
  if (!powered_) throw Error(ErrorCode::PoweredOff, "device is already off");
  clock_ns_ += std::uint64_t{config_.timing.power_down_s} * kNs;
  powered_ = false;
  unlocked_ = false;
  ftl_.reset();
  verifier_.reset();
  chip().lock_hidden_views();
}

std::optional<std::uint32_t> Device::stored_fail_count() const {
  const auto& nand = chip();
  const auto lay = layout();
  const auto rebuilt = rebuild_map(nand, lay.hidden_blocks);
  auto it = rebuilt.map.find(lay.counter.first);
  if (it == rebuilt.map.end()) return std::nullopt;
  const auto data = page_data(nand.geometry(), nand.read_page(it->second.addr).payload);
  if (!has_magic(data, kCounterMagic)) return std::nullopt;
  return get_le32(data.data() + kCounterMagic.size());
}

}  // namespace mirrorbench
