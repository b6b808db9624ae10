#pragma once

#include <array>
#include <memory>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mirrorbench/bus.hpp"
#include "mirrorbench/ftl.hpp"
#include "mirrorbench/nand_chip.hpp"

namespace mirrorbench {

using Digest = std::array<std::uint8_t, 32>;
using Uid = Digest;

Digest sha256(std::span<const std::uint8_t> data);

inline constexpr std::uint32_t kKdfIterations = 10000;

// state_0 = 32 zero bytes;
// state_{i+1} = SHA-256(state_i || uid || passcode || le32(i)).
Digest kdf(const Uid& uid, std::string_view passcode, std::uint32_t iterations = kKdfIterations);

// Seconds the user must wait after the given number of consecutive failures.
std::uint32_t delay_for(std::uint32_t fail_count);

// Virtual-time constants, in seconds.
struct TimingModel {
  std::uint32_t boot_s = 35;
  std::uint32_t power_down_s = 10;
  std::uint32_t attempt_entry_s = 0;
  std::uint32_t restore_min_s = 30;
  std::uint32_t restore_max_s = 60;
  std::uint32_t cycle_serial_s = 90;
  std::uint32_t cycle_pool_s = 45;

  std::uint32_t restore_mid_s() const { return (restore_min_s + restore_max_s) / 2; }
  void validate() const;
};

// Where the device keeps things, logically and physically.
struct DeviceLayout {
  LpnRange firmware{0x00, 0x03};
  std::uint32_t keybag_lpn = 0x10;
  LpnRange counter{0x20, 0x20};
  std::vector<std::uint32_t> hidden_blocks;
  std::uint32_t hidden_pages = 8;

  // Hidden data sits in block 0x041A when the array has one, otherwise in
  // the last block.
  static DeviceLayout for_geometry(const NandGeometry& geometry);
  FtlConfig ftl_config() const;
};

struct DeviceConfig {
  std::uint64_t seed = 1;
  bool wipe_after_10 = false;
  // Lower only for fast test fixtures.
  std::uint32_t kdf_iterations = kKdfIterations;
  TimingModel timing;
};

enum class BootOutcome { Booted, BootLoop, RecoveryRequired };

std::string_view to_string(BootOutcome outcome);

struct BootReport {
  BootOutcome outcome = BootOutcome::Booted;
  std::uint32_t duration_s = 0;
  PhaseReport phases;
  std::vector<TraceEvent> trace;
  // Restore-tool style labels: 14 for a firmware region failure, 4013 for a
  // trace framing failure during boot.
  int error_code = 0;
  std::string detail;
};

enum class AttemptOutcome { Unlocked, Failed, Wiped };

std::string_view to_string(AttemptOutcome outcome);

struct AttemptResult {
  AttemptOutcome outcome = AttemptOutcome::Failed;
  std::uint32_t wait_s = 0;
  std::uint32_t fail_count = 0;

  friend bool operator==(const AttemptResult&, const AttemptResult&) = default;
};

// Device-derived secrets and fixed page contents.
GateTag gate_tag(const Uid& uid, std::uint32_t block);
std::vector<std::uint8_t> hidden_page_payload(const Uid& uid, std::uint32_t block, std::uint32_t n,
                                              std::uint32_t page_bytes);
std::vector<std::uint8_t> firmware_page(std::uint64_t firmware_seed, std::uint32_t index,
                                        std::uint32_t data_bytes);
bool firmware_page_intact(std::span<const std::uint8_t> data);

// The phone: UID-bound passcode check, NAND-persisted retry counter and a
// virtual clock. Holds a non-owning reference to the attached chip.
class Device {
 public:
  explicit Device(DeviceConfig config);

  const Uid& uid() const { return uid_; }
  const DeviceConfig& config() const { return config_; }
  // Layout for the attached chip's geometry.
  DeviceLayout layout() const;

  void attach(NandChip& chip);
  // Throws UnsafeRemoval while powered.
  void detach();
  bool attached() const { return chip_ != nullptr; }

  void provision(std::string_view passcode, std::uint64_t firmware_seed);
  BootReport boot();
  AttemptResult try_passcode(std::string_view passcode);
  void power_down();

  void wait(std::uint64_t seconds) { clock_ns_ += seconds * kNs; }
  std::uint64_t clock_ns() const { return clock_ns_; }
  std::uint64_t clock_s() const { return clock_ns_ / kNs; }
  // Seconds still to wait before the next attempt is accepted.
  std::uint64_t pending_delay_s() const;

  bool powered() const { return powered_; }
  bool unlocked() const { return unlocked_; }
  bool wiped() const { return powered_ && !verifier_; }
  std::uint32_t fail_count() const { return fail_count_; }
  // Reads the counter page straight from the attached chip's media.
  std::optional<std::uint32_t> stored_fail_count() const;
  const Ftl* ftl() const { return ftl_.get(); }

 private:
  static constexpr std::uint64_t kNs = 1'000'000'000;

  NandChip& chip() const;
  void persist_fail_count();
  std::vector<std::uint8_t> counter_page(std::uint32_t count) const;

  DeviceConfig config_;
  Uid uid_{};
  NandChip* chip_ = nullptr;
  std::unique_ptr<Ftl> ftl_;
  std::optional<Digest> verifier_;
  std::uint32_t fail_count_ = 0;
  std::uint64_t clock_ns_ = 0;
  std::uint64_t next_attempt_ns_ = 0;
  bool powered_ = false;
  bool unlocked_ = false;
};

}  // namespace mirrorbench
