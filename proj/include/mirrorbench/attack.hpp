#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mirrorbench/device.hpp"
#include "mirrorbench/mirror.hpp"

namespace mirrorbench {

struct AttackStrategy {
  enum class Kind { RestoreInPlace, ClonePool };
  static constexpr std::uint32_t kAttemptsPerCycle = 6;

  Kind kind = Kind::RestoreInPlace;
  std::uint32_t pool_size = 1;

  static AttackStrategy in_place() { return {}; }
  // Throws InvalidArgument for pools smaller than 2.
  static AttackStrategy pool(std::uint32_t size);

  friend bool operator==(const AttackStrategy&, const AttackStrategy&) = default;
};

// "inplace" or "pool:N".
std::string to_string(const AttackStrategy& strategy);
std::optional<AttackStrategy> parse_strategy(std::string_view text);

// Candidate passcodes in enumeration order. Digit spaces are generated on
// demand, zero padded and ascending.
class PasscodeSpace {
 public:
  static PasscodeSpace digits(std::uint32_t n);
  static PasscodeSpace list(std::vector<std::string> codes, std::string label = "list");

  std::uint64_t size() const;
  std::string at(std::uint64_t index) const;
  const std::string& label() const { return label_; }

 private:
  std::string label_;
  std::uint32_t digits_ = 0;
  std::vector<std::string> codes_;
  bool explicit_ = false;
};

// "Ndigit" with 1 <= N <= 9.
std::optional<PasscodeSpace> parse_space(std::string_view text);

std::uint64_t cycles_needed(std::uint64_t space_size);

// Model seconds to exhaust the space.
std::uint64_t estimate(const AttackStrategy& strategy, const PasscodeSpace& space, const TimingModel& timing = {});

struct WearBudget {
  bool feasible = true;
  std::uint64_t required = 0;
  std::uint64_t available = 0;
};

// Rewrites of each counter block (per clone for pools) against the limit.
WearBudget wear_budget(const PasscodeSpace& space, const AttackStrategy& strategy, std::uint32_t endurance_limit);

// What the attacker holds: a dump taken at fail_count 0 plus the phone.
struct AttackTemplate {
  BackupImage backup;
  DeviceConfig device;
};

// Provisions a fresh chip with `passcode` and dumps it.
AttackTemplate make_template(const NandGeometry& geometry, std::uint32_t endurance_limit,
                             const DeviceConfig& device, std::string_view passcode, std::uint64_t firmware_seed = 1);

struct CycleLog {
  std::uint64_t cycle = 0;
  std::uint32_t chip = 0;
  std::uint32_t attempts = 0;
  std::string first_code;
  std::string last_code;
  std::vector<std::uint32_t> waits;
  std::uint32_t boot_s = 0;
  std::uint32_t served_wait_s = 0;
  std::uint32_t power_down_s = 0;
  double restore_s = 0;
  std::vector<std::uint32_t> restored_blocks;
};

struct AttackReport {
  AttackStrategy strategy;
  std::string space;
  std::optional<std::string> found;
  std::uint64_t cycles = 0;
  std::uint64_t attempts = 0;
  std::uint64_t elapsed_s = 0;
  // Most erases any single block took during the attack.
  std::uint64_t erase_cycles = 0;
  std::uint64_t total_erases = 0;
  // Largest wait the device ever imposed, and the largest one actually served.
  std::uint32_t max_wait_s = 0;
  std::uint32_t max_served_wait_s = 0;
  std::vector<CycleLog> per_cycle_log;
};

// Carries the report up to the failing cycle.
class AttackError : public Error {
 public:
  AttackError(ErrorCode code, const std::string& what, AttackReport partial)
      : Error(code, what), partial_(std::move(partial)) {}
  const AttackReport& partial() const noexcept { return partial_; }

 private:
  AttackReport partial_;
};

struct AttackOptions {
  bool keep_log = true;
};

// Boot, up to six attempts, power down, restore; repeat until unlocked or
// the space runs out. Every used chip is restored before it is booted again,
// including after the final cycle.
AttackReport run_attack(const AttackTemplate& tmpl, const PasscodeSpace& space, const AttackStrategy& strategy,
                        const AttackOptions& options = {});

std::string report_to_json(const AttackReport& report, bool include_log);

}  // namespace mirrorbench
