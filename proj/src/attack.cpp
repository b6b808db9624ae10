#include "mirrorbench/attack.hpp"

#include <algorithm>
#include <charconv>
#include <future>
#include <memory>

#include <json.hpp>

namespace mirrorbench {
namespace {

std::uint64_t pow10(std::uint32_t n) {
  std::uint64_t v = 1;
  while (n--) v *= 10;
  return v;
}

std::uint64_t ceil_div(std::uint64_t a, std::uint64_t b) { return (a + b - 1) / b; }

struct PoolChip {
  std::unique_ptr<NandChip> chip;
  std::vector<std::uint32_t> baseline;
  std::future<RestoreStats> pending;
  std::size_t pending_log = 0;
  std::vector<std::uint32_t> pending_blocks;
};

}  // namespace

AttackStrategy AttackStrategy::pool(std::uint32_t size) {
  if (size < 2) throw Error(ErrorCode::InvalidArgument, "clone pool needs at least 2 chips");
  return {Kind::ClonePool, size};
}

std::string to_string(const AttackStrategy& strategy) {
  if (strategy.kind == AttackStrategy::Kind::RestoreInPlace) return "inplace";
  return "pool:" + std::to_string(strategy.pool_size);
}

std::optional<AttackStrategy> parse_strategy(std::string_view text) {
  if (text == "inplace") return AttackStrategy::in_place();
  constexpr std::string_view prefix = "pool:";
  if (!text.starts_with(prefix)) return std::nullopt;
  const auto digits = text.substr(prefix.size());
  std::uint32_t n = 0;
  const auto [end, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), n);
  if (ec != std::errc{} || end != digits.data() + digits.size() || n < 2) return std::nullopt;
  return AttackStrategy::pool(n);
}

PasscodeSpace PasscodeSpace::digits(std::uint32_t n) {
  if (n == 0 || n > 9) throw Error(ErrorCode::InvalidArgument, "digit spaces span 1 to 9 digits");
  PasscodeSpace s;
  s.label_ = std::to_string(n) + "digit";
  s.digits_ = n;
  return s;
}

PasscodeSpace PasscodeSpace::list(std::vector<std::string> codes, std::string label) {
  PasscodeSpace s;
  s.label_ = std::move(label);
  s.codes_ = std::move(codes);
  s.explicit_ = true;
  return s;
}

std::uint64_t PasscodeSpace::size() const { return explicit_ ? codes_.size() : pow10(digits_); }

std::string PasscodeSpace::at(std::uint64_t index) const {
  if (index >= size()) throw Error(ErrorCode::InvalidArgument, "passcode index out of range");
  if (explicit_) return codes_[index];
  std::string out(digits_, '0');
  for (std::uint32_t i = 0; i < digits_; ++i) {
    out[digits_ - 1 - i] = static_cast<char>('0' + index % 10);
    index /= 10;
  }
  return out;
}

std::optional<PasscodeSpace> parse_space(std::string_view text) {
  constexpr std::string_view suffix = "digit";
  if (!text.ends_with(suffix) || text.size() != suffix.size() + 1) return std::nullopt;
  const char d = text.front();
  if (d < '1' || d > '9') return std::nullopt;
  return PasscodeSpace::digits(static_cast<std::uint32_t>(d - '0'));
}

std::uint64_t cycles_needed(std::uint64_t space_size) {
  return ceil_div(space_size, AttackStrategy::kAttemptsPerCycle);
}

std::uint64_t estimate(const AttackStrategy& strategy, const PasscodeSpace& space, const TimingModel& timing) {
  const std::uint64_t per_cycle =
      strategy.kind == AttackStrategy::Kind::RestoreInPlace ? timing.cycle_serial_s : timing.cycle_pool_s;
  return cycles_needed(space.size()) * per_cycle;
}

WearBudget wear_budget(const PasscodeSpace& space, const AttackStrategy& strategy, std::uint32_t endurance_limit) {
  WearBudget w;
  const std::uint64_t per = std::uint64_t{AttackStrategy::kAttemptsPerCycle} *
                            (strategy.kind == AttackStrategy::Kind::ClonePool ? strategy.pool_size : 1);
  w.required = ceil_div(space.size(), per);
  w.available = endurance_limit;
  w.feasible = w.required <= w.available;
  return w;
}

AttackTemplate make_template(const NandGeometry& geometry, std::uint32_t endurance_limit, const DeviceConfig& device,
                             std::string_view passcode, std::uint64_t firmware_seed) {
  NandChip chip(geometry, endurance_limit, device.seed);
  Device phone(device);
  phone.attach(chip);
  phone.provision(passcode, firmware_seed);
  phone.detach();
  return {dump_chip(chip, "template").image, device};
}

AttackReport run_attack(const AttackTemplate& tmpl, const PasscodeSpace& space, const AttackStrategy& strategy,
                        const AttackOptions& options) {
  if (tmpl.device.wipe_after_10) {
    throw AttackError(ErrorCode::WipedUnexpectedly, "wipe-after-10 is enabled; mirroring cannot rewind a wipe", {});
  }
  if (strategy.kind == AttackStrategy::Kind::ClonePool && strategy.pool_size < 2) {
    throw Error(ErrorCode::InvalidArgument, "clone pool needs at least 2 chips");
  }
  const auto& timing = tmpl.device.timing;
  const auto& backup = tmpl.backup;
  const bool pooled = strategy.kind == AttackStrategy::Kind::ClonePool;

  std::vector<PoolChip> chips(pooled ? strategy.pool_size : 1);
  for (auto& pc : chips) {
    if (pooled) {
      NandChip blank(backup.geometry, backup.endurance_limit, backup.metadata.chip_seed);
      pc.chip = std::make_unique<NandChip>(clone(backup, std::move(blank), true));
    } else {
      pc.chip = std::make_unique<NandChip>(materialize(backup));
    }
    for (std::uint32_t b = 0; b < backup.geometry.block_count(); ++b) pc.baseline.push_back(pc.chip->erase_count(b));
  }
  const auto regions = default_scan_regions(*chips.front().chip);
  const auto reference = scan(backup, regions);

  AttackReport report;
  report.strategy = strategy;
  report.space = space.label();

  auto finish_wear = [&]() {
    report.erase_cycles = 0;
    report.total_erases = 0;
    for (const auto& pc : chips) {
      for (std::uint32_t b = 0; b < backup.geometry.block_count(); ++b) {
        const std::uint64_t delta = pc.chip->erase_count(b) - pc.baseline[b];
        report.erase_cycles = std::max(report.erase_cycles, delta);
        report.total_erases += delta;
      }
    }
  };
  auto join = [&](PoolChip& pc) {
    if (!pc.pending.valid()) return;
    try {
      const auto stats = pc.pending.get();
      if (options.keep_log) report.per_cycle_log[pc.pending_log].restore_s = stats.duration_s;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::BadBlock) throw;
      // Let the other restores settle before reporting.
      for (auto& other : chips) {
        if (other.pending.valid()) other.pending.wait();
      }
      finish_wear();
      throw AttackError(ErrorCode::EnduranceExceeded,
                        std::string("restore hit a worn-out block: ") + e.what(), report);
    }
  };

  Device phone(tmpl.device);
  std::uint64_t next = 0;
  while (!report.found && next < space.size()) {
    const std::uint32_t slot = static_cast<std::uint32_t>(report.cycles % chips.size());
    PoolChip& pc = chips[slot];
    join(pc);

    CycleLog log;
    log.cycle = report.cycles;
    log.chip = slot;
    phone.attach(*pc.chip);
    const auto boot = phone.boot();
    if (boot.outcome != BootOutcome::Booted) {
      phone.detach();
      finish_wear();
      throw AttackError(ErrorCode::NotBooted, "cycle " + std::to_string(report.cycles) + ": boot ended in " +
                                                  std::string(to_string(boot.outcome)) + " (" + boot.detail + ")",
                        report);
    }
    log.boot_s = boot.duration_s;

    for (std::uint32_t k = 0; k < AttackStrategy::kAttemptsPerCycle && next < space.size(); ++k) {
      if (const auto pending = phone.pending_delay_s(); pending > 0) {
        phone.wait(pending);
        log.served_wait_s += static_cast<std::uint32_t>(pending);
        report.max_served_wait_s = std::max(report.max_served_wait_s, static_cast<std::uint32_t>(pending));
      }
      const std::string code = space.at(next++);
      if (log.attempts == 0) log.first_code = code;
      log.last_code = code;
      ++log.attempts;
      ++report.attempts;
      const auto r = phone.try_passcode(code);
      log.waits.push_back(r.wait_s);
      report.max_wait_s = std::max(report.max_wait_s, r.wait_s);
      if (r.outcome == AttemptOutcome::Wiped) {
        phone.power_down();
        phone.detach();
        finish_wear();
        throw AttackError(ErrorCode::WipedUnexpectedly, "device wiped its keybag", report);
      }
      if (r.outcome == AttemptOutcome::Unlocked) {
        report.found = code;
        break;
      }
    }
    const auto before_down = phone.clock_ns();
    phone.power_down();
    log.power_down_s = static_cast<std::uint32_t>((phone.clock_ns() - before_down) / 1'000'000'000ull);
    phone.detach();
    ++report.cycles;

    const auto changes = diff(scan(*pc.chip, regions), reference);
    log.restored_blocks = changes.changed_blocks;
    if (options.keep_log) report.per_cycle_log.push_back(log);
    pc.pending_log = report.per_cycle_log.empty() ? 0 : report.per_cycle_log.size() - 1;
    NandChip* target = pc.chip.get();
    if (pooled) {
      pc.pending = std::async(std::launch::async, [target, &backup, changes, timing] {
        return restore(*target, backup, changes, timing);
      });
    } else {
      pc.pending = std::async(std::launch::deferred, [target, &backup, changes, timing] {
        return restore(*target, backup, changes, timing);
      });
      join(pc);
    }
  }
  for (auto& pc : chips) join(pc);

  report.elapsed_s = report.cycles * (pooled ? timing.cycle_pool_s : timing.cycle_serial_s);
  finish_wear();
  return report;
}

std::string report_to_json(const AttackReport& report, bool include_log) {
  nlohmann::ordered_json j;
  j["strategy"] = to_string(report.strategy);
  j["space"] = report.space;
  j["found"] = report.found ? nlohmann::ordered_json(*report.found) : nlohmann::ordered_json(nullptr);
  j["cycles"] = report.cycles;
  j["elapsed_s"] = report.elapsed_s;
  j["erase_cycles"] = report.erase_cycles;
  j["attempts"] = report.attempts;
  j["total_erases"] = report.total_erases;
  j["max_wait_s"] = report.max_wait_s;
  j["max_served_wait_s"] = report.max_served_wait_s;
  if (include_log) {
    auto& log = j["per_cycle_log"] = nlohmann::ordered_json::array();
    for (const auto& c : report.per_cycle_log) {
      log.push_back({{"cycle", c.cycle},
                     {"chip", c.chip},
                     {"attempts", c.attempts},
                     {"first_code", c.first_code},
                     {"last_code", c.last_code},
                     {"waits", c.waits},
                     {"boot_s", c.boot_s},
                     {"served_wait_s", c.served_wait_s},
                     {"power_down_s", c.power_down_s},
                     {"restore_s", c.restore_s},
                     {"restored_blocks", c.restored_blocks}});
    }
  }
  return j.dump(2);
}

}  // namespace mirrorbench
