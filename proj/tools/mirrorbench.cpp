// mirrorbench: command-line front end for the NAND mirroring simulator.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mirrorbench/attack.hpp"
#include "mirrorbench/bus.hpp"
#include "mirrorbench/device.hpp"
#include "mirrorbench/image_io.hpp"
#include "mirrorbench/mirror.hpp"
#include "mirrorbench/wear.hpp"

namespace mb = mirrorbench;
using ojson = nlohmann::ordered_json;

namespace {

struct Globals {
  std::string profile = "iphone5c-8g";
  std::uint64_t seed = 1;
  std::uint32_t endurance = mb::NandChip::kDefaultEndurance;
  std::uint32_t kdf_iterations = mb::kKdfIterations;
  bool wipe_after_10 = false;
};

mb::NandGeometry geometry_of(const Globals& g) {
  auto geo = mb::profile_by_name(g.profile);
  if (!geo) throw CLI::ValidationError("--profile", "unknown profile " + g.profile);
  return *geo;
}

mb::DeviceConfig device_of(const Globals& g) {
  mb::DeviceConfig cfg;
  cfg.seed = g.seed;
  cfg.wipe_after_10 = g.wipe_after_10;
  cfg.kdf_iterations = g.kdf_iterations;
  return cfg;
}

bool looks_like_image(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  char magic[8] = {};
  in.read(magic, sizeof magic);
  return in.gcount() == 8 && std::string_view(magic, 8) == mb::kImageMagic;
}

void emit(const ojson& j) { std::cout << j.dump(2) << "\n"; }
void emit_text(const std::string& s) { std::cout << s << "\n"; }

ojson boot_json(const mb::BootReport& r) {
  ojson j;
  j["outcome"] = mb::to_string(r.outcome);
  j["duration_s"] = r.duration_s;
  j["error_code"] = r.error_code;
  j["detail"] = r.detail;
  auto& phases = j["phases"] = ojson::array();
  for (const auto& p : r.phases) {
    phases.push_back({{"mode", mb::to_string(p.mode)},
                      {"start_ns", p.start_ns},
                      {"end_ns", p.end_ns},
                      {"commands", p.command_count},
                      {"events", p.event_count}});
  }
  j["trace_events"] = r.trace.size();
  return j;
}

std::optional<mb::BlockRange> parse_region(const std::string& s) {
  const auto colon = s.find(':');
  try {
    if (colon == std::string::npos) {
      const auto b = static_cast<std::uint32_t>(std::stoul(s, nullptr, 0));
      return mb::BlockRange{b, b};
    }
    return mb::BlockRange{static_cast<std::uint32_t>(std::stoul(s.substr(0, colon), nullptr, 0)),
                          static_cast<std::uint32_t>(std::stoul(s.substr(colon + 1), nullptr, 0))};
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

std::vector<mb::BlockRange> regions_for(const mb::NandChip& chip, const std::vector<std::string>& specs,
                                        std::uint32_t halo) {
  if (specs.empty()) return mb::default_scan_regions(chip, halo);
  std::vector<mb::BlockRange> out;
  for (const auto& s : specs) out.push_back(*parse_region(s));
  return out;
}

const auto kRegionCheck = CLI::Validator(
    [](std::string& s) -> std::string { return parse_region(s) ? "" : "expected BLOCK or FIRST:LAST"; }, "REGION");

const auto kSpaceCheck = CLI::Validator(
    [](std::string& s) -> std::string { return mb::parse_space(s) ? "" : "expected Ndigit with N in 1..9"; },
    "SPACE");

const auto kStrategyCheck = CLI::Validator(
    [](std::string& s) -> std::string { return mb::parse_strategy(s) ? "" : "expected inplace or pool:N (N >= 2)"; },
    "STRATEGY");

const auto kProfileCheck = CLI::Validator(
    [](std::string& s) -> std::string { return mb::profile_by_name(s) ? "" : "unknown profile " + s; }, "PROFILE");

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"NAND mirroring simulator"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--profile", g.profile, "geometry profile (iphone5c-8g, desk-small)")->check(kProfileCheck);
  app.add_option("--seed", g.seed, "device and chip seed; MIRRORBENCH_SEED overrides");
  app.add_option("--endurance", g.endurance, "erase cycles per block before it goes bad")->check(CLI::PositiveNumber);
  app.add_option("--kdf-iterations", g.kdf_iterations, "passcode KDF rounds")->check(CLI::PositiveNumber);
  app.add_flag("--wipe-after-10", g.wipe_after_10, "erase the keybag after ten failures");

  std::function<int()> action;

  // provision
  std::string passcode, out_path, in_path, backup_path;
  std::uint64_t firmware_seed = 1;
  auto* provision = app.add_subcommand("provision", "create a provisioned chip image");
  provision->add_option("--passcode", passcode)->required();
  provision->add_option("--out", out_path)->required();
  provision->add_option("--firmware-seed", firmware_seed);
  provision->callback([&] {
    action = [&] {
      mb::NandChip chip(geometry_of(g), g.endurance, g.seed);
      mb::Device phone(device_of(g));
      phone.attach(chip);
      phone.provision(passcode, firmware_seed);
      phone.detach();
      auto image = mb::dump_chip(chip, "provisioned").image;
      mb::save_image(out_path, image);
      std::cerr << "provisioned " << g.profile << " chip -> " << out_path << "\n";
      emit({{"image", out_path}, {"profile", g.profile}, {"blocks", chip.geometry().block_count()},
            {"total_bytes", chip.geometry().total_bytes()}});
      return 0;
    };
  });

  // dump
  auto* dump = app.add_subcommand("dump", "copy a chip image through the programmer model");
  dump->add_option("--in", in_path)->required()->check(CLI::ExistingFile);
  dump->add_option("--out", out_path)->required();
  dump->callback([&] {
    action = [&] {
      auto chip = mb::materialize(mb::load_image(in_path));
      auto result = mb::dump_chip(chip, "backup");
      mb::save_image(out_path, result.image);
      std::cerr << "dumped " << in_path << " -> " << out_path << "\n";
      emit({{"out", out_path},
            {"duration_s", result.duration_s},
            {"bytes", chip.geometry().total_bytes()},
            {"reported_full_copy", std::string(mb::kReportedFullCopy)}});
      return 0;
    };
  });

  // scan
  std::vector<std::string> region_specs;
  std::uint32_t halo = mb::kDefaultScanHalo;
  auto* scan = app.add_subcommand("scan", "checksum the likely-changed blocks of an image");
  scan->add_option("--in", in_path)->required()->check(CLI::ExistingFile);
  scan->add_option("--out", out_path);
  scan->add_option("--region", region_specs, "BLOCK or FIRST:LAST; default is the counter blocks +/- halo")
      ->check(kRegionCheck);
  scan->add_option("--halo", halo);
  scan->callback([&] {
    action = [&] {
      const auto chip = mb::materialize(mb::load_image(in_path));
      const auto regions = regions_for(chip, region_specs, halo);
      const auto text = mb::manifest_to_json(mb::scan(chip, regions));
      if (!out_path.empty()) mb::write_text_file(out_path, text);
      emit_text(text);
      return 0;
    };
  });

  // diff
  std::string current_path;
  auto* diffc = app.add_subcommand("diff", "compare a current image or manifest against a backup");
  diffc->add_option("current", current_path)->required()->check(CLI::ExistingFile);
  diffc->add_option("backup", backup_path)->required()->check(CLI::ExistingFile);
  diffc->add_option("--out", out_path);
  diffc->add_option("--halo", halo);
  diffc->callback([&] {
    action = [&] {
      auto manifest_of = [&](const std::string& path, const std::optional<std::vector<mb::BlockRange>>& regions) {
        if (!looks_like_image(path)) return mb::manifest_from_json(mb::read_text_file(path));
        const auto chip = mb::materialize(mb::load_image(path));
        return mb::scan(chip, regions ? *regions : mb::default_scan_regions(chip, halo));
      };
      const auto backup = manifest_of(backup_path, std::nullopt);
      const auto current = manifest_of(current_path, backup.regions);
      const auto text = mb::diff_to_json(mb::diff(current, backup));
      if (!out_path.empty()) mb::write_text_file(out_path, text);
      emit_text(text);
      return 0;
    };
  });

  // restore
  auto* restorec = app.add_subcommand("restore", "erase changed blocks and write them back from a backup");
  restorec->add_option("--in", in_path)->required()->check(CLI::ExistingFile);
  restorec->add_option("--backup", backup_path)->required()->check(CLI::ExistingFile);
  restorec->add_option("--out", out_path)->required();
  restorec->add_option("--halo", halo);
  restorec->callback([&] {
    action = [&] {
      const auto backup = mb::load_image(backup_path);
      auto chip = mb::materialize(mb::load_image(in_path));
      const auto regions = mb::default_scan_regions(mb::materialize(backup), halo);
      const auto report = mb::diff(mb::scan(chip, regions), mb::scan(backup, regions));
      const auto stats = mb::restore(chip, backup, report);
      mb::save_image(out_path, mb::dump_chip(chip, "restored").image);
      std::cerr << "restored " << report.changed_blocks.size() << " block(s) -> " << out_path << "\n";
      emit({{"out", out_path},
            {"changed_blocks", report.changed_blocks},
            {"blocks_erased", stats.blocks_erased},
            {"pages_programmed", stats.pages_programmed},
            {"duration_s", stats.duration_s}});
      return 0;
    };
  });

  // clone
  bool no_hidden = false;
  auto* clonec = app.add_subcommand("clone", "program a blank chip from a backup");
  clonec->add_option("--backup", backup_path)->required()->check(CLI::ExistingFile);
  clonec->add_option("--out", out_path)->required();
  clonec->add_flag("--no-hidden", no_hidden, "leave out the hidden-region gate table");
  clonec->callback([&] {
    action = [&] {
      const auto backup = mb::load_image(backup_path);
      mb::NandChip blank(backup.geometry, g.endurance, g.seed);
      auto chip = mb::clone(backup, std::move(blank), !no_hidden);
      mb::save_image(out_path, mb::dump_chip(chip, no_hidden ? "clone-no-hidden" : "clone").image);
      std::cerr << "cloned " << backup_path << " -> " << out_path << (no_hidden ? " without hidden pages" : "") << "\n";
      emit({{"out", out_path}, {"include_hidden", !no_hidden}, {"hidden_regions", chip.hidden_regions().size()}});
      return 0;
    };
  });

  // boot
  std::string trace_path;
  auto* bootc = app.add_subcommand("boot", "boot the phone on an image");
  bootc->add_option("--in", in_path)->required()->check(CLI::ExistingFile);
  bootc->add_option("--trace", trace_path, "write the bus trace as JSON Lines");
  bootc->callback([&] {
    action = [&] {
      auto chip = mb::materialize(mb::load_image(in_path));
      mb::Device phone(device_of(g));
      phone.attach(chip);
      const auto report = phone.boot();
      if (!trace_path.empty()) {
        std::ofstream out(trace_path, std::ios::binary);
        if (!out) throw mb::Error(mb::ErrorCode::IoError, "cannot open " + trace_path);
        mb::write_trace_jsonl(out, report.trace);
      }
      std::cerr << "boot: " << mb::to_string(report.outcome) << "\n";
      auto j = boot_json(report);
      if (phone.powered()) j["fail_count"] = phone.fail_count();
      emit(j);
      return 0;
    };
  });

  // try
  std::vector<std::string> attempts;
  auto* tryc = app.add_subcommand("try", "boot and enter passcodes, serving any delay");
  tryc->add_option("--in", in_path)->required()->check(CLI::ExistingFile);
  tryc->add_option("--passcode", attempts)->required();
  tryc->add_option("--out", out_path, "save the chip afterwards");
  tryc->callback([&] {
    action = [&] {
      auto chip = mb::materialize(mb::load_image(in_path));
      mb::Device phone(device_of(g));
      phone.attach(chip);
      const auto boot = phone.boot();
      ojson j;
      j["boot"] = mb::to_string(boot.outcome);
      auto& arr = j["attempts"] = ojson::array();
      if (boot.outcome == mb::BootOutcome::Booted) {
        for (const auto& code : attempts) {
          const auto waited = phone.pending_delay_s();
          phone.wait(waited);
          const auto r = phone.try_passcode(code);
          arr.push_back({{"passcode", code},
                         {"served_wait_s", waited},
                         {"outcome", mb::to_string(r.outcome)},
                         {"wait_s", r.wait_s},
                         {"fail_count", r.fail_count}});
          if (r.outcome == mb::AttemptOutcome::Unlocked) break;
        }
        phone.power_down();
      }
      phone.detach();
      j["clock_s"] = phone.clock_s();
      if (!out_path.empty()) mb::save_image(out_path, mb::dump_chip(chip, "after-attempts").image);
      emit(j);
      return 0;
    };
  });

  // attack
  std::string space_text = "4digit", strategy_text = "inplace", planted;
  bool with_log = false, estimate_only = false;
  auto* attackc = app.add_subcommand("attack", "brute-force a planted passcode by mirroring");
  attackc->add_option("--space", space_text)->check(kSpaceCheck);
  attackc->add_option("--strategy", strategy_text)->check(kStrategyCheck);
  attackc->add_option("--planted", planted, "passcode provisioned on the target");
  attackc->add_flag("--log", with_log, "include the per-cycle log");
  attackc->add_flag("--estimate", estimate_only, "print the model estimate and wear budget only");
  attackc->callback([&] {
    action = [&] {
      const auto space = *mb::parse_space(space_text);
      const auto strategy = *mb::parse_strategy(strategy_text);
      if (estimate_only) {
        const auto budget = mb::wear_budget(space, strategy, g.endurance);
        emit({{"strategy", mb::to_string(strategy)},
              {"space", space.label()},
              {"estimate_s", mb::estimate(strategy, space)},
              {"wear_required", budget.required},
              {"wear_available", budget.available},
              {"wear_feasible", budget.feasible}});
        return 0;
      }
      if (planted.empty()) throw CLI::RequiredError("--planted");
      const auto tmpl = mb::make_template(geometry_of(g), g.endurance, device_of(g), planted);
      try {
        const auto report = mb::run_attack(tmpl, space, strategy, {with_log});
        std::cerr << "attack: " << (report.found ? "found " + *report.found : std::string("not found")) << " after "
                  << report.cycles << " cycle(s), " << report.elapsed_s << " s\n";
        emit_text(mb::report_to_json(report, with_log));
        return 0;
      } catch (const mb::AttackError& e) {
        emit_text(mb::report_to_json(e.partial(), with_log));
        throw;
      }
    };
  });

  // decode-trace
  std::string trace_file;
  auto* decodec = app.add_subcommand("decode-trace", "decode a JSON Lines bus trace");
  decodec->add_option("file", trace_file)->required()->check(CLI::ExistingFile);
  decodec->callback([&] {
    action = [&] {
      std::ifstream in(trace_file, std::ios::binary);
      const auto events = mb::read_trace_jsonl(in);
      const auto decoded = mb::decode(events);
      ojson j;
      auto& cmds = j["commands"] = ojson::array();
      for (std::size_t i = 0; i < decoded.commands.size(); ++i) {
        const auto& c = decoded.commands[i];
        cmds.push_back({{"kind", mb::to_string(c.kind)},
                        {"row", mb::to_hex_row(c.row)},
                        {"mode", mb::to_string(c.mode)},
                        {"data_bytes", c.data.size()},
                        {"first_event", decoded.spans[i].first_event},
                        {"last_event", decoded.spans[i].last_event}});
      }
      auto& an = j["anomalies"] = ojson::array();
      for (const auto& a : decoded.anomalies) {
        an.push_back({{"kind", mb::to_string(a.kind)},
                      {"event_offset", a.event_offset},
                      {"command_index", a.command_index},
                      {"rate_bps", a.rate_bps},
                      {"envelope_rate_bps", a.envelope_rate_bps},
                      {"setup_ns", a.setup_ns}});
      }
      auto& ph = j["phases"] = ojson::array();
      for (const auto& p : mb::detect_phases(events)) {
        ph.push_back({{"mode", mb::to_string(p.mode)}, {"start_ns", p.start_ns}, {"end_ns", p.end_ns},
                      {"commands", p.command_count}, {"events", p.event_count}});
      }
      emit(j);
      return 0;
    };
  });

  // wear-report
  std::string image_path, plan_space, plan_strategy = "inplace";
  double ratio = mb::kDefaultHotspotRatio;
  auto* wearc = app.add_subcommand("wear-report", "erase histogram, hot blocks and endurance risk");
  wearc->add_option("image", image_path)->required()->check(CLI::ExistingFile);
  wearc->add_option("--ratio", ratio, "hotspot threshold as a multiple of the median")
      ->check(CLI::Range(1.0, 1e9) & CLI::Validator([](std::string& s) -> std::string {
                return std::stod(s) > 1.0 ? "" : "ratio must exceed 1";
              }, "RATIO"));
  wearc->add_option("--plan-space", plan_space)->check(kSpaceCheck);
  wearc->add_option("--plan-strategy", plan_strategy)->check(kStrategyCheck);
  wearc->callback([&] {
    action = [&] {
      const auto image = mb::load_image(image_path);
      const auto hot = mb::detect_hotspots(image, ratio);
      std::optional<mb::EnduranceReport> risk;
      if (!plan_space.empty()) {
        risk = mb::endurance_report(image, *mb::parse_strategy(plan_strategy), *mb::parse_space(plan_space));
      }
      std::cerr << "wear: " << hot.hotspots.size() << " hotspot run(s)\n";
      emit_text(mb::wear_report_json(image, hot, risk));
      return 0;
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  if (const char* env = std::getenv("MIRRORBENCH_SEED")) {
    try {
      std::size_t used = 0;
      g.seed = std::stoull(env, &used, 0);
      if (env[used] != '\0') throw std::invalid_argument(env);
    } catch (const std::exception&) {
      std::cerr << "MIRRORBENCH_SEED must be an unsigned integer\n";
      return 2;
    }
  }
  try {
    return action ? action() : 2;
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  } catch (const mb::Error& e) {
    std::cerr << "error: " << mb::to_string(e.code()) << ": " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
