#include <gtest/gtest.h>

#include <json.hpp>

#include "mirrorbench/attack.hpp"
#include "test_support.hpp"

using namespace mirrorbench;

namespace {

DeviceConfig fast() { return mbtest::device_config(1, mbtest::kFastKdf); }

AttackTemplate small_template(std::string_view passcode, std::uint32_t endurance = NandChip::kDefaultEndurance) {
  return make_template(desk_small(), endurance, fast(), passcode);
}

// Counter-region physical blocks on the template backup.
std::vector<std::uint32_t> counter_blocks(const BackupImage& img) {
  const auto chip = materialize(img);
  const auto map = rebuild_map(chip, DeviceLayout::for_geometry(img.geometry).hidden_blocks).map;
  return {map.at(0x20).addr.block()};
}

}  // namespace

// Oracle: tests/oracles/compute_oracles.py
TEST(Estimate, MatchesArithmetic) {
  const auto d4 = PasscodeSpace::digits(4);
  const auto d6 = PasscodeSpace::digits(6);
  EXPECT_EQ(cycles_needed(10000), 1667u);
  EXPECT_EQ(cycles_needed(0), 0u);
  EXPECT_EQ(cycles_needed(6), 1u);
  EXPECT_EQ(cycles_needed(7), 2u);
  EXPECT_EQ(estimate(AttackStrategy::in_place(), d4), 150030u);
  EXPECT_EQ(estimate(AttackStrategy::pool(2), d4), 75015u);
  EXPECT_EQ(estimate(AttackStrategy::pool(2), d6), 7500015u);
  EXPECT_EQ(estimate(AttackStrategy::pool(5), d6), 7500015u);
}

TEST(WearBudget, HeadlineFigures) {
  const auto a = wear_budget(PasscodeSpace::digits(4), AttackStrategy::in_place(), 10000);
  EXPECT_TRUE(a.feasible);
  EXPECT_EQ(a.required, 1667u);
  EXPECT_EQ(a.available, 10000u);
  const auto b = wear_budget(PasscodeSpace::digits(6), AttackStrategy::in_place(), 10000);
  EXPECT_FALSE(b.feasible);
  EXPECT_EQ(b.required, 166667u);
  const auto c = wear_budget(PasscodeSpace::list({}), AttackStrategy::in_place(), 10000);
  EXPECT_TRUE(c.feasible);
  EXPECT_EQ(c.required, 0u);
  // Spread across clones.
  EXPECT_EQ(wear_budget(PasscodeSpace::digits(6), AttackStrategy::pool(20), 10000).required, 8334u);
}

TEST(Parse, StrategyAndSpace) {
  EXPECT_EQ(parse_strategy("inplace"), AttackStrategy::in_place());
  EXPECT_EQ(parse_strategy("pool:3"), AttackStrategy::pool(3));
  EXPECT_FALSE(parse_strategy("pool:1"));
  EXPECT_FALSE(parse_strategy("pool:"));
  EXPECT_FALSE(parse_strategy("pool:2x"));
  EXPECT_FALSE(parse_strategy("serial"));
  EXPECT_EQ(to_string(AttackStrategy::pool(4)), "pool:4");
  EXPECT_THROW(AttackStrategy::pool(1), Error);

  const auto s = parse_space("2digit");
  ASSERT_TRUE(s);
  EXPECT_EQ(s->size(), 100u);
  EXPECT_EQ(s->at(0), "00");
  EXPECT_EQ(s->at(73), "73");
  EXPECT_EQ(s->label(), "2digit");
  EXPECT_FALSE(parse_space("0digit"));
  EXPECT_FALSE(parse_space("10digit"));
  EXPECT_FALSE(parse_space("4"));
  EXPECT_EQ(PasscodeSpace::digits(9).size(), 1000000000u);
  EXPECT_EQ(PasscodeSpace::digits(6).at(42), "000042");
}

TEST(RunAttack, PlantedCodeFoundOnSchedule) {
  const auto tmpl = small_template("73");
  const auto r = run_attack(tmpl, PasscodeSpace::digits(2), AttackStrategy::in_place());
  ASSERT_TRUE(r.found);
  EXPECT_EQ(*r.found, "73");
  EXPECT_EQ(r.cycles, 13u);
  EXPECT_EQ(r.attempts, 74u);
  EXPECT_EQ(r.elapsed_s, 1170u);
  EXPECT_LE(r.elapsed_s, estimate(AttackStrategy::in_place(), PasscodeSpace::digits(2)));
  // Each cycle: 0,0,0,0,5 then the 6th failure's 60 s is never served.
  EXPECT_EQ(r.max_served_wait_s, 5u);
  EXPECT_EQ(r.max_wait_s, 60u);
  ASSERT_EQ(r.per_cycle_log.size(), 13u);
  EXPECT_EQ(r.per_cycle_log[0].waits, (std::vector<std::uint32_t>{0, 0, 0, 0, 5, 60}));
  EXPECT_EQ(r.per_cycle_log[0].first_code, "00");
  EXPECT_EQ(r.per_cycle_log[12].first_code, "72");
  EXPECT_EQ(r.per_cycle_log[12].last_code, "73");
  for (const auto& c : r.per_cycle_log) {
    EXPECT_EQ(c.boot_s, 35u);
    EXPECT_EQ(c.power_down_s, 10u);
    EXPECT_GE(c.restore_s, 30.0);
    EXPECT_LE(c.restore_s, 60.0);
    EXPECT_FALSE(c.restored_blocks.empty());
  }
  // One rewrite of the counter block per cycle.
  EXPECT_EQ(r.erase_cycles, r.cycles);
}

TEST(RunAttack, AbsentCodeExhaustsSpace) {
  const auto tmpl = small_template("5555");
  const auto space = PasscodeSpace::digits(2);
  const auto r = run_attack(tmpl, space, AttackStrategy::in_place(), {false});
  EXPECT_FALSE(r.found);
  EXPECT_EQ(r.cycles, 17u);
  EXPECT_EQ(r.attempts, 100u);
  EXPECT_EQ(r.elapsed_s, estimate(AttackStrategy::in_place(), space));
  EXPECT_TRUE(r.per_cycle_log.empty());
  EXPECT_EQ(r.erase_cycles, 17u);
  EXPECT_LE(r.erase_cycles, r.cycles);
}

TEST(RunAttack, ListSpaceInGivenOrder) {
  const auto tmpl = small_template("2580");
  const auto space = PasscodeSpace::list({"1234", "0000", "1111", "2580", "9999"}, "common");
  const auto r = run_attack(tmpl, space, AttackStrategy::in_place());
  EXPECT_EQ(r.found, "2580");
  EXPECT_EQ(r.attempts, 4u);
  EXPECT_EQ(r.cycles, 1u);
  EXPECT_EQ(r.space, "common");
}

TEST(RunAttack, WornCounterBlockStopsAttack) {
  const auto tmpl = small_template("99", 5);
  try {
    run_attack(tmpl, PasscodeSpace::digits(2), AttackStrategy::in_place());
    FAIL() << "attack finished";
  } catch (const AttackError& e) {
    EXPECT_EQ(e.code(), ErrorCode::EnduranceExceeded);
    EXPECT_FALSE(e.partial().found);
    EXPECT_LT(e.partial().cycles, 17u);
    EXPECT_GE(e.partial().cycles, 5u);
  }
}

TEST(RunAttack, WipeFlagRejected) {
  auto cfg = fast();
  cfg.wipe_after_10 = true;
  const auto tmpl = make_template(desk_small(), NandChip::kDefaultEndurance, cfg, "11");
  try {
    run_attack(tmpl, PasscodeSpace::digits(2), AttackStrategy::in_place());
    FAIL();
  } catch (const AttackError& e) {
    EXPECT_EQ(e.code(), ErrorCode::WipedUnexpectedly);
  }
}

TEST(RunAttack, ClonePoolHalvesTimeAndSpreadsWear) {
  const auto tmpl = small_template("99");
  const auto space = PasscodeSpace::digits(2);
  const auto r = run_attack(tmpl, space, AttackStrategy::pool(2));
  EXPECT_EQ(r.found, "99");
  EXPECT_EQ(r.cycles, 17u);
  EXPECT_EQ(r.elapsed_s, 17u * 45);
  EXPECT_EQ(r.elapsed_s, estimate(AttackStrategy::pool(2), space));
  // Chips alternate; the busier one ran 9 cycles.
  EXPECT_EQ(r.erase_cycles, 9u);
  EXPECT_EQ(r.per_cycle_log[0].chip, 0u);
  EXPECT_EQ(r.per_cycle_log[1].chip, 1u);
  EXPECT_EQ(r.per_cycle_log[2].chip, 0u);
  EXPECT_EQ(r.max_served_wait_s, 5u);
}

TEST(RunAttack, PoolIsDeterministic) {
  const auto tmpl = small_template("47");
  const auto a = run_attack(tmpl, PasscodeSpace::digits(2), AttackStrategy::pool(3));
  const auto b = run_attack(tmpl, PasscodeSpace::digits(2), AttackStrategy::pool(3));
  EXPECT_EQ(report_to_json(a, true), report_to_json(b, true));
}

TEST(RunAttack, TemplateLeavesCounterInScanRegion) {
  const auto tmpl = small_template("00");
  const auto blocks = counter_blocks(tmpl.backup);
  const auto regions = default_scan_regions(materialize(tmpl.backup));
  for (auto b : blocks) EXPECT_TRUE(b >= regions[0].first && b <= regions[0].last);
}

TEST(Report, JsonShape) {
  const auto r = run_attack(small_template("3"), PasscodeSpace::digits(1), AttackStrategy::in_place());
  const auto j = nlohmann::json::parse(report_to_json(r, false));
  EXPECT_EQ(j["strategy"], "inplace");
  EXPECT_EQ(j["space"], "1digit");
  EXPECT_EQ(j["found"], "3");
  EXPECT_EQ(j["cycles"], 1);
  EXPECT_EQ(j["elapsed_s"], 90);
  EXPECT_FALSE(j.contains("per_cycle_log"));
  EXPECT_TRUE(nlohmann::json::parse(report_to_json(r, true)).contains("per_cycle_log"));
}

// Every 2-digit code is found, in the cycle the enumeration predicts.
TEST(RunAttackProperty, ExhaustiveTwoDigit) {
  const auto space = PasscodeSpace::digits(2);
  for (int code = 0; code < 100; ++code) {
    const auto planted = space.at(code);
    const auto r = run_attack(small_template(planted), space, AttackStrategy::in_place(), {false});
    ASSERT_EQ(r.found, planted);
    EXPECT_EQ(r.cycles, code / 6 + 1u) << planted;
    EXPECT_EQ(r.attempts, code + 1u);
    EXPECT_EQ(r.elapsed_s, r.cycles * 90);
    EXPECT_LE(r.max_served_wait_s, 5u);
  }
}
