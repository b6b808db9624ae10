#include <cstdio>
#include <istream>
#include <ostream>
#include <string>

#include "json.hpp"
#include "mirrorbench/bus.hpp"

namespace mirrorbench {

void write_trace_jsonl(std::ostream& out, std::span<const TraceEvent> events) {
  char value[8];
  for (const auto& e : events) {
    std::snprintf(value, sizeof value, "0x%02X", e.value);
    out << "{\"t_ns\": " << e.t_ns << ", \"kind\": \"" << to_string(e.kind) << "\", \"value\": \"" << value
        << "\", \"mode\": \"" << to_string(e.mode) << "\", \"dummy_bit7\": " << (e.dummy_bit7 ? "true" : "false")
        << "}\n";
  }
}

std::vector<TraceEvent> read_trace_jsonl(std::istream& in) {
  std::vector<TraceEvent> events;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto bad = [&](const std::string& why) -> FormatError {
      return FormatError(ErrorCode::UnparseableTrace, events.size(), "line " + std::to_string(line_no) + ": " + why);
    };
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
      TraceEvent e;
      e.t_ns = j.at("t_ns").get<std::uint64_t>();
      const auto kind = parse_cycle_kind(j.at("kind").get<std::string>());
      const auto mode = parse_bus_mode(j.at("mode").get<std::string>());
      if (!kind) throw bad("unknown kind");
      if (!mode) throw bad("unknown mode");
      e.kind = *kind;
      e.mode = *mode;
      const auto text = j.at("value").get<std::string>();
      if (text.size() != 4 || text[0] != '0' || (text[1] != 'x' && text[1] != 'X')) throw bad("value must be 0xHH");
      std::size_t used = 0;
      const unsigned long v = std::stoul(text.substr(2), &used, 16);
      if (used != 2) throw bad("value must be 0xHH");
      e.value = static_cast<std::uint8_t>(v);
      e.dummy_bit7 = j.at("dummy_bit7").get<bool>();
      events.push_back(e);
    } catch (const nlohmann::json::exception& ex) {
      throw bad(ex.what());
    } catch (const std::invalid_argument&) {
      throw bad("value must be 0xHH");
    }
  }
  return events;
}

}  // namespace mirrorbench
