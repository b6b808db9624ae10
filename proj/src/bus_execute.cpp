#include <string>

#include "mirrorbench/bus.hpp"

namespace mirrorbench {

BusResponse execute(NandChip& chip, const BusCommand& cmd) {
  validate(cmd);
  BusResponse resp;
  switch (cmd.kind) {
    case CommandKind::Reset:
      chip.lock_hidden_views();
      break;
    case CommandKind::ReadId: {
      const auto id = chip.id_bytes();
      resp.data.assign(id.begin(), id.end());
      break;
    }
    case CommandKind::ReadPage:
    case CommandKind::HiddenRead: {
      auto page = chip.read_page(cmd.row);
      if (page.soft_error) {
        throw Error(*page.soft_error, "hidden view of block " + std::to_string(cmd.row.block()) + " is locked");
      }
      resp.data = std::move(page.payload);
      resp.status = page.status;
      break;
    }
    case CommandKind::ProgramPage:
      chip.program_page(cmd.row, cmd.data, kStatusProgrammed);
      break;
    case CommandKind::EraseBlock:
      chip.erase_block(cmd.row.block());
      break;
    case CommandKind::SetFeature:
      break;
    case CommandKind::HiddenUnlock:
      if (!chip.unlock_hidden(cmd.row.block(), *cmd.smuggled)) {
        throw Error(ErrorCode::GateRejected, "gate tag rejected for block " + std::to_string(cmd.row.block()));
      }
      break;
  }
  return resp;
}

}  // namespace mirrorbench
