#pragma once

#include <cstdint>
#include <span>

namespace mirrorbench {

// CRC-16/CCITT-FALSE: poly 0x1021, init 0xFFFF, no reflection, no xor-out.
std::uint16_t crc16(std::span<const std::uint8_t> data, std::uint16_t crc = 0xFFFF);

inline std::uint16_t page_checksum(std::span<const std::uint8_t> payload) { return crc16(payload); }

}  // namespace mirrorbench
