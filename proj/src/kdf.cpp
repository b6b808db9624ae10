#include <openssl/evp.h>

#include <vector>

#include "mirrorbench/device.hpp"

namespace mirrorbench {

Digest sha256(std::span<const std::uint8_t> data) {
  Digest out{};
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), out.data(), &len, EVP_sha256(), nullptr) != 1 || len != out.size()) {
    throw std::runtime_error("EVP_Digest(sha256) failed");
  }
  return out;
}

Digest kdf(const Uid& uid, std::string_view passcode, std::uint32_t iterations) {
  Digest state{};
  std::vector<std::uint8_t> buf;
  buf.reserve(state.size() + uid.size() + passcode.size() + 4);
  for (std::uint32_t i = 0; i < iterations; ++i) {
    buf.assign(state.begin(), state.end());
    buf.insert(buf.end(), uid.begin(), uid.end());
    buf.insert(buf.end(), passcode.begin(), passcode.end());
    for (int b = 0; b < 4; ++b) buf.push_back(static_cast<std::uint8_t>(i >> (8 * b)));
    state = sha256(buf);
  }
  return state;
}

std::uint32_t delay_for(std::uint32_t fail_count) {
  switch (fail_count) {
    case 0: case 1: case 2: case 3: case 4: return 0;
    case 5: return 5;
    case 6: return 60;
    case 7: return 300;
    case 8: return 900;
    default: return 3600;
  }
}

}  // namespace mirrorbench
