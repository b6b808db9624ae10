#include "mirrorbench/image_io.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include <json.hpp>

namespace mirrorbench {
namespace {

using ojson = nlohmann::ordered_json;

constexpr std::uint32_t kMaxHeaderBytes = 64u << 20;

std::string hex_bytes(std::span<const std::uint8_t> bytes) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  for (std::uint8_t b : bytes) {
    out.push_back(kDigits[b >> 4]);
    out.push_back(kDigits[b & 0x0F]);
  }
  return out;
}

int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

GateTag parse_tag(const std::string& s) {
  GateTag tag{};
  if (s.size() != tag.size() * 2) throw std::invalid_argument("gate_tag must be 16 hex digits");
  for (std::size_t i = 0; i < tag.size(); ++i) {
    const int hi = hex_value(s[2 * i]);
    const int lo = hex_value(s[2 * i + 1]);
    if (hi < 0 || lo < 0) throw std::invalid_argument("gate_tag is not hex");
    tag[i] = static_cast<std::uint8_t>(hi << 4 | lo);
  }
  return tag;
}

std::string crc_hex(std::uint16_t crc) {
  char buf[8];
  std::snprintf(buf, sizeof buf, "0x%04X", crc);
  return buf;
}

std::uint16_t parse_crc(const std::string& s) {
  if (s.size() != 6 || s[0] != '0' || (s[1] != 'x' && s[1] != 'X')) throw std::invalid_argument("bad checksum " + s);
  std::uint16_t v = 0;
  for (std::size_t i = 2; i < s.size(); ++i) {
    const int d = hex_value(s[i]);
    if (d < 0) throw std::invalid_argument("bad checksum " + s);
    v = static_cast<std::uint16_t>(v << 4 | d);
  }
  return v;
}

ojson header_json(const BackupImage& image) {
  const auto& g = image.geometry;
  ojson h;
  h["geometry"] = {{"planes", g.planes},
                   {"blocks_per_plane", g.blocks_per_plane},
                   {"pages_per_block", g.pages_per_block},
                   {"sectors_per_page", g.sectors_per_page},
                   {"sector_data_bytes", g.sector_data_bytes},
                   {"sector_index_bytes", g.sector_index_bytes}};
  h["endurance_limit"] = image.endurance_limit;
  h["erase_counts"] = image.erase_counts;
  h["bad_blocks"] = image.bad_blocks;
  ojson hidden = ojson::array();
  for (const auto& [block, tag] : image.hidden_regions) {
    hidden.push_back({{"block", block}, {"gate_tag", hex_bytes(tag)}});
  }
  h["hidden_regions"] = std::move(hidden);
  h["metadata"] = {{"label", image.metadata.label},
                   {"created_ns", image.metadata.created_ns},
                   {"chip_seed", image.metadata.chip_seed},
                   {"note", image.metadata.note}};
  return h;
}

// Fills everything but pages. Throws std::exception subclasses on bad input.
BackupImage image_from_header(const ojson& h) {
  BackupImage img;
  const auto& gj = h.at("geometry");
  auto& g = img.geometry;
  g.planes = gj.at("planes").get<std::uint32_t>();
  g.blocks_per_plane = gj.at("blocks_per_plane").get<std::uint32_t>();
  g.pages_per_block = gj.at("pages_per_block").get<std::uint32_t>();
  g.sectors_per_page = gj.at("sectors_per_page").get<std::uint32_t>();
  g.sector_data_bytes = gj.at("sector_data_bytes").get<std::uint32_t>();
  g.sector_index_bytes = gj.at("sector_index_bytes").get<std::uint32_t>();
  g.validate();
  img.endurance_limit = h.at("endurance_limit").get<std::uint32_t>();
  img.erase_counts = h.at("erase_counts").get<std::vector<std::uint32_t>>();
  if (img.erase_counts.size() != g.block_count()) throw std::invalid_argument("erase_counts length differs from block count");
  img.bad_blocks = h.at("bad_blocks").get<std::vector<std::uint32_t>>();
  if (!std::is_sorted(img.bad_blocks.begin(), img.bad_blocks.end()) ||
      std::adjacent_find(img.bad_blocks.begin(), img.bad_blocks.end()) != img.bad_blocks.end() ||
      (!img.bad_blocks.empty() && img.bad_blocks.back() >= g.block_count())) {
    throw std::invalid_argument("bad_blocks must be ascending block indices");
  }
  for (const auto& r : h.at("hidden_regions")) {
    const auto block = r.at("block").get<std::uint32_t>();
    if (block >= g.block_count()) throw std::invalid_argument("hidden region outside the array");
    img.hidden_regions[block] = parse_tag(r.at("gate_tag").get<std::string>());
  }
  const auto& m = h.at("metadata");
  img.metadata.label = m.at("label").get<std::string>();
  img.metadata.created_ns = m.at("created_ns").get<std::uint64_t>();
  img.metadata.chip_seed = m.at("chip_seed").get<std::uint64_t>();
  img.metadata.note = m.at("note").get<std::string>();
  return img;
}

}  // namespace

void save_image(std::ostream& out, const BackupImage& image) {
  const auto& g = image.geometry;
  if (image.pages.size() != g.page_count()) throw Error(ErrorCode::InvalidArgument, "page count does not match geometry");
  const std::string header = header_json(image).dump();
  out.write(kImageMagic.data(), kImageMagic.size());
  const auto len = static_cast<std::uint32_t>(header.size());
  const char len_bytes[4] = {static_cast<char>(len), static_cast<char>(len >> 8), static_cast<char>(len >> 16),
                             static_cast<char>(len >> 24)};
  out.write(len_bytes, 4);
  out.write(header.data(), header.size());
  const std::string erased(g.page_total_bytes(), '\xFF');
  for (const auto& page : image.pages) {
    out.put(static_cast<char>(page.status));
    if (page.erased() || page.payload.empty()) {
      out.write(erased.data(), erased.size());
    } else {
      if (page.payload.size() != g.page_total_bytes()) throw Error(ErrorCode::PayloadSizeMismatch, "page payload size");
      out.write(reinterpret_cast<const char*>(page.payload.data()), page.payload.size());
    }
  }
  if (!out) throw Error(ErrorCode::IoError, "write failed");
}

void save_image(const std::filesystem::path& path, const BackupImage& image) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
  save_image(out, image);
  out.flush();
  if (!out) throw Error(ErrorCode::IoError, "write failed: " + path.string());
}

BackupImage load_image(std::istream& in) {
  std::uint64_t pos = 0;
  auto read = [&](char* dst, std::size_t n) {
    in.read(dst, static_cast<std::streamsize>(n));
    const auto got = static_cast<std::size_t>(in.gcount());
    pos += got;
    return got == n;
  };

  char magic[8];
  const bool full_magic = read(magic, sizeof magic);
  if (!full_magic || !std::equal(kImageMagic.begin(), kImageMagic.end(), magic)) {
    throw FormatError(ErrorCode::BadMagic, 0, "not a NANDIMG1 image");
  }
  unsigned char len_bytes[4];
  if (!read(reinterpret_cast<char*>(len_bytes), 4)) {
    throw FormatError(ErrorCode::TruncatedFile, pos, "expected at least 12 bytes, got " + std::to_string(pos));
  }
  const std::uint32_t header_len = std::uint32_t{len_bytes[0]} | std::uint32_t{len_bytes[1]} << 8 |
                                   std::uint32_t{len_bytes[2]} << 16 | std::uint32_t{len_bytes[3]} << 24;
  if (header_len > kMaxHeaderBytes) {
    throw FormatError(ErrorCode::HeaderParseError, 8, "header length " + std::to_string(header_len) + " is implausible");
  }
  const std::uint64_t header_start = pos;
  std::string header(header_len, '\0');
  if (!read(header.data(), header_len)) {
    throw FormatError(ErrorCode::TruncatedFile, pos,
                      "expected at least " + std::to_string(header_start + header_len) + " bytes, got " +
                          std::to_string(pos));
  }

  BackupImage img;
  try {
    img = image_from_header(ojson::parse(header));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(ErrorCode::HeaderParseError, header_start + (e.byte > 0 ? e.byte - 1 : 0), e.what());
  } catch (const std::exception& e) {
    throw FormatError(ErrorCode::HeaderParseError, header_start, e.what());
  }

  const auto& g = img.geometry;
  const std::uint64_t record = 1 + std::uint64_t{g.page_total_bytes()};
  const std::uint64_t expected = pos + g.page_count() * record;
  auto truncated = [&]() {
    return FormatError(ErrorCode::TruncatedFile, pos,
                       "expected " + std::to_string(expected) + " bytes, got " + std::to_string(pos));
  };

  img.pages.resize(g.page_count());
  std::vector<std::uint8_t> buf(record);
  for (auto& page : img.pages) {
    if (!read(reinterpret_cast<char*>(buf.data()), buf.size())) throw truncated();
    page.status = buf[0];
    if (!page.erased()) {
      page.payload.assign(buf.begin() + 1, buf.end());
    } else if (std::any_of(buf.begin() + 1, buf.end(), [](std::uint8_t b) { return b != 0xFF; })) {
      throw FormatError(ErrorCode::HeaderParseError, pos - record, "erased page record holds data");
    }
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw FormatError(ErrorCode::TruncatedFile, pos, "expected " + std::to_string(expected) + " bytes, found more");
  }
  // Bad blocks carry no readable content.
  for (std::uint32_t b : img.bad_blocks) {
    for (std::uint32_t p = 0; p < g.pages_per_block; ++p) {
      if (!img.page(b, p).erased()) {
        throw FormatError(ErrorCode::HeaderParseError, header_start, "bad block " + std::to_string(b) + " has programmed pages");
      }
    }
  }
  return img;
}

BackupImage load_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  return load_image(in);
}

std::string manifest_to_json(const ScanManifest& manifest) {
  ojson j;
  j["regions"] = ojson::array();
  for (const auto& r : manifest.regions) j["regions"].push_back({r.first, r.last});
  j["block_crc"] = ojson::object();
  for (const auto& [block, crc] : manifest.block_crc) j["block_crc"][std::to_string(block)] = crc_hex(crc);
  return j.dump(2);
}

namespace {

template <typename T>
T parse_document(const std::string& text, const char* what) {
  try {
    const auto j = ojson::parse(text);
    T out;
    for (const auto& r : j.at("regions")) {
      out.regions.push_back({r.at(0).get<std::uint32_t>(), r.at(1).get<std::uint32_t>()});
    }
    for (const auto& [key, value] : j.at("block_crc").items()) {
      std::size_t used = 0;
      const unsigned long block = std::stoul(key, &used);
      if (used != key.size()) throw std::invalid_argument("block key " + key);
      out.block_crc[static_cast<std::uint32_t>(block)] = parse_crc(value.template get<std::string>());
    }
    if constexpr (std::is_same_v<T, DiffReport>) {
      out.changed_blocks = j.at("changed_blocks").get<std::vector<std::uint32_t>>();
      out.scanned_blocks = j.at("scanned_blocks").get<std::uint32_t>();
    }
    return out;
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(ErrorCode::HeaderParseError, e.byte > 0 ? e.byte - 1 : 0, std::string(what) + ": " + e.what());
  } catch (const std::exception& e) {
    throw FormatError(ErrorCode::HeaderParseError, 0, std::string(what) + ": " + e.what());
  }
}

}  // namespace

ScanManifest manifest_from_json(const std::string& text) { return parse_document<ScanManifest>(text, "manifest"); }

std::string diff_to_json(const DiffReport& report) {
  ojson j;
  j["regions"] = ojson::array();
  for (const auto& r : report.regions) j["regions"].push_back({r.first, r.last});
  j["changed_blocks"] = report.changed_blocks;
  j["scanned_blocks"] = report.scanned_blocks;
  j["block_crc"] = ojson::object();
  for (const auto& [block, crc] : report.block_crc) j["block_crc"][std::to_string(block)] = crc_hex(crc);
  return j.dump(2);
}

DiffReport diff_from_json(const std::string& text) { return parse_document<DiffReport>(text, "diff report"); }

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw Error(ErrorCode::IoError, "write failed: " + path.string());
}

}  // namespace mirrorbench
