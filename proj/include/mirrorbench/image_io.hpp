#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "mirrorbench/mirror.hpp"

namespace mirrorbench {

// NANDIMG1 container:
//   "NANDIMG1" | le32 header length | JSON header | pages
// Each page is one status byte followed by page_total_bytes of payload,
// erased pages written as 0xFF.
inline constexpr std::string_view kImageMagic = "NANDIMG1";

void save_image(std::ostream& out, const BackupImage& image);
void save_image(const std::filesystem::path& path, const BackupImage& image);

// Errors carry the byte offset: BadMagic, TruncatedFile, HeaderParseError.
BackupImage load_image(std::istream& in);
BackupImage load_image(const std::filesystem::path& path);

// Manifest and diff documents: {"regions": [[first, last], ...], "block_crc": {"7": "0xHHHH"}}.
std::string manifest_to_json(const ScanManifest& manifest);
ScanManifest manifest_from_json(const std::string& text);
std::string diff_to_json(const DiffReport& report);
DiffReport diff_from_json(const std::string& text);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace mirrorbench
