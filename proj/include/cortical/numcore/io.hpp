#pragma once

#include <filesystem>
#include <string>

#include "cortical/numcore/tensor.hpp"

namespace cortical {

// On-disk tensor: `<stem>.bin` holds the raw little-endian scalars and
// `<stem>.json` holds {"shape": [...], "dtype": "f32"|"f64", "name": ...}.
void write_tensor(const std::filesystem::path& stem, const Tensor& tensor,
                  const std::string& name = "");
Tensor read_tensor(const std::filesystem::path& stem, std::string* name = nullptr);
bool tensor_exists(const std::filesystem::path& stem);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

// FNV-1a 64-bit, as 16 hex digits.
std::string fnv1a_hex(std::string_view bytes);
std::string file_hash(const std::filesystem::path& path);

}  // namespace cortical
