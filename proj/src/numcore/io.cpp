#include "cortical/numcore/io.hpp"

#include <bit>
#include <cstring>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <sstream>

#include "json.hpp"

namespace cortical {
namespace fs = std::filesystem;

static_assert(std::endian::native == std::endian::little,
              "tensor files are little-endian; big-endian hosts need byte swapping");

namespace {

fs::path with_suffix(const fs::path& stem, const char* ext) {
  fs::path p = stem;
  p += ext;
  return p;
}

}  // namespace

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw IoError("short write to " + path.string());
}

void write_tensor(const fs::path& stem, const Tensor& tensor, const std::string& name) {
  const auto bytes = tensor.bytes();
  write_text(with_suffix(stem, ".bin"),
             std::string(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
  nlohmann::json meta;
  meta["shape"] = tensor.shape();
  meta["dtype"] = dtype_name(tensor.dtype());
  meta["name"] = name;
  write_text(with_suffix(stem, ".json"), meta.dump() + "\n");
}

bool tensor_exists(const fs::path& stem) {
  return fs::exists(with_suffix(stem, ".bin")) && fs::exists(with_suffix(stem, ".json"));
}

Tensor read_tensor(const fs::path& stem, std::string* name) {
  const fs::path meta_path = with_suffix(stem, ".json");
  const fs::path bin_path = with_suffix(stem, ".bin");
  if (!fs::exists(meta_path) || !fs::exists(bin_path)) {
    throw FormatError("missing tensor files for " + stem.string());
  }
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(read_text(meta_path));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(meta_path.string() + ": " + e.what());
  }
  if (!meta.contains("shape") || !meta.contains("dtype")) {
    throw FormatError(meta_path.string() + ": needs shape and dtype");
  }
  Tensor t(meta["shape"].get<Shape>(), parse_dtype(meta["dtype"].get<std::string>()));
  const std::string raw = read_text(bin_path);
  auto bytes = t.bytes();
  if (raw.size() != bytes.size()) {
    throw FormatError(bin_path.string() + ": expected " + std::to_string(bytes.size()) +
                      " bytes, found " + std::to_string(raw.size()));
  }
  std::memcpy(bytes.data(), raw.data(), raw.size());
  if (name != nullptr) *name = meta.value("name", "");
  return t;
}

std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string file_hash(const fs::path& path) { return fnv1a_hex(read_text(path)); }

}  // namespace cortical
