#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "sdd/tensor.hpp"

namespace sdd {

// Tensor file layout: one JSON header line
//   {"byte_order":"little","dtype":"f64","shape":[...]}\n
// followed by the raw row-major payload as little-endian 64-bit reals.

namespace detail {

inline std::uint64_t to_little(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    std::uint64_t r = 0;
    for (int i = 0; i < 8; ++i) r |= ((v >> (8 * i)) & 0xffULL) << (8 * (7 - i));
    return r;
  }
  return v;
}

}  // namespace detail

inline void dump_tensor(const Tensor& t, std::ostream& out) {
  if (t.rank() == 0) {
    throw FormatError("refusing to dump tensor with empty shape");
  }
  nlohmann::json header;
  header["byte_order"] = "little";
  header["dtype"] = "f64";
  header["shape"] = t.shape();
  out << header.dump() << '\n';
  for (index_t i = 0; i < t.numel(); ++i) {
    std::uint64_t bits;
    double v = t[i];
    std::memcpy(&bits, &v, 8);
    bits = detail::to_little(bits);
    out.write(reinterpret_cast<const char*>(&bits), 8);
  }
}

inline void dump_tensor(const Tensor& t, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path + " for writing");
  dump_tensor(t, out);
  if (!out) throw Error("write failed for " + path);
}

inline Tensor load_tensor(std::istream& in, const std::string& what = "<stream>") {
  std::string line;
  if (!std::getline(in, line)) throw FormatError(what + ": missing tensor header");
  nlohmann::json header = nlohmann::json::parse(line, nullptr, /*allow_exceptions=*/false);
  if (header.is_discarded() || !header.is_object()) {
    throw FormatError(what + ": corrupt tensor header");
  }
  if (header.value("dtype", "") != "f64" || header.value("byte_order", "") != "little" ||
      !header.contains("shape") || !header["shape"].is_array()) {
    throw FormatError(what + ": unsupported tensor header " + line);
  }
  std::vector<index_t> shape = header["shape"].get<std::vector<index_t>>();
  if (shape.empty()) throw FormatError(what + ": empty shape");
  index_t numel = 1;
  for (index_t e : shape) {
    if (e <= 0) throw FormatError(what + ": non-positive extent in header");
    numel *= e;
  }
  std::vector<double> data(static_cast<std::size_t>(numel));
  for (index_t i = 0; i < numel; ++i) {
    std::uint64_t bits;
    if (!in.read(reinterpret_cast<char*>(&bits), 8)) {
      throw FormatError(what + ": payload shorter than header shape " + shape_str(shape));
    }
    bits = detail::to_little(bits);
    std::memcpy(&data[static_cast<std::size_t>(i)], &bits, 8);
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw FormatError(what + ": trailing bytes after payload");
  }
  return Tensor(std::move(shape), std::move(data));
}

inline Tensor load_tensor(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  return load_tensor(in, path);
}

}  // namespace sdd
