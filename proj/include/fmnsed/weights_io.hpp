#pragma once

// FMNW weight container (little-endian):
//
//   "FMNW" | u32 version=1 | u32 tensor_count
//   per tensor: u16 name_len | name (UTF-8) | u8 dtype (0 = f32) | u8 ndim |
//               ndim x u32 dims | u64 byte offset into the data section
//   zero padding up to a 64-byte boundary, then the data section.
//
// Every tensor's offset is itself a multiple of 64.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "fmnsed/error.hpp"
#include "fmnsed/weights.hpp"

namespace fmnsed {

inline constexpr std::uint32_t kFmnwVersion = 1;
inline constexpr std::size_t kFmnwAlign = 64;

namespace detail {

inline std::size_t align_up(std::size_t n, std::size_t a) { return (n + a - 1) / a * a; }

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class ByteReader {
 public:
  explicit ByteReader(const std::vector<std::uint8_t>& buf) : buf_(buf) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<T>(buf_[pos_ + i]) << (8 * i));
    pos_ += sizeof(T);
    return v;
  }

  std::string bytes(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(buf_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > buf_.size()) throw DataError("FMNW file truncated at byte " + std::to_string(pos_));
  }
  const std::vector<std::uint8_t>& buf_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::vector<std::uint8_t> encode_fmnw(const WeightStore& store) {
  std::vector<std::uint8_t> header;
  header.insert(header.end(), {'F', 'M', 'N', 'W'});
  detail::put_le<std::uint32_t>(header, kFmnwVersion);
  detail::put_le<std::uint32_t>(header, static_cast<std::uint32_t>(store.size()));
  std::size_t offset = 0;
  for (const auto& [name, t] : store.entries()) {
    if (name.size() > 0xFFFF) throw DataError("parameter name too long: " + name.substr(0, 64) + "...");
    if (t.rank() > 0xFF) throw DataError("parameter '" + name + "' has too many dimensions");
    detail::put_le<std::uint16_t>(header, static_cast<std::uint16_t>(name.size()));
    header.insert(header.end(), name.begin(), name.end());
    header.push_back(0);  // f32
    header.push_back(static_cast<std::uint8_t>(t.rank()));
    for (std::size_t d : t.shape()) detail::put_le<std::uint32_t>(header, static_cast<std::uint32_t>(d));
    detail::put_le<std::uint64_t>(header, offset);
    offset = detail::align_up(offset + t.size() * sizeof(float), kFmnwAlign);
  }
  const std::size_t data_start = detail::align_up(header.size(), kFmnwAlign);
  std::vector<std::uint8_t> out = std::move(header);
  out.resize(data_start, 0);
  for (const auto& [name, t] : store.entries()) {
    for (float v : t.data()) detail::put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
    out.resize(data_start + detail::align_up(out.size() - data_start, kFmnwAlign), 0);
  }
  return out;
}

inline WeightStore decode_fmnw(const std::vector<std::uint8_t>& buf) {
  detail::ByteReader rd(buf);
  if (rd.bytes(4) != "FMNW") throw DataError("not an FMNW file (bad magic)");
  const auto version = rd.get<std::uint32_t>();
  if (version != kFmnwVersion) throw DataError("unsupported FMNW version " + std::to_string(version));
  const auto count = rd.get<std::uint32_t>();

  struct Entry {
    std::string name;
    Shape shape;
    std::uint64_t offset;
  };
  std::vector<Entry> entries;
  entries.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    Entry e;
    e.name = rd.bytes(rd.get<std::uint16_t>());
    const auto dtype = rd.get<std::uint8_t>();
    if (dtype != 0) throw DataError("tensor '" + e.name + "' has unsupported dtype " + std::to_string(dtype));
    const auto ndim = rd.get<std::uint8_t>();
    for (std::uint8_t d = 0; d < ndim; ++d) e.shape.push_back(rd.get<std::uint32_t>());
    e.offset = rd.get<std::uint64_t>();
    entries.push_back(std::move(e));
  }
  const std::size_t data_start = detail::align_up(rd.pos(), kFmnwAlign);

  WeightStore store;
  for (auto& e : entries) {
    const std::size_t n = shape_numel(e.shape);
    const std::size_t begin = data_start + e.offset;
    if (e.offset % kFmnwAlign != 0) throw DataError("tensor '" + e.name + "' offset is not 64-byte aligned");
    if (begin + n * sizeof(float) > buf.size()) throw DataError("tensor '" + e.name + "' extends past end of file");
    std::vector<float> data(n);
    for (std::size_t k = 0; k < n; ++k) {
      std::uint32_t bits = 0;
      for (std::size_t b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(buf[begin + 4 * k + b]) << (8 * b);
      data[k] = std::bit_cast<float>(bits);
    }
    try {
      store.insert(e.name, Tensor(std::move(e.shape), std::move(data)));
    } catch (const ShapeError& err) {
      throw DataError("tensor '" + e.name + "': " + err.what());
    } catch (const WeightError& err) {
      throw DataError(err.what());
    }
  }
  return store;
}

inline void save_fmnw(const std::string& path, const WeightStore& store) {
  const auto bytes = encode_fmnw(store);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open '" + path + "' for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw DataError("failed writing '" + path + "'");
}

inline WeightStore load_fmnw(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open weight file '" + path + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_fmnw(bytes);
}

}  // namespace fmnsed
