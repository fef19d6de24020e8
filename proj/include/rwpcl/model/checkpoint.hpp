#pragma once

// Binary checkpoint layout (all integers little-endian):
//   "RWPC" | u32 version | u32 tensor_count |
//   per tensor: u16 name_len | name bytes | u8 rank | u32 dims[rank] | f32 values[]

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "rwpcl/core/errors.hpp"
#include "rwpcl/model/params.hpp"

namespace rwpcl {

inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

template <typename U>
void put_le(std::string& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out += static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xFF);
}

class Reader {
 public:
  explicit Reader(const std::string& buf) : buf_(buf) {}
  template <typename U>
  U get() {
    need(sizeof(U));
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
    pos_ += sizeof(U);
    return static_cast<U>(v);
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == buf_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > buf_.size()) throw InputError("checkpoint: truncated data");
  }
  const std::string& buf_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string encode_checkpoint(const ParamMap<float>& params) {
  std::string out = "RWPC";
  detail::put_le<std::uint32_t>(out, kCheckpointVersion);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, t] : params) {
    if (name.size() > 0xFFFF) throw InputError("checkpoint: tensor name too long: " + name);
    detail::put_le<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
    out += name;
    detail::put_le<std::uint8_t>(out, static_cast<std::uint8_t>(t.rank()));
    for (auto d : t.dims) detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    for (float v : t.values) detail::put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
  }
  return out;
}

inline ParamMap<float> decode_checkpoint(const std::string& buf) {
  detail::Reader r(buf);
  if (r.bytes(4) != "RWPC") throw InputError("checkpoint: bad magic");
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) throw InputError("checkpoint: unsupported version " + std::to_string(version));
  const auto count = r.get<std::uint32_t>();
  ParamMap<float> params;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.bytes(r.get<std::uint16_t>());
    Shape dims(r.get<std::uint8_t>());
    for (auto& d : dims) d = r.get<std::uint32_t>();
    std::vector<float> values(shape_size(dims));
    for (auto& v : values) v = std::bit_cast<float>(r.get<std::uint32_t>());
    if (!params.emplace(name, Tensor<float>(dims, std::move(values))).second)
      throw InputError("checkpoint: duplicate tensor " + name);
  }
  if (!r.done()) throw InputError("checkpoint: trailing bytes");
  return params;
}

inline void save_checkpoint(const std::string& path, const ParamMap<float>& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint: " + path);
  const std::string buf = encode_checkpoint(params);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError("write failed: " + path);
}

inline ParamMap<float> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(buf);
}

}  // namespace rwpcl
