#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "hmlab/domain.hpp"
#include "hmlab/field.hpp"

namespace hmlab {

// "SFLD v1" little-endian field container.
//   magic "SFLD", u32 version, u8 kind, u32 n, f64 h,
//   n^3 x (3 f64) node values (x fastest, NaN triplets off the mask),
//   u32 V, V x (3 f64 position, 3 f64 value, f64 weight, u8 tag).

inline constexpr std::uint32_t sfld_version = 1;

namespace detail {

class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double d) {
    const auto v = std::bit_cast<std::uint64_t>(d);
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void vec(const Vec3& v) { f64(v.x); f64(v.y); f64(v.z); }
  void raw(const char* s, std::size_t n) { buf_.insert(buf_.end(), s, s + n); }
  const std::vector<std::uint8_t>& bytes() const { return buf_; }

 private:
  std::vector<std::uint8_t> buf_;
};

class ByteReader {
 public:
  explicit ByteReader(const std::vector<std::uint8_t>& b) : buf_(b) {}

  void need(std::size_t n) const {
    if (pos_ + n > buf_.size()) throw TruncatedError("SFLD: truncated payload");
  }
  std::uint8_t u8() {
    need(1);
    return buf_[pos_++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf_[pos_++]) << (8 * i);
    return v;
  }
  double f64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf_[pos_++]) << (8 * i);
    return std::bit_cast<double>(v);
  }
  Vec3 vec() {
    const double x = f64(), y = f64(), z = f64();
    return {x, y, z};
  }
  std::size_t remaining() const { return buf_.size() - pos_; }

 private:
  const std::vector<std::uint8_t>& buf_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::vector<std::uint8_t> encode_field(const SphereField& f) {
  const auto& g = f.grid();
  const auto& s = g.surface();
  detail::ByteWriter w;
  w.raw("SFLD", 4);
  w.u32(sfld_version);
  w.u8(static_cast<std::uint8_t>(g.kind()));
  w.u32(static_cast<std::uint32_t>(g.n()));
  w.f64(g.h());
  for (std::size_t i = 0; i < g.node_count(); ++i) w.vec(g.masked(i) ? f[i] : nan_vec());
  w.u32(static_cast<std::uint32_t>(s.size()));
  for (std::size_t v = 0; v < s.size(); ++v) {
    w.vec(s.positions[v]);
    w.vec(f.vertices()[v]);
    w.f64(s.weights[v]);
    w.u8(static_cast<std::uint8_t>(s.tags[v]));
  }
  return w.bytes();
}

inline SphereField decode_field(const std::vector<std::uint8_t>& bytes) {
  detail::ByteReader r(bytes);
  r.need(4);
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "SFLD", 4) != 0) throw FormatError("SFLD: bad magic");
  for (int i = 0; i < 4; ++i) r.u8();
  const auto version = r.u32();
  if (version != sfld_version) throw FormatError("SFLD: unsupported version " + std::to_string(version));
  const auto kind_byte = r.u8();
  if (kind_byte > 2) throw FormatError("SFLD: bad domain kind");
  const auto n = r.u32();
  const double h = r.f64();
  if (n < 9 || n % 2 == 0 || n > 4097) throw FormatError("SFLD: bad grid size");
  const std::size_t count = static_cast<std::size_t>(n) * n * n;
  r.need(count * 24);
  auto grid = build_domain(static_cast<DomainKind>(kind_byte), static_cast<int>(n));
  if (std::bit_cast<std::uint64_t>(h) != std::bit_cast<std::uint64_t>(grid->h()))
    throw FormatError("SFLD: spacing does not match grid size");
  std::vector<Vec3> nodes(count);
  for (auto& v : nodes) v = r.vec();
  const auto nv = r.u32();
  const auto& s = grid->surface();
  if (nv != s.size()) throw FormatError("SFLD: vertex count does not match domain surface");
  r.need(static_cast<std::size_t>(nv) * 57);
  std::vector<Vec3> verts(nv);
  for (std::uint32_t v = 0; v < nv; ++v) {
    const Vec3 pos = r.vec();
    verts[v] = r.vec();
    const double weight = r.f64();
    const auto tag = r.u8();
    if (pos != s.positions[v] || weight != s.weights[v] || tag != static_cast<std::uint8_t>(s.tags[v]))
      throw FormatError("SFLD: surface record does not match domain surface");
  }
  if (r.remaining() != 0) throw FormatError("SFLD: trailing bytes");
  for (auto idx : grid->masked_nodes())
    if (!is_finite(nodes[idx])) throw FormatError("SFLD: non-finite value on a masked node");
  try {
    return SphereField(grid, std::move(nodes), std::move(verts));
  } catch (const InvalidArgument& e) {
    throw FormatError(std::string("SFLD: ") + e.what());
  }
}

inline void save_field(const SphereField& f, const std::string& path) {
  const auto bytes = encode_field(f);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write to '" + path + "' failed");
}

inline std::vector<std::uint8_t> read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline SphereField load_field(const std::string& path) { return decode_field(read_bytes(path)); }

}  // namespace hmlab
