#include "tl/serialize.hpp"

#include <bit>
#include <cstring>
#include <istream>
#include <ostream>

#include "tl/errors.hpp"

namespace tl::io {
namespace {

void write_le(std::ostream& out, uint64_t v, int bytes) {
  char buf[8];
  for (int i = 0; i < bytes; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(buf, bytes);
}

uint64_t read_le(std::istream& in, int bytes) {
  unsigned char buf[8];
  in.read(reinterpret_cast<char*>(buf), bytes);
  if (!in) throw IoError("unexpected end of stream");
  uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= static_cast<uint64_t>(buf[i]) << (8 * i);
  return v;
}

}  // namespace

void write_u32(std::ostream& out, uint32_t v) { write_le(out, v, 4); }
void write_u64(std::ostream& out, uint64_t v) { write_le(out, v, 8); }
uint32_t read_u32(std::istream& in) { return static_cast<uint32_t>(read_le(in, 4)); }
uint64_t read_u64(std::istream& in) { return read_le(in, 8); }

void write_string(std::ostream& out, const std::string& s) {
  write_u32(out, static_cast<uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& in) {
  const uint32_t n = read_u32(in);
  std::string s(n, '\0');
  in.read(s.data(), n);
  if (!in) throw IoError("unexpected end of stream in string");
  return s;
}

void write_tensor(std::ostream& out, const Tensor& t, DType dtype) {
  out.write("TNSR", 4);
  write_u32(out, kTensorFormatVersion);
  write_u32(out, static_cast<uint32_t>(t.rank()));
  for (int64_t d : t.shape()) write_u64(out, static_cast<uint64_t>(d));
  const char tag = static_cast<char>(dtype);
  out.write(&tag, 1);
  for (double v : t.data()) {
    if (dtype == DType::f64) {
      write_le(out, std::bit_cast<uint64_t>(v), 8);
    } else {
      write_le(out, std::bit_cast<uint32_t>(static_cast<float>(v)), 4);
    }
  }
  if (!out) throw IoError("failed writing tensor");
}

Tensor read_tensor(std::istream& in) {
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "TNSR", 4) != 0) throw IoError("bad tensor magic");
  const uint32_t version = read_u32(in);
  if (version != kTensorFormatVersion) throw IoError("unsupported tensor version " + std::to_string(version));
  const uint32_t rank = read_u32(in);
  Shape shape(rank);
  for (auto& d : shape) d = static_cast<int64_t>(read_u64(in));
  const auto dtype = static_cast<DType>(read_le(in, 1));
  if (dtype != DType::f64 && dtype != DType::f32) throw IoError("unknown tensor dtype tag");
  std::vector<double> values(static_cast<std::size_t>(shape_numel(shape)));
  for (double& v : values) {
    if (dtype == DType::f64) {
      v = std::bit_cast<double>(read_le(in, 8));
    } else {
      v = static_cast<double>(std::bit_cast<float>(static_cast<uint32_t>(read_le(in, 4))));
    }
  }
  return Tensor::from(std::move(shape), std::move(values));
}

}  // namespace tl::io
