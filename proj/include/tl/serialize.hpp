#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>

#include "tl/tensor.hpp"

// Tensor blob: "TNSR", version u32, rank u32, dims u64[rank], dtype u8, raw
// little-endian values.
namespace tl::io {

enum class DType : uint8_t { f64 = 0, f32 = 1 };

inline constexpr uint32_t kTensorFormatVersion = 1;

void write_tensor(std::ostream& out, const Tensor& t, DType dtype = DType::f64);
Tensor read_tensor(std::istream& in);

void write_u32(std::ostream& out, uint32_t v);
void write_u64(std::ostream& out, uint64_t v);
uint32_t read_u32(std::istream& in);
uint64_t read_u64(std::istream& in);
void write_string(std::ostream& out, const std::string& s);
std::string read_string(std::istream& in);

}  // namespace tl::io
