#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "tl/quantizer.hpp"

namespace tl {

enum class ScanKind { row_major, spiral_out, z_curve, subsample, alternate, spiral_in };

std::string_view scan_kind_name(ScanKind kind);
ScanKind parse_scan_kind(std::string_view name);
const std::vector<ScanKind>& all_scan_kinds();

struct Cell {
  int64_t row = 0;
  int64_t col = 0;
  bool operator==(const Cell&) const = default;
};

// Bijection between sequence positions and grid cells. Immutable once built.
class ScanOrder {
 public:
  static ScanOrder build(ScanKind kind, int64_t h, int64_t w);

  ScanKind kind() const { return kind_; }
  int64_t h() const { return h_; }
  int64_t w() const { return w_; }
  int64_t size() const { return h_ * w_; }

  Cell cell(int64_t t) const { return perm_[static_cast<std::size_t>(t)]; }
  int64_t position(int64_t row, int64_t col) const { return inverse_[static_cast<std::size_t>(row * w_ + col)]; }
  const std::vector<Cell>& perm() const { return perm_; }

 private:
  ScanOrder(ScanKind kind, int64_t h, int64_t w, std::vector<Cell> perm);

  ScanKind kind_;
  int64_t h_, w_;
  std::vector<Cell> perm_;
  std::vector<int64_t> inverse_;  // row-major cell index → position
};

std::vector<int> flatten(const IndexGrid& grid, const ScanOrder& order);
IndexGrid unflatten(std::span<const int> seq, const ScanOrder& order);

// One "t row col" line per position.
void write_perm(std::ostream& out, const ScanOrder& order);

}  // namespace tl
