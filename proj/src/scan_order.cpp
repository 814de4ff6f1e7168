#include "tl/scan_order.hpp"

#include <algorithm>
#include <bit>
#include <ostream>

#include "tl/errors.hpp"

namespace tl {

namespace {

constexpr std::pair<ScanKind, std::string_view> kNames[] = {
    {ScanKind::row_major, "row_major"}, {ScanKind::spiral_out, "spiral_out"}, {ScanKind::z_curve, "z_curve"},
    {ScanKind::subsample, "subsample"}, {ScanKind::alternate, "alternate"},   {ScanKind::spiral_in, "spiral_in"},
};

bool is_pow2(int64_t v) { return v > 0 && std::has_single_bit(static_cast<uint64_t>(v)); }

std::vector<Cell> row_major(int64_t h, int64_t w) {
  std::vector<Cell> p;
  for (int64_t r = 0; r < h; ++r)
    for (int64_t c = 0; c < w; ++c) p.push_back({r, c});
  return p;
}

std::vector<Cell> alternate(int64_t h, int64_t w) {
  std::vector<Cell> p;
  for (int64_t r = 0; r < h; ++r)
    for (int64_t k = 0; k < w; ++k) p.push_back({r, r % 2 == 0 ? k : w - 1 - k});
  return p;
}

// Clockwise from the centre, first step to the right, arm lengths 1,1,2,2,3,3,…
// Cells outside the grid are skipped until every cell has been visited.
std::vector<Cell> spiral_out(int64_t h, int64_t w) {
  constexpr int64_t dr[] = {0, 1, 0, -1};
  constexpr int64_t dc[] = {1, 0, -1, 0};
  std::vector<Cell> p;
  const int64_t total = h * w;
  int64_t r = (h + 1) / 2 - 1, c = (w + 1) / 2 - 1;
  p.push_back({r, c});
  int dir = 0;
  for (int64_t arm = 1; static_cast<int64_t>(p.size()) < total; ++arm) {
    for (int rep = 0; rep < 2 && static_cast<int64_t>(p.size()) < total; ++rep) {
      for (int64_t s = 0; s < arm; ++s) {
        r += dr[dir];
        c += dc[dir];
        if (r >= 0 && r < h && c >= 0 && c < w) p.push_back({r, c});
      }
      dir = (dir + 1) % 4;
    }
  }
  return p;
}

std::vector<Cell> z_curve(int64_t h, int64_t w) {
  // Interleave with column bits low; the shorter side runs out of bits first,
  // after which the longer side's remaining bits fill the high positions.
  const int rb = std::countr_zero(static_cast<uint64_t>(h));
  const int cb = std::countr_zero(static_cast<uint64_t>(w));
  std::vector<std::pair<int64_t, Cell>> keyed;
  for (int64_t r = 0; r < h; ++r)
    for (int64_t c = 0; c < w; ++c) {
      int64_t key = 0;
      int bit = 0;
      for (int b = 0; b < std::max(rb, cb); ++b) {
        if (b < cb) key |= ((c >> b) & 1) << bit++;
        if (b < rb) key |= ((r >> b) & 1) << bit++;
      }
      keyed.push_back({key, {r, c}});
    }
  std::sort(keyed.begin(), keyed.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<Cell> p;
  for (const auto& [key, cell] : keyed) p.push_back(cell);
  return p;
}

std::vector<Cell> subsample(int64_t h, int64_t w) {
  std::vector<Cell> p;
  std::vector<char> seen(static_cast<std::size_t>(h * w), 0);
  const int top = std::countr_zero(static_cast<uint64_t>(std::min(h, w)));
  for (int l = top; l >= 0; --l) {
    const int64_t stride = int64_t{1} << l;
    for (int64_t r = 0; r < h; r += stride)
      for (int64_t c = 0; c < w; c += stride) {
        char& s = seen[static_cast<std::size_t>(r * w + c)];
        if (!s) {
          s = 1;
          p.push_back({r, c});
        }
      }
  }
  return p;
}

}  // namespace

std::string_view scan_kind_name(ScanKind kind) {
  for (const auto& [k, name] : kNames)
    if (k == kind) return name;
  throw ContractError("unknown scan kind");
}

ScanKind parse_scan_kind(std::string_view name) {
  for (const auto& [k, n] : kNames)
    if (n == name) return k;
  throw ConfigError("unknown scan order '" + std::string(name) +
                    "' (expected row_major, spiral_out, z_curve, subsample, alternate or spiral_in)");
}

const std::vector<ScanKind>& all_scan_kinds() {
  static const std::vector<ScanKind> kinds = {ScanKind::row_major, ScanKind::spiral_out, ScanKind::z_curve,
                                              ScanKind::subsample, ScanKind::alternate,  ScanKind::spiral_in};
  return kinds;
}

ScanOrder::ScanOrder(ScanKind kind, int64_t h, int64_t w, std::vector<Cell> perm)
    : kind_(kind), h_(h), w_(w), perm_(std::move(perm)), inverse_(static_cast<std::size_t>(h * w), -1) {
  for (std::size_t t = 0; t < perm_.size(); ++t) inverse_[static_cast<std::size_t>(perm_[t].row * w + perm_[t].col)] = static_cast<int64_t>(t);
}

ScanOrder ScanOrder::build(ScanKind kind, int64_t h, int64_t w) {
  if (h < 1 || w < 1) throw ConfigError("scan order grid must be at least 1×1");
  if ((kind == ScanKind::z_curve || kind == ScanKind::subsample) && !(is_pow2(h) && is_pow2(w)))
    throw ConfigError(std::string(scan_kind_name(kind)) + " requires power-of-two grid sides, got " +
                      std::to_string(h) + "×" + std::to_string(w));
  std::vector<Cell> p;
  switch (kind) {
    case ScanKind::row_major: p = row_major(h, w); break;
    case ScanKind::alternate: p = alternate(h, w); break;
    case ScanKind::spiral_out: p = spiral_out(h, w); break;
    case ScanKind::spiral_in:
      p = spiral_out(h, w);
      std::reverse(p.begin(), p.end());
      break;
    case ScanKind::z_curve: p = z_curve(h, w); break;
    case ScanKind::subsample: p = subsample(h, w); break;
  }
  return ScanOrder(kind, h, w, std::move(p));
}

std::vector<int> flatten(const IndexGrid& grid, const ScanOrder& order) {
  if (grid.h != order.h() || grid.w != order.w())
    throw ContractError("flatten: grid " + std::to_string(grid.h) + "×" + std::to_string(grid.w) +
                        " does not match scan order " + std::to_string(order.h()) + "×" + std::to_string(order.w()));
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(order.size()));
  for (const Cell& c : order.perm()) out.push_back(grid.at(c.row, c.col));
  return out;
}

IndexGrid unflatten(std::span<const int> seq, const ScanOrder& order) {
  if (static_cast<int64_t>(seq.size()) != order.size())
    throw ContractError("unflatten: sequence length " + std::to_string(seq.size()) + " != " + std::to_string(order.size()));
  IndexGrid g(order.h(), order.w());
  for (std::size_t t = 0; t < seq.size(); ++t) {
    const Cell c = order.perm()[t];
    g.at(c.row, c.col) = seq[t];
  }
  return g;
}

void write_perm(std::ostream& out, const ScanOrder& order) {
  for (int64_t t = 0; t < order.size(); ++t) {
    const Cell c = order.cell(t);
    out << t << ' ' << c.row << ' ' << c.col << '\n';
  }
}

}  // namespace tl
