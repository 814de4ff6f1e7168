#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tl/image_io.hpp"

namespace tl {

struct DatasetOptions {
  int64_t size = 32;                            // centre-crop side
  std::optional<std::filesystem::path> cond_dir;  // condition maps with matching file stems
};

struct IngestReport {
  int64_t loaded = 0;
  int64_t skipped = 0;
  std::vector<std::string> warnings;
};

struct Sample {
  std::string name;
  Tensor image;                 // 3×S×S in [−1, 1]
  std::optional<Tensor> cond;   // 3×S×S condition map
  std::optional<int> label;
};

class Dataset {
 public:
  Dataset() = default;
  explicit Dataset(std::vector<Sample> samples);

  // Every PNG/PPM in dir (sorted by name). Unreadable files are skipped with a
  // warning; labels come from dir/labels.txt ("filename<TAB>int") when present.
  static Dataset ingest(const std::filesystem::path& dir, const DatasetOptions& opts, IngestReport* report = nullptr);

  int64_t size() const { return static_cast<int64_t>(samples_.size()); }
  const Sample& operator[](int64_t i) const { return samples_[static_cast<std::size_t>(i)]; }
  bool has_cond() const;
  bool has_labels() const;
  int num_classes() const;

  // Seeded permutation of sample indices for one epoch.
  std::vector<int64_t> order(uint64_t seed, int64_t epoch) const;
  // Stacks the images (or condition maps) at the given indices → B×3×S×S.
  Tensor batch(std::span<const int64_t> idx) const;
  Tensor cond_batch(std::span<const int64_t> idx) const;
  // The first n samples as one batch.
  Tensor head(int64_t n) const;

 private:
  std::vector<Sample> samples_;
};

// Procedural scenes: textured background plus a few coloured circles, squares
// and triangles. The layout map paints each shape kind in a fixed colour on
// black; the label is the kind of the largest shape.
struct ShapeScene {
  Image image;
  Image layout;
  int label = 0;
};

inline constexpr int kShapeKinds = 3;

std::vector<ShapeScene> generate_shapes(int64_t n, int64_t size, uint64_t seed);
// Writes dir/images/*.png (+ labels.txt) and dir/layouts/*.png.
void write_shapes_dataset(const std::filesystem::path& dir, int64_t n, int64_t size, uint64_t seed);
Dataset shapes_dataset(int64_t n, int64_t size, uint64_t seed, bool with_layouts = false);

}  // namespace tl
