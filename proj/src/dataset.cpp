#include "tl/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>

#include "tl/errors.hpp"
#include "tl/random.hpp"

namespace tl {

namespace fs = std::filesystem;

namespace {

bool is_image_file(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".ppm";
}

std::vector<fs::path> list_images(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && is_image_file(e.path())) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  return files;
}

std::map<std::string, int> read_labels(const fs::path& file) {
  std::map<std::string, int> labels;
  std::ifstream in(file);
  std::string line;
  int64_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw IoError(file.string() + ":" + std::to_string(lineno) + ": expected filename<TAB>label");
    try {
      labels[line.substr(0, tab)] = std::stoi(line.substr(tab + 1));
    } catch (const std::exception&) {
      throw IoError(file.string() + ":" + std::to_string(lineno) + ": label is not an integer");
    }
  }
  return labels;
}

Tensor stack(const std::vector<const Tensor*>& items) {
  if (items.empty()) throw ContractError("batch: no indices");
  Shape shape = items[0]->shape();
  std::vector<double> v;
  v.reserve(static_cast<std::size_t>(items[0]->numel()) * items.size());
  for (const Tensor* t : items) v.insert(v.end(), t->data().begin(), t->data().end());
  shape.insert(shape.begin(), static_cast<int64_t>(items.size()));
  return Tensor::from(shape, std::move(v));
}

}  // namespace

Dataset::Dataset(std::vector<Sample> samples) : samples_(std::move(samples)) {}

Dataset Dataset::ingest(const fs::path& dir, const DatasetOptions& opts, IngestReport* report) {
  if (!fs::is_directory(dir)) throw IoError("dataset directory " + dir.string() + " does not exist");
  IngestReport local;
  IngestReport& rep = report ? *report : local;
  std::map<std::string, int> labels;
  if (fs::exists(dir / "labels.txt")) labels = read_labels(dir / "labels.txt");

  std::map<std::string, fs::path> cond_files;
  if (opts.cond_dir) {
    if (!fs::is_directory(*opts.cond_dir)) throw IoError("condition directory " + opts.cond_dir->string() + " does not exist");
    for (const auto& p : list_images(*opts.cond_dir)) cond_files[p.stem().string()] = p;
  }

  std::vector<Sample> samples;
  for (const auto& path : list_images(dir)) {
    Sample s;
    s.name = path.filename().string();
    try {
      s.image = image_to_tensor(center_crop_resize(read_image(path), opts.size));
      if (opts.cond_dir) {
        const auto it = cond_files.find(path.stem().string());
        if (it == cond_files.end()) {
          rep.warnings.push_back("no condition map for " + s.name + "; pair excluded");
          ++rep.skipped;
          continue;
        }
        s.cond = image_to_tensor(center_crop_resize(read_image(it->second), opts.size));
      }
    } catch (const IoError& e) {
      rep.warnings.push_back(std::string("skipped: ") + e.what());
      ++rep.skipped;
      continue;
    }
    if (const auto it = labels.find(s.name); it != labels.end()) s.label = it->second;
    samples.push_back(std::move(s));
  }
  if (samples.empty()) throw IoError("dataset " + dir.string() + " has no readable images");
  rep.loaded = static_cast<int64_t>(samples.size());
  return Dataset(std::move(samples));
}

bool Dataset::has_cond() const {
  return !samples_.empty() && std::all_of(samples_.begin(), samples_.end(), [](const Sample& s) { return s.cond.has_value(); });
}

bool Dataset::has_labels() const {
  return !samples_.empty() && std::all_of(samples_.begin(), samples_.end(), [](const Sample& s) { return s.label.has_value(); });
}

int Dataset::num_classes() const {
  int n = 0;
  for (const Sample& s : samples_)
    if (s.label) n = std::max(n, *s.label + 1);
  return n;
}

std::vector<int64_t> Dataset::order(uint64_t seed, int64_t epoch) const {
  std::vector<int64_t> idx(samples_.size());
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed * 0x9e3779b97f4a7c15ULL + static_cast<uint64_t>(epoch));
  rng.shuffle(std::span(idx));
  return idx;
}

Tensor Dataset::batch(std::span<const int64_t> idx) const {
  std::vector<const Tensor*> items;
  for (int64_t i : idx) items.push_back(&samples_.at(static_cast<std::size_t>(i)).image);
  return stack(items);
}

Tensor Dataset::cond_batch(std::span<const int64_t> idx) const {
  std::vector<const Tensor*> items;
  for (int64_t i : idx) {
    const Sample& s = samples_.at(static_cast<std::size_t>(i));
    if (!s.cond) throw ContractError("cond_batch: sample " + s.name + " has no condition map");
    items.push_back(&*s.cond);
  }
  return stack(items);
}

Tensor Dataset::head(int64_t n) const {
  std::vector<int64_t> idx(static_cast<std::size_t>(std::min(n, size())));
  std::iota(idx.begin(), idx.end(), 0);
  return batch(idx);
}

namespace {

constexpr uint8_t kLayoutColors[kShapeKinds][3] = {{255, 0, 0}, {0, 255, 0}, {0, 0, 255}};

bool inside(int kind, double px, double py, double cx, double cy, double r) {
  const double dx = px - cx, dy = py - cy;
  switch (kind) {
    case 0: return dx * dx + dy * dy <= r * r;
    case 1: return std::fabs(dx) <= r && std::fabs(dy) <= r;
    default: {
      // Upright isosceles triangle inscribed in the r-box.
      if (dy < -r || dy > r) return false;
      const double half = r * (dy + r) / (2 * r);
      return std::fabs(dx) <= half;
    }
  }
}

}  // namespace

std::vector<ShapeScene> generate_shapes(int64_t n, int64_t size, uint64_t seed) {
  if (n < 1 || size < 4) throw ConfigError("shapes dataset needs n ≥ 1 and size ≥ 4");
  Rng rng(seed);
  std::vector<ShapeScene> out;
  for (int64_t k = 0; k < n; ++k) {
    ShapeScene sc{Image(size, size), Image(size, size), 0};
    // Background: two-colour gradient with diagonal stripes.
    double c0[3], c1[3];
    for (int c = 0; c < 3; ++c) {
      c0[c] = rng.uniform(20, 120);
      c1[c] = rng.uniform(20, 120);
    }
    const double period = rng.uniform(3, 8), phase = rng.uniform(0, 6.3);
    for (int64_t y = 0; y < size; ++y)
      for (int64_t x = 0; x < size; ++x) {
        const double t = static_cast<double>(y) / static_cast<double>(size - 1);
        const double stripe = 12.0 * std::sin((x + y) * 6.283185307179586 / period + phase);
        for (int c = 0; c < 3; ++c)
          sc.image.pixel(x, y)[c] = static_cast<uint8_t>(std::clamp((1 - t) * c0[c] + t * c1[c] + stripe, 0.0, 255.0));
      }
    const int shapes = 1 + static_cast<int>(rng.below(3));
    double largest = -1;
    for (int s = 0; s < shapes; ++s) {
      const int kind = static_cast<int>(rng.below(kShapeKinds));
      const double r = rng.uniform(0.12, 0.3) * static_cast<double>(size);
      const double cx = rng.uniform(r, static_cast<double>(size) - r), cy = rng.uniform(r, static_cast<double>(size) - r);
      uint8_t col[3];
      for (uint8_t& v : col) v = static_cast<uint8_t>(rng.uniform(130, 255));
      if (r > largest) {
        largest = r;
        sc.label = kind;
      }
      for (int64_t y = 0; y < size; ++y)
        for (int64_t x = 0; x < size; ++x)
          if (inside(kind, x + 0.5, y + 0.5, cx, cy, r)) {
            std::copy(col, col + 3, sc.image.pixel(x, y));
            std::copy(kLayoutColors[kind], kLayoutColors[kind] + 3, sc.layout.pixel(x, y));
          }
    }
    out.push_back(std::move(sc));
  }
  return out;
}

void write_shapes_dataset(const fs::path& dir, int64_t n, int64_t size, uint64_t seed) {
  fs::create_directories(dir / "images");
  fs::create_directories(dir / "layouts");
  std::ofstream labels(dir / "images" / "labels.txt");
  const auto scenes = generate_shapes(n, size, seed);
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "shape_%05zu.png", i);
    write_png(dir / "images" / name, scenes[i].image);
    write_png(dir / "layouts" / name, scenes[i].layout);
    labels << name << '\t' << scenes[i].label << '\n';
  }
  if (!labels) throw IoError("cannot write " + (dir / "images" / "labels.txt").string());
}

Dataset shapes_dataset(int64_t n, int64_t size, uint64_t seed, bool with_layouts) {
  std::vector<Sample> samples;
  const auto scenes = generate_shapes(n, size, seed);
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    Sample s;
    s.name = "shape_" + std::to_string(i);
    s.image = image_to_tensor(scenes[i].image);
    if (with_layouts) s.cond = image_to_tensor(scenes[i].layout);
    s.label = scenes[i].label;
    samples.push_back(std::move(s));
  }
  return Dataset(std::move(samples));
}

}  // namespace tl
