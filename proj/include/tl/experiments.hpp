#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tl/checkpoint.hpp"
#include "tl/config.hpp"
#include "tl/dataset.hpp"

namespace tl {

// Progress lines go to stderr unless silenced.
void set_quiet(bool quiet);
void log_info(const std::string& msg);

// run.dataset is a directory or "synthetic:N" (procedural shapes with layout maps).
Dataset load_dataset(const ExperimentConfig& cfg);

// Output directory with the config copied in.
std::filesystem::path prepare_out_dir(const ExperimentConfig& cfg);

struct VqganResult {
  std::filesystem::path codec_checkpoint, disc_checkpoint;
  int64_t steps = 0;
  double final_mse = 0;    // on the evaluation batch, images in [−1, 1]
  double usage = 0;        // fraction of codes hit over the whole dataset
};
VqganResult train_vqgan(const ExperimentConfig& cfg);

// Index grids for a dataset (and optionally its condition maps / labels).
struct EncodedData {
  std::vector<IndexGrid> grids;
  std::vector<IndexGrid> cond;
  std::vector<int> labels;
  int64_t K = 0;
  int64_t cond_K = 0;
  int num_classes = 0;
};

// Encoded grids are cached under cache_dir in a file named after the tokenizer
// checkpoint hash, so a changed checkpoint never reuses stale grids.
std::filesystem::path grid_cache_path(const std::filesystem::path& cache_dir, uint64_t checkpoint_hash,
                                      const std::string& data_key, bool cond_maps);
std::vector<IndexGrid> encode_cached(const ImageTokenizer& tok, const std::filesystem::path& checkpoint,
                                     const Dataset& data, bool cond_maps, const std::filesystem::path& cache_dir,
                                     const std::string& data_key, bool* cache_hit = nullptr);

struct FitOptions {
  TransformerSettings settings;
  AdamConfig adam;
  int64_t steps = 100;
  int64_t batch_size = 8;
  int64_t eval_every = 25;
  int64_t log_every = 10;
  uint64_t seed = 1;
  std::filesystem::path out_dir;
  std::string tag;          // prefix for the files written
  Config meta;              // stored in the checkpoint header
  bool save = true;
};

struct FitResult {
  std::unique_ptr<Transformer> model;
  std::vector<std::pair<int64_t, double>> eval_curve;  // (step, nll nats/token)
  std::filesystem::path checkpoint;
};

// The model shape is derived from the data: K, condition vocabularies and,
// unless given explicitly, the context length.
TransformerConfig resolve_transformer_config(const EncodedData& data, const TransformerSettings& s);
FitResult fit_transformer(const EncodedData& data, const FitOptions& opt);

struct TransformerRunResult {
  std::filesystem::path checkpoint;
  double first_nll = 0, final_nll = 0;
};
TransformerRunResult train_transformer(const ExperimentConfig& cfg);

// Writes sample_NNN.png and sample_NNN.grid.txt; returns the grids.
std::vector<IndexGrid> sample_images(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);

// Reconstructs every image in in_dir; returns mean MSE.
double reconstruct_images(const ExperimentConfig& cfg, const std::filesystem::path& in_dir,
                          const std::filesystem::path& out_dir);

struct KMeansBaselineResult {
  std::filesystem::path checkpoint;
  int k = 0;
  double quantization_mse = 0;
  std::vector<double> objective;
};
KMeansBaselineResult kmeans_baseline(const ExperimentConfig& cfg);

struct FStudyRow {
  int m = 0;
  int f = 1;
  int64_t seq_len = 0;
  double rec_error = 0;
  double nll = 0;
};
std::vector<FStudyRow> f_study(const ExperimentConfig& cfg);

struct OrderingRow {
  ScanKind order = ScanKind::row_major;
  double step0_nll = 0;
  double final_nll = 0;
  double best_nll = 0;   // lowest point of the eval curve
  int64_t best_step = 0;
  std::filesystem::path curve;
};
struct OrderingResult {
  std::vector<OrderingRow> rows;
  bool row_major_beats_subsample = false;
};
OrderingResult ordering_study(const ExperimentConfig& cfg);

struct SpeedResult {
  double latent_seconds = 0;   // per image, sampling + decode
  double pixel_seconds = 0;
  int64_t latent_steps = 0, pixel_steps = 0;
  double ratio() const { return pixel_seconds / latent_seconds; }
};
SpeedResult speed_compare(const ExperimentConfig& cfg);

}  // namespace tl
