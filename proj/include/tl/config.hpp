#pragma once

#include <boost/property_tree/ptree.hpp>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "tl/adversary.hpp"
#include "tl/codec.hpp"
#include "tl/sampler.hpp"
#include "tl/transformer.hpp"

namespace tl {

// INI-style "section.key = value" store with typed getters. Every parse
// failure is a ConfigError naming the key.
class Config {
 public:
  static Config load(const std::filesystem::path& path);
  static Config parse(const std::string& text);

  bool has(const std::string& key) const;
  std::string get(const std::string& key, const std::string& fallback) const;
  std::string require(const std::string& key) const;
  int get_int(const std::string& key, int fallback) const;
  int64_t get_int64(const std::string& key, int64_t fallback) const;
  uint64_t get_u64(const std::string& key, uint64_t fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<int> get_int_list(const std::string& key, std::vector<int> fallback) const;
  std::vector<std::string> get_list(const std::string& key, std::vector<std::string> fallback) const;

  void set(const std::string& key, const std::string& value);
  std::string to_string() const;
  void save(const std::filesystem::path& path) const;

 private:
  boost::property_tree::ptree tree_;
};

CodecConfig read_codec_config(const Config& c, const std::string& section = "codec");
void write_codec_config(Config& c, const CodecConfig& cfg, const std::string& section = "codec");
DiscriminatorConfig read_disc_config(const Config& c, const std::string& section = "disc");
void write_disc_config(Config& c, const DiscriminatorConfig& cfg, const std::string& section = "disc");
TransformerConfig read_transformer_config(const Config& c, const std::string& section = "transformer");
void write_transformer_config(Config& c, const TransformerConfig& cfg, const std::string& section = "transformer");
AdamConfig read_adam_config(const Config& c, const std::string& section, const AdamConfig& defaults);

enum class Conditioning { none, klass, spatial };

struct RunSettings {
  std::string task;
  uint64_t seed = 1;
  std::filesystem::path out_dir = "run";
  std::string dataset;                         // directory, or "synthetic:N"
  std::optional<std::filesystem::path> cond_dir;
  int64_t image_size = 32;
  int64_t steps = 1000;
  int64_t batch_size = 8;
  int64_t log_every = 10;
  int64_t eval_every = 100;
  int64_t checkpoint_every = 500;
  int64_t max_images = 0;                     // 0 = all
  uint64_t data_seed = 7;                     // synthetic scenes
  bool train_on_cond = false;                 // fit the codec to the condition maps instead
};

struct TransformerSettings {
  TransformerConfig model;
  ScanKind order = ScanKind::row_major;
  Conditioning conditioning = Conditioning::none;
  bool coords = false;
  int64_t window = 16;   // sliding-window side for coordinate-conditioned training
  int64_t eval_images = 8;
  int64_t holdout = 0;            // last grids kept out of training and used for eval
  bool explicit_K = false;        // K given in the config rather than taken from the tokenizer
  bool explicit_seq_len = false;
  bool shuffle_pairing = false;   // permute condition/data pairs (control run)
};

struct CheckpointPaths {
  std::optional<std::filesystem::path> codec, disc, cond_codec, transformer, palette;
};

struct SampleSettings {
  int64_t width = 0, height = 0;  // latent cells; 0 = training grid size
  bool in_pixels = false;         // width/height given in pixels instead
  int64_t count = 4;
  SamplingParams params;
  std::optional<ScanKind> order;
  bool coords = false;
};

struct StudySettings {
  std::vector<int> f_m_values{0, 1, 2, 3};
  std::vector<ScanKind> orders;
  int64_t codec_steps = 500;
  int64_t transformer_steps = 500;
  int64_t eval_every = 25;
  int64_t speed_repeats = 1;
};

struct KMeansSettings {
  int k = 512;
  int iterations = 20;
  int64_t max_pixels = 200000;
};

struct ExperimentConfig {
  RunSettings run;
  CodecConfig codec;
  DiscriminatorConfig disc;
  GanTrainConfig gan;
  TransformerSettings transformer;
  AdamConfig transformer_adam;
  CheckpointPaths checkpoints;
  SampleSettings sample;
  StudySettings study;
  KMeansSettings kmeans;
  int64_t reseed_every = 0;  // replace unused codes every N codec steps; 0 = never
  Config raw;
};

ExperimentConfig read_experiment(const Config& c);

}  // namespace tl
