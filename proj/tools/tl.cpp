#include <CLI11.hpp>
#include <cstdio>
#include <iostream>

#include "tl/errors.hpp"
#include "tl/experiments.hpp"
#include "tl/kernels.hpp"
#include "tl/metrics.hpp"

namespace {

struct Options {
  std::string config;
  std::vector<std::string> overrides;  // section.key=value
  std::string out, in;
  int64_t width = -1, height = -1, count = -1;
  bool pixels = false;
  double temperature = -1;
  int top_k = -1;
  int64_t seed = -1;
  bool coords = false;
  std::string scan_order;
  int64_t shapes = 64, size = 32;
  uint64_t shapes_seed = 7;
};

tl::ExperimentConfig load(const Options& o) {
  tl::Config c = tl::Config::load(o.config);
  for (const auto& kv : o.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) throw tl::ConfigError("--set expects section.key=value, got " + kv);
    c.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (o.width >= 0) c.set("sample.width", std::to_string(o.width));
  if (o.height >= 0) c.set("sample.height", std::to_string(o.height));
  if (o.count >= 0) c.set("sample.count", std::to_string(o.count));
  if (o.pixels) c.set("sample.in_pixels", "true");
  if (o.temperature >= 0) c.set("sample.temperature", tl::format_double(o.temperature));
  if (o.top_k >= 0) c.set("sample.top_k", std::to_string(o.top_k));
  if (o.seed >= 0) c.set("sample.seed", std::to_string(o.seed));
  if (o.coords) c.set("sample.coords", "true");
  if (!o.scan_order.empty()) c.set("sample.scan_order", o.scan_order);
  return tl::read_experiment(c);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-stage image synthesis: VQGAN codec plus autoregressive transformer over its codes"};
  app.require_subcommand(1);
  Options o;
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "Suppress progress output");

  auto with_config = [&](CLI::App* sub) {
    sub->add_option("config", o.config, "INI config file")->required()->check(CLI::ExistingFile);
    sub->add_option("--set", o.overrides, "Override a config key (section.key=value)");
    return sub;
  };
  auto* vq = with_config(app.add_subcommand("train-vqgan", "Train the codec with its patch discriminator"));
  auto* tf = with_config(app.add_subcommand("train-transformer", "Train the transformer on encoded index grids"));
  auto* sm = with_config(app.add_subcommand("sample", "Sample index grids and decode them to PNG"));
  sm->add_option("--out", o.out, "Output directory")->required();
  sm->add_option("--width", o.width, "Grid width in latent cells (see --pixels)");
  sm->add_option("--height", o.height, "Grid height in latent cells (see --pixels)");
  sm->add_flag("--pixels", o.pixels, "Interpret --width/--height as pixels");
  sm->add_option("--count", o.count, "Number of samples");
  sm->add_option("--temperature", o.temperature, "Softmax temperature");
  sm->add_option("--top-k", o.top_k, "Keep the k most likely codes");
  sm->add_option("--seed", o.seed, "Sampling seed");
  sm->add_flag("--coords", o.coords, "Condition windows on their coordinates");
  sm->add_option("--scan-order", o.scan_order, "Override the scan order");
  auto* rc = with_config(app.add_subcommand("reconstruct", "Encode and decode a folder of images"));
  rc->add_option("--in", o.in, "Input image directory")->required()->check(CLI::ExistingDirectory);
  rc->add_option("--out", o.out, "Output directory (default: <out_dir>/reconstructions)");
  auto* fs = with_config(app.add_subcommand("f-study", "Sweep the downsampling factor"));
  auto* os = with_config(app.add_subcommand("ordering-study", "Compare the six scan orders"));
  auto* sc = with_config(app.add_subcommand("speed-compare", "Time latent against pixel-space sampling"));
  auto* km = with_config(app.add_subcommand("kmeans-baseline", "Fit an RGB palette with k-means"));
  auto* mk = app.add_subcommand("make-shapes", "Write a procedural shapes dataset");
  mk->add_option("dir", o.out, "Output directory")->required();
  mk->add_option("--count", o.shapes, "Number of images");
  mk->add_option("--size", o.size, "Image side in pixels");
  mk->add_option("--seed", o.shapes_seed, "Generator seed");

  CLI11_PARSE(app, argc, argv);
  tl::set_quiet(quiet);

  try {
    if (mk->parsed()) {
      tl::write_shapes_dataset(o.out, o.shapes, o.size, o.shapes_seed);
      return 0;
    }
    const tl::ExperimentConfig cfg = load(o);
    tl::log_info("kernels: " + std::string(tl::kernels::active().name));
    if (vq->parsed()) {
      const auto r = tl::train_vqgan(cfg);
      std::printf("codec %s\nmse %.6g usage %.4g\n", r.codec_checkpoint.c_str(), r.final_mse, r.usage);
    } else if (tf->parsed()) {
      const auto r = tl::train_transformer(cfg);
      std::printf("transformer %s\nnll first %.6g final %.6g\n", r.checkpoint.c_str(), r.first_nll, r.final_nll);
    } else if (sm->parsed()) {
      const auto grids = tl::sample_images(cfg, o.out);
      std::printf("%zu samples in %s\n", grids.size(), o.out.c_str());
    } else if (rc->parsed()) {
      const std::filesystem::path out = o.out.empty() ? cfg.run.out_dir / "reconstructions" : std::filesystem::path(o.out);
      std::printf("mean mse %.6g\n", tl::reconstruct_images(cfg, o.in, out));
    } else if (fs->parsed()) {
      for (const auto& r : tl::f_study(cfg)) std::printf("f=%d rec_error %.6g nll %.6g\n", r.f, r.rec_error, r.nll);
    } else if (os->parsed()) {
      for (const auto& r : tl::ordering_study(cfg).rows)
        std::printf("%s final nll %.6g\n", std::string(tl::scan_kind_name(r.order)).c_str(), r.final_nll);
    } else if (sc->parsed()) {
      const auto r = tl::speed_compare(cfg);
      std::printf("latent %.4fs pixel %.4fs speedup %.2fx\n", r.latent_seconds, r.pixel_seconds, r.ratio());
    } else if (km->parsed()) {
      const auto r = tl::kmeans_baseline(cfg);
      std::printf("palette %s k=%d mse %.6g\n", r.checkpoint.c_str(), r.k, r.quantization_mse);
    }
  } catch (const tl::ConfigError& e) {
    std::fprintf(stderr, "tl: config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "tl: error: %s\n", e.what());
    return 1;
  }
  return 0;
}
