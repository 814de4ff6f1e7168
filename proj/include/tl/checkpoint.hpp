#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include "tl/adversary.hpp"
#include "tl/config.hpp"
#include "tl/kmeans.hpp"
#include "tl/optim.hpp"
#include "tl/transformer.hpp"

// Checkpoint file: 4-byte magic, u32 version, INI header text, u64 step,
// u64 tensor count, then (name, TNSR blob) pairs at 64-bit precision.
namespace tl {

inline constexpr char kCodecMagic[] = "VQGC";
inline constexpr char kDiscMagic[] = "VQGD";
inline constexpr char kTransformerMagic[] = "VQGT";
inline constexpr char kPaletteMagic[] = "VQGK";
inline constexpr uint32_t kCheckpointVersion = 1;

struct CheckpointData {
  std::string magic;
  Config header;
  int64_t step = 0;
  nn::ParamList tensors;

  const Tensor* find(const std::string& name) const;
};

// Written to a temporary sibling and renamed, so a crash never leaves a torn file.
void write_checkpoint(const std::filesystem::path& path, const std::string& magic, const Config& header,
                      int64_t step, const nn::ParamList& tensors);
CheckpointData read_checkpoint(const std::filesystem::path& path, const std::string& expected_magic);

// Copies values by name into dst (prefix prepended to each dst name when
// looking up). Missing names or shape mismatches raise IoError.
void restore_tensors(const nn::ParamList& dst, const CheckpointData& ck, const std::string& prefix = "");

// FNV-1a over the file bytes.
uint64_t file_hash(const std::filesystem::path& path);

void save_codec(const std::filesystem::path& path, const Codec& codec, int64_t step, const Adam* opt = nullptr);
std::unique_ptr<Codec> load_codec(const std::filesystem::path& path, int64_t* step = nullptr);

void save_discriminator(const std::filesystem::path& path, const PatchDiscriminator& disc, int64_t step,
                        const Adam* opt = nullptr);
std::unique_ptr<PatchDiscriminator> load_discriminator(const std::filesystem::path& path);

// meta carries the run-level keys (scan order, conditioning, codec hash, ...);
// the model section is added on save.
void save_transformer(const std::filesystem::path& path, const Transformer& model, Config meta, int64_t step,
                      const Adam* opt = nullptr);
std::unique_ptr<Transformer> load_transformer(const std::filesystem::path& path, Config* meta = nullptr);

void save_palette(const std::filesystem::path& path, const PaletteTokenizer& palette);
std::unique_ptr<PaletteTokenizer> load_palette(const std::filesystem::path& path);

// A codec or palette checkpoint, chosen by its magic.
std::unique_ptr<ImageTokenizer> load_tokenizer(const std::filesystem::path& path);

}  // namespace tl
