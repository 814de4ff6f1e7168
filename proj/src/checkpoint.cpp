#include "tl/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "tl/errors.hpp"
#include "tl/serialize.hpp"

namespace tl {

namespace fs = std::filesystem;

const Tensor* CheckpointData::find(const std::string& name) const {
  for (const auto& nt : tensors)
    if (nt.name == name) return &nt.tensor;
  return nullptr;
}

void write_checkpoint(const fs::path& path, const std::string& magic, const Config& header, int64_t step,
                      const nn::ParamList& tensors) {
  if (magic.size() != 4) throw ContractError("checkpoint magic must be 4 bytes");
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(magic.data(), 4);
    io::write_u32(out, kCheckpointVersion);
    io::write_string(out, header.to_string());
    io::write_u64(out, static_cast<uint64_t>(step));
    io::write_u64(out, tensors.size());
    for (const auto& nt : tensors) {
      io::write_string(out, nt.name);
      io::write_tensor(out, nt.tensor, io::DType::f64);
    }
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

CheckpointData read_checkpoint(const fs::path& path, const std::string& expected_magic) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  CheckpointData ck;
  ck.magic.resize(4);
  in.read(ck.magic.data(), 4);
  if (!in) throw IoError(path.string() + ": truncated checkpoint");
  if (!expected_magic.empty() && ck.magic != expected_magic)
    throw IoError(path.string() + ": expected a " + expected_magic + " checkpoint, found " + ck.magic);
  const uint32_t version = io::read_u32(in);
  if (version != kCheckpointVersion)
    throw IoError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  ck.header = Config::parse(io::read_string(in));
  ck.step = static_cast<int64_t>(io::read_u64(in));
  const uint64_t n = io::read_u64(in);
  for (uint64_t i = 0; i < n; ++i) {
    std::string name = io::read_string(in);
    ck.tensors.push_back({std::move(name), io::read_tensor(in)});
  }
  return ck;
}

void restore_tensors(const nn::ParamList& dst, const CheckpointData& ck, const std::string& prefix) {
  for (const auto& nt : dst) {
    const Tensor* src = ck.find(prefix + nt.name);
    if (!src) throw IoError("checkpoint lacks tensor " + prefix + nt.name);
    if (src->shape() != nt.tensor.shape()) throw IoError("checkpoint tensor " + prefix + nt.name + " has the wrong shape");
    Tensor t = nt.tensor;
    std::memcpy(t.mutable_data().data(), src->data().data(), sizeof(double) * static_cast<std::size_t>(src->numel()));
  }
}

uint64_t file_hash(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  uint64_t h = 0xcbf29ce484222325ull;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<uint8_t>(buf[i]);
      h *= 0x100000001b3ull;
    }
  }
  return h;
}

namespace {

nn::ParamList with_optimizer(nn::ParamList tensors, const Adam* opt) {
  if (opt) opt->export_state(tensors, "adam.");
  return tensors;
}

}  // namespace

void save_codec(const fs::path& path, const Codec& codec, int64_t step, const Adam* opt) {
  Config h;
  write_codec_config(h, codec.config());
  write_checkpoint(path, kCodecMagic, h, step, with_optimizer(codec.state(), opt));
}

std::unique_ptr<Codec> load_codec(const fs::path& path, int64_t* step) {
  const auto ck = read_checkpoint(path, kCodecMagic);
  auto codec = std::make_unique<Codec>(read_codec_config(ck.header));
  restore_tensors(codec->state(), ck);
  if (step) *step = ck.step;
  return codec;
}

void save_discriminator(const fs::path& path, const PatchDiscriminator& disc, int64_t step, const Adam* opt) {
  Config h;
  write_disc_config(h, disc.config());
  write_checkpoint(path, kDiscMagic, h, step, with_optimizer(disc.params(), opt));
}

std::unique_ptr<PatchDiscriminator> load_discriminator(const fs::path& path) {
  const auto ck = read_checkpoint(path, kDiscMagic);
  auto disc = std::make_unique<PatchDiscriminator>(read_disc_config(ck.header));
  restore_tensors(disc->params(), ck);
  return disc;
}

void save_transformer(const fs::path& path, const Transformer& model, Config meta, int64_t step, const Adam* opt) {
  write_transformer_config(meta, model.config());
  write_checkpoint(path, kTransformerMagic, meta, step, with_optimizer(model.params(), opt));
}

std::unique_ptr<Transformer> load_transformer(const fs::path& path, Config* meta) {
  const auto ck = read_checkpoint(path, kTransformerMagic);
  auto model = std::make_unique<Transformer>(read_transformer_config(ck.header));
  restore_tensors(model->params(), ck);
  if (meta) *meta = ck.header;
  return model;
}

void save_palette(const fs::path& path, const PaletteTokenizer& palette) {
  Config h;
  h.set("palette.k", std::to_string(palette.vocab_size()));
  const int64_t k = palette.vocab_size();
  write_checkpoint(path, kPaletteMagic, h, 0, {{"palette", Tensor::from({k, 3}, palette.colors())}});
}

std::unique_ptr<PaletteTokenizer> load_palette(const fs::path& path) {
  const auto ck = read_checkpoint(path, kPaletteMagic);
  const Tensor* t = ck.find("palette");
  if (!t || t->rank() != 2 || t->dim(1) != 3) throw IoError(path.string() + ": malformed palette");
  return std::make_unique<PaletteTokenizer>(std::vector<double>(t->data().begin(), t->data().end()));
}

std::unique_ptr<ImageTokenizer> load_tokenizer(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  char magic[4] = {};
  in.read(magic, 4);
  if (!in) throw IoError("cannot read checkpoint " + path.string());
  if (std::string(magic, 4) == kPaletteMagic) return load_palette(path);
  return load_codec(path);
}

}  // namespace tl
