#include "tl/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <fstream>
#include <sstream>

#include "tl/errors.hpp"

namespace tl {

namespace pt = boost::property_tree;

namespace {

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t");
  const auto e = s.find_last_not_of(" \t");
  return b == std::string::npos ? "" : s.substr(b, e - b + 1);
}

template <typename T>
T parse_value(const std::string& key, const std::string& text) {
  std::istringstream in(text);
  T v{};
  in >> v;
  std::string rest;
  if (in.fail() || (in >> rest)) throw ConfigError("invalid value for " + key + ": '" + text + "'");
  return v;
}

}  // namespace

Config Config::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

Config Config::parse(const std::string& text) {
  Config c;
  std::istringstream in(text);
  try {
    pt::read_ini(in, c.tree_);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError("config line " + std::to_string(e.line()) + ": " + e.message());
  }
  return c;
}

bool Config::has(const std::string& key) const { return tree_.get_optional<std::string>(key).has_value(); }

std::string Config::get(const std::string& key, const std::string& fallback) const {
  const auto v = tree_.get_optional<std::string>(key);
  return v ? trim(*v) : fallback;
}

std::string Config::require(const std::string& key) const {
  const auto v = tree_.get_optional<std::string>(key);
  if (!v || trim(*v).empty()) throw ConfigError("missing required key " + key);
  return trim(*v);
}

int Config::get_int(const std::string& key, int fallback) const {
  return has(key) ? parse_value<int>(key, get(key, "")) : fallback;
}

int64_t Config::get_int64(const std::string& key, int64_t fallback) const {
  return has(key) ? parse_value<int64_t>(key, get(key, "")) : fallback;
}

uint64_t Config::get_u64(const std::string& key, uint64_t fallback) const {
  if (!has(key)) return fallback;
  const std::string s = get(key, "");
  if (!s.empty() && s[0] == '-') throw ConfigError("invalid value for " + key + ": '" + s + "'");
  return parse_value<uint64_t>(key, s);
}

double Config::get_double(const std::string& key, double fallback) const {
  return has(key) ? parse_value<double>(key, get(key, "")) : fallback;
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  if (!has(key)) return fallback;
  const std::string s = get(key, "");
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw ConfigError("invalid boolean for " + key + ": '" + s + "'");
}

std::vector<std::string> Config::get_list(const std::string& key, std::vector<std::string> fallback) const {
  if (!has(key)) return fallback;
  std::vector<std::string> out;
  std::istringstream in(get(key, ""));
  std::string item;
  while (std::getline(in, item, ','))
    if (!trim(item).empty()) out.push_back(trim(item));
  return out;
}

std::vector<int> Config::get_int_list(const std::string& key, std::vector<int> fallback) const {
  if (!has(key)) return fallback;
  std::vector<int> out;
  for (const auto& s : get_list(key, {})) out.push_back(parse_value<int>(key, s));
  return out;
}

void Config::set(const std::string& key, const std::string& value) { tree_.put(key, value); }

std::string Config::to_string() const {
  std::ostringstream out;
  pt::write_ini(out, tree_);
  return out.str();
}

void Config::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << to_string();
}

namespace {

std::string join(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

std::string fmt(double v) {
  std::ostringstream o;
  o.precision(17);
  o << v;
  return o.str();
}

}  // namespace

CodecConfig read_codec_config(const Config& c, const std::string& s) {
  CodecConfig k;
  k.m = c.get_int(s + ".m", k.m);
  k.base_channels = c.get_int(s + ".base_channels", k.base_channels);
  k.channel_multipliers = c.get_int_list(s + ".channel_multipliers", k.channel_multipliers);
  k.num_res_blocks = c.get_int(s + ".num_res_blocks", k.num_res_blocks);
  k.norm_groups = c.get_int(s + ".norm_groups", k.norm_groups);
  const std::string norm = c.get(s + ".norm", "group");
  if (norm != "group" && norm != "none") throw ConfigError(s + ".norm must be group or none");
  k.norm = norm == "group" ? NormKind::group : NormKind::none;
  k.attention = c.get_bool(s + ".attention", k.attention);
  k.n_z = c.get_int(s + ".n_z", k.n_z);
  k.K = c.get_int(s + ".K", k.K);
  k.image_size = c.get_int(s + ".image_size", c.get_int("run.image_size", k.image_size));
  k.rec_loss_kind = parse_rec_loss_kind(c.get(s + ".rec_loss_kind", std::string(rec_loss_kind_name(k.rec_loss_kind))));
  k.beta = c.get_double(s + ".beta", k.beta);
  k.seed = c.get_u64(s + ".seed", c.get_u64("run.seed", k.seed));
  k.validate();
  return k;
}

void write_codec_config(Config& c, const CodecConfig& k, const std::string& s) {
  c.set(s + ".m", std::to_string(k.m));
  c.set(s + ".base_channels", std::to_string(k.base_channels));
  if (!k.channel_multipliers.empty()) c.set(s + ".channel_multipliers", join(k.channel_multipliers));
  c.set(s + ".num_res_blocks", std::to_string(k.num_res_blocks));
  c.set(s + ".norm_groups", std::to_string(k.norm_groups));
  c.set(s + ".norm", k.norm == NormKind::group ? "group" : "none");
  c.set(s + ".attention", k.attention ? "true" : "false");
  c.set(s + ".n_z", std::to_string(k.n_z));
  c.set(s + ".K", std::to_string(k.K));
  c.set(s + ".image_size", std::to_string(k.image_size));
  c.set(s + ".rec_loss_kind", std::string(rec_loss_kind_name(k.rec_loss_kind)));
  c.set(s + ".beta", fmt(k.beta));
  c.set(s + ".seed", std::to_string(k.seed));
}

DiscriminatorConfig read_disc_config(const Config& c, const std::string& s) {
  DiscriminatorConfig d;
  d.layers = c.get_int(s + ".layers", d.layers);
  d.base_channels = c.get_int(s + ".base_channels", d.base_channels);
  d.norm = c.get_bool(s + ".norm", d.norm);
  d.norm_groups = c.get_int(s + ".norm_groups", d.norm_groups);
  d.seed = c.get_u64(s + ".seed", c.get_u64("run.seed", 1) + 1);
  return d;
}

void write_disc_config(Config& c, const DiscriminatorConfig& d, const std::string& s) {
  c.set(s + ".layers", std::to_string(d.layers));
  c.set(s + ".base_channels", std::to_string(d.base_channels));
  c.set(s + ".norm", d.norm ? "true" : "false");
  c.set(s + ".norm_groups", std::to_string(d.norm_groups));
  c.set(s + ".seed", std::to_string(d.seed));
}

TransformerConfig read_transformer_config(const Config& c, const std::string& s) {
  TransformerConfig t;
  t.K = c.get_int(s + ".K", t.K);
  t.cond_vocab = c.get_int(s + ".cond_vocab", t.cond_vocab);
  t.num_classes = c.get_int(s + ".num_classes", t.num_classes);
  t.coord_buckets = c.get_int(s + ".coord_buckets", t.coord_buckets);
  t.seq_len = c.get_int(s + ".seq_len", t.seq_len);
  t.n_layers = c.get_int(s + ".n_layers", t.n_layers);
  t.n_heads = c.get_int(s + ".n_heads", t.n_heads);
  t.d_model = c.get_int(s + ".d_model", t.d_model);
  t.d_ff = c.get_int(s + ".d_ff", t.d_ff);
  t.dropout = c.get_double(s + ".dropout", t.dropout);
  t.seed = c.get_u64(s + ".seed", c.get_u64("run.seed", 1) + 2);
  return t;
}

void write_transformer_config(Config& c, const TransformerConfig& t, const std::string& s) {
  c.set(s + ".K", std::to_string(t.K));
  c.set(s + ".cond_vocab", std::to_string(t.cond_vocab));
  c.set(s + ".num_classes", std::to_string(t.num_classes));
  c.set(s + ".coord_buckets", std::to_string(t.coord_buckets));
  c.set(s + ".seq_len", std::to_string(t.seq_len));
  c.set(s + ".n_layers", std::to_string(t.n_layers));
  c.set(s + ".n_heads", std::to_string(t.n_heads));
  c.set(s + ".d_model", std::to_string(t.d_model));
  c.set(s + ".d_ff", std::to_string(t.d_ff));
  c.set(s + ".dropout", fmt(t.dropout));
  c.set(s + ".seed", std::to_string(t.seed));
}

AdamConfig read_adam_config(const Config& c, const std::string& s, const AdamConfig& defaults) {
  const std::string kind = c.get(s + ".kind", "adam");
  if (kind != "adam") throw ConfigError(s + ".kind: only adam is supported");
  AdamConfig a = defaults;
  a.lr = c.get_double(s + ".lr", a.lr);
  a.beta1 = c.get_double(s + ".beta1", a.beta1);
  a.beta2 = c.get_double(s + ".beta2", a.beta2);
  a.eps = c.get_double(s + ".eps", a.eps);
  if (!(a.lr > 0) || a.beta1 < 0 || a.beta1 >= 1 || a.beta2 < 0 || a.beta2 >= 1 || !(a.eps > 0))
    throw ConfigError(s + ": learning rate must be positive and betas in [0, 1)");
  return a;
}

ExperimentConfig read_experiment(const Config& c) {
  ExperimentConfig e;
  e.raw = c;
  auto& r = e.run;
  r.task = c.get("run.task", "");
  r.seed = c.get_u64("run.seed", r.seed);
  r.out_dir = c.get("run.out_dir", r.out_dir.string());
  r.dataset = c.get("run.dataset", "synthetic:64");
  if (c.has("run.cond_dir")) r.cond_dir = c.get("run.cond_dir", "");
  r.image_size = c.get_int64("run.image_size", r.image_size);
  r.steps = c.get_int64("run.steps", r.steps);
  r.batch_size = c.get_int64("run.batch_size", r.batch_size);
  r.log_every = c.get_int64("run.log_every", r.log_every);
  r.eval_every = c.get_int64("run.eval_every", r.eval_every);
  r.checkpoint_every = c.get_int64("run.checkpoint_every", r.checkpoint_every);
  r.max_images = c.get_int64("run.max_images", r.max_images);
  r.data_seed = c.get_u64("run.data_seed", r.data_seed);
  r.train_on_cond = c.get_bool("run.train_on_cond", r.train_on_cond);
  if (r.steps < 0 || r.batch_size < 1 || r.log_every < 1 || r.eval_every < 1 || r.checkpoint_every < 1)
    throw ConfigError("run: steps ≥ 0, batch_size/log_every/eval_every/checkpoint_every ≥ 1");

  e.codec = read_codec_config(c);
  e.disc = read_disc_config(c);
  e.gan.disc_start = c.get_int64("disc.disc_start", e.gan.disc_start);
  e.gan.disc_weight = c.get_double("disc.disc_weight", e.gan.disc_weight);
  const std::string gl = c.get("disc.generator_loss", "non_saturating");
  if (gl != "non_saturating" && gl != "saturating") throw ConfigError("disc.generator_loss must be non_saturating or saturating");
  e.gan.generator_loss = gl == "saturating" ? GeneratorLoss::saturating : GeneratorLoss::non_saturating;
  e.gan.g_adam = read_adam_config(c, "optim", AdamConfig{1e-4, 0.9, 0.999, 1e-8});
  e.gan.d_adam = read_adam_config(c, "disc_optim", e.gan.g_adam);

  auto& t = e.transformer;
  t.model = read_transformer_config(c);
  t.order = parse_scan_kind(c.get("transformer.scan_order", "row_major"));
  const std::string cond = c.get("transformer.conditioning", "none");
  if (cond == "none") t.conditioning = Conditioning::none;
  else if (cond == "class") t.conditioning = Conditioning::klass;
  else if (cond == "spatial") t.conditioning = Conditioning::spatial;
  else throw ConfigError("transformer.conditioning must be none, class or spatial");
  t.coords = c.get_bool("transformer.coords", t.coords);
  t.window = c.get_int64("transformer.window", t.window);
  t.eval_images = c.get_int64("transformer.eval_images", t.eval_images);
  t.holdout = c.get_int64("transformer.holdout", t.holdout);
  if (t.holdout < 0) throw ConfigError("transformer.holdout must be non-negative");
  t.explicit_K = c.has("transformer.K");
  t.explicit_seq_len = c.has("transformer.seq_len");
  t.shuffle_pairing = c.get_bool("transformer.shuffle_pairing", t.shuffle_pairing);
  if (t.window < 1 || t.eval_images < 1) throw ConfigError("transformer.window and transformer.eval_images must be positive");
  e.transformer_adam = read_adam_config(c, "transformer_optim", AdamConfig{3e-4, 0.9, 0.95, 1e-8});

  auto path_opt = [&](const std::string& key) -> std::optional<std::filesystem::path> {
    if (!c.has(key)) return std::nullopt;
    return std::filesystem::path(c.get(key, ""));
  };
  e.checkpoints.codec = path_opt("checkpoints.codec");
  e.checkpoints.disc = path_opt("checkpoints.disc");
  e.checkpoints.cond_codec = path_opt("checkpoints.cond_codec");
  e.checkpoints.transformer = path_opt("checkpoints.transformer");
  e.checkpoints.palette = path_opt("checkpoints.palette");

  auto& s = e.sample;
  s.width = c.get_int64("sample.width", s.width);
  s.height = c.get_int64("sample.height", s.height);
  s.in_pixels = c.get_bool("sample.in_pixels", s.in_pixels);
  s.count = c.get_int64("sample.count", s.count);
  if (s.width < 0 || s.height < 0 || s.count < 1) throw ConfigError("sample: width/height must be >= 0 and count >= 1");
  s.params.temperature = c.get_double("sample.temperature", s.params.temperature);
  s.params.top_k = c.get_int("sample.top_k", s.params.top_k);
  s.params.seed = c.get_u64("sample.seed", r.seed);
  if (c.has("sample.scan_order")) s.order = parse_scan_kind(c.get("sample.scan_order", ""));
  s.coords = c.get_bool("sample.coords", t.coords);

  auto& st = e.study;
  st.f_m_values = c.get_int_list("study.f_m_values", st.f_m_values);
  for (const auto& name : c.get_list("study.orders", {})) st.orders.push_back(parse_scan_kind(name));
  if (st.orders.empty()) st.orders = all_scan_kinds();
  st.codec_steps = c.get_int64("study.codec_steps", st.codec_steps);
  st.transformer_steps = c.get_int64("study.transformer_steps", st.transformer_steps);
  st.eval_every = c.get_int64("study.eval_every", st.eval_every);
  st.speed_repeats = c.get_int64("study.speed_repeats", st.speed_repeats);

  e.kmeans.k = c.get_int("kmeans.k", e.kmeans.k);
  e.kmeans.iterations = c.get_int("kmeans.iterations", e.kmeans.iterations);
  e.kmeans.max_pixels = c.get_int64("kmeans.max_pixels", e.kmeans.max_pixels);
  e.reseed_every = c.get_int64("codec.reseed_every", 0);
  if (e.kmeans.k < 1 || e.kmeans.iterations < 1) throw ConfigError("kmeans.k and kmeans.iterations must be positive");
  return e;
}

}  // namespace tl
