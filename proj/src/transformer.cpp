#include "tl/transformer.hpp"

#include <numeric>
#include <ostream>

#include "tl/errors.hpp"

namespace tl {

void TransformerConfig::validate() const {
  if (K < 1 || cond_vocab < 0 || num_classes < 0 || coord_buckets < 0) throw ConfigError("transformer vocab sizes invalid");
  if (seq_len < 2 || n_layers < 1 || n_heads < 1 || d_model < 1 || d_ff < 1)
    throw ConfigError("transformer sizes must be positive (seq_len ≥ 2)");
  if (d_model % n_heads != 0)
    throw ConfigError("d_model " + std::to_string(d_model) + " is not divisible by n_heads " + std::to_string(n_heads));
  if (dropout < 0 || dropout >= 1) throw ConfigError("dropout must be in [0, 1)");
}

int coord_bucket(int64_t offset, int64_t span, int buckets) {
  if (span < 1 || offset < 0 || offset >= span) throw ContractError("coord_bucket: offset outside span");
  return static_cast<int>(offset * buckets / span);
}

std::vector<int> condition_prefix(const Condition& cond, const ScanOrder& order, const TransformerConfig& cfg) {
  std::vector<int> p;
  if (cond.coords) {
    const auto [r, c] = *cond.coords;
    if (r < 0 || r >= cfg.coord_buckets || c < 0 || c >= cfg.coord_buckets)
      throw ConfigError("coordinate bucket outside the reserved coordinate vocabulary");
    p.push_back(cfg.coord_row_offset() + r);
    p.push_back(cfg.coord_col_offset() + c);
  }
  if (cond.spatial) {
    const ScanOrder co = ScanOrder::build(order.kind(), cond.spatial->h, cond.spatial->w);
    for (int v : flatten(*cond.spatial, co)) {
      if (v < 0 || v >= cfg.cond_vocab)
        throw ConfigError("condition index " + std::to_string(v) + " overflows condition vocabulary " +
                          std::to_string(cfg.cond_vocab));
      p.push_back(cfg.cond_offset() + v);
    }
  }
  if (cond.class_label) {
    if (*cond.class_label < 0 || *cond.class_label >= cfg.num_classes)
      throw ConfigError("class label " + std::to_string(*cond.class_label) + " outside " + std::to_string(cfg.num_classes) +
                        " classes");
    p.push_back(cfg.class_offset() + *cond.class_label);
  }
  if (p.empty()) p.push_back(cfg.bos());
  return p;
}

TokenSequence make_sequence(const Condition& cond, const IndexGrid& data, const ScanOrder& order,
                            const TransformerConfig& cfg) {
  TokenSequence s;
  s.tokens = condition_prefix(cond, order, cfg);
  s.prefix_len = static_cast<int64_t>(s.tokens.size());
  s.h = data.h;
  s.w = data.w;
  s.order = order.kind();
  for (int v : flatten(data, order)) {
    if (v < 0 || v >= cfg.K) throw ConfigError("data index " + std::to_string(v) + " outside codebook of size " + std::to_string(cfg.K));
    s.tokens.push_back(v);
  }
  return s;
}

void write_sequence(std::ostream& out, const TokenSequence& seq) {
  for (int64_t i = 0; i < static_cast<int64_t>(seq.tokens.size()); ++i) {
    if (i == seq.prefix_len) out << "| ";
    out << seq.tokens[static_cast<std::size_t>(i)] << (i + 1 < static_cast<int64_t>(seq.tokens.size()) ? " " : "");
  }
  out << '\n';
}

Transformer::Transformer(const TransformerConfig& cfg) : cfg_(cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  const int d = cfg.d_model;
  tok_emb_ = nn::normal_param({cfg.vocab_size(), d}, 0.02, rng);
  pos_emb_ = nn::normal_param({cfg.seq_len, d}, 0.02, rng);
  for (int l = 0; l < cfg.n_layers; ++l) {
    Block b{nn::LayerNorm(d), nn::LayerNorm(d), nn::Linear(d, d, rng), nn::Linear(d, d, rng), nn::Linear(d, d, rng),
            nn::Linear(d, d, rng), nn::Linear(d, cfg.d_ff, rng), nn::Linear(cfg.d_ff, d, rng)};
    blocks_.push_back(std::move(b));
  }
  ln_f_ = nn::LayerNorm(d);
  // Zero head: an untrained model predicts the uniform distribution over codes.
  head_.weight = nn::constant_param({d, cfg.K}, 0.0);
  head_.bias = nn::constant_param({cfg.K}, 0.0);
}

Tensor Transformer::final_logits(const Tensor& x) const { return head_(ln_f_(x)); }

Tensor Transformer::forward(std::span<const int> tokens, int batch, Rng* rng) const {
  if (batch < 1 || tokens.size() % static_cast<std::size_t>(batch) != 0)
    throw ContractError("forward: token count not divisible by batch");
  const int64_t N = static_cast<int64_t>(tokens.size()) / batch;
  if (N < 1 || N > cfg_.seq_len)
    throw ContractError("forward: sequence length " + std::to_string(N) + " exceeds context " + std::to_string(cfg_.seq_len));
  for (int t : tokens)
    if (t < 0 || t >= cfg_.vocab_size()) throw ContractError("forward: token " + std::to_string(t) + " outside vocabulary");

  std::vector<int> pos(tokens.size());
  for (std::size_t i = 0; i < pos.size(); ++i) pos[i] = static_cast<int>(static_cast<int64_t>(i) % N);
  const bool drop = rng != nullptr && cfg_.dropout > 0;
  auto maybe_drop = [&](const Tensor& t) { return drop ? dropout(t, cfg_.dropout, *rng) : t; };

  Tensor x = maybe_drop(add(embedding(tokens, tok_emb_), embedding(pos, pos_emb_)));
  for (const Block& b : blocks_) {
    const Tensor h = b.ln1(x);
    const Tensor a = attention(b.wq(h), b.wk(h), b.wv(h), batch, cfg_.n_heads, true);
    x = add(x, maybe_drop(b.wo(a)));
    x = add(x, maybe_drop(b.fc2(gelu(b.fc1(b.ln2(x))))));
  }
  return final_logits(x);
}

namespace {

// Row i of the logits predicts token i+1; only data positions count.
std::vector<int> shifted_targets(const TokenSequence& s) {
  std::vector<int> t(s.tokens.size(), -1);
  for (std::size_t i = 0; i + 1 < s.tokens.size(); ++i)
    if (s.is_data(static_cast<int64_t>(i) + 1)) t[i] = s.tokens[i + 1];
  return t;
}

}  // namespace

Tensor Transformer::nll(const TokenSequence& seq) const { return nll(std::span(&seq, 1)); }

Tensor Transformer::nll(std::span<const TokenSequence> seqs, Rng* rng) const {
  if (seqs.empty()) throw ContractError("nll: no sequences");
  std::vector<int> tokens, targets;
  const std::size_t N = seqs[0].tokens.size();
  for (const TokenSequence& s : seqs) {
    if (s.tokens.size() != N) throw ContractError("nll: batched sequences must share a length");
    if (s.data_len() < 1) throw ContractError("nll: sequence has no data tokens");
    tokens.insert(tokens.end(), s.tokens.begin(), s.tokens.end());
    const auto t = shifted_targets(s);
    targets.insert(targets.end(), t.begin(), t.end());
  }
  return cross_entropy(forward(tokens, static_cast<int>(seqs.size()), rng), targets);
}

nn::ParamList Transformer::params() const {
  nn::ParamList out{{"tok_emb", tok_emb_}, {"pos_emb", pos_emb_}};
  for (std::size_t l = 0; l < blocks_.size(); ++l) {
    const Block& b = blocks_[l];
    const std::string p = "block" + std::to_string(l) + ".";
    b.ln1.collect(out, p + "ln1.");
    b.wq.collect(out, p + "wq.");
    b.wk.collect(out, p + "wk.");
    b.wv.collect(out, p + "wv.");
    b.wo.collect(out, p + "wo.");
    b.ln2.collect(out, p + "ln2.");
    b.fc1.collect(out, p + "fc1.");
    b.fc2.collect(out, p + "fc2.");
  }
  ln_f_.collect(out, "ln_f.");
  head_.collect(out, "head.");
  return out;
}

Transformer::Decoder::Decoder(const Transformer& model)
    : model_(model), keys_(model.blocks_.size()), values_(model.blocks_.size()) {}

std::vector<double> Transformer::Decoder::push(int token) {
  const auto& cfg = model_.cfg_;
  if (n_ >= cfg.seq_len) throw ContractError("decoder: context of " + std::to_string(cfg.seq_len) + " tokens is full");
  if (token < 0 || token >= cfg.vocab_size()) throw ContractError("decoder: token outside vocabulary");
  autograd::NoGradGuard ng;
  const int64_t d = cfg.d_model, heads = cfg.n_heads, dk = d / heads;
  const int tok[1] = {token};
  const int pos[1] = {static_cast<int>(n_)};
  Tensor x = add(embedding(tok, model_.tok_emb_), embedding(pos, model_.pos_emb_));
  std::vector<double> weights(static_cast<std::size_t>(n_ + 1)), att(static_cast<std::size_t>(d));
  for (std::size_t l = 0; l < model_.blocks_.size(); ++l) {
    const Block& b = model_.blocks_[l];
    const Tensor h = b.ln1(x);
    const Tensor q = b.wq(h), k = b.wk(h), v = b.wv(h);
    keys_[l].insert(keys_[l].end(), k.data().begin(), k.data().end());
    values_[l].insert(values_[l].end(), v.data().begin(), v.data().end());
    for (int64_t hd = 0; hd < heads; ++hd)
      detail::attend_row(q.data().data() + hd * dk, keys_[l].data() + hd * dk, values_[l].data() + hd * dk, n_ + 1, dk,
                         dk, d, d, weights.data(), att.data() + hd * dk);
    x = add(x, b.wo(Tensor::from({1, d}, att)));
    x = add(x, b.fc2(gelu(b.fc1(b.ln2(x)))));
  }
  ++n_;
  const Tensor logits = model_.final_logits(x);
  return {logits.data().begin(), logits.data().end()};
}

}  // namespace tl
