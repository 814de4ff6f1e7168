#pragma once

#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "tl/nn.hpp"
#include "tl/scan_order.hpp"

namespace tl {

// Vocabulary layout, in order: data codes [0, K), spatial condition codes,
// class tokens, coordinate-row tokens, coordinate-column tokens, BOS.
struct TransformerConfig {
  int K = 1024;
  int cond_vocab = 0;
  int num_classes = 0;
  int coord_buckets = 32;
  int seq_len = 257;
  int n_layers = 8;
  int n_heads = 8;
  int d_model = 256;
  int d_ff = 1024;
  double dropout = 0.0;
  uint64_t seed = 3;

  void validate() const;
  int cond_offset() const { return K; }
  int class_offset() const { return K + cond_vocab; }
  int coord_row_offset() const { return class_offset() + num_classes; }
  int coord_col_offset() const { return coord_row_offset() + coord_buckets; }
  int bos() const { return coord_col_offset() + coord_buckets; }
  int vocab_size() const { return bos() + 1; }
};

// Condition prefix followed by data tokens. prefix_len ≥ 1 always: an empty
// condition is replaced by BOS.
struct TokenSequence {
  std::vector<int> tokens;
  int64_t prefix_len = 0;
  int64_t h = 0, w = 0;
  ScanKind order = ScanKind::row_major;

  int64_t data_len() const { return static_cast<int64_t>(tokens.size()) - prefix_len; }
  bool is_data(int64_t i) const { return i >= prefix_len; }
  std::span<const int> data() const { return std::span(tokens).subspan(static_cast<std::size_t>(prefix_len)); }
};

// Optional condition pieces for a sequence. All present parts are concatenated
// in the order: coordinates, spatial condition, class.
struct Condition {
  std::optional<int> class_label;
  std::optional<IndexGrid> spatial;
  std::optional<std::pair<int, int>> coords;  // bucketed (row, col)
};

std::vector<int> condition_prefix(const Condition& cond, const ScanOrder& order, const TransformerConfig& cfg);
TokenSequence make_sequence(const Condition& cond, const IndexGrid& data, const ScanOrder& order,
                            const TransformerConfig& cfg);

// Bucket of a window offset in [0, span) among `buckets` equal bins.
int coord_bucket(int64_t offset, int64_t span, int buckets);

// Text form: prefix tokens, "|", data tokens on one line.
void write_sequence(std::ostream& out, const TokenSequence& seq);

class Transformer {
 public:
  explicit Transformer(const TransformerConfig& cfg);

  const TransformerConfig& config() const { return cfg_; }

  // tokens: batch sequences of equal length N, row-stacked. Returns
  // [batch·N × K] data logits; row i predicts token i+1. Dropout draws from
  // rng when given and the rate is positive.
  Tensor forward(std::span<const int> tokens, int batch, Rng* rng = nullptr) const;
  Tensor forward(const TokenSequence& seq) const { return forward(seq.tokens, 1); }

  // Mean over data positions of −log p(token | earlier tokens).
  Tensor nll(const TokenSequence& seq) const;
  // Mean over every data position of every sequence (equal lengths required).
  Tensor nll(std::span<const TokenSequence> seqs, Rng* rng = nullptr) const;

  nn::ParamList params() const;

  // Incremental decoding with a key/value cache. Produces logits that are
  // bit-identical to the corresponding rows of forward().
  class Decoder {
   public:
    explicit Decoder(const Transformer& model);
    // Appends a token; returns the K data logits for the next position.
    std::vector<double> push(int token);
    int64_t length() const { return n_; }

   private:
    const Transformer& model_;
    std::vector<std::vector<double>> keys_, values_;  // per layer, n × d_model
    int64_t n_ = 0;
  };

 private:
  struct Block {
    nn::LayerNorm ln1, ln2;
    nn::Linear wq, wk, wv, wo, fc1, fc2;
  };

  Tensor final_logits(const Tensor& x) const;

  TransformerConfig cfg_;
  Tensor tok_emb_, pos_emb_;
  std::vector<Block> blocks_;
  nn::LayerNorm ln_f_;
  nn::Linear head_;
};

}  // namespace tl
