#pragma once

#include <optional>
#include <random>

#include "restyle/textcore.hpp"
#include "restyle/transformer.hpp"

namespace restyle {

enum class DecodeMode { Greedy = 0, Beam = 1, Sample = 2 };
const char* decode_mode_name(DecodeMode m);
DecodeMode decode_mode_from_name(const std::string& name);

struct DecodeConfig {
  DecodeMode mode = DecodeMode::Greedy;
  int beam_size = 6;
  double temperature = 1.0;
  // <= 0 means input length + 8
  int max_decode_len = 0;

  void validate() const;
  int effective_max_len(int input_len) const {
    return max_decode_len > 0 ? max_decode_len : input_len + 8;
  }
};

/// The bidirectional transfer model: transformer encoder-decoder over a
/// shared embedding, conditioned by a style control token prepended to the
/// encoder input. One parameter set serves both directions.
class GeneratorParams {
 public:
  GeneratorParams(const nn::TransformerConfig& cfg, int vocab_size, std::uint64_t seed);

  const nn::TransformerConfig& config() const { return cfg_; }
  int vocab_size() const { return vocab_size_; }
  nn::ParamStore& store() { return store_; }
  const nn::ParamStore& store() const { return store_; }

  // Encoder forward over [STYLE_c] + x; returns hidden states.
  nn::Node* encode_source(nn::RunCtx& ctx, const Sentence& x, StyleLabel c) const;

  // Decoder logits (rows = prefix positions) for BOS + y_prefix given the
  // encoded source.
  nn::Node* prefix_logits(nn::RunCtx& ctx, nn::Node* enc_hidden,
                          const std::vector<int>& y_prefix) const;

  void save(const std::string& path) const;
  static GeneratorParams load_file(const std::string& path);

 private:
  nn::TransformerConfig cfg_;
  int vocab_size_;
  nn::ParamStore store_;
  nn::Param* embedding_;
  nn::Param* out_proj_;
  nn::EncoderParams enc_;
  nn::DecoderParams dec_;
};

// Next-token distribution P(. | y_prefix, x, c): a probability vector over V.
Eigen::VectorXd gen_forward(const GeneratorParams& gen, const Sentence& x, StyleLabel c,
                            const std::vector<int>& y_prefix);

struct MlePair {
  const Sentence* x;
  const Sentence* y;
  StyleLabel c;  // style of y, the direction control
};

// Teacher-forced label-smoothed cross entropy, averaged over every target
// token in the batch; gradients accumulate into the store.
double mle_loss(GeneratorParams& gen, const std::vector<MlePair>& batch, double smoothing = 0.15,
                bool accumulate_grads = true);

struct DecodeResult {
  Sentence output;
  std::vector<double> step_log_probs;  // one per emitted token
  bool degenerate = false;             // EOS-first: empty output
};

DecodeResult decode(const GeneratorParams& gen, const Sentence& x, StyleLabel c,
                    const DecodeConfig& cfg, std::mt19937_64* rng = nullptr);

// Teacher-forced log-probabilities of an already-produced output; matches
// DecodeResult::step_log_probs for the same (x, c, y).
std::vector<double> rescore_log_probs(const GeneratorParams& gen, const Sentence& x, StyleLabel c,
                                      const Sentence& y);

}  // namespace restyle
