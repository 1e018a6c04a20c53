#pragma once

#include <map>
#include <string>

#include "restyle/tape.hpp"

namespace restyle::nn {

struct TransformerConfig {
  int layers = 4;
  int heads = 4;
  int model_dim = 128;
  int ff_dim = 256;
  int max_len = 64;
  double dropout = 0.0;

  int head_dim() const { return model_dim / heads; }
  void validate() const;
};

/// First-position attention rows, one per (layer, head); each row is a
/// probability vector over all input positions.
struct AttentionStack {
  std::vector<std::vector<Eigen::VectorXd>> rows;  // [layer][head]
};

struct MhaParams {
  Param *wq, *wk, *wv, *wo;
};
struct LayerNormParams {
  Param *gain, *bias;
};
struct FeedForwardParams {
  Param *w1, *b1, *w2, *b2;
};
struct EncoderLayerParams {
  LayerNormParams ln1;
  MhaParams attn;
  LayerNormParams ln2;
  FeedForwardParams ff;
};
struct DecoderLayerParams {
  LayerNormParams ln1;
  MhaParams self_attn;
  LayerNormParams ln2;
  MhaParams cross_attn;
  LayerNormParams ln3;
  FeedForwardParams ff;
};
struct EncoderParams {
  std::vector<EncoderLayerParams> layers;
  LayerNormParams ln_out;
};
struct DecoderParams {
  std::vector<DecoderLayerParams> layers;
  LayerNormParams ln_out;
};

EncoderParams register_encoder(ParamStore& store, const TransformerConfig& cfg,
                               const std::string& prefix);
DecoderParams register_decoder(ParamStore& store, const TransformerConfig& cfg,
                               const std::string& prefix);

// Fan-in uniform init for weights, ones for layer-norm gains, zeros for all
// biases; a pure function of (registration order, seed).
void init_transformer_params(ParamStore& store, std::uint64_t seed);

Mat sinusoidal_positions(int len, int dim);

/// Per-forward context: the tape plus dropout state. Inference passes use a
/// grad-free tape and train=false.
struct RunCtx {
  Tape& tape;
  bool train = false;
  double dropout = 0.0;
  std::mt19937_64* rng = nullptr;
};

using BoolGrid = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

Node* multi_head_attention(RunCtx& ctx, const MhaParams& w, int heads, Node* x_q, Node* x_kv,
                           const BoolGrid* allowed,
                           std::vector<Eigen::VectorXd>* record_first_rows);

// Token embedding scaled by sqrt(model_dim), plus sinusoidal positions.
Node* embed_sequence(RunCtx& ctx, Param& table, const std::vector<int>& ids, int model_dim);

struct EncodeResult {
  Node* hidden;
  AttentionStack attn;
};

// Full encoder pass. `pad_mask[i]` marks PAD at position i; masked positions
// receive zero attention mass everywhere. Errors on over-length input.
EncodeResult transformer_encode(RunCtx& ctx, Param& embedding, const EncoderParams& enc,
                                const TransformerConfig& cfg, const std::vector<int>& ids,
                                const std::vector<bool>& pad_mask, bool record_attention);

// Causally masked decoder pass over a prefix, cross-attending enc_hidden.
Node* transformer_decode(RunCtx& ctx, Param& embedding, const DecoderParams& dec,
                         const TransformerConfig& cfg, const std::vector<int>& prefix_ids,
                         Node* enc_hidden, const std::vector<bool>& enc_pad_mask);

/// Flat container of named double matrices with string metadata; the
/// checkpoint wire format. Round-trips bit-exactly.
struct TensorFile {
  std::map<std::string, std::string> meta;
  std::vector<std::pair<std::string, Mat>> tensors;

  void save(const std::string& path) const;
  static TensorFile load(const std::string& path);

  void put_store(const ParamStore& store, const std::string& prefix = "");
  // loads values into an already-registered store; every param must be present
  void get_store(ParamStore& store, const std::string& prefix = "") const;
};

}  // namespace restyle::nn
