#include "restyle/transformer.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "restyle/common.hpp"

namespace restyle::nn {

void TransformerConfig::validate() const {
  check(layers >= 1, "transformer config: layers must be >= 1");
  check(heads >= 1, "transformer config: heads must be >= 1");
  check(model_dim % heads == 0, "transformer config: model_dim must be divisible by heads");
  check(ff_dim >= 1, "transformer config: ff_dim must be >= 1");
  check(max_len >= 4, "transformer config: max_len too small");
  check(dropout >= 0.0 && dropout < 1.0, "transformer config: dropout must be in [0,1)");
}

namespace {

MhaParams register_mha(ParamStore& s, int d, const std::string& p) {
  return {&s.add(p + ".wq", d, d), &s.add(p + ".wk", d, d), &s.add(p + ".wv", d, d),
          &s.add(p + ".wo", d, d)};
}

LayerNormParams register_ln(ParamStore& s, int d, const std::string& p) {
  return {&s.add(p + ".g", 1, d), &s.add(p + ".b", 1, d)};
}

FeedForwardParams register_ff(ParamStore& s, int d, int f, const std::string& p) {
  return {&s.add(p + ".w1", d, f), &s.add(p + ".b1", 1, f), &s.add(p + ".w2", f, d),
          &s.add(p + ".b2", 1, d)};
}

}  // namespace

EncoderParams register_encoder(ParamStore& store, const TransformerConfig& cfg,
                               const std::string& prefix) {
  cfg.validate();
  EncoderParams enc;
  for (int l = 0; l < cfg.layers; ++l) {
    std::string p = prefix + ".l" + std::to_string(l);
    EncoderLayerParams layer;
    layer.ln1 = register_ln(store, cfg.model_dim, p + ".ln1");
    layer.attn = register_mha(store, cfg.model_dim, p + ".attn");
    layer.ln2 = register_ln(store, cfg.model_dim, p + ".ln2");
    layer.ff = register_ff(store, cfg.model_dim, cfg.ff_dim, p + ".ff");
    enc.layers.push_back(layer);
  }
  enc.ln_out = register_ln(store, cfg.model_dim, prefix + ".ln_out");
  return enc;
}

DecoderParams register_decoder(ParamStore& store, const TransformerConfig& cfg,
                               const std::string& prefix) {
  cfg.validate();
  DecoderParams dec;
  for (int l = 0; l < cfg.layers; ++l) {
    std::string p = prefix + ".l" + std::to_string(l);
    DecoderLayerParams layer;
    layer.ln1 = register_ln(store, cfg.model_dim, p + ".ln1");
    layer.self_attn = register_mha(store, cfg.model_dim, p + ".self");
    layer.ln2 = register_ln(store, cfg.model_dim, p + ".ln2");
    layer.cross_attn = register_mha(store, cfg.model_dim, p + ".cross");
    layer.ln3 = register_ln(store, cfg.model_dim, p + ".ln3");
    layer.ff = register_ff(store, cfg.model_dim, cfg.ff_dim, p + ".ff");
    dec.layers.push_back(layer);
  }
  dec.ln_out = register_ln(store, cfg.model_dim, prefix + ".ln_out");
  return dec;
}

void init_transformer_params(ParamStore& store, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto ends_with = [](const std::string& s, const std::string& suf) {
    return s.size() >= suf.size() && s.compare(s.size() - suf.size(), suf.size(), suf) == 0;
  };
  for (auto& p : store.all()) {
    if (ends_with(p->name, ".g")) {
      p->value.setOnes();
    } else if (ends_with(p->name, ".b") || ends_with(p->name, ".b1") || ends_with(p->name, ".b2")) {
      p->value.setZero();
    } else {
      double bound = 1.0 / std::sqrt(static_cast<double>(p->value.rows()));
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (long i = 0; i < p->value.size(); ++i) p->value.data()[i] = dist(rng);
    }
  }
}

Mat sinusoidal_positions(int len, int dim) {
  Mat pos(len, dim);
  for (int p = 0; p < len; ++p) {
    for (int i = 0; i < dim; i += 2) {
      double rate = std::pow(10000.0, -static_cast<double>(i) / dim);
      pos(p, i) = std::sin(p * rate);
      if (i + 1 < dim) pos(p, i + 1) = std::cos(p * rate);
    }
  }
  return pos;
}

Node* multi_head_attention(RunCtx& ctx, const MhaParams& w, int heads, Node* x_q, Node* x_kv,
                           const BoolGrid* allowed,
                           std::vector<Eigen::VectorXd>* record_first_rows) {
  Tape& t = ctx.tape;
  const int d = x_q->cols();
  const int dh = d / heads;
  Node* q = matmul(t, x_q, leaf(t, *w.wq));
  Node* k = matmul(t, x_kv, leaf(t, *w.wk));
  Node* v = matmul(t, x_kv, leaf(t, *w.wv));

  std::vector<Node*> head_outs;
  head_outs.reserve(heads);
  for (int h = 0; h < heads; ++h) {
    Node* qh = slice_cols(t, q, h * dh, dh);
    Node* kh = slice_cols(t, k, h * dh, dh);
    Node* vh = slice_cols(t, v, h * dh, dh);
    Node* scores = scale(t, matmul_nt(t, qh, kh), 1.0 / std::sqrt(static_cast<double>(dh)));
    Node* probs = softmax_rows(t, scores, allowed);
    if (record_first_rows) record_first_rows->push_back(probs->value().row(0).transpose());
    head_outs.push_back(matmul(t, probs, vh));
  }
  Node* merged = heads == 1 ? head_outs[0] : concat_cols(t, head_outs);
  return matmul(t, merged, leaf(t, *w.wo));
}

Node* embed_sequence(RunCtx& ctx, Param& table, const std::vector<int>& ids, int model_dim) {
  Tape& t = ctx.tape;
  Node* emb = scale(t, embedding_rows(t, leaf(t, table), ids),
                    std::sqrt(static_cast<double>(model_dim)));
  Node* pos = constant(t, sinusoidal_positions(static_cast<int>(ids.size()), model_dim));
  return add(t, emb, pos);
}

namespace {

Node* feed_forward(RunCtx& ctx, const FeedForwardParams& ff, Node* x) {
  Tape& t = ctx.tape;
  Node* h = gelu(t, add_rowvec(t, matmul(t, x, leaf(t, *ff.w1)), leaf(t, *ff.b1)));
  return add_rowvec(t, matmul(t, h, leaf(t, *ff.w2)), leaf(t, *ff.b2));
}

Node* maybe_dropout(RunCtx& ctx, Node* x) {
  if (ctx.train && ctx.dropout > 0.0) {
    check(ctx.rng != nullptr, "dropout requires an rng in train mode");
    return dropout(ctx.tape, x, ctx.dropout, *ctx.rng);
  }
  return x;
}

}  // namespace

EncodeResult transformer_encode(RunCtx& ctx, Param& embedding, const EncoderParams& enc,
                                const TransformerConfig& cfg, const std::vector<int>& ids,
                                const std::vector<bool>& pad_mask, bool record_attention) {
  const int len = static_cast<int>(ids.size());
  check(len >= 1, "transformer_encode: empty input");
  check(len <= cfg.max_len,
        "transformer_encode: input length " + std::to_string(len) + " exceeds max_len " +
            std::to_string(cfg.max_len));
  check(pad_mask.empty() || static_cast<int>(pad_mask.size()) == len,
        "transformer_encode: mask length mismatch");

  BoolGrid allowed;
  const BoolGrid* allowed_ptr = nullptr;
  if (!pad_mask.empty()) {
    allowed.resize(len, len);
    for (int i = 0; i < len; ++i)
      for (int j = 0; j < len; ++j) allowed(i, j) = !pad_mask[j];
    allowed_ptr = &allowed;
  }

  Tape& t = ctx.tape;
  Node* x = embed_sequence(ctx, embedding, ids, cfg.model_dim);
  EncodeResult out;
  for (const auto& layer : enc.layers) {
    std::vector<Eigen::VectorXd> first_rows;
    Node* a = layer_norm(t, x, leaf(t, *layer.ln1.gain), leaf(t, *layer.ln1.bias));
    Node* h = multi_head_attention(ctx, layer.attn, cfg.heads, a, a, allowed_ptr,
                                   record_attention ? &first_rows : nullptr);
    x = add(t, x, maybe_dropout(ctx, h));
    Node* f = layer_norm(t, x, leaf(t, *layer.ln2.gain), leaf(t, *layer.ln2.bias));
    x = add(t, x, maybe_dropout(ctx, feed_forward(ctx, layer.ff, f)));
    if (record_attention) out.attn.rows.push_back(std::move(first_rows));
  }
  out.hidden = layer_norm(t, x, leaf(t, *enc.ln_out.gain), leaf(t, *enc.ln_out.bias));
  return out;
}

Node* transformer_decode(RunCtx& ctx, Param& embedding, const DecoderParams& dec,
                         const TransformerConfig& cfg, const std::vector<int>& prefix_ids,
                         Node* enc_hidden, const std::vector<bool>& enc_pad_mask) {
  const int len = static_cast<int>(prefix_ids.size());
  const int enc_len = enc_hidden->rows();
  check(len >= 1, "transformer_decode: empty prefix");
  check(len <= cfg.max_len, "transformer_decode: prefix length " + std::to_string(len) +
                                " exceeds max_len " + std::to_string(cfg.max_len));

  BoolGrid causal(len, len);
  for (int i = 0; i < len; ++i)
    for (int j = 0; j < len; ++j) causal(i, j) = j <= i;

  BoolGrid cross;
  const BoolGrid* cross_ptr = nullptr;
  if (!enc_pad_mask.empty()) {
    check(static_cast<int>(enc_pad_mask.size()) == enc_len,
          "transformer_decode: encoder mask length mismatch");
    cross.resize(len, enc_len);
    for (int i = 0; i < len; ++i)
      for (int j = 0; j < enc_len; ++j) cross(i, j) = !enc_pad_mask[j];
    cross_ptr = &cross;
  }

  Tape& t = ctx.tape;
  Node* x = embed_sequence(ctx, embedding, prefix_ids, cfg.model_dim);
  for (const auto& layer : dec.layers) {
    Node* a = layer_norm(t, x, leaf(t, *layer.ln1.gain), leaf(t, *layer.ln1.bias));
    x = add(t, x, maybe_dropout(ctx, multi_head_attention(ctx, layer.self_attn, cfg.heads, a, a,
                                                          &causal, nullptr)));
    Node* c = layer_norm(t, x, leaf(t, *layer.ln2.gain), leaf(t, *layer.ln2.bias));
    x = add(t, x, maybe_dropout(ctx, multi_head_attention(ctx, layer.cross_attn, cfg.heads, c,
                                                          enc_hidden, cross_ptr, nullptr)));
    Node* f = layer_norm(t, x, leaf(t, *layer.ln3.gain), leaf(t, *layer.ln3.bias));
    x = add(t, x, maybe_dropout(ctx, feed_forward(ctx, layer.ff, f)));
  }
  return layer_norm(t, x, leaf(t, *dec.ln_out.gain), leaf(t, *dec.ln_out.bias));
}

namespace {

void write_u32(std::ofstream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}
void write_u64(std::ofstream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}
void write_str(std::ofstream& out, const std::string& s) {
  write_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}
std::uint32_t read_u32(std::ifstream& in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}
std::uint64_t read_u64(std::ifstream& in) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}
std::string read_str(std::ifstream& in) {
  std::uint32_t n = read_u32(in);
  std::string s(n, '\0');
  in.read(s.data(), n);
  return s;
}

constexpr char kMagic[9] = "RSTYTNS1";

}  // namespace

void TensorFile::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  check(out.good(), "tensor file: cannot open " + path + " for writing");
  out.write(kMagic, 8);
  write_u32(out, static_cast<std::uint32_t>(meta.size()));
  for (const auto& kv : meta) {
    write_str(out, kv.first);
    write_str(out, kv.second);
  }
  write_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& kv : tensors) {
    write_str(out, kv.first);
    write_u64(out, static_cast<std::uint64_t>(kv.second.rows()));
    write_u64(out, static_cast<std::uint64_t>(kv.second.cols()));
    out.write(reinterpret_cast<const char*>(kv.second.data()),
              static_cast<std::streamsize>(sizeof(double) * kv.second.size()));
  }
  check(out.good(), "tensor file: write failed for " + path);
}

TensorFile TensorFile::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  check(in.good(), "tensor file: cannot open " + path);
  char magic[8];
  in.read(magic, 8);
  check(in.good() && std::memcmp(magic, kMagic, 8) == 0,
        "tensor file: " + path + " is not a checkpoint (bad magic)");
  TensorFile f;
  std::uint32_t n_meta = read_u32(in);
  for (std::uint32_t i = 0; i < n_meta; ++i) {
    std::string k = read_str(in);
    f.meta[k] = read_str(in);
  }
  std::uint32_t n_tensors = read_u32(in);
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    std::string name = read_str(in);
    auto rows = static_cast<long>(read_u64(in));
    auto cols = static_cast<long>(read_u64(in));
    Mat m(rows, cols);
    in.read(reinterpret_cast<char*>(m.data()),
            static_cast<std::streamsize>(sizeof(double) * m.size()));
    f.tensors.emplace_back(std::move(name), std::move(m));
  }
  check(in.good(), "tensor file: truncated checkpoint " + path);
  return f;
}

void TensorFile::put_store(const ParamStore& store, const std::string& prefix) {
  for (const auto& p : store.all()) tensors.emplace_back(prefix + p->name, p->value);
}

void TensorFile::get_store(ParamStore& store, const std::string& prefix) const {
  for (const auto& p : store.all()) {
    const Mat* found = nullptr;
    for (const auto& kv : tensors)
      if (kv.first == prefix + p->name) {
        found = &kv.second;
        break;
      }
    check(found != nullptr, "checkpoint: missing tensor " + prefix + p->name);
    check(found->rows() == p->value.rows() && found->cols() == p->value.cols(),
          "checkpoint: shape mismatch for " + prefix + p->name);
    p->value = *found;
  }
}

}  // namespace restyle::nn
