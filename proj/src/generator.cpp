#include "restyle/generator.hpp"

#include <algorithm>
#include <cmath>

#include "restyle/common.hpp"

namespace restyle {

using nn::Mat;
using nn::Node;
using nn::RunCtx;
using nn::Tape;

const char* decode_mode_name(DecodeMode m) {
  switch (m) {
    case DecodeMode::Greedy: return "greedy";
    case DecodeMode::Beam: return "beam";
    case DecodeMode::Sample: return "sample";
  }
  return "?";
}

DecodeMode decode_mode_from_name(const std::string& name) {
  if (name == "greedy") return DecodeMode::Greedy;
  if (name == "beam") return DecodeMode::Beam;
  if (name == "sample") return DecodeMode::Sample;
  fail("unknown decode mode '" + name + "'");
}

void DecodeConfig::validate() const {
  check(beam_size >= 1, "decode config: beam_size must be >= 1");
  check(temperature > 0.0, "decode config: temperature must be > 0");
}

GeneratorParams::GeneratorParams(const nn::TransformerConfig& cfg, int vocab_size,
                                 std::uint64_t seed)
    : cfg_(cfg), vocab_size_(vocab_size) {
  cfg_.validate();
  check(vocab_size > Vocab::kNumReserved, "generator: vocabulary too small");
  embedding_ = &store_.add("emb", vocab_size, cfg.model_dim);
  enc_ = nn::register_encoder(store_, cfg, "enc");
  dec_ = nn::register_decoder(store_, cfg, "dec");
  out_proj_ = &store_.add("out_proj", cfg.model_dim, vocab_size);
  nn::init_transformer_params(store_, seed);
}

Node* GeneratorParams::encode_source(RunCtx& ctx, const Sentence& x, StyleLabel c) const {
  check(!x.ids.empty(), "generator: empty source sentence");
  std::vector<int> ids;
  ids.reserve(x.ids.size() + 1);
  ids.push_back(c == StyleLabel::S ? Vocab::kStyleS : Vocab::kStyleT);
  ids.insert(ids.end(), x.ids.begin(), x.ids.end());
  auto& store = const_cast<nn::ParamStore&>(store_);
  auto res = nn::transformer_encode(ctx, *store.find("emb"), enc_, cfg_, ids, {}, false);
  return res.hidden;
}

Node* GeneratorParams::prefix_logits(RunCtx& ctx, Node* enc_hidden,
                                     const std::vector<int>& y_prefix) const {
  std::vector<int> prefix;
  prefix.reserve(y_prefix.size() + 1);
  prefix.push_back(Vocab::kBos);
  prefix.insert(prefix.end(), y_prefix.begin(), y_prefix.end());
  auto& store = const_cast<nn::ParamStore&>(store_);
  Node* hidden = nn::transformer_decode(ctx, *store.find("emb"), dec_, cfg_, prefix, enc_hidden, {});
  return nn::matmul(ctx.tape, hidden, nn::leaf(ctx.tape, *store.find("out_proj")));
}

Eigen::VectorXd gen_forward(const GeneratorParams& gen, const Sentence& x, StyleLabel c,
                            const std::vector<int>& y_prefix) {
  Tape tape(false);
  RunCtx ctx{tape};
  Node* enc = gen.encode_source(ctx, x, c);
  Node* logits = gen.prefix_logits(ctx, enc, y_prefix);
  return nn::softmax_vec(logits->value().row(logits->rows() - 1).transpose());
}

double mle_loss(GeneratorParams& gen, const std::vector<MlePair>& batch, double smoothing,
                bool accumulate_grads) {
  check(!batch.empty(), "mle_loss: empty batch");
  long total_tokens = 0;
  for (const auto& p : batch) {
    check(p.y->length() >= 1, "mle_loss: empty target");
    total_tokens += p.y->length() + 1;  // + EOS
  }

  double loss_sum = 0.0;
  for (const auto& p : batch) {
    Tape tape(accumulate_grads);
    RunCtx ctx{tape};
    Node* enc = gen.encode_source(ctx, *p.x, p.c);
    // decoder input BOS + y, targets y + EOS
    Node* logits = gen.prefix_logits(ctx, enc, p.y->ids);
    std::vector<int> targets = p.y->ids;
    targets.push_back(Vocab::kEos);
    int n = static_cast<int>(targets.size());
    // weight folds this sentence's token count into the batch token mean
    Node* loss = nn::smoothed_xent_rows(ctx.tape, logits, targets, smoothing,
                                        static_cast<double>(n) / total_tokens);
    loss_sum += loss->value()(0, 0);
    if (accumulate_grads) tape.backward(loss);
  }
  return loss_sum;  // already the token-level mean across the batch
}

namespace {

struct BeamHyp {
  std::vector<int> ids;
  std::vector<double> logps;
  double sum_logp = 0.0;
  bool done = false;

  double normalized() const {
    return ids.empty() ? -1e30 : sum_logp / static_cast<double>(ids.size() + 1);
  }
};

}  // namespace

DecodeResult decode(const GeneratorParams& gen, const Sentence& x, StyleLabel c,
                    const DecodeConfig& cfg, std::mt19937_64* rng) {
  cfg.validate();
  const int max_len =
      std::min(cfg.effective_max_len(x.length()), gen.config().max_len - 2);
  Tape tape(false);
  RunCtx ctx{tape};
  Node* enc = gen.encode_source(ctx, x, c);

  auto next_log_probs = [&](const std::vector<int>& prefix) {
    Node* logits = gen.prefix_logits(ctx, enc, prefix);
    Eigen::VectorXd row = logits->value().row(logits->rows() - 1).transpose();
    return nn::log_softmax_vec(row);
  };

  DecodeResult res;
  res.output.style = c;

  if (cfg.mode == DecodeMode::Beam && cfg.beam_size > 1) {
    std::vector<BeamHyp> beam{BeamHyp{}};
    std::vector<BeamHyp> finished;
    for (int step = 0; step < max_len && !beam.empty(); ++step) {
      std::vector<BeamHyp> candidates;
      for (const auto& hyp : beam) {
        Eigen::VectorXd logp = next_log_probs(hyp.ids);
        // top beam_size continuations of this hypothesis suffice
        std::vector<int> order(logp.size());
        for (int i = 0; i < logp.size(); ++i) order[i] = i;
        int keep = std::min<int>(cfg.beam_size, static_cast<int>(order.size()));
        std::partial_sort(order.begin(), order.begin() + keep, order.end(),
                          [&](int a, int b) { return logp(a) > logp(b); });
        for (int k = 0; k < keep; ++k) {
          int tok = order[k];
          if (tok == Vocab::kPad || tok == Vocab::kBos) continue;
          BeamHyp ext = hyp;
          ext.sum_logp += logp(tok);
          if (tok == Vocab::kEos) {
            ext.done = true;
            candidates.push_back(std::move(ext));
          } else {
            ext.ids.push_back(tok);
            ext.logps.push_back(logp(tok));
            candidates.push_back(std::move(ext));
          }
        }
      }
      std::stable_sort(candidates.begin(), candidates.end(),
                       [](const BeamHyp& a, const BeamHyp& b) { return a.sum_logp > b.sum_logp; });
      beam.clear();
      for (auto& cand : candidates) {
        if (cand.done)
          finished.push_back(std::move(cand));
        else if (static_cast<int>(beam.size()) < cfg.beam_size)
          beam.push_back(std::move(cand));
      }
    }
    for (auto& hyp : beam) finished.push_back(std::move(hyp));  // ran out of length
    check(!finished.empty(), "beam decode: no hypotheses");
    auto best = std::max_element(finished.begin(), finished.end(),
                                 [](const BeamHyp& a, const BeamHyp& b) {
                                   return a.normalized() < b.normalized();
                                 });
    res.output.ids = best->ids;
    res.step_log_probs = best->logps;
  } else {
    std::vector<int> out;
    for (int step = 0; step < max_len; ++step) {
      Eigen::VectorXd logp = next_log_probs(out);
      int tok;
      if (cfg.mode == DecodeMode::Sample) {
        check(rng != nullptr, "sample decoding requires an rng");
        Eigen::VectorXd p = nn::softmax_vec(logp / cfg.temperature);
        p(Vocab::kPad) = 0.0;
        p(Vocab::kBos) = 0.0;
        p /= p.sum();
        std::discrete_distribution<int> dist(p.data(), p.data() + p.size());
        tok = dist(*rng);
      } else {
        logp(Vocab::kPad) = -1e30;
        logp(Vocab::kBos) = -1e30;
        logp.maxCoeff(&tok);
      }
      if (tok == Vocab::kEos) break;
      out.push_back(tok);
      res.step_log_probs.push_back(logp(tok));
    }
    res.output.ids = std::move(out);
  }

  res.degenerate = res.output.ids.empty();
  return res;
}

std::vector<double> rescore_log_probs(const GeneratorParams& gen, const Sentence& x, StyleLabel c,
                                      const Sentence& y) {
  check(y.length() >= 1, "rescore: empty output");
  Tape tape(false);
  RunCtx ctx{tape};
  Node* enc = gen.encode_source(ctx, x, c);
  Node* logits = gen.prefix_logits(ctx, enc, y.ids);
  std::vector<double> out(y.ids.size());
  for (std::size_t i = 0; i < y.ids.size(); ++i) {
    Eigen::VectorXd logp =
        nn::log_softmax_vec(logits->value().row(static_cast<int>(i)).transpose());
    out[i] = logp(y.ids[i]);
  }
  return out;
}

void GeneratorParams::save(const std::string& path) const {
  nn::TensorFile f;
  f.meta["kind"] = "generator";
  f.meta["version"] = "1";
  f.meta["vocab_size"] = std::to_string(vocab_size_);
  f.meta["layers"] = std::to_string(cfg_.layers);
  f.meta["heads"] = std::to_string(cfg_.heads);
  f.meta["model_dim"] = std::to_string(cfg_.model_dim);
  f.meta["ff_dim"] = std::to_string(cfg_.ff_dim);
  f.meta["max_len"] = std::to_string(cfg_.max_len);
  f.meta["dropout"] = std::to_string(cfg_.dropout);
  f.put_store(store_);
  f.save(path);
}

GeneratorParams GeneratorParams::load_file(const std::string& path) {
  nn::TensorFile f = nn::TensorFile::load(path);
  check(f.meta.count("kind") && f.meta.at("kind") == "generator",
        "checkpoint " + path + " is not a generator checkpoint");
  nn::TransformerConfig cfg;
  cfg.layers = std::stoi(f.meta.at("layers"));
  cfg.heads = std::stoi(f.meta.at("heads"));
  cfg.model_dim = std::stoi(f.meta.at("model_dim"));
  cfg.ff_dim = std::stoi(f.meta.at("ff_dim"));
  cfg.max_len = std::stoi(f.meta.at("max_len"));
  cfg.dropout = std::stod(f.meta.at("dropout"));
  GeneratorParams gen(cfg, std::stoi(f.meta.at("vocab_size")), 0);
  f.get_store(gen.store_);
  return gen;
}

}  // namespace restyle
