#pragma once

#include <random>
#include <set>

#include "restyle/textcore.hpp"
#include "restyle/transformer.hpp"

namespace restyle {

/// Per-token attribute salience in the open interval (0,1), one weight per
/// token of the scored sentence.
struct SalienceWeights {
  std::vector<double> w;
};

enum class SalienceNorm { None = 0, SumToLength = 1 };

/// Binary style classifier: transformer encoder over [<s>] + tokens with a
/// 2-way linear head on the first position. Frozen while the generator
/// trains with rewards.
class ClassifierParams {
 public:
  ClassifierParams(const nn::TransformerConfig& cfg, int vocab_size, std::uint64_t seed);

  const nn::TransformerConfig& config() const { return cfg_; }
  int vocab_size() const { return vocab_size_; }
  nn::ParamStore& store() { return store_; }
  const nn::ParamStore& store() const { return store_; }

  bool frozen() const { return frozen_; }
  void set_frozen(bool on) { frozen_ = on; }
  std::uint64_t checksum() const { return store_.checksum(); }

  // logits node (1x2) for the sentence; records attention when asked
  nn::Node* logits(nn::RunCtx& ctx, const std::vector<int>& ids, nn::AttentionStack* attn) const;

  void save(const std::string& path) const;
  static ClassifierParams load_file(const std::string& path);

 private:
  nn::TransformerConfig cfg_;
  int vocab_size_;
  bool frozen_ = false;
  nn::ParamStore store_;
  nn::EncoderParams enc_;
};

struct ClassifierTrainConfig {
  int epochs = 5;
  int batch_size = 32;
  double learning_rate = 1e-3;
  double weight_decay = 0.01;
  std::uint64_t seed = 1;
};

struct ClassifierTrainResult {
  double train_accuracy = 0.0;
  double valid_accuracy = 0.0;
};

// Cross-entropy training to discriminate the two styles. Throws if either
// corpus is empty (a one-class problem has no signal to learn).
ClassifierTrainResult train_classifier(ClassifierParams& clf,
                                       const std::vector<Sentence>& corpus_s,
                                       const std::vector<Sentence>& corpus_t,
                                       const std::vector<Sentence>& valid_s,
                                       const std::vector<Sentence>& valid_t,
                                       const ClassifierTrainConfig& cfg);

// P(style | y); the two style probabilities sum to one.
double classify(const ClassifierParams& clf, const Sentence& y, StyleLabel style);
Eigen::Vector2d classify_probs(const ClassifierParams& clf, const Sentence& y);

// First-token attention rows max-pooled over heads, then over the selected
// layers; the classification token's own position is excluded, so the
// output covers exactly the y tokens. Empty layer_set is rejected.
SalienceWeights salience(const ClassifierParams& clf, const Sentence& y,
                         const std::set<int>& layer_set,
                         SalienceNorm norm = SalienceNorm::None);

// Default layer selection: the top two layers (or the single layer of a
// depth-1 model).
std::set<int> top2_layers(const nn::TransformerConfig& cfg);

// Pure pooling core, exposed for tests that build attention stacks by hand.
std::vector<double> pool_salience(const nn::AttentionStack& attn, const std::set<int>& layer_set);

}  // namespace restyle
