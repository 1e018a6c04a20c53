#pragma once

#include <array>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "restyle/textcore.hpp"

namespace restyle {

/// Style-attribute n-grams and their smoothed frequency ratios. An n-gram is
/// a marker for at most one style; only ratios at or above the mining
/// threshold are stored.
struct MarkerTable {
  // n-gram tokens joined by a single space -> ratio
  std::array<std::unordered_map<std::string, double>, 2> markers;
  int n_max = 4;
  double ratio_threshold = 5.0;

  bool is_marker(StyleLabel style, const std::string& joined) const {
    return markers[style_index(style)].count(joined) != 0;
  }
  void save_tsv(const std::string& path) const;
};

struct ContentSpan {
  int owner_index = -1;  // position in the source sentence list
  std::vector<std::string> kept;
  std::vector<std::pair<int, int>> removed_spans;  // (start, length), non-overlapping
  bool degenerate = false;                         // every token was a marker
};

enum class MatchMethod { Lexical = 0, Semantic = 1 };
const char* method_name(MatchMethod m);

struct PseudoPair {
  Sentence source;
  Sentence target;
  double similarity = 0.0;  // edit distance for lexical, cosine for semantic
  MatchMethod method = MatchMethod::Lexical;
};

struct MinerConfig {
  int n_max = 4;
  double ratio_threshold = 5.0;
  double smoothing = 1.0;
  int min_len = 5;
  double lexical_max_distance = 6.0;
  double semantic_min_cosine = 0.5;
  double conf_threshold = 0.9;
  int threads = 1;
};

// count(u, D_v) + smoothing over count(u, D_other) + smoothing; an n-gram
// qualifies for the style where the ratio clears the threshold.
MarkerTable mine_markers(const std::vector<Sentence>& corpus_s,
                         const std::vector<Sentence>& corpus_t, int n_max, double ratio_threshold,
                         double smoothing);

// Greedy longest-match-first removal of the sentence's own style markers.
ContentSpan extract_content(const Sentence& sentence, const MarkerTable& markers, int owner_index = -1);

// Token-level edit distance with unit insert/delete/substitute costs.
int levenshtein(const std::vector<std::string>& a, const std::vector<std::string>& b);
int levenshtein(const std::vector<int>& a, const std::vector<int>& b);

// For every span on the S side, the minimum-distance span on the T side;
// ties go to the lowest target index. Degenerate spans must be excluded by
// the caller. sentences_* are the owners the span indices refer to.
std::vector<PseudoPair> match_lexical(const std::vector<ContentSpan>& spans_s,
                                      const std::vector<ContentSpan>& spans_t,
                                      const std::vector<Sentence>& sentences_s,
                                      const std::vector<Sentence>& sentences_t, int threads = 1);

class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual void fit(const std::vector<Sentence>& corpus) = 0;
  virtual bool fitted() const = 0;
  virtual std::vector<double> embed(const Sentence& s) const = 0;
};

/// Unigram TF-IDF with L2 normalization; idf = ln((1+N)/(1+df)) + 1.
class TfidfEmbedder : public Embedder {
 public:
  void fit(const std::vector<Sentence>& corpus) override;
  bool fitted() const override { return fitted_; }
  std::vector<double> embed(const Sentence& s) const override;
  int dim() const { return static_cast<int>(idf_.size()); }

  // sparse form used by the matcher; cosine of two embeds
  std::vector<std::pair<int, double>> embed_sparse(const Sentence& s) const;

 private:
  std::unordered_map<std::string, int> index_;
  std::vector<double> idf_;
  bool fitted_ = false;
};

double cosine(const std::vector<double>& a, const std::vector<double>& b);

// Filters semantic matches whose target the classifier places in the wrong
// style with confidence at or above the cutoff.
using StyleScorer = std::function<double(const Sentence&, StyleLabel)>;  // p(style | sentence)

std::vector<PseudoPair> match_semantic(const std::vector<Sentence>& corpus_s,
                                       const std::vector<Sentence>& corpus_t,
                                       const TfidfEmbedder& embedder,
                                       const StyleScorer* classifier, double conf_threshold,
                                       int threads = 1);

std::vector<PseudoPair> filter_pairs(const std::vector<PseudoPair>& pairs, int min_len,
                                     double lexical_max_distance, double semantic_min_cosine);

// Convenience pipeline: markers -> spans -> lexical matching over a train
// split, or TF-IDF fit + semantic matching.
std::vector<PseudoPair> mine_pairs_lexical(const std::vector<Sentence>& corpus_s,
                                           const std::vector<Sentence>& corpus_t,
                                           const MinerConfig& cfg, MarkerTable* markers_out = nullptr);
std::vector<PseudoPair> mine_pairs_semantic(const std::vector<Sentence>& corpus_s,
                                            const std::vector<Sentence>& corpus_t,
                                            const MinerConfig& cfg,
                                            const StyleScorer* classifier = nullptr);

void save_pairs_tsv(const std::vector<PseudoPair>& pairs, const std::string& path);

}  // namespace restyle
