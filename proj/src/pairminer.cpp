#include "restyle/pairminer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <thread>

#include "restyle/common.hpp"

namespace restyle {

namespace {

// Chunked parallel loop; bodies write to disjoint slots so the merged result
// is independent of the worker count.
void parallel_for(int n, int threads, const std::function<void(int)>& body) {
  if (threads <= 1 || n < 2 * threads) {
    for (int i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  int per = (n + threads - 1) / threads;
  for (int t = 0; t < threads; ++t) {
    int lo = t * per, hi = std::min(n, lo + per);
    if (lo >= hi) break;
    pool.emplace_back([&, lo, hi] {
      for (int i = lo; i < hi; ++i) body(i);
    });
  }
  for (auto& th : pool) th.join();
}

std::string join_ngram(const std::vector<std::string>& toks, int start, int n) {
  std::string key = toks[start];
  for (int k = 1; k < n; ++k) {
    key += ' ';
    key += toks[start + k];
  }
  return key;
}

void count_ngrams(const std::vector<Sentence>& corpus, int n_max,
                  std::unordered_map<std::string, long>& counts) {
  for (const auto& s : corpus) {
    int len = static_cast<int>(s.surface.size());
    for (int n = 1; n <= n_max; ++n)
      for (int start = 0; start + n <= len; ++start) ++counts[join_ngram(s.surface, start, n)];
  }
}

}  // namespace

const char* method_name(MatchMethod m) { return m == MatchMethod::Lexical ? "lexical" : "semantic"; }

MarkerTable mine_markers(const std::vector<Sentence>& corpus_s,
                         const std::vector<Sentence>& corpus_t, int n_max, double ratio_threshold,
                         double smoothing) {
  check(!corpus_s.empty() && !corpus_t.empty(), "mine_markers: both corpora must be non-empty");
  check(n_max >= 1, "mine_markers: n_max must be >= 1");
  check(smoothing > 0.0, "mine_markers: smoothing must be > 0");

  std::unordered_map<std::string, long> count_s, count_t;
  count_ngrams(corpus_s, n_max, count_s);
  count_ngrams(corpus_t, n_max, count_t);

  MarkerTable table;
  table.n_max = n_max;
  table.ratio_threshold = ratio_threshold;

  auto consider = [&](const std::string& ngram) {
    auto it_s = count_s.find(ngram);
    auto it_t = count_t.find(ngram);
    double cs = it_s == count_s.end() ? 0.0 : static_cast<double>(it_s->second);
    double ct = it_t == count_t.end() ? 0.0 : static_cast<double>(it_t->second);
    double ratio_s = (cs + smoothing) / (ct + smoothing);
    double ratio_t = (ct + smoothing) / (cs + smoothing);
    // Assign to the dominant side only; equal ratios mark neither.
    if (ratio_s >= ratio_threshold && ratio_s > ratio_t)
      table.markers[style_index(StyleLabel::S)][ngram] = ratio_s;
    else if (ratio_t >= ratio_threshold && ratio_t > ratio_s)
      table.markers[style_index(StyleLabel::T)][ngram] = ratio_t;
  };
  for (const auto& kv : count_s) consider(kv.first);
  for (const auto& kv : count_t)
    if (!count_s.count(kv.first)) consider(kv.first);
  return table;
}

void MarkerTable::save_tsv(const std::string& path) const {
  std::ofstream out(path);
  check(out.good(), "marker table: cannot open " + path);
  out << "style\tngram\tratio\n";
  for (StyleLabel style : {StyleLabel::S, StyleLabel::T}) {
    // sorted for reproducible files
    std::vector<std::pair<std::string, double>> rows(markers[style_index(style)].begin(),
                                                     markers[style_index(style)].end());
    std::sort(rows.begin(), rows.end());
    for (auto& kv : rows)
      out << style_name(style) << "\t" << kv.first << "\t" << kv.second << "\n";
  }
}

ContentSpan extract_content(const Sentence& sentence, const MarkerTable& markers, int owner_index) {
  ContentSpan span;
  span.owner_index = owner_index;
  int len = static_cast<int>(sentence.surface.size());
  std::vector<bool> removed(len, false);

  const auto& table = markers.markers[style_index(sentence.style)];
  for (int n = std::min(markers.n_max, len); n >= 1; --n) {
    for (int start = 0; start + n <= len; ++start) {
      bool overlaps = false;
      for (int k = start; k < start + n; ++k) overlaps = overlaps || removed[k];
      if (overlaps) continue;
      if (table.count(join_ngram(sentence.surface, start, n))) {
        for (int k = start; k < start + n; ++k) removed[k] = true;
        span.removed_spans.emplace_back(start, n);
      }
    }
  }
  for (int i = 0; i < len; ++i)
    if (!removed[i]) span.kept.push_back(sentence.surface[i]);
  span.degenerate = span.kept.empty();
  std::sort(span.removed_spans.begin(), span.removed_spans.end());
  return span;
}

namespace {

template <typename T>
int levenshtein_impl(const std::vector<T>& a, const std::vector<T>& b) {
  const std::size_t n = a.size(), m = b.size();
  if (n == 0) return static_cast<int>(m);
  if (m == 0) return static_cast<int>(n);
  std::vector<int> prev(m + 1), cur(m + 1);
  for (std::size_t j = 0; j <= m; ++j) prev[j] = static_cast<int>(j);
  for (std::size_t i = 1; i <= n; ++i) {
    cur[0] = static_cast<int>(i);
    for (std::size_t j = 1; j <= m; ++j) {
      int sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

}  // namespace

int levenshtein(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  return levenshtein_impl(a, b);
}
int levenshtein(const std::vector<int>& a, const std::vector<int>& b) {
  return levenshtein_impl(a, b);
}

std::vector<PseudoPair> match_lexical(const std::vector<ContentSpan>& spans_s,
                                      const std::vector<ContentSpan>& spans_t,
                                      const std::vector<Sentence>& sentences_s,
                                      const std::vector<Sentence>& sentences_t, int threads) {
  check(!spans_t.empty(), "match_lexical: target side is empty");
  std::vector<PseudoPair> pairs(spans_s.size());
  parallel_for(static_cast<int>(spans_s.size()), threads, [&](int i) {
    const auto& src = spans_s[i];
    int best = std::numeric_limits<int>::max();
    int best_j = -1;
    for (int j = 0; j < static_cast<int>(spans_t.size()); ++j) {
      // distance >= length difference, so candidates outside the band
      // cannot beat the current best
      long ldiff = std::labs(static_cast<long>(src.kept.size()) -
                             static_cast<long>(spans_t[j].kept.size()));
      if (ldiff >= best) continue;
      int d = levenshtein(src.kept, spans_t[j].kept);
      if (d < best) {
        best = d;
        best_j = j;
      }
    }
    PseudoPair p;
    p.source = sentences_s[src.owner_index];
    p.target = sentences_t[spans_t[best_j].owner_index];
    p.similarity = best;
    p.method = MatchMethod::Lexical;
    pairs[i] = std::move(p);
  });
  return pairs;
}

void TfidfEmbedder::fit(const std::vector<Sentence>& corpus) {
  check(!corpus.empty(), "tfidf: empty fit corpus");
  index_.clear();
  std::vector<long> df;
  for (const auto& s : corpus) {
    std::vector<int> seen;
    for (const auto& tok : s.surface) {
      auto it = index_.find(tok);
      int idx;
      if (it == index_.end()) {
        idx = static_cast<int>(index_.size());
        index_.emplace(tok, idx);
        df.push_back(0);
      } else {
        idx = it->second;
      }
      if (std::find(seen.begin(), seen.end(), idx) == seen.end()) {
        seen.push_back(idx);
        ++df[idx];
      }
    }
  }
  double n_docs = static_cast<double>(corpus.size());
  idf_.resize(df.size());
  for (std::size_t i = 0; i < df.size(); ++i)
    idf_[i] = std::log((1.0 + n_docs) / (1.0 + static_cast<double>(df[i]))) + 1.0;
  fitted_ = true;
}

std::vector<std::pair<int, double>> TfidfEmbedder::embed_sparse(const Sentence& s) const {
  check(fitted_, "tfidf: embedder not fitted");
  std::unordered_map<int, double> tf;
  for (const auto& tok : s.surface) {
    auto it = index_.find(tok);
    if (it != index_.end()) tf[it->second] += 1.0;
  }
  std::vector<std::pair<int, double>> vec(tf.begin(), tf.end());
  std::sort(vec.begin(), vec.end());
  double norm = 0.0;
  for (auto& kv : vec) {
    kv.second *= idf_[kv.first];
    norm += kv.second * kv.second;
  }
  if (norm > 0.0) {
    norm = std::sqrt(norm);
    for (auto& kv : vec) kv.second /= norm;
  }
  return vec;
}

std::vector<double> TfidfEmbedder::embed(const Sentence& s) const {
  std::vector<double> dense(idf_.size(), 0.0);
  for (auto& kv : embed_sparse(s)) dense[kv.first] = kv.second;
  return dense;
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  check(a.size() == b.size(), "cosine: dimension mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

namespace {

double sparse_dot(const std::vector<std::pair<int, double>>& a,
                  const std::vector<std::pair<int, double>>& b) {
  double dot = 0.0;
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i].first == b[j].first)
      dot += a[i++].second * b[j++].second;
    else if (a[i].first < b[j].first)
      ++i;
    else
      ++j;
  }
  return dot;
}

}  // namespace

std::vector<PseudoPair> match_semantic(const std::vector<Sentence>& corpus_s,
                                       const std::vector<Sentence>& corpus_t,
                                       const TfidfEmbedder& embedder, const StyleScorer* classifier,
                                       double conf_threshold, int threads) {
  check(embedder.fitted(), "match_semantic: embedder not fitted");
  check(!corpus_t.empty(), "match_semantic: target side is empty");

  std::vector<std::vector<std::pair<int, double>>> t_vecs(corpus_t.size());
  parallel_for(static_cast<int>(corpus_t.size()), threads,
               [&](int j) { t_vecs[j] = embedder.embed_sparse(corpus_t[j]); });

  std::vector<std::optional<PseudoPair>> slots(corpus_s.size());
  parallel_for(static_cast<int>(corpus_s.size()), threads, [&](int i) {
    auto v = embedder.embed_sparse(corpus_s[i]);
    double best = -2.0;
    int best_j = -1;
    for (int j = 0; j < static_cast<int>(corpus_t.size()); ++j) {
      double c = sparse_dot(v, t_vecs[j]);  // embeddings are L2-normalized
      if (c > best) {
        best = c;
        best_j = j;
      }
    }
    const Sentence& target = corpus_t[best_j];
    if (classifier) {
      double wrong_conf = (*classifier)(target, opposite(target.style));
      if (wrong_conf >= conf_threshold) return;  // mislabeled sample, drop
    }
    PseudoPair p;
    p.source = corpus_s[i];
    p.target = target;
    p.similarity = best;
    p.method = MatchMethod::Semantic;
    slots[i] = std::move(p);
  });

  std::vector<PseudoPair> pairs;
  pairs.reserve(corpus_s.size());
  for (auto& slot : slots)
    if (slot) pairs.push_back(std::move(*slot));
  return pairs;
}

std::vector<PseudoPair> filter_pairs(const std::vector<PseudoPair>& pairs, int min_len,
                                     double lexical_max_distance, double semantic_min_cosine) {
  std::vector<PseudoPair> kept;
  kept.reserve(pairs.size());
  for (const auto& p : pairs) {
    if (p.source.length() < min_len || p.target.length() < min_len) continue;
    if (p.method == MatchMethod::Lexical && p.similarity > lexical_max_distance) continue;
    if (p.method == MatchMethod::Semantic && p.similarity < semantic_min_cosine) continue;
    kept.push_back(p);
  }
  return kept;
}

std::vector<PseudoPair> mine_pairs_lexical(const std::vector<Sentence>& corpus_s,
                                           const std::vector<Sentence>& corpus_t,
                                           const MinerConfig& cfg, MarkerTable* markers_out) {
  MarkerTable markers =
      mine_markers(corpus_s, corpus_t, cfg.n_max, cfg.ratio_threshold, cfg.smoothing);
  auto spans_of = [&](const std::vector<Sentence>& corpus) {
    std::vector<ContentSpan> spans;
    spans.reserve(corpus.size());
    for (int i = 0; i < static_cast<int>(corpus.size()); ++i) {
      auto span = extract_content(corpus[i], markers, i);
      if (!span.degenerate) spans.push_back(std::move(span));
    }
    return spans;
  };
  auto pairs = match_lexical(spans_of(corpus_s), spans_of(corpus_t), corpus_s, corpus_t,
                             cfg.threads);
  if (markers_out) *markers_out = std::move(markers);
  return filter_pairs(pairs, cfg.min_len, cfg.lexical_max_distance, cfg.semantic_min_cosine);
}

std::vector<PseudoPair> mine_pairs_semantic(const std::vector<Sentence>& corpus_s,
                                            const std::vector<Sentence>& corpus_t,
                                            const MinerConfig& cfg, const StyleScorer* classifier) {
  TfidfEmbedder embedder;
  std::vector<Sentence> all(corpus_s);
  all.insert(all.end(), corpus_t.begin(), corpus_t.end());
  embedder.fit(all);
  auto pairs =
      match_semantic(corpus_s, corpus_t, embedder, classifier, cfg.conf_threshold, cfg.threads);
  return filter_pairs(pairs, cfg.min_len, cfg.lexical_max_distance, cfg.semantic_min_cosine);
}

void save_pairs_tsv(const std::vector<PseudoPair>& pairs, const std::string& path) {
  std::ofstream out(path);
  check(out.good(), "pairs: cannot open " + path);
  out << "source_style\tsource_text\ttarget_text\tmethod\tsimilarity\n";
  for (const auto& p : pairs)
    out << style_name(p.source.style) << "\t" << p.source.text() << "\t" << p.target.text() << "\t"
        << method_name(p.method) << "\t" << p.similarity << "\n";
  check(out.good(), "pairs: write failed for " + path);
}

}  // namespace restyle
