#pragma once

#include <array>
#include <string>
#include <unordered_map>
#include <vector>

namespace restyle {

enum class StyleLabel { S = 0, T = 1 };

inline StyleLabel opposite(StyleLabel s) { return s == StyleLabel::S ? StyleLabel::T : StyleLabel::S; }
inline int style_index(StyleLabel s) { return static_cast<int>(s); }
const char* style_name(StyleLabel s);
StyleLabel style_from_name(const std::string& name);

/// Token inventory with dense ids. The six reserved tokens occupy ids 0..5
/// and are stable across save/load; corpus tokens follow, ordered by
/// (frequency descending, lexicographic ascending).
class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;
  static constexpr int kStyleS = 4;
  static constexpr int kStyleT = 5;
  static constexpr int kNumReserved = 6;

  static const char* reserved_surface(int id);
  static bool is_reserved_surface(const std::string& tok);

  // Tokens with frequency >= min_freq are kept; everything else encodes to
  // UNK. Throws on empty input: a vocabulary is never empty.
  static Vocab build(const std::vector<std::string>& lines, int min_freq);

  int id(const std::string& tok) const;  // UNK for out-of-vocabulary tokens
  const std::string& token(int id) const;
  bool contains(const std::string& tok) const { return token_to_id_.count(tok) != 0; }
  int size() const { return static_cast<int>(id_to_token_.size()); }
  int style_token(StyleLabel c) const { return c == StyleLabel::S ? kStyleS : kStyleT; }

  void save(const std::string& path) const;
  static Vocab load(const std::string& path);

 private:
  Vocab();
  std::unordered_map<std::string, int> token_to_id_;
  std::vector<std::string> id_to_token_;
};

/// A token-id sequence with its style and the original surface tokens.
/// Holds no PAD; BOS/EOS are added only where a model inserts them.
struct Sentence {
  std::vector<int> ids;
  StyleLabel style = StyleLabel::S;
  std::vector<std::string> surface;

  int length() const { return static_cast<int>(ids.size()); }
  std::string text() const;
};

Sentence encode_sentence(const std::string& text, const Vocab& vocab, StyleLabel style);
std::string decode_sentence(const std::vector<int>& ids, const Vocab& vocab);
inline std::string decode_sentence(const Sentence& s, const Vocab& vocab) {
  return decode_sentence(s.ids, vocab);
}

enum class Split { Train = 0, Valid = 1, Test = 2 };

struct Corpus {
  // indexed [style][split]
  std::array<std::array<std::vector<Sentence>, 3>, 2> sentences;

  const std::vector<Sentence>& get(StyleLabel s, Split sp) const {
    return sentences[style_index(s)][static_cast<int>(sp)];
  }
  std::vector<Sentence>& get(StyleLabel s, Split sp) {
    return sentences[style_index(s)][static_cast<int>(sp)];
  }
};

struct CorpusPaths {
  // indexed [style][split]; every named file must exist and be non-empty
  std::array<std::array<std::string, 3>, 2> path;
};

// Reads one sentence per line. Normalizes CRLF, errors on missing files and
// zero-line files, and escapes literal reserved surface forms with a leading
// backslash so corpus tokens can never collide with reserved ids.
std::vector<std::string> read_corpus_lines(const std::string& path);

// Applies the same reserved-token escaping that read_corpus_lines does;
// used for sentences arriving from stdin.
std::string escape_reserved(const std::string& line);

Corpus load_corpus(const CorpusPaths& paths, const Vocab& vocab);

}  // namespace restyle
