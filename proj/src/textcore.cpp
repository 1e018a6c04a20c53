#include "restyle/textcore.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include "restyle/common.hpp"

namespace restyle {

namespace {
const char* kReservedSurfaces[Vocab::kNumReserved] = {"<pad>", "<s>", "</s>",
                                                      "<unk>", "<to_s>", "<to_t>"};
}

const char* style_name(StyleLabel s) { return s == StyleLabel::S ? "S" : "T"; }

StyleLabel style_from_name(const std::string& name) {
  if (name == "S" || name == "s") return StyleLabel::S;
  if (name == "T" || name == "t") return StyleLabel::T;
  fail("unknown style label '" + name + "' (expected S or T)");
}

const char* Vocab::reserved_surface(int id) { return kReservedSurfaces[id]; }

bool Vocab::is_reserved_surface(const std::string& tok) {
  for (const char* r : kReservedSurfaces)
    if (tok == r) return true;
  return false;
}

Vocab::Vocab() {
  for (int i = 0; i < kNumReserved; ++i) {
    id_to_token_.emplace_back(kReservedSurfaces[i]);
    token_to_id_.emplace(kReservedSurfaces[i], i);
  }
}

Vocab Vocab::build(const std::vector<std::string>& lines, int min_freq) {
  check(!lines.empty(), "build_vocab: empty input");
  check(min_freq >= 1, "build_vocab: min_freq must be >= 1");
  std::unordered_map<std::string, long> freq;
  for (const auto& line : lines)
    for (auto& tok : split_ws(line)) ++freq[tok];
  check(!freq.empty(), "build_vocab: input contains no tokens");

  // (frequency descending, token ascending) makes construction a pure
  // function of (lines, min_freq).
  std::vector<std::pair<std::string, long>> kept;
  kept.reserve(freq.size());
  for (auto& kv : freq)
    if (kv.second >= min_freq) kept.emplace_back(kv.first, kv.second);
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  Vocab v;
  for (auto& kv : kept) {
    check(!is_reserved_surface(kv.first),
          "build_vocab: reserved surface form '" + kv.first + "' in corpus input; escape it first");
    v.token_to_id_.emplace(kv.first, static_cast<int>(v.id_to_token_.size()));
    v.id_to_token_.push_back(kv.first);
  }
  return v;
}

int Vocab::id(const std::string& tok) const {
  auto it = token_to_id_.find(tok);
  return it == token_to_id_.end() ? kUnk : it->second;
}

const std::string& Vocab::token(int id) const {
  check(id >= 0 && id < size(), "vocab: token id " + std::to_string(id) + " out of range (V=" +
                                    std::to_string(size()) + ")");
  return id_to_token_[id];
}

void Vocab::save(const std::string& path) const {
  std::ofstream out(path);
  check(out.good(), "vocab save: cannot open " + path);
  out << size() << " " << kPad << " " << kBos << " " << kEos << " " << kUnk << " " << kStyleS
      << " " << kStyleT << "\n";
  for (const auto& tok : id_to_token_) out << tok << "\n";
  check(out.good(), "vocab save: write failed for " + path);
}

Vocab Vocab::load(const std::string& path) {
  std::ifstream in(path);
  check(in.good(), "vocab load: cannot open " + path);
  std::string header;
  std::getline(in, header);
  std::istringstream hs(header);
  int v_count, pad, bos, eos, unk, sty_s, sty_t;
  check(static_cast<bool>(hs >> v_count >> pad >> bos >> eos >> unk >> sty_s >> sty_t),
        "vocab load: malformed header in " + path);
  check(pad == kPad && bos == kBos && eos == kEos && unk == kUnk && sty_s == kStyleS &&
            sty_t == kStyleT,
        "vocab load: reserved id layout mismatch in " + path);

  Vocab v;
  std::string line;
  int id = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (id < kNumReserved) {
      check(line == kReservedSurfaces[id], "vocab load: reserved token mismatch at id " +
                                               std::to_string(id) + " in " + path);
    } else {
      check(!line.empty(), "vocab load: empty token at id " + std::to_string(id));
      check(v.token_to_id_.emplace(line, id).second,
            "vocab load: duplicate token '" + line + "' in " + path);
      v.id_to_token_.push_back(line);
    }
    ++id;
  }
  check(id == v_count, "vocab load: header claims " + std::to_string(v_count) + " tokens, file has " +
                           std::to_string(id));
  return v;
}

std::string Sentence::text() const { return join(surface); }

Sentence encode_sentence(const std::string& text, const Vocab& vocab, StyleLabel style) {
  Sentence s;
  s.style = style;
  s.surface = split_ws(text);
  check(!s.surface.empty(), "encode_sentence: empty text");
  s.ids.reserve(s.surface.size());
  for (const auto& tok : s.surface) s.ids.push_back(vocab.id(tok));
  return s;
}

std::string decode_sentence(const std::vector<int>& ids, const Vocab& vocab) {
  std::vector<std::string> toks;
  toks.reserve(ids.size());
  for (int id : ids) {
    if (id == Vocab::kPad || id == Vocab::kBos || id == Vocab::kEos) continue;
    toks.push_back(vocab.token(id));
  }
  return join(toks);
}

std::string escape_reserved(const std::string& line) {
  auto toks = split_ws(line);
  for (auto& tok : toks)
    if (Vocab::is_reserved_surface(tok)) tok = "\\" + tok;
  return join(toks);
}

std::vector<std::string> read_corpus_lines(const std::string& path) {
  std::ifstream in(path);
  check(in.good(), "corpus: cannot open " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      // a single trailing blank line is a newline artifact, anything else is
      // a malformed corpus
      std::string peek;
      check(!std::getline(in, peek),
            "corpus: blank line " + std::to_string(lines.size() + 1) + " in " + path);
      break;
    }
    lines.push_back(escape_reserved(line));
  }
  check(!lines.empty(), "corpus: " + path + " has no sentences");
  return lines;
}

Corpus load_corpus(const CorpusPaths& paths, const Vocab& vocab) {
  Corpus c;
  for (StyleLabel style : {StyleLabel::S, StyleLabel::T}) {
    for (int sp = 0; sp < 3; ++sp) {
      const std::string& path = paths.path[style_index(style)][sp];
      check(!path.empty(), std::string("corpus: missing path for style ") + style_name(style));
      auto& bucket = c.sentences[style_index(style)][sp];
      for (const auto& line : read_corpus_lines(path))
        bucket.push_back(encode_sentence(line, vocab, style));
    }
  }
  return c;
}

}  // namespace restyle
