#pragma once

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

#include "lingua_spoof/error.hpp"

namespace lingua_spoof {

inline std::string to_lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

// ASCII alphanumerics plus any non-ASCII byte, so UTF-8 letters stay inside
// words.
inline bool is_word_char(char c) {
  auto u = static_cast<unsigned char>(c);
  return u >= 0x80 || std::isalnum(u) != 0;
}

inline bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

class StopWords {
 public:
  StopWords() = default;
  StopWords(std::initializer_list<std::string_view> words) {
    for (auto w : words) words_.insert(to_lower(w));
  }

  // English function words in the TextFooler/NLTK tradition.
  static const StopWords& bundled() {
    static const StopWords kList{
        "a", "about", "above", "after", "again", "against", "all", "am", "an", "and",
        "any", "are", "as", "at", "be", "because", "been", "before", "being", "below",
        "between", "both", "but", "by", "can", "could", "did", "do", "does", "doing",
        "down", "during", "each", "either", "else", "ever", "every", "few", "for", "from",
        "further", "had", "has", "have", "having", "he", "her", "here", "hers", "herself",
        "him", "himself", "his", "how", "however", "i", "if", "in", "into", "is",
        "it", "its", "itself", "just", "least", "less", "may", "me", "might", "mine",
        "more", "most", "must", "my", "myself", "neither", "no", "nor", "not", "now",
        "of", "off", "on", "once", "only", "or", "other", "ought", "our", "ours",
        "ourselves", "out", "over", "own", "same", "shall", "she", "should", "so", "some",
        "such", "than", "that", "the", "their", "theirs", "them", "themselves", "then", "there",
        "these", "they", "this", "those", "through", "to", "too", "under", "until", "up",
        "upon", "us", "very", "was", "we", "were", "what", "when", "where", "whether",
        "which", "while", "who", "whom", "whose", "why", "will", "with", "within", "without",
        "would", "yet", "you", "your", "yours", "yourself", "yourselves", "also", "although", "whereas"};
    return kList;
  }

  // One word per line; blank lines and '#' comments ignored.
  static StopWords from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::IoError, "cannot open stop-word file " + path.string());
    StopWords out;
    std::string line;
    while (std::getline(in, line)) {
      auto first = line.find_first_not_of(" \t\r");
      if (first == std::string::npos || line[first] == '#') continue;
      auto last = line.find_last_not_of(" \t\r");
      out.words_.insert(to_lower(line.substr(first, last - first + 1)));
    }
    return out;
  }

  bool contains(std::string_view word) const { return words_.count(to_lower(word)) != 0; }
  std::size_t size() const { return words_.size(); }

 private:
  std::unordered_set<std::string> words_;
};

struct Token {
  std::string surface;
  std::size_t index = 0;
  bool is_stopword = false;
  // Whitespace and punctuation between the previous token's surface and this
  // one, including the previous token's trailing punctuation.
  std::string leading_sep;

  friend bool operator==(const Token&, const Token&) = default;
};

class Transcript {
 public:
  Transcript() = default;

  Transcript(std::string id, std::vector<Token> tokens, std::string trailing)
      : id_(std::move(id)), tokens_(std::move(tokens)), trailing_(std::move(trailing)) {
    if (tokens_.empty()) fail(ErrorCode::EmptyTranscript, "transcript has no words");
    for (std::size_t i = 0; i < tokens_.size(); ++i) tokens_[i].index = i;
    raw_.clear();
    for (const auto& t : tokens_) raw_ += t.leading_sep + t.surface;
    raw_ += trailing_;
  }

  const std::string& id() const { return id_; }
  std::span<const Token> tokens() const { return tokens_; }
  const Token& operator[](std::size_t i) const { return tokens_.at(i); }
  std::size_t size() const { return tokens_.size(); }
  const std::string& trailing() const { return trailing_; }
  const std::string& raw() const { return raw_; }

  std::vector<std::string> surfaces() const {
    std::vector<std::string> out;
    out.reserve(tokens_.size());
    for (const auto& t : tokens_) out.push_back(t.surface);
    return out;
  }

  Transcript with_id(std::string id) const {
    Transcript copy = *this;
    copy.id_ = std::move(id);
    return copy;
  }

  friend bool operator==(const Transcript& a, const Transcript& b) {
    return a.id_ == b.id_ && a.tokens_ == b.tokens_ && a.trailing_ == b.trailing_;
  }

 private:
  std::string id_;
  std::vector<Token> tokens_;
  std::string trailing_;
  std::string raw_;
};

inline std::string detokenize(const Transcript& t) { return t.raw(); }

// Whitespace split with punctuation peeled off both ends of every chunk.
// Internal punctuation ("don't", "830,000") stays in the surface.
inline Transcript tokenize(std::string_view raw, std::string id = {},
                           const StopWords& stops = StopWords::bundled()) {
  std::vector<Token> tokens;
  std::string pending;
  std::size_t pos = 0;
  while (pos < raw.size()) {
    if (is_space(raw[pos])) {
      pending.push_back(raw[pos++]);
      continue;
    }
    std::size_t end = pos;
    while (end < raw.size() && !is_space(raw[end])) ++end;
    std::string_view chunk = raw.substr(pos, end - pos);
    auto first = std::find_if(chunk.begin(), chunk.end(), is_word_char);
    if (first == chunk.end()) {
      pending.append(chunk);
    } else {
      auto last = std::find_if(chunk.rbegin(), chunk.rend(), is_word_char).base();
      pending.append(chunk.begin(), first);
      Token tok;
      tok.surface.assign(first, last);
      tok.is_stopword = stops.contains(tok.surface);
      tok.leading_sep = std::move(pending);
      tokens.push_back(std::move(tok));
      pending.assign(last, chunk.end());
    }
    pos = end;
  }
  if (tokens.empty()) fail(ErrorCode::EmptyTranscript, "no word characters in input");
  return Transcript(std::move(id), std::move(tokens), std::move(pending));
}

// T with token i deleted. A sentence-initial deletion hands its leading
// separator to the new first token so quotes survive and the deleted word's
// punctuation goes with it.
inline Transcript mask_word(const Transcript& t, std::size_t i) {
  if (i >= t.size()) {
    fail(ErrorCode::IndexOutOfRange,
         "mask index " + std::to_string(i) + " >= " + std::to_string(t.size()));
  }
  if (t.size() == 1) fail(ErrorCode::EmptyTranscript, "masking the only word");
  std::vector<Token> tokens(t.tokens().begin(), t.tokens().end());
  if (i == 0) tokens[1].leading_sep = tokens[0].leading_sep;
  tokens.erase(tokens.begin() + static_cast<std::ptrdiff_t>(i));
  return Transcript(t.id(), std::move(tokens), t.trailing());
}

// Applies the case of `model`'s first letter to `word`'s first letter.
inline std::string match_initial_case(std::string_view model, std::string_view word) {
  std::string out(word);
  if (model.empty() || out.empty()) return out;
  auto m = static_cast<unsigned char>(model.front());
  auto w = static_cast<unsigned char>(out.front());
  if (std::isupper(m)) {
    out.front() = static_cast<char>(std::toupper(w));
  } else if (std::islower(m)) {
    out.front() = static_cast<char>(std::tolower(w));
  }
  return out;
}

inline Transcript replace_word(const Transcript& t, std::size_t i, std::string_view candidate,
                               const StopWords& stops = StopWords::bundled()) {
  if (i >= t.size()) {
    fail(ErrorCode::IndexOutOfRange,
         "replace index " + std::to_string(i) + " >= " + std::to_string(t.size()));
  }
  if (candidate.empty() || std::any_of(candidate.begin(), candidate.end(), is_space)) {
    fail(ErrorCode::MultiwordCandidate, "candidate '" + std::string(candidate) + "'");
  }
  std::vector<Token> tokens(t.tokens().begin(), t.tokens().end());
  tokens[i].surface = match_initial_case(tokens[i].surface, candidate);
  tokens[i].is_stopword = stops.contains(tokens[i].surface);
  return Transcript(t.id(), std::move(tokens), t.trailing());
}

// Corpus line: optional "<id>\t" prefix, then the transcript text.
inline std::pair<std::string, std::string> split_corpus_line(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  auto tab = line.find('\t');
  if (tab == std::string_view::npos) return {std::string(), std::string(line)};
  return {std::string(line.substr(0, tab)), std::string(line.substr(tab + 1))};
}

}  // namespace lingua_spoof
