#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

#include "lingua_spoof/error.hpp"
#include "lingua_spoof/transcript.hpp"

namespace lingua_spoof {

enum class PosCategory { Noun, Verb, Adjective, Adverb };

inline std::string_view to_string(PosCategory pos) {
  switch (pos) {
    case PosCategory::Noun: return "noun";
    case PosCategory::Verb: return "verb";
    case PosCategory::Adjective: return "adj";
    case PosCategory::Adverb: return "adv";
  }
  return "?";
}

// WordNet ss_type / index pos letters; satellite adjectives fold into Adjective.
inline std::optional<PosCategory> pos_from_letter(std::string_view letter) {
  if (letter == "n") return PosCategory::Noun;
  if (letter == "v") return PosCategory::Verb;
  if (letter == "a" || letter == "s") return PosCategory::Adjective;
  if (letter == "r") return PosCategory::Adverb;
  return std::nullopt;
}

struct Lemma {
  std::string text;  // lowercased, underscores kept
  bool multiword = false;

  friend bool operator==(const Lemma&, const Lemma&) = default;
};

struct Synset {
  std::uint32_t offset = 0;
  PosCategory pos = PosCategory::Noun;
  std::vector<Lemma> lemmas;
};

using SynsetKey = std::pair<PosCategory, std::uint32_t>;

struct Lexicon {
  std::map<std::string, std::vector<SynsetKey>> index;
  std::map<SynsetKey, Synset> synsets;
};

inline constexpr std::size_t kMaxSynonyms = 50;

namespace detail {

inline std::vector<std::string> split_fields(std::string_view line) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos < line.size()) {
    while (pos < line.size() && is_space(line[pos])) ++pos;
    std::size_t end = pos;
    while (end < line.size() && !is_space(line[end])) ++end;
    if (end > pos) out.emplace_back(line.substr(pos, end - pos));
    pos = end;
  }
  return out;
}

[[noreturn]] inline void parse_error(const std::filesystem::path& file, std::size_t line,
                                     const std::string& what) {
  fail(ErrorCode::ParseError, file.string() + ":" + std::to_string(line) + ": " + what);
}

inline std::uint64_t parse_number(const std::string& field, int base,
                                  const std::filesystem::path& file, std::size_t line) {
  try {
    std::size_t used = 0;
    auto v = std::stoull(field, &used, base);
    if (used != field.size()) parse_error(file, line, "bad number '" + field + "'");
    return v;
  } catch (const std::logic_error&) {
    parse_error(file, line, "bad number '" + field + "'");
  }
}

// Yields the non-header lines; the license block lines start with two spaces.
template <typename Fn>
void for_each_record(const std::filesystem::path& file, Fn&& fn) {
  std::ifstream in(file);
  if (!in) fail(ErrorCode::IoError, "cannot open " + file.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.rfind("  ", 0) == 0) continue;
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    fn(line, lineno);
  }
}

inline void load_data_file(Lexicon& lex, const std::filesystem::path& file) {
  for_each_record(file, [&](const std::string& line, std::size_t lineno) {
    auto bar = line.find(" | ");
    auto fields = split_fields(std::string_view(line).substr(0, bar));
    if (fields.size() < 4) parse_error(file, lineno, "truncated synset record");
    Synset s;
    s.offset = static_cast<std::uint32_t>(parse_number(fields[0], 10, file, lineno));
    auto pos = pos_from_letter(fields[2]);
    if (!pos) parse_error(file, lineno, "unknown ss_type '" + fields[2] + "'");
    s.pos = *pos;
    auto w_cnt = parse_number(fields[3], 16, file, lineno);
    if (w_cnt == 0) parse_error(file, lineno, "synset without lemmas");
    std::size_t cursor = 4;
    if (fields.size() < cursor + 2 * w_cnt + 1) parse_error(file, lineno, "truncated word list");
    for (std::uint64_t k = 0; k < w_cnt; ++k) {
      std::string word = fields[cursor];
      if (auto paren = word.find('('); paren != std::string::npos) word.resize(paren);
      Lemma lemma{to_lower(word), word.find('_') != std::string::npos};
      s.lemmas.push_back(std::move(lemma));
      cursor += 2;
    }
    auto p_cnt = parse_number(fields[cursor], 10, file, lineno);
    ++cursor;
    if (fields.size() < cursor + 4 * p_cnt) parse_error(file, lineno, "truncated pointer list");
    SynsetKey key{s.pos, s.offset};
    if (lex.synsets.count(key) != 0) {
      parse_error(file, lineno, "duplicate synset offset " + fields[0]);
    }
    lex.synsets.emplace(key, std::move(s));
  });
}

inline void load_index_file(Lexicon& lex, const std::filesystem::path& file) {
  for_each_record(file, [&](const std::string& line, std::size_t lineno) {
    auto fields = split_fields(line);
    if (fields.size() < 6) parse_error(file, lineno, "truncated index record");
    auto pos = pos_from_letter(fields[1]);
    if (!pos) parse_error(file, lineno, "unknown pos '" + fields[1] + "'");
    auto synset_cnt = parse_number(fields[2], 10, file, lineno);
    auto p_cnt = parse_number(fields[3], 10, file, lineno);
    std::size_t expected = 4 + p_cnt + 2 + synset_cnt;
    if (fields.size() != expected) {
      parse_error(file, lineno,
                  "expected " + std::to_string(expected) + " fields, got " +
                      std::to_string(fields.size()));
    }
    auto& entry = lex.index[to_lower(fields[0])];
    for (std::size_t k = fields.size() - synset_cnt; k < fields.size(); ++k) {
      auto offset = static_cast<std::uint32_t>(parse_number(fields[k], 10, file, lineno));
      SynsetKey key{*pos, offset};
      if (std::find(entry.begin(), entry.end(), key) == entry.end()) entry.push_back(key);
    }
  });
}

}  // namespace detail

inline Lexicon load_lexicon(const std::vector<std::filesystem::path>& index_files,
                            const std::vector<std::filesystem::path>& data_files) {
  Lexicon lex;
  for (const auto& f : data_files) detail::load_data_file(lex, f);
  for (const auto& f : index_files) detail::load_index_file(lex, f);
  for (const auto& [lemma, keys] : lex.index) {
    for (const auto& key : keys) {
      if (lex.synsets.count(key) == 0) {
        fail(ErrorCode::ParseError, "index lemma '" + lemma + "' references missing " +
                                        std::string(to_string(key.first)) + " synset " +
                                        std::to_string(key.second));
      }
    }
  }
  return lex;
}

// Loads whichever of index.{noun,verb,adj,adv} / data.* exist in `dir`.
inline Lexicon load_lexicon_dir(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> index, data;
  for (const char* name : {"noun", "verb", "adj", "adv"}) {
    auto i = dir / (std::string("index.") + name);
    auto d = dir / (std::string("data.") + name);
    if (std::filesystem::exists(i)) index.push_back(i);
    if (std::filesystem::exists(d)) data.push_back(d);
  }
  if (index.empty()) fail(ErrorCode::IoError, "no WordNet index files under " + dir.string());
  return load_lexicon(index, data);
}

// The surface form if it is indexed, otherwise the first of -s, -es, -ed,
// -ing stripped forms that is.
inline std::optional<std::string> resolve_lemma(const Lexicon& lex, std::string_view word) {
  std::string lower = to_lower(word);
  if (lex.index.count(lower) != 0) return lower;
  for (std::string_view suffix : {"s", "es", "ed", "ing"}) {
    if (lower.size() > suffix.size() + 1 && lower.ends_with(suffix)) {
      std::string base = lower.substr(0, lower.size() - suffix.size());
      if (lex.index.count(base) != 0) return base;
    }
  }
  return std::nullopt;
}

inline std::vector<std::string> synonyms(const Lexicon& lex, std::string_view lemma,
                                         std::optional<PosCategory> pos = std::nullopt,
                                         std::size_t cap = kMaxSynonyms) {
  if (lemma.empty()) fail(ErrorCode::InvalidArgument, "empty lemma");
  auto base = resolve_lemma(lex, lemma);
  if (!base) return {};
  std::vector<SynsetKey> keys;
  for (const auto& key : lex.index.at(*base)) {
    if (!pos || key.first == *pos) keys.push_back(key);
  }
  std::sort(keys.begin(), keys.end(), [](const SynsetKey& a, const SynsetKey& b) {
    return std::tie(a.second, a.first) < std::tie(b.second, b.first);
  });
  std::string query = to_lower(lemma);
  std::vector<std::string> out;
  std::set<std::string> seen{query, *base};
  for (const auto& key : keys) {
    for (const auto& l : lex.synsets.at(key).lemmas) {
      if (l.multiword || !seen.insert(l.text).second) continue;
      out.push_back(l.text);
      if (out.size() == cap) return out;
    }
  }
  return out;
}

inline std::set<PosCategory> pos_of(const Lexicon& lex, std::string_view lemma) {
  if (lemma.empty()) fail(ErrorCode::InvalidArgument, "empty lemma");
  std::set<PosCategory> out;
  if (auto base = resolve_lemma(lex, lemma)) {
    for (const auto& key : lex.index.at(*base)) out.insert(key.first);
  }
  return out;
}

// Canonical text dump: identical input files give identical bytes.
inline std::string serialize(const Lexicon& lex) {
  std::ostringstream os;
  for (const auto& [key, s] : lex.synsets) {
    os << "S " << to_string(key.first) << ' ' << key.second;
    for (const auto& l : s.lemmas) os << ' ' << l.text << (l.multiword ? "*" : "");
    os << '\n';
  }
  for (const auto& [lemma, keys] : lex.index) {
    os << "I " << lemma;
    for (const auto& k : keys) os << ' ' << to_string(k.first) << ':' << k.second;
    os << '\n';
  }
  return os.str();
}

}  // namespace lingua_spoof
