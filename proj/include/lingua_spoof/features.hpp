#pragma once

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "lingua_spoof/attack.hpp"
#include "lingua_spoof/audio.hpp"
#include "lingua_spoof/constraints.hpp"
#include "lingua_spoof/csv.hpp"
#include "lingua_spoof/dsp.hpp"
#include "lingua_spoof/error.hpp"
#include "lingua_spoof/oracle.hpp"
#include "lingua_spoof/transcript.hpp"

namespace lingua_spoof {

inline constexpr std::size_t kFeatureCount = 15;

inline const std::array<std::string_view, kFeatureCount>& feature_names() {
  static constexpr std::array<std::string_view, kFeatureCount> k{
      "perturbed_pct", "d_readability", "semantic_sim", "d_token_ppl", "d_tree_depth",
      "d_duration",    "dtw_dist",      "d_phoneme_ppl", "d_ce",       "d_cu",
      "d_pc",          "d_pq",          "aes",           "spoof_f1",   "bonafide_f1"};
  return k;
}

struct FeatureVector {
  double perturbed_pct = 0.0;
  double d_readability = 0.0;
  double semantic_sim = 1.0;
  double d_token_ppl = 0.0;
  double d_tree_depth = 0.0;
  double d_duration = 0.0;
  double dtw_dist = 0.0;
  double d_phoneme_ppl = 0.0;
  double d_ce = 0.0;
  double d_cu = 0.0;
  double d_pc = 0.0;
  double d_pq = 0.0;
  double aes = 1.0;
  double spoof_f1 = 0.0;
  double bonafide_f1 = 0.0;

  std::array<double, kFeatureCount> values() const {
    return {perturbed_pct, d_readability, semantic_sim, d_token_ppl, d_tree_depth,
            d_duration,    dtw_dist,      d_phoneme_ppl, d_ce,       d_cu,
            d_pc,          d_pq,          aes,           spoof_f1,   bonafide_f1};
  }

  static FeatureVector from_values(std::span<const double> v) {
    if (v.size() != kFeatureCount) fail(ErrorCode::DimensionMismatch, "feature row width");
    return {v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7],
            v[8], v[9], v[10], v[11], v[12], v[13], v[14]};
  }

  friend bool operator==(const FeatureVector&, const FeatureVector&) = default;
};

inline double perturbed_fraction(const Transcript& a, const Transcript& b) {
  if (a.size() != b.size()) {
    fail(ErrorCode::LengthMismatch,
         std::to_string(a.size()) + " vs " + std::to_string(b.size()) + " tokens");
  }
  std::size_t changed = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (to_lower(a[i].surface) != to_lower(b[i].surface)) ++changed;
  }
  return static_cast<double>(changed) / static_cast<double>(a.size());
}

inline double delta(double after, double before) {
  if (!std::isfinite(after) || !std::isfinite(before)) fail(ErrorCode::NonFinite, "delta operand");
  return after - before;
}

class FamiliarWords {
 public:
  FamiliarWords() = default;
  explicit FamiliarWords(std::unordered_set<std::string> words) : words_(std::move(words)) {}

  static FamiliarWords from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::IoError, "cannot open familiar-word list " + path.string());
    std::unordered_set<std::string> words;
    std::string line;
    while (std::getline(in, line)) {
      auto first = line.find_first_not_of(" \t\r");
      if (first == std::string::npos) continue;
      auto last = line.find_last_not_of(" \t\r");
      words.insert(to_lower(line.substr(first, last - first + 1)));
    }
    return FamiliarWords(std::move(words));
  }

  bool contains(std::string_view w) const { return words_.count(to_lower(w)) != 0; }
  std::size_t size() const { return words_.size(); }

 private:
  std::unordered_set<std::string> words_;
};

// New Dale-Chall: 0.1579 * difficult% + 0.0496 * words/sentence, +3.6365
// when more than 5% of words are unfamiliar.
inline double dale_chall(std::string_view text, const FamiliarWords& familiar) {
  if (std::none_of(text.begin(), text.end(), is_word_char)) fail(ErrorCode::EmptyText, "no words");
  auto t = tokenize(text, {}, StopWords{});
  std::size_t difficult = 0;
  for (const auto& tok : t.tokens()) {
    if (!familiar.contains(tok.surface)) ++difficult;
  }
  std::size_t sentences = 0;
  bool has_word = false;
  for (char c : text) {
    if (c == '.' || c == '!' || c == '?') {
      if (has_word) ++sentences;
      has_word = false;
    } else if (is_word_char(c)) {
      has_word = true;
    }
  }
  if (has_word) ++sentences;
  const double words = static_cast<double>(t.size());
  const double pct = 100.0 * static_cast<double>(difficult) / words;
  double score = 0.1579 * pct + 0.0496 * words / static_cast<double>(sentences);
  if (pct > 5.0) score += 3.6365;
  return score;
}

// exp of the mean negative log-likelihood (natural log).
inline double perplexity(std::span<const double> log_probs) {
  if (log_probs.empty()) fail(ErrorCode::EmptyText, "no tokens");
  double nll = 0.0;
  for (double lp : log_probs) nll -= lp;
  return std::exp(nll / static_cast<double>(log_probs.size()));
}

inline double token_perplexity(std::string_view text, Gateway& gateway) {
  return gateway.aux_annotations(text).token_ppl;
}

struct VoiceGroup {
  std::string voice_id;
  std::vector<std::vector<double>> embeddings;
};

// Mean cosine between each embedding and the normalised centroid.
inline double audio_encoder_similarity(const VoiceGroup& group) {
  const auto& e = group.embeddings;
  if (e.empty()) fail(ErrorCode::InvalidArgument, "voice group has no embeddings");
  const std::size_t dim = e.front().size();
  std::vector<double> centroid(dim, 0.0);
  for (const auto& v : e) {
    if (v.size() != dim) fail(ErrorCode::DimensionMismatch, "embeddings of mixed dimension");
    for (std::size_t i = 0; i < dim; ++i) centroid[i] += v[i] / static_cast<double>(e.size());
  }
  double norm = 0.0;
  for (double c : centroid) norm += c * c;
  if (norm <= std::numeric_limits<double>::min()) fail(ErrorCode::ZeroCentroid, group.voice_id);
  double sum = 0.0;
  for (const auto& v : e) sum += cosine_similarity(v, centroid);
  return sum / static_cast<double>(e.size());
}

// Model-level inputs copied into every row for one detector.
struct DetectorReport {
  double spoof_f1 = 0.0;
  double bonafide_f1 = 0.0;
};

struct FeatureInputs {
  const Transcript& original;
  const Transcript& perturbed;
  const AudioClip& clip_original;
  const AudioClip& clip_perturbed;
  double aes = 1.0;
  DetectorReport report;
};

namespace detail {

template <typename Fn>
auto named(std::string_view field, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const Error& e) {
    fail(e.code(), std::string(field) + ": " + e.detail());
  }
}

}  // namespace detail

// When the transcripts differ in length (a deletion), each missing or extra
// word counts as perturbed.
inline FeatureVector compute_features(const FeatureInputs& in, Gateway& gateway,
                                      const FamiliarWords& familiar, const MelParams& mel = {}) {
  const auto& a = in.original;
  const auto& b = in.perturbed;
  FeatureVector f;
  if (a.size() == b.size()) {
    f.perturbed_pct = perturbed_fraction(a, b);
  } else {
    const double m = static_cast<double>(std::max(a.size(), b.size()));
    f.perturbed_pct = std::abs(static_cast<double>(a.size()) - static_cast<double>(b.size())) / m;
  }
  f.d_readability = detail::named("d_readability", [&] {
    return delta(dale_chall(b.raw(), familiar), dale_chall(a.raw(), familiar));
  });
  f.semantic_sim = detail::named("semantic_sim", [&] {
    if (a.raw() == b.raw()) return 1.0;
    return cosine_similarity(gateway.text_embed(a.raw()), gateway.text_embed(b.raw()));
  });
  const auto ann_a = detail::named("d_token_ppl..d_pq", [&] { return gateway.aux_annotations(a.raw()); });
  const auto ann_b = detail::named("d_token_ppl..d_pq", [&] { return gateway.aux_annotations(b.raw()); });
  f.d_token_ppl = detail::named("d_token_ppl", [&] { return delta(ann_b.token_ppl, ann_a.token_ppl); });
  f.d_tree_depth =
      detail::named("d_tree_depth", [&] { return delta(ann_b.syntax_depth, ann_a.syntax_depth); });
  f.d_duration = detail::named("d_duration", [&] {
    return delta(duration_seconds(in.clip_perturbed), duration_seconds(in.clip_original));
  });
  f.dtw_dist = detail::named("dtw_dist", [&] {
    if (in.clip_original == in.clip_perturbed) return 0.0;
    return dtw_distance(mel_spectrogram(in.clip_perturbed, mel), mel_spectrogram(in.clip_original, mel));
  });
  f.d_phoneme_ppl =
      detail::named("d_phoneme_ppl", [&] { return delta(ann_b.phoneme_ppl, ann_a.phoneme_ppl); });
  detail::named("d_ce..d_pq", [&] {
    f.d_ce = delta(ann_b.aesthetics.ce, ann_a.aesthetics.ce);
    f.d_cu = delta(ann_b.aesthetics.cu, ann_a.aesthetics.cu);
    f.d_pc = delta(ann_b.aesthetics.pc, ann_a.aesthetics.pc);
    f.d_pq = delta(ann_b.aesthetics.pq, ann_a.aesthetics.pq);
    return 0;
  });
  f.aes = in.aes;
  f.spoof_f1 = in.report.spoof_f1;
  f.bonafide_f1 = in.report.bonafide_f1;
  for (double v : f.values()) {
    if (!std::isfinite(v)) fail(ErrorCode::NonFinite, "feature vector has a non-finite entry");
  }
  return f;
}

inline FeatureVector extract_features(const AttackOutcome& outcome, const AudioClip& clip_original,
                                      const AudioClip& clip_perturbed, double aes,
                                      const DetectorReport& report, Gateway& gateway,
                                      const FamiliarWords& familiar, const MelParams& mel = {}) {
  return compute_features({outcome.source, outcome.adversarial, clip_original, clip_perturbed, aes, report},
                          gateway, familiar, mel);
}

// One CSV row: sample id, voice, y (1 = bona-fide after the attack), features.
struct FeatureRow {
  std::string id;
  std::string voice;
  int y = 0;
  FeatureVector features;
};

inline std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

inline void write_features_csv(std::span<const FeatureRow> rows, std::ostream& os) {
  os << "id,voice,y";
  for (auto n : feature_names()) os << ',' << n;
  os << '\n';
  for (const auto& r : rows) {
    os << csv_cell(r.id) << ',' << csv_cell(r.voice) << ',' << r.y;
    for (double v : r.features.values()) os << ',' << format_double(v);
    os << '\n';
  }
}

inline std::vector<FeatureRow> read_features_csv(std::istream& is, const std::string& source = "csv") {
  std::string line;
  if (!std::getline(is, line)) fail(ErrorCode::ParseError, source + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  auto header = csv_split(line);
  std::vector<std::string> expected{"id", "voice", "y"};
  for (auto n : feature_names()) expected.emplace_back(n);
  if (header != expected) fail(ErrorCode::ParseError, source + ":1: unexpected header");
  std::vector<FeatureRow> rows;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cells = csv_split(line);
    if (cells.size() != expected.size()) {
      fail(ErrorCode::ParseError, source + ":" + std::to_string(lineno) + ": wrong cell count");
    }
    FeatureRow r;
    r.id = cells[0];
    r.voice = cells[1];
    std::array<double, kFeatureCount> v{};
    try {
      r.y = std::stoi(cells[2]);
      for (std::size_t k = 0; k < kFeatureCount; ++k) v[k] = std::stod(cells[3 + k]);
    } catch (const std::logic_error&) {
      fail(ErrorCode::ParseError, source + ":" + std::to_string(lineno) + ": bad number");
    }
    if (r.y != 0 && r.y != 1) fail(ErrorCode::ParseError, source + ":" + std::to_string(lineno) + ": y not 0/1");
    r.features = FeatureVector::from_values(v);
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace lingua_spoof
