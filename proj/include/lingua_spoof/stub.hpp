#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <numeric>
#include <string>
#include <string_view>
#include <vector>

#include "lingua_spoof/audio.hpp"
#include "lingua_spoof/error.hpp"
#include "lingua_spoof/hash.hpp"
#include "lingua_spoof/oracle.hpp"
#include "lingua_spoof/transcript.hpp"

namespace lingua_spoof {

inline constexpr int kStubSampleRate = 16000;
inline constexpr std::size_t kStubSegment = 1600;  // 100 ms per token
inline constexpr std::size_t kStubRamp = 160;      // 10 ms fade in and out
inline constexpr int kStubFreqBase = 200;
inline constexpr int kStubFreqSpan = 1800;
inline constexpr std::size_t kStubBins = 64;
inline constexpr std::size_t kStubAudioDim = 16;
inline constexpr std::size_t kStubTextDim = 512;
inline constexpr double kStubAmplitude = 0.5;

// Lowercased word surfaces; what every stub oracle sees of a text.
inline std::vector<std::string> stub_tokens(std::string_view text) {
  std::vector<std::string> out;
  if (std::none_of(text.begin(), text.end(), is_word_char)) return out;
  const auto t = tokenize(text, {}, StopWords{});
  for (const auto& tok : t.tokens()) out.push_back(to_lower(tok.surface));
  return out;
}

inline int stub_frequency_offset(std::string_view token) {
  return static_cast<int>(fnv1a64(to_lower(token)) % kStubFreqSpan);
}

inline std::size_t stub_bin_of_offset(int offset) {
  return static_cast<std::size_t>(offset) * kStubBins / kStubFreqSpan;
}

inline std::size_t stub_bin(std::string_view token) {
  return stub_bin_of_offset(stub_frequency_offset(token));
}

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Linear logit over hashed token-bin counts.
struct StubDetectorModel {
  double bias = 0.0;
  std::array<double, kStubBins> weights{};

  double logit(std::span<const std::size_t> bins) const {
    double z = bias;
    for (auto b : bins) z += weights.at(b);
    return z;
  }

  double probability(std::span<const std::size_t> bins) const { return sigmoid(logit(bins)); }

  double text_probability(std::string_view text) const {
    std::vector<std::size_t> bins;
    for (const auto& t : stub_tokens(text)) bins.push_back(stub_bin(t));
    return probability(bins);
  }

  bool fires_on(std::string_view token) const { return weights[stub_bin(token)] > 0.0; }
};

struct PlantedTriggers {
  std::size_t count = 8;
  double weight = 8.0;
  double bias = -4.0;
};

// A handful of seed-chosen bins carry a large positive weight, the rest are
// neutral: one trigger token turns a clip bona-fide, anything else leaves the
// score exactly where it was.
inline StubDetectorModel planted_detector(std::uint64_t seed, const PlantedTriggers& p = {}) {
  if (p.count > kStubBins) fail(ErrorCode::InvalidArgument, "more triggers than bins");
  std::array<std::size_t, kStubBins> order{};
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = kStubBins - 1; i > 0; --i) {
    std::swap(order[i], order[mix64(seed, 0x7269676765720000ULL + i) % (i + 1)]);
  }
  StubDetectorModel m;
  m.bias = p.bias;
  for (std::size_t k = 0; k < p.count; ++k) m.weights[order[k]] = p.weight;
  return m;
}

inline AudioClip stub_synthesize(std::string_view text) {
  auto tokens = stub_tokens(text);
  if (tokens.empty()) fail(ErrorCode::EmptyTranscript, "nothing to synthesize");
  AudioClip clip;
  clip.sample_rate = kStubSampleRate;
  clip.samples.reserve(tokens.size() * kStubSegment);
  for (const auto& tok : tokens) {
    const double f = kStubFreqBase + stub_frequency_offset(tok);
    const double w = 2.0 * std::numbers::pi * f / kStubSampleRate;
    for (std::size_t n = 0; n < kStubSegment; ++n) {
      const double ramp = std::min({1.0, static_cast<double>(n) / kStubRamp,
                                    static_cast<double>(kStubSegment - 1 - n) / kStubRamp});
      clip.samples.push_back(
          quantize_pcm16(kStubAmplitude * ramp * std::sin(w * static_cast<double>(n))));
    }
  }
  return clip;
}

// Recovers each segment's tone from the steady part using the sinusoid
// recurrence x[n-1] + x[n+1] = 2 cos(w) x[n], least-squares over the window.
// Silent or out-of-range segments decode to nothing.
inline std::vector<int> stub_decode_offsets(const AudioClip& clip) {
  const std::size_t segment = static_cast<std::size_t>(clip.sample_rate) / 10;
  const std::size_t ramp = segment / 10;
  std::vector<int> out;
  if (segment < 4 * ramp || segment == 0) return out;
  for (std::size_t s = 0; (s + 1) * segment <= clip.samples.size(); ++s) {
    const double* x = clip.samples.data() + s * segment;
    double num = 0.0, den = 0.0;
    for (std::size_t n = ramp + 1; n + 1 < segment - ramp; ++n) {
      num += x[n] * (x[n - 1] + x[n + 1]);
      den += x[n] * x[n];
    }
    if (den < 1e-6) continue;
    const double c = std::clamp(num / (2.0 * den), -1.0, 1.0);
    const double f = std::acos(c) * clip.sample_rate / (2.0 * std::numbers::pi);
    const long off = std::lround(f) - kStubFreqBase;
    if (off < 0 || off >= kStubFreqSpan) continue;
    out.push_back(static_cast<int>(off));
  }
  return out;
}

inline double stub_score(const StubDetectorModel& model, const AudioClip& clip) {
  std::vector<std::size_t> bins;
  for (int off : stub_decode_offsets(clip)) bins.push_back(stub_bin_of_offset(off));
  return model.probability(bins);
}

namespace detail {

inline double gaussian(std::uint64_t a, std::uint64_t b) {
  const double u1 = 1.0 - unit_interval(mix64(a, 2 * b));
  const double u2 = unit_interval(mix64(a, 2 * b + 1));
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

inline std::vector<double> unit_gaussian(std::uint64_t stream, std::size_t dim) {
  std::vector<double> v(dim);
  double norm = 0.0;
  for (std::size_t i = 0; i < dim; ++i) {
    v[i] = gaussian(stream, i);
    norm += v[i] * v[i];
  }
  norm = std::sqrt(norm);
  for (auto& x : v) x /= norm;
  return v;
}

inline std::uint64_t stream(std::uint64_t seed, std::string_view tag, std::string_view key) {
  return mix64(mix64(seed, fnv1a64(tag)), fnv1a64(key));
}

}  // namespace detail

// Each voice owns a direction v and a spread eps in [0.05, 0.2]; a clip embeds
// as v + eps * a with a a unit vector orthogonal to v keyed by the clip
// content, so any two clips of one voice have cosine >= (1-eps^2)/(1+eps^2).
inline std::vector<double> stub_embed_audio(std::uint64_t seed, const AudioClip& clip,
                                            std::string_view voice_id) {
  auto v = detail::unit_gaussian(detail::stream(seed, "voice", voice_id), kStubAudioDim);
  const double eps =
      0.05 + 0.15 * unit_interval(detail::stream(seed, "spread", voice_id));
  auto a = detail::unit_gaussian(detail::stream(seed, "clip", write_wav(clip)), kStubAudioDim);
  double dot = 0.0;
  for (std::size_t i = 0; i < kStubAudioDim; ++i) dot += a[i] * v[i];
  double norm = 0.0;
  for (std::size_t i = 0; i < kStubAudioDim; ++i) {
    a[i] -= dot * v[i];
    norm += a[i] * a[i];
  }
  norm = std::sqrt(norm);
  std::vector<double> e(kStubAudioDim);
  for (std::size_t i = 0; i < kStubAudioDim; ++i) e[i] = v[i] + eps * a[i] / norm;
  return e;
}

// Signed feature hashing of lowercased tokens, L2-normalised.
inline std::vector<double> stub_embed_text(std::uint64_t seed, std::string_view text) {
  auto tokens = stub_tokens(text);
  if (tokens.empty()) fail(ErrorCode::EmptyText, "nothing to embed");
  std::vector<double> v(kStubTextDim, 0.0);
  for (const auto& t : tokens) {
    const auto h = mix64(seed, fnv1a64(t));
    v[h % kStubTextDim] += (h >> 63) != 0 ? 1.0 : -1.0;
  }
  double norm = 0.0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  for (auto& x : v) x /= norm;
  return v;
}

inline const std::vector<std::string>& stub_nouns() {
  static const std::vector<std::string> k{
      "man",    "woman",  "house",   "car",    "money",    "job",     "friend", "city",
      "road",   "child",  "doctor",  "letter", "story",    "plan",    "home",   "trip",
      "bill",   "court",  "hospital", "payment", "problem", "question", "answer", "picture",
      "paper",  "game",   "price",   "market", "family",   "heart",   "mind",   "voice",
      "world",  "street", "river",   "field",  "office",   "team",    "teacher", "student",
      "actor",  "trust",  "idea",    "machine", "dog",     "boat",    "book",   "gift",
      "meal",   "garden"};
  return k;
}

inline const std::vector<std::string>& stub_adjectives() {
  static const std::vector<std::string> k{
      "good",  "successful", "big",    "small", "happy",  "old",   "new",  "quick",
      "strong", "bright",    "serious", "simple", "clear", "quiet", "rich", "poor",
      "fresh", "direct",     "vital",  "huge",  "great",  "fine",  "kind", "hard",
      "warm",  "cold",       "dark",   "short", "long",   "wise"};
  return k;
}

inline const std::vector<std::string>& stub_verbs() {
  static const std::vector<std::string> k{
      "buy",   "need", "pay",   "help",  "find",  "make",  "take",   "see",
      "know",  "get",  "give",  "keep",  "hold",  "build", "fix",    "sell",
      "show",  "move", "start", "stop",  "open",  "close", "watch",  "carry",
      "bring", "change", "clean", "cook", "read",  "write", "leave",  "call",
      "meet",  "visit", "check", "reach", "catch"};
  return k;
}

inline const std::vector<std::string>& stub_adverbs() {
  static const std::vector<std::string> k{
      "quickly", "slowly", "immediately", "often", "really", "quietly", "easily", "carefully",
      "suddenly", "directly", "soon", "well", "simply", "gently", "firmly"};
  return k;
}

inline std::uint64_t stub_hash_text(std::uint64_t seed, std::string_view tag,
                                    std::span<const std::string> tokens) {
  std::uint64_t h = mix64(seed, fnv1a64(tag));
  for (const auto& t : tokens) h = mix64(h, fnv1a64(t));
  return h;
}

// Natural-log probability the stub LM assigns a token: NLL uniform in [5, 10).
inline double stub_token_logprob(std::uint64_t seed, std::string_view token) {
  return -(5.0 + 5.0 * unit_interval(detail::stream(seed, "lm", to_lower(token))));
}

inline Annotation stub_annotate(std::uint64_t seed, std::string_view text) {
  auto tokens = stub_tokens(text);
  if (tokens.empty()) fail(ErrorCode::EmptyText, "nothing to annotate");
  static constexpr std::array<const char*, 4> kTags{"NOUN", "VERB", "ADJ", "ADV"};
  Annotation a;
  double nll = 0.0, phon = 0.0;
  std::array<double, 4> aes{};
  static constexpr std::array<std::string_view, 4> kAesTags{"ce", "cu", "pc", "pq"};
  for (const auto& t : tokens) {
    a.pos_tags.emplace_back(kTags[detail::stream(seed, "pos", t) % kTags.size()]);
    nll -= stub_token_logprob(seed, t);
    phon += static_cast<double>(detail::stream(seed, "phoneme", t) % 100) / 1000.0;
    for (std::size_t k = 0; k < aes.size(); ++k) {
      aes[k] += static_cast<double>(detail::stream(seed, kAesTags[k], t) % 1001) / 100.0;
    }
  }
  const double n = static_cast<double>(tokens.size());
  a.syntax_depth = 2.0 + static_cast<double>(stub_hash_text(seed, "depth", tokens) % 5);
  a.token_ppl = std::exp(nll / n);
  a.phoneme_ppl = 1.0 + phon / n;
  a.aesthetics = {aes[0] / n, aes[1] / n, aes[2] / n, aes[3] / n};
  return a;
}

inline std::vector<MlmCandidate> stub_mlm(std::uint64_t seed, const std::vector<std::string>& tokens,
                                          std::size_t mask_index, std::size_t top_k) {
  if (mask_index >= tokens.size()) fail(ErrorCode::IndexOutOfRange, "mask index");
  std::vector<std::string> context;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    context.push_back(i == mask_index ? std::string("[MASK]") : to_lower(tokens[i]));
  }
  const std::uint64_t ctx = stub_hash_text(seed, "mlm", context);
  const std::string masked = to_lower(tokens[mask_index]);
  std::vector<const std::vector<std::string>*> pools{&stub_nouns(), &stub_adjectives(),
                                                     &stub_verbs(), &stub_adverbs()};
  std::vector<MlmCandidate> out;
  for (std::uint64_t j = 0; out.size() < top_k && j < 8 * top_k + 32; ++j) {
    const auto h = mix64(ctx, j);
    const auto& pool = *pools[h % pools.size()];
    const auto& word = pool[(h >> 8) % pool.size()];
    if (word == masked) continue;
    if (std::any_of(out.begin(), out.end(), [&](const MlmCandidate& c) { return c.word == word; })) {
      continue;
    }
    const double rank = static_cast<double>(out.size());
    out.push_back({word, std::exp(-0.3 * rank - 0.1 * unit_interval(h))});
  }
  return out;
}

// Everything a stub oracle answers is a pure function of (seed, input).
class StubBackend : public OracleBackend {
 public:
  explicit StubBackend(std::uint64_t seed)
      : seed_(seed), model_(planted_detector(seed)), identity_("stub:" + std::to_string(seed)) {}

  // A hand-built detector; its weights become part of the identity so cached
  // scores never leak between models.
  StubBackend(std::uint64_t seed, StubDetectorModel model)
      : seed_(seed), model_(model), identity_("stub:" + std::to_string(seed)) {
    const auto d = planted_detector(seed_);
    if (d.bias == model_.bias && d.weights == model_.weights) return;
    Sha256 h;
    h.field(identity_).field(std::to_string(model_.bias));
    for (double w : model_.weights) h.field(std::to_string(w));
    identity_ += "/" + h.hex().substr(0, 16);
  }

  std::uint64_t seed() const { return seed_; }
  const StubDetectorModel& model() const { return model_; }

  AudioClip synthesize(std::string_view text, std::string_view) override {
    return stub_synthesize(text);
  }
  double score(const AudioClip& clip) override { return stub_score(model_, clip); }
  std::vector<double> embed_audio(const AudioClip& clip, std::string_view voice_id) override {
    return stub_embed_audio(seed_, clip, voice_id);
  }
  std::vector<double> embed_text(std::string_view text) override {
    return stub_embed_text(seed_, text);
  }
  std::vector<MlmCandidate> mlm(const std::vector<std::string>& tokens, std::size_t mask_index,
                                std::size_t top_k) override {
    return stub_mlm(seed_, tokens, mask_index, top_k);
  }
  Annotation annotate(std::string_view text) override { return stub_annotate(seed_, text); }
  bool health() override { return true; }
  std::string identity() const override { return identity_; }

 private:
  std::uint64_t seed_;
  StubDetectorModel model_;
  std::string identity_;
};

// Template sentences over the stub vocabulary. `allow` filters every word,
// e.g. to keep a corpus clear of a planted detector's trigger bins; templates
// whose fixed words are rejected are not used.
inline std::vector<std::string> stub_corpus(
    std::size_t n, std::uint64_t seed,
    const std::function<bool(std::string_view)>& allow = [](std::string_view) { return true; }) {
  static const std::vector<std::string> kAllTemplates{
      "The {a} {n} will {v} the {a} {n} {r} in the {n}.",
      "She is a {a} {n} with a {a} {n} and a {n}.",
      "They {v} the {n} of the {a} {n} at the {a} {n}.",
      "My {a} {n} said we should {v} the {n} {r} before the {a} {n}.",
      "A {a} {n} can {v} your {n} and {v} the {a} {n}.",
      "We {r} {v} the {a} {n} near the {n} of our {n}.",
  };
  auto filtered = [&](const std::vector<std::string>& pool) {
    std::vector<std::string> out;
    for (const auto& w : pool) {
      if (allow(w)) out.push_back(w);
    }
    if (out.empty()) fail(ErrorCode::InvalidArgument, "word filter rejects a whole pool");
    return out;
  };
  std::vector<std::string> templates;
  for (const auto& t : kAllTemplates) {
    std::string fixed;
    for (std::size_t p = 0; p < t.size(); ++p) {
      if (t[p] == '{') {
        p += 2;
        fixed += ' ';
      } else {
        fixed += t[p];
      }
    }
    auto words = stub_tokens(fixed);
    if (std::all_of(words.begin(), words.end(), [&](const std::string& w) { return allow(w); })) {
      templates.push_back(t);
    }
  }
  if (templates.empty()) fail(ErrorCode::InvalidArgument, "word filter rejects every template");
  const auto nouns = filtered(stub_nouns());
  const auto adjs = filtered(stub_adjectives());
  const auto verbs = filtered(stub_verbs());
  const auto advs = filtered(stub_adverbs());
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) {
    std::uint64_t h = mix64(seed, i);
    const auto& tmpl = templates[h % templates.size()];
    std::string line;
    std::uint64_t draw = 0;
    for (std::size_t p = 0; p < tmpl.size(); ++p) {
      if (tmpl[p] == '{' && p + 2 < tmpl.size() && tmpl[p + 2] == '}') {
        const auto& pool = tmpl[p + 1] == 'n'   ? nouns
                           : tmpl[p + 1] == 'a' ? adjs
                           : tmpl[p + 1] == 'v' ? verbs
                                                : advs;
        line += pool[mix64(h, ++draw) % pool.size()];
        p += 2;
      } else {
        line += tmpl[p];
      }
    }
    out.push_back(std::move(line));
  }
  return out;
}

}  // namespace lingua_spoof
