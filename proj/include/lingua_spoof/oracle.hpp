#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "lingua_spoof/audio.hpp"
#include "lingua_spoof/error.hpp"
#include "lingua_spoof/hash.hpp"
#include "lingua_spoof/transcript.hpp"

namespace lingua_spoof {

using json = nlohmann::json;

struct OracleConfig {
  std::string endpoint = "stub:0";  // "stub:<seed>" or "http://host:port"
  std::string voice_id = "default";
  double timeout_s = 30.0;
  int retries = 2;
  std::string bearer_token;
  double backoff_base_s = 0.25;  // doubles on every retry
  int max_in_flight = 4;
};

inline void validate(const OracleConfig& cfg) {
  if (cfg.retries < 0) fail(ErrorCode::InvalidArgument, "retries must be >= 0");
  if (!(cfg.timeout_s > 0.0)) fail(ErrorCode::InvalidArgument, "timeout must be positive");
  if (cfg.max_in_flight < 1) fail(ErrorCode::InvalidArgument, "max_in_flight must be >= 1");
}

struct MlmCandidate {
  std::string word;
  double score = 0.0;
  friend bool operator==(const MlmCandidate&, const MlmCandidate&) = default;
};

// Aesthetics rater outputs, each on a 0..10 scale.
struct AestheticScores {
  double ce = 0.0;  // content enjoyment
  double cu = 0.0;  // content usefulness
  double pc = 0.0;  // production complexity
  double pq = 0.0;  // production quality
  friend bool operator==(const AestheticScores&, const AestheticScores&) = default;
};

struct Annotation {
  std::vector<std::string> pos_tags;
  double syntax_depth = 0.0;
  double token_ppl = 1.0;
  double phoneme_ppl = 1.0;
  AestheticScores aesthetics;
  friend bool operator==(const Annotation&, const Annotation&) = default;
};

// --- wire encodings, shared by the HTTP protocol and the on-disk cache -----

inline json annotation_to_json(const Annotation& a) {
  return json{{"pos_tags", a.pos_tags},
              {"syntax_depth", a.syntax_depth},
              {"token_ppl", a.token_ppl},
              {"phoneme_ppl", a.phoneme_ppl},
              {"aesthetics",
               {{"ce", a.aesthetics.ce},
                {"cu", a.aesthetics.cu},
                {"pc", a.aesthetics.pc},
                {"pq", a.aesthetics.pq}}}};
}

inline double require_number(const json& j, const char* field, ErrorCode code) {
  if (!j.is_object() || !j.contains(field) || !j.at(field).is_number()) fail(code, field);
  return j.at(field).get<double>();
}

inline Annotation annotation_from_json(const json& j) {
  if (!j.is_object()) fail(ErrorCode::MalformedResponse, "annotation is not an object");
  Annotation a;
  if (!j.contains("pos_tags") || !j.at("pos_tags").is_array()) {
    fail(ErrorCode::PartialAnnotation, "pos_tags");
  }
  for (const auto& tag : j.at("pos_tags")) {
    if (!tag.is_string()) fail(ErrorCode::MalformedResponse, "pos_tags entry is not a string");
    a.pos_tags.push_back(tag.get<std::string>());
  }
  a.syntax_depth = require_number(j, "syntax_depth", ErrorCode::PartialAnnotation);
  a.token_ppl = require_number(j, "token_ppl", ErrorCode::PartialAnnotation);
  a.phoneme_ppl = require_number(j, "phoneme_ppl", ErrorCode::PartialAnnotation);
  if (!j.contains("aesthetics")) fail(ErrorCode::PartialAnnotation, "aesthetics");
  const auto& ae = j.at("aesthetics");
  a.aesthetics.ce = require_number(ae, "ce", ErrorCode::PartialAnnotation);
  a.aesthetics.cu = require_number(ae, "cu", ErrorCode::PartialAnnotation);
  a.aesthetics.pc = require_number(ae, "pc", ErrorCode::PartialAnnotation);
  a.aesthetics.pq = require_number(ae, "pq", ErrorCode::PartialAnnotation);
  return a;
}

inline std::vector<double> vector_from_json(const json& j) {
  if (!j.is_object() || !j.contains("vector") || !j.at("vector").is_array()) {
    fail(ErrorCode::MalformedResponse, "missing vector");
  }
  std::vector<double> out;
  for (const auto& v : j.at("vector")) {
    if (!v.is_number()) fail(ErrorCode::MalformedResponse, "non-numeric vector entry");
    out.push_back(v.get<double>());
  }
  return out;
}

inline std::vector<MlmCandidate> candidates_from_json(const json& j) {
  if (!j.is_object() || !j.contains("candidates") || !j.at("candidates").is_array()) {
    fail(ErrorCode::MalformedResponse, "missing candidates");
  }
  std::vector<MlmCandidate> out;
  for (const auto& c : j.at("candidates")) {
    if (!c.is_object() || !c.contains("word") || !c.at("word").is_string()) {
      fail(ErrorCode::MalformedResponse, "candidate without word");
    }
    out.push_back({c.at("word").get<std::string>(),
                   require_number(c, "score", ErrorCode::MalformedResponse)});
  }
  return out;
}

inline json candidates_to_json(const std::vector<MlmCandidate>& cands) {
  json arr = json::array();
  for (const auto& c : cands) arr.push_back({{"word", c.word}, {"score", c.score}});
  return json{{"candidates", arr}};
}

// Every external model sits behind this interface: the seeded stub, the
// HTTP client, or a test double.
class OracleBackend {
 public:
  virtual ~OracleBackend() = default;
  virtual AudioClip synthesize(std::string_view text, std::string_view voice_id) = 0;
  virtual double score(const AudioClip& clip) = 0;
  virtual std::vector<double> embed_audio(const AudioClip& clip, std::string_view voice_id) = 0;
  virtual std::vector<double> embed_text(std::string_view text) = 0;
  virtual std::vector<MlmCandidate> mlm(const std::vector<std::string>& tokens,
                                        std::size_t mask_index, std::size_t top_k) = 0;
  virtual Annotation annotate(std::string_view text) = 0;
  virtual bool health() = 0;
  // Distinguishes backends in cache keys ("stub:7", "http://host:8080").
  virtual std::string identity() const = 0;
};

// Per-attack detector budget. Scores seen under this ledger are memoised, so
// re-scoring the same clip answers locally and is not charged.
class QueryLedger {
 public:
  explicit QueryLedger(std::size_t budget) : budget_(budget) {}
  QueryLedger(const QueryLedger&) = delete;
  QueryLedger& operator=(const QueryLedger&) = delete;

  std::size_t budget() const { return budget_; }
  std::size_t used() const { return used_.load(); }
  std::size_t remaining() const { return budget_ - used_.load(); }
  bool exhausted() const { return used_.load() >= budget_; }

  void consume() {
    std::size_t cur = used_.load();
    do {
      if (cur >= budget_) {
        fail(ErrorCode::BudgetExhausted, "budget of " + std::to_string(budget_) + " used up");
      }
    } while (!used_.compare_exchange_weak(cur, cur + 1));
  }

  std::optional<double> recall(const std::string& digest) const {
    std::lock_guard lock(mu_);
    auto it = seen_.find(digest);
    if (it == seen_.end()) return std::nullopt;
    return it->second;
  }

  void remember(const std::string& digest, double score) {
    std::lock_guard lock(mu_);
    seen_.emplace(digest, score);
  }

 private:
  std::size_t budget_;
  std::atomic<std::size_t> used_{0};
  mutable std::mutex mu_;
  std::unordered_map<std::string, double> seen_;
};

// Content-addressed response store. Values are opaque serialized responses.
class ResponseCache {
 public:
  virtual ~ResponseCache() = default;
  virtual std::optional<std::string> get(const std::string& key) = 0;
  virtual void put(const std::string& key, const std::string& value) = 0;
};

class MemoryCache : public ResponseCache {
 public:
  std::optional<std::string> get(const std::string& key) override {
    std::shared_lock lock(mu_);
    auto it = entries_.find(key);
    if (it == entries_.end()) return std::nullopt;
    return it->second;
  }
  void put(const std::string& key, const std::string& value) override {
    std::unique_lock lock(mu_);
    entries_.emplace(key, value);
  }
  std::size_t size() const {
    std::shared_lock lock(mu_);
    return entries_.size();
  }

 private:
  mutable std::shared_mutex mu_;
  std::unordered_map<std::string, std::string> entries_;
};

struct CacheEntry {
  std::string key;
  std::string value;
  std::int64_t created_at = 0;  // unix seconds
};

// One JSON file per entry under <root>/<key[0:2]>/<key>.json, written via
// rename so concurrent readers never see a partial file.
class DiskCache : public ResponseCache {
 public:
  explicit DiskCache(std::filesystem::path root) : root_(std::move(root)) {
    std::filesystem::create_directories(root_);
  }

  const std::filesystem::path& root() const { return root_; }

  std::filesystem::path path_for(const std::string& key) const {
    return root_ / key.substr(0, 2) / (key + ".json");
  }

  std::optional<CacheEntry> load(const std::string& key) const {
    std::ifstream in(path_for(key), std::ios::binary);
    if (!in) return std::nullopt;
    std::stringstream ss;
    ss << in.rdbuf();
    auto j = json::parse(ss.str(), nullptr, false);
    if (j.is_discarded() || !j.contains("value_b64") || j.value("key", "") != key) {
      return std::nullopt;
    }
    return CacheEntry{key, base64_decode(j.at("value_b64").get<std::string>()),
                      j.value("created_at", std::int64_t{0})};
  }

  std::optional<std::string> get(const std::string& key) override {
    auto e = load(key);
    if (!e) return std::nullopt;
    return std::move(e->value);
  }

  void put(const std::string& key, const std::string& value) override {
    auto target = path_for(key);
    std::filesystem::create_directories(target.parent_path());
    auto now = std::chrono::duration_cast<std::chrono::seconds>(
                   std::chrono::system_clock::now().time_since_epoch())
                   .count();
    json j{{"key", key}, {"created_at", now}, {"value_b64", base64_encode(value)}};
    static std::atomic<std::uint64_t> counter{0};
    auto tmp = target;
    tmp += ".tmp" + std::to_string(counter.fetch_add(1)) + "." +
           std::to_string(std::hash<std::string>{}(key) ^ static_cast<std::size_t>(now));
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      if (!out) fail(ErrorCode::IoError, "cannot write cache entry " + tmp.string());
      out << j.dump();
    }
    std::error_code ec;
    std::filesystem::rename(tmp, target, ec);
    if (ec) {
      std::filesystem::remove(tmp, ec);
      fail(ErrorCode::IoError, "cannot commit cache entry " + target.string());
    }
  }

 private:
  std::filesystem::path root_;
};

struct OracleSet {
  std::shared_ptr<OracleBackend> tts;
  std::shared_ptr<OracleBackend> detector;
  std::shared_ptr<OracleBackend> embedder;   // sentence embeddings
  std::shared_ptr<OracleBackend> mlm;
  std::shared_ptr<OracleBackend> annotator;  // POS, depth, PPL, aesthetics

  static OracleSet uniform(std::shared_ptr<OracleBackend> b) { return {b, b, b, b, b}; }
};

// Backend invocations, i.e. work the cache could not answer.
struct CallCounters {
  std::atomic<std::size_t> synthesize{0};
  std::atomic<std::size_t> score{0};
  std::atomic<std::size_t> embed_audio{0};
  std::atomic<std::size_t> embed_text{0};
  std::atomic<std::size_t> mlm{0};
  std::atomic<std::size_t> annotate{0};
};

inline std::string clip_digest(const AudioClip& clip) {
  return Sha256().field("clip").field(write_wav(clip)).hex();
}

class Gateway {
 public:
  explicit Gateway(OracleSet oracles, std::shared_ptr<ResponseCache> cache = nullptr)
      : oracles_(std::move(oracles)), cache_(std::move(cache)) {}

  const OracleSet& oracles() const { return oracles_; }
  const CallCounters& counters() const { return counters_; }

  AudioClip synthesize(std::string_view text, std::string_view voice_id) {
    if (text.find_first_not_of(" \t\r\n") == std::string_view::npos) {
      fail(ErrorCode::EmptyTranscript, "cannot synthesize empty text");
    }
    auto& backend = require(oracles_.tts, "tts");
    auto key = cache_key("synthesize", voice_id, backend, text);
    if (auto hit = cache_get(key)) return read_wav(*hit);
    AudioClip clip = backend.synthesize(text, voice_id);
    ++counters_.synthesize;
    validate(clip);
    // Normalise to the PCM16 grid so cached, wire and direct paths agree bit for bit.
    for (auto& s : clip.samples) s = quantize_pcm16(s);
    cache_put(key, write_wav(clip));
    return clip;
  }

  AudioClip synthesize(const Transcript& t, std::string_view voice_id) {
    return synthesize(t.raw(), voice_id);
  }

  double detector_score(const AudioClip& clip, QueryLedger& ledger) {
    validate(clip);
    auto& backend = require(oracles_.detector, "detector");
    const auto digest = clip_digest(clip);
    if (auto seen = ledger.recall(digest)) return *seen;
    ledger.consume();
    auto key = cache_key("score", "", backend, digest);
    double p;
    if (auto hit = cache_get(key)) {
      p = json::parse(*hit).at("bonafide_prob").get<double>();
    } else {
      p = backend.score(clip);
      ++counters_.score;
      if (!(p >= 0.0 && p <= 1.0)) {
        fail(ErrorCode::MalformedResponse, "bona-fide probability out of [0,1]");
      }
      cache_put(key, json{{"bonafide_prob", p}}.dump());
    }
    ledger.remember(digest, p);
    return p;
  }

  std::vector<double> detector_embed(const AudioClip& clip, std::string_view voice_id) {
    validate(clip);
    auto& backend = require(oracles_.detector, "detector");
    auto key = cache_key("embed_audio", voice_id, backend, clip_digest(clip));
    std::vector<double> v;
    if (auto hit = cache_get(key)) {
      v = vector_from_json(json::parse(*hit));
    } else {
      v = backend.embed_audio(clip, voice_id);
      ++counters_.embed_audio;
      check_dimension(audio_dim_, v, "audio embedding");
      cache_put(key, json{{"vector", v}}.dump());
    }
    check_dimension(audio_dim_, v, "audio embedding");
    return v;
  }

  std::vector<double> text_embed(std::string_view text) {
    if (text.find_first_not_of(" \t\r\n") == std::string_view::npos) {
      fail(ErrorCode::EmptyText, "cannot embed empty text");
    }
    auto& backend = require(oracles_.embedder, "embedder");
    auto key = cache_key("embed_text", "", backend, text);
    std::vector<double> v;
    if (auto hit = cache_get(key)) {
      v = vector_from_json(json::parse(*hit));
    } else {
      v = backend.embed_text(text);
      ++counters_.embed_text;
      check_dimension(text_dim_, v, "text embedding");
      cache_put(key, json{{"vector", v}}.dump());
    }
    check_dimension(text_dim_, v, "text embedding");
    return v;
  }

  // At most k single-word candidates for position i, best first, never the
  // masked word itself.
  std::vector<MlmCandidate> mlm_candidates(const Transcript& t, std::size_t i, std::size_t k) {
    if (i >= t.size()) fail(ErrorCode::IndexOutOfRange, "mask index " + std::to_string(i));
    if (k == 0) fail(ErrorCode::InvalidArgument, "top_k must be >= 1");
    auto& backend = require(oracles_.mlm, "mlm");
    auto tokens = t.surfaces();
    Sha256 h;
    h.field("mlm").field(backend.identity()).field(std::to_string(i)).field(std::to_string(k));
    for (const auto& tok : tokens) h.field(tok);
    auto key = h.hex();
    std::vector<MlmCandidate> raw;
    if (auto hit = cache_get(key)) {
      raw = candidates_from_json(json::parse(*hit));
    } else {
      raw = backend.mlm(tokens, i, k);
      ++counters_.mlm;
      cache_put(key, candidates_to_json(raw).dump());
    }
    const std::string masked = to_lower(tokens[i]);
    std::vector<MlmCandidate> out;
    for (auto& c : raw) {
      if (c.word.empty() || std::any_of(c.word.begin(), c.word.end(), is_space)) continue;
      if (to_lower(c.word) == masked) continue;
      out.push_back(std::move(c));
    }
    std::stable_sort(out.begin(), out.end(), [](const MlmCandidate& a, const MlmCandidate& b) {
      return a.score > b.score;
    });
    if (out.size() > k) out.resize(k);
    return out;
  }

  Annotation aux_annotations(std::string_view text) {
    if (text.find_first_not_of(" \t\r\n") == std::string_view::npos) {
      fail(ErrorCode::EmptyText, "cannot annotate empty text");
    }
    auto& backend = require(oracles_.annotator, "annotator");
    auto key = cache_key("annotate", "", backend, text);
    Annotation a;
    if (auto hit = cache_get(key)) {
      a = annotation_from_json(json::parse(*hit));
    } else {
      a = backend.annotate(text);
      ++counters_.annotate;
      cache_put(key, annotation_to_json(a).dump());
    }
    for (double v : {a.aesthetics.ce, a.aesthetics.cu, a.aesthetics.pc, a.aesthetics.pq}) {
      if (!(v >= 0.0 && v <= 10.0)) fail(ErrorCode::MalformedResponse, "aesthetics outside [0,10]");
    }
    return a;
  }

 private:
  static OracleBackend& require(const std::shared_ptr<OracleBackend>& b, const char* role) {
    if (!b) fail(ErrorCode::OracleUnavailable, std::string("no ") + role + " oracle configured");
    return *b;
  }

  static std::string cache_key(std::string_view kind, std::string_view voice,
                               const OracleBackend& backend, std::string_view input) {
    return Sha256().field(kind).field(voice).field(backend.identity()).field(input).hex();
  }

  std::optional<std::string> cache_get(const std::string& key) {
    if (!cache_) return std::nullopt;
    return cache_->get(key);
  }

  void cache_put(const std::string& key, const std::string& value) {
    if (cache_) cache_->put(key, value);
  }

  // The first response fixes the dimension; later disagreement is a protocol error.
  void check_dimension(std::atomic<std::size_t>& dim, const std::vector<double>& v,
                       const char* what) {
    if (v.empty()) fail(ErrorCode::MalformedResponse, std::string("empty ") + what);
    std::size_t expected = 0;
    if (!dim.compare_exchange_strong(expected, v.size()) && expected != v.size()) {
      fail(ErrorCode::MalformedResponse, std::string(what) + " has dimension " +
                                             std::to_string(v.size()) + ", expected " +
                                             std::to_string(expected));
    }
  }

  OracleSet oracles_;
  std::shared_ptr<ResponseCache> cache_;
  CallCounters counters_;
  std::atomic<std::size_t> audio_dim_{0};
  std::atomic<std::size_t> text_dim_{0};
};

}  // namespace lingua_spoof
