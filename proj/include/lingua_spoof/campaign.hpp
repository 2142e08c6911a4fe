#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>
#include <toml.hpp>

#include "lingua_spoof/attack.hpp"
#include "lingua_spoof/constraints.hpp"
#include "lingua_spoof/error.hpp"
#include "lingua_spoof/features.hpp"
#include "lingua_spoof/http.hpp"
#include "lingua_spoof/oracle.hpp"
#include "lingua_spoof/report.hpp"
#include "lingua_spoof/stats.hpp"
#include "lingua_spoof/stub.hpp"
#include "lingua_spoof/transcript.hpp"
#include "lingua_spoof/wordnet.hpp"

#ifndef LINGUA_SPOOF_DATA_DIR
#define LINGUA_SPOOF_DATA_DIR "data"
#endif

namespace lingua_spoof {

inline constexpr int kTraceVersion = 1;

enum class AttackMode { Greedy, Random, Proxy };

inline std::string_view to_string(AttackMode m) {
  switch (m) {
    case AttackMode::Greedy: return "greedy";
    case AttackMode::Random: return "random";
    case AttackMode::Proxy: return "proxy";
  }
  return "?";
}

enum class CacheMode { Disk, Memory, None };

struct StubCorpusSpec {
  std::size_t count = 200;
  std::uint64_t seed = 0;
  // Keep every word out of the stub detector's trigger bins so that the
  // clean corpus is classified spoof.
  bool avoid_triggers = true;
};

struct OracleRoles {
  OracleConfig tts, detector, embedder, mlm, annotator;
};

struct RunManifest {
  std::optional<std::filesystem::path> corpus;
  std::optional<StubCorpusSpec> stub_corpus;
  OracleRoles oracles;
  AttackConfig attack;
  AttackMode mode = AttackMode::Greedy;
  std::string proxy = "lexical";  // "lexical" or a model JSON written by `analyze`
  std::uint64_t seed = 0;
  std::filesystem::path output_dir = "out";  // relative to the manifest's directory
  std::size_t min_tokens = 10;
  std::size_t workers = 0;  // 0: hardware concurrency
  CacheMode cache = CacheMode::Disk;
  std::filesystem::path cache_dir;  // empty: <output_dir>/cache
  std::filesystem::path wordnet_dir = std::filesystem::path(LINGUA_SPOOF_DATA_DIR) / "wordnet-mini";
  std::filesystem::path familiar_words =
      std::filesystem::path(LINGUA_SPOOF_DATA_DIR) / "dale_chall_familiar.txt";
  std::optional<std::filesystem::path> stopwords;
  bool features = true;
  DetectorReport detector_report;
};

namespace detail {

[[noreturn]] inline void manifest_error(const std::string& what) { fail(ErrorCode::ManifestError, what); }

inline void check_keys(const toml::table& t, const std::string& where, std::initializer_list<std::string_view> allowed) {
  for (const auto& [k, v] : t) {
    if (std::find(allowed.begin(), allowed.end(), k.str()) == allowed.end()) {
      manifest_error("unknown key '" + std::string(k.str()) + "' in " + where);
    }
  }
}

template <typename T>
std::optional<T> get(const toml::table& t, std::string_view key, const std::string& where) {
  const toml::node* n = t.get(key);
  if (n == nullptr) return std::nullopt;
  if constexpr (std::is_same_v<T, bool>) {
    if (auto v = n->value_exact<bool>()) return *v;
  } else if constexpr (std::is_same_v<T, std::string>) {
    if (auto v = n->value_exact<std::string>()) return *v;
  } else if constexpr (std::is_same_v<T, double>) {
    if (auto v = n->value<double>()) return *v;
  } else {
    if (auto v = n->value_exact<std::int64_t>()) {
      if (*v < 0) manifest_error(where + "." + std::string(key) + " must be non-negative");
      return static_cast<T>(*v);
    }
  }
  manifest_error(where + "." + std::string(key) + " has the wrong type");
}

inline const toml::table* subtable(const toml::table& t, std::string_view key) {
  const toml::node* n = t.get(key);
  if (n == nullptr) return nullptr;
  if (!n->is_table()) manifest_error("'" + std::string(key) + "' must be a table");
  return n->as_table();
}

inline std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

}  // namespace detail

inline RunManifest parse_manifest(std::string_view text, const std::filesystem::path& base_dir = ".") {
  toml::table root;
  try {
    root = toml::parse(text);
  } catch (const toml::parse_error& e) {
    std::ostringstream os;
    os << e.description() << " at line " << e.source().begin.line;
    detail::manifest_error(os.str());
  }
  using detail::get;
  detail::check_keys(root, "manifest",
                     {"corpus", "output_dir", "min_tokens", "workers", "seed", "cache", "cache_dir",
                      "wordnet_dir", "familiar_words", "stopwords", "oracles", "attack", "features",
                      "stub_corpus"});
  RunManifest m;
  if (auto v = get<std::string>(root, "corpus", "manifest")) m.corpus = detail::resolve(base_dir, *v);
  m.output_dir = detail::resolve(base_dir, get<std::string>(root, "output_dir", "manifest").value_or("out"));
  if (auto v = get<std::size_t>(root, "min_tokens", "manifest")) m.min_tokens = *v;
  if (auto v = get<std::size_t>(root, "workers", "manifest")) m.workers = *v;
  if (auto v = get<std::uint64_t>(root, "seed", "manifest")) m.seed = *v;
  if (auto v = get<std::string>(root, "cache", "manifest")) {
    if (*v == "disk") m.cache = CacheMode::Disk;
    else if (*v == "memory") m.cache = CacheMode::Memory;
    else if (*v == "none") m.cache = CacheMode::None;
    else detail::manifest_error("cache must be disk, memory or none");
  }
  if (auto v = get<std::string>(root, "cache_dir", "manifest")) m.cache_dir = detail::resolve(base_dir, *v);
  if (auto v = get<std::string>(root, "wordnet_dir", "manifest")) m.wordnet_dir = detail::resolve(base_dir, *v);
  if (auto v = get<std::string>(root, "familiar_words", "manifest")) {
    m.familiar_words = detail::resolve(base_dir, *v);
  }
  if (auto v = get<std::string>(root, "stopwords", "manifest")) m.stopwords = detail::resolve(base_dir, *v);

  if (const auto* sc = detail::subtable(root, "stub_corpus")) {
    detail::check_keys(*sc, "stub_corpus", {"count", "seed", "avoid_triggers"});
    StubCorpusSpec s;
    if (auto v = get<std::size_t>(*sc, "count", "stub_corpus")) s.count = *v;
    if (auto v = get<std::uint64_t>(*sc, "seed", "stub_corpus")) s.seed = *v;
    if (auto v = get<bool>(*sc, "avoid_triggers", "stub_corpus")) s.avoid_triggers = *v;
    m.stub_corpus = s;
  }

  OracleConfig base;
  if (const auto* o = detail::subtable(root, "oracles")) {
    detail::check_keys(*o, "oracles",
                       {"default", "tts", "detector", "embedder", "mlm", "annotator", "voice_id",
                        "timeout_s", "retries", "bearer_token", "backoff_base_s", "max_in_flight"});
    if (auto v = get<std::string>(*o, "default", "oracles")) base.endpoint = *v;
    if (auto v = get<std::string>(*o, "voice_id", "oracles")) base.voice_id = *v;
    if (auto v = get<double>(*o, "timeout_s", "oracles")) base.timeout_s = *v;
    if (auto v = get<std::size_t>(*o, "retries", "oracles")) base.retries = static_cast<int>(*v);
    if (auto v = get<std::string>(*o, "bearer_token", "oracles")) base.bearer_token = *v;
    if (auto v = get<double>(*o, "backoff_base_s", "oracles")) base.backoff_base_s = *v;
    if (auto v = get<std::size_t>(*o, "max_in_flight", "oracles")) base.max_in_flight = static_cast<int>(*v);
    m.oracles = {base, base, base, base, base};
    auto role = [&](std::string_view key, OracleConfig& cfg) {
      if (auto v = get<std::string>(*o, key, "oracles")) cfg.endpoint = *v;
    };
    role("tts", m.oracles.tts);
    role("detector", m.oracles.detector);
    role("embedder", m.oracles.embedder);
    role("mlm", m.oracles.mlm);
    role("annotator", m.oracles.annotator);
  } else {
    m.oracles = {base, base, base, base, base};
  }
  m.attack.voice_id = base.voice_id;

  if (const auto* a = detail::subtable(root, "attack")) {
    detail::check_keys(*a, "attack",
                       {"mode", "strategy", "budget", "candidates_per_word", "threshold", "delta",
                        "require_pos_match", "skip_stopwords", "pos_source", "max_positions", "proxy"});
    if (auto v = get<std::string>(*a, "mode", "attack")) {
      if (*v == "greedy") m.mode = AttackMode::Greedy;
      else if (*v == "random") m.mode = AttackMode::Random;
      else if (*v == "proxy") m.mode = AttackMode::Proxy;
      else detail::manifest_error("attack.mode must be greedy, random or proxy");
    }
    if (auto v = get<std::string>(*a, "strategy", "attack")) {
      try {
        m.attack.strategy = strategy_from_string(*v);
      } catch (const Error& e) {
        detail::manifest_error("attack.strategy: " + e.detail());
      }
    }
    if (auto v = get<std::size_t>(*a, "budget", "attack")) m.attack.budget = *v;
    if (auto v = get<std::size_t>(*a, "candidates_per_word", "attack")) m.attack.candidates_per_word = *v;
    if (auto v = get<double>(*a, "threshold", "attack")) m.attack.threshold = *v;
    if (auto v = get<double>(*a, "delta", "attack")) m.attack.policy.delta = *v;
    if (auto v = get<bool>(*a, "require_pos_match", "attack")) m.attack.policy.require_pos_match = *v;
    if (auto v = get<bool>(*a, "skip_stopwords", "attack")) m.attack.policy.skip_stopwords = *v;
    if (auto v = get<std::string>(*a, "pos_source", "attack")) {
      if (*v == "wordnet") m.attack.policy.pos_source = PosEvidence::WordNet;
      else if (*v == "annotator") m.attack.policy.pos_source = PosEvidence::Annotator;
      else detail::manifest_error("attack.pos_source must be wordnet or annotator");
    }
    if (auto v = get<std::size_t>(*a, "max_positions", "attack")) m.attack.max_positions = *v;
    if (auto v = get<std::string>(*a, "proxy", "attack")) {
      m.proxy = *v == "lexical" ? *v : detail::resolve(base_dir, *v).string();
    }
  }

  if (const auto* f = detail::subtable(root, "features")) {
    detail::check_keys(*f, "features", {"enabled", "spoof_f1", "bonafide_f1", "baseline"});
    if (auto v = get<bool>(*f, "enabled", "features")) m.features = *v;
    if (auto v = get<double>(*f, "spoof_f1", "features")) m.detector_report.spoof_f1 = *v;
    if (auto v = get<double>(*f, "bonafide_f1", "features")) m.detector_report.bonafide_f1 = *v;
    if (auto v = get<std::string>(*f, "baseline", "features")) {
      // Two columns per line: true label, predicted label (1 = bona-fide).
      auto path = detail::resolve(base_dir, *v);
      std::ifstream in(path);
      if (!in) detail::manifest_error("cannot open baseline " + path.string());
      std::vector<int> truth, pred;
      int a = 0, b = 0;
      while (in >> a >> b) {
        truth.push_back(a);
        pred.push_back(b);
      }
      auto r = classification_report(truth, pred);
      m.detector_report = {r.spoof.f1, r.bonafide.f1};
    }
  }

  try {
    validate(m.attack);
    validate(m.oracles.detector);
  } catch (const Error& e) {
    detail::manifest_error(e.detail());
  }
  if (m.min_tokens < 1) detail::manifest_error("min_tokens must be >= 1");
  if (m.corpus.has_value() == m.stub_corpus.has_value()) {
    detail::manifest_error("exactly one of corpus or [stub_corpus] is required");
  }
  if (m.corpus && !std::filesystem::exists(*m.corpus)) {
    detail::manifest_error("corpus not found: " + m.corpus->string());
  }
  const bool needs_lexicon = m.attack.strategy == Strategy::WordNetSynonyms ||
                             (m.attack.policy.require_pos_match &&
                              m.attack.policy.pos_source == PosEvidence::WordNet);
  if (needs_lexicon && !std::filesystem::exists(m.wordnet_dir)) {
    detail::manifest_error("wordnet_dir not found: " + m.wordnet_dir.string());
  }
  if (m.features && !std::filesystem::exists(m.familiar_words)) {
    detail::manifest_error("familiar_words not found: " + m.familiar_words.string());
  }
  if (m.stopwords && !std::filesystem::exists(*m.stopwords)) {
    detail::manifest_error("stopwords not found: " + m.stopwords->string());
  }
  if (m.mode == AttackMode::Proxy && m.proxy != "lexical" && !std::filesystem::exists(m.proxy)) {
    detail::manifest_error("proxy model not found: " + m.proxy);
  }
  return m;
}

inline RunManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::ManifestError, "cannot open manifest " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_manifest(ss.str(), path.parent_path().empty() ? "." : path.parent_path());
}

// --- trace -------------------------------------------------------------------

struct SampleResult {
  std::size_t index = 0;
  std::string id;
  std::optional<AttackOutcome> outcome;
  std::string error;  // set when the sample was skipped
};

struct TraceContext {
  std::string detector;
  std::string voice;
  std::string strategy;
  std::string mode;
  SimPolicy policy;
};

inline nlohmann::json policy_to_json(const SimPolicy& p) {
  return {{"delta", p.delta},
          {"require_pos_match", p.require_pos_match},
          {"skip_stopwords", p.skip_stopwords},
          {"pos_source", p.pos_source == PosEvidence::WordNet ? "wordnet" : "annotator"}};
}

inline SimPolicy policy_from_json(const nlohmann::json& j) {
  SimPolicy p;
  p.delta = j.at("delta").get<double>();
  p.require_pos_match = j.at("require_pos_match").get<bool>();
  p.skip_stopwords = j.at("skip_stopwords").get<bool>();
  p.pos_source = j.at("pos_source").get<std::string>() == "annotator" ? PosEvidence::Annotator
                                                                       : PosEvidence::WordNet;
  return p;
}

inline nlohmann::json trace_line(const SampleResult& s, const TraceContext& ctx) {
  nlohmann::json j{{"v", kTraceVersion},
                   {"index", s.index},
                   {"id", s.id},
                   {"detector", ctx.detector},
                   {"voice_id", ctx.voice},
                   {"strategy", ctx.strategy},
                   {"mode", ctx.mode},
                   {"policy", policy_to_json(ctx.policy)}};
  if (!s.outcome) {
    j["status"] = "skipped";
    j["error"] = s.error;
    return j;
  }
  const auto& o = *s.outcome;
  j["status"] = o.status == OutcomeStatus::AlreadyBonafide ? "already_bonafide" : "attacked";
  j["source"] = o.source.raw();
  j["adversarial"] = o.adversarial.raw();
  auto records = nlohmann::json::array();
  for (const auto& r : o.records) {
    records.push_back({{"position", r.position},
                       {"original", r.original},
                       {"replacement", r.replacement},
                       {"score_before", r.score_before},
                       {"score_after", r.score_after}});
  }
  j["records"] = records;
  j["flipped"] = o.flipped;
  j["queries_used"] = o.queries_used;
  j["initial_score"] = o.initial_score;
  j["terminal_score"] = o.terminal_score;
  j["semantic_sim"] = o.semantic_sim;
  j["budget_exhausted"] = o.budget_exhausted;
  return j;
}

struct TraceEntry {
  SampleResult sample;
  TraceContext context;
};

inline TraceEntry parse_trace_line(const std::string& line, const StopWords& stops = StopWords::bundled()) {
  auto j = nlohmann::json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object()) fail(ErrorCode::ParseError, "trace line is not JSON");
  try {
    if (j.at("v").get<int>() != kTraceVersion) fail(ErrorCode::ParseError, "unsupported trace version");
    TraceEntry e;
    e.sample.index = j.at("index").get<std::size_t>();
    e.sample.id = j.at("id").get<std::string>();
    e.context = {j.at("detector").get<std::string>(), j.at("voice_id").get<std::string>(),
                 j.at("strategy").get<std::string>(), j.at("mode").get<std::string>(),
                 policy_from_json(j.at("policy"))};
    const auto status = j.at("status").get<std::string>();
    if (status == "skipped") {
      e.sample.error = j.value("error", std::string());
      return e;
    }
    AttackOutcome o;
    o.source = tokenize(j.at("source").get<std::string>(), e.sample.id, stops);
    o.adversarial = tokenize(j.at("adversarial").get<std::string>(), e.sample.id, stops);
    for (const auto& r : j.at("records")) {
      o.records.push_back({r.at("position").get<std::size_t>(), r.at("original").get<std::string>(),
                           r.at("replacement").get<std::string>(), r.at("score_before").get<double>(),
                           r.at("score_after").get<double>()});
    }
    o.flipped = j.at("flipped").get<bool>();
    o.queries_used = j.at("queries_used").get<std::size_t>();
    o.initial_score = j.at("initial_score").get<double>();
    o.terminal_score = j.at("terminal_score").get<double>();
    o.semantic_sim = j.at("semantic_sim").get<double>();
    o.budget_exhausted = j.at("budget_exhausted").get<bool>();
    o.status = status == "already_bonafide" ? OutcomeStatus::AlreadyBonafide : OutcomeStatus::Attacked;
    e.sample.outcome = std::move(o);
    return e;
  } catch (const nlohmann::json::exception& ex) {
    fail(ErrorCode::ParseError, std::string("trace: ") + ex.what());
  }
}

inline std::vector<TraceEntry> read_trace(const std::filesystem::path& path,
                                          const StopWords& stops = StopWords::bundled()) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoError, "cannot open trace " + path.string());
  std::vector<TraceEntry> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(parse_trace_line(line, stops));
    } catch (const Error& e) {
      fail(e.code(), path.string() + ":" + std::to_string(lineno) + ": " + e.detail());
    }
  }
  return out;
}

// Results-table rows from trace entries, one per (detector, voice, strategy,
// mode) in order of first appearance. Skipped samples are left out.
inline std::vector<ResultRow> result_rows(std::span<const TraceEntry> entries) {
  std::vector<ResultRow> rows;
  std::vector<std::vector<AttackOutcome>> groups;
  for (const auto& e : entries) {
    if (!e.sample.outcome) continue;
    const std::string strategy = e.context.strategy + "/" + e.context.mode;
    auto it = std::find_if(rows.begin(), rows.end(), [&](const ResultRow& r) {
      return r.detector == e.context.detector && r.voice == e.context.voice && r.strategy == strategy;
    });
    if (it == rows.end()) {
      rows.push_back({e.context.detector, e.context.voice, strategy, {}});
      groups.emplace_back();
      it = rows.end() - 1;
    }
    groups[static_cast<std::size_t>(it - rows.begin())].push_back(*e.sample.outcome);
  }
  for (std::size_t k = 0; k < rows.size(); ++k) rows[k].metrics = compute_metrics(groups[k]);
  return rows;
}

// --- runner ------------------------------------------------------------------

inline void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn) {
  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, std::max<std::size_t>(n, 1));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::jthread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    });
  }
}

struct CorpusSample {
  std::size_t index = 0;
  Transcript transcript;
};

struct CorpusLoad {
  std::vector<CorpusSample> samples;
  std::vector<std::string> skip_log;  // "<id>\t<reason>"
};

inline CorpusLoad load_corpus_lines(std::span<const std::string> lines, std::size_t min_tokens,
                                    const StopWords& stops) {
  CorpusLoad out;
  for (std::size_t k = 0; k < lines.size(); ++k) {
    auto [id, text] = split_corpus_line(lines[k]);
    if (id.empty()) id = "line" + std::to_string(k + 1);
    if (std::none_of(text.begin(), text.end(), is_word_char)) {
      out.skip_log.push_back(id + "\tempty");
      continue;
    }
    auto t = tokenize(text, id, stops);
    if (t.size() < min_tokens) {
      out.skip_log.push_back(id + "\t" + std::to_string(t.size()) + " tokens < min_tokens " +
                             std::to_string(min_tokens));
      continue;
    }
    out.samples.push_back({out.samples.size(), std::move(t)});
  }
  return out;
}

struct CampaignResult {
  TraceContext context;
  std::vector<SampleResult> samples;
  std::vector<std::string> skip_log;
  std::optional<MetricsSummary> metrics;
  std::vector<FeatureRow> features;
  double aes = 1.0;
  std::size_t synthesize_calls = 0;  // backend calls not answered by the cache
  std::size_t score_calls = 0;
};

struct CampaignOptions {
  std::optional<std::size_t> workers;
  std::shared_ptr<ResponseCache> cache;  // overrides the manifest's cache setting
  bool use_manifest_cache = true;
};

inline std::filesystem::path effective_cache_dir(const RunManifest& m) {
  if (const char* env = std::getenv("LINGUA_SPOOF_CACHE_DIR"); env != nullptr && *env != '\0') {
    return env;
  }
  return m.cache_dir.empty() ? m.output_dir / "cache" : m.cache_dir;
}

inline OracleSet build_oracles(const OracleRoles& roles) {
  std::map<std::string, std::shared_ptr<OracleBackend>> made;
  auto get = [&](const OracleConfig& cfg) {
    auto it = made.find(cfg.endpoint);
    if (it != made.end()) return it->second;
    auto b = make_backend(cfg);
    made.emplace(cfg.endpoint, b);
    return b;
  };
  OracleSet s{get(roles.tts), get(roles.detector), get(roles.embedder), get(roles.mlm), get(roles.annotator)};
  for (const auto& [endpoint, backend] : made) {
    if (!backend->health()) fail(ErrorCode::OracleUnavailable, endpoint + " failed its health check");
  }
  return s;
}

// Linear model over standardized FeatureVector columns, as written by
// `analyze --proxy-out`.
inline ProxyReward load_feature_proxy(const std::filesystem::path& path, Gateway& gateway,
                                      const FamiliarWords& familiar, std::string voice, double aes,
                                      DetectorReport report) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoError, "cannot open proxy model " + path.string());
  auto j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) fail(ErrorCode::ParseError, "proxy model is not JSON");
  std::vector<std::size_t> columns;
  std::vector<double> coef, mean, scale;
  try {
    auto names = j.at("features").get<std::vector<std::string>>();
    coef = j.at("coef").get<std::vector<double>>();
    mean = j.at("means").get<std::vector<double>>();
    scale = j.at("stds").get<std::vector<double>>();
    if (coef.size() != names.size() || mean.size() != names.size() || scale.size() != names.size()) {
      fail(ErrorCode::ParseError, "proxy model arrays differ in length");
    }
    for (const auto& n : names) {
      auto it = std::find(feature_names().begin(), feature_names().end(), n);
      if (it == feature_names().end()) fail(ErrorCode::ParseError, "unknown proxy feature " + n);
      columns.push_back(static_cast<std::size_t>(it - feature_names().begin()));
    }
    const double intercept = j.at("intercept").get<double>();
    auto map = [&gateway, &familiar, voice, aes, report, columns, mean, scale](const Transcript& src,
                                                                              const Transcript& cand) {
      auto a = gateway.synthesize(src, voice);
      auto b = gateway.synthesize(cand, voice);
      auto f = compute_features({src, cand, a, b, aes, report}, gateway, familiar).values();
      std::vector<double> x;
      for (std::size_t k = 0; k < columns.size(); ++k) x.push_back((f[columns[k]] - mean[k]) / scale[k]);
      return x;
    };
    return ProxyReward(coef, intercept, map);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ParseError, std::string("proxy model: ") + e.what());
  }
}

// AES over the clean clips of one (TTS, voice) group. Clips the embedder
// rejects are left out of the centroid.
inline double group_aes(std::span<const Transcript> clean, Gateway& gateway, const std::string& voice,
                        std::size_t workers) {
  std::vector<std::optional<std::vector<double>>> emb(clean.size());
  parallel_for(clean.size(), workers, [&](std::size_t i) {
    try {
      emb[i] = gateway.detector_embed(gateway.synthesize(clean[i], voice), voice);
    } catch (const Error&) {
    }
  });
  VoiceGroup group{voice, {}};
  for (auto& e : emb) {
    if (e) group.embeddings.push_back(std::move(*e));
  }
  return group.embeddings.empty() ? 1.0 : audio_encoder_similarity(group);
}

struct FeatureRows {
  std::vector<FeatureRow> rows;
  std::vector<std::string> errors;  // "<id>\tfeatures: <what>"
};

// One row per attacked sample, y = 1 when the attack flipped it.
inline FeatureRows feature_rows(std::span<const SampleResult> samples, Gateway& gateway, const std::string& voice,
                                double aes, const DetectorReport& report, const FamiliarWords& familiar,
                                std::size_t workers) {
  std::vector<std::optional<FeatureRow>> rows(samples.size());
  std::vector<std::string> errors(samples.size());
  parallel_for(samples.size(), workers, [&](std::size_t i) {
    const auto& s = samples[i];
    if (!s.outcome || s.outcome->status != OutcomeStatus::Attacked) return;
    try {
      auto a = gateway.synthesize(s.outcome->source, voice);
      auto b = gateway.synthesize(s.outcome->adversarial, voice);
      rows[i] = FeatureRow{s.id, voice, s.outcome->flipped ? 1 : 0,
                           extract_features(*s.outcome, a, b, aes, report, gateway, familiar)};
    } catch (const Error& e) {
      errors[i] = s.id + "\tfeatures: " + e.what();
    }
  });
  FeatureRows out;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (rows[i]) out.rows.push_back(std::move(*rows[i]));
    if (!errors[i].empty()) out.errors.push_back(std::move(errors[i]));
  }
  return out;
}

inline std::shared_ptr<ResponseCache> make_cache(const RunManifest& m) {
  switch (m.cache) {
    case CacheMode::Disk: return std::make_shared<DiskCache>(effective_cache_dir(m));
    case CacheMode::Memory: return std::make_shared<MemoryCache>();
    case CacheMode::None: return nullptr;
  }
  return nullptr;
}

inline StopWords manifest_stopwords(const RunManifest& m) {
  return m.stopwords ? StopWords::from_file(*m.stopwords) : StopWords::bundled();
}

inline CampaignResult run_attack_campaign(const RunManifest& m, const CampaignOptions& opts = {}) {
  const StopWords stops = manifest_stopwords(m);
  const OracleSet oracles = build_oracles(m.oracles);

  std::vector<std::string> lines;
  if (m.corpus) {
    std::ifstream in(*m.corpus);
    if (!in) fail(ErrorCode::IoError, "cannot open corpus " + m.corpus->string());
    for (std::string line; std::getline(in, line);) lines.push_back(line);
  } else {
    const auto& spec = *m.stub_corpus;
    std::function<bool(std::string_view)> allow = [](std::string_view) { return true; };
    if (spec.avoid_triggers) {
      auto stub = std::dynamic_pointer_cast<StubBackend>(oracles.detector);
      if (!stub) fail(ErrorCode::ManifestError, "avoid_triggers needs a stub detector");
      const StubDetectorModel model = stub->model();
      allow = [model](std::string_view w) { return !model.fires_on(w); };
    }
    auto texts = stub_corpus(spec.count, spec.seed, allow);
    for (std::size_t k = 0; k < texts.size(); ++k) lines.push_back("stub" + std::to_string(k) + "\t" + texts[k]);
  }
  auto corpus = load_corpus_lines(lines, m.min_tokens, stops);

  std::shared_ptr<ResponseCache> cache = opts.cache;
  if (!cache && opts.use_manifest_cache) cache = make_cache(m);
  Gateway gateway(oracles, cache);

  std::optional<Lexicon> lexicon;
  const bool needs_lexicon = m.attack.strategy == Strategy::WordNetSynonyms ||
                             (m.attack.policy.require_pos_match &&
                              m.attack.policy.pos_source == PosEvidence::WordNet);
  if (needs_lexicon) lexicon = load_lexicon_dir(m.wordnet_dir);
  std::optional<FamiliarWords> familiar;
  if (m.features || (m.mode == AttackMode::Proxy && m.proxy != "lexical")) {
    familiar = FamiliarWords::from_file(m.familiar_words);
  }

  CampaignResult result;
  result.context = {oracles.detector->identity(), m.attack.voice_id, std::string(to_string(m.attack.strategy)),
                    std::string(to_string(m.mode)), m.attack.policy};
  result.skip_log = corpus.skip_log;
  const std::size_t workers = opts.workers.value_or(m.workers);
  const std::size_t n = corpus.samples.size();
  const auto& voice = m.attack.voice_id;

  const bool need_aes = m.features || (m.mode == AttackMode::Proxy && m.proxy != "lexical");
  if (need_aes && n > 0) {
    std::vector<Transcript> clean;
    for (const auto& c : corpus.samples) clean.push_back(c.transcript);
    result.aes = group_aes(clean, gateway, voice, workers);
  }

  std::optional<ProxyReward> proxy;
  if (m.mode == AttackMode::Proxy) {
    if (m.proxy == "lexical") {
      auto stub = std::dynamic_pointer_cast<StubBackend>(oracles.detector);
      if (!stub) fail(ErrorCode::ManifestError, "the lexical proxy needs a stub detector");
      proxy = ProxyReward::lexical(stub->model());
    } else {
      proxy = load_feature_proxy(m.proxy, gateway, *familiar, voice, result.aes, m.detector_report);
    }
  }

  result.samples.resize(n);
  parallel_for(n, workers, [&](std::size_t i) {
    const auto& t = corpus.samples[i].transcript;
    auto& s = result.samples[i];
    s.index = i;
    s.id = t.id();
    AttackContext ctx{gateway, lexicon ? &*lexicon : nullptr, &stops};
    try {
      switch (m.mode) {
        case AttackMode::Greedy: s.outcome = greedy_attack(t, m.attack, ctx); break;
        case AttackMode::Random: s.outcome = random_attack(t, m.attack, ctx, m.seed); break;
        case AttackMode::Proxy: s.outcome = proxy_attack(t, m.attack, *proxy, ctx); break;
      }
    } catch (const Error& e) {
      s.outcome.reset();
      s.error = e.what();
    }
  });

  std::vector<AttackOutcome> done;
  for (const auto& s : result.samples) {
    if (s.outcome) done.push_back(*s.outcome);
  }
  if (!done.empty()) result.metrics = compute_metrics(done);

  if (m.features) {
    auto f = feature_rows(result.samples, gateway, voice, result.aes, m.detector_report, *familiar, workers);
    result.features = std::move(f.rows);
    result.skip_log.insert(result.skip_log.end(), f.errors.begin(), f.errors.end());
  }
  result.synthesize_calls = gateway.counters().synthesize.load();
  result.score_calls = gateway.counters().score.load();
  return result;
}

// Feature rows recomputed from a trace: AES per voice over the sources of every
// non-skipped entry, then one row per attacked sample.
inline FeatureRows trace_features(std::span<const TraceEntry> entries, Gateway& gateway,
                                  const FamiliarWords& familiar, const DetectorReport& report,
                                  std::size_t workers) {
  std::vector<std::string> voices;
  for (const auto& e : entries) {
    if (std::find(voices.begin(), voices.end(), e.context.voice) == voices.end()) voices.push_back(e.context.voice);
  }
  FeatureRows out;
  for (const auto& voice : voices) {
    std::vector<Transcript> clean;
    std::vector<SampleResult> samples;
    for (const auto& e : entries) {
      if (e.context.voice != voice) continue;
      if (e.sample.outcome) clean.push_back(e.sample.outcome->source);
      samples.push_back(e.sample);
    }
    const double aes = clean.empty() ? 1.0 : group_aes(clean, gateway, voice, workers);
    auto f = feature_rows(samples, gateway, voice, aes, report, familiar, workers);
    std::move(f.rows.begin(), f.rows.end(), std::back_inserter(out.rows));
    std::move(f.errors.begin(), f.errors.end(), std::back_inserter(out.errors));
  }
  return out;
}

inline void write_text_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::IoError, "cannot write " + path.string());
  out << content;
  if (!out) fail(ErrorCode::IoError, "write failed for " + path.string());
}

inline std::string trace_text(const CampaignResult& r) {
  std::string out;
  for (const auto& s : r.samples) out += trace_line(s, r.context).dump() + "\n";
  return out;
}

inline std::string metrics_text(const CampaignResult& r) {
  nlohmann::json j = r.metrics ? metrics_to_json(*r.metrics) : nlohmann::json::object();
  j["detector"] = r.context.detector;
  j["voice_id"] = r.context.voice;
  j["strategy"] = r.context.strategy;
  j["mode"] = r.context.mode;
  return j.dump(2) + "\n";
}

inline std::string features_text(const CampaignResult& r) {
  std::ostringstream os;
  write_features_csv(r.features, os);
  return os.str();
}

// trace.jsonl, metrics.json, features.csv and skipped.tsv are pure functions of
// the run; run.json echoes the manifest with a timestamp.
inline void write_campaign_outputs(const CampaignResult& r, const RunManifest& m) {
  std::filesystem::create_directories(m.output_dir);
  write_text_file(m.output_dir / "trace.jsonl", trace_text(r));
  write_text_file(m.output_dir / "metrics.json", metrics_text(r));
  if (m.features) write_text_file(m.output_dir / "features.csv", features_text(r));
  std::string skipped;
  for (const auto& s : r.skip_log) skipped += s + "\n";
  for (const auto& s : r.samples) {
    if (!s.outcome) skipped += s.id + "\t" + s.error + "\n";
  }
  write_text_file(m.output_dir / "skipped.tsv", skipped);
  nlohmann::json echo{{"started_at", std::time(nullptr)},
                      {"detector", r.context.detector},
                      {"voice_id", r.context.voice},
                      {"strategy", r.context.strategy},
                      {"mode", r.context.mode},
                      {"budget", m.attack.budget},
                      {"policy", policy_to_json(m.attack.policy)},
                      {"min_tokens", m.min_tokens},
                      {"samples", r.samples.size()},
                      {"backend_synthesize_calls", r.synthesize_calls},
                      {"backend_score_calls", r.score_calls}};
  write_text_file(m.output_dir / "run.json", echo.dump(2) + "\n");
}

// --- audit -------------------------------------------------------------------

struct AuditFinding {
  std::string id;
  std::string problem;
};

struct AuditReport {
  std::size_t checked = 0;  // outcomes with at least one record
  std::size_t passed = 0;
  std::vector<AuditFinding> findings;
};

// Re-runs check_sim on every perturbed outcome under the policy recorded in
// its trace line, and checks that the records describe the actual diff.
inline AuditReport audit_trace(std::span<const TraceEntry> entries, Gateway& gateway, const Lexicon* lexicon) {
  AuditReport report;
  for (const auto& e : entries) {
    if (!e.sample.outcome || e.sample.outcome->records.empty()) continue;
    const auto& o = *e.sample.outcome;
    ++report.checked;
    std::string problem;
    try {
      auto v = check_sim(o.source, o.adversarial, e.context.policy, SimContext{gateway, lexicon});
      if (!v.passed) problem = "check_sim failed (" + v.reason + ", cosine " + format_double(v.cosine) + ")";
    } catch (const Error& err) {
      problem = err.what();
    }
    if (problem.empty()) {
      std::size_t diffs = 0;
      for (std::size_t i = 0; i < o.source.size(); ++i) {
        if (o.source[i].surface != o.adversarial[i].surface) ++diffs;
      }
      const bool consistent = std::all_of(o.records.begin(), o.records.end(), [&](const PerturbationRecord& r) {
        return r.position < o.adversarial.size() && o.adversarial[r.position].surface == r.replacement &&
               o.source[r.position].surface == r.original;
      });
      if (!consistent || diffs == 0 || diffs > o.records.size()) problem = "records disagree with the text diff";
    }
    if (problem.empty()) {
      ++report.passed;
    } else {
      report.findings.push_back({e.sample.id, problem});
    }
  }
  return report;
}

// --- analysis ----------------------------------------------------------------

inline DesignMatrix design_from_features(std::span<const FeatureRow> rows) {
  if (rows.empty()) fail(ErrorCode::EmptyRun, "no feature rows");
  DesignMatrix m;
  m.x.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(kFeatureCount));
  m.y.resize(static_cast<Eigen::Index>(rows.size()));
  for (auto n : feature_names()) m.names.emplace_back(n);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto v = rows[i].features.values();
    for (std::size_t j = 0; j < kFeatureCount; ++j) {
      m.x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v[j];
    }
    m.y[static_cast<Eigen::Index>(i)] = rows[i].y;
  }
  return m;
}

struct FeatureTTest {
  std::string feature;
  TTestResult result;
};

// Bona-fide (flipped) minus spoof group, per feature. Features with a
// degenerate group are left out.
inline std::vector<FeatureTTest> feature_t_tests(std::span<const FeatureRow> rows) {
  std::vector<FeatureTTest> out;
  for (std::size_t j = 0; j < kFeatureCount; ++j) {
    std::vector<double> bona, spoof;
    for (const auto& r : rows) (r.y == 1 ? bona : spoof).push_back(r.features.values()[j]);
    try {
      out.push_back({std::string(feature_names()[j]), welch_t_test(bona, spoof)});
    } catch (const Error& e) {
      if (e.code() != ErrorCode::DegenerateSample) throw;
    }
  }
  return out;
}

inline nlohmann::json proxy_model_json(const FittedAnalysis& a) {
  nlohmann::json j;
  std::vector<std::string> names;
  std::vector<double> coef;
  for (std::size_t k = 1; k < a.summary.rows.size(); ++k) {
    names.push_back(a.summary.rows[k].name);
    coef.push_back(a.summary.rows[k].coef);
  }
  j["features"] = names;
  j["coef"] = coef;
  j["intercept"] = a.summary.rows.front().coef;
  j["means"] = a.means;
  j["stds"] = a.stds;
  return j;
}

}  // namespace lingua_spoof
