#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include "lingua_spoof/constraints.hpp"
#include "lingua_spoof/error.hpp"
#include "lingua_spoof/hash.hpp"
#include "lingua_spoof/oracle.hpp"
#include "lingua_spoof/stub.hpp"
#include "lingua_spoof/transcript.hpp"
#include "lingua_spoof/wordnet.hpp"

namespace lingua_spoof {

enum class Label { Spoof, Bonafide };

inline std::string_view to_string(Label l) { return l == Label::Bonafide ? "bonafide" : "spoof"; }

// The boundary counts as bona-fide.
inline Label label_of(double score, double threshold = 0.5) {
  if (!(score >= 0.0 && score <= 1.0)) fail(ErrorCode::InvalidArgument, "score outside [0,1]");
  return score >= threshold ? Label::Bonafide : Label::Spoof;
}

enum class Strategy { WordNetSynonyms, MlmTopK };

inline std::string_view to_string(Strategy s) {
  return s == Strategy::WordNetSynonyms ? "wordnet" : "mlm";
}

inline Strategy strategy_from_string(std::string_view s) {
  if (s == "wordnet") return Strategy::WordNetSynonyms;
  if (s == "mlm") return Strategy::MlmTopK;
  fail(ErrorCode::InvalidArgument, "unknown strategy '" + std::string(s) + "'");
}

struct AttackConfig {
  Strategy strategy = Strategy::WordNetSynonyms;
  std::size_t candidates_per_word = 0;  // 0: 50 for WordNet, 48 for MLM
  SimPolicy policy;
  std::size_t budget = 500;
  double threshold = 0.5;
  std::string voice_id = "default";
  std::optional<std::size_t> max_positions;
};

inline std::size_t candidate_cap(const AttackConfig& cfg) {
  if (cfg.candidates_per_word != 0) return cfg.candidates_per_word;
  return cfg.strategy == Strategy::WordNetSynonyms ? kMaxSynonyms : 48;
}

inline void validate(const AttackConfig& cfg) {
  if (cfg.budget < 1) fail(ErrorCode::InvalidArgument, "budget must be >= 1");
  if (!(cfg.threshold >= 0.0 && cfg.threshold <= 1.0)) {
    fail(ErrorCode::InvalidArgument, "threshold outside [0,1]");
  }
  validate(cfg.policy);
}

struct PerturbationRecord {
  std::size_t position = 0;
  std::string original;
  std::string replacement;
  double score_before = 0.0;
  double score_after = 0.0;
  friend bool operator==(const PerturbationRecord&, const PerturbationRecord&) = default;
};

enum class OutcomeStatus { Attacked, AlreadyBonafide };

struct AttackOutcome {
  Transcript source;
  Transcript adversarial;
  std::vector<PerturbationRecord> records;
  bool flipped = false;
  std::size_t queries_used = 0;
  double semantic_sim = 1.0;
  double initial_score = 0.0;
  double terminal_score = 0.0;
  OutcomeStatus status = OutcomeStatus::Attacked;
  bool budget_exhausted = false;
};

struct ImportanceEntry {
  std::size_t position = 0;
  double p = 0.0;
  friend bool operator==(const ImportanceEntry&, const ImportanceEntry&) = default;
};

struct ImportanceRanking {
  std::vector<ImportanceEntry> entries;
  bool complete = true;
};

struct AttackContext {
  Gateway& gateway;
  const Lexicon* lexicon = nullptr;
  const StopWords* stops = &StopWords::bundled();

  SimContext sim() const { return {gateway, lexicon}; }
};

namespace detail {

inline double detector_on(AttackContext& ctx, const AttackConfig& cfg, const Transcript& t,
                          QueryLedger& ledger) {
  return ctx.gateway.detector_score(ctx.gateway.synthesize(t, cfg.voice_id), ledger);
}

inline bool is_budget_error(const Error& e) { return e.code() == ErrorCode::BudgetExhausted; }

// One token after re-tokenisation: word characters with optional inner - or '.
inline bool is_single_word(std::string_view w) {
  if (w.empty() || !is_word_char(w.front()) || !is_word_char(w.back())) return false;
  return std::all_of(w.begin(), w.end(), [](char c) { return is_word_char(c) || c == '-' || c == '\''; });
}

inline std::vector<std::size_t> attackable_positions(const Transcript& t, const SimPolicy& p) {
  std::vector<std::size_t> out;
  for (const auto& tok : t.tokens()) {
    if (!(p.skip_stopwords && tok.is_stopword)) out.push_back(tok.index);
  }
  return out;
}

inline double text_cosine(AttackContext& ctx, const Transcript& a, const Transcript& b) {
  if (a.raw() == b.raw()) return 1.0;
  return cosine_similarity(ctx.gateway.text_embed(a.raw()), ctx.gateway.text_embed(b.raw()));
}

}  // namespace detail

// Substitution candidates for position i of t, in strategy order.
inline std::vector<std::string> candidate_words(const Transcript& t, std::size_t i,
                                                const AttackConfig& cfg, AttackContext& ctx) {
  std::vector<std::string> raw;
  if (cfg.strategy == Strategy::WordNetSynonyms) {
    if (ctx.lexicon == nullptr) fail(ErrorCode::InvalidArgument, "WordNet strategy needs a lexicon");
    raw = synonyms(*ctx.lexicon, t[i].surface, std::nullopt, candidate_cap(cfg));
  } else {
    for (auto& c : ctx.gateway.mlm_candidates(t, i, candidate_cap(cfg))) raw.push_back(c.word);
  }
  const std::string current = to_lower(t[i].surface);
  std::vector<std::string> out;
  for (auto& w : raw) {
    if (!detail::is_single_word(w) || to_lower(w) == current) continue;
    out.push_back(std::move(w));
  }
  return out;
}

// p_i = F(G(T without w_i)), sorted descending with ties to the lower index.
inline ImportanceRanking rank_importance(const Transcript& t, const AttackConfig& cfg,
                                         AttackContext& ctx, QueryLedger& ledger) {
  if (t.size() < 2) fail(ErrorCode::EmptyTranscript, "importance needs at least two words");
  ImportanceRanking out;
  for (auto i : detail::attackable_positions(t, cfg.policy)) {
    try {
      out.entries.push_back({i, detail::detector_on(ctx, cfg, mask_word(t, i), ledger)});
    } catch (const Error& e) {
      if (!detail::is_budget_error(e)) throw;
      out.complete = false;
      break;
    }
  }
  std::stable_sort(out.entries.begin(), out.entries.end(),
                   [](const ImportanceEntry& a, const ImportanceEntry& b) { return a.p > b.p; });
  if (cfg.max_positions && out.entries.size() > *cfg.max_positions) {
    out.entries.resize(*cfg.max_positions);
  }
  return out;
}

namespace detail {

// Initial query plus the already-bona-fide short cut shared by every attack.
inline std::optional<AttackOutcome> start(const Transcript& t, const AttackConfig& cfg,
                                          AttackContext& ctx, QueryLedger& ledger,
                                          AttackOutcome& out, std::optional<double> known) {
  validate(cfg);
  out.source = t;
  out.adversarial = t;
  out.initial_score = known ? *known : detector_on(ctx, cfg, t, ledger);
  out.terminal_score = out.initial_score;
  if (label_of(out.initial_score, cfg.threshold) == Label::Bonafide) {
    out.status = OutcomeStatus::AlreadyBonafide;
    out.queries_used = ledger.used();
    return out;
  }
  return std::nullopt;
}

inline void finish(AttackOutcome& out, const AttackConfig& cfg, AttackContext& ctx,
                   const QueryLedger& ledger) {
  out.queries_used = ledger.used();
  out.flipped = label_of(out.terminal_score, cfg.threshold) == Label::Bonafide;
  out.semantic_sim = text_cosine(ctx, out.source, out.adversarial);
}

}  // namespace detail

// Importance-ordered greedy substitution: at each position keep the SIM-passing
// candidate with the highest detector score, accept it only if it beats the
// running score, stop on a flip or when the budget runs out.
inline AttackOutcome greedy_attack(const Transcript& t, const AttackConfig& cfg, AttackContext& ctx) {
  QueryLedger ledger(cfg.budget);
  AttackOutcome out;
  if (auto done = detail::start(t, cfg, ctx, ledger, out, std::nullopt)) return *done;

  auto ranking = rank_importance(t, cfg, ctx, ledger);
  out.budget_exhausted = !ranking.complete;
  Transcript cur = t;
  double p_cur = out.initial_score;
  for (const auto& entry : ranking.entries) {
    if (out.budget_exhausted) break;
    const std::size_t i = entry.position;
    std::optional<std::pair<double, Transcript>> best;
    std::string best_word;
    for (const auto& word : candidate_words(cur, i, cfg, ctx)) {
      Transcript cand = replace_word(cur, i, word, *ctx.stops);
      if (!check_sim(t, cand, cfg.policy, ctx.sim()).passed) continue;
      double p;
      try {
        p = detail::detector_on(ctx, cfg, cand, ledger);
      } catch (const Error& e) {
        if (!detail::is_budget_error(e)) throw;
        out.budget_exhausted = true;
        break;
      }
      if (!best || p > best->first) {
        best.emplace(p, std::move(cand));
        best_word = word;
      }
    }
    if (best && best->first > p_cur) {
      out.records.push_back({i, cur[i].surface, best->second[i].surface, p_cur, best->first});
      cur = std::move(best->second);
      p_cur = best->first;
      if (label_of(p_cur, cfg.threshold) == Label::Bonafide) break;
    }
  }
  out.adversarial = cur;
  out.terminal_score = p_cur;
  detail::finish(out, cfg, ctx, ledger);
  return out;
}

// Baseline: positions in seeded random order, one uniformly drawn SIM-passing
// candidate per position, accepted whatever its score.
inline AttackOutcome random_attack(const Transcript& t, const AttackConfig& cfg, AttackContext& ctx,
                                   std::uint64_t seed) {
  QueryLedger ledger(cfg.budget);
  AttackOutcome out;
  if (auto done = detail::start(t, cfg, ctx, ledger, out, std::nullopt)) return *done;

  const std::uint64_t stream = mix64(seed, fnv1a64(t.id() + "\x1f" + t.raw()));
  auto positions = detail::attackable_positions(t, cfg.policy);
  for (std::size_t k = positions.size(); k > 1; --k) {
    std::swap(positions[k - 1], positions[mix64(stream, k) % k]);
  }
  if (cfg.max_positions && positions.size() > *cfg.max_positions) {
    positions.resize(*cfg.max_positions);
  }
  Transcript cur = t;
  double p_cur = out.initial_score;
  for (auto i : positions) {
    std::vector<Transcript> passing;
    std::vector<std::string> words;
    for (const auto& word : candidate_words(cur, i, cfg, ctx)) {
      Transcript cand = replace_word(cur, i, word, *ctx.stops);
      if (check_sim(t, cand, cfg.policy, ctx.sim()).passed) passing.push_back(std::move(cand));
    }
    if (passing.empty()) continue;
    Transcript pick = passing[mix64(stream ^ 0x5eed, i) % passing.size()];
    double p;
    try {
      p = detail::detector_on(ctx, cfg, pick, ledger);
    } catch (const Error& e) {
      if (!detail::is_budget_error(e)) throw;
      out.budget_exhausted = true;
      break;
    }
    out.records.push_back({i, cur[i].surface, pick[i].surface, p_cur, p});
    cur = std::move(pick);
    p_cur = p;
    if (label_of(p_cur, cfg.threshold) == Label::Bonafide) break;
  }
  out.adversarial = cur;
  out.terminal_score = p_cur;
  detail::finish(out, cfg, ctx, ledger);
  return out;
}

// Logistic surrogate over a feature map of (source, candidate).
class ProxyReward {
 public:
  using FeatureMap = std::function<std::vector<double>(const Transcript&, const Transcript&)>;

  ProxyReward(std::vector<double> coef, double intercept, FeatureMap map)
      : coef_(std::move(coef)), intercept_(intercept), map_(std::move(map)) {}

  double operator()(const Transcript& source, const Transcript& candidate) const {
    auto x = map_(source, candidate);
    if (x.size() != coef_.size()) {
      fail(ErrorCode::DimensionMismatch, "proxy expects " + std::to_string(coef_.size()) +
                                             " features, got " + std::to_string(x.size()));
    }
    double z = intercept_;
    for (std::size_t j = 0; j < x.size(); ++j) z += coef_[j] * x[j];
    return sigmoid(z);
  }

  std::span<const double> coefficients() const { return coef_; }
  double intercept() const { return intercept_; }

  // Hashed token-bin counts of the candidate text with a stub detector's own
  // weights: the proxy knows exactly what the detector rewards.
  static ProxyReward lexical(const StubDetectorModel& model) {
    std::vector<double> coef(model.weights.begin(), model.weights.end());
    return ProxyReward(std::move(coef), model.bias, [](const Transcript&, const Transcript& c) {
      std::vector<double> counts(kStubBins, 0.0);
      for (const auto& tok : c.tokens()) counts[stub_bin(tok.surface)] += 1.0;
      return counts;
    });
  }

 private:
  std::vector<double> coef_;
  double intercept_;
  FeatureMap map_;
};

struct ProxyCandidate {
  Transcript transcript;
  double reward = 0.0;
};

// Runs the greedy recipe with the proxy standing in for the detector and
// returns every SIM-passing candidate it looked at, best reward first.
inline std::vector<ProxyCandidate> proxy_candidate_pool(const Transcript& t, const AttackConfig& cfg,
                                                        const ProxyReward& proxy, AttackContext& ctx) {
  std::vector<ImportanceEntry> ranking;
  if (t.size() >= 2) {
    for (auto i : detail::attackable_positions(t, cfg.policy)) {
      ranking.push_back({i, proxy(t, mask_word(t, i))});
    }
  }
  std::stable_sort(ranking.begin(), ranking.end(),
                   [](const ImportanceEntry& a, const ImportanceEntry& b) { return a.p > b.p; });
  if (cfg.max_positions && ranking.size() > *cfg.max_positions) ranking.resize(*cfg.max_positions);

  std::vector<ProxyCandidate> pool;
  std::unordered_set<std::string> seen{t.raw()};
  Transcript cur = t;
  double r_cur = proxy(t, t);
  for (const auto& entry : ranking) {
    const std::size_t i = entry.position;
    std::optional<ProxyCandidate> best;
    for (const auto& word : candidate_words(cur, i, cfg, ctx)) {
      Transcript cand = replace_word(cur, i, word, *ctx.stops);
      if (!check_sim(t, cand, cfg.policy, ctx.sim()).passed) continue;
      const double r = proxy(t, cand);
      if (seen.insert(cand.raw()).second) pool.push_back({cand, r});
      if (!best || r > best->reward) best = ProxyCandidate{std::move(cand), r};
    }
    if (best && best->reward > r_cur) {
      cur = std::move(best->transcript);
      r_cur = best->reward;
    }
  }
  std::stable_sort(pool.begin(), pool.end(), [](const ProxyCandidate& a, const ProxyCandidate& b) {
    return a.reward > b.reward;
  });
  return pool;
}

// Verifies the proxy's top candidates against the detector, at most
// cfg.budget of them, stopping at the first flip. Without a known
// initial_score the clean clip is scored first and that query comes out of the
// same budget.
inline AttackOutcome proxy_attack(const Transcript& t, const AttackConfig& cfg, const ProxyReward& proxy,
                                  AttackContext& ctx, std::optional<double> initial_score = std::nullopt) {
  QueryLedger ledger(cfg.budget);
  AttackOutcome out;
  if (auto done = detail::start(t, cfg, ctx, ledger, out, initial_score)) return *done;

  const auto pool = proxy_candidate_pool(t, cfg, proxy, ctx);
  const Transcript* best = nullptr;
  double best_p = out.initial_score;
  for (const auto& cand : pool) {
    if (ledger.exhausted()) {
      out.budget_exhausted = true;
      break;
    }
    const double p = detail::detector_on(ctx, cfg, cand.transcript, ledger);
    if (p > best_p) {
      best = &cand.transcript;
      best_p = p;
    }
    if (label_of(p, cfg.threshold) == Label::Bonafide) break;
  }
  if (best != nullptr) {
    out.adversarial = *best;
    out.terminal_score = best_p;
    for (std::size_t i = 0; i < t.size(); ++i) {
      if (t[i].surface != best->operator[](i).surface) {
        out.records.push_back({i, t[i].surface, (*best)[i].surface, out.initial_score, best_p});
      }
    }
  }
  detail::finish(out, cfg, ctx, ledger);
  return out;
}

}  // namespace lingua_spoof
