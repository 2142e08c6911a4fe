#include <set>

#include <gtest/gtest.h>

#include "lingua_spoof/attack.hpp"

using namespace lingua_spoof;

namespace {

const Lexicon& fixture() {
  static const Lexicon lex = load_lexicon_dir(std::filesystem::path(LINGUA_SPOOF_FIXTURES) / "wordnet20");
  return lex;
}

// Detector that rewards exactly the bins of `triggers`.
StubDetectorModel rewarding(std::initializer_list<std::string_view> triggers, double weight = 8.0) {
  StubDetectorModel m;
  m.bias = -4.0;
  for (auto w : triggers) m.weights[stub_bin(w)] = weight;
  return m;
}

struct Rig {
  explicit Rig(StubDetectorModel m) : model(m), gateway(OracleSet::uniform(std::make_shared<StubBackend>(5, m))) {}
  StubDetectorModel model;
  Gateway gateway;
  AttackContext ctx() { return {gateway, &fixture()}; }
};

const char* kSentence = "my friend said the man is a successful actor with a quick car";

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error";
  return ErrorCode::InvalidArgument;
}

void expect_consistent(const AttackOutcome& o, const StubDetectorModel& m, const AttackConfig& cfg) {
  EXPECT_LE(o.queries_used, cfg.budget);
  EXPECT_DOUBLE_EQ(o.initial_score, m.text_probability(o.source.raw()));
  EXPECT_DOUBLE_EQ(o.terminal_score, m.text_probability(o.adversarial.raw()));
  if (o.status == OutcomeStatus::AlreadyBonafide) {
    EXPECT_FALSE(o.flipped);
  } else {
    EXPECT_EQ(o.flipped, o.terminal_score >= cfg.threshold);
  }
  std::set<std::size_t> positions;
  for (const auto& r : o.records) positions.insert(r.position);
  ASSERT_EQ(o.source.size(), o.adversarial.size());
  for (std::size_t i = 0; i < o.source.size(); ++i) {
    if (o.source[i].surface != o.adversarial[i].surface) {
      EXPECT_TRUE(positions.count(i)) << i;
    }
  }
}

}  // namespace

TEST(Label, BoundaryIsBonafide) {
  EXPECT_EQ(label_of(0.5), Label::Bonafide);
  EXPECT_EQ(label_of(std::nextafter(0.5, 0.0)), Label::Spoof);
  EXPECT_EQ(label_of(0.3, 0.3), Label::Bonafide);
  EXPECT_EQ(code_of([] { label_of(1.5); }), ErrorCode::InvalidArgument);
  EXPECT_EQ(code_of([] { label_of(std::nan("")); }), ErrorCode::InvalidArgument);
}

TEST(Strategy, Names) {
  EXPECT_EQ(strategy_from_string("wordnet"), Strategy::WordNetSynonyms);
  EXPECT_EQ(strategy_from_string(to_string(Strategy::MlmTopK)), Strategy::MlmTopK);
  EXPECT_EQ(code_of([] { strategy_from_string("bert"); }), ErrorCode::InvalidArgument);
}

TEST(Candidates, WordNetAndMlmFilters) {
  Rig r(rewarding({}));
  auto ctx = r.ctx();
  const auto t = tokenize("The Man is quick");
  AttackConfig cfg;
  EXPECT_EQ(candidate_words(t, 1, cfg, ctx), std::vector<std::string>{"guy"});
  cfg.strategy = Strategy::MlmTopK;
  cfg.candidates_per_word = 6;
  const auto mlm = candidate_words(t, 1, cfg, ctx);
  EXPECT_LE(mlm.size(), 6u);
  for (const auto& w : mlm) {
    EXPECT_NE(to_lower(w), "man");
    EXPECT_EQ(w.find(' '), std::string::npos);
  }
  AttackContext no_lex{r.gateway};
  cfg.strategy = Strategy::WordNetSynonyms;
  EXPECT_EQ(code_of([&] { candidate_words(t, 1, cfg, no_lex); }), ErrorCode::InvalidArgument);
}

TEST(Importance, MatchesDirectModelEvaluation) {
  Rig r(rewarding({"friend", "quick"}, 1.5));
  auto ctx = r.ctx();
  const auto t = tokenize(kSentence);
  AttackConfig cfg;
  QueryLedger ledger(100);
  const auto ranking = rank_importance(t, cfg, ctx, ledger);
  EXPECT_TRUE(ranking.complete);
  std::vector<ImportanceEntry> expected;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i].is_stopword) continue;
    expected.push_back({i, r.model.text_probability(mask_word(t, i).raw())});
  }
  std::stable_sort(expected.begin(), expected.end(),
                   [](const ImportanceEntry& a, const ImportanceEntry& b) { return a.p > b.p; });
  EXPECT_EQ(ranking.entries, expected);
  for (std::size_t k = 1; k < ranking.entries.size(); ++k) {
    const auto& a = ranking.entries[k - 1];
    const auto& b = ranking.entries[k];
    if (a.p == b.p) {
      EXPECT_LT(a.position, b.position);
    }
  }
}

TEST(Importance, StopsAtBudgetAndTruncates) {
  Rig r(rewarding({}));
  auto ctx = r.ctx();
  const auto t = tokenize(kSentence);
  AttackConfig cfg;
  QueryLedger small(2);
  const auto partial = rank_importance(t, cfg, ctx, small);
  EXPECT_FALSE(partial.complete);
  EXPECT_EQ(small.used(), 2u);
  cfg.max_positions = 3;
  QueryLedger big(100);
  EXPECT_EQ(rank_importance(t, cfg, ctx, big).entries.size(), 3u);
  QueryLedger l(5);
  EXPECT_EQ(code_of([&] { rank_importance(tokenize("word"), cfg, ctx, l); }), ErrorCode::EmptyTranscript);
}

TEST(Greedy, FlipsThroughTheRewardedSynonym) {
  Rig r(rewarding({"player"}));
  auto ctx = r.ctx();
  const auto t = tokenize(kSentence);
  ASSERT_LT(r.model.text_probability(t.raw()), 0.5);
  AttackConfig cfg;
  const auto o = greedy_attack(t, cfg, ctx);
  EXPECT_EQ(o.status, OutcomeStatus::Attacked);
  EXPECT_TRUE(o.flipped);
  ASSERT_EQ(o.records.size(), 1u);
  EXPECT_EQ(o.records[0].original, "actor");
  EXPECT_EQ(o.records[0].replacement, "player");
  EXPECT_DOUBLE_EQ(o.records[0].score_before, o.initial_score);
  expect_consistent(o, r.model, cfg);
  EXPECT_TRUE(check_sim(o.source, o.adversarial, cfg.policy, ctx.sim()).passed);
  EXPECT_DOUBLE_EQ(o.semantic_sim, cosine_similarity(r.gateway.text_embed(o.source.raw()),
                                                     r.gateway.text_embed(o.adversarial.raw())));
}

TEST(Greedy, AlreadyBonafideCostsOneQuery) {
  Rig r(rewarding({"friend"}));
  auto ctx = r.ctx();
  const auto o = greedy_attack(tokenize(kSentence), {}, ctx);
  EXPECT_EQ(o.status, OutcomeStatus::AlreadyBonafide);
  EXPECT_EQ(o.queries_used, 1u);
  EXPECT_TRUE(o.records.empty());
  EXPECT_FALSE(o.flipped);
}

TEST(Greedy, NoUsefulSubstitutionLeavesTextAlone) {
  Rig r(rewarding({}));
  auto ctx = r.ctx();
  AttackConfig cfg;
  const auto o = greedy_attack(tokenize(kSentence), cfg, ctx);
  EXPECT_FALSE(o.flipped);
  EXPECT_TRUE(o.records.empty());
  EXPECT_EQ(o.adversarial, o.source);
  EXPECT_EQ(o.semantic_sim, 1.0);
  expect_consistent(o, r.model, cfg);
}

TEST(Greedy, BudgetIsAHardCap) {
  Rig r(rewarding({"player"}));
  auto ctx = r.ctx();
  for (std::size_t budget : {1u, 2u, 5u, 9u}) {
    AttackConfig cfg;
    cfg.budget = budget;
    const auto o = greedy_attack(tokenize(kSentence), cfg, ctx);
    EXPECT_LE(o.queries_used, budget);
    EXPECT_TRUE(o.budget_exhausted || o.flipped) << budget;
    expect_consistent(o, r.model, cfg);
  }
  AttackConfig zero;
  zero.budget = 0;
  EXPECT_EQ(code_of([&] { greedy_attack(tokenize(kSentence), zero, ctx); }), ErrorCode::InvalidArgument);
}

TEST(Greedy, ScoresNeverDecreaseOnTheStubCorpus) {
  Rig r(planted_detector(11));
  Lexicon lex = load_lexicon_dir(LINGUA_SPOOF_DATA_DIR "/wordnet-mini");
  AttackContext full{r.gateway, &lex};
  AttackConfig cfg;
  cfg.budget = 200;
  for (const auto& line : stub_corpus(25, 11)) {
    const auto o = greedy_attack(tokenize(line), cfg, full);
    expect_consistent(o, r.model, cfg);
    double last = o.initial_score;
    for (const auto& rec : o.records) {
      EXPECT_DOUBLE_EQ(rec.score_before, last);
      EXPECT_GT(rec.score_after, rec.score_before);
      last = rec.score_after;
    }
  }
}

TEST(Random, DeterministicPerSeed) {
  Rig r(planted_detector(11));
  Lexicon lex = load_lexicon_dir(LINGUA_SPOOF_DATA_DIR "/wordnet-mini");
  AttackContext ctx{r.gateway, &lex};
  AttackConfig cfg;
  std::size_t differ = 0;
  for (const auto& line : stub_corpus(10, 4)) {
    const auto t = tokenize(line);
    const auto a = random_attack(t, cfg, ctx, 1);
    const auto b = random_attack(t, cfg, ctx, 1);
    EXPECT_EQ(a.adversarial, b.adversarial);
    EXPECT_EQ(a.records, b.records);
    expect_consistent(a, r.model, cfg);
    differ += random_attack(t, cfg, ctx, 2).adversarial.raw() != a.adversarial.raw();
  }
  EXPECT_GT(differ, 0u);
}

TEST(Proxy, ExactSurrogateFindsTheFlipCheaply) {
  Rig r(rewarding({"player"}));
  auto ctx = r.ctx();
  AttackConfig cfg;
  cfg.budget = 10;
  const auto proxy = ProxyReward::lexical(r.model);
  const auto t = tokenize(kSentence);
  const auto o = proxy_attack(t, cfg, proxy, ctx);
  EXPECT_TRUE(o.flipped);
  EXPECT_EQ(o.queries_used, 2u);  // clean clip plus the top candidate
  expect_consistent(o, r.model, cfg);
  const auto known = proxy_attack(t, cfg, proxy, ctx, r.model.text_probability(t.raw()));
  EXPECT_EQ(known.queries_used, 1u);
  EXPECT_EQ(known.adversarial, o.adversarial);
}

TEST(Proxy, CandidatePoolIsSortedUniqueAndSimPassing) {
  Rig r(planted_detector(2));
  auto ctx = r.ctx();
  AttackConfig cfg;
  const auto t = tokenize(kSentence);
  const auto pool = proxy_candidate_pool(t, cfg, ProxyReward::lexical(r.model), ctx);
  ASSERT_FALSE(pool.empty());
  std::set<std::string> seen;
  for (std::size_t k = 0; k < pool.size(); ++k) {
    if (k > 0) {
      EXPECT_GE(pool[k - 1].reward, pool[k].reward);
    }
    EXPECT_TRUE(seen.insert(pool[k].transcript.raw()).second);
    EXPECT_NE(pool[k].transcript.raw(), t.raw());
    EXPECT_TRUE(check_sim(t, pool[k].transcript, cfg.policy, ctx.sim()).passed);
    EXPECT_DOUBLE_EQ(pool[k].reward, r.model.text_probability(pool[k].transcript.raw()));
  }
}

TEST(Proxy, BudgetCountsTheInitialQuery) {
  Rig r(rewarding({}));
  auto ctx = r.ctx();
  AttackConfig cfg;
  cfg.budget = 3;
  const auto o = proxy_attack(tokenize(kSentence), cfg, ProxyReward::lexical(planted_detector(9)), ctx);
  EXPECT_EQ(o.queries_used, 3u);
  EXPECT_TRUE(o.budget_exhausted);
  EXPECT_FALSE(o.flipped);
}

TEST(Proxy, DimensionMismatch) {
  ProxyReward p({1.0, 2.0}, 0.0, [](const Transcript&, const Transcript&) { return std::vector<double>{1.0}; });
  const auto t = tokenize("a b");
  EXPECT_EQ(code_of([&] { p(t, t); }), ErrorCode::DimensionMismatch);
  ProxyReward q({1.0, -1.0}, 0.5, [](const Transcript&, const Transcript&) { return std::vector<double>{2.0, 1.0}; });
  EXPECT_DOUBLE_EQ(q(t, t), sigmoid(1.5));
}
