#include <random>

#include <gtest/gtest.h>

#include "lingua_spoof/constraints.hpp"
#include "lingua_spoof/stub.hpp"

using namespace lingua_spoof;

namespace {

const Lexicon& fixture() {
  static const Lexicon lex = load_lexicon_dir(std::filesystem::path(LINGUA_SPOOF_FIXTURES) / "wordnet20");
  return lex;
}

struct Rig {
  Gateway gateway{OracleSet::uniform(std::make_shared<StubBackend>(3))};
  SimContext ctx() { return {gateway, &fixture()}; }
};

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error";
  return ErrorCode::InvalidArgument;
}

}  // namespace

TEST(Cosine, Examples) {
  const std::vector<double> a{1, 0, 0}, b{0, 2, 0}, c{-3, 0, 0};
  EXPECT_DOUBLE_EQ(cosine_similarity(a, a), 1.0);
  EXPECT_DOUBLE_EQ(cosine_similarity(a, b), 0.0);
  EXPECT_DOUBLE_EQ(cosine_similarity(a, c), -1.0);
  EXPECT_NEAR(cosine_similarity(std::vector<double>{1, 1}, std::vector<double>{1, 0}), std::sqrt(0.5), 1e-15);
  EXPECT_EQ(code_of([&] { cosine_similarity(a, std::vector<double>{1, 0}); }), ErrorCode::DimensionMismatch);
  EXPECT_EQ(code_of([&] { cosine_similarity(a, std::vector<double>{0, 0, 0}); }), ErrorCode::ZeroVector);
}

TEST(Cosine, BoundedAndScaleFree) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> g;
  std::uniform_real_distribution<double> scale(0.01, 100.0);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<double> u(7), v(7);
    for (auto& x : u) x = g(rng);
    for (auto& x : v) x = g(rng);
    const double c = cosine_similarity(u, v);
    ASSERT_GE(c, -1.0);
    ASSERT_LE(c, 1.0);
    auto w = v;
    const double s = scale(rng);
    for (auto& x : w) x *= s;
    ASSERT_NEAR(cosine_similarity(u, w), c, 1e-12);
  }
}

TEST(Verdict, ThresholdIsInclusive) {
  SimPolicy p;
  p.delta = 0.84;
  EXPECT_TRUE(make_verdict(0.84, true, p).passed);
  EXPECT_EQ(make_verdict(0.8399, true, p).reason, "cosine");
  EXPECT_EQ(make_verdict(0.99, false, p).reason, "pos");
  EXPECT_EQ(make_verdict(0.99, true, p).reason, "");
}

TEST(CheckSim, IdentityPassesWithoutOracleCalls) {
  Rig r;
  const auto t = tokenize("The man is a successful actor.");
  const auto v = check_sim(t, t, {}, r.ctx());
  EXPECT_TRUE(v.passed);
  EXPECT_EQ(v.cosine, 1.0);
  EXPECT_EQ(r.gateway.counters().embed_text.load(), 0u);
}

TEST(CheckSim, CaseOnlyChangeIsNotASubstitution) {
  Rig r;
  const auto v = check_sim(tokenize("the man walked home"), tokenize("The Man walked home"), {}, r.ctx());
  EXPECT_TRUE(v.pos_ok);
  EXPECT_DOUBLE_EQ(v.cosine, 1.0);
}

TEST(CheckSim, WordNetPosGate) {
  Rig r;
  const auto base = tokenize("my friend said the man would help the student today in town");
  const auto same_pos = replace_word(base, 4, "guy");
  const auto other_pos = replace_word(base, 4, "happy");
  const auto a = check_sim(base, same_pos, {}, r.ctx());
  EXPECT_TRUE(a.pos_ok);
  EXPECT_TRUE(a.passed) << a.cosine;
  const auto b = check_sim(base, other_pos, {}, r.ctx());
  EXPECT_FALSE(b.pos_ok);
  EXPECT_FALSE(b.passed);
  EXPECT_EQ(b.reason, "pos");
  SimPolicy lax;
  lax.require_pos_match = false;
  EXPECT_TRUE(check_sim(base, other_pos, lax, r.ctx()).pos_ok);
  SimContext no_lexicon{r.gateway, nullptr};
  EXPECT_EQ(code_of([&] { check_sim(base, same_pos, {}, no_lexicon); }), ErrorCode::InvalidArgument);
}

TEST(CheckSim, CosineGate) {
  Rig r;
  const auto base = tokenize("the man would help the student");
  auto pert = replace_word(replace_word(base, 1, "guy"), 3, "assist");
  SimPolicy strict;
  strict.delta = 1.0;
  const auto v = check_sim(base, pert, strict, r.ctx());
  EXPECT_TRUE(v.pos_ok);
  EXPECT_LT(v.cosine, 1.0);
  EXPECT_EQ(v.reason, "cosine");
  SimPolicy open;
  open.delta = 0.0;
  EXPECT_EQ(check_sim(base, pert, open, r.ctx()).passed, v.cosine >= 0.0);
  const auto direct = cosine_similarity(r.gateway.text_embed(base.raw()), r.gateway.text_embed(pert.raw()));
  EXPECT_DOUBLE_EQ(v.cosine, direct);
}

TEST(CheckSim, AnnotatorPosSource) {
  Rig r;
  SimPolicy p;
  p.pos_source = PosEvidence::Annotator;
  p.delta = 0.0;
  const auto base = tokenize("we need to pay the bill soon");
  const auto tags = r.gateway.aux_annotations(base.raw()).pos_tags;
  // Any replacement whose stub tag matches the original passes, any other fails.
  for (const auto& w : stub_nouns()) {
    const auto pert = replace_word(base, 5, w);
    if (pert.raw() == base.raw()) continue;
    const bool same = r.gateway.aux_annotations(pert.raw()).pos_tags[5] == tags[5];
    ASSERT_EQ(check_sim(base, pert, p, r.ctx()).pos_ok, same) << w;
  }
}

TEST(CheckSim, Errors) {
  Rig r;
  EXPECT_EQ(code_of([&] { check_sim(tokenize("a b"), tokenize("a b c"), {}, r.ctx()); }), ErrorCode::LengthMismatch);
  SimPolicy bad;
  bad.delta = 1.5;
  EXPECT_EQ(code_of([&] { check_sim(tokenize("a"), tokenize("a"), bad, r.ctx()); }), ErrorCode::InvalidArgument);
}
