#include <random>
#include <thread>

#include <unistd.h>

#include <gtest/gtest.h>

#include "lingua_spoof/oracle.hpp"
#include "lingua_spoof/stub.hpp"

using namespace lingua_spoof;

namespace {

// Stub responses with knobs for protocol violations.
class FakeBackend : public StubBackend {
 public:
  using StubBackend::StubBackend;
  std::size_t audio_dim_after_first = kStubAudioDim;
  std::optional<double> forced_score;
  std::vector<MlmCandidate> mlm_reply;
  std::optional<double> forced_aesthetic;
  int embeds = 0;

  std::vector<double> embed_audio(const AudioClip& clip, std::string_view voice) override {
    auto v = StubBackend::embed_audio(clip, voice);
    if (embeds++ > 0) v.resize(audio_dim_after_first, 0.5);
    return v;
  }
  double score(const AudioClip& clip) override { return forced_score.value_or(StubBackend::score(clip)); }
  std::vector<MlmCandidate> mlm(const std::vector<std::string>& t, std::size_t i, std::size_t k) override {
    return mlm_reply.empty() ? StubBackend::mlm(t, i, k) : mlm_reply;
  }
  Annotation annotate(std::string_view text) override {
    auto a = StubBackend::annotate(text);
    if (forced_aesthetic) a.aesthetics.pq = *forced_aesthetic;
    return a;
  }
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

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  return ab / std::sqrt(aa * bb);
}

Gateway stub_gateway(std::uint64_t seed, std::shared_ptr<ResponseCache> cache = nullptr) {
  return Gateway(OracleSet::uniform(std::make_shared<StubBackend>(seed)), std::move(cache));
}

std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("lingua_spoof_test_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(p);
  return p;
}

}  // namespace

TEST(Synthesize, TwoTokensTwoSegments) {
  auto g = stub_gateway(42);
  const auto clip = g.synthesize("a b", "default");
  EXPECT_EQ(clip.sample_rate, 16000);
  EXPECT_EQ(clip.samples.size(), 3200u);
}

TEST(Synthesize, SecondCallIsACacheHit) {
  auto g = stub_gateway(42, std::make_shared<MemoryCache>());
  const auto a = g.synthesize("a b", "v1");
  const auto b = g.synthesize("a b", "v1");
  EXPECT_EQ(a, b);
  EXPECT_EQ(g.counters().synthesize.load(), 1u);
  g.synthesize("a b", "v2");
  EXPECT_EQ(g.counters().synthesize.load(), 2u);
}

TEST(Synthesize, EmptyText) {
  auto g = stub_gateway(1);
  EXPECT_EQ(code_of([&] { g.synthesize("  ", "v"); }), ErrorCode::EmptyTranscript);
}

TEST(Synthesize, MissingRole) {
  Gateway g(OracleSet{});
  EXPECT_EQ(code_of([&] { g.synthesize("a", "v"); }), ErrorCode::OracleUnavailable);
}

TEST(DetectorScore, ZeroBudget) {
  auto g = stub_gateway(7);
  QueryLedger ledger(0);
  EXPECT_EQ(code_of([&] { g.detector_score(g.synthesize("hello world", "v"), ledger); }), ErrorCode::BudgetExhausted);
}

TEST(DetectorScore, GoldenStubValue) {
  // Frozen from the first evaluation of the seed-7 stub on "hello world".
  auto g = stub_gateway(7);
  QueryLedger ledger(5);
  const double p = g.detector_score(g.synthesize("hello world", "v"), ledger);
  EXPECT_EQ(p, 0.98201379003790845);
}

TEST(DetectorScore, RepeatIsFreeUnderOneLedger) {
  auto g = stub_gateway(7);
  QueryLedger ledger(5);
  const auto clip = g.synthesize("She is a successful actor", "v");
  const double a = g.detector_score(clip, ledger);
  EXPECT_EQ(ledger.used(), 1u);
  const double b = g.detector_score(clip, ledger);
  EXPECT_EQ(a, b);
  EXPECT_EQ(ledger.used(), 1u);
  EXPECT_EQ(g.counters().score.load(), 1u);
}

TEST(DetectorScore, OutOfRangeIsMalformed) {
  auto fake = std::make_shared<FakeBackend>(1);
  fake->forced_score = 1.5;
  Gateway g(OracleSet::uniform(fake));
  QueryLedger ledger(3);
  EXPECT_EQ(code_of([&] { g.detector_score(g.synthesize("x y", "v"), ledger); }), ErrorCode::MalformedResponse);
}

TEST(DetectorScore, MatchesPlantedModel) {
  auto g = stub_gateway(3);
  const auto model = planted_detector(3);
  QueryLedger ledger(100);
  for (std::string text : {"the man", "a good friend came home", "we need money now"}) {
    EXPECT_NEAR(g.detector_score(g.synthesize(text, "v"), ledger), model.text_probability(text), 1e-15) << text;
  }
}

TEST(QueryLedger, NoInterleavingOverspends) {
  for (int trial = 0; trial < 20; ++trial) {
    QueryLedger ledger(1000);
    std::atomic<std::size_t> granted{0};
    std::vector<std::jthread> pool;
    for (int t = 0; t < 8; ++t) {
      pool.emplace_back([&] {
        for (int k = 0; k < 300; ++k) {
          try {
            ledger.consume();
            ++granted;
          } catch (const Error& e) {
            ASSERT_EQ(e.code(), ErrorCode::BudgetExhausted);
          }
        }
      });
    }
    pool.clear();
    EXPECT_EQ(granted.load(), 1000u);
    EXPECT_EQ(ledger.used(), 1000u);
    EXPECT_TRUE(ledger.exhausted());
  }
}

TEST(DetectorEmbed, DeterministicAndVoiceClustered) {
  auto g = stub_gateway(9);
  const auto a = g.synthesize("the quick dog", "v");
  const auto b = g.synthesize("a slow river of money", "v");
  EXPECT_EQ(g.detector_embed(a, "alice"), g.detector_embed(a, "alice"));
  EXPECT_GT(cosine(g.detector_embed(a, "alice"), g.detector_embed(b, "alice")), 0.9);
  EXPECT_NE(g.detector_embed(a, "alice"), g.detector_embed(a, "bob"));
}

TEST(DetectorEmbed, DimensionChangeIsMalformed) {
  auto fake = std::make_shared<FakeBackend>(1);
  fake->audio_dim_after_first = 8;
  Gateway g(OracleSet::uniform(fake));
  g.detector_embed(g.synthesize("one", "v"), "v");
  EXPECT_EQ(code_of([&] { g.detector_embed(g.synthesize("two", "v"), "v"); }), ErrorCode::MalformedResponse);
}

TEST(TextEmbed, Examples) {
  auto g = stub_gateway(2);
  EXPECT_EQ(g.text_embed("same words here"), g.text_embed("same words here"));
  const std::string a = "one two three four five six seven eight nine ten";
  const std::string b = "one two three four five six seven eight nine eleven";
  EXPECT_GE(cosine(g.text_embed(a), g.text_embed(b)), 0.8);
  EXPECT_EQ(code_of([&] { g.text_embed(""); }), ErrorCode::EmptyText);
}

TEST(TextEmbed, UnitNorm) {
  const auto v = stub_embed_text(4, "Some text, with punctuation!");
  double n = 0;
  for (double x : v) n += x * x;
  EXPECT_NEAR(n, 1.0, 1e-12);
}

TEST(Mlm, CardinalityAndDeterminism) {
  auto g = stub_gateway(3);
  const auto t = tokenize("She is a successful actor in the city");
  EXPECT_LE(g.mlm_candidates(t, 3, 1).size(), 1u);
  const auto a = g.mlm_candidates(t, 3, 10);
  EXPECT_EQ(a, stub_gateway(3).mlm_candidates(t, 3, 10));
  EXPECT_EQ(a.size(), 10u);
  for (std::size_t k = 1; k < a.size(); ++k) EXPECT_GT(a[k - 1].score, a[k].score);
  EXPECT_EQ(code_of([&] { g.mlm_candidates(t, 8, 3); }), ErrorCode::IndexOutOfRange);
}

TEST(Mlm, FiltersMultiwordAndMaskedWord) {
  auto fake = std::make_shared<FakeBackend>(1);
  fake->mlm_reply = {{"two words", 0.9}, {"Actor", 0.8}, {"star", 0.5}, {"player", 0.7}};
  Gateway g(OracleSet::uniform(fake));
  const auto c = g.mlm_candidates(tokenize("a good actor"), 2, 5);
  ASSERT_EQ(c.size(), 2u);
  EXPECT_EQ(c[0].word, "player");
  EXPECT_EQ(c[1].word, "star");
}

TEST(Annotate, DeterministicAndInRange) {
  auto g = stub_gateway(5);
  const auto a = g.aux_annotations("She is a successful actor");
  EXPECT_EQ(a, stub_gateway(5).aux_annotations("She is a successful actor"));
  EXPECT_EQ(a.pos_tags.size(), 5u);
  EXPECT_GE(a.syntax_depth, 2.0);
  EXPECT_GT(a.token_ppl, 1.0);
  EXPECT_GE(a.phoneme_ppl, 1.0);
}

TEST(Annotate, MissingFieldNamed) {
  auto j = annotation_to_json(stub_annotate(1, "a b c"));
  j.erase("phoneme_ppl");
  try {
    annotation_from_json(j);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::PartialAnnotation);
    EXPECT_EQ(e.detail(), "phoneme_ppl");
  }
  auto k = annotation_to_json(stub_annotate(1, "a b c"));
  k["aesthetics"].erase("cu");
  EXPECT_EQ(code_of([&] { annotation_from_json(k); }), ErrorCode::PartialAnnotation);
}

TEST(Annotate, AestheticsOutOfRange) {
  auto fake = std::make_shared<FakeBackend>(1);
  fake->forced_aesthetic = 11.0;
  Gateway g(OracleSet::uniform(fake));
  EXPECT_EQ(code_of([&] { g.aux_annotations("a b"); }), ErrorCode::MalformedResponse);
}

TEST(Cache, CachedAndUncachedAgreeBitForBit) {
  const auto dir = temp_dir("sound");
  for (int pass = 0; pass < 2; ++pass) {
    auto direct = stub_gateway(11);
    auto cached = stub_gateway(11, std::make_shared<DiskCache>(dir));
    const std::vector<std::string> texts{"the old man", "She is a successful actor.", "we pay the bill"};
    for (const auto& text : texts) {
      const auto ca = direct.synthesize(text, "v"), cb = cached.synthesize(text, "v");
      ASSERT_EQ(ca, cb);
      QueryLedger la(10), lb(10);
      ASSERT_EQ(direct.detector_score(ca, la), cached.detector_score(cb, lb));
      ASSERT_EQ(direct.detector_embed(ca, "v"), cached.detector_embed(cb, "v"));
      ASSERT_EQ(direct.text_embed(text), cached.text_embed(text));
      ASSERT_EQ(direct.aux_annotations(text), cached.aux_annotations(text));
      ASSERT_EQ(direct.mlm_candidates(tokenize(text), 1, 6), cached.mlm_candidates(tokenize(text), 1, 6));
    }
    if (pass == 1) {
      EXPECT_EQ(cached.counters().synthesize.load(), 0u);
      EXPECT_EQ(cached.counters().score.load(), 0u);
      EXPECT_EQ(cached.counters().mlm.load(), 0u);
    }
  }
  std::filesystem::remove_all(dir);
}

TEST(Cache, DiskLayout) {
  const auto dir = temp_dir("layout");
  DiskCache cache(dir);
  const std::string key = sha256_hex("some input");
  cache.put(key, std::string("\x00\x01payload", 9));
  EXPECT_TRUE(std::filesystem::exists(dir / key.substr(0, 2) / (key + ".json")));
  const auto e = cache.load(key);
  ASSERT_TRUE(e.has_value());
  EXPECT_EQ(e->value, std::string("\x00\x01payload", 9));
  EXPECT_GT(e->created_at, 1600000000);
  EXPECT_FALSE(cache.get(sha256_hex("other")).has_value());
  std::filesystem::remove_all(dir);
}

TEST(Cache, BackendIdentitySeparatesEntries) {
  auto cache = std::make_shared<MemoryCache>();
  auto a = stub_gateway(1, cache);
  auto b = stub_gateway(2, cache);
  const std::string text = "one two three four five six seven eight";
  EXPECT_NE(a.text_embed(text), b.text_embed(text));
  auto custom = std::make_shared<StubBackend>(1, planted_detector(99));
  EXPECT_NE(custom->identity(), StubBackend(1).identity());
  EXPECT_EQ(StubBackend(1, planted_detector(1)).identity(), "stub:1");
}

TEST(PlantedDetector, Shape) {
  for (std::uint64_t seed : {0u, 1u, 7u, 123u}) {
    const auto m = planted_detector(seed);
    EXPECT_EQ(std::count(m.weights.begin(), m.weights.end(), 8.0), 8);
    EXPECT_EQ(std::count(m.weights.begin(), m.weights.end(), 0.0), 56);
    EXPECT_EQ(m.bias, -4.0);
  }
  EXPECT_NE(planted_detector(0).weights, planted_detector(1).weights);
  EXPECT_THROW(planted_detector(0, {65, 1.0, 0.0}), Error);
}
