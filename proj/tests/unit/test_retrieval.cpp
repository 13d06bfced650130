#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "mcre/error.hpp"
#include "mcre/retrieval.hpp"
#include "oracle.hpp"
#include "synthetic.hpp"

using namespace mcre;

namespace {

EmbeddingVector V(std::initializer_list<double> v) { return EmbeddingVector(std::vector<double>(v)); }

template <typename F>
ErrorCode code_of(F&& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "expected an mcre::Error";
    return ErrorCode::Io;
}

std::vector<std::string> ids_of(const std::vector<ScoredId>& v) {
    std::vector<std::string> out;
    for (const auto& s : v) out.push_back(s.id);
    return out;
}

GalleryIndex abc() { return GalleryIndex({{"a", V({1, 0})}, {"b", V({0, 1})}, {"c", V({0.8, 0.6})}}); }

oracle::Mode to_oracle(RetrievalMode m) {
    switch (m) {
        case RetrievalMode::Full: return oracle::Mode::Full;
        case RetrievalMode::NoFiltering: return oracle::Mode::NoFiltering;
        case RetrievalMode::NoRerank: return oracle::Mode::NoRerank;
        case RetrievalMode::ModiOnly: return oracle::Mode::ModiOnly;
        case RetrievalMode::IntegOnly: return oracle::Mode::IntegOnly;
    }
    return oracle::Mode::Full;
}

QueryEmbeddings embed(const oracle::Query& q) {
    return {EmbeddingVector(q.f_modi), EmbeddingVector(q.f_integ), EmbeddingVector(q.f_r)};
}

}  // namespace

TEST(GalleryIndex, LookupAndValidation) {
    auto g = abc();
    EXPECT_EQ(g.size(), 3u);
    EXPECT_EQ(g.dim(), 2u);
    EXPECT_TRUE(g.contains("c"));
    EXPECT_FALSE(g.contains("z"));
    EXPECT_EQ(g.vector("b"), V({0, 1}));
    EXPECT_EQ(code_of([&] { (void)g.vector("z"); }), ErrorCode::UnknownCandidate);
    EXPECT_EQ(code_of([] { GalleryIndex({{"a", V({1, 0})}, {"a", V({0, 1})}}); }), ErrorCode::DuplicateId);
    EXPECT_EQ(code_of([] { GalleryIndex({{"a", V({1, 0})}, {"b", V({0, 1, 0})}}); }), ErrorCode::DimensionMismatch);
    EXPECT_EQ(code_of([] { GalleryIndex({{"a", V({0, 0})}}); }), ErrorCode::ZeroVector);
}

TEST(GalleryIndex, FromStore) {
    EmbeddingStore s(2, "tag");
    std::vector<float> a = {1.0f, 0.0f};
    std::vector<float> b = {0.5f, 0.5f};
    s.add("a", a);
    s.add("b", b);
    auto g = GalleryIndex::from_store(s);
    EXPECT_EQ(g.ids(), (std::vector<std::string>{"a", "b"}));
    EXPECT_EQ(g.vector("b"), V({0.5, 0.5}));
}

TEST(Stage1, GalleryExample) {
    auto top = stage1_filter(V({1, 0}), abc(), 2);
    ASSERT_EQ(top.size(), 2u);
    EXPECT_EQ(top[0].id, "a");
    EXPECT_NEAR(top[0].score, 1.0, 1e-12);
    EXPECT_EQ(top[1].id, "c");
    EXPECT_NEAR(top[1].score, 0.8, 1e-12);
}

TEST(Stage1, ClampAndExclude) {
    EXPECT_EQ(ids_of(stage1_filter(V({1, 0}), abc(), 10)), (std::vector<std::string>{"a", "c", "b"}));
    EXPECT_EQ(ids_of(stage1_filter(V({1, 0}), abc(), 2, "a")), (std::vector<std::string>{"c", "b"}));
}

TEST(Stage1, Errors) {
    EXPECT_EQ(code_of([] { (void)stage1_filter(V({1, 0}), abc(), 0); }), ErrorCode::InvalidArgument);
    EXPECT_EQ(code_of([] { (void)stage1_filter(V({1, 0, 0}), abc(), 1); }), ErrorCode::DimensionMismatch);
    EXPECT_EQ(code_of([] { (void)stage1_filter(V({1, 0}), GalleryIndex(), 1); }), ErrorCode::EmptyGallery);
    EXPECT_EQ(code_of([] { (void)stage1_filter(V({0, 0}), abc(), 1); }), ErrorCode::ZeroVector);
}

TEST(Stage1, MonotoneInK) {
    synth::Rng rng(5);
    auto items = synth::random_items(rng, 60, 8);
    auto g = synth::to_index(items);
    auto q = EmbeddingVector(synth::nonzero(rng, 8));
    for (std::size_t k = 1; k < 60; ++k) {
        auto small = ids_of(stage1_filter(q, g, k));
        auto big = ids_of(stage1_filter(q, g, k + 1));
        EXPECT_TRUE(std::equal(small.begin(), small.end(), big.begin()));
    }
}

TEST(Stage2, HandBuiltTwoD) {
    // Candidates x, y, z against fused query 0.05*(1,0) + 0.9*(0,1) + 0.05*(0.6,0.8).
    GalleryIndex g({{"x", V({1, 0.2})}, {"y", V({0.1, 1})}, {"z", V({0.7, 0.7})}});
    QueryEmbeddings q{V({1, 0}), V({0, 2}), V({3, 4})};
    std::vector<ScoredId> cands = {{"x", 0}, {"y", 0}, {"z", 0}};
    auto out = stage2_rerank(q, cands, g, {0.05, 0.9});
    std::vector<oracle::Item> items = {{"x", {1, 0.2}}, {"y", {0.1, 1}}, {"z", {0.7, 0.7}}};
    oracle::Vec fused = {0.05 + 0.05 * 0.6, 0.9 + 0.05 * 0.8};
    EXPECT_EQ(ids_of(out), oracle::rank_all(fused, items));
    EXPECT_EQ(ids_of(out), (std::vector<std::string>{"y", "z", "x"}));
    for (const auto& s : out) {
        for (const auto& it : items) {
            if (it.id == s.id) {
                EXPECT_NEAR(s.score, oracle::cosine(fused, it.v), 1e-12);
            }
        }
    }
}

TEST(Stage2, SingletonAndCollapse) {
    auto g = abc();
    QueryEmbeddings q{V({1, 0}), V({0, 1}), V({0, 1})};
    std::vector<ScoredId> one = {{"b", 0.0}};
    EXPECT_EQ(ids_of(stage2_rerank(q, one, g, {0.3, 0.3})), (std::vector<std::string>{"b"}));
    std::vector<ScoredId> all = {{"b", 0}, {"c", 0}, {"a", 0}};
    EXPECT_EQ(ids_of(stage2_rerank(q, all, g, {1, 0})), (std::vector<std::string>{"a", "c", "b"}));
}

TEST(Stage2, Errors) {
    auto g = abc();
    QueryEmbeddings q{V({1, 0}), V({0, 1}), V({0, 1})};
    std::vector<ScoredId> bad = {{"nope", 0}};
    EXPECT_EQ(code_of([&] { (void)stage2_rerank(q, bad, g, {}); }), ErrorCode::UnknownCandidate);
    QueryEmbeddings wrong{V({1, 0, 0}), V({0, 1, 0}), V({0, 0, 1})};
    std::vector<ScoredId> a = {{"a", 0}};
    EXPECT_EQ(code_of([&] { (void)stage2_rerank(wrong, a, g, {}); }), ErrorCode::DimensionMismatch);
}

TEST(RetrievalMode, Names) {
    for (auto m : kAllModes) EXPECT_EQ(parse_retrieval_mode(to_string(m)), m);
    EXPECT_EQ(to_string(RetrievalMode::NoFiltering), "no_filtering");
    EXPECT_EQ(code_of([] { (void)parse_retrieval_mode("fast"); }), ErrorCode::InvalidArgument);
}

TEST(RetrievalConfig, Defaults) {
    auto f = RetrievalConfig::fashioniq_defaults();
    auto c = RetrievalConfig::cirr_defaults();
    EXPECT_EQ(f.k, 150u);
    EXPECT_EQ(c.k, 200u);
    EXPECT_EQ(f.weights.alpha, 0.05);
    EXPECT_EQ(f.weights.beta, 0.9);
    EXPECT_FALSE(f.exclude_reference);
    EXPECT_TRUE(c.exclude_reference);
    EXPECT_EQ(f.mode, RetrievalMode::Full);
}

// Eight hand-placed 4-D gallery vectors.
TEST(Retrieve, EightVectorFixtureMatchesOracle) {
    std::vector<oracle::Item> items = {
        {"g1", {1, 0, 0, 0}},        {"g2", {0.9, 0.1, 0, 0}},   {"g3", {0, 1, 0, 0}},
        {"g4", {0.5, 0.5, 0.5, 0}},  {"g5", {0, 0, 1, 0.2}},     {"g6", {0.2, 0.8, 0.1, 0.1}},
        {"g7", {-0.3, 0.4, 0.2, 1}}, {"g8", {0.6, -0.2, 0.7, 0.1}},
    };
    auto g = synth::to_index(items);
    oracle::Query q{{0.8, 0.3, 0.1, 0}, {0.1, 0.9, 0.3, 0.1}, {0.4, 0.4, 0.4, 0.4}};
    RetrievalConfig cfg;
    cfg.k = 4;
    auto got = retrieve("q", embed(q), g, cfg);
    auto want = oracle::retrieve(oracle::Mode::Full, q, items, 0.05, 0.9, 4);
    EXPECT_EQ(ids_of(got.ranking), want);
    EXPECT_EQ(got.ranking.size(), 4u);
    auto s1_ids = ids_of(got.stage1_candidates);
    EXPECT_EQ(std::set<std::string>(s1_ids.begin(), s1_ids.end()),
              std::set<std::string>(want.begin(), want.end()));
}

TEST(Retrieve, AllModesMatchOracleOnRandomInstances) {
    synth::Rng rng(42);
    for (int t = 0; t < 60; ++t) {
        auto inst = synth::random_instance(rng, 120, 24);
        auto g = synth::to_index(inst.gallery);
        for (auto mode : kAllModes) {
            RetrievalConfig cfg;
            cfg.k = inst.k;
            cfg.weights = {inst.alpha, inst.beta};
            cfg.mode = mode;
            auto got = retrieve("q", embed(inst.query), g, cfg);
            auto want = oracle::retrieve(to_oracle(mode), inst.query, inst.gallery, inst.alpha, inst.beta, inst.k);
            ASSERT_EQ(ids_of(got.ranking), want) << "trial " << t << " mode " << to_string(mode);
            EXPECT_EQ(got.mode, mode);
        }
    }
}

TEST(Retrieve, FullIsPermutationOfStage1) {
    synth::Rng rng(8);
    for (int t = 0; t < 30; ++t) {
        auto inst = synth::random_instance(rng, 200, 16);
        auto g = synth::to_index(inst.gallery);
        RetrievalConfig cfg;
        cfg.k = inst.k;
        cfg.weights = {inst.alpha, inst.beta};
        auto r = retrieve("q", embed(inst.query), g, cfg);
        auto a = ids_of(r.ranking);
        auto b = ids_of(r.stage1_candidates);
        std::sort(a.begin(), a.end());
        std::sort(b.begin(), b.end());
        EXPECT_EQ(a, b);
        EXPECT_EQ(b.size(), std::min(inst.k, inst.gallery.size()));
    }
}

TEST(Retrieve, AblationCoherence) {
    synth::Rng rng(77);
    for (int t = 0; t < 30; ++t) {
        auto inst = synth::random_instance(rng, 150, 16);
        auto g = synth::to_index(inst.gallery);
        auto q = embed(inst.query);

        RetrievalConfig full;
        full.k = g.size();
        full.weights = {inst.alpha, inst.beta};
        auto nf = full;
        nf.mode = RetrievalMode::NoFiltering;
        nf.k = 1;
        EXPECT_EQ(ids_of(retrieve("q", q, g, full).ranking), ids_of(retrieve("q", q, g, nf).ranking));

        RetrievalConfig collapse;
        collapse.k = inst.k;
        collapse.weights = {1, 0};
        auto nr = collapse;
        nr.mode = RetrievalMode::NoRerank;
        EXPECT_EQ(ids_of(retrieve("q", q, g, collapse).ranking), ids_of(retrieve("q", q, g, nr).ranking));
    }
}

TEST(Retrieve, ExcludeReference) {
    auto g = abc();
    QueryEmbeddings q{V({1, 0}), V({0.8, 0.6}), V({1, 0})};
    RetrievalConfig cfg;
    cfg.k = 3;
    cfg.exclude_reference = true;
    for (auto mode : kAllModes) {
        cfg.mode = mode;
        auto r = retrieve("q", q, g, cfg, "a");
        for (const auto& s : r.ranking) EXPECT_NE(s.id, "a");
        for (const auto& s : r.stage1_candidates) EXPECT_NE(s.id, "a");
        EXPECT_EQ(r.ranking.size(), 2u);
    }
    EXPECT_EQ(code_of([&] { (void)retrieve("q", q, g, cfg); }), ErrorCode::UnknownReference);
}

TEST(Retrieve, InvalidConfigFailsFast) {
    auto g = abc();
    QueryEmbeddings q{V({1, 0}), V({0, 1}), V({1, 0})};
    RetrievalConfig cfg;
    cfg.weights = {0.7, 0.7};
    EXPECT_EQ(code_of([&] { (void)retrieve("q", q, g, cfg); }), ErrorCode::InvalidWeights);
    cfg.weights = {};
    cfg.k = 0;
    EXPECT_EQ(code_of([&] { (void)retrieve("q", q, g, cfg); }), ErrorCode::InvalidArgument);
}

TEST(Retrieve, GalleryScalingKeepsOrder) {
    synth::Rng rng(13);
    std::uniform_real_distribution<double> scale(1e-3, 1e3);
    for (int t = 0; t < 20; ++t) {
        auto inst = synth::random_instance(rng, 100, 12);
        auto scaled = inst.gallery;
        double c = scale(rng);
        for (auto& it : scaled) {
            for (auto& x : it.v) x *= c;
        }
        RetrievalConfig cfg;
        cfg.k = inst.k;
        cfg.weights = {inst.alpha, inst.beta};
        auto a = retrieve("q", embed(inst.query), synth::to_index(inst.gallery), cfg);
        auto b = retrieve("q", embed(inst.query), synth::to_index(scaled), cfg);
        EXPECT_EQ(ids_of(a.ranking), ids_of(b.ranking));
    }
}
