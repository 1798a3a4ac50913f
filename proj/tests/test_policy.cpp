// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numeric>

#include "oatok/policy.hpp"

using namespace oatok;
using namespace oatok::policy;

namespace {

data::TrajectoryDataset point_mass(std::size_t n, std::size_t T, std::uint64_t seed) {
    data::DatasetConfig cfg;
    cfg.family = data::Family::PointMassExpert;
    cfg.D_a = 3;
    cfg.n_trajectories = n;
    cfg.T = T;
    return data::generate_synthetic_dataset(cfg, seed);
}

oat::OatConfig oat_config() {
    oat::OatConfig c;
    c.H_a = 32;
    c.D_a = 3;
    c.model_dim = 32;
    c.head_dim = 32;
    c.enc_layers = 1;
    c.dec_layers = 1;
    return c;
}

PolicyConfig policy_config() {
    PolicyConfig c;
    c.layers = 2;
    c.model_dim = 64;
    c.head_dim = 32;
    return c;
}

Matrix random_obs(Rng& rng, std::size_t H_o = 2) {
    Matrix m(H_o, 9);
    for (auto& v : m.data()) v = rng.uniform(-1.0, 1.0);
    return m;
}

}  // namespace

TEST_CASE("autoregressive step accounting") {
    AnyTokenizer oat_tok(oat::OatTokenizer(oat_config(), 1));
    for (std::size_t K = 1; K <= 8; ++K) CHECK(autoregressive_step_count(oat_tok, K) == K);
    CHECK(autoregressive_step_count(oat_tok, 0) == 8);
    AnyTokenizer bin12(BinTokenizer{{}, 32, 12});
    CHECK(autoregressive_step_count(bin12, 0) == 384);
    AnyTokenizer bin7(BinTokenizer{{}, 32, 7});
    CHECK(autoregressive_step_count(bin7, 0) == 224);
    fast::FastConfig fc;
    fc.H_a = 4;
    fc.D_a = 1;
    AnyTokenizer fast_tok(fast::FastTokenizer(fc, bpe::BpeVocab({0}, {{0, 0, 1}}, 2), 0));
    CHECK(autoregressive_step_count(fast_tok, 0, TokenSequence{1, 1}) == 2);
}

TEST_CASE("history clamps at the episode start") {
    Matrix obs(5, 2);
    for (std::size_t t = 0; t < 5; ++t) obs(t, 0) = double(t);
    const auto h = history_at(obs, 1, 3);
    CHECK(h(0, 0) == 0.0);
    CHECK(h(1, 0) == 0.0);
    CHECK(h(2, 0) == 1.0);
    CHECK_THROWS_AS(history_at(obs, 5, 2), BoundsError);
}

TEST_CASE("initial loss is near the uniform cross entropy") {
    const auto ds = point_mass(4, 64, 1);
    AnyTokenizer tok(oat::OatTokenizer(oat_config(), 2));
    const auto examples = build_examples(ds, data::fit_normalizer(ds), tok, 2, 4);
    REQUIRE(!examples.empty());
    Policy p(tok, policy_config(), 3);
    CHECK(p.vocab_size() == 1000);
    CHECK(std::abs(p.loss(examples) - std::log(1000.0)) < 0.1);
}

TEST_CASE("logits are causal in the token prefix") {
    AnyTokenizer tok(oat::OatTokenizer(oat_config(), 2));
    Policy p(tok, policy_config(), 4);
    Rng rng(1);
    const auto obs = random_obs(rng);
    const TokenSequence full{5, 900, 17, 3, 41, 8, 600};
    const auto long_logits = p.all_logits(full, obs);
    for (std::size_t n = 0; n < full.size(); ++n) {
        const auto short_logits = p.all_logits(std::span<const TokenId>(full.data(), n), obs);
        REQUIRE(short_logits.rows == n + 1);
        for (std::size_t r = 0; r <= n; ++r)
            for (std::size_t c = 0; c < short_logits.cols; ++c)
                CHECK(short_logits.at(r, c) == doctest::Approx(long_logits.at(r, c)).epsilon(1e-5));
        const auto next = p.logits(std::span<const TokenId>(full.data(), n), obs);
        for (std::size_t c = 0; c < next.size(); ++c)
            CHECK(next[c] == doctest::Approx(long_logits.at(n, c)).epsilon(1e-5));
    }
    // Empty prefix and every id in the vocabulary produce finite logits.
    for (float v : p.logits({}, obs)) CHECK(std::isfinite(v));
    for (TokenId id = 0; id < 1000; id += 37) {
        for (float v : p.logits(TokenSequence{id}, obs)) REQUIRE(std::isfinite(v));
    }
    CHECK_THROWS(p.logits(TokenSequence(8, 0), obs));
    CHECK_THROWS_AS(p.logits(TokenSequence{1000}, obs), VocabularyError);
}

TEST_CASE("greedy inference is deterministic and prefix-consistent") {
    AnyTokenizer tok(oat::OatTokenizer(oat_config(), 2));
    Policy p(tok, policy_config(), 5);
    Rng rng(2);
    const auto obs = random_obs(rng);
    const std::vector<double> last{0.0, 0.0, -1.0};
    const auto a = p.infer(obs, 0, last);
    const auto b = p.infer(obs, 0, last);
    CHECK(a.tokens == b.tokens);
    CHECK(a.chunk == b.chunk);
    CHECK(a.tokens.size() == 8);
    CHECK_FALSE(a.fallback);
    for (std::size_t K = 1; K <= 8; ++K) {
        const auto r = p.infer(obs, K, last);
        CHECK(r.tokens == TokenSequence(a.tokens.begin(), a.tokens.begin() + K));
        CHECK(r.chunk.all_finite());
    }
    CHECK_THROWS_AS(p.infer(obs, 9, last), BoundsError);
    Rng s1(3), s2(3);
    CHECK(p.generate(obs, 8, &s1) == p.generate(obs, 8, &s2));
}

TEST_CASE("FAST binding falls back instead of failing") {
    // Every merged id expands to three symbols, so most generated sequences
    // miss the stream length of four.
    fast::FastConfig fc;
    fc.H_a = 4;
    fc.D_a = 3;
    bpe::BpeVocab vocab({0, 1}, {{0, 0, 2}, {2, 0, 3}, {1, 1, 4}, {4, 1, 5}}, 6);
    AnyTokenizer tok(fast::FastTokenizer(fc, vocab, 0));
    auto pc = policy_config();
    Policy p(tok, pc, 6);
    REQUIRE(p.eos().has_value());
    CHECK(p.vocab_size() == 7);
    Rng rng(4);
    const std::vector<double> last{0.25, -0.5, 1.0};
    std::size_t fallbacks = 0;
    for (int i = 0; i < 30; ++i) {
        const auto r = p.infer(random_obs(rng), 0, last, &rng);
        const bool decodes = std::holds_alternative<ActionChunk>(tok.detokenize(r.tokens));
        CHECK(r.fallback == !decodes);
        CHECK(r.chunk.horizon() == 4);
        if (r.fallback) {
            ++fallbacks;
            for (std::size_t t = 0; t < 4; ++t)
                for (std::size_t c = 0; c < 3; ++c) CHECK(r.chunk(t, c) == last[c]);
        }
    }
    CHECK(fallbacks > 0);
}

TEST_CASE("training: smoke and reproducibility") {
    const auto ds = point_mass(40, 100, 7);
    const auto stats = data::fit_normalizer(ds);
    AnyTokenizer tok(BinTokenizer{{}, 8, 3});
    const auto examples = build_examples(ds, stats, tok, 2, 1);
    TrainConfig tc;
    tc.steps = 500;
    tc.batch_size = 32;
    tc.adam.lr = 1e-3;
    Policy p(tok, policy_config(), 8);
    const double init = p.loss(std::span<const Example>(examples.data(), 256));
    const auto losses = p.train(examples, tc, 1);
    REQUIRE(losses.size() == 500);
    CHECK(p.loss(std::span<const Example>(examples.data(), 256)) < 0.8 * init);

    TrainConfig shortc = tc;
    shortc.steps = 10;
    Policy a(tok, policy_config(), 8), b(tok, policy_config(), 8);
    CHECK(a.train(examples, shortc, 2) == b.train(examples, shortc, 2));
}

TEST_CASE("binding and shape errors") {
    AnyTokenizer tok(oat::OatTokenizer(oat_config(), 2));
    Policy p(tok, policy_config(), 1);
    CHECK_THROWS(p.logits({}, Matrix(2, 5)));
    data::DatasetConfig cfg;
    cfg.n_trajectories = 2;
    const auto fourier = data::generate_synthetic_dataset(cfg, 1);
    CHECK_THROWS_AS(build_examples(fourier, data::fit_normalizer(fourier), tok, 2, 1), InvalidInputError);
    auto bad = policy_config();
    bad.model_dim = 33;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("checkpoint round trip") {
    AnyTokenizer tok(oat::OatTokenizer(oat_config(), 2));
    Policy p(tok, policy_config(), 9);
    p.action_stats = data::NormStats{{-1, -1, -1}, {1, 1, 1}};
    const auto path = std::filesystem::temp_directory_path() / "oatok_test_policy.ckpt";
    p.save(path);
    const auto back = Policy::load(path);
    Rng rng(5);
    const auto obs = random_obs(rng);
    CHECK(back.generate(obs, 8) == p.generate(obs, 8));
    REQUIRE(back.action_stats.has_value());
    CHECK(back.action_stats->max == p.action_stats->max);
    std::filesystem::remove(path);
}
