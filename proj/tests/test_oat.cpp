// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numeric>

#include "fixtures.hpp"
#include "oatok/oat.hpp"

using namespace oatok;
using namespace oatok::oat;

namespace {

OatConfig small_config(std::size_t d = 64) {
    OatConfig c;
    c.H_a = 32;
    c.D_a = 2;
    c.model_dim = d;
    c.head_dim = 32;
    return c;
}

const nn::Tensor& register_table(const OatTokenizer& tok) {
    for (const auto& p : tok.params().params()) {
        if (p.name == "registers") return p.value;
    }
    throw std::logic_error("no register parameter");
}

struct Trained {
    std::vector<ActionChunk> train;
    std::vector<ActionChunk> heldout;
    OatTokenizer tok{small_config(), 7};
    TrainResult result;
};

// One shared desk-scale training run: ~1k chunks, 600 steps.
const Trained& trained() {
    static const Trained t = [] {
        Trained t;
        t.train = testing::smooth_chunks(112, 1);
        t.heldout = testing::smooth_chunks(20, 2);
        TrainConfig tc;
        tc.steps = 600;
        tc.batch_size = 32;
        tc.adam.lr = 1e-3;
        t.result = t.tok.train(t.train, tc, 3);
        return t;
    }();
    return t;
}

double mean_of(const std::vector<double>& v, std::size_t begin, std::size_t end) {
    return std::accumulate(v.begin() + begin, v.begin() + end, 0.0) / double(end - begin);
}

}  // namespace

TEST_CASE("attention mask pattern") {
    const auto m = build_attention_mask(2, 2);
    // Columns a1 a2 r1 r2.
    const bool want[4][4] = {{1, 1, 0, 0}, {1, 1, 0, 0}, {1, 1, 1, 0}, {1, 1, 1, 1}};
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j) CHECK(m(i, j) == want[i][j]);
    const auto big = build_attention_mask(32, 8);
    for (std::size_t i = 0; i < 32; ++i)
        for (std::size_t j = 32; j < 40; ++j) CHECK_FALSE(big(i, j));
    for (std::size_t j = 0; j < 40; ++j) CHECK(big(39, j));
    CHECK_THROWS_AS(build_attention_mask(0, 2), ConfigError);
}

TEST_CASE("tail dropout") {
    nn::Tensor e(4, 3);
    for (std::size_t i = 0; i < e.size(); ++i) e.data[i] = float(i + 1);
    const nn::Tensor mask(1, 3, -9.0f);
    CHECK(apply_tail_dropout(e, 4, mask).data == e.data);
    const auto k1 = apply_tail_dropout(e, 1, mask);
    for (std::size_t c = 0; c < 3; ++c) CHECK(k1.at(0, c) == e.at(0, c));
    for (std::size_t r = 1; r < 4; ++r)
        for (std::size_t c = 0; c < 3; ++c) CHECK(k1.at(r, c) == -9.0f);
    const auto k3 = apply_tail_dropout(e, 3, mask);
    for (std::size_t r = 0; r < 3; ++r)
        for (std::size_t c = 0; c < 3; ++c) CHECK(k3.at(r, c) == e.at(r, c));
    CHECK_THROWS_AS(apply_tail_dropout(e, 0, mask), BoundsError);
    CHECK_THROWS_AS(apply_tail_dropout(e, 5, mask), BoundsError);
    CHECK_THROWS_AS(apply_tail_dropout(e, 2, nn::Tensor(1, 2)), ShapeError);
}

TEST_CASE("prefix length distribution") {
    NestedDropoutDist dist;
    Rng rng(1);
    std::vector<std::size_t> counts(9, 0);
    const std::size_t n = 100000;
    for (std::size_t i = 0; i < n; ++i) ++counts[sample_prefix_length(dist, 8, rng)];
    CHECK(counts[0] == 0);
    for (std::size_t k = 1; k <= 8; ++k) CHECK(std::abs(double(counts[k]) / n - 0.125) <= 0.004);

    NestedDropoutDist all{1.0};
    CHECK_FALSE(all.ordered());
    for (int i = 0; i < 1000; ++i) CHECK(sample_prefix_length(all, 8, rng) == 8);

    Rng a(5), b(5);
    for (int i = 0; i < 100; ++i) CHECK(sample_prefix_length(dist, 8, a) == sample_prefix_length(dist, 8, b));

    NestedDropoutDist mixed{0.3};
    const auto p = mixed.probabilities(4);
    CHECK(p[3] == doctest::Approx(0.3 + 0.7 / 4));
    CHECK(std::accumulate(p.begin(), p.end(), 0.0) == doctest::Approx(1.0));
    CHECK_THROWS_AS(NestedDropoutDist{1.5}.validate(), ConfigError);
}

TEST_CASE("register causality probe") {
    OatTokenizer tok(small_config(), 11);
    const auto chunk = testing::smooth_chunks(2, 9).front();
    const nn::Tensor regs = register_table(tok);
    const auto base = tok.encoder_states(chunk, &regs);
    const auto plain = tok.encoder_states(chunk);
    CHECK(base.data == plain.data);
    for (std::size_t j = 0; j < 8; ++j) {
        nn::Tensor zeroed = regs;
        std::fill(zeroed.row(j), zeroed.row(j) + zeroed.cols, 0.0f);
        const auto probed = tok.encoder_states(chunk, &zeroed);
        for (std::size_t pos = 0; pos < 40; ++pos) {
            bool same = true;
            for (std::size_t c = 0; c < base.cols; ++c) same = same && probed.at(pos, c) == base.at(pos, c);
            const bool may_change = pos >= 32 + j;
            CAPTURE(j);
            CAPTURE(pos);
            if (!may_change) CHECK(same);
            if (pos == 32 + j) CHECK_FALSE(same);
        }
    }
}

TEST_CASE("encode shape and determinism") {
    OatTokenizer tok(small_config(), 3);
    const auto chunk = testing::smooth_chunks(2, 4).front();
    const auto z = tok.encode(chunk);
    CHECK(z.rows() == 8);
    CHECK(z.cols() == 4);
    CHECK(tok.encode(chunk) == z);
    const auto ids = tok.tokenize(chunk);
    CHECK(ids.size() == 8);
    for (auto id : ids) CHECK((id >= 0 && id < 1000));
    CHECK(tok.tokenize(chunk) == ids);
    CHECK_THROWS_AS(tok.tokenize(ActionChunk(31, 2)), ShapeError);
    OatTokenizer same(small_config(), 3);
    CHECK(same.tokenize(chunk) == ids);
}

TEST_CASE("batched inference matches single-chunk calls across block boundaries") {
    OatTokenizer tok(small_config(), 4);
    const auto chunks = testing::smooth_chunks(40, 6);
    REQUIRE(chunks.size() > 300);
    const auto ids = tok.tokenize_batch(chunks);
    const auto decoded = tok.detokenize_batch(ids);
    REQUIRE(ids.size() == chunks.size());
    REQUIRE(decoded.size() == chunks.size());
    for (std::size_t i : {std::size_t{0}, std::size_t{255}, std::size_t{256}, chunks.size() - 1}) {
        CHECK(ids[i] == tok.tokenize(chunks[i]));
        const auto one = tok.detokenize(ids[i]);
        for (std::size_t t = 0; t < 32; ++t)
            for (std::size_t d = 0; d < 2; ++d) CHECK(decoded[i](t, d) == doctest::Approx(one(t, d)).epsilon(1e-5));
    }
}

TEST_CASE("detokenize is total") {
    OatTokenizer tok(small_config(), 5);
    Rng rng(2);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t K = 1 + rng.below(8);
        TokenSequence ids(K);
        for (auto& id : ids) id = static_cast<TokenId>(rng.below(1000));
        const auto c = tok.detokenize(ids);
        CHECK(c.horizon() == 32);
        CHECK(c.dims() == 2);
        CHECK(c.all_finite());
    }
    CHECK_THROWS_AS(tok.detokenize(TokenSequence{}), BoundsError);
    CHECK_THROWS_AS(tok.detokenize(TokenSequence(9, 0)), BoundsError);
    CHECK_THROWS_AS(tok.detokenize(TokenSequence{1000}), VocabularyError);
    // All-MASK memory decodes to a finite, repeatable prior chunk.
    nn::Tensor mask_only(8, 64);
    for (const auto& p : tok.params().params()) {
        if (p.name == "mask") {
            for (std::size_t r = 0; r < 8; ++r) std::copy(p.value.data.begin(), p.value.data.end(), mask_only.row(r));
        }
    }
    const auto prior = tok.decode(mask_only);
    CHECK(prior.all_finite());
    CHECK(tok.decode(mask_only) == prior);
}

TEST_CASE("training: smoke, gradients reach the encoder") {
    const auto& t = trained();
    const auto& losses = t.result.losses;
    REQUIRE(losses.size() == 600);
    CHECK(mean_of(losses, 550, 600) < 0.5 * mean_of(losses, 0, 20));
    CHECK(t.result.encoder_grad_norms.front() > 0.0);
    CHECK(t.tok.trained());
}

TEST_CASE("training is bit-reproducible") {
    const auto chunks = testing::smooth_chunks(10, 1);
    TrainConfig tc;
    tc.steps = 15;
    tc.batch_size = 8;
    tc.adam.lr = 1e-3;
    OatTokenizer a(small_config(32), 1), b(small_config(32), 1);
    const auto ra = a.train(chunks, tc, 9);
    const auto rb = b.train(chunks, tc, 9);
    CHECK(ra.losses == rb.losses);
    CHECK(a.params().serialize() == b.params().serialize());
    OatTokenizer c(small_config(32), 1);
    CHECK(c.train(chunks, tc, 10).losses != ra.losses);
}

TEST_CASE("trained model: coarse-to-fine reconstruction") {
    const auto& t = trained();
    std::vector<double> by_k(8, 0.0);
    std::size_t wins = 0;
    Rng rng(4);
    for (const auto& c : t.heldout) {
        const auto ids = t.tok.tokenize(c);
        for (std::size_t K = 1; K <= 8; ++K) {
            by_k[K - 1] += mse(t.tok.detokenize(std::span<const TokenId>(ids.data(), K)), c);
        }
        const TokenId random_id = static_cast<TokenId>(rng.below(1000));
        const double true_first = mse(t.tok.detokenize(std::span<const TokenId>(ids.data(), 1)), c);
        const double random_first = mse(t.tok.detokenize(TokenSequence{random_id}), c);
        if (true_first < random_first) ++wins;
    }
    for (std::size_t K = 0; K < 8; ++K) CHECK(by_k[7] <= by_k[K]);
    CHECK(double(wins) / t.heldout.size() >= 0.8);
}

TEST_CASE("trained model: decode depends on token order") {
    const auto& t = trained();
    std::size_t sensitive = 0, tried = 0;
    for (std::size_t i = 0; i < t.heldout.size(); i += 10) {
        auto ids = t.tok.tokenize(t.heldout[i]);
        if (ids[0] == ids[1]) continue;
        ++tried;
        const auto a = t.tok.detokenize(ids);
        std::swap(ids[0], ids[1]);
        if (!(t.tok.detokenize(ids) == a)) ++sensitive;
    }
    REQUIRE(tried > 0);
    CHECK(sensitive == tried);
}

TEST_CASE("checkpoint round trip") {
    const auto& t = trained();
    const auto path = std::filesystem::temp_directory_path() / "oatok_test_oat.ckpt";
    t.tok.save(path);
    const auto back = OatTokenizer::load(path);
    CHECK(back.trained());
    CHECK(back.config().levels == t.tok.config().levels);
    const auto& c = t.heldout.front();
    CHECK(back.tokenize(c) == t.tok.tokenize(c));
    const auto ids = t.tok.tokenize(c);
    CHECK(back.detokenize(ids) == t.tok.detokenize(ids));
    std::filesystem::remove(path);
}

TEST_CASE("flow decoder") {
    auto cfg = small_config(32);
    CHECK_THROWS_AS(OatTokenizer(cfg, 1).flow_decode(TokenSequence{1}, 4, Matrix(32, 2)), FeatureDisabledError);
    cfg.flow_decoder = true;
    OatTokenizer tok(cfg, 1);
    const auto chunks = testing::smooth_chunks(4, 1);
    TrainConfig tc;
    tc.steps = 30;
    tc.batch_size = 4;
    tc.adam.lr = 1e-3;
    const auto r = tok.train(chunks, tc, 1);
    for (double l : r.losses) CHECK(std::isfinite(l));
    Matrix eps(32, 2, 0.5);
    CHECK(std::isfinite(tok.flow_loss(chunks[0], 0.0, eps)));
    CHECK(std::isfinite(tok.flow_loss(chunks[0], 1.0, eps)));
    CHECK_THROWS_AS(tok.flow_loss(chunks[0], 1.5, eps), BoundsError);
    const auto ids = tok.tokenize(chunks[0]);
    const auto a = tok.flow_decode(ids, 8, eps);
    CHECK(a.all_finite());
    CHECK(tok.flow_decode(ids, 8, eps) == a);
    CHECK_THROWS_AS(tok.flow_decode(ids, 0, eps), ConfigError);
}

TEST_CASE("config validation") {
    auto c = small_config();
    c.model_dim = 50;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = small_config();
    c.H_l = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = small_config();
    CHECK(config_from_json(config_to_json(c)).model_dim == 64);
    CHECK(c.vocab_size() == 1000);
}
