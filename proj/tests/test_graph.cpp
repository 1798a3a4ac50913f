// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "oatok/common.hpp"
#include "oatok/nn/adam.hpp"
#include "oatok/nn/graph.hpp"
#include "oatok/nn/kernels.hpp"
#include "oatok/nn/layers.hpp"

using namespace oatok;
using namespace oatok::nn;

namespace {

using Builder = std::function<Var(Graph&, ParameterStore&)>;

Tensor random_tensor(std::size_t r, std::size_t c, Rng& rng, double scale = 1.0) {
    Tensor t(r, c);
    for (auto& x : t.data) x = static_cast<float>(scale * rng.normal());
    return t;
}

double eval_loss(ParameterStore& s, const Builder& build) {
    Graph g(false);
    Var l = build(g, s);
    return g.value(l).data[0];
}

// Central differences in float32: step 1e-2 keeps rounding noise near 1e-4.
void check_gradients(ParameterStore& s, const Builder& build, double h = 1e-2, double atol = 2e-3,
                     double rtol = 2e-2) {
    s.zero_grad();
    {
        Graph g;
        Var l = build(g, s);
        REQUIRE(g.value(l).size() == 1);
        g.backward(l);
    }
    for (std::size_t p = 0; p < s.size(); ++p) {
        auto& param = s[p];
        if (!param.trainable) continue;
        const std::size_t n = param.value.size();
        const std::size_t step = n > 24 ? n / 24 : 1;
        for (std::size_t i = 0; i < n; i += step) {
            const float orig = param.value.data[i];
            param.value.data[i] = orig + static_cast<float>(h);
            const double lp = eval_loss(s, build);
            param.value.data[i] = orig - static_cast<float>(h);
            const double lm = eval_loss(s, build);
            param.value.data[i] = orig;
            const double fd = (lp - lm) / (2.0 * h);
            const double an = param.grad.data[i];
            INFO(param.name << "[" << i << "] analytic " << an << " numeric " << fd);
            CHECK(std::abs(fd - an) <= atol + rtol * std::abs(fd));
        }
    }
}

struct Fixture {
    Rng rng{11};
    ParameterStore s;
    ParamId add(const std::string& name, std::size_t r, std::size_t c, double scale = 1.0) {
        ParamId id = s.add(name, r, c, Init::Zeros, rng);
        s[id].value = random_tensor(r, c, rng, scale);
        return id;
    }
};

}  // namespace

TEST_CASE("gradients: matmul, linear, add, scale") {
    Fixture f;
    auto a = f.add("a", 3, 4), b = f.add("b", 4, 5), bias = f.add("bias", 1, 5), c = f.add("c", 3, 5);
    const Tensor target = random_tensor(3, 5, f.rng);
    check_gradients(f.s, [&](Graph& g, ParameterStore& s) {
        Var x = g.linear(g.param(s, a), g.param(s, b), g.param(s, bias));
        Var y = g.add(g.matmul(g.param(s, a), g.param(s, b)), g.param(s, c));
        return g.mse_loss(g.add(x, g.scale(y, 0.5f)), target);
    });
}

TEST_CASE("gradients: add_tiled and add_repeated") {
    Fixture f;
    auto x = f.add("x", 6, 3), tile = f.add("tile", 2, 3), rep = f.add("rep", 3, 3);
    const Tensor target = random_tensor(6, 3, f.rng);
    check_gradients(f.s, [&](Graph& g, ParameterStore& s) {
        Var y = g.add_tiled(g.param(s, x), g.param(s, tile));
        return g.mse_loss(g.add_repeated(y, g.param(s, rep), 2), target);
    });
}

TEST_CASE("gradients: gelu and layer_norm") {
    Fixture f;
    auto x = f.add("x", 4, 6), gain = f.add("gain", 1, 6), bias = f.add("bias", 1, 6);
    const Tensor target = random_tensor(4, 6, f.rng);
    check_gradients(f.s, [&](Graph& g, ParameterStore& s) {
        Var y = g.layer_norm(g.param(s, x), g.param(s, gain), g.param(s, bias));
        return g.mse_loss(g.gelu(y), target);
    });
}

TEST_CASE("gradients: masked multi-head attention") {
    Fixture f;
    const std::size_t batch = 2, q_len = 3, k_len = 4, cols = 4, heads = 2;
    auto q = f.add("q", batch * q_len, cols), kk = f.add("k", batch * k_len, cols),
         v = f.add("v", batch * k_len, cols);
    AttentionMask mask(q_len, k_len, true);
    mask.set(0, 3, false);
    mask.set(1, 0, false);
    const Tensor target = random_tensor(batch * q_len, cols, f.rng);
    check_gradients(f.s, [&](Graph& g, ParameterStore& s) {
        Var o = g.attention(g.param(s, q), g.param(s, kk), g.param(s, v), batch, heads, mask);
        return g.mse_loss(o, target);
    });
}

TEST_CASE("gradients: row plumbing") {
    Fixture f;
    const std::size_t batch = 2;
    auto a = f.add("a", batch * 2, 3), b = f.add("b", batch * 3, 3), fill = f.add("fill", 1, 3),
         table = f.add("table", 5, 3);
    const std::vector<std::uint8_t> keep{1, 0, 1, 1, 0, 1};
    const std::vector<std::int32_t> ids{4, 0, 4, 2, 1, 3};
    const Tensor target = random_tensor(batch * 3, 3, f.rng);
    check_gradients(f.s, [&](Graph& g, ParameterStore& s) {
        Var cat = g.concat_rows(g.param(s, a), g.param(s, b), batch);  // batch * 5 rows
        Var mid = g.slice_rows(cat, batch, 5, 1, 3);
        Var rep = g.replace_rows(mid, g.param(s, fill), keep);
        Var gat = g.gather_rows(g.param(s, table), ids);
        return g.mse_loss(g.add(rep, gat), target);
    });
}

TEST_CASE("gradients: cross entropy with weights") {
    Fixture f;
    auto logits = f.add("logits", 4, 6);
    const std::vector<std::int32_t> targets{0, 5, 2, 2};
    const std::vector<float> weights{1.0f, 0.0f, 1.0f, 1.0f};
    check_gradients(f.s, [&](Graph& g, ParameterStore& s) {
        return g.cross_entropy(g.param(s, logits), targets, weights);
    });
}

TEST_CASE("cross entropy ignores rows with zero weight") {
    Tensor logits(2, 3);
    logits.at(0, 0) = 2.0f;
    logits.at(1, 2) = -5.0f;
    Graph g(false);
    Var l = g.cross_entropy(g.constant(logits), std::vector<std::int32_t>{0, 1}, std::vector<float>{1.0f, 0.0f});
    const double z = std::exp(2.0) + 2.0;
    CHECK(g.value(l).data[0] == doctest::Approx(-(2.0 - std::log(z))).epsilon(1e-5));
}

TEST_CASE("fsq_ste forwards the code embedding and backpropagates the surrogate slope") {
    fsq::FsqLevels levels{{8, 5, 5, 5}};
    Rng rng(3);
    ParameterStore s;
    ParamId z = s.add("z", 2, 4, Init::Zeros, rng);
    s[z].value = random_tensor(2, 4, rng);
    s.zero_grad();
    Graph g;
    std::vector<fsq::FsqCode> codes;
    Var q = g.fsq_ste(g.param(s, z), levels, &codes);
    Tensor zero(2, 4);
    Var loss = g.mse_loss(q, zero);
    g.backward(loss);
    REQUIRE(codes.size() == 2);
    for (std::size_t r = 0; r < 2; ++r) {
        std::vector<double> zr(4);
        for (std::size_t c = 0; c < 4; ++c) zr[c] = s[z].value.at(r, c);
        const auto qz = fsq::fsq_quantize(zr, levels);
        CHECK(codes[r] == qz.code);
        for (std::size_t c = 0; c < 4; ++c) {
            CHECK(g.value(q).at(r, c) == doctest::Approx(qz.ste_value[c]).epsilon(1e-6));
            const double upstream = 2.0 * qz.ste_value[c] / 8.0;
            CHECK(s[z].grad.at(r, c) == doctest::Approx(upstream * qz.ste_grad[c]).epsilon(1e-4));
        }
    }
}

TEST_CASE("causal mask and empty mask") {
    auto m = AttentionMask::causal(3);
    CHECK(m(0, 0));
    CHECK_FALSE(m(0, 1));
    CHECK(m(2, 1));
    // An empty mask allows every key: one query over two identical-score keys
    // averages their values.
    Tensor q(1, 2), k(2, 2), v(2, 2);
    v.at(0, 0) = 1.0f;
    v.at(1, 0) = 3.0f;
    Graph g(false);
    Var o = g.attention(g.constant(q), g.constant(k), g.constant(v), 1, 1, AttentionMask{});
    CHECK(g.value(o).at(0, 0) == doctest::Approx(2.0));
}

TEST_CASE("layer forward passes agree across kernel variants") {
    Rng rng(5);
    ParameterStore s;
    auto block = EncoderBlock::create(s, "blk", 32, 2, rng);
    const Tensor x = random_tensor(2 * 5, 32, rng);
    auto run = [&] {
        Graph g(false);
        Var y = block(g, s, g.constant(x), 2, AttentionMask::causal(5));
        return g.value(y);
    };
    const auto before = kernels::active().isa;
    kernels::set_active(kernels::Isa::Scalar);
    const Tensor ref = run();
    for (auto isa : kernels::available_isas()) {
        kernels::set_active(isa);
        const Tensor got = run();
        for (std::size_t i = 0; i < ref.size(); ++i) CHECK(got.data[i] == doctest::Approx(ref.data[i]).epsilon(1e-4));
    }
    kernels::set_active(before);
}

TEST_CASE("adam: constant lr by default, cosine decay when requested") {
    AdamConfig c;
    c.lr = 1e-3;
    CHECK(scheduled_lr(c, 0, 100) == doctest::Approx(1e-3));
    CHECK(scheduled_lr(c, 99, 100) == doctest::Approx(1e-3));
    c.final_lr_fraction = 0.1;
    CHECK(scheduled_lr(c, 0, 100) == doctest::Approx(1e-3));
    CHECK(scheduled_lr(c, 99, 100) == doctest::Approx(1e-4));
    CHECK(scheduled_lr(c, 0, 1) == doctest::Approx(1e-3));
    c.final_lr_fraction = 0.0;
    ParameterStore empty;
    CHECK_THROWS_AS(Adam(empty, c), ConfigError);
}

TEST_CASE("adam reduces a quadratic") {
    Rng rng(2);
    ParameterStore s;
    ParamId w = s.add("w", 1, 4, Init::Zeros, rng);
    s[w].value = random_tensor(1, 4, rng, 3.0);
    AdamConfig c;
    c.lr = 0.05;
    Adam opt(s, c);
    const Tensor target(1, 4, 1.0f);
    double first = 0.0, last = 0.0;
    for (int i = 0; i < 300; ++i) {
        s.zero_grad();
        Graph g;
        Var l = g.mse_loss(g.param(s, w), target);
        if (i == 0) first = g.value(l).data[0];
        last = g.value(l).data[0];
        g.backward(l);
        opt.step(s);
    }
    CHECK(last < 1e-3 * first);
}
