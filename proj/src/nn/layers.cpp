// SPDX-License-Identifier: Apache-2.0
#include "oatok/nn/layers.hpp"

#include "oatok/common.hpp"

namespace oatok::nn {

Linear Linear::create(ParameterStore& s, const std::string& name, std::size_t in, std::size_t out, Rng& rng,
                      Init init) {
    Linear l;
    l.in = in;
    l.out = out;
    l.w = s.add(name + ".w", in, out, init, rng);
    l.b = s.add(name + ".b", 1, out, Init::Zeros, rng);
    return l;
}

Var Linear::operator()(Graph& g, ParameterStore& s, Var x) const {
    return g.linear(x, g.param(s, w), g.param(s, b));
}

LayerNorm LayerNorm::create(ParameterStore& s, const std::string& name, std::size_t dim) {
    Rng unused(0);
    LayerNorm l;
    l.gain = s.add(name + ".gain", 1, dim, Init::Ones, unused);
    l.bias = s.add(name + ".bias", 1, dim, Init::Zeros, unused);
    return l;
}

Var LayerNorm::operator()(Graph& g, ParameterStore& s, Var x) const {
    return g.layer_norm(x, g.param(s, gain), g.param(s, bias));
}

MultiHeadAttention MultiHeadAttention::create(ParameterStore& s, const std::string& name, std::size_t dim,
                                              std::size_t heads, Rng& rng) {
    if (heads == 0 || dim % heads != 0) throw ConfigError("attention width must be divisible by head count");
    MultiHeadAttention m;
    m.heads = heads;
    m.q = Linear::create(s, name + ".q", dim, dim, rng);
    m.k = Linear::create(s, name + ".k", dim, dim, rng);
    m.v = Linear::create(s, name + ".v", dim, dim, rng);
    m.o = Linear::create(s, name + ".o", dim, dim, rng);
    return m;
}

Var MultiHeadAttention::operator()(Graph& g, ParameterStore& s, Var x, Var memory, std::size_t batch,
                                   const AttentionMask& mask) const {
    const Var qv = q(g, s, x);
    const Var kv = k(g, s, memory);
    const Var vv = v(g, s, memory);
    return o(g, s, g.attention(qv, kv, vv, batch, heads, mask));
}

FeedForward FeedForward::create(ParameterStore& s, const std::string& name, std::size_t dim, Rng& rng) {
    FeedForward f;
    f.fc1 = Linear::create(s, name + ".fc1", dim, 4 * dim, rng);
    f.fc2 = Linear::create(s, name + ".fc2", 4 * dim, dim, rng);
    return f;
}

Var FeedForward::operator()(Graph& g, ParameterStore& s, Var x) const { return fc2(g, s, g.gelu(fc1(g, s, x))); }

EncoderBlock EncoderBlock::create(ParameterStore& s, const std::string& name, std::size_t dim, std::size_t heads,
                                  Rng& rng) {
    EncoderBlock b;
    b.ln1 = LayerNorm::create(s, name + ".ln1", dim);
    b.attn = MultiHeadAttention::create(s, name + ".attn", dim, heads, rng);
    b.ln2 = LayerNorm::create(s, name + ".ln2", dim);
    b.ffn = FeedForward::create(s, name + ".ffn", dim, rng);
    return b;
}

Var EncoderBlock::operator()(Graph& g, ParameterStore& s, Var x, std::size_t batch, const AttentionMask& mask) const {
    const Var h = ln1(g, s, x);
    x = g.add(x, attn(g, s, h, h, batch, mask));
    return g.add(x, ffn(g, s, ln2(g, s, x)));
}

DecoderBlock DecoderBlock::create(ParameterStore& s, const std::string& name, std::size_t dim, std::size_t heads,
                                  Rng& rng) {
    DecoderBlock b;
    b.ln1 = LayerNorm::create(s, name + ".ln1", dim);
    b.self_attn = MultiHeadAttention::create(s, name + ".self", dim, heads, rng);
    b.ln2 = LayerNorm::create(s, name + ".ln2", dim);
    b.cross_attn = MultiHeadAttention::create(s, name + ".cross", dim, heads, rng);
    b.ln3 = LayerNorm::create(s, name + ".ln3", dim);
    b.ffn = FeedForward::create(s, name + ".ffn", dim, rng);
    return b;
}

Var DecoderBlock::operator()(Graph& g, ParameterStore& s, Var x, Var memory, std::size_t batch) const {
    const AttentionMask all;
    const Var h = ln1(g, s, x);
    x = g.add(x, self_attn(g, s, h, h, batch, all));
    x = g.add(x, cross_attn(g, s, ln2(g, s, x), memory, batch, all));
    return g.add(x, ffn(g, s, ln3(g, s, x)));
}

}  // namespace oatok::nn
