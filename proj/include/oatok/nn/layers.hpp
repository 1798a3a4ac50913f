// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "oatok/nn/graph.hpp"
#include "oatok/nn/tensor.hpp"

namespace oatok::nn {

// Layers hold parameter ids into a ParameterStore. They are cheap value types;
// the store owns the weights.

struct Linear {
    ParamId w = 0;
    ParamId b = 0;
    std::size_t in = 0;
    std::size_t out = 0;

    static Linear create(ParameterStore& s, const std::string& name, std::size_t in, std::size_t out, Rng& rng,
                         Init init = Init::FanIn);
    Var operator()(Graph& g, ParameterStore& s, Var x) const;
};

struct LayerNorm {
    ParamId gain = 0;
    ParamId bias = 0;

    static LayerNorm create(ParameterStore& s, const std::string& name, std::size_t dim);
    Var operator()(Graph& g, ParameterStore& s, Var x) const;
};

struct MultiHeadAttention {
    Linear q, k, v, o;
    std::size_t heads = 1;

    static MultiHeadAttention create(ParameterStore& s, const std::string& name, std::size_t dim,
                                     std::size_t heads, Rng& rng);
    /// x: batch*q_len rows; memory: batch*k_len rows.
    Var operator()(Graph& g, ParameterStore& s, Var x, Var memory, std::size_t batch,
                   const AttentionMask& mask) const;
};

struct FeedForward {
    Linear fc1, fc2;

    static FeedForward create(ParameterStore& s, const std::string& name, std::size_t dim, Rng& rng);
    Var operator()(Graph& g, ParameterStore& s, Var x) const;
};

/// Pre-LN self-attention block.
struct EncoderBlock {
    LayerNorm ln1, ln2;
    MultiHeadAttention attn;
    FeedForward ffn;

    static EncoderBlock create(ParameterStore& s, const std::string& name, std::size_t dim, std::size_t heads,
                               Rng& rng);
    Var operator()(Graph& g, ParameterStore& s, Var x, std::size_t batch, const AttentionMask& mask) const;
};

/// Pre-LN self-attention, cross-attention to memory, feed-forward.
struct DecoderBlock {
    LayerNorm ln1, ln2, ln3;
    MultiHeadAttention self_attn, cross_attn;
    FeedForward ffn;

    static DecoderBlock create(ParameterStore& s, const std::string& name, std::size_t dim, std::size_t heads,
                               Rng& rng);
    Var operator()(Graph& g, ParameterStore& s, Var x, Var memory, std::size_t batch) const;
};

}  // namespace oatok::nn
