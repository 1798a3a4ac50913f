// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "oatok/fsq.hpp"
#include "oatok/nn/tensor.hpp"

namespace oatok::nn {

/// Boolean attention pattern; allowed(i, j) means query i may attend key j.
struct AttentionMask {
    std::size_t q_len = 0;
    std::size_t k_len = 0;
    std::vector<std::uint8_t> allowed;

    AttentionMask() = default;
    AttentionMask(std::size_t q, std::size_t k, bool fill) : q_len(q), k_len(k), allowed(q * k, fill ? 1 : 0) {}
    bool operator()(std::size_t i, std::size_t j) const { return allowed[i * k_len + j] != 0; }
    void set(std::size_t i, std::size_t j, bool v) { allowed[i * k_len + j] = v ? 1 : 0; }

    static AttentionMask causal(std::size_t n);
};

struct Var {
    std::int32_t id = -1;
    bool valid() const noexcept { return id >= 0; }
};

// Reverse-mode tape over 2-D float tensors. Batched sequences are stored as
// stacked rows: sample b occupies rows [b * seq, (b + 1) * seq).
//
// With record_grad == false no backward closures are kept; that is the
// inference mode.
class Graph {
public:
    explicit Graph(bool record_grad = true) : record_grad_(record_grad) {}

    Var constant(Tensor t);
    Var param(ParameterStore& store, ParamId id);

    const Tensor& value(Var v) const { return nodes_.at(static_cast<std::size_t>(v.id)).value; }
    /// Gradient buffer, allocated on first use.
    Tensor& grad(Var v);
    bool requires_grad(Var v) const { return nodes_.at(static_cast<std::size_t>(v.id)).requires_grad; }

    Var matmul(Var a, Var b);
    /// x W + b, with b a 1 x out row.
    Var linear(Var x, Var w, Var b);
    Var add(Var a, Var b);
    /// a[i] += b[i % b.rows]: positional tables and biases.
    Var add_tiled(Var a, Var b);
    /// a[i] += b[i / group]: one row of b per group of `group` rows of a.
    Var add_repeated(Var a, Var b, std::size_t group);
    Var scale(Var a, float s);
    Var gelu(Var x);
    Var layer_norm(Var x, Var gain, Var bias);

    /// Multi-head scaled dot-product attention. q has batch*q_len rows, k/v
    /// have batch*k_len rows; column blocks of width cols/heads are heads.
    /// An empty mask allows everything.
    Var attention(Var q, Var k, Var v, std::size_t batch, std::size_t heads, const AttentionMask& mask);

    /// Per-sample row concatenation: [a_b ; b_b] for every sample b.
    Var concat_rows(Var a, Var b, std::size_t batch);
    /// Rows [begin, begin + count) of every sample of length seq.
    Var slice_rows(Var x, std::size_t batch, std::size_t seq, std::size_t begin, std::size_t count);
    /// out[i] = keep[i] ? x[i] : fill (fill is 1 x cols; gradient flows to both).
    Var replace_rows(Var x, Var fill, std::span<const std::uint8_t> keep);
    /// out[i] = table[ids[i]].
    Var gather_rows(Var table, std::span<const std::int32_t> ids);

    /// Straight-through FSQ: forward is the centered code embedding, backward
    /// uses the tanh surrogate slope. Codes are written to `codes` when given.
    Var fsq_ste(Var z, const fsq::FsqLevels& levels, std::vector<fsq::FsqCode>* codes = nullptr);

    /// Mean over all entries of (pred - target)^2.
    Var mse_loss(Var pred, const Tensor& target);
    /// Weighted mean token cross entropy; rows with weight 0 are ignored.
    Var cross_entropy(Var logits, std::span<const std::int32_t> targets, std::span<const float> weights);

    void backward(Var loss);

    std::size_t node_count() const noexcept { return nodes_.size(); }

private:
    struct Node {
        Tensor value;
        Tensor grad;
        bool requires_grad = false;
        std::function<void(Graph&)> back;
        ParameterStore* store = nullptr;
        ParamId pid = 0;
    };

    Var push(Tensor value, bool requires_grad);
    Node& node(Var v) { return nodes_[static_cast<std::size_t>(v.id)]; }
    const Node& node(Var v) const { return nodes_[static_cast<std::size_t>(v.id)]; }
    bool needs(Var v) const { return record_grad_ && node(v).requires_grad; }

    bool record_grad_;
    std::vector<Node> nodes_;
};

}  // namespace oatok::nn
