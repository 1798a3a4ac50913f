// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "oatok/random.hpp"

namespace oatok::nn {

/// Row-major float matrix. Vectors are 1 x n.
struct Tensor {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<float> data;

    Tensor() = default;
    Tensor(std::size_t r, std::size_t c, float fill = 0.0f) : rows(r), cols(c), data(r * c, fill) {}

    std::size_t size() const noexcept { return data.size(); }
    bool empty() const noexcept { return data.empty(); }
    float* row(std::size_t r) { return data.data() + r * cols; }
    const float* row(std::size_t r) const { return data.data() + r * cols; }
    float& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    float at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
    bool same_shape(const Tensor& o) const noexcept { return rows == o.rows && cols == o.cols; }
    void zero() { std::fill(data.begin(), data.end(), 0.0f); }
};

using ParamId = std::size_t;

struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;
    bool trainable = true;
};

enum class Init { Zeros, Ones, Normal002, FanIn };

// Ordered set of named parameters. Registration order is the serialization
// order of checkpoints.
class ParameterStore {
public:
    ParamId add(std::string name, std::size_t rows, std::size_t cols, Init init, Rng& rng);
    /// Registers a constant (never updated, still serialized).
    ParamId add_constant(std::string name, Tensor value);

    Parameter& operator[](ParamId id) { return params_.at(id); }
    const Parameter& operator[](ParamId id) const { return params_.at(id); }
    std::size_t size() const noexcept { return params_.size(); }
    std::size_t scalar_count() const;

    void zero_grad();
    double grad_norm() const;
    /// Sum of squared gradients of parameters whose name starts with prefix.
    double grad_norm(const std::string& prefix) const;
    bool all_finite() const;

    std::vector<Parameter>& params() noexcept { return params_; }
    const std::vector<Parameter>& params() const noexcept { return params_; }

    /// Flat little-endian float32 blob in registration order.
    std::vector<char> serialize() const;
    void deserialize(std::span<const char> blob);

private:
    std::vector<Parameter> params_;
};

/// Sinusoidal positional table, rows = positions.
Tensor sinusoidal_table(std::size_t positions, std::size_t dim);

}  // namespace oatok::nn
