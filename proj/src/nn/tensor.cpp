// SPDX-License-Identifier: Apache-2.0
#include "oatok/nn/tensor.hpp"

#include <bit>
#include <cmath>
#include <cstring>

#include "oatok/common.hpp"

namespace oatok::nn {

static_assert(sizeof(float) == 4, "float32 blobs");

ParamId ParameterStore::add(std::string name, std::size_t rows, std::size_t cols, Init init, Rng& rng) {
    Parameter p;
    p.name = std::move(name);
    p.value = Tensor(rows, cols);
    p.grad = Tensor(rows, cols);
    switch (init) {
        case Init::Zeros: break;
        case Init::Ones: std::fill(p.value.data.begin(), p.value.data.end(), 1.0f); break;
        case Init::Normal002:
            for (auto& v : p.value.data) v = static_cast<float>(0.02 * rng.normal());
            break;
        case Init::FanIn: {
            // Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)); rows are the input side.
            const double bound = 1.0 / std::sqrt(static_cast<double>(rows));
            for (auto& v : p.value.data) v = static_cast<float>(rng.uniform(-bound, bound));
            break;
        }
    }
    params_.push_back(std::move(p));
    return params_.size() - 1;
}

ParamId ParameterStore::add_constant(std::string name, Tensor value) {
    Parameter p;
    p.name = std::move(name);
    p.grad = Tensor(value.rows, value.cols);
    p.value = std::move(value);
    p.trainable = false;
    params_.push_back(std::move(p));
    return params_.size() - 1;
}

std::size_t ParameterStore::scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
}

void ParameterStore::zero_grad() {
    for (auto& p : params_) p.grad.zero();
}

double ParameterStore::grad_norm() const { return grad_norm(""); }

double ParameterStore::grad_norm(const std::string& prefix) const {
    double acc = 0.0;
    for (const auto& p : params_) {
        if (p.name.compare(0, prefix.size(), prefix) != 0) continue;
        for (float g : p.grad.data) acc += static_cast<double>(g) * g;
    }
    return std::sqrt(acc);
}

bool ParameterStore::all_finite() const {
    for (const auto& p : params_) {
        for (float v : p.value.data) {
            if (!std::isfinite(v)) return false;
        }
    }
    return true;
}

std::vector<char> ParameterStore::serialize() const {
    std::vector<char> blob;
    blob.reserve(scalar_count() * 4);
    for (const auto& p : params_) {
        for (float v : p.value.data) {
            std::uint32_t bits = std::bit_cast<std::uint32_t>(v);
            if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
            char bytes[4];
            std::memcpy(bytes, &bits, 4);
            blob.insert(blob.end(), bytes, bytes + 4);
        }
    }
    return blob;
}

void ParameterStore::deserialize(std::span<const char> blob) {
    if (blob.size() != scalar_count() * 4) {
        throw FormatError("parameter blob has " + std::to_string(blob.size()) + " bytes, expected " +
                          std::to_string(scalar_count() * 4));
    }
    std::size_t off = 0;
    for (auto& p : params_) {
        for (auto& v : p.value.data) {
            std::uint32_t bits;
            std::memcpy(&bits, blob.data() + off, 4);
            if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
            v = std::bit_cast<float>(bits);
            off += 4;
        }
    }
}

Tensor sinusoidal_table(std::size_t positions, std::size_t dim) {
    Tensor t(positions, dim);
    for (std::size_t pos = 0; pos < positions; ++pos) {
        for (std::size_t i = 0; i < dim; i += 2) {
            const double freq = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(dim));
            t.at(pos, i) = static_cast<float>(std::sin(static_cast<double>(pos) * freq));
            if (i + 1 < dim) t.at(pos, i + 1) = static_cast<float>(std::cos(static_cast<double>(pos) * freq));
        }
    }
    return t;
}

}  // namespace oatok::nn
