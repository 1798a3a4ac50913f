// SPDX-License-Identifier: Apache-2.0
#include "oatok/fsq.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace oatok::fsq {
namespace {

void check_dims(std::span<const double> z, const FsqLevels& levels) {
    if (z.size() != levels.dims()) {
        throw ShapeError("FSQ: latent has " + std::to_string(z.size()) + " channels, levels have " +
                         std::to_string(levels.dims()));
    }
}

}  // namespace

void FsqLevels::validate() const {
    if (L.empty()) throw ConfigError("FSQ levels must be non-empty");
    for (int l : L) {
        if (l < 2) throw ConfigError("FSQ level counts must be >= 2");
    }
    std::size_t product = 1;
    for (int l : L) {
        if (product > static_cast<std::size_t>(std::numeric_limits<TokenId>::max()) / static_cast<std::size_t>(l)) {
            throw ConfigError("FSQ codebook does not fit the token id type");
        }
        product *= static_cast<std::size_t>(l);
    }
}

std::size_t codebook_size(const FsqLevels& levels) {
    levels.validate();
    std::size_t n = 1;
    for (int l : levels.L) n *= static_cast<std::size_t>(l);
    return n;
}

std::vector<double> fsq_bound(std::span<const double> z, const FsqLevels& levels) {
    check_dims(z, levels);
    std::vector<double> b(z.size());
    for (std::size_t c = 0; c < z.size(); ++c) {
        b[c] = (std::tanh(z[c]) + 1.0) * 0.5 * static_cast<double>(levels.L[c] - 1);
    }
    return b;
}

std::vector<double> fsq_bound_derivative(std::span<const double> z, const FsqLevels& levels) {
    check_dims(z, levels);
    std::vector<double> g(z.size());
    for (std::size_t c = 0; c < z.size(); ++c) {
        const double t = std::tanh(z[c]);
        g[c] = 0.5 * static_cast<double>(levels.L[c] - 1) * (1.0 - t * t);
    }
    return g;
}

std::vector<double> fsq_surrogate(std::span<const double> z, const FsqLevels& levels) {
    auto b = fsq_bound(z, levels);
    for (std::size_t c = 0; c < b.size(); ++c) b[c] = 2.0 * b[c] / static_cast<double>(levels.L[c] - 1) - 1.0;
    return b;
}

std::vector<double> fsq_surrogate_derivative(std::span<const double> z, const FsqLevels& levels) {
    auto g = fsq_bound_derivative(z, levels);
    for (std::size_t c = 0; c < g.size(); ++c) g[c] *= 2.0 / static_cast<double>(levels.L[c] - 1);
    return g;
}

Quantized fsq_quantize(std::span<const double> z, const FsqLevels& levels) {
    levels.validate();
    const auto b = fsq_bound(z, levels);
    Quantized out;
    out.code.resize(z.size());
    for (std::size_t c = 0; c < z.size(); ++c) {
        if (!std::isfinite(z[c])) throw InvalidInputError("FSQ: non-finite latent");
        // std::round is half-away-from-zero.
        out.code[c] = std::clamp(static_cast<int>(std::round(b[c])), 0, levels.L[c] - 1);
    }
    out.index = code_to_index(out.code, levels);
    out.ste_value = code_embedding(out.code, levels);
    out.ste_grad = fsq_surrogate_derivative(z, levels);
    return out;
}

std::vector<double> code_embedding(const FsqCode& code, const FsqLevels& levels) {
    if (code.size() != levels.dims()) throw ShapeError("FSQ code length mismatch");
    std::vector<double> e(code.size());
    for (std::size_t c = 0; c < code.size(); ++c) {
        if (code[c] < 0 || code[c] >= levels.L[c]) throw BoundsError("FSQ code component out of range");
        e[c] = 2.0 * static_cast<double>(code[c]) / static_cast<double>(levels.L[c] - 1) - 1.0;
    }
    return e;
}

TokenId code_to_index(const FsqCode& code, const FsqLevels& levels) {
    if (code.size() != levels.dims()) throw ShapeError("FSQ code length mismatch");
    std::int64_t index = 0;
    std::int64_t radix = 1;
    for (std::size_t c = 0; c < code.size(); ++c) {
        if (code[c] < 0 || code[c] >= levels.L[c]) {
            throw BoundsError("FSQ code component " + std::to_string(c) + " = " + std::to_string(code[c]) +
                              " outside [0, " + std::to_string(levels.L[c]) + ")");
        }
        index += code[c] * radix;
        radix *= levels.L[c];
    }
    return static_cast<TokenId>(index);
}

FsqCode index_to_code(TokenId index, const FsqLevels& levels) {
    const auto n = static_cast<TokenId>(codebook_size(levels));
    if (index < 0 || index >= n) {
        throw BoundsError("FSQ index " + std::to_string(index) + " outside [0, " + std::to_string(n) + ")");
    }
    FsqCode code(levels.dims());
    for (std::size_t c = 0; c < levels.dims(); ++c) {
        code[c] = index % levels.L[c];
        index /= levels.L[c];
    }
    return code;
}

}  // namespace oatok::fsq
