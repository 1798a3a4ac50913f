// SPDX-License-Identifier: Apache-2.0
#include "oatok/bin_tokenizer.hpp"

#include <algorithm>
#include <cmath>

namespace oatok::bin {
namespace {

void check_config(const BinConfig& config) {
    if (config.N < 2) throw ConfigError("bin tokenizer needs N >= 2");
}

}  // namespace

TokenId bin_index(double x, std::size_t N) {
    const double scaled = std::floor((x + 1.0) * 0.5 * static_cast<double>(N));
    const double clamped = std::clamp(scaled, 0.0, static_cast<double>(N - 1));
    return static_cast<TokenId>(clamped);
}

double bin_center(TokenId token, std::size_t N) {
    return -1.0 + 2.0 * (static_cast<double>(token) + 0.5) / static_cast<double>(N);
}

TokenSequence bin_tokenize(const ActionChunk& chunk, const BinConfig& config) {
    check_config(config);
    TokenSequence tokens;
    tokens.reserve(chunk.horizon() * chunk.dims());
    for (std::size_t t = 0; t < chunk.horizon(); ++t) {
        for (std::size_t d = 0; d < chunk.dims(); ++d) {
            const double x = chunk(t, d);
            if (!std::isfinite(x)) {
                throw InvalidInputError("bin_tokenize: non-finite entry at (" + std::to_string(t) + ", " +
                                        std::to_string(d) + ")");
            }
            tokens.push_back(bin_index(x, config.N));
        }
    }
    return tokens;
}

ActionChunk bin_detokenize(std::span<const TokenId> tokens, std::size_t horizon, std::size_t dims,
                           const BinConfig& config) {
    check_config(config);
    if (tokens.size() != horizon * dims) {
        throw ShapeError("bin_detokenize: expected " + std::to_string(horizon * dims) + " tokens, got " +
                         std::to_string(tokens.size()));
    }
    ActionChunk chunk(horizon, dims);
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        const TokenId tok = tokens[i];
        if (tok < 0 || static_cast<std::size_t>(tok) >= config.N) {
            throw VocabularyError("bin_detokenize: token " + std::to_string(tok) + " outside [0, " +
                                  std::to_string(config.N) + ")");
        }
        chunk(i / dims, i % dims) = bin_center(tok, config.N);
    }
    return chunk;
}

}  // namespace oatok::bin
