// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>

#include "oatok/common.hpp"

namespace oatok::bin {

struct BinConfig {
    std::size_t N = 256;  ///< bins per dimension
};

/// Token for a normalized value: clamp(floor((x + 1) / 2 * N), 0, N - 1).
TokenId bin_index(double x, std::size_t N);

/// Center of bin `token` in [-1, 1].
double bin_center(TokenId token, std::size_t N);

/// Flattens time-major: t=0 dims 0..D_a-1, then t=1, ...
TokenSequence bin_tokenize(const ActionChunk& chunk, const BinConfig& config);

ActionChunk bin_detokenize(std::span<const TokenId> tokens, std::size_t horizon, std::size_t dims,
                           const BinConfig& config);

}  // namespace oatok::bin
