// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <vector>

#include "oatok/common.hpp"

namespace oatok::fsq {

// Finite scalar quantization. Channel c is bounded into [0, L_c - 1] with
//   b_c = (tanh(z_c) + 1) / 2 * (L_c - 1),
// rounded half away from zero, and re-centered to e_c = 2 q_c / (L_c - 1) - 1.
// The straight-through surrogate is s_c = 2 b_c / (L_c - 1) - 1 (= tanh z_c).

struct FsqLevels {
    std::vector<int> L{8, 5, 5, 5};

    std::size_t dims() const noexcept { return L.size(); }
    void validate() const;
    bool operator==(const FsqLevels&) const = default;
};

using FsqCode = std::vector<int>;

std::size_t codebook_size(const FsqLevels& levels);

std::vector<double> fsq_bound(std::span<const double> z, const FsqLevels& levels);

/// d b_c / d z_c.
std::vector<double> fsq_bound_derivative(std::span<const double> z, const FsqLevels& levels);

/// Centered surrogate 2 b / (L - 1) - 1, computed through fsq_bound.
std::vector<double> fsq_surrogate(std::span<const double> z, const FsqLevels& levels);
std::vector<double> fsq_surrogate_derivative(std::span<const double> z, const FsqLevels& levels);

struct Quantized {
    FsqCode code;
    TokenId index = 0;
    std::vector<double> ste_value;  ///< forward value: centered embedding of `code`
    std::vector<double> ste_grad;   ///< d ste_value / d z as seen by backprop (surrogate slope)
};

Quantized fsq_quantize(std::span<const double> z, const FsqLevels& levels);

/// Centered embedding e_c = 2 q_c / (L_c - 1) - 1, in [-1, 1].
std::vector<double> code_embedding(const FsqCode& code, const FsqLevels& levels);

/// Mixed radix, channel 0 least significant.
TokenId code_to_index(const FsqCode& code, const FsqLevels& levels);
FsqCode index_to_code(TokenId index, const FsqLevels& levels);

}  // namespace oatok::fsq
