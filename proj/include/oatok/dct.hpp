// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <vector>

#include "oatok/common.hpp"

namespace oatok::dct {

/// Precomputed orthonormal DCT-II basis of a fixed length.
/// basis(k, n) = s_k * cos(pi * (2n + 1) * k / (2N)), s_0 = sqrt(1/N), s_k = sqrt(2/N).
class DctPlan {
public:
    explicit DctPlan(std::size_t length);

    std::size_t length() const noexcept { return length_; }
    const Matrix& basis() const noexcept { return basis_; }

    /// Forward orthonormal DCT-II.
    std::vector<double> forward(std::span<const double> signal) const;
    /// Inverse (orthonormal DCT-III).
    std::vector<double> inverse(std::span<const double> coeffs) const;

private:
    std::size_t length_;
    Matrix basis_;
};

inline std::vector<double> dct2(std::span<const double> signal, const DctPlan& plan) { return plan.forward(signal); }
inline std::vector<double> idct(std::span<const double> coeffs, const DctPlan& plan) { return plan.inverse(coeffs); }

}  // namespace oatok::dct
