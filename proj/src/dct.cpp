// SPDX-License-Identifier: Apache-2.0
#include "oatok/dct.hpp"

#include <cmath>

namespace oatok::dct {

DctPlan::DctPlan(std::size_t length) : length_(length), basis_(length, length) {
    if (length == 0) throw ConfigError("DCT length must be >= 1");
    const double n_len = static_cast<double>(length);
    for (std::size_t k = 0; k < length; ++k) {
        const double scale = k == 0 ? std::sqrt(1.0 / n_len) : std::sqrt(2.0 / n_len);
        for (std::size_t n = 0; n < length; ++n) {
            basis_(k, n) = scale * std::cos(M_PI * (2.0 * static_cast<double>(n) + 1.0) * static_cast<double>(k) /
                                            (2.0 * n_len));
        }
    }
}

std::vector<double> DctPlan::forward(std::span<const double> signal) const {
    if (signal.size() != length_) {
        throw ShapeError("dct2: expected length " + std::to_string(length_) + ", got " + std::to_string(signal.size()));
    }
    std::vector<double> out(length_, 0.0);
    for (std::size_t k = 0; k < length_; ++k) {
        double acc = 0.0;
        for (std::size_t n = 0; n < length_; ++n) acc += basis_(k, n) * signal[n];
        out[k] = acc;
    }
    return out;
}

std::vector<double> DctPlan::inverse(std::span<const double> coeffs) const {
    if (coeffs.size() != length_) {
        throw ShapeError("idct: expected length " + std::to_string(length_) + ", got " + std::to_string(coeffs.size()));
    }
    std::vector<double> out(length_, 0.0);
    for (std::size_t k = 0; k < length_; ++k) {
        const double c = coeffs[k];
        for (std::size_t n = 0; n < length_; ++n) out[n] += basis_(k, n) * c;
    }
    return out;
}

}  // namespace oatok::dct
