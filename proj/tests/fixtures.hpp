// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "oatok/data.hpp"

namespace oatok::testing {

/// Normalized 32 x 2 windows of a smooth-fourier dataset.
inline std::vector<ActionChunk> smooth_chunks(std::size_t n_trajectories, std::uint64_t seed, std::size_t stride = 4,
                                              std::size_t T = 64) {
    data::DatasetConfig cfg;
    cfg.n_trajectories = n_trajectories;
    cfg.T = T;
    cfg.D_a = 2;
    const auto ds = data::generate_synthetic_dataset(cfg, seed);
    return data::normalized_chunks(ds, data::fit_normalizer(ds), 32, stride);
}

}  // namespace oatok::testing
