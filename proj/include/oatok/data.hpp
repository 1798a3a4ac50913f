// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "oatok/common.hpp"
#include "oatok/env.hpp"

namespace oatok::data {

enum class Family { SmoothFourier, PointMassExpert };

std::string to_string(Family f);
Family family_from_string(const std::string& s);

struct DatasetConfig {
    std::size_t n_trajectories = 100;
    std::size_t T = 64;
    std::size_t D_a = 2;
    Family family = Family::SmoothFourier;
    double noise_std = 0.0;
    env::EnvConfig env{};

    /// Throws ConfigError on an invalid combination.
    void validate() const;
};

struct TrajectoryDataset {
    std::vector<Matrix> trajectories;   ///< each T x D_a
    std::vector<Matrix> observations;   ///< point-mass family only: T x obs_dim, row t precedes action t
    std::uint64_t seed = 0;
    DatasetConfig config;

    std::size_t size() const noexcept { return trajectories.size(); }
    std::size_t dims() const { return trajectories.empty() ? 0 : trajectories.front().cols(); }
};

/// One sinusoid a * sin(2*pi*f*t/T + phase), f in cycles per trajectory.
struct FourierComponent {
    double amplitude = 0.0;
    double frequency = 0.0;
    double phase = 0.0;
};

/// Components indexed [trajectory][dimension][component]. The smooth-fourier
/// generator draws exactly these before adding noise.
using FourierSpec = std::vector<std::vector<std::vector<FourierComponent>>>;

inline constexpr std::size_t kMaxComponents = 5;
inline constexpr double kMaxFrequency = 4.0;

FourierSpec sample_fourier_components(const DatasetConfig& config, std::uint64_t seed);

TrajectoryDataset generate_synthetic_dataset(const DatasetConfig& config, std::uint64_t seed);

struct NormStats {
    std::vector<double> min;
    std::vector<double> max;

    std::size_t dims() const noexcept { return min.size(); }
};

NormStats fit_normalizer(const TrajectoryDataset& dataset);

/// Affine map min -> -1, max -> +1 per column; inputs outside [min, max] clip.
Matrix normalize(const Matrix& values, const NormStats& stats);
Matrix denormalize(const Matrix& values, const NormStats& stats);
ActionChunk normalize(const ActionChunk& chunk, const NormStats& stats);
ActionChunk denormalize(const ActionChunk& chunk, const NormStats& stats);

/// Sliding windows [t, t + horizon) at t = 0, stride, 2*stride, ...
std::vector<ActionChunk> chunk_stream(const Matrix& trajectory, std::size_t horizon, std::size_t stride);

/// Normalizes every trajectory and chunks it.
std::vector<ActionChunk> normalized_chunks(const TrajectoryDataset& dataset, const NormStats& stats,
                                           std::size_t horizon, std::size_t stride);

// JSON Lines dataset ("traj", optional "obs") plus "<path>.meta.json" sidecar.
void save_dataset(const std::filesystem::path& path, const TrajectoryDataset& dataset);
TrajectoryDataset load_dataset(const std::filesystem::path& path);
std::filesystem::path metadata_path(const std::filesystem::path& dataset_path);

void save_norm_stats(const std::filesystem::path& path, const NormStats& stats);
NormStats load_norm_stats(const std::filesystem::path& path);

}  // namespace oatok::data
