// SPDX-License-Identifier: Apache-2.0
#include "oatok/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "oatok/json_io.hpp"
#include "oatok/random.hpp"

namespace oatok::data {

std::string to_string(Family f) {
    switch (f) {
        case Family::SmoothFourier: return "smooth-fourier";
        case Family::PointMassExpert: return "point-mass-expert";
    }
    return "?";
}

Family family_from_string(const std::string& s) {
    if (s == "smooth-fourier") return Family::SmoothFourier;
    if (s == "point-mass-expert") return Family::PointMassExpert;
    throw ConfigError("unknown dataset family '" + s + "'");
}

void DatasetConfig::validate() const {
    if (n_trajectories < 1) throw ConfigError("n_trajectories must be >= 1");
    if (T < 1) throw ConfigError("T must be >= 1");
    if (D_a < 1) throw ConfigError("D_a must be >= 1");
    if (!(noise_std >= 0.0) || !std::isfinite(noise_std)) throw ConfigError("noise_std must be finite and >= 0");
    if (family == Family::PointMassExpert && D_a != env::kActionDims) {
        throw ConfigError("point-mass-expert family has D_a = " + std::to_string(env::kActionDims));
    }
}

FourierSpec sample_fourier_components(const DatasetConfig& config, std::uint64_t seed) {
    config.validate();
    FourierSpec spec(config.n_trajectories);
    for (std::size_t n = 0; n < config.n_trajectories; ++n) {
        Rng rng(mix_seed(seed, n));
        spec[n].resize(config.D_a);
        for (std::size_t d = 0; d < config.D_a; ++d) {
            const std::size_t count = 1 + rng.below(kMaxComponents);
            auto& comps = spec[n][d];
            comps.resize(count);
            for (auto& c : comps) {
                c.amplitude = rng.uniform(0.1, 1.0) / static_cast<double>(count);
                // (0, kMaxFrequency]: 1 - uniform() lies in (0, 1].
                c.frequency = kMaxFrequency * (1.0 - rng.uniform());
                c.phase = rng.uniform(0.0, 2.0 * M_PI);
            }
        }
    }
    return spec;
}

namespace {

TrajectoryDataset generate_fourier(const DatasetConfig& config, std::uint64_t seed) {
    const FourierSpec spec = sample_fourier_components(config, seed);
    TrajectoryDataset ds;
    ds.trajectories.reserve(config.n_trajectories);
    const double T = static_cast<double>(config.T);
    for (std::size_t n = 0; n < config.n_trajectories; ++n) {
        Rng noise(mix_seed(seed ^ 0xA5A5A5A5ULL, n));
        Matrix traj(config.T, config.D_a);
        for (std::size_t t = 0; t < config.T; ++t) {
            for (std::size_t d = 0; d < config.D_a; ++d) {
                double x = 0.0;
                for (const auto& c : spec[n][d]) {
                    x += c.amplitude * std::sin(2.0 * M_PI * c.frequency * static_cast<double>(t) / T + c.phase);
                }
                if (config.noise_std > 0.0) x += config.noise_std * noise.normal();
                traj(t, d) = x;
            }
        }
        ds.trajectories.push_back(std::move(traj));
    }
    return ds;
}

TrajectoryDataset generate_point_mass(const DatasetConfig& config, std::uint64_t seed) {
    TrajectoryDataset ds;
    ds.trajectories.reserve(config.n_trajectories);
    ds.observations.reserve(config.n_trajectories);
    for (std::size_t n = 0; n < config.n_trajectories; ++n) {
        Rng noise(mix_seed(seed ^ 0x5A5A5A5AULL, n));
        const auto ep = env::run_expert(config.env, mix_seed(seed, n), config.T);
        Matrix traj(config.T, env::kActionDims);
        Matrix obs(config.T, env::kObservationDims);
        for (std::size_t t = 0; t < config.T; ++t) {
            for (std::size_t d = 0; d < env::kActionDims; ++d) {
                double a = ep.actions[t][d];
                // The gripper channel stays binary.
                if (config.noise_std > 0.0 && d < 2) a += config.noise_std * noise.normal();
                traj(t, d) = a;
            }
            for (std::size_t k = 0; k < env::kObservationDims; ++k) obs(t, k) = ep.observations[t][k];
        }
        ds.trajectories.push_back(std::move(traj));
        ds.observations.push_back(std::move(obs));
    }
    return ds;
}

}  // namespace

TrajectoryDataset generate_synthetic_dataset(const DatasetConfig& config, std::uint64_t seed) {
    config.validate();
    TrajectoryDataset ds = config.family == Family::SmoothFourier ? generate_fourier(config, seed)
                                                                  : generate_point_mass(config, seed);
    ds.seed = seed;
    ds.config = config;
    return ds;
}

NormStats fit_normalizer(const TrajectoryDataset& dataset) {
    if (dataset.trajectories.empty()) throw InvalidInputError("fit_normalizer: empty dataset");
    const std::size_t dims = dataset.dims();
    NormStats stats;
    stats.min.assign(dims, std::numeric_limits<double>::infinity());
    stats.max.assign(dims, -std::numeric_limits<double>::infinity());
    for (const auto& traj : dataset.trajectories) {
        if (traj.cols() != dims) throw ShapeError("fit_normalizer: trajectories disagree on D_a");
        for (std::size_t t = 0; t < traj.rows(); ++t) {
            for (std::size_t d = 0; d < dims; ++d) {
                const double v = traj(t, d);
                if (!std::isfinite(v)) throw InvalidInputError("fit_normalizer: non-finite value");
                stats.min[d] = std::min(stats.min[d], v);
                stats.max[d] = std::max(stats.max[d], v);
            }
        }
    }
    for (std::size_t d = 0; d < dims; ++d) {
        if (!(stats.min[d] < stats.max[d])) {
            throw InvalidInputError("fit_normalizer: degenerate dimension " + std::to_string(d) +
                                    " (min == max == " + std::to_string(stats.min[d]) + ")");
        }
    }
    return stats;
}

namespace {

void check_stats(const Matrix& values, const NormStats& stats) {
    if (values.cols() != stats.dims()) {
        throw ShapeError("normalizer has " + std::to_string(stats.dims()) + " dims, input has " +
                         std::to_string(values.cols()));
    }
}

}  // namespace

Matrix normalize(const Matrix& values, const NormStats& stats) {
    check_stats(values, stats);
    Matrix out(values.rows(), values.cols());
    for (std::size_t t = 0; t < values.rows(); ++t) {
        for (std::size_t d = 0; d < values.cols(); ++d) {
            const double lo = stats.min[d];
            const double hi = stats.max[d];
            const double x = std::clamp(values(t, d), lo, hi);
            out(t, d) = 2.0 * (x - lo) / (hi - lo) - 1.0;
        }
    }
    return out;
}

Matrix denormalize(const Matrix& values, const NormStats& stats) {
    check_stats(values, stats);
    Matrix out(values.rows(), values.cols());
    for (std::size_t t = 0; t < values.rows(); ++t) {
        for (std::size_t d = 0; d < values.cols(); ++d) {
            const double lo = stats.min[d];
            const double hi = stats.max[d];
            out(t, d) = lo + (values(t, d) + 1.0) * 0.5 * (hi - lo);
        }
    }
    return out;
}

ActionChunk normalize(const ActionChunk& chunk, const NormStats& stats) {
    return ActionChunk(normalize(chunk.values(), stats));
}

ActionChunk denormalize(const ActionChunk& chunk, const NormStats& stats) {
    return ActionChunk(denormalize(chunk.values(), stats));
}

std::vector<ActionChunk> chunk_stream(const Matrix& trajectory, std::size_t horizon, std::size_t stride) {
    if (horizon < 1) throw ConfigError("chunk horizon must be >= 1");
    if (stride < 1) throw ConfigError("chunk stride must be >= 1");
    if (trajectory.rows() < horizon) {
        throw InvalidInputError("insufficient trajectory length: T=" + std::to_string(trajectory.rows()) +
                                " < H_a=" + std::to_string(horizon));
    }
    const std::size_t count = (trajectory.rows() - horizon) / stride + 1;
    std::vector<ActionChunk> chunks;
    chunks.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t start = i * stride;
        ActionChunk c(horizon, trajectory.cols());
        for (std::size_t t = 0; t < horizon; ++t) {
            for (std::size_t d = 0; d < trajectory.cols(); ++d) c(t, d) = trajectory(start + t, d);
        }
        chunks.push_back(std::move(c));
    }
    return chunks;
}

std::vector<ActionChunk> normalized_chunks(const TrajectoryDataset& dataset, const NormStats& stats,
                                           std::size_t horizon, std::size_t stride) {
    std::vector<ActionChunk> out;
    for (const auto& traj : dataset.trajectories) {
        auto chunks = chunk_stream(normalize(traj, stats), horizon, stride);
        for (auto& c : chunks) out.push_back(std::move(c));
    }
    return out;
}

std::filesystem::path metadata_path(const std::filesystem::path& dataset_path) {
    return std::filesystem::path(dataset_path.string() + ".meta.json");
}

void save_dataset(const std::filesystem::path& path, const TrajectoryDataset& dataset) {
    std::string text;
    for (std::size_t i = 0; i < dataset.trajectories.size(); ++i) {
        Json line{{"traj", matrix_to_json(dataset.trajectories[i])}};
        if (i < dataset.observations.size()) line["obs"] = matrix_to_json(dataset.observations[i]);
        text += line.dump();
        text += '\n';
    }
    write_text_file(path, text);
    write_json_file(metadata_path(path), Json{{"seed", dataset.seed}, {"config", dataset.config}, {"format_version", 1}});
}

TrajectoryDataset load_dataset(const std::filesystem::path& path) {
    TrajectoryDataset ds;
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open dataset " + path.string());
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            const Json j = Json::parse(line);
            ds.trajectories.push_back(matrix_from_json(j.at("traj")));
            if (j.contains("obs")) ds.observations.push_back(matrix_from_json(j.at("obs")));
        } catch (const Json::exception& e) {
            throw FormatError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    if (ds.trajectories.empty()) throw FormatError("dataset " + path.string() + " is empty");
    const auto meta_path = metadata_path(path);
    if (std::filesystem::exists(meta_path)) {
        const Json meta = read_json_file(meta_path);
        if (meta.value("format_version", 0) != 1) throw FormatError("unsupported dataset format_version");
        ds.seed = meta.value("seed", std::uint64_t{0});
        if (meta.contains("config")) ds.config = meta.at("config").get<DatasetConfig>();
    }
    return ds;
}

void save_norm_stats(const std::filesystem::path& path, const NormStats& stats) {
    write_json_file(path, Json{{"min", stats.min}, {"max", stats.max}});
}

NormStats load_norm_stats(const std::filesystem::path& path) {
    const Json j = read_json_file(path);
    NormStats s;
    try {
        s.min = j.at("min").get<std::vector<double>>();
        s.max = j.at("max").get<std::vector<double>>();
    } catch (const Json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
    if (s.min.size() != s.max.size()) throw FormatError("norm stats min/max length mismatch");
    for (std::size_t d = 0; d < s.min.size(); ++d) {
        if (!(s.min[d] < s.max[d])) throw InvalidInputError("degenerate dimension in norm stats");
    }
    return s;
}

}  // namespace oatok::data
