// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numbers>

#include "oatok/data.hpp"
#include "oatok/env.hpp"

using namespace oatok;
using namespace oatok::data;

namespace {

TrajectoryDataset one_trajectory(Matrix m) {
    TrajectoryDataset ds;
    ds.trajectories.push_back(std::move(m));
    return ds;
}

std::filesystem::path temp_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("oatok_test_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

}  // namespace

TEST_CASE("generation is deterministic and shaped") {
    DatasetConfig cfg;
    cfg.n_trajectories = 10;
    cfg.T = 64;
    cfg.D_a = 2;
    const auto a = generate_synthetic_dataset(cfg, 7);
    const auto b = generate_synthetic_dataset(cfg, 7);
    REQUIRE(a.size() == 10);
    for (std::size_t i = 0; i < 10; ++i) {
        CHECK(a.trajectories[i].rows() == 64);
        CHECK(a.trajectories[i].cols() == 2);
        CHECK(a.trajectories[i] == b.trajectories[i]);
    }
    CHECK(a.observations.empty());
    const auto c = generate_synthetic_dataset(cfg, 8);
    CHECK_FALSE(c.trajectories[0] == a.trajectories[0]);
}

TEST_CASE("smooth-fourier per-step deltas obey the derivative bound") {
    DatasetConfig cfg;
    cfg.n_trajectories = 50;
    cfg.T = 64;
    cfg.D_a = 3;
    const auto ds = generate_synthetic_dataset(cfg, 3);
    const auto spec = sample_fourier_components(cfg, 3);
    REQUIRE(spec.size() == 50);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto& x = ds.trajectories[i];
        for (std::size_t d = 0; d < cfg.D_a; ++d) {
            double amp = 0.0;
            for (const auto& comp : spec[i][d]) {
                amp += std::abs(comp.amplitude);
                CHECK(comp.frequency <= kMaxFrequency);
            }
            CHECK(spec[i][d].size() <= kMaxComponents);
            const double bound = 2.0 * std::numbers::pi * kMaxFrequency * amp / cfg.T;
            for (std::size_t t = 0; t + 1 < cfg.T; ++t) CHECK(std::abs(x(t + 1, d) - x(t, d)) <= bound + 1e-12);
            // The trajectory is exactly the sum of its components.
            for (std::size_t t = 0; t < cfg.T; t += 13) {
                double v = 0.0;
                for (const auto& comp : spec[i][d]) {
                    v += comp.amplitude *
                         std::sin(2.0 * std::numbers::pi * comp.frequency * double(t) / cfg.T + comp.phase);
                }
                CHECK(x(t, d) == doctest::Approx(v).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("point-mass family carries observations") {
    DatasetConfig cfg;
    cfg.family = Family::PointMassExpert;
    cfg.D_a = 3;
    cfg.n_trajectories = 3;
    cfg.T = 80;
    const auto ds = generate_synthetic_dataset(cfg, 1);
    REQUIRE(ds.observations.size() == 3);
    CHECK(ds.observations[0].rows() == 80);
    CHECK(ds.observations[0].cols() == env::kObservationDims);
    CHECK(ds.trajectories[0].cols() == 3);
    cfg.D_a = 2;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("config validation") {
    DatasetConfig cfg;
    cfg.n_trajectories = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = {};
    cfg.noise_std = -1.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    CHECK_THROWS_AS(family_from_string("spiral"), ConfigError);
    CHECK(family_from_string(to_string(Family::PointMassExpert)) == Family::PointMassExpert);
}

TEST_CASE("normalizer extrema and mapping") {
    const auto ds = one_trajectory(Matrix(2, 2, {0, 2, 1, 4}));
    const auto s = fit_normalizer(ds);
    CHECK(s.min == std::vector<double>{0, 2});
    CHECK(s.max == std::vector<double>{1, 4});
    const auto n = normalize(ds.trajectories[0], s);
    CHECK(n == Matrix(2, 2, {-1, -1, 1, 1}));
    const auto clipped = normalize(Matrix(1, 2, {6, 2}), s);
    CHECK(clipped(0, 0) == 1.0);
    const auto unit = fit_normalizer(one_trajectory(Matrix(2, 1, {-1, 1})));
    CHECK(unit.min == std::vector<double>{-1});
    CHECK(unit.max == std::vector<double>{1});
    CHECK_THROWS_AS(fit_normalizer(one_trajectory(Matrix(3, 1, {2, 2, 2}))), InvalidInputError);
    CHECK_THROWS_AS(fit_normalizer(TrajectoryDataset{}), InvalidInputError);
    CHECK_THROWS_AS(normalize(Matrix(1, 3), s), ShapeError);
}

TEST_CASE("denormalize inverts normalize in range") {
    DatasetConfig cfg;
    cfg.n_trajectories = 5;
    const auto ds = generate_synthetic_dataset(cfg, 2);
    const auto s = fit_normalizer(ds);
    for (const auto& traj : ds.trajectories) {
        const auto back = denormalize(normalize(traj, s), s);
        for (std::size_t i = 0; i < traj.size(); ++i) CHECK(std::abs(back.data()[i] - traj.data()[i]) <= 1e-12);
    }
}

TEST_CASE("chunk windows") {
    Matrix traj(64, 2);
    for (std::size_t t = 0; t < 64; ++t) traj(t, 0) = double(t);
    const auto chunks = chunk_stream(traj, 32, 16);
    REQUIRE(chunks.size() == 3);
    CHECK(chunks[2](0, 0) == 32.0);
    Matrix exact(32, 2, 1.5);
    const auto one = chunk_stream(exact, 32, 5);
    REQUIRE(one.size() == 1);
    CHECK(one[0].values() == exact);
    CHECK_THROWS_AS(chunk_stream(Matrix(31, 2), 32, 1), InvalidInputError);
    CHECK_THROWS_AS(chunk_stream(traj, 32, 0), ConfigError);
}

TEST_CASE("dataset and normalizer files round trip") {
    const auto dir = temp_dir("data");
    DatasetConfig cfg;
    cfg.family = Family::PointMassExpert;
    cfg.D_a = 3;
    cfg.n_trajectories = 2;
    cfg.T = 40;
    const auto ds = generate_synthetic_dataset(cfg, 4);
    save_dataset(dir / "d.jsonl", ds);
    CHECK(std::filesystem::exists(metadata_path(dir / "d.jsonl")));
    const auto back = load_dataset(dir / "d.jsonl");
    REQUIRE(back.size() == 2);
    CHECK(back.trajectories[1] == ds.trajectories[1]);
    CHECK(back.observations[0] == ds.observations[0]);
    CHECK(back.seed == 4);
    const auto s = fit_normalizer(ds);
    save_norm_stats(dir / "n.json", s);
    const auto s2 = load_norm_stats(dir / "n.json");
    CHECK(s2.min == s.min);
    CHECK(s2.max == s.max);
    CHECK_THROWS_AS(load_dataset(dir / "missing.jsonl"), FormatError);
    std::filesystem::remove_all(dir);
}

TEST_CASE("scripted expert solves every sampled episode") {
    env::EnvConfig cfg;
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        const auto ep = env::run_expert(cfg, seed, cfg.episode_cap);
        CHECK(ep.success);
        CHECK(ep.actions.size() == cfg.episode_cap);
        CHECK(ep.observations.size() == cfg.episode_cap);
    }
}

TEST_CASE("environment mechanics") {
    env::ToyEnv e;
    e.reset(5);
    const auto s0 = e.state();
    env::ToyEnv f;
    f.reset(5);
    CHECK(f.observation() == e.observation());
    CHECK(e.observation().size() == env::kObservationDims);
    // Non-finite actions hold position and keep the gripper.
    e.step(std::vector<double>{NAN, 0.0, 1.0});
    CHECK(e.state().gripper_closed == s0.gripper_closed);
    CHECK(e.state().t == 1);
    CHECK_THROWS_AS(e.step(std::vector<double>{0.0, 0.0}), ShapeError);
    CHECK_FALSE(e.success());
}
