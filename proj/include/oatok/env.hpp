// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace oatok::env {

// Planar pick-and-place task: a point mass under a PD position controller
// (double integrator with a speed clamp) must reach an object, grasp it,
// carry it to a goal disc and release it there.
//
// Action layout: (target_x, target_y, gripper_command). A positive gripper
// command closes the gripper.
struct EnvConfig {
    double dt = 0.05;
    double kp = 30.0;
    double kd = 11.0;
    double max_speed = 0.6;
    double grasp_radius = 0.035;
    double goal_radius = 0.06;
    /// Expert closes / opens once within this distance and below settle_speed.
    double expert_tolerance = 0.012;
    double settle_speed = 0.06;
    double min_object_goal_distance = 0.3;
    std::size_t episode_cap = 200;
};

inline constexpr std::size_t kActionDims = 3;
inline constexpr std::size_t kObservationDims = 9;

struct EnvState {
    std::array<double, 2> position{};
    std::array<double, 2> velocity{};
    std::array<double, 2> object{};
    std::array<double, 2> goal{};
    bool gripper_closed = false;
    bool holding = false;
    std::size_t t = 0;
};

class ToyEnv {
public:
    explicit ToyEnv(EnvConfig config = {}) : config_(config) {}

    /// Samples object, goal and start position from the episode seed.
    void reset(std::uint64_t episode_seed);
    void reset(const EnvState& state) { state_ = state; }

    /// Advances one control step. Non-finite actions are treated as "hold
    /// position, keep gripper state".
    void step(std::span<const double> action);

    /// (px, py, vx, vy, ox, oy, gx, gy, gripper) with gripper in {-1, +1}.
    std::vector<double> observation() const;

    bool success() const;
    bool done() const { return success() || state_.t >= config_.episode_cap; }

    const EnvState& state() const noexcept { return state_; }
    const EnvConfig& config() const noexcept { return config_; }

private:
    EnvConfig config_;
    EnvState state_;
};

/// Scripted reach -> grasp -> transport -> release controller.
std::array<double, kActionDims> expert_action(const EnvState& state, const EnvConfig& config);

struct ExpertEpisode {
    std::vector<std::array<double, kActionDims>> actions;
    std::vector<std::vector<double>> observations;  ///< observation before each action
    bool success = false;
    std::size_t steps_to_success = 0;
};

/// Runs the expert for exactly `length` steps. After success the last action
/// is repeated so every trace has the same length.
ExpertEpisode run_expert(const EnvConfig& config, std::uint64_t episode_seed, std::size_t length);

}  // namespace oatok::env
