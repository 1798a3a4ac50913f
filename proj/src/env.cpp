// SPDX-License-Identifier: Apache-2.0
#include "oatok/env.hpp"

#include <algorithm>
#include <cmath>

#include "oatok/common.hpp"
#include "oatok/random.hpp"

namespace oatok::env {
namespace {

double dist(const std::array<double, 2>& a, const std::array<double, 2>& b) {
    return std::hypot(a[0] - b[0], a[1] - b[1]);
}

double norm(const std::array<double, 2>& v) { return std::hypot(v[0], v[1]); }

}  // namespace

void ToyEnv::reset(std::uint64_t episode_seed) {
    Rng rng(mix_seed(episode_seed, 0xE17));
    state_ = EnvState{};
    state_.position = {rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9)};
    state_.object = {rng.uniform(0.15, 0.85), rng.uniform(0.15, 0.85)};
    do {
        state_.goal = {rng.uniform(0.15, 0.85), rng.uniform(0.15, 0.85)};
    } while (dist(state_.goal, state_.object) < config_.min_object_goal_distance);
}

void ToyEnv::step(std::span<const double> action) {
    if (action.size() != kActionDims) {
        throw ShapeError("env action must have " + std::to_string(kActionDims) + " entries");
    }
    std::array<double, 2> target = state_.position;
    bool close = state_.gripper_closed;
    if (std::isfinite(action[0]) && std::isfinite(action[1]) && std::isfinite(action[2])) {
        target = {std::clamp(action[0], 0.0, 1.0), std::clamp(action[1], 0.0, 1.0)};
        close = action[2] > 0.0;
    }

    if (close && !state_.gripper_closed) {
        state_.holding = dist(state_.position, state_.object) < config_.grasp_radius;
    } else if (!close) {
        state_.holding = false;
    }
    state_.gripper_closed = close;

    for (int i = 0; i < 2; ++i) {
        const double acc = config_.kp * (target[i] - state_.position[i]) - config_.kd * state_.velocity[i];
        state_.velocity[i] += acc * config_.dt;
    }
    const double speed = norm(state_.velocity);
    if (speed > config_.max_speed) {
        const double s = config_.max_speed / speed;
        state_.velocity[0] *= s;
        state_.velocity[1] *= s;
    }
    for (int i = 0; i < 2; ++i) {
        state_.position[i] = std::clamp(state_.position[i] + state_.velocity[i] * config_.dt, 0.0, 1.0);
    }
    if (state_.holding) state_.object = state_.position;
    ++state_.t;
}

std::vector<double> ToyEnv::observation() const {
    return {state_.position[0], state_.position[1], state_.velocity[0], state_.velocity[1],
            state_.object[0],   state_.object[1],   state_.goal[0],     state_.goal[1],
            state_.gripper_closed ? 1.0 : -1.0};
}

bool ToyEnv::success() const {
    return !state_.gripper_closed && !state_.holding && dist(state_.object, state_.goal) < config_.goal_radius;
}

std::array<double, kActionDims> expert_action(const EnvState& s, const EnvConfig& c) {
    const double speed = norm(s.velocity);
    if (!s.holding) {
        // A closed gripper holding nothing is reopened before the next attempt.
        const bool at_object = dist(s.position, s.object) < c.expert_tolerance && speed < c.settle_speed;
        const bool close = at_object && !s.gripper_closed;
        return {s.object[0], s.object[1], close ? 1.0 : -1.0};
    }
    const bool at_goal = dist(s.position, s.goal) < c.expert_tolerance && speed < c.settle_speed;
    return {s.goal[0], s.goal[1], at_goal ? -1.0 : 1.0};
}

ExpertEpisode run_expert(const EnvConfig& config, std::uint64_t episode_seed, std::size_t length) {
    ToyEnv env(config);
    env.reset(episode_seed);
    ExpertEpisode ep;
    ep.actions.reserve(length);
    ep.observations.reserve(length);
    std::array<double, kActionDims> last{};
    for (std::size_t t = 0; t < length; ++t) {
        ep.observations.push_back(env.observation());
        if (!ep.success) {
            last = expert_action(env.state(), config);
            env.step(last);
            if (env.success()) {
                ep.success = true;
                ep.steps_to_success = t + 1;
            }
        } else {
            env.step(last);
        }
        ep.actions.push_back(last);
    }
    return ep;
}

}  // namespace oatok::env
