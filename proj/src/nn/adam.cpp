// SPDX-License-Identifier: Apache-2.0
#include "oatok/nn/adam.hpp"

#include <cmath>

#include "oatok/common.hpp"

namespace oatok::nn {

Adam::Adam(const ParameterStore& store, AdamConfig config) : config_(config) {
    if (!(config.lr > 0.0) || config.beta1 < 0.0 || config.beta1 >= 1.0 || config.beta2 < 0.0 || config.beta2 >= 1.0) {
        throw ConfigError("invalid Adam hyperparameters");
    }
    if (!(config.final_lr_fraction > 0.0 && config.final_lr_fraction <= 1.0)) {
        throw ConfigError("final_lr_fraction must lie in (0, 1]");
    }
    for (const auto& p : store.params()) {
        m_.emplace_back(p.value.size(), 0.0f);
        v_.emplace_back(p.value.size(), 0.0f);
    }
}

void Adam::step(ParameterStore& store) {
    if (store.size() != m_.size()) throw StateError("optimizer bound to a different parameter store");
    ++t_;
    double clip = 1.0;
    if (config_.grad_clip > 0.0) {
        const double norm = store.grad_norm();
        if (norm > config_.grad_clip) clip = config_.grad_clip / norm;
    }
    const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
    const float b1 = static_cast<float>(config_.beta1);
    const float b2 = static_cast<float>(config_.beta2);
    const float step = static_cast<float>(config_.lr / bc1);
    const float inv_bc2 = static_cast<float>(1.0 / bc2);
    const float eps = static_cast<float>(config_.eps);
    const float decay = static_cast<float>(config_.lr * config_.weight_decay);
    const float c = static_cast<float>(clip);
    auto& params = store.params();
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& p = params[i];
        if (!p.trainable) continue;
        auto& m = m_[i];
        auto& v = v_[i];
        for (std::size_t j = 0; j < p.value.data.size(); ++j) {
            const float g = c * p.grad.data[j];
            m[j] = b1 * m[j] + (1.0f - b1) * g;
            v[j] = b2 * v[j] + (1.0f - b2) * g * g;
            float& w = p.value.data[j];
            if (decay != 0.0f) w -= decay * w;
            w -= step * m[j] / (std::sqrt(v[j] * inv_bc2) + eps);
        }
    }
}

double scheduled_lr(const AdamConfig& config, std::size_t step, std::size_t total) {
    if (config.final_lr_fraction == 1.0 || total <= 1) return config.lr;
    const double progress = static_cast<double>(step) / static_cast<double>(total - 1);
    const double f = config.final_lr_fraction;
    return config.lr * (f + (1.0 - f) * 0.5 * (1.0 + std::cos(M_PI * progress)));
}

}  // namespace oatok::nn
