// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "oatok/nn/tensor.hpp"

namespace oatok::nn {

struct AdamConfig {
    double lr = 5e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;  ///< decoupled (AdamW)
    double grad_clip = 0.0;     ///< global-norm clip; 0 disables
    double final_lr_fraction = 1.0;  ///< cosine decay to lr * fraction; 1 keeps lr constant
};

class Adam {
public:
    Adam(const ParameterStore& store, AdamConfig config);

    /// One update from the gradients currently in the store.
    void step(ParameterStore& store);
    std::size_t steps() const noexcept { return t_; }
    void set_lr(double lr) noexcept { config_.lr = lr; }
    const AdamConfig& config() const noexcept { return config_; }

private:
    AdamConfig config_;
    std::size_t t_ = 0;
    std::vector<std::vector<float>> m_;
    std::vector<std::vector<float>> v_;
};

/// Learning rate for `step` of `total` under the cosine schedule.
double scheduled_lr(const AdamConfig& config, std::size_t step, std::size_t total);

}  // namespace oatok::nn
