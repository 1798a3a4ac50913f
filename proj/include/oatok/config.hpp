// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <json.hpp>

#include "oatok/bin_tokenizer.hpp"
#include "oatok/data.hpp"
#include "oatok/eval.hpp"
#include "oatok/fast_tokenizer.hpp"
#include "oatok/oat.hpp"
#include "oatok/policy.hpp"

namespace oatok {

// Every numeric knob of a pipeline run. Missing JSON keys keep the defaults
// below, which are the full-scale settings; configs/desk.json holds the
// reduced CPU settings used by the tests.
struct RunConfig {
    data::DatasetConfig data;
    std::size_t heldout_trajectories = 40;
    std::size_t H_a = 32;  ///< shared by all tokenizers; D_a comes from the dataset

    oat::OatConfig oat;
    oat::TrainConfig oat_train;
    bin::BinConfig bin;
    fast::FastConfig fast;
    policy::PolicyConfig policy;
    policy::TrainConfig policy_train;
    eval::RolloutConfig rollout;

    std::size_t chunk_stride = 1;
    std::size_t example_stride = 1;
    std::size_t recon_stride = 4;
    std::size_t audit_samples = 10000;

    eval::PipelineConfig pipeline() const;
};

nlohmann::json to_json(const RunConfig& c);
/// Missing keys keep their defaults; unknown top-level keys are rejected.
RunConfig run_config_from_json(const nlohmann::json& j);

nlohmann::json to_json(const nn::AdamConfig& c);
nn::AdamConfig adam_from_json(const nlohmann::json& j, nn::AdamConfig base = {});

}  // namespace oatok
