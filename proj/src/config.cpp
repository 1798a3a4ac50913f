// SPDX-License-Identifier: Apache-2.0
#include "oatok/config.hpp"

#include <set>

#include "oatok/json_io.hpp"

namespace oatok {

nlohmann::json to_json(const nn::AdamConfig& c) {
    return {{"lr", c.lr},   {"beta1", c.beta1},   {"beta2", c.beta2},
            {"eps", c.eps}, {"weight_decay", c.weight_decay}, {"grad_clip", c.grad_clip},
            {"final_lr_fraction", c.final_lr_fraction}};
}

nn::AdamConfig adam_from_json(const nlohmann::json& j, nn::AdamConfig c) {
    c.lr = j.value("lr", c.lr);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.eps = j.value("eps", c.eps);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.grad_clip = j.value("grad_clip", c.grad_clip);
    c.final_lr_fraction = j.value("final_lr_fraction", c.final_lr_fraction);
    return c;
}

eval::PipelineConfig RunConfig::pipeline() const {
    eval::PipelineConfig p;
    p.tokenizer = oat;
    p.tokenizer.H_a = H_a;
    p.tokenizer.D_a = data.D_a;
    p.tokenizer_train = oat_train;
    p.policy = policy;
    p.policy_train = policy_train;
    p.chunk_stride = chunk_stride;
    p.example_stride = example_stride;
    p.recon_stride = recon_stride;
    p.rollout = rollout;
    return p;
}

nlohmann::json to_json(const RunConfig& c) {
    Json data_json;
    data::to_json(data_json, c.data);
    Json env_json;
    env::to_json(env_json, c.rollout.env);
    return {
        {"data", data_json},
        {"heldout_trajectories", c.heldout_trajectories},
        {"H_a", c.H_a},
        {"oat", oat::config_to_json(c.oat)},
        {"oat_train",
         {{"steps", c.oat_train.steps}, {"batch_size", c.oat_train.batch_size}, {"adam", to_json(c.oat_train.adam)}}},
        {"bin", {{"N", c.bin.N}}},
        {"fast", {{"gamma", c.fast.gamma}, {"vocab_size", c.fast.vocab_size}}},
        {"policy",
         {{"H_o", c.policy.H_o},
          {"layers", c.policy.layers},
          {"model_dim", c.policy.model_dim},
          {"head_dim", c.policy.head_dim},
          {"greedy", c.policy.sampling.greedy},
          {"temperature", c.policy.sampling.temperature},
          {"execute_steps", c.policy.execute_steps}}},
        {"policy_train",
         {{"steps", c.policy_train.steps},
          {"batch_size", c.policy_train.batch_size},
          {"adam", to_json(c.policy_train.adam)}}},
        {"rollout", {{"seeds", c.rollout.seeds}, {"episodes", c.rollout.episodes}, {"env", env_json}}},
        {"chunk_stride", c.chunk_stride},
        {"example_stride", c.example_stride},
        {"recon_stride", c.recon_stride},
        {"audit_samples", c.audit_samples},
    };
}

RunConfig run_config_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    static const std::set<std::string> known{"data",        "heldout_trajectories", "H_a",          "oat",
                                             "oat_train",   "bin",                  "fast",         "policy",
                                             "policy_train", "rollout",             "chunk_stride", "example_stride",
                                             "recon_stride", "audit_samples"};
    for (const auto& [key, value] : j.items()) {
        if (!known.contains(key)) throw ConfigError("unknown config key '" + key + "'");
    }
    RunConfig c;
    try {
        if (j.contains("data")) data::from_json(j.at("data"), c.data);
        c.heldout_trajectories = j.value("heldout_trajectories", c.heldout_trajectories);
        c.H_a = j.value("H_a", c.H_a);
        if (j.contains("oat")) c.oat = oat::config_from_json(j.at("oat"));
        if (j.contains("oat_train")) {
            const auto& t = j.at("oat_train");
            c.oat_train.steps = t.value("steps", c.oat_train.steps);
            c.oat_train.batch_size = t.value("batch_size", c.oat_train.batch_size);
            if (t.contains("adam")) c.oat_train.adam = adam_from_json(t.at("adam"), c.oat_train.adam);
        }
        if (j.contains("bin")) c.bin.N = j.at("bin").value("N", c.bin.N);
        if (j.contains("fast")) {
            c.fast.gamma = j.at("fast").value("gamma", c.fast.gamma);
            c.fast.vocab_size = j.at("fast").value("vocab_size", c.fast.vocab_size);
        }
        if (j.contains("policy")) {
            const auto& p = j.at("policy");
            c.policy.H_o = p.value("H_o", c.policy.H_o);
            c.policy.layers = p.value("layers", c.policy.layers);
            c.policy.model_dim = p.value("model_dim", c.policy.model_dim);
            c.policy.head_dim = p.value("head_dim", c.policy.head_dim);
            c.policy.sampling.greedy = p.value("greedy", c.policy.sampling.greedy);
            c.policy.sampling.temperature = p.value("temperature", c.policy.sampling.temperature);
            c.policy.execute_steps = p.value("execute_steps", c.policy.execute_steps);
        }
        if (j.contains("policy_train")) {
            const auto& t = j.at("policy_train");
            c.policy_train.steps = t.value("steps", c.policy_train.steps);
            c.policy_train.batch_size = t.value("batch_size", c.policy_train.batch_size);
            if (t.contains("adam")) c.policy_train.adam = adam_from_json(t.at("adam"), c.policy_train.adam);
        }
        if (j.contains("rollout")) {
            const auto& r = j.at("rollout");
            if (r.contains("seeds")) c.rollout.seeds = r.at("seeds").get<std::vector<std::uint64_t>>();
            c.rollout.episodes = r.value("episodes", c.rollout.episodes);
            if (r.contains("env")) env::from_json(r.at("env"), c.rollout.env);
        }
        // Rollouts run in the environment the demonstrations came from unless
        // told otherwise.
        if (!j.contains("rollout") || !j.at("rollout").contains("env")) c.rollout.env = c.data.env;
        c.chunk_stride = j.value("chunk_stride", c.chunk_stride);
        c.example_stride = j.value("example_stride", c.example_stride);
        c.recon_stride = j.value("recon_stride", c.recon_stride);
        c.audit_samples = j.value("audit_samples", c.audit_samples);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad config: ") + e.what());
    }
    c.data.validate();
    c.oat.validate();
    c.policy.validate();
    if (c.H_a == 0) throw ConfigError("H_a must be positive");
    if (c.chunk_stride == 0 || c.example_stride == 0 || c.recon_stride == 0) {
        throw ConfigError("strides must be positive");
    }
    return c;
}

}  // namespace oatok
