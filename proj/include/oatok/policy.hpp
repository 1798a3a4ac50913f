// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "oatok/common.hpp"
#include "oatok/data.hpp"
#include "oatok/nn/adam.hpp"
#include "oatok/nn/layers.hpp"
#include "oatok/random.hpp"
#include "oatok/tokenizer.hpp"

namespace oatok::policy {

struct Sampling {
    bool greedy = true;
    double temperature = 1.0;
};

struct PolicyConfig {
    std::size_t obs_dim = 9;
    std::size_t H_o = 2;  ///< observation history length
    std::size_t layers = 4;
    std::size_t model_dim = 256;
    std::size_t head_dim = 64;
    Sampling sampling;
    std::size_t execute_steps = 0;  ///< 0 means H_a / 2

    void validate() const;
};

/// Observation history, oldest first: H_o rows of obs_dim.
using ObservationHistory = Matrix;

struct Example {
    ObservationHistory observations;
    TokenSequence tokens;
};

struct TrainConfig {
    std::size_t steps = 1000;
    std::size_t batch_size = 64;
    nn::AdamConfig adam;
};

struct InferResult {
    ActionChunk chunk;
    TokenSequence tokens;
    bool fallback = false;  ///< detokenization failed and a no-op chunk was returned
};

// Causal next-token model: [obs_1 .. obs_Ho, BOS, T_1 .. T_{n-1}] predicts
// T_1 .. T_n. FAST sequences are variable length and end with an extra EOS id
// (= tokenizer vocabulary size).
class Policy {
public:
    Policy(AnyTokenizer tokenizer, PolicyConfig config, std::uint64_t seed);

    const AnyTokenizer& tokenizer() const noexcept { return tokenizer_; }
    const PolicyConfig& config() const noexcept { return config_; }
    std::uint64_t seed() const noexcept { return seed_; }
    nn::ParameterStore& params() noexcept { return store_; }
    const nn::ParameterStore& params() const noexcept { return store_; }
    std::size_t execute_steps() const noexcept;

    /// Output vocabulary (tokenizer vocabulary, plus EOS for FAST).
    std::size_t vocab_size() const noexcept { return vocab_; }
    /// Longest target sequence including EOS.
    std::size_t max_steps() const noexcept { return max_steps_; }
    std::optional<TokenId> eos() const noexcept;

    /// Next-token logits after `prefix`. Requires prefix.size() < max_steps().
    std::vector<float> logits(std::span<const TokenId> prefix, const ObservationHistory& obs) const;
    /// Logits at every position of a teacher-forced input; row i predicts
    /// token i. Used by the causality probe.
    nn::Tensor all_logits(std::span<const TokenId> prefix, const ObservationHistory& obs) const;

    /// Mean token cross entropy of a batch under the current parameters.
    double loss(std::span<const Example> batch) const;
    std::vector<double> train(std::span<const Example> examples, const TrainConfig& train, std::uint64_t seed,
                              const std::function<bool(std::size_t, double)>& on_step = {});

    /// Samples K tokens (K must be 0 for non-prefix tokenizers, meaning the
    /// full sequence) and detokenizes. `last_action` (normalized) is repeated
    /// when FAST output cannot be decoded. `rng` is required for categorical
    /// sampling.
    InferResult infer(const ObservationHistory& obs, std::size_t K, std::span<const double> last_action,
                      Rng* rng = nullptr) const;
    /// Token generation only.
    TokenSequence generate(const ObservationHistory& obs, std::size_t n_tokens, Rng* rng = nullptr) const;

    nlohmann::json header() const;
    void save(const std::filesystem::path& path) const;
    static Policy load(const std::filesystem::path& path);

    /// Normalization carried in the checkpoint so rollouts can map actions
    /// back to environment units.
    std::optional<data::NormStats> action_stats;

private:
    nn::Var forward(nn::Graph& g, std::span<const Example> batch, std::size_t seq_tokens) const;
    void check_obs(const ObservationHistory& obs) const;

    AnyTokenizer tokenizer_;
    PolicyConfig config_;
    std::uint64_t seed_;
    std::size_t vocab_ = 0;
    std::size_t max_steps_ = 0;
    mutable nn::ParameterStore store_;

    nn::Linear obs_in_;
    nn::ParamId token_table_ = 0;
    nn::ParamId bos_ = 0;
    std::vector<nn::EncoderBlock> blocks_;
    nn::LayerNorm norm_;
    nn::Linear head_;
    nn::Tensor pos_;
};

/// Autoregressive steps for one inference: OAT K, Bin H_a * D_a, FAST the
/// length of `sampled` (excluding EOS).
std::size_t autoregressive_step_count(const AnyTokenizer& tokenizer, std::size_t K,
                                      std::span<const TokenId> sampled = {});

/// Observation history ending at step t (earlier steps clamp to step 0).
ObservationHistory history_at(const Matrix& observations, std::size_t t, std::size_t H_o);

/// (history, tokens of the normalized action chunk starting at t) for every t
/// in 0, stride, ... with t + H_a <= T.
std::vector<Example> build_examples(const data::TrajectoryDataset& dataset, const data::NormStats& stats,
                                    const AnyTokenizer& tokenizer, std::size_t H_o, std::size_t stride);

}  // namespace oatok::policy
