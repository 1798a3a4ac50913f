// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "oatok/common.hpp"
#include "oatok/data.hpp"
#include "oatok/env.hpp"
#include "oatok/oat.hpp"
#include "oatok/policy.hpp"
#include "oatok/tokenizer.hpp"

namespace oatok::eval {

struct MeanStderr {
    double mean = 0.0;
    double se = 0.0;  ///< sample standard deviation / sqrt(n); 0 for n < 2
};

MeanStderr mean_stderr(std::span<const double> values);

// Held-out reconstruction. OAT rows are indexed by K - 1 (length H_l); Bin and
// FAST have one full-length row.
struct ReconReport {
    std::string method;
    std::vector<std::size_t> K;
    std::vector<double> mean;
    std::vector<double> se;
    std::vector<std::vector<double>> per_chunk;  ///< [row][chunk]; not serialized
    double mean_tokens = 0.0;
    double decode_failure_rate = 0.0;  ///< FAST only; failures are excluded from the means
    std::size_t n_chunks = 0;

    nlohmann::json to_json() const;
};

/// Throws StateError for an untrained OAT tokenizer.
ReconReport recon_curve(const AnyTokenizer& tokenizer, std::span<const ActionChunk> heldout);

struct AuditReport {
    std::string method;
    std::size_t samples = 0;
    std::size_t failures = 0;
    double rate = 0.0;

    nlohmann::json to_json() const;
};

/// Empirical distribution of encoded lengths over `chunks`.
std::vector<std::size_t> encoded_lengths(const AnyTokenizer& tokenizer, std::span<const ActionChunk> chunks);

/// Monte-Carlo DecodeError rate of uniform-random id sequences whose lengths
/// are drawn from `lengths`. FAST without merges throws NotApplicableError.
/// OAT and Bin sequences never fail; OAT lengths beyond H_l are clamped.
AuditReport decode_failure_audit(const AnyTokenizer& tokenizer, std::size_t n_samples,
                                 std::span<const std::size_t> lengths, std::uint64_t seed);

/// FAST audit restricted to base-symbol ids.
AuditReport base_symbol_audit(const fast::FastTokenizer& tokenizer, std::size_t n_samples, std::size_t length,
                              std::uint64_t seed);

struct RolloutConfig {
    std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
    std::size_t episodes = 50;
    std::size_t K = 0;              ///< OAT prefix length; 0 means full
    std::size_t execute_steps = 0;  ///< 0 uses the policy default
    env::EnvConfig env;
};

struct RolloutReport {
    std::string method;
    std::size_t K = 0;
    std::size_t execute_steps = 0;
    std::vector<double> per_seed;  ///< success rate per seed
    double success_mean = 0.0;
    double success_se = 0.0;  ///< across-seed stderr of per-seed rates
    std::size_t episodes = 0;  ///< total rollouts
    std::size_t successes = 0;
    std::size_t inferences = 0;
    std::size_t fallbacks = 0;
    double steps_per_inference = 0.0;

    nlohmann::json to_json() const;
};

/// Episode seed of episode e under evaluation seed s.
std::uint64_t episode_seed(std::uint64_t seed, std::size_t episode);

/// Receding-horizon rollouts: infer a chunk from the last H_o observations,
/// execute `execute_steps` actions, repeat until success or the episode cap.
/// Greedy policies ignore the seed beyond the episode layout; sampling
/// policies draw from a stream derived from it.
RolloutReport closed_loop_eval(const policy::Policy& policy, const data::NormStats& action_stats,
                               const RolloutConfig& config);

/// The scripted expert under the same accounting (success sanity anchor).
RolloutReport expert_eval(const RolloutConfig& config);

// Full tokenizer + policy pipeline on a point-mass dataset; shared by the
// sweeps, the ablation and the acceptance suite.
struct PipelineConfig {
    oat::OatConfig tokenizer;
    oat::TrainConfig tokenizer_train;
    policy::PolicyConfig policy;
    policy::TrainConfig policy_train;
    std::size_t chunk_stride = 1;    ///< tokenizer training windows
    std::size_t example_stride = 1;  ///< policy training windows
    std::size_t recon_stride = 4;    ///< held-out windows
    RolloutConfig rollout;
    std::vector<std::size_t> rollout_K{};  ///< empty means {H_l}
};

struct PipelineResult {
    std::optional<oat::OatTokenizer> tokenizer;
    std::optional<policy::Policy> policy;
    ReconReport recon;
    std::vector<RolloutReport> rollouts;  ///< one per rollout_K
};

/// Trains on `train`, reconstructs windows of `heldout` (normalized with the
/// training statistics; skipped when empty) and runs rollouts (skipped when
/// rollout.episodes == 0).
PipelineResult run_pipeline(const data::TrajectoryDataset& train, const data::TrajectoryDataset& heldout,
                            const PipelineConfig& config, std::uint64_t seed);

struct AblationReport {
    ReconReport ordered;
    ReconReport unordered;
    std::vector<RolloutReport> ordered_rollouts;
    std::vector<RolloutReport> unordered_rollouts;

    nlohmann::json to_json() const;
};

/// Two pipelines differing only in nested dropout.
AblationReport ablation_no_ordering(const data::TrajectoryDataset& train, const data::TrajectoryDataset& heldout,
                                    const PipelineConfig& config, std::uint64_t seed);

struct CodebookRow {
    fsq::FsqLevels levels;
    std::size_t vocab_size = 0;
    double recon_mse = 0.0;  ///< full-K held-out MSE
    double recon_se = 0.0;
    std::optional<RolloutReport> rollout;
};

/// Level sets must come from the five codebook configurations.
std::vector<CodebookRow> codebook_sweep(std::span<const fsq::FsqLevels> levels, const data::TrajectoryDataset& train,
                                        const data::TrajectoryDataset& heldout, const PipelineConfig& config,
                                        std::uint64_t seed);

enum class Regime { HalfHorizon, Fixed8 };
std::string to_string(Regime r);

struct HorizonCell {
    std::size_t H_a = 0;
    std::size_t H_l = 0;
    Regime regime = Regime::HalfHorizon;
    std::size_t execute_steps = 0;
    double success_mean = 0.0;
    double success_se = 0.0;
};

/// Cells ordered by (H_a, H_l, regime); one tokenizer + policy per (H_a, H_l)
/// evaluated under both regimes. Trajectories must be at least max(H_a)
/// long. Throws ConfigError if some H_l exceeds its H_a.
std::vector<HorizonCell> horizon_sweep(std::span<const std::size_t> H_a, std::span<const std::size_t> H_l,
                                       const data::TrajectoryDataset& train, const PipelineConfig& config,
                                       std::uint64_t seed);

struct StepCountRow {
    std::string method;
    double steps = 0.0;  ///< autoregressive steps per inference (mean for FAST)
    double wall_ms = 0.0;  ///< informational; never part of a deterministic report
};

/// OAT[K] for each K, Bin and FAST, measured on `chunks`.
std::vector<StepCountRow> step_count_report(std::span<const AnyTokenizer> tokenizers,
                                            std::span<const std::size_t> oat_K, std::span<const ActionChunk> chunks,
                                            bool time_it);

// Plain-text renderings.
struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::string text() const;  ///< aligned columns
    std::string csv() const;
};

Table recon_table(std::span<const ReconReport> reports);
Table rollout_table(std::span<const RolloutReport> reports);
Table codebook_table(std::span<const CodebookRow> rows);
Table horizon_table(std::span<const HorizonCell> cells);
Table step_count_table(std::span<const StepCountRow> rows, bool with_time);

nlohmann::json to_json(const CodebookRow& row);
nlohmann::json to_json(const HorizonCell& cell);
nlohmann::json to_json(const StepCountRow& row, bool with_time);

/// Fixed-precision decimal used in text tables.
std::string fmt(double v, int precision = 5);

}  // namespace oatok::eval
