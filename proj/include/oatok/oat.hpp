// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include <json.hpp>

#include "oatok/common.hpp"
#include "oatok/fsq.hpp"
#include "oatok/nn/adam.hpp"
#include "oatok/nn/graph.hpp"
#include "oatok/nn/layers.hpp"
#include "oatok/random.hpp"

namespace oatok::oat {

/// Prefix-length distribution: uniform over {1..H_l} with optional extra mass
/// on K = H_l. keep_all_prob = 1 disables nested dropout (the unordered
/// variant).
struct NestedDropoutDist {
    double keep_all_prob = 0.0;

    bool ordered() const noexcept { return keep_all_prob < 1.0; }
    /// P(K = k) for k = 1..H_l, index k - 1.
    std::vector<double> probabilities(std::size_t H_l) const;
    void validate() const;
};

std::size_t sample_prefix_length(const NestedDropoutDist& dist, std::size_t H_l, Rng& rng);

struct OatConfig {
    std::size_t H_a = 32;
    std::size_t D_a = 2;
    std::size_t H_l = 8;
    fsq::FsqLevels levels;
    std::size_t enc_layers = 2;
    std::size_t dec_layers = 4;
    std::size_t model_dim = 256;
    std::size_t head_dim = 64;
    NestedDropoutDist dropout;
    bool flow_decoder = false;

    std::size_t D_l() const noexcept { return levels.dims(); }
    std::size_t heads() const noexcept { return model_dim / head_dim; }
    std::size_t vocab_size() const { return fsq::codebook_size(levels); }
    void validate() const;
};

struct TrainConfig {
    std::size_t steps = 1000;
    std::size_t batch_size = 64;
    nn::AdamConfig adam;  ///< lr 5e-5, no weight decay
};

struct TrainResult {
    std::vector<double> losses;           ///< per step (reconstruction + flow when enabled)
    std::vector<double> encoder_grad_norms;  ///< per step, before the update
};

/// Per-step observer; return false to stop early.
using StepCallback = std::function<bool(std::size_t step, double loss)>;

/// (H_a + H_l) x (H_a + H_l) pattern over actions followed by registers:
/// actions see actions only; register i sees all actions and registers j <= i.
nn::AttentionMask build_attention_mask(std::size_t H_a, std::size_t H_l);

/// Replaces rows K..H_l-1 of `embeddings` (H_l x d) with `mask` (1 x d).
nn::Tensor apply_tail_dropout(const nn::Tensor& embeddings, std::size_t K, const nn::Tensor& mask);

// Parameter blob order: action embedding, encoder blocks, latent projection,
// registers, code projection, decoder blocks, MASK, output head, then the
// flow decoder when enabled.
class OatTokenizer {
public:
    OatTokenizer(OatConfig config, std::uint64_t seed);

    const OatConfig& config() const noexcept { return config_; }
    std::uint64_t seed() const noexcept { return seed_; }
    std::size_t vocab_size() const { return config_.vocab_size(); }
    nn::ParameterStore& params() noexcept { return store_; }
    const nn::ParameterStore& params() const noexcept { return store_; }
    bool trained() const noexcept { return trained_; }
    void mark_trained() noexcept { trained_ = true; }

    /// Continuous pre-quantization latents, H_l x D_l.
    Matrix encode(const ActionChunk& chunk) const;
    /// Encoder outputs at every position (H_a + H_l rows) with an optional
    /// override of the register embeddings; used to probe the mask.
    nn::Tensor encoder_states(const ActionChunk& chunk, const nn::Tensor* registers = nullptr) const;

    TokenSequence tokenize(const ActionChunk& chunk) const;
    std::vector<TokenSequence> tokenize_batch(std::span<const ActionChunk> chunks) const;

    /// Decoder memory for a token prefix: projected code embeddings, MASK
    /// beyond the prefix. H_l x model_dim.
    nn::Tensor token_embeddings(std::span<const TokenId> tokens) const;
    /// Decoder memory for explicit codes (first K rows kept, rest MASK).
    nn::Tensor code_embeddings(std::span<const fsq::FsqCode> codes, std::size_t K) const;
    /// Single-pass decode of an H_l x model_dim memory.
    ActionChunk decode(const nn::Tensor& memory) const;
    /// K = tokens.size(); 1 <= K <= H_l.
    ActionChunk detokenize(std::span<const TokenId> tokens) const;
    std::vector<ActionChunk> detokenize_batch(std::span<const TokenSequence> tokens) const;

    TrainResult train(std::span<const ActionChunk> chunks, const TrainConfig& train, std::uint64_t seed,
                      const StepCallback& on_step = {});

    /// Flow-matching loss for one chunk at time t with noise eps (no update).
    double flow_loss(const ActionChunk& chunk, double t, const Matrix& eps) const;
    /// Euler integration from eps (t = 1) to t = 0 in n_steps.
    ActionChunk flow_decode(std::span<const TokenId> tokens, std::size_t n_steps, const Matrix& eps) const;

    nlohmann::json header() const;
    void save(const std::filesystem::path& path) const;
    static OatTokenizer load(const std::filesystem::path& path);
    static OatTokenizer from_checkpoint(const nlohmann::json& header, std::span<const char> blob);

private:
    void check_chunk(const ActionChunk& chunk) const;
    nn::Var encoder_trunk(nn::Graph& g, std::span<const ActionChunk> chunks, const nn::Tensor* registers) const;
    nn::Var encode_graph(nn::Graph& g, std::span<const ActionChunk> chunks) const;
    nn::Tensor tiled(const nn::Tensor& t, std::size_t batch) const;
    nn::Var decode_graph(nn::Graph& g, nn::Var code_emb, std::span<const std::uint8_t> keep, std::size_t batch) const;
    nn::Var decode_memory(nn::Graph& g, nn::Var memory, std::size_t batch) const;
    nn::Var flow_graph(nn::Graph& g, nn::Var memory, const nn::Tensor& a_t, std::span<const float> t,
                       std::size_t batch) const;
    void require_flow() const;

    OatConfig config_;
    std::uint64_t seed_;
    bool trained_ = false;
    // Mutable so that const inference can build graphs over it; inference
    // graphs never write gradients.
    mutable nn::ParameterStore store_;

    nn::Linear action_in_;
    std::vector<nn::EncoderBlock> encoder_;
    nn::LayerNorm enc_norm_;
    nn::Linear latent_out_;
    nn::ParamId registers_ = 0;
    nn::Linear code_in_;
    std::vector<nn::DecoderBlock> decoder_;
    nn::ParamId mask_ = 0;
    nn::LayerNorm out_norm_;
    nn::Linear out_;

    nn::Linear flow_in_;
    nn::Linear flow_time_;
    std::vector<nn::DecoderBlock> flow_decoder_;
    nn::LayerNorm flow_norm_;
    nn::Linear flow_out_;

    nn::Tensor action_pos_;  ///< H_a x model_dim, encoder inputs and decoder queries
    nn::Tensor token_pos_;   ///< H_l x model_dim
    nn::AttentionMask mask_pattern_;
};

nlohmann::json config_to_json(const OatConfig& c);
OatConfig config_from_json(const nlohmann::json& j);

}  // namespace oatok::oat
