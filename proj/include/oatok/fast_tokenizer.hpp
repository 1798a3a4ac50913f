// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <variant>
#include <vector>

#include <json.hpp>

#include "oatok/bpe.hpp"
#include "oatok/common.hpp"
#include "oatok/dct.hpp"
#include "oatok/random.hpp"

namespace oatok::fast {

struct FastConfig {
    double gamma = 10.0;           ///< coefficient scale applied before rounding
    std::size_t vocab_size = 1024;
    std::size_t H_a = 32;
    std::size_t D_a = 2;

    void validate() const;
};

/// Returned (not thrown) when a token sequence expands to the wrong number of
/// coefficients and cannot be reshaped into an H_a x D_a chunk.
struct DecodeError {
    std::size_t expected = 0;
    std::size_t got = 0;
};

using DecodeResult = std::variant<ActionChunk, DecodeError>;

// DCT -> round(gamma * c) -> frequency-major flatten -> BPE.
class FastTokenizer {
public:
    FastTokenizer(FastConfig config, bpe::BpeVocab vocab, std::int64_t offset);

    /// Fits the BPE vocabulary on normalized chunks.
    static FastTokenizer fit(std::span<const ActionChunk> chunks, const FastConfig& config);

    const FastConfig& config() const noexcept { return config_; }
    const bpe::BpeVocab& vocab() const noexcept { return vocab_; }
    std::int64_t offset() const noexcept { return offset_; }
    std::size_t stream_length() const noexcept { return config_.H_a * config_.D_a; }

    /// Quantized coefficients q = round(gamma * c), frequency-major (all dims'
    /// k=0, then k=1, ...).
    std::vector<std::int64_t> quantized_coefficients(const ActionChunk& chunk) const;

    /// Integer stream -> chunk. Requires exactly stream_length() entries.
    ActionChunk reconstruct(std::span<const std::int64_t> coeffs) const;

    TokenSequence tokenize(const ActionChunk& chunk) const;
    DecodeResult detokenize(std::span<const TokenId> ids) const;

    /// Concatenated coefficient stream of the ids, any length.
    std::vector<std::int64_t> expand(std::span<const TokenId> ids) const;

    nlohmann::json to_json() const;
    static FastTokenizer from_json(const nlohmann::json& j);

private:
    std::vector<double> dct_columns(const ActionChunk& chunk) const;

    FastConfig config_;
    bpe::BpeVocab vocab_;
    std::int64_t offset_;
    dct::DctPlan plan_;
};

struct SpectralShiftResult {
    double repaired_mse = 0.0;  ///< mutated stream truncated / zero-padded then decoded
    double honest_mse = 0.0;    ///< valid stream decoded
};

/// Forces a wrong-length stream into shape and measures the damage against
/// `original`. Throws NotApplicableError if `mutated` decodes to the right
/// length.
SpectralShiftResult spectral_shift_demo(const FastTokenizer& tok, const ActionChunk& original,
                                        std::span<const TokenId> valid_ids, std::span<const TokenId> mutated_ids);

/// Replaces ids[index] with a uniformly drawn id whose expansion length
/// differs. Throws BoundsError when index is out of range.
TokenSequence mutate_token(const FastTokenizer& tok, std::span<const TokenId> ids, std::size_t index, Rng& rng);

}  // namespace oatok::fast
