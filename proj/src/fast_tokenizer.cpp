// SPDX-License-Identifier: Apache-2.0
#include "oatok/fast_tokenizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace oatok::fast {

void FastConfig::validate() const {
    if (!(gamma > 0.0) || !std::isfinite(gamma)) throw ConfigError("FAST gamma must be > 0");
    if (H_a < 1 || D_a < 1) throw ConfigError("FAST H_a and D_a must be >= 1");
    if (vocab_size < 1) throw ConfigError("FAST vocab_size must be >= 1");
}

FastTokenizer::FastTokenizer(FastConfig config, bpe::BpeVocab vocab, std::int64_t offset)
    : config_(config), vocab_(std::move(vocab)), offset_(offset), plan_(config.H_a) {
    config_.validate();
    if (vocab_.base_alphabet().empty()) throw VocabularyError("FAST vocabulary has an empty alphabet");
}

std::vector<double> FastTokenizer::dct_columns(const ActionChunk& chunk) const {
    if (chunk.horizon() != config_.H_a || chunk.dims() != config_.D_a) {
        throw ShapeError("FAST expects " + std::to_string(config_.H_a) + "x" + std::to_string(config_.D_a) +
                         " chunks");
    }
    std::vector<double> out(stream_length());
    std::vector<double> column(config_.H_a);
    for (std::size_t d = 0; d < config_.D_a; ++d) {
        for (std::size_t t = 0; t < config_.H_a; ++t) column[t] = chunk(t, d);
        const auto coeffs = plan_.forward(column);
        for (std::size_t k = 0; k < config_.H_a; ++k) out[k * config_.D_a + d] = coeffs[k];
    }
    return out;
}

std::vector<std::int64_t> FastTokenizer::quantized_coefficients(const ActionChunk& chunk) const {
    if (!chunk.all_finite()) throw InvalidInputError("FAST: non-finite chunk entry");
    const auto coeffs = dct_columns(chunk);
    std::vector<std::int64_t> q(coeffs.size());
    for (std::size_t i = 0; i < coeffs.size(); ++i) q[i] = std::llround(config_.gamma * coeffs[i]);
    return q;
}

ActionChunk FastTokenizer::reconstruct(std::span<const std::int64_t> coeffs) const {
    if (coeffs.size() != stream_length()) {
        throw ShapeError("FAST reconstruct: expected " + std::to_string(stream_length()) + " coefficients");
    }
    ActionChunk chunk(config_.H_a, config_.D_a);
    std::vector<double> column(config_.H_a);
    for (std::size_t d = 0; d < config_.D_a; ++d) {
        for (std::size_t k = 0; k < config_.H_a; ++k) {
            column[k] = static_cast<double>(coeffs[k * config_.D_a + d]) / config_.gamma;
        }
        const auto signal = plan_.inverse(column);
        for (std::size_t t = 0; t < config_.H_a; ++t) chunk(t, d) = signal[t];
    }
    return chunk;
}

TokenSequence FastTokenizer::tokenize(const ActionChunk& chunk) const {
    const auto q = quantized_coefficients(chunk);
    const auto& alphabet = vocab_.base_alphabet();
    bpe::SymbolStream symbols(q.size());
    for (std::size_t i = 0; i < q.size(); ++i) {
        const bpe::Symbol s = q[i] - offset_;
        // Clamp to the nearest alphabet symbol so encoding stays total.
        auto it = std::lower_bound(alphabet.begin(), alphabet.end(), s);
        if (it == alphabet.end()) {
            symbols[i] = alphabet.back();
        } else if (*it == s || it == alphabet.begin()) {
            symbols[i] = *it;
        } else {
            const bpe::Symbol above = *it;
            const bpe::Symbol below = *std::prev(it);
            symbols[i] = (s - below <= above - s) ? below : above;
        }
    }
    return vocab_.encode(symbols);
}

std::vector<std::int64_t> FastTokenizer::expand(std::span<const TokenId> ids) const {
    const auto symbols = vocab_.decode(ids);
    std::vector<std::int64_t> q(symbols.size());
    for (std::size_t i = 0; i < symbols.size(); ++i) q[i] = symbols[i] + offset_;
    return q;
}

DecodeResult FastTokenizer::detokenize(std::span<const TokenId> ids) const {
    const auto q = expand(ids);
    if (q.size() != stream_length()) return DecodeError{stream_length(), q.size()};
    return reconstruct(q);
}

nlohmann::json FastTokenizer::to_json() const {
    return {{"scheme", "fast"},          {"gamma", config_.gamma},          {"H_a", config_.H_a},
            {"D_a", config_.D_a},        {"vocab_size", config_.vocab_size}, {"offset", offset_},
            {"bpe", vocab_.to_json()},   {"format_version", 1}};
}

FastTokenizer FastTokenizer::from_json(const nlohmann::json& j) {
    try {
        if (j.at("scheme").get<std::string>() != "fast") throw FormatError("not a FAST checkpoint");
        FastConfig c;
        c.gamma = j.at("gamma").get<double>();
        c.H_a = j.at("H_a").get<std::size_t>();
        c.D_a = j.at("D_a").get<std::size_t>();
        c.vocab_size = j.value("vocab_size", c.vocab_size);
        return FastTokenizer(c, bpe::BpeVocab::from_json(j.at("bpe")), j.at("offset").get<std::int64_t>());
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("FAST checkpoint: ") + e.what());
    }
}

FastTokenizer FastTokenizer::fit(std::span<const ActionChunk> chunks, const FastConfig& config) {
    config.validate();
    if (chunks.empty()) throw TrainingError("FAST fit: no training chunks");
    // A throwaway instance provides the DCT; the vocabulary is filled in below.
    FastTokenizer probe(config, bpe::BpeVocab({0}, {}, std::max<std::size_t>(1, config.vocab_size)), 0);
    std::vector<std::vector<std::int64_t>> streams;
    streams.reserve(chunks.size());
    std::int64_t lo = std::numeric_limits<std::int64_t>::max();
    for (const auto& c : chunks) {
        streams.push_back(probe.quantized_coefficients(c));
        lo = std::min(lo, *std::min_element(streams.back().begin(), streams.back().end()));
    }
    std::vector<bpe::SymbolStream> corpus;
    corpus.reserve(streams.size());
    for (const auto& s : streams) {
        bpe::SymbolStream sym(s.size());
        for (std::size_t i = 0; i < s.size(); ++i) sym[i] = s[i] - lo;
        corpus.push_back(std::move(sym));
    }
    return FastTokenizer(config, bpe::bpe_train(corpus, config.vocab_size), lo);
}

SpectralShiftResult spectral_shift_demo(const FastTokenizer& tok, const ActionChunk& original,
                                        std::span<const TokenId> valid_ids, std::span<const TokenId> mutated_ids) {
    auto mutated = tok.expand(mutated_ids);
    if (mutated.size() == tok.stream_length()) {
        throw NotApplicableError("spectral_shift_demo: mutation preserves the coefficient count");
    }
    const auto honest = tok.detokenize(valid_ids);
    if (!std::holds_alternative<ActionChunk>(honest)) {
        throw InvalidInputError("spectral_shift_demo: reference ids do not decode");
    }
    mutated.resize(tok.stream_length(), 0);
    const ActionChunk repaired = tok.reconstruct(mutated);
    return {mse(repaired, original), mse(std::get<ActionChunk>(honest), original)};
}

TokenSequence mutate_token(const FastTokenizer& tok, std::span<const TokenId> ids, std::size_t index, Rng& rng) {
    if (index >= ids.size()) throw BoundsError("mutate_token: index out of range");
    const auto& vocab = tok.vocab();
    const std::size_t len = vocab.expansion(ids[index]).size();
    std::vector<TokenId> candidates;
    for (std::size_t id = 0; id < vocab.size(); ++id) {
        if (vocab.expansion(static_cast<TokenId>(id)).size() != len) candidates.push_back(static_cast<TokenId>(id));
    }
    if (candidates.empty()) throw NotApplicableError("mutate_token: every token has the same expansion length");
    TokenSequence out(ids.begin(), ids.end());
    out[index] = candidates[rng.below(candidates.size())];
    return out;
}

}  // namespace oatok::fast
