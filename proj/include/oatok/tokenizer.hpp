// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "oatok/bin_tokenizer.hpp"
#include "oatok/common.hpp"
#include "oatok/fast_tokenizer.hpp"
#include "oatok/oat.hpp"

namespace oatok {

enum class Scheme { Oat, Bin, Fast };

std::string to_string(Scheme s);
Scheme scheme_from_string(const std::string& s);

struct BinTokenizer {
    bin::BinConfig config;
    std::size_t H_a = 32;
    std::size_t D_a = 2;
};

// Uniform view over the three tokenizers for the policy, the evaluation
// harness and the command line.
class AnyTokenizer {
public:
    explicit AnyTokenizer(oat::OatTokenizer t) : impl_(std::move(t)) {}
    explicit AnyTokenizer(BinTokenizer t) : impl_(std::move(t)) {}
    explicit AnyTokenizer(fast::FastTokenizer t) : impl_(std::move(t)) {}

    Scheme scheme() const noexcept { return static_cast<Scheme>(impl_.index()); }
    std::size_t horizon() const;
    std::size_t dims() const;
    /// Ids are in [0, vocab_size()).
    std::size_t vocab_size() const;
    /// Longest sequence a valid chunk can produce: H_l, H_a*D_a, H_a*D_a.
    std::size_t max_tokens() const;
    /// Only OAT accepts shorter prefixes.
    bool prefix_decodable() const noexcept { return scheme() == Scheme::Oat; }

    TokenSequence tokenize(const ActionChunk& chunk) const;
    std::vector<TokenSequence> tokenize_batch(std::span<const ActionChunk> chunks) const;
    /// FAST reports a wrong-length expansion as DecodeError; every other
    /// failure (bad id, bad prefix length) throws.
    fast::DecodeResult detokenize(std::span<const TokenId> ids) const;

    const oat::OatTokenizer* as_oat() const noexcept { return std::get_if<oat::OatTokenizer>(&impl_); }
    const BinTokenizer* as_bin() const noexcept { return std::get_if<BinTokenizer>(&impl_); }
    const fast::FastTokenizer* as_fast() const noexcept { return std::get_if<fast::FastTokenizer>(&impl_); }

    nlohmann::json header() const;
    std::vector<char> blob() const;
    void save(const std::filesystem::path& path) const;
    static AnyTokenizer load(const std::filesystem::path& path);
    static AnyTokenizer from_checkpoint(const nlohmann::json& header, std::span<const char> blob);

private:
    std::variant<oat::OatTokenizer, BinTokenizer, fast::FastTokenizer> impl_;
};

}  // namespace oatok
