// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include <json.hpp>

#include "oatok/common.hpp"

namespace oatok::bpe {

using Symbol = std::int64_t;
using SymbolStream = std::vector<Symbol>;

struct MergeRule {
    TokenId left = 0;
    TokenId right = 0;
    TokenId new_id = 0;

    bool operator==(const MergeRule&) const = default;
};

// Byte-pair vocabulary over integer symbols. Ids [0, |alphabet|) are the base
// symbols in ascending order; every merge appends one id.
class BpeVocab {
public:
    BpeVocab() = default;
    BpeVocab(std::vector<Symbol> base_alphabet, std::vector<MergeRule> merges, std::size_t target_size);

    const std::vector<Symbol>& base_alphabet() const noexcept { return alphabet_; }
    const std::vector<MergeRule>& merges() const noexcept { return merges_; }
    std::size_t target_size() const noexcept { return target_size_; }
    std::size_t size() const noexcept { return expansions_.size(); }

    bool contains(TokenId id) const noexcept { return id >= 0 && static_cast<std::size_t>(id) < size(); }
    const SymbolStream& expansion(TokenId id) const;

    /// Base-symbol id, or -1 when the symbol is not in the alphabet.
    TokenId symbol_id(Symbol s) const;

    std::vector<TokenId> encode(std::span<const Symbol> stream) const;
    SymbolStream decode(std::span<const TokenId> ids) const;

    nlohmann::json to_json() const;
    static BpeVocab from_json(const nlohmann::json& j);

    bool operator==(const BpeVocab& other) const {
        return alphabet_ == other.alphabet_ && merges_ == other.merges_ && target_size_ == other.target_size_;
    }

private:
    std::vector<Symbol> alphabet_;
    std::vector<MergeRule> merges_;
    std::size_t target_size_ = 0;
    std::vector<SymbolStream> expansions_;
    std::map<Symbol, TokenId> symbol_ids_;
};

/// Greedy most-frequent-pair training. Pair counts are the number of
/// non-overlapping left-to-right applications; ties go to the smallest
/// (left, right). Stops at target_size or when no pair occurs twice.
/// Streams are independent: no merge crosses a stream boundary.
BpeVocab bpe_train(std::span<const SymbolStream> corpus, std::size_t target_size);

inline std::vector<TokenId> bpe_encode(const BpeVocab& vocab, std::span<const Symbol> stream) {
    return vocab.encode(stream);
}
inline SymbolStream bpe_decode(const BpeVocab& vocab, std::span<const TokenId> ids) { return vocab.decode(ids); }

}  // namespace oatok::bpe
