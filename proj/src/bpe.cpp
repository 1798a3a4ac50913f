// SPDX-License-Identifier: Apache-2.0
#include "oatok/bpe.hpp"

#include <algorithm>
#include <set>
#include <unordered_map>

namespace oatok::bpe {
namespace {

std::uint64_t pair_key(TokenId l, TokenId r) {
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(l)) << 32) | static_cast<std::uint32_t>(r);
}

// In-place left-to-right replacement of (l, r) by id.
void apply_merge(std::vector<TokenId>& s, const MergeRule& m) {
    if (s.size() < 2) return;
    std::size_t w = 0;
    std::size_t i = 0;
    while (i < s.size()) {
        if (i + 1 < s.size() && s[i] == m.left && s[i + 1] == m.right) {
            s[w++] = m.new_id;
            i += 2;
        } else {
            s[w++] = s[i++];
        }
    }
    s.resize(w);
}

}  // namespace

BpeVocab::BpeVocab(std::vector<Symbol> base_alphabet, std::vector<MergeRule> merges, std::size_t target_size)
    : alphabet_(std::move(base_alphabet)), merges_(std::move(merges)), target_size_(target_size) {
    if (!std::is_sorted(alphabet_.begin(), alphabet_.end()) ||
        std::adjacent_find(alphabet_.begin(), alphabet_.end()) != alphabet_.end()) {
        throw VocabularyError("base alphabet must be strictly ascending");
    }
    expansions_.reserve(alphabet_.size() + merges_.size());
    for (std::size_t i = 0; i < alphabet_.size(); ++i) {
        expansions_.push_back({alphabet_[i]});
        symbol_ids_.emplace(alphabet_[i], static_cast<TokenId>(i));
    }
    for (const auto& m : merges_) {
        const auto next = static_cast<TokenId>(expansions_.size());
        if (m.new_id != next || !contains(m.left) || !contains(m.right) || m.new_id <= std::max(m.left, m.right)) {
            throw VocabularyError("malformed merge rule (" + std::to_string(m.left) + ", " + std::to_string(m.right) +
                                  ") -> " + std::to_string(m.new_id));
        }
        SymbolStream e = expansions_[static_cast<std::size_t>(m.left)];
        const auto& r = expansions_[static_cast<std::size_t>(m.right)];
        e.insert(e.end(), r.begin(), r.end());
        expansions_.push_back(std::move(e));
    }
    if (target_size_ < expansions_.size()) throw VocabularyError("vocabulary larger than target_size");
}

const SymbolStream& BpeVocab::expansion(TokenId id) const {
    if (!contains(id)) throw VocabularyError("out-of-vocabulary token id " + std::to_string(id));
    return expansions_[static_cast<std::size_t>(id)];
}

TokenId BpeVocab::symbol_id(Symbol s) const {
    const auto it = symbol_ids_.find(s);
    return it == symbol_ids_.end() ? -1 : it->second;
}

std::vector<TokenId> BpeVocab::encode(std::span<const Symbol> stream) const {
    std::vector<TokenId> ids;
    ids.reserve(stream.size());
    for (Symbol s : stream) {
        const TokenId id = symbol_id(s);
        if (id < 0) throw VocabularyError("out-of-alphabet symbol " + std::to_string(s));
        ids.push_back(id);
    }
    for (const auto& m : merges_) apply_merge(ids, m);
    return ids;
}

SymbolStream BpeVocab::decode(std::span<const TokenId> ids) const {
    SymbolStream out;
    for (TokenId id : ids) {
        const auto& e = expansion(id);
        out.insert(out.end(), e.begin(), e.end());
    }
    return out;
}

nlohmann::json BpeVocab::to_json() const {
    nlohmann::json merges = nlohmann::json::array();
    for (const auto& m : merges_) merges.push_back({m.left, m.right, m.new_id});
    return {{"base_alphabet", alphabet_}, {"merges", merges}, {"target_size", target_size_}};
}

BpeVocab BpeVocab::from_json(const nlohmann::json& j) {
    try {
        std::vector<MergeRule> merges;
        for (const auto& m : j.at("merges")) {
            if (m.size() != 3) throw FormatError("merge entries are [left, right, new]");
            merges.push_back({m[0].get<TokenId>(), m[1].get<TokenId>(), m[2].get<TokenId>()});
        }
        return BpeVocab(j.at("base_alphabet").get<std::vector<Symbol>>(), std::move(merges),
                        j.at("target_size").get<std::size_t>());
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("bpe vocab: ") + e.what());
    }
}

BpeVocab bpe_train(std::span<const SymbolStream> corpus, std::size_t target_size) {
    if (corpus.empty()) throw TrainingError("bpe_train: empty corpus");
    std::set<Symbol> seen;
    for (const auto& s : corpus) seen.insert(s.begin(), s.end());
    if (seen.empty()) throw TrainingError("bpe_train: corpus contains no symbols");
    std::vector<Symbol> alphabet(seen.begin(), seen.end());
    if (target_size < alphabet.size()) {
        throw TrainingError("bpe_train: target_size " + std::to_string(target_size) + " below alphabet size " +
                            std::to_string(alphabet.size()));
    }

    std::map<Symbol, TokenId> ids;
    for (std::size_t i = 0; i < alphabet.size(); ++i) ids.emplace(alphabet[i], static_cast<TokenId>(i));
    std::vector<std::vector<TokenId>> streams;
    streams.reserve(corpus.size());
    for (const auto& s : corpus) {
        std::vector<TokenId> t;
        t.reserve(s.size());
        for (Symbol x : s) t.push_back(ids.at(x));
        streams.push_back(std::move(t));
    }

    std::vector<MergeRule> merges;
    auto next_id = static_cast<TokenId>(alphabet.size());
    std::unordered_map<std::uint64_t, std::size_t> counts;
    while (static_cast<std::size_t>(next_id) < target_size) {
        counts.clear();
        for (const auto& s : streams) {
            std::size_t run = 0;
            for (std::size_t i = 0; i + 1 < s.size(); ++i) {
                run = (i > 0 && s[i] == s[i - 1]) ? run + 1 : 0;
                if (s[i] == s[i + 1] && run % 2 == 1) continue;
                ++counts[pair_key(s[i], s[i + 1])];
            }
        }
        std::uint64_t best_key = 0;
        std::size_t best_count = 0;
        for (const auto& [key, count] : counts) {
            if (count > best_count || (count == best_count && key < best_key)) {
                best_key = key;
                best_count = count;
            }
        }
        if (best_count < 2) break;
        const MergeRule rule{static_cast<TokenId>(best_key >> 32), static_cast<TokenId>(best_key & 0xFFFFFFFFu),
                             next_id++};
        for (auto& s : streams) apply_merge(s, rule);
        merges.push_back(rule);
    }
    return BpeVocab(std::move(alphabet), std::move(merges), target_size);
}

}  // namespace oatok::bpe
