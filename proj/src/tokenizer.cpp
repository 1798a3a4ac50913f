// SPDX-License-Identifier: Apache-2.0
#include "oatok/tokenizer.hpp"

#include "oatok/checkpoint.hpp"

namespace oatok {

std::string to_string(Scheme s) {
    switch (s) {
        case Scheme::Oat: return "oat";
        case Scheme::Bin: return "bin";
        case Scheme::Fast: return "fast";
    }
    return "?";
}

Scheme scheme_from_string(const std::string& s) {
    if (s == "oat") return Scheme::Oat;
    if (s == "bin") return Scheme::Bin;
    if (s == "fast") return Scheme::Fast;
    throw ConfigError("unknown tokenizer scheme '" + s + "' (expected oat, bin or fast)");
}

namespace {
template <class... F>
struct overloaded : F... {
    using F::operator()...;
};
template <class... F>
overloaded(F...) -> overloaded<F...>;
}  // namespace

std::size_t AnyTokenizer::horizon() const {
    return std::visit(overloaded{[](const oat::OatTokenizer& t) { return t.config().H_a; },
                                 [](const BinTokenizer& t) { return t.H_a; },
                                 [](const fast::FastTokenizer& t) { return t.config().H_a; }},
                      impl_);
}

std::size_t AnyTokenizer::dims() const {
    return std::visit(overloaded{[](const oat::OatTokenizer& t) { return t.config().D_a; },
                                 [](const BinTokenizer& t) { return t.D_a; },
                                 [](const fast::FastTokenizer& t) { return t.config().D_a; }},
                      impl_);
}

std::size_t AnyTokenizer::vocab_size() const {
    return std::visit(overloaded{[](const oat::OatTokenizer& t) { return t.vocab_size(); },
                                 [](const BinTokenizer& t) { return t.config.N; },
                                 [](const fast::FastTokenizer& t) { return t.vocab().size(); }},
                      impl_);
}

std::size_t AnyTokenizer::max_tokens() const {
    return std::visit(overloaded{[](const oat::OatTokenizer& t) { return t.config().H_l; },
                                 [](const BinTokenizer& t) { return t.H_a * t.D_a; },
                                 [](const fast::FastTokenizer& t) { return t.stream_length(); }},
                      impl_);
}

TokenSequence AnyTokenizer::tokenize(const ActionChunk& chunk) const {
    return std::visit(overloaded{[&](const oat::OatTokenizer& t) { return t.tokenize(chunk); },
                                 [&](const BinTokenizer& t) {
                                     if (chunk.horizon() != t.H_a || chunk.dims() != t.D_a) {
                                         throw ShapeError("chunk shape does not match the bin tokenizer");
                                     }
                                     return bin::bin_tokenize(chunk, t.config);
                                 },
                                 [&](const fast::FastTokenizer& t) { return t.tokenize(chunk); }},
                      impl_);
}

std::vector<TokenSequence> AnyTokenizer::tokenize_batch(std::span<const ActionChunk> chunks) const {
    if (const auto* o = as_oat()) return o->tokenize_batch(chunks);
    std::vector<TokenSequence> out;
    out.reserve(chunks.size());
    for (const auto& c : chunks) out.push_back(tokenize(c));
    return out;
}

fast::DecodeResult AnyTokenizer::detokenize(std::span<const TokenId> ids) const {
    return std::visit(
        overloaded{[&](const oat::OatTokenizer& t) -> fast::DecodeResult { return t.detokenize(ids); },
                   [&](const BinTokenizer& t) -> fast::DecodeResult {
                       return bin::bin_detokenize(ids, t.H_a, t.D_a, t.config);
                   },
                   [&](const fast::FastTokenizer& t) -> fast::DecodeResult { return t.detokenize(ids); }},
        impl_);
}

nlohmann::json AnyTokenizer::header() const {
    return std::visit(overloaded{[](const oat::OatTokenizer& t) { return t.header(); },
                                 [](const BinTokenizer& t) {
                                     return nlohmann::json{{"scheme", "bin"},
                                                           {"N", t.config.N},
                                                           {"H_a", t.H_a},
                                                           {"D_a", t.D_a},
                                                           {"format_version", checkpoint::kFormatVersion}};
                                 },
                                 [](const fast::FastTokenizer& t) { return t.to_json(); }},
                      impl_);
}

std::vector<char> AnyTokenizer::blob() const {
    if (const auto* o = as_oat()) return o->params().serialize();
    return {};
}

void AnyTokenizer::save(const std::filesystem::path& path) const { checkpoint::write(path, header(), blob()); }

AnyTokenizer AnyTokenizer::from_checkpoint(const nlohmann::json& header, std::span<const char> blob) {
    const std::string scheme = header.value("scheme", "");
    switch (scheme_from_string(scheme)) {
        case Scheme::Oat: return AnyTokenizer(oat::OatTokenizer::from_checkpoint(header, blob));
        case Scheme::Bin: {
            BinTokenizer t;
            try {
                t.config.N = header.at("N").get<std::size_t>();
                t.H_a = header.at("H_a").get<std::size_t>();
                t.D_a = header.at("D_a").get<std::size_t>();
            } catch (const nlohmann::json::exception& e) {
                throw FormatError(std::string("bin checkpoint: ") + e.what());
            }
            if (t.config.N < 2) throw FormatError("bin checkpoint: N must be at least 2");
            return AnyTokenizer(t);
        }
        case Scheme::Fast: return AnyTokenizer(fast::FastTokenizer::from_json(header));
    }
    throw FormatError("unknown scheme");
}

AnyTokenizer AnyTokenizer::load(const std::filesystem::path& path) {
    const auto f = checkpoint::read(path);
    return from_checkpoint(f.header, f.blob);
}

}  // namespace oatok
