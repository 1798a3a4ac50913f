// SPDX-License-Identifier: Apache-2.0
#include "oatok/policy.hpp"

#include <algorithm>
#include <cmath>

#include "oatok/checkpoint.hpp"
#include "oatok/json_io.hpp"

namespace oatok::policy {

void PolicyConfig::validate() const {
    if (obs_dim == 0 || H_o == 0) throw ConfigError("observation size and history must be positive");
    if (layers == 0) throw ConfigError("policy needs at least one layer");
    if (head_dim == 0 || model_dim == 0 || model_dim % head_dim != 0) {
        throw ConfigError("model_dim must be a positive multiple of head_dim");
    }
    if (!sampling.greedy && !(sampling.temperature > 0.0)) throw ConfigError("temperature must be positive");
}

Policy::Policy(AnyTokenizer tokenizer, PolicyConfig config, std::uint64_t seed)
    : tokenizer_(std::move(tokenizer)), config_(config), seed_(seed) {
    config_.validate();
    if (config_.execute_steps > tokenizer_.horizon()) throw ConfigError("execute_steps exceeds the action horizon");
    const bool fast = tokenizer_.scheme() == Scheme::Fast;
    vocab_ = tokenizer_.vocab_size() + (fast ? 1 : 0);
    max_steps_ = tokenizer_.max_tokens() + (fast ? 1 : 0);
    const std::size_t d = config_.model_dim;
    Rng rng(mix_seed(seed, 0x901));
    obs_in_ = nn::Linear::create(store_, "obs", config_.obs_dim, d, rng);
    token_table_ = store_.add("tokens", vocab_, d, nn::Init::Normal002, rng);
    bos_ = store_.add("bos", 1, d, nn::Init::Normal002, rng);
    for (std::size_t i = 0; i < config_.layers; ++i) {
        blocks_.push_back(nn::EncoderBlock::create(store_, "block." + std::to_string(i), d, d / config_.head_dim, rng));
    }
    norm_ = nn::LayerNorm::create(store_, "head.norm", d);
    // Small output weights keep the initial next-token distribution close to
    // uniform.
    head_ = nn::Linear::create(store_, "head.out", d, vocab_, rng, nn::Init::Normal002);
    pos_ = nn::sinusoidal_table(config_.H_o + max_steps_, d);
}

std::size_t Policy::execute_steps() const noexcept {
    return config_.execute_steps == 0 ? std::max<std::size_t>(1, tokenizer_.horizon() / 2) : config_.execute_steps;
}

std::optional<TokenId> Policy::eos() const noexcept {
    if (tokenizer_.scheme() != Scheme::Fast) return std::nullopt;
    return static_cast<TokenId>(vocab_ - 1);
}

void Policy::check_obs(const ObservationHistory& obs) const {
    if (obs.rows() != config_.H_o || obs.cols() != config_.obs_dim) {
        throw ShapeError("observation history must be " + std::to_string(config_.H_o) + " x " +
                         std::to_string(config_.obs_dim));
    }
}

nn::Var Policy::forward(nn::Graph& g, std::span<const Example> batch, std::size_t seq_tokens) const {
    const std::size_t B = batch.size();
    const std::size_t d = config_.model_dim;
    const std::size_t S = config_.H_o + seq_tokens;
    if (seq_tokens == 0 || seq_tokens > max_steps_) throw BoundsError("sequence longer than the policy horizon");
    nn::Tensor obs(B * config_.H_o, config_.obs_dim);
    std::vector<TokenId> ids;
    ids.reserve(B * (seq_tokens - 1));
    for (std::size_t b = 0; b < B; ++b) {
        check_obs(batch[b].observations);
        for (std::size_t i = 0; i < obs.cols * config_.H_o; ++i) {
            obs.data[b * config_.H_o * obs.cols + i] = static_cast<float>(batch[b].observations.data()[i]);
        }
        for (std::size_t i = 0; i + 1 < seq_tokens; ++i) {
            ids.push_back(i < batch[b].tokens.size() ? batch[b].tokens[i] : 0);
        }
    }
    nn::Var x = obs_in_(g, store_, g.constant(std::move(obs)));
    nn::Var seq = g.add_tiled(g.constant(nn::Tensor(B, d)), g.param(store_, bos_));
    if (seq_tokens > 1) seq = g.concat_rows(seq, g.gather_rows(g.param(store_, token_table_), ids), B);
    x = g.concat_rows(x, seq, B);
    nn::Tensor pos(S, d);
    std::copy(pos_.data.begin(), pos_.data.begin() + static_cast<std::ptrdiff_t>(S * d), pos.data.begin());
    x = g.add_tiled(x, g.constant(std::move(pos)));
    const auto mask = nn::AttentionMask::causal(S);
    for (const auto& blk : blocks_) x = blk(g, store_, x, B, mask);
    x = g.slice_rows(x, B, S, config_.H_o, seq_tokens);
    return head_(g, store_, norm_(g, store_, x));
}

nn::Tensor Policy::all_logits(std::span<const TokenId> prefix, const ObservationHistory& obs) const {
    if (prefix.size() >= max_steps_) {
        throw BoundsError("prefix of " + std::to_string(prefix.size()) + " tokens; the policy predicts at most " +
                          std::to_string(max_steps_));
    }
    for (TokenId t : prefix) {
        if (t < 0 || static_cast<std::size_t>(t) >= vocab_) throw VocabularyError("prefix id outside vocabulary");
    }
    Example ex{obs, TokenSequence(prefix.begin(), prefix.end())};
    nn::Graph g(false);
    return g.value(forward(g, std::span<const Example>(&ex, 1), prefix.size() + 1));
}

std::vector<float> Policy::logits(std::span<const TokenId> prefix, const ObservationHistory& obs) const {
    const nn::Tensor all = all_logits(prefix, obs);
    return {all.row(all.rows - 1), all.row(all.rows - 1) + all.cols};
}

namespace {

struct Targets {
    std::vector<TokenId> ids;
    std::vector<float> weights;
    std::size_t length = 0;
};

// Teacher-forcing targets padded to the longest sequence; padding has weight 0.
Targets make_targets(std::span<const Example> batch, std::optional<TokenId> eos, std::size_t tokenizer_vocab,
                     std::size_t max_steps) {
    Targets t;
    for (const auto& ex : batch) {
        t.length = std::max(t.length, ex.tokens.size() + (eos ? 1 : 0));
    }
    if (t.length == 0 || t.length > max_steps) throw BoundsError("target sequence does not fit the policy horizon");
    for (const auto& ex : batch) {
        for (std::size_t i = 0; i < t.length; ++i) {
            if (i < ex.tokens.size()) {
                const TokenId id = ex.tokens[i];
                if (id < 0 || static_cast<std::size_t>(id) >= tokenizer_vocab) {
                    throw BindingError("target id " + std::to_string(id) +
                                       " does not belong to the bound tokenizer vocabulary");
                }
                t.ids.push_back(id);
                t.weights.push_back(1.0f);
            } else if (eos && i == ex.tokens.size()) {
                t.ids.push_back(*eos);
                t.weights.push_back(1.0f);
            } else {
                t.ids.push_back(0);
                t.weights.push_back(0.0f);
            }
        }
    }
    return t;
}

}  // namespace

double Policy::loss(std::span<const Example> batch) const {
    const Targets t = make_targets(batch, eos(), tokenizer_.vocab_size(), max_steps_);
    nn::Graph g(false);
    return g.value(g.cross_entropy(forward(g, batch, t.length), t.ids, t.weights)).data[0];
}

std::vector<double> Policy::train(std::span<const Example> examples, const TrainConfig& train, std::uint64_t seed,
                                  const std::function<bool(std::size_t, double)>& on_step) {
    if (examples.empty()) throw TrainingError("empty policy training set");
    if (train.batch_size == 0) throw ConfigError("batch_size must be positive");
    const bool fixed = tokenizer_.scheme() != Scheme::Fast;
    for (const auto& ex : examples) {
        check_obs(ex.observations);
        if (fixed && ex.tokens.size() != tokenizer_.max_tokens()) {
            throw BindingError("target length does not match the bound tokenizer");
        }
    }
    Rng rng(mix_seed(seed, 0x902));
    nn::Adam opt(store_, train.adam);
    std::vector<double> losses;
    std::vector<Example> batch(train.batch_size);
    for (std::size_t step = 0; step < train.steps; ++step) {
        for (auto& ex : batch) ex = examples[rng.below(examples.size())];
        const Targets t = make_targets(batch, eos(), tokenizer_.vocab_size(), max_steps_);
        nn::Graph g;
        const nn::Var loss = g.cross_entropy(forward(g, batch, t.length), t.ids, t.weights);
        const double value = g.value(loss).data[0];
        if (!std::isfinite(value)) throw DivergenceError(step, value);
        store_.zero_grad();
        g.backward(loss);
        opt.set_lr(nn::scheduled_lr(train.adam, step, train.steps));
        opt.step(store_);
        losses.push_back(value);
        if (on_step && !on_step(step, value)) break;
    }
    return losses;
}

TokenSequence Policy::generate(const ObservationHistory& obs, std::size_t n_tokens, Rng* rng) const {
    check_obs(obs);
    const auto stop = eos();
    if (stop) n_tokens = max_steps_ - 1;
    if (n_tokens == 0 || n_tokens >= max_steps_ + (stop ? 0 : 1)) throw BoundsError("token count out of range");
    if (!config_.sampling.greedy && rng == nullptr) throw StateError("categorical sampling needs an rng");
    TokenSequence out;
    while (out.size() < n_tokens) {
        const auto lg = logits(out, obs);
        TokenId next = 0;
        if (config_.sampling.greedy) {
            next = static_cast<TokenId>(std::max_element(lg.begin(), lg.end()) - lg.begin());
        } else {
            const float mx = *std::max_element(lg.begin(), lg.end());
            std::vector<double> p(lg.size());
            double sum = 0.0;
            for (std::size_t i = 0; i < lg.size(); ++i) {
                p[i] = std::exp((lg[i] - mx) / config_.sampling.temperature);
                sum += p[i];
            }
            double u = rng->uniform() * sum;
            next = static_cast<TokenId>(lg.size() - 1);
            for (std::size_t i = 0; i < p.size(); ++i) {
                if (u < p[i]) {
                    next = static_cast<TokenId>(i);
                    break;
                }
                u -= p[i];
            }
        }
        if (stop && next == *stop) break;
        out.push_back(next);
    }
    return out;
}

InferResult Policy::infer(const ObservationHistory& obs, std::size_t K, std::span<const double> last_action,
                          Rng* rng) const {
    const std::size_t full = tokenizer_.max_tokens();
    if (tokenizer_.prefix_decodable()) {
        if (K == 0) K = full;
        if (K < 1 || K > full) {
            throw BoundsError("prefix length " + std::to_string(K) + " outside [1, " + std::to_string(full) + "]");
        }
    } else {
        if (K > full) throw BoundsError("prefix length exceeds the tokenizer's sequence length");
        K = full;
    }
    InferResult r;
    r.tokens = generate(obs, K, rng);
    auto decoded = tokenizer_.detokenize(r.tokens);
    if (auto* chunk = std::get_if<ActionChunk>(&decoded)) {
        r.chunk = std::move(*chunk);
        return r;
    }
    // Undecodable sequence: hold the last executed action for the whole chunk.
    r.fallback = true;
    r.chunk = ActionChunk(tokenizer_.horizon(), tokenizer_.dims());
    for (std::size_t t = 0; t < r.chunk.horizon(); ++t) {
        for (std::size_t c = 0; c < r.chunk.dims(); ++c) r.chunk(t, c) = c < last_action.size() ? last_action[c] : 0.0;
    }
    return r;
}

nlohmann::json Policy::header() const {
    nlohmann::json h{{"scheme", "policy"},
                     {"binding", to_string(tokenizer_.scheme())},
                     {"obs_dim", config_.obs_dim},
                     {"H_o", config_.H_o},
                     {"layers", config_.layers},
                     {"model_dim", config_.model_dim},
                     {"head_dim", config_.head_dim},
                     {"greedy", config_.sampling.greedy},
                     {"temperature", config_.sampling.temperature},
                     {"execute_steps", config_.execute_steps},
                     {"seed", seed_},
                     {"format_version", checkpoint::kFormatVersion},
                     {"params", checkpoint::param_table(store_)},
                     {"tokenizer", tokenizer_.header()},
                     {"tokenizer_blob_bytes", tokenizer_.blob().size()}};
    if (action_stats) h["action_stats"] = {{"min", action_stats->min}, {"max", action_stats->max}};
    return h;
}

void Policy::save(const std::filesystem::path& path) const {
    std::vector<char> blob = store_.serialize();
    const std::vector<char> tok = tokenizer_.blob();
    blob.insert(blob.end(), tok.begin(), tok.end());
    checkpoint::write(path, header(), blob);
}

Policy Policy::load(const std::filesystem::path& path) {
    const auto f = checkpoint::read(path);
    const auto& h = f.header;
    if (h.value("scheme", "") != "policy") throw FormatError(path.string() + " is not a policy checkpoint");
    try {
        const std::size_t tok_bytes = h.at("tokenizer_blob_bytes").get<std::size_t>();
        if (tok_bytes > f.blob.size()) throw FormatError("policy checkpoint blob is truncated");
        const std::size_t own = f.blob.size() - tok_bytes;
        auto tokenizer = AnyTokenizer::from_checkpoint(
            h.at("tokenizer"), std::span<const char>(f.blob.data() + own, tok_bytes));
        if (to_string(tokenizer.scheme()) != h.at("binding").get<std::string>()) {
            throw FormatError("policy binding does not match the embedded tokenizer");
        }
        PolicyConfig c;
        c.obs_dim = h.at("obs_dim").get<std::size_t>();
        c.H_o = h.at("H_o").get<std::size_t>();
        c.layers = h.at("layers").get<std::size_t>();
        c.model_dim = h.at("model_dim").get<std::size_t>();
        c.head_dim = h.at("head_dim").get<std::size_t>();
        c.sampling.greedy = h.at("greedy").get<bool>();
        c.sampling.temperature = h.at("temperature").get<double>();
        c.execute_steps = h.at("execute_steps").get<std::size_t>();
        Policy p(std::move(tokenizer), c, h.at("seed").get<std::uint64_t>());
        checkpoint::File own_part{h, std::vector<char>(f.blob.begin(), f.blob.begin() + static_cast<std::ptrdiff_t>(own))};
        checkpoint::load_params(p.store_, own_part);
        if (h.contains("action_stats")) {
            data::NormStats s;
            s.min = h["action_stats"].at("min").get<std::vector<double>>();
            s.max = h["action_stats"].at("max").get<std::vector<double>>();
            p.action_stats = s;
        }
        return p;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("policy checkpoint: ") + e.what());
    }
}

std::size_t autoregressive_step_count(const AnyTokenizer& tokenizer, std::size_t K, std::span<const TokenId> sampled) {
    switch (tokenizer.scheme()) {
        case Scheme::Oat: return K == 0 ? tokenizer.max_tokens() : K;
        case Scheme::Bin: return tokenizer.max_tokens();
        case Scheme::Fast: return sampled.size();
    }
    return 0;
}

ObservationHistory history_at(const Matrix& observations, std::size_t t, std::size_t H_o) {
    if (t >= observations.rows()) throw BoundsError("history index past the end of the episode");
    Matrix h(H_o, observations.cols());
    for (std::size_t i = 0; i < H_o; ++i) {
        const std::size_t back = H_o - 1 - i;
        const std::size_t src = t >= back ? t - back : 0;
        for (std::size_t c = 0; c < observations.cols(); ++c) h(i, c) = observations(src, c);
    }
    return h;
}

std::vector<Example> build_examples(const data::TrajectoryDataset& dataset, const data::NormStats& stats,
                                    const AnyTokenizer& tokenizer, std::size_t H_o, std::size_t stride) {
    if (dataset.observations.size() != dataset.trajectories.size()) {
        throw InvalidInputError("policy training needs a dataset with observations (point-mass family)");
    }
    if (stride == 0) throw ConfigError("stride must be positive");
    const std::size_t H_a = tokenizer.horizon();
    std::vector<ActionChunk> chunks;
    std::vector<ObservationHistory> histories;
    for (std::size_t n = 0; n < dataset.size(); ++n) {
        const Matrix norm = data::normalize(dataset.trajectories[n], stats);
        if (norm.cols() != tokenizer.dims()) throw ShapeError("dataset action width does not match the tokenizer");
        for (std::size_t t = 0; t + H_a <= norm.rows(); t += stride) {
            ActionChunk c(H_a, norm.cols());
            for (std::size_t i = 0; i < H_a; ++i) {
                for (std::size_t d = 0; d < norm.cols(); ++d) c(i, d) = norm(t + i, d);
            }
            chunks.push_back(std::move(c));
            histories.push_back(history_at(dataset.observations[n], t, H_o));
        }
    }
    const auto tokens = tokenizer.tokenize_batch(chunks);
    std::vector<Example> out;
    out.reserve(tokens.size());
    for (std::size_t i = 0; i < tokens.size(); ++i) out.push_back({std::move(histories[i]), tokens[i]});
    return out;
}

}  // namespace oatok::policy
