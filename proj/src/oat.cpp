// SPDX-License-Identifier: Apache-2.0
#include "oatok/oat.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "oatok/checkpoint.hpp"

namespace oatok::oat {

namespace {

// Batched inference runs in blocks of this many chunks to bound graph memory.
constexpr std::size_t kInferenceBlock = 256;

}  // namespace

std::vector<double> NestedDropoutDist::probabilities(std::size_t H_l) const {
    validate();
    std::vector<double> p(H_l, (1.0 - keep_all_prob) / static_cast<double>(H_l));
    p.back() += keep_all_prob;
    return p;
}

void NestedDropoutDist::validate() const {
    if (!(keep_all_prob >= 0.0 && keep_all_prob <= 1.0)) throw ConfigError("keep_all_prob must lie in [0, 1]");
}

std::size_t sample_prefix_length(const NestedDropoutDist& dist, std::size_t H_l, Rng& rng) {
    if (H_l == 0) throw ConfigError("H_l must be positive");
    if (dist.keep_all_prob >= 1.0) return H_l;
    if (dist.keep_all_prob > 0.0 && rng.uniform() < dist.keep_all_prob) return H_l;
    return 1 + static_cast<std::size_t>(rng.below(H_l));
}

void OatConfig::validate() const {
    levels.validate();
    if (H_a == 0 || D_a == 0) throw ConfigError("H_a and D_a must be positive");
    if (H_l == 0) throw ConfigError("H_l must be at least 1");
    if (enc_layers == 0 || dec_layers == 0) throw ConfigError("encoder and decoder need at least one layer");
    if (head_dim == 0 || model_dim == 0 || model_dim % head_dim != 0) {
        throw ConfigError("model_dim must be a positive multiple of head_dim");
    }
    dropout.validate();
}

nn::AttentionMask build_attention_mask(std::size_t H_a, std::size_t H_l) {
    if (H_a == 0 || H_l == 0) throw ConfigError("H_a and H_l must be positive");
    const std::size_t n = H_a + H_l;
    nn::AttentionMask m(n, n, false);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < H_a; ++j) m.set(i, j, true);
    }
    for (std::size_t i = 0; i < H_l; ++i) {
        for (std::size_t j = 0; j <= i; ++j) m.set(H_a + i, H_a + j, true);
    }
    return m;
}

nn::Tensor apply_tail_dropout(const nn::Tensor& embeddings, std::size_t K, const nn::Tensor& mask) {
    if (K < 1 || K > embeddings.rows) {
        throw BoundsError("prefix length " + std::to_string(K) + " outside [1, " + std::to_string(embeddings.rows) +
                          "]");
    }
    if (mask.rows != 1 || mask.cols != embeddings.cols) throw ShapeError("MASK must be 1 x model_dim");
    nn::Tensor out = embeddings;
    for (std::size_t i = K; i < out.rows; ++i) std::copy(mask.data.begin(), mask.data.end(), out.row(i));
    return out;
}

OatTokenizer::OatTokenizer(OatConfig config, std::uint64_t seed) : config_(std::move(config)), seed_(seed) {
    config_.validate();
    const std::size_t d = config_.model_dim;
    const std::size_t heads = config_.heads();
    Rng rng(mix_seed(seed, 0x0a7));
    action_in_ = nn::Linear::create(store_, "embed", config_.D_a, d, rng);
    for (std::size_t i = 0; i < config_.enc_layers; ++i) {
        encoder_.push_back(nn::EncoderBlock::create(store_, "enc." + std::to_string(i), d, heads, rng));
    }
    enc_norm_ = nn::LayerNorm::create(store_, "enc.norm", d);
    latent_out_ = nn::Linear::create(store_, "enc.latent", d, config_.D_l(), rng);
    registers_ = store_.add("registers", config_.H_l, d, nn::Init::Normal002, rng);
    code_in_ = nn::Linear::create(store_, "dec.code", config_.D_l(), d, rng);
    for (std::size_t i = 0; i < config_.dec_layers; ++i) {
        decoder_.push_back(nn::DecoderBlock::create(store_, "dec." + std::to_string(i), d, heads, rng));
    }
    mask_ = store_.add("mask", 1, d, nn::Init::Normal002, rng);
    out_norm_ = nn::LayerNorm::create(store_, "head.norm", d);
    out_ = nn::Linear::create(store_, "head.out", d, config_.D_a, rng);
    if (config_.flow_decoder) {
        flow_in_ = nn::Linear::create(store_, "flow.in", config_.D_a, d, rng);
        flow_time_ = nn::Linear::create(store_, "flow.time", 1, d, rng);
        for (std::size_t i = 0; i < config_.dec_layers; ++i) {
            flow_decoder_.push_back(nn::DecoderBlock::create(store_, "flow." + std::to_string(i), d, heads, rng));
        }
        flow_norm_ = nn::LayerNorm::create(store_, "flow.norm", d);
        flow_out_ = nn::Linear::create(store_, "flow.out", d, config_.D_a, rng);
    }
    action_pos_ = nn::sinusoidal_table(config_.H_a, d);
    token_pos_ = nn::sinusoidal_table(config_.H_l, d);
    mask_pattern_ = build_attention_mask(config_.H_a, config_.H_l);
}

void OatTokenizer::check_chunk(const ActionChunk& chunk) const {
    if (chunk.horizon() != config_.H_a || chunk.dims() != config_.D_a) {
        throw ShapeError("chunk is " + std::to_string(chunk.horizon()) + "x" + std::to_string(chunk.dims()) +
                         ", tokenizer expects " + std::to_string(config_.H_a) + "x" + std::to_string(config_.D_a));
    }
}

nn::Tensor OatTokenizer::tiled(const nn::Tensor& t, std::size_t batch) const {
    nn::Tensor out(t.rows * batch, t.cols);
    for (std::size_t b = 0; b < batch; ++b) std::copy(t.data.begin(), t.data.end(), out.row(b * t.rows));
    return out;
}

nn::Var OatTokenizer::encoder_trunk(nn::Graph& g, std::span<const ActionChunk> chunks,
                                    const nn::Tensor* registers) const {
    const std::size_t B = chunks.size();
    nn::Tensor x(B * config_.H_a, config_.D_a);
    for (std::size_t b = 0; b < B; ++b) {
        check_chunk(chunks[b]);
        for (std::size_t t = 0; t < config_.H_a; ++t) {
            for (std::size_t c = 0; c < config_.D_a; ++c) {
                x.at(b * config_.H_a + t, c) = static_cast<float>(chunks[b](t, c));
            }
        }
    }
    nn::Var h = action_in_(g, store_, g.constant(std::move(x)));
    h = g.add_tiled(h, g.constant(action_pos_));
    nn::Var regs;
    if (registers) {
        if (registers->rows != config_.H_l || registers->cols != config_.model_dim) {
            throw ShapeError("register override must be H_l x model_dim");
        }
        regs = g.constant(tiled(*registers, B));
    } else {
        regs = g.add_tiled(g.constant(nn::Tensor(B * config_.H_l, config_.model_dim)), g.param(store_, registers_));
    }
    nn::Var s = g.concat_rows(h, regs, B);
    for (const auto& blk : encoder_) s = blk(g, store_, s, B, mask_pattern_);
    return s;
}

nn::Var OatTokenizer::encode_graph(nn::Graph& g, std::span<const ActionChunk> chunks) const {
    const std::size_t B = chunks.size();
    nn::Var s = encoder_trunk(g, chunks, nullptr);
    nn::Var r = g.slice_rows(s, B, config_.H_a + config_.H_l, config_.H_a, config_.H_l);
    return latent_out_(g, store_, enc_norm_(g, store_, r));
}

nn::Var OatTokenizer::decode_memory(nn::Graph& g, nn::Var memory, std::size_t batch) const {
    nn::Var m = g.add_tiled(memory, g.constant(token_pos_));
    nn::Var x = g.constant(tiled(action_pos_, batch));
    for (const auto& blk : decoder_) x = blk(g, store_, x, m, batch);
    return out_(g, store_, out_norm_(g, store_, x));
}

nn::Var OatTokenizer::decode_graph(nn::Graph& g, nn::Var code_emb, std::span<const std::uint8_t> keep,
                                   std::size_t batch) const {
    nn::Var m = g.replace_rows(code_in_(g, store_, code_emb), g.param(store_, mask_), keep);
    return decode_memory(g, m, batch);
}

Matrix OatTokenizer::encode(const ActionChunk& chunk) const {
    nn::Graph g(false);
    const nn::Tensor& z = g.value(encode_graph(g, std::span<const ActionChunk>(&chunk, 1)));
    Matrix out(config_.H_l, config_.D_l());
    for (std::size_t i = 0; i < z.data.size(); ++i) out.data()[i] = z.data[i];
    return out;
}

nn::Tensor OatTokenizer::encoder_states(const ActionChunk& chunk, const nn::Tensor* registers) const {
    nn::Graph g(false);
    return g.value(encoder_trunk(g, std::span<const ActionChunk>(&chunk, 1), registers));
}

std::vector<TokenSequence> OatTokenizer::tokenize_batch(std::span<const ActionChunk> chunks) const {
    std::vector<TokenSequence> out(chunks.size());
    std::vector<double> row(config_.D_l());
    for (std::size_t start = 0; start < chunks.size(); start += kInferenceBlock) {
        const auto part = chunks.subspan(start, std::min(kInferenceBlock, chunks.size() - start));
        nn::Graph g(false);
        const nn::Tensor& z = g.value(encode_graph(g, part));
        for (std::size_t b = 0; b < part.size(); ++b) {
            for (std::size_t i = 0; i < config_.H_l; ++i) {
                for (std::size_t c = 0; c < row.size(); ++c) row[c] = z.at(b * config_.H_l + i, c);
                out[start + b].push_back(fsq::fsq_quantize(row, config_.levels).index);
            }
        }
    }
    return out;
}

TokenSequence OatTokenizer::tokenize(const ActionChunk& chunk) const {
    return tokenize_batch(std::span<const ActionChunk>(&chunk, 1)).front();
}

nn::Tensor OatTokenizer::code_embeddings(std::span<const fsq::FsqCode> codes, std::size_t K) const {
    if (codes.size() != config_.H_l) throw ShapeError("expected H_l codes");
    if (K < 1 || K > config_.H_l) {
        throw BoundsError("prefix length " + std::to_string(K) + " outside [1, " + std::to_string(config_.H_l) + "]");
    }
    nn::Tensor e(config_.H_l, config_.D_l());
    for (std::size_t i = 0; i < K; ++i) {
        const auto v = fsq::code_embedding(codes[i], config_.levels);
        for (std::size_t c = 0; c < v.size(); ++c) e.at(i, c) = static_cast<float>(v[c]);
    }
    nn::Graph g(false);
    const nn::Tensor projected = g.value(code_in_(g, store_, g.constant(std::move(e))));
    nn::Tensor memory(config_.H_l, config_.model_dim);
    std::copy(projected.data.begin(), projected.data.end(), memory.data.begin());
    return apply_tail_dropout(memory, K, store_[mask_].value);
}

nn::Tensor OatTokenizer::token_embeddings(std::span<const TokenId> tokens) const {
    const std::size_t K = tokens.size();
    if (K < 1 || K > config_.H_l) {
        throw BoundsError("prefix length " + std::to_string(K) + " outside [1, " + std::to_string(config_.H_l) + "]");
    }
    const auto V = static_cast<TokenId>(vocab_size());
    std::vector<fsq::FsqCode> codes(config_.H_l, fsq::FsqCode(config_.D_l(), 0));
    for (std::size_t i = 0; i < K; ++i) {
        if (tokens[i] < 0 || tokens[i] >= V) {
            throw VocabularyError("token " + std::to_string(tokens[i]) + " outside vocabulary of size " +
                                  std::to_string(V));
        }
        codes[i] = fsq::index_to_code(tokens[i], config_.levels);
    }
    return code_embeddings(codes, K);
}

ActionChunk OatTokenizer::decode(const nn::Tensor& memory) const {
    if (memory.rows != config_.H_l || memory.cols != config_.model_dim) {
        throw ShapeError("decoder memory must be H_l x model_dim");
    }
    nn::Graph g(false);
    const nn::Tensor& y = g.value(decode_memory(g, g.constant(memory), 1));
    ActionChunk out(config_.H_a, config_.D_a);
    for (std::size_t i = 0; i < y.data.size(); ++i) out.values().data()[i] = y.data[i];
    return out;
}

ActionChunk OatTokenizer::detokenize(std::span<const TokenId> tokens) const {
    return decode(token_embeddings(tokens));
}

std::vector<ActionChunk> OatTokenizer::detokenize_batch(std::span<const TokenSequence> tokens) const {
    std::vector<ActionChunk> out;
    out.reserve(tokens.size());
    for (std::size_t start = 0; start < tokens.size(); start += kInferenceBlock) {
        const auto part = tokens.subspan(start, std::min(kInferenceBlock, tokens.size() - start));
        const std::size_t B = part.size();
        nn::Tensor memory(B * config_.H_l, config_.model_dim);
        for (std::size_t b = 0; b < B; ++b) {
            const nn::Tensor m = token_embeddings(part[b]);
            std::copy(m.data.begin(), m.data.end(), memory.row(b * config_.H_l));
        }
        nn::Graph g(false);
        const nn::Tensor& y = g.value(decode_memory(g, g.constant(std::move(memory)), B));
        for (std::size_t b = 0; b < B; ++b) {
            ActionChunk c(config_.H_a, config_.D_a);
            std::copy(y.row(b * config_.H_a), y.row((b + 1) * config_.H_a), c.values().data().begin());
            out.push_back(std::move(c));
        }
    }
    return out;
}

nn::Var OatTokenizer::flow_graph(nn::Graph& g, nn::Var memory, const nn::Tensor& a_t, std::span<const float> t,
                                 std::size_t batch) const {
    nn::Var m = g.add_tiled(memory, g.constant(token_pos_));
    nn::Tensor times(batch, 1);
    std::copy(t.begin(), t.end(), times.data.begin());
    nn::Var x = flow_in_(g, store_, g.constant(a_t));
    x = g.add_tiled(x, g.constant(action_pos_));
    x = g.add_repeated(x, flow_time_(g, store_, g.constant(std::move(times))), config_.H_a);
    for (const auto& blk : flow_decoder_) x = blk(g, store_, x, m, batch);
    return flow_out_(g, store_, flow_norm_(g, store_, x));
}

void OatTokenizer::require_flow() const {
    if (!config_.flow_decoder) throw FeatureDisabledError("flow decoder is disabled for this tokenizer");
}

TrainResult OatTokenizer::train(std::span<const ActionChunk> chunks, const TrainConfig& train, std::uint64_t seed,
                                const StepCallback& on_step) {
    if (chunks.empty()) throw TrainingError("empty training set");
    if (train.batch_size == 0) throw ConfigError("batch_size must be positive");
    for (const auto& c : chunks) check_chunk(c);
    Rng rng(mix_seed(seed, 0x7a1));
    nn::Adam opt(store_, train.adam);
    TrainResult result;
    const std::size_t B = train.batch_size;
    const std::size_t H_a = config_.H_a;
    const std::size_t D_a = config_.D_a;
    const std::size_t H_l = config_.H_l;
    std::vector<ActionChunk> batch(B);
    std::vector<std::uint8_t> keep(B * H_l);
    for (std::size_t step = 0; step < train.steps; ++step) {
        nn::Tensor target(B * H_a, D_a);
        for (std::size_t b = 0; b < B; ++b) {
            batch[b] = chunks[rng.below(chunks.size())];
            const auto& v = batch[b].values().data();
            for (std::size_t i = 0; i < v.size(); ++i) target.data[b * H_a * D_a + i] = static_cast<float>(v[i]);
            const std::size_t K = sample_prefix_length(config_.dropout, H_l, rng);
            for (std::size_t i = 0; i < H_l; ++i) keep[b * H_l + i] = i < K ? 1 : 0;
        }
        nn::Graph g;
        const nn::Var z = encode_graph(g, batch);
        const nn::Var e = g.fsq_ste(z, config_.levels);
        const nn::Var memory = g.replace_rows(code_in_(g, store_, e), g.param(store_, mask_), keep);
        nn::Var loss = g.mse_loss(decode_memory(g, memory, B), target);
        if (config_.flow_decoder) {
            nn::Tensor a_t(B * H_a, D_a);
            nn::Tensor velocity(B * H_a, D_a);
            std::vector<float> t(B);
            for (std::size_t b = 0; b < B; ++b) {
                t[b] = static_cast<float>(rng.uniform());
                for (std::size_t i = 0; i < H_a * D_a; ++i) {
                    const float eps = static_cast<float>(rng.normal());
                    const float a0 = target.data[b * H_a * D_a + i];
                    a_t.data[b * H_a * D_a + i] = (1.0f - t[b]) * a0 + t[b] * eps;
                    velocity.data[b * H_a * D_a + i] = eps - a0;
                }
            }
            loss = g.add(loss, g.mse_loss(flow_graph(g, memory, a_t, t, B), velocity));
        }
        const double value = g.value(loss).data[0];
        if (!std::isfinite(value)) throw DivergenceError(step, value);
        store_.zero_grad();
        g.backward(loss);
        result.losses.push_back(value);
        result.encoder_grad_norms.push_back(std::sqrt(std::pow(store_.grad_norm("enc."), 2) +
                                                      std::pow(store_.grad_norm("embed"), 2)));
        opt.set_lr(nn::scheduled_lr(train.adam, step, train.steps));
        opt.step(store_);
        if (!store_.all_finite()) throw DivergenceError(step, value);
        if (on_step && !on_step(step, value)) break;
    }
    trained_ = true;
    return result;
}

double OatTokenizer::flow_loss(const ActionChunk& chunk, double t, const Matrix& eps) const {
    require_flow();
    check_chunk(chunk);
    if (eps.rows() != config_.H_a || eps.cols() != config_.D_a) throw ShapeError("noise must be H_a x D_a");
    if (!(t >= 0.0 && t <= 1.0)) throw BoundsError("t must lie in [0, 1]");
    nn::Tensor a_t(config_.H_a, config_.D_a);
    nn::Tensor velocity(config_.H_a, config_.D_a);
    for (std::size_t i = 0; i < a_t.data.size(); ++i) {
        const double a0 = chunk.values().data()[i];
        a_t.data[i] = static_cast<float>((1.0 - t) * a0 + t * eps.data()[i]);
        velocity.data[i] = static_cast<float>(eps.data()[i] - a0);
    }
    nn::Graph g(false);
    const nn::Var e = g.fsq_ste(encode_graph(g, std::span<const ActionChunk>(&chunk, 1)), config_.levels);
    const nn::Var memory = code_in_(g, store_, e);
    const float tf = static_cast<float>(t);
    return g.value(g.mse_loss(flow_graph(g, memory, a_t, std::span<const float>(&tf, 1), 1), velocity)).data[0];
}

ActionChunk OatTokenizer::flow_decode(std::span<const TokenId> tokens, std::size_t n_steps, const Matrix& eps) const {
    require_flow();
    if (n_steps == 0) throw ConfigError("n_steps must be positive");
    if (eps.rows() != config_.H_a || eps.cols() != config_.D_a) throw ShapeError("noise must be H_a x D_a");
    const nn::Tensor memory = token_embeddings(tokens);
    nn::Tensor a(config_.H_a, config_.D_a);
    for (std::size_t i = 0; i < a.data.size(); ++i) a.data[i] = static_cast<float>(eps.data()[i]);
    const float dt = 1.0f / static_cast<float>(n_steps);
    for (std::size_t s = 0; s < n_steps; ++s) {
        const float t = 1.0f - static_cast<float>(s) * dt;
        nn::Graph g(false);
        const nn::Tensor& v = g.value(flow_graph(g, g.constant(memory), a, std::span<const float>(&t, 1), 1));
        for (std::size_t i = 0; i < a.data.size(); ++i) a.data[i] -= dt * v.data[i];
    }
    ActionChunk out(config_.H_a, config_.D_a);
    for (std::size_t i = 0; i < a.data.size(); ++i) out.values().data()[i] = a.data[i];
    return out;
}

nlohmann::json config_to_json(const OatConfig& c) {
    return {{"H_a", c.H_a},
            {"D_a", c.D_a},
            {"H_l", c.H_l},
            {"D_l", c.D_l()},
            {"levels", c.levels.L},
            {"enc_layers", c.enc_layers},
            {"dec_layers", c.dec_layers},
            {"model_dim", c.model_dim},
            {"head_dim", c.head_dim},
            {"keep_all_prob", c.dropout.keep_all_prob},
            {"flow_decoder", c.flow_decoder}};
}

OatConfig config_from_json(const nlohmann::json& j) {
    OatConfig c;
    try {
        c.H_a = j.value("H_a", c.H_a);
        c.D_a = j.value("D_a", c.D_a);
        c.H_l = j.value("H_l", c.H_l);
        if (j.contains("levels")) c.levels.L = j.at("levels").get<std::vector<int>>();
        c.enc_layers = j.value("enc_layers", c.enc_layers);
        c.dec_layers = j.value("dec_layers", c.dec_layers);
        c.model_dim = j.value("model_dim", c.model_dim);
        c.head_dim = j.value("head_dim", c.head_dim);
        c.dropout.keep_all_prob = j.value("keep_all_prob", c.dropout.keep_all_prob);
        if (j.contains("ordered") && !j.at("ordered").get<bool>()) c.dropout.keep_all_prob = 1.0;
        c.flow_decoder = j.value("flow_decoder", c.flow_decoder);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad OAT config: ") + e.what());
    }
    if (j.contains("D_l") && j.at("D_l").get<std::size_t>() != c.D_l()) {
        throw ConfigError("D_l must equal the number of FSQ levels");
    }
    c.validate();
    return c;
}

nlohmann::json OatTokenizer::header() const {
    nlohmann::json h = config_to_json(config_);
    h["scheme"] = "oat";
    h["seed"] = seed_;
    h["ordered"] = config_.dropout.ordered();
    h["trained"] = trained_;
    h["format_version"] = checkpoint::kFormatVersion;
    h["params"] = checkpoint::param_table(store_);
    return h;
}

void OatTokenizer::save(const std::filesystem::path& path) const {
    checkpoint::write(path, header(), store_.serialize());
}

OatTokenizer OatTokenizer::from_checkpoint(const nlohmann::json& header, std::span<const char> blob) {
    if (header.value("scheme", "") != "oat") throw FormatError("not an OAT checkpoint");
    OatTokenizer tok(config_from_json(header), header.value("seed", std::uint64_t{0}));
    checkpoint::File f{header, std::vector<char>(blob.begin(), blob.end())};
    checkpoint::load_params(tok.store_, f);
    tok.trained_ = header.value("trained", true);
    return tok;
}

OatTokenizer OatTokenizer::load(const std::filesystem::path& path) {
    const auto f = checkpoint::read(path);
    return from_checkpoint(f.header, f.blob);
}

}  // namespace oatok::oat
