// SPDX-License-Identifier: Apache-2.0
#include "oatok/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "oatok/random.hpp"

namespace oatok::eval {

MeanStderr mean_stderr(std::span<const double> values) {
    MeanStderr r;
    const std::size_t n = values.size();
    if (n == 0) return r;
    double sum = 0.0;
    for (double v : values) sum += v;
    r.mean = sum / static_cast<double>(n);
    if (n < 2) return r;
    double ss = 0.0;
    for (double v : values) ss += (v - r.mean) * (v - r.mean);
    r.se = std::sqrt(ss / static_cast<double>(n - 1) / static_cast<double>(n));
    return r;
}

namespace {

std::string method_name(const AnyTokenizer& tok) {
    switch (tok.scheme()) {
        case Scheme::Oat: return tok.as_oat()->config().dropout.ordered() ? "OAT" : "OAT[x]";
        case Scheme::Bin: return "Bin";
        case Scheme::Fast: return "FAST";
    }
    return "?";
}

void push_row(ReconReport& r, std::size_t K, std::vector<double> errors) {
    const MeanStderr ms = mean_stderr(errors);
    r.K.push_back(K);
    r.mean.push_back(ms.mean);
    r.se.push_back(ms.se);
    r.per_chunk.push_back(std::move(errors));
}

}  // namespace

nlohmann::json ReconReport::to_json() const {
    return {{"method", method},     {"K", K},
            {"mse_mean", mean},     {"mse_stderr", se},
            {"mean_tokens", mean_tokens}, {"decode_failure_rate", decode_failure_rate},
            {"n_chunks", n_chunks}};
}

ReconReport recon_curve(const AnyTokenizer& tokenizer, std::span<const ActionChunk> heldout) {
    if (heldout.empty()) throw InvalidInputError("recon_curve: empty held-out set");
    ReconReport r;
    r.method = method_name(tokenizer);
    r.n_chunks = heldout.size();

    if (const auto* oat = tokenizer.as_oat()) {
        if (!oat->trained()) throw StateError("recon_curve: OAT tokenizer has not been trained");
        const auto tokens = oat->tokenize_batch(heldout);
        const std::size_t H_l = oat->config().H_l;
        for (std::size_t K = 1; K <= H_l; ++K) {
            std::vector<TokenSequence> prefixes;
            prefixes.reserve(tokens.size());
            for (const auto& t : tokens) prefixes.emplace_back(t.begin(), t.begin() + static_cast<std::ptrdiff_t>(K));
            const auto recon = oat->detokenize_batch(prefixes);
            std::vector<double> errors(heldout.size());
            for (std::size_t i = 0; i < heldout.size(); ++i) errors[i] = mse(recon[i], heldout[i]);
            push_row(r, K, std::move(errors));
        }
        r.mean_tokens = static_cast<double>(H_l);
        return r;
    }

    std::vector<double> errors;
    std::size_t failures = 0;
    double tokens = 0.0;
    for (const auto& chunk : heldout) {
        const TokenSequence ids = tokenizer.tokenize(chunk);
        tokens += static_cast<double>(ids.size());
        auto decoded = tokenizer.detokenize(ids);
        if (const auto* c = std::get_if<ActionChunk>(&decoded)) {
            errors.push_back(mse(*c, chunk));
        } else {
            ++failures;
        }
    }
    r.mean_tokens = tokens / static_cast<double>(heldout.size());
    r.decode_failure_rate = static_cast<double>(failures) / static_cast<double>(heldout.size());
    push_row(r, tokenizer.max_tokens(), std::move(errors));
    return r;
}

nlohmann::json AuditReport::to_json() const {
    return {{"method", method}, {"samples", samples}, {"failures", failures}, {"rate", rate}};
}

std::vector<std::size_t> encoded_lengths(const AnyTokenizer& tokenizer, std::span<const ActionChunk> chunks) {
    std::vector<std::size_t> out;
    out.reserve(chunks.size());
    for (const auto& t : tokenizer.tokenize_batch(chunks)) out.push_back(t.size());
    return out;
}

AuditReport decode_failure_audit(const AnyTokenizer& tokenizer, std::size_t n_samples,
                                 std::span<const std::size_t> lengths, std::uint64_t seed) {
    if (lengths.empty()) throw InvalidInputError("decode_failure_audit: empty length distribution");
    if (const auto* fast = tokenizer.as_fast(); fast != nullptr && fast->vocab().merges().empty()) {
        throw NotApplicableError("decode_failure_audit: FAST vocabulary has no merges");
    }
    AuditReport r;
    r.method = method_name(tokenizer);
    r.samples = n_samples;
    Rng rng(mix_seed(seed, 0xA0D1));
    const std::size_t vocab = tokenizer.vocab_size();
    const std::size_t max_len = tokenizer.max_tokens();
    for (std::size_t s = 0; s < n_samples; ++s) {
        std::size_t len = lengths[rng.below(lengths.size())];
        if (tokenizer.prefix_decodable()) len = std::clamp<std::size_t>(len, 1, max_len);
        TokenSequence ids(len);
        for (auto& id : ids) id = static_cast<TokenId>(rng.below(vocab));
        const auto decoded = tokenizer.detokenize(ids);
        const auto* chunk = std::get_if<ActionChunk>(&decoded);
        if (chunk == nullptr || !chunk->all_finite()) ++r.failures;
    }
    r.rate = n_samples == 0 ? 0.0 : static_cast<double>(r.failures) / static_cast<double>(n_samples);
    return r;
}

AuditReport base_symbol_audit(const fast::FastTokenizer& tokenizer, std::size_t n_samples, std::size_t length,
                              std::uint64_t seed) {
    AuditReport r;
    r.method = "FAST(base)";
    r.samples = n_samples;
    Rng rng(mix_seed(seed, 0xBA5E));
    const std::size_t base = tokenizer.vocab().base_alphabet().size();
    for (std::size_t s = 0; s < n_samples; ++s) {
        TokenSequence ids(length);
        for (auto& id : ids) id = static_cast<TokenId>(rng.below(base));
        if (!std::holds_alternative<ActionChunk>(tokenizer.detokenize(ids))) ++r.failures;
    }
    r.rate = n_samples == 0 ? 0.0 : static_cast<double>(r.failures) / static_cast<double>(n_samples);
    return r;
}

nlohmann::json RolloutReport::to_json() const {
    return {{"method", method},
            {"K", K},
            {"execute_steps", execute_steps},
            {"success_per_seed", per_seed},
            {"success_mean", success_mean},
            {"success_stderr", success_se},
            {"episodes", episodes},
            {"successes", successes},
            {"inferences", inferences},
            {"fallbacks", fallbacks},
            {"steps_per_inference", steps_per_inference}};
}

std::uint64_t episode_seed(std::uint64_t seed, std::size_t episode) {
    return mix_seed(mix_seed(seed, 0xE9150DE), episode);
}

namespace {

void finish(RolloutReport& r) {
    const MeanStderr ms = mean_stderr(r.per_seed);
    r.success_mean = ms.mean;
    r.success_se = ms.se;
}

}  // namespace

RolloutReport closed_loop_eval(const policy::Policy& policy, const data::NormStats& action_stats,
                               const RolloutConfig& config) {
    const AnyTokenizer& tok = policy.tokenizer();
    if (policy.config().obs_dim != env::kObservationDims || tok.dims() != env::kActionDims ||
        action_stats.dims() != env::kActionDims) {
        throw BindingError("policy and environment disagree on observation or action size");
    }
    const std::size_t exec = config.execute_steps == 0 ? policy.execute_steps() : config.execute_steps;
    if (exec == 0 || exec > tok.horizon()) throw ConfigError("execute_steps must lie in [1, H_a]");
    std::size_t K = config.K;
    if (tok.prefix_decodable()) {
        if (K == 0) K = tok.max_tokens();
        if (K > tok.max_tokens()) {
            throw BoundsError("prefix length " + std::to_string(K) + " outside [1, " +
                              std::to_string(tok.max_tokens()) + "]");
        }
    } else if (K != 0 && K != tok.max_tokens()) {
        throw BoundsError(to_string(tok.scheme()) + " policies only decode full sequences");
    }

    RolloutReport r;
    r.method = tok.prefix_decodable() ? method_name(tok) + "[" + std::to_string(K) + "]" : method_name(tok);
    r.K = K;
    r.execute_steps = exec;
    const std::size_t H_o = policy.config().H_o;
    double ar_steps = 0.0;
    for (const std::uint64_t seed : config.seeds) {
        Rng sampler(mix_seed(seed, 0x5A3D));
        std::size_t wins = 0;
        for (std::size_t e = 0; e < config.episodes; ++e) {
            env::ToyEnv env(config.env);
            env.reset(episode_seed(seed, e));
            std::vector<std::vector<double>> seen{env.observation()};
            // Hold position with the gripper open until the first chunk runs.
            Matrix last(1, env::kActionDims);
            last(0, 0) = env.state().position[0];
            last(0, 1) = env.state().position[1];
            last(0, 2) = -1.0;
            Matrix last_norm = data::normalize(last, action_stats);
            while (!env.done()) {
                Matrix hist(H_o, env::kObservationDims);
                for (std::size_t i = 0; i < H_o; ++i) {
                    const std::size_t back = H_o - 1 - i;
                    const auto& o = seen[seen.size() > back ? seen.size() - 1 - back : 0];
                    std::copy(o.begin(), o.end(), hist.row(i).begin());
                }
                const auto inf = policy.infer(hist, K, last_norm.row(0), &sampler);
                ++r.inferences;
                if (inf.fallback) ++r.fallbacks;
                ar_steps += static_cast<double>(policy::autoregressive_step_count(tok, K, inf.tokens));
                const ActionChunk actions = data::denormalize(inf.chunk, action_stats);
                for (std::size_t i = 0; i < exec && !env.done(); ++i) {
                    env.step(actions.values().row(i));
                    seen.push_back(env.observation());
                    std::copy(inf.chunk.values().row(i).begin(), inf.chunk.values().row(i).end(),
                              last_norm.row(0).begin());
                }
            }
            if (env.success()) ++wins;
        }
        r.successes += wins;
        r.episodes += config.episodes;
        r.per_seed.push_back(config.episodes == 0 ? 0.0
                                                  : static_cast<double>(wins) / static_cast<double>(config.episodes));
    }
    r.steps_per_inference = r.inferences == 0 ? 0.0 : ar_steps / static_cast<double>(r.inferences);
    finish(r);
    return r;
}

RolloutReport expert_eval(const RolloutConfig& config) {
    RolloutReport r;
    r.method = "expert";
    r.execute_steps = 1;
    for (const std::uint64_t seed : config.seeds) {
        std::size_t wins = 0;
        for (std::size_t e = 0; e < config.episodes; ++e) {
            env::ToyEnv env(config.env);
            env.reset(episode_seed(seed, e));
            while (!env.done()) {
                const auto a = env::expert_action(env.state(), config.env);
                env.step(a);
                ++r.inferences;
            }
            if (env.success()) ++wins;
        }
        r.successes += wins;
        r.episodes += config.episodes;
        r.per_seed.push_back(config.episodes == 0 ? 0.0
                                                  : static_cast<double>(wins) / static_cast<double>(config.episodes));
    }
    finish(r);
    return r;
}

PipelineResult run_pipeline(const data::TrajectoryDataset& train, const data::TrajectoryDataset& heldout,
                            const PipelineConfig& config, std::uint64_t seed) {
    if (train.observations.size() != train.trajectories.size() || train.size() == 0) {
        throw InvalidInputError("pipeline needs a point-mass training set with observations");
    }
    const std::size_t H_a = config.tokenizer.H_a;
    const data::NormStats stats = data::fit_normalizer(train);
    const auto chunks = data::normalized_chunks(train, stats, H_a, config.chunk_stride);

    PipelineResult out;
    oat::OatTokenizer tok(config.tokenizer, mix_seed(seed, 1));
    tok.train(chunks, config.tokenizer_train, mix_seed(seed, 2));
    if (heldout.size() > 0) {
        const auto held = data::normalized_chunks(heldout, stats, H_a, config.recon_stride);
        out.recon = recon_curve(AnyTokenizer(tok), held);
    }

    policy::Policy pol(AnyTokenizer(tok), config.policy, mix_seed(seed, 3));
    const auto examples = policy::build_examples(train, stats, pol.tokenizer(), config.policy.H_o,
                                                 config.example_stride);
    pol.train(examples, config.policy_train, mix_seed(seed, 4));
    pol.action_stats = stats;

    if (config.rollout.episodes > 0 && !config.rollout.seeds.empty()) {
        std::vector<std::size_t> Ks = config.rollout_K;
        if (Ks.empty()) Ks.push_back(config.tokenizer.H_l);
        for (std::size_t K : Ks) {
            RolloutConfig rc = config.rollout;
            rc.K = K;
            out.rollouts.push_back(closed_loop_eval(pol, stats, rc));
        }
    }
    out.tokenizer = std::move(tok);
    out.policy = std::move(pol);
    return out;
}

nlohmann::json AblationReport::to_json() const {
    nlohmann::json o = nlohmann::json::array();
    nlohmann::json u = nlohmann::json::array();
    for (const auto& r : ordered_rollouts) o.push_back(r.to_json());
    for (const auto& r : unordered_rollouts) u.push_back(r.to_json());
    return {{"ordered", {{"recon", ordered.to_json()}, {"rollouts", o}}},
            {"unordered", {{"recon", unordered.to_json()}, {"rollouts", u}}}};
}

AblationReport ablation_no_ordering(const data::TrajectoryDataset& train, const data::TrajectoryDataset& heldout,
                                    const PipelineConfig& config, std::uint64_t seed) {
    PipelineConfig ordered = config;
    if (!ordered.tokenizer.dropout.ordered()) ordered.tokenizer.dropout.keep_all_prob = 0.0;
    PipelineConfig unordered = config;
    unordered.tokenizer.dropout.keep_all_prob = 1.0;

    AblationReport r;
    auto a = run_pipeline(train, heldout, ordered, seed);
    auto b = run_pipeline(train, heldout, unordered, seed);
    r.ordered = std::move(a.recon);
    r.unordered = std::move(b.recon);
    r.ordered_rollouts = std::move(a.rollouts);
    r.unordered_rollouts = std::move(b.rollouts);
    return r;
}

namespace {

const std::vector<fsq::FsqLevels>& sweep_levels() {
    static const std::vector<fsq::FsqLevels> levels{
        {{8, 6, 5}}, {{8, 8, 8}}, {{8, 5, 5, 5}}, {{8, 8, 6, 5}}, {{7, 5, 5, 5, 5}}};
    return levels;
}

}  // namespace

std::vector<CodebookRow> codebook_sweep(std::span<const fsq::FsqLevels> levels, const data::TrajectoryDataset& train,
                                        const data::TrajectoryDataset& heldout, const PipelineConfig& config,
                                        std::uint64_t seed) {
    const auto& allowed = sweep_levels();
    for (const auto& l : levels) {
        if (std::find(allowed.begin(), allowed.end(), l) == allowed.end()) {
            throw ConfigError("codebook_sweep: level set is not one of the five sweep configurations");
        }
    }
    std::vector<CodebookRow> rows;
    for (const auto& l : levels) {
        PipelineConfig c = config;
        c.tokenizer.levels = l;
        c.rollout_K = {c.tokenizer.H_l};
        auto res = run_pipeline(train, heldout, c, seed);
        CodebookRow row;
        row.levels = l;
        row.vocab_size = fsq::codebook_size(l);
        if (!res.recon.mean.empty()) {
            row.recon_mse = res.recon.mean.back();
            row.recon_se = res.recon.se.back();
        }
        if (!res.rollouts.empty()) row.rollout = res.rollouts.front();
        rows.push_back(std::move(row));
    }
    return rows;
}

std::string to_string(Regime r) { return r == Regime::HalfHorizon ? "half-H_a" : "fixed-8"; }

std::vector<HorizonCell> horizon_sweep(std::span<const std::size_t> H_a, std::span<const std::size_t> H_l,
                                       const data::TrajectoryDataset& train, const PipelineConfig& config,
                                       std::uint64_t seed) {
    for (std::size_t a : H_a) {
        for (std::size_t l : H_l) {
            if (l > a) {
                throw ConfigError("horizon_sweep: H_l = " + std::to_string(l) + " exceeds H_a = " + std::to_string(a));
            }
        }
        if (train.size() > 0 && train.trajectories.front().rows() < a) {
            throw ConfigError("horizon_sweep: trajectories shorter than H_a = " + std::to_string(a));
        }
    }
    const data::TrajectoryDataset none;
    std::vector<HorizonCell> cells;
    std::size_t index = 0;
    for (std::size_t a : H_a) {
        for (std::size_t l : H_l) {
            PipelineConfig c = config;
            c.tokenizer.H_a = a;
            c.tokenizer.H_l = l;
            c.policy.execute_steps = 0;
            c.rollout.episodes = 0;
            auto res = run_pipeline(train, none, c, mix_seed(seed, index++));
            for (Regime regime : {Regime::HalfHorizon, Regime::Fixed8}) {
                RolloutConfig rc = config.rollout;
                rc.K = l;
                rc.execute_steps = regime == Regime::HalfHorizon ? std::max<std::size_t>(1, a / 2)
                                                                 : std::min<std::size_t>(8, a);
                HorizonCell cell{a, l, regime, rc.execute_steps, 0.0, 0.0};
                if (rc.episodes > 0 && !rc.seeds.empty()) {
                    const auto rep = closed_loop_eval(*res.policy, *res.policy->action_stats, rc);
                    cell.success_mean = rep.success_mean;
                    cell.success_se = rep.success_se;
                }
                cells.push_back(cell);
            }
        }
    }
    return cells;
}

std::vector<StepCountRow> step_count_report(std::span<const AnyTokenizer> tokenizers,
                                            std::span<const std::size_t> oat_K, std::span<const ActionChunk> chunks,
                                            bool time_it) {
    using Clock = std::chrono::steady_clock;
    std::vector<StepCountRow> rows;
    for (const auto& tok : tokenizers) {
        const auto tokens = tok.tokenize_batch(chunks);
        if (tok.prefix_decodable()) {
            for (std::size_t K : oat_K) {
                if (K < 1 || K > tok.max_tokens()) throw BoundsError("OAT prefix length out of range");
                StepCountRow row{method_name(tok) + "[" + std::to_string(K) + "]",
                                 static_cast<double>(policy::autoregressive_step_count(tok, K)), 0.0};
                if (time_it && !tokens.empty()) {
                    const auto t0 = Clock::now();
                    for (const auto& t : tokens) (void)tok.detokenize(std::span(t).first(K));
                    row.wall_ms = std::chrono::duration<double, std::milli>(Clock::now() - t0).count() /
                                  static_cast<double>(tokens.size());
                }
                rows.push_back(row);
            }
            continue;
        }
        double total = 0.0;
        for (const auto& t : tokens) total += static_cast<double>(policy::autoregressive_step_count(tok, 0, t));
        StepCountRow row{method_name(tok), tokens.empty() ? 0.0 : total / static_cast<double>(tokens.size()), 0.0};
        if (time_it && !tokens.empty()) {
            const auto t0 = Clock::now();
            for (const auto& t : tokens) (void)tok.detokenize(t);
            row.wall_ms = std::chrono::duration<double, std::milli>(Clock::now() - t0).count() /
                          static_cast<double>(tokens.size());
        }
        rows.push_back(row);
    }
    return rows;
}

std::string fmt(double v, int precision) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", precision, v);
    return buf;
}

std::string Table::text() const {
    std::vector<std::size_t> width(header.size(), 0);
    for (std::size_t c = 0; c < header.size(); ++c) width[c] = header[c].size();
    for (const auto& row : rows) {
        for (std::size_t c = 0; c < row.size() && c < width.size(); ++c) width[c] = std::max(width[c], row[c].size());
    }
    std::ostringstream out;
    auto line = [&](const std::vector<std::string>& cells) {
        for (std::size_t c = 0; c < width.size(); ++c) {
            const std::string cell = c < cells.size() ? cells[c] : "";
            const std::string pad(width[c] - cell.size(), ' ');
            if (c > 0) out << "  ";
            // First column left-aligned, the rest right-aligned.
            out << (c == 0 ? cell + pad : pad + cell);
        }
        out << '\n';
    };
    line(header);
    std::size_t total = 0;
    for (std::size_t w : width) total += w;
    out << std::string(total + 2 * (width.empty() ? 0 : width.size() - 1), '-') << '\n';
    for (const auto& row : rows) line(row);
    return out.str();
}

std::string Table::csv() const {
    std::ostringstream out;
    auto line = [&](const std::vector<std::string>& cells) {
        for (std::size_t c = 0; c < cells.size(); ++c) {
            if (c > 0) out << ',';
            const bool quote = cells[c].find_first_of(",\"") != std::string::npos;
            if (!quote) {
                out << cells[c];
                continue;
            }
            out << '"';
            for (char ch : cells[c]) out << (ch == '"' ? "\"\"" : std::string(1, ch));
            out << '"';
        }
        out << '\n';
    };
    line(header);
    for (const auto& row : rows) line(row);
    return out.str();
}

namespace {

std::string levels_string(const fsq::FsqLevels& l) {
    std::string s = "[";
    for (std::size_t i = 0; i < l.L.size(); ++i) s += (i ? "," : "") + std::to_string(l.L[i]);
    return s + "]";
}

}  // namespace

Table recon_table(std::span<const ReconReport> reports) {
    Table t;
    t.header = {"method", "K", "mse", "stderr", "tokens", "decode_fail"};
    for (const auto& r : reports) {
        for (std::size_t i = 0; i < r.K.size(); ++i) {
            t.rows.push_back({r.method, std::to_string(r.K[i]), fmt(r.mean[i], 6), fmt(r.se[i], 6),
                              fmt(r.mean_tokens, 2), fmt(r.decode_failure_rate, 4)});
        }
    }
    return t;
}

Table rollout_table(std::span<const RolloutReport> reports) {
    Table t;
    t.header = {"method", "K", "exec", "success", "stderr", "episodes", "steps/inf", "fallbacks"};
    for (const auto& r : reports) {
        t.rows.push_back({r.method, std::to_string(r.K), std::to_string(r.execute_steps), fmt(r.success_mean, 4),
                          fmt(r.success_se, 4), std::to_string(r.episodes), fmt(r.steps_per_inference, 2),
                          std::to_string(r.fallbacks)});
    }
    return t;
}

Table codebook_table(std::span<const CodebookRow> rows) {
    Table t;
    t.header = {"levels", "|V|", "recon_mse", "stderr", "success", "success_se"};
    for (const auto& r : rows) {
        t.rows.push_back({levels_string(r.levels), std::to_string(r.vocab_size), fmt(r.recon_mse, 6),
                          fmt(r.recon_se, 6), r.rollout ? fmt(r.rollout->success_mean, 4) : "-",
                          r.rollout ? fmt(r.rollout->success_se, 4) : "-"});
    }
    return t;
}

Table horizon_table(std::span<const HorizonCell> cells) {
    Table t;
    t.header = {"regime", "H_a", "H_l", "exec", "success", "stderr"};
    for (const auto& c : cells) {
        t.rows.push_back({to_string(c.regime), std::to_string(c.H_a), std::to_string(c.H_l),
                          std::to_string(c.execute_steps), fmt(c.success_mean, 4), fmt(c.success_se, 4)});
    }
    return t;
}

Table step_count_table(std::span<const StepCountRow> rows, bool with_time) {
    Table t;
    t.header = {"method", "steps"};
    if (with_time) t.header.push_back("ms/inference");
    for (const auto& r : rows) {
        std::vector<std::string> cells{r.method, fmt(r.steps, 2)};
        if (with_time) cells.push_back(fmt(r.wall_ms, 4));
        t.rows.push_back(std::move(cells));
    }
    return t;
}

nlohmann::json to_json(const CodebookRow& row) {
    nlohmann::json j{{"levels", row.levels.L},
                     {"vocab_size", row.vocab_size},
                     {"recon_mse", row.recon_mse},
                     {"recon_stderr", row.recon_se}};
    j["rollout"] = row.rollout ? row.rollout->to_json() : nlohmann::json(nullptr);
    return j;
}

nlohmann::json to_json(const HorizonCell& cell) {
    return {{"H_a", cell.H_a},
            {"H_l", cell.H_l},
            {"regime", to_string(cell.regime)},
            {"execute_steps", cell.execute_steps},
            {"success_mean", cell.success_mean},
            {"success_stderr", cell.success_se}};
}

nlohmann::json to_json(const StepCountRow& row, bool with_time) {
    nlohmann::json j{{"method", row.method}, {"steps", row.steps}};
    if (with_time) j["wall_ms"] = row.wall_ms;
    return j;
}

}  // namespace oatok::eval
