// SPDX-License-Identifier: Apache-2.0
#include "oatok/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "oatok/checkpoint.hpp"
#include "oatok/config.hpp"
#include "oatok/eval.hpp"
#include "oatok/json_io.hpp"
#include "oatok/random.hpp"
#include "oatok/tokenizer.hpp"

#ifndef OATOK_GIT_DESCRIBE
#define OATOK_GIT_DESCRIBE "unknown"
#endif

namespace oatok::cli {

std::string git_describe() { return OATOK_GIT_DESCRIBE; }

namespace {

namespace fs = std::filesystem;

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Every option of every subcommand; each subcommand binds the fields it uses.
struct Options {
    std::optional<std::uint64_t> seed;
    std::string config;
    std::vector<std::string> sets;
    std::string out;

    std::string family;
    std::optional<std::size_t> n_trajectories, T, D_a;
    std::optional<double> noise;

    std::string data, heldout, norm, tokenizer_path, tokens_path, policy_path;
    std::vector<std::string> tokenizers;

    std::string scheme, binding;
    bool no_nested_dropout = false;
    std::optional<std::size_t> steps, batch_size, H_a, H_l, N, vocab_size, episodes, samples, stride;
    std::optional<double> lr, gamma;
    std::optional<std::string> levels;
    std::optional<std::size_t> prefix, execute_steps;
    std::vector<std::uint64_t> seeds;

    std::string sweep_kind;
    std::vector<std::string> sweep_levels;
    std::vector<std::size_t> sweep_H_a, sweep_H_l;
    std::vector<std::size_t> prefixes;
    bool timing = false;
};

// Resolved run state shared by the command bodies.
struct Run {
    std::string command;
    std::vector<std::string> args;
    Options opt;
    std::uint64_t seed = 0;
    Json config_json;
    RunConfig cfg;
    fs::path out;
    Json inputs = Json::object();
    Json outputs = Json::array();

    void input(const std::string& name, const std::string& path) { inputs[name] = path; }
    fs::path output(const std::string& name) {
        outputs.push_back(name);
        return out / name;
    }
};

void set_path(Json& root, const std::string& dotted, const Json& value) {
    Json* node = &root;
    std::stringstream ss(dotted);
    std::string part;
    std::vector<std::string> parts;
    while (std::getline(ss, part, '.')) parts.push_back(part);
    if (parts.empty()) throw UsageError("empty override path");
    for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
        Json& next = (*node)[parts[i]];
        if (next.is_null()) next = Json::object();
        if (!next.is_object()) throw UsageError("override path '" + dotted + "' crosses a non-object");
        node = &next;
    }
    (*node)[parts.back()] = value;
}

Json parse_value(const std::string& text) {
    try {
        return Json::parse(text);
    } catch (const Json::parse_error&) {
        return text;
    }
}

std::vector<int> parse_levels(const std::string& text) {
    std::vector<int> out;
    std::stringstream ss(text);
    std::string part;
    while (std::getline(ss, part, ',')) {
        try {
            std::size_t used = 0;
            const int v = std::stoi(part, &used);
            if (used != part.size()) throw std::invalid_argument(part);
            out.push_back(v);
        } catch (const std::exception&) {
            throw UsageError("levels must be comma-separated integers, got '" + text + "'");
        }
    }
    if (out.empty()) throw UsageError("empty level list");
    return out;
}

std::uint64_t resolve_seed(const Options& opt) {
    if (opt.seed) return *opt.seed;
    if (const char* env = std::getenv("OATOK_SEED"); env != nullptr && *env != '\0') {
        try {
            std::size_t used = 0;
            const unsigned long long v = std::stoull(env, &used);
            if (used != std::string(env).size()) throw std::invalid_argument(env);
            return v;
        } catch (const std::exception&) {
            throw UsageError(std::string("OATOK_SEED must be an unsigned integer, got '") + env + "'");
        }
    }
    return 0;
}

// Config file, then named flags, then --set overrides.
void resolve_config(Run& run) {
    const Options& o = run.opt;
    Json j = Json::object();
    if (!o.config.empty()) {
        j = read_json_file(o.config);
        run.input("config", o.config);
    }
    auto named = [&](const char* path, const auto& value) {
        if (value) set_path(j, path, *value);
    };
    if (!o.family.empty()) set_path(j, "data.family", o.family);
    named("data.n_trajectories", o.n_trajectories);
    named("data.T", o.T);
    named("data.D_a", o.D_a);
    named("data.noise_std", o.noise);
    named("H_a", o.H_a);
    named("oat.H_l", o.H_l);
    if (o.levels) set_path(j, "oat.levels", parse_levels(*o.levels));
    if (o.no_nested_dropout) set_path(j, "oat.keep_all_prob", 1.0);
    named("bin.N", o.N);
    named("fast.vocab_size", o.vocab_size);
    named("fast.gamma", o.gamma);
    const std::string train = run.command == "train-policy" ? "policy_train" : "oat_train";
    named((train + ".steps").c_str(), o.steps);
    named((train + ".batch_size").c_str(), o.batch_size);
    named((train + ".adam.lr").c_str(), o.lr);
    named("rollout.episodes", o.episodes);
    if (!o.seeds.empty()) set_path(j, "rollout.seeds", o.seeds);
    named("audit_samples", o.samples);
    named("recon_stride", o.stride);
    for (const auto& s : o.sets) {
        const auto eq = s.find('=');
        if (eq == std::string::npos || eq == 0) throw UsageError("--set expects key.path=value, got '" + s + "'");
        set_path(j, s.substr(0, eq), parse_value(s.substr(eq + 1)));
    }
    run.cfg = run_config_from_json(j);
    run.config_json = to_json(run.cfg);
}

void write_manifest(const Run& run) {
    Json m{{"command", run.command},
           {"args", run.args},
           {"config_path", run.opt.config.empty() ? Json(nullptr) : Json(run.opt.config)},
           {"config", run.config_json},
           {"seed", run.seed},
           {"inputs", run.inputs},
           {"outputs", run.outputs},
           {"git_describe", git_describe()},
           {"format_version", checkpoint::kFormatVersion}};
    write_json_file(run.out / "manifest.json", m);
}

data::TrajectoryDataset load_data(Run& run, const std::string& path, const char* name = "data") {
    if (path.empty()) throw UsageError(std::string("--") + name + " is required");
    run.input(name, path);
    return data::load_dataset(path);
}

data::NormStats load_norm(Run& run, const data::TrajectoryDataset& ds) {
    if (run.opt.norm.empty()) return data::fit_normalizer(ds);
    run.input("norm", run.opt.norm);
    return data::load_norm_stats(run.opt.norm);
}

AnyTokenizer load_tokenizer(Run& run) {
    if (run.opt.tokenizer_path.empty()) throw UsageError("--tokenizer is required");
    run.input("tokenizer", run.opt.tokenizer_path);
    return AnyTokenizer::load(run.opt.tokenizer_path);
}

std::vector<ActionChunk> chunks_for(const AnyTokenizer& tok, const data::TrajectoryDataset& ds,
                                    const data::NormStats& stats, std::size_t stride) {
    if (ds.dims() != tok.dims()) {
        throw ShapeError("dataset has " + std::to_string(ds.dims()) + " action dims, tokenizer expects " +
                         std::to_string(tok.dims()));
    }
    return data::normalized_chunks(ds, stats, tok.horizon(), stride);
}

void emit(Run& run, const std::string& stem, const Json& json, const eval::Table& table, bool csv = false) {
    write_json_file(run.output(stem + ".json"), json);
    write_text_file(run.output(stem + ".txt"), table.text());
    if (csv) write_text_file(run.output(stem + ".csv"), table.csv());
    std::cout << table.text();
}

auto progress(const char* what) {
    return [what](std::size_t step, double loss) {
        if (step % 100 == 0) std::cerr << what << " step " << step << " loss " << eval::fmt(loss, 6) << '\n';
        return true;
    };
}

// ---- commands --------------------------------------------------------------

void cmd_generate_data(Run& run) {
    const auto ds = data::generate_synthetic_dataset(run.cfg.data, run.seed);
    data::save_dataset(run.output("dataset.jsonl"), ds);
    run.outputs.push_back(data::metadata_path("dataset.jsonl").string());
}

void cmd_fit_normalizer(Run& run) {
    const auto ds = load_data(run, run.opt.data);
    data::save_norm_stats(run.output("norm.json"), data::fit_normalizer(ds));
}

void cmd_train_tokenizer(Run& run) {
    const Scheme scheme = scheme_from_string(run.opt.scheme);
    if (run.opt.no_nested_dropout && scheme != Scheme::Oat) {
        throw UsageError("--no-nested-dropout only applies to --scheme oat");
    }
    const auto ds = load_data(run, run.opt.data);
    const auto stats = load_norm(run, ds);
    const auto chunks = data::normalized_chunks(ds, stats, run.cfg.H_a, run.cfg.chunk_stride);
    data::save_norm_stats(run.output("norm.json"), stats);
    const fs::path ckpt = run.output("tokenizer.ckpt");
    switch (scheme) {
        case Scheme::Oat: {
            oat::OatConfig c = run.cfg.oat;
            c.H_a = run.cfg.H_a;
            c.D_a = ds.dims();
            oat::OatTokenizer tok(c, mix_seed(run.seed, 1));
            const auto result = tok.train(chunks, run.cfg.oat_train, mix_seed(run.seed, 2), progress("tokenizer"));
            tok.save(ckpt);
            write_json_file(run.output("train_log.json"),
                            {{"loss", result.losses}, {"encoder_grad_norm", result.encoder_grad_norms}});
            break;
        }
        case Scheme::Bin:
            AnyTokenizer(BinTokenizer{run.cfg.bin, run.cfg.H_a, ds.dims()}).save(ckpt);
            break;
        case Scheme::Fast: {
            fast::FastConfig c = run.cfg.fast;
            c.H_a = run.cfg.H_a;
            c.D_a = ds.dims();
            AnyTokenizer(fast::FastTokenizer::fit(chunks, c)).save(ckpt);
            break;
        }
    }
}

void cmd_tokenize(Run& run) {
    const auto tok = load_tokenizer(run);
    const auto ds = load_data(run, run.opt.data);
    const auto stats = load_norm(run, ds);
    const auto chunks = chunks_for(tok, ds, stats, run.cfg.recon_stride);
    write_json_file(run.output("tokens.json"), {{"scheme", to_string(tok.scheme())},
                                                {"H_a", tok.horizon()},
                                                {"D_a", tok.dims()},
                                                {"stride", run.cfg.recon_stride},
                                                {"tokens", tok.tokenize_batch(chunks)}});
}

void check_prefix(const AnyTokenizer& tok, std::optional<std::size_t> prefix) {
    if (!prefix) return;
    if (tok.prefix_decodable()) {
        if (*prefix < 1 || *prefix > tok.max_tokens()) {
            throw UsageError("--prefix " + std::to_string(*prefix) + " out of bounds: must lie in [1, " +
                             std::to_string(tok.max_tokens()) + "] (H_l)");
        }
    } else {
        throw UsageError("--prefix requires an OAT tokenizer; " + to_string(tok.scheme()) +
                         " only decodes full sequences");
    }
}

void cmd_detokenize(Run& run) {
    const auto tok = load_tokenizer(run);
    check_prefix(tok, run.opt.prefix);
    if (run.opt.tokens_path.empty()) throw UsageError("--tokens is required");
    run.input("tokens", run.opt.tokens_path);
    const Json in = read_json_file(run.opt.tokens_path);
    std::vector<TokenSequence> seqs;
    try {
        seqs = in.at("tokens").get<std::vector<TokenSequence>>();
    } catch (const Json::exception& e) {
        throw FormatError(std::string("token file: ") + e.what());
    }
    Json chunks = Json::array();
    std::size_t failures = 0;
    for (const auto& s : seqs) {
        std::span<const TokenId> ids(s);
        if (run.opt.prefix) {
            if (s.size() < *run.opt.prefix) throw BoundsError("token sequence shorter than --prefix");
            ids = ids.first(*run.opt.prefix);
        }
        const auto decoded = tok.detokenize(ids);
        if (const auto* c = std::get_if<ActionChunk>(&decoded)) {
            chunks.push_back(matrix_to_json(c->values()));
        } else {
            chunks.push_back(nullptr);
            ++failures;
        }
    }
    write_json_file(run.output("chunks.json"),
                    {{"scheme", to_string(tok.scheme())},
                     {"prefix", run.opt.prefix ? Json(*run.opt.prefix) : Json(nullptr)},
                     {"units", "normalized"},
                     {"failures", failures},
                     {"chunks", chunks}});
}

void cmd_eval_recon(Run& run) {
    const auto tok = load_tokenizer(run);
    const auto ds = load_data(run, run.opt.data);
    const auto stats = load_norm(run, ds);
    const auto report = eval::recon_curve(tok, chunks_for(tok, ds, stats, run.cfg.recon_stride));
    emit(run, "recon", report.to_json(), eval::recon_table(std::span(&report, 1)));
}

void cmd_audit_decode(Run& run) {
    const auto tok = load_tokenizer(run);
    const auto ds = load_data(run, run.opt.data);
    const auto stats = load_norm(run, ds);
    const auto lengths = eval::encoded_lengths(tok, chunks_for(tok, ds, stats, run.cfg.recon_stride));
    std::vector<eval::AuditReport> reports{eval::decode_failure_audit(tok, run.cfg.audit_samples, lengths, run.seed)};
    if (const auto* fast = tok.as_fast()) {
        reports.push_back(eval::base_symbol_audit(*fast, run.cfg.audit_samples, fast->stream_length(), run.seed));
    }
    Json j = Json::array();
    eval::Table t;
    t.header = {"method", "samples", "failures", "rate"};
    for (const auto& r : reports) {
        j.push_back(r.to_json());
        t.rows.push_back({r.method, std::to_string(r.samples), std::to_string(r.failures), eval::fmt(r.rate, 6)});
    }
    emit(run, "audit", {{"audits", j}, {"lengths", lengths}}, t);
}

void cmd_train_policy(Run& run) {
    auto tok = load_tokenizer(run);
    if (run.opt.binding.empty()) throw UsageError("--binding is required");
    const Scheme binding = scheme_from_string(run.opt.binding);
    if (binding != tok.scheme()) {
        throw BindingError("--binding " + run.opt.binding + " does not match the " + to_string(tok.scheme()) +
                           " tokenizer checkpoint");
    }
    const auto ds = load_data(run, run.opt.data);
    const auto stats = load_norm(run, ds);
    const auto examples = policy::build_examples(ds, stats, tok, run.cfg.policy.H_o, run.cfg.example_stride);
    policy::Policy pol(std::move(tok), run.cfg.policy, mix_seed(run.seed, 3));
    const auto losses = pol.train(examples, run.cfg.policy_train, mix_seed(run.seed, 4), progress("policy"));
    pol.action_stats = stats;
    pol.save(run.output("policy.ckpt"));
    write_json_file(run.output("train_log.json"), {{"loss", losses}, {"examples", examples.size()}});
}

void cmd_rollout(Run& run) {
    if (run.opt.policy_path.empty()) throw UsageError("--policy is required");
    run.input("policy", run.opt.policy_path);
    const auto pol = policy::Policy::load(run.opt.policy_path);
    check_prefix(pol.tokenizer(), run.opt.prefix);
    if (run.opt.execute_steps &&
        (*run.opt.execute_steps == 0 || *run.opt.execute_steps > pol.tokenizer().horizon())) {
        throw UsageError("--execute-steps must lie in [1, " + std::to_string(pol.tokenizer().horizon()) + "]");
    }
    if (!pol.action_stats) throw StateError("policy checkpoint carries no action normalization");
    eval::RolloutConfig rc = run.cfg.rollout;
    rc.K = run.opt.prefix.value_or(0);
    rc.execute_steps = run.opt.execute_steps.value_or(0);
    const auto report = eval::closed_loop_eval(pol, *pol.action_stats, rc);
    emit(run, "rollout", report.to_json(), eval::rollout_table(std::span(&report, 1)));
}

void cmd_sweep(Run& run) {
    const auto train = load_data(run, run.opt.data);
    eval::PipelineConfig pc = run.cfg.pipeline();
    pc.tokenizer.D_a = train.dims();
    if (run.opt.sweep_kind == "codebook") {
        if (run.opt.heldout.empty()) throw UsageError("sweep codebook needs --heldout");
        const auto held = load_data(run, run.opt.heldout, "heldout");
        std::vector<fsq::FsqLevels> levels;
        for (const auto& s : run.opt.sweep_levels) levels.push_back(fsq::FsqLevels{parse_levels(s)});
        if (levels.empty()) levels = {{{8, 6, 5}}, {{8, 8, 8}}, {{8, 5, 5, 5}}, {{8, 8, 6, 5}}, {{7, 5, 5, 5, 5}}};
        const auto rows = eval::codebook_sweep(levels, train, held, pc, run.seed);
        Json j = Json::array();
        for (const auto& r : rows) j.push_back(eval::to_json(r));
        emit(run, "codebook", {{"rows", j}}, eval::codebook_table(rows), true);
        return;
    }
    std::vector<std::size_t> H_a = run.opt.sweep_H_a, H_l = run.opt.sweep_H_l;
    if (H_a.empty()) H_a = {8, 16, 32, 64};
    if (H_l.empty()) H_l = {1, 2, 4, 8};
    const auto cells = eval::horizon_sweep(H_a, H_l, train, pc, run.seed);
    Json j = Json::array();
    for (const auto& c : cells) j.push_back(eval::to_json(c));
    emit(run, "horizon", {{"shape", {H_a.size(), H_l.size(), 2}}, {"cells", j}}, eval::horizon_table(cells), true);
}

void cmd_report(Run& run) {
    if (run.opt.tokenizers.empty()) throw UsageError("report needs at least one --tokenizer");
    std::vector<AnyTokenizer> toks;
    for (std::size_t i = 0; i < run.opt.tokenizers.size(); ++i) {
        run.input("tokenizer" + std::to_string(i), run.opt.tokenizers[i]);
        toks.push_back(AnyTokenizer::load(run.opt.tokenizers[i]));
    }
    const auto ds = load_data(run, run.opt.data);
    const auto stats = load_norm(run, ds);
    const auto chunks = chunks_for(toks.front(), ds, stats, run.cfg.recon_stride);
    std::vector<std::size_t> prefixes = run.opt.prefixes;
    if (prefixes.empty()) prefixes = {1, 2, 4, 8};
    const auto rows = eval::step_count_report(toks, prefixes, chunks, run.opt.timing);
    Json j = Json::array();
    for (const auto& r : rows) j.push_back(eval::to_json(r, false));
    emit(run, "report", {{"rows", j}}, eval::step_count_table(rows, false));
    // Wall-clock never enters the written report.
    if (run.opt.timing) std::cerr << eval::step_count_table(rows, true).text();
}

void add_common(CLI::App* sub, Options& o) {
    sub->add_option("--seed", o.seed, "Seed (falls back to $OATOK_SEED, then 0)");
    sub->add_option("--config", o.config, "JSON config file")->check(CLI::ExistingFile);
    sub->add_option("--set", o.sets, "Config override key.path=value (repeatable)");
    sub->add_option("--out", o.out, "Output directory")->required();
}

}  // namespace

int cli_dispatch(const std::vector<std::string>& args) {
    Options o;
    CLI::App app{"Action tokenization toolkit: data, tokenizers, policies and evaluation", "oatok"};
    app.require_subcommand(1);

    auto* gen = app.add_subcommand("generate-data", "Generate a synthetic trajectory dataset");
    add_common(gen, o);
    gen->add_option("--family", o.family, "smooth-fourier | point-mass-expert");
    gen->add_option("--n", o.n_trajectories, "Number of trajectories");
    gen->add_option("--T", o.T, "Trajectory length");
    gen->add_option("--D_a", o.D_a, "Action dimensions (smooth-fourier)");
    gen->add_option("--noise", o.noise, "Gaussian noise std");

    auto* fit = app.add_subcommand("fit-normalizer", "Fit per-dimension min/max statistics");
    add_common(fit, o);
    fit->add_option("--data", o.data, "Dataset (.jsonl)")->required();

    auto* tt = app.add_subcommand("train-tokenizer", "Train or fit a tokenizer");
    add_common(tt, o);
    tt->add_option("--scheme", o.scheme, "oat | bin | fast")->required()->check(CLI::IsMember({"oat", "bin", "fast"}));
    tt->add_option("--data", o.data, "Dataset (.jsonl)")->required();
    tt->add_option("--norm", o.norm, "Normalizer (default: fit on --data)");
    tt->add_flag("--no-nested-dropout", o.no_nested_dropout, "Train OAT without nested dropout");
    tt->add_option("--steps", o.steps, "Training steps");
    tt->add_option("--batch-size", o.batch_size, "Batch size");
    tt->add_option("--lr", o.lr, "Learning rate");
    tt->add_option("--H_a", o.H_a, "Action horizon");
    tt->add_option("--H_l", o.H_l, "OAT token count");
    tt->add_option("--levels", o.levels, "FSQ levels, e.g. 8,5,5,5");
    tt->add_option("--N", o.N, "Bins per dimension");
    tt->add_option("--vocab-size", o.vocab_size, "FAST vocabulary size");
    tt->add_option("--gamma", o.gamma, "FAST coefficient scale");

    auto* tk = app.add_subcommand("tokenize", "Tokenize held-out windows of a dataset");
    add_common(tk, o);
    tk->add_option("--tokenizer", o.tokenizer_path, "Tokenizer checkpoint")->required();
    tk->add_option("--data", o.data, "Dataset (.jsonl)")->required();
    tk->add_option("--norm", o.norm, "Normalizer (default: fit on --data)");
    tk->add_option("--stride", o.stride, "Window stride");

    auto* dt = app.add_subcommand("detokenize", "Decode a token file to action chunks");
    add_common(dt, o);
    dt->add_option("--tokenizer", o.tokenizer_path, "Tokenizer checkpoint")->required();
    dt->add_option("--tokens", o.tokens_path, "Token file from `tokenize`")->required();
    dt->add_option("--prefix", o.prefix, "Decode only the first K tokens (OAT)");

    auto* er = app.add_subcommand("eval-recon", "Held-out reconstruction error");
    add_common(er, o);
    er->add_option("--tokenizer", o.tokenizer_path, "Tokenizer checkpoint")->required();
    er->add_option("--data", o.data, "Dataset (.jsonl)")->required();
    er->add_option("--norm", o.norm, "Normalizer (default: fit on --data)");
    er->add_option("--stride", o.stride, "Window stride");

    auto* ad = app.add_subcommand("audit-decode", "Monte-Carlo decode-failure audit");
    add_common(ad, o);
    ad->add_option("--tokenizer", o.tokenizer_path, "Tokenizer checkpoint")->required();
    ad->add_option("--data", o.data, "Dataset used for the length distribution")->required();
    ad->add_option("--norm", o.norm, "Normalizer (default: fit on --data)");
    ad->add_option("--samples", o.samples, "Number of random sequences");
    ad->add_option("--stride", o.stride, "Window stride");

    auto* tp = app.add_subcommand("train-policy", "Train an autoregressive policy");
    add_common(tp, o);
    tp->add_option("--binding", o.binding, "oat | bin | fast")->required()->check(CLI::IsMember({"oat", "bin", "fast"}));
    tp->add_option("--tokenizer", o.tokenizer_path, "Tokenizer checkpoint")->required();
    tp->add_option("--data", o.data, "Point-mass dataset (.jsonl)")->required();
    tp->add_option("--norm", o.norm, "Normalizer (default: fit on --data)");
    tp->add_option("--steps", o.steps, "Training steps");
    tp->add_option("--batch-size", o.batch_size, "Batch size");
    tp->add_option("--lr", o.lr, "Learning rate");

    auto* ro = app.add_subcommand("rollout", "Closed-loop evaluation on the point-mass task");
    add_common(ro, o);
    ro->add_option("--policy", o.policy_path, "Policy checkpoint")->required();
    ro->add_option("--prefix", o.prefix, "OAT prefix length K");
    ro->add_option("--execute-steps", o.execute_steps, "Actions executed per inference");
    ro->add_option("--episodes", o.episodes, "Episodes per seed");
    ro->add_option("--seeds", o.seeds, "Evaluation seeds");

    auto* sw = app.add_subcommand("sweep", "Codebook or horizon sweep");
    add_common(sw, o);
    sw->add_option("kind", o.sweep_kind, "codebook | horizon")->required()->check(CLI::IsMember({"codebook", "horizon"}));
    sw->add_option("--data", o.data, "Point-mass training dataset")->required();
    sw->add_option("--heldout", o.heldout, "Held-out dataset (codebook)");
    sw->add_option("--levels", o.sweep_levels, "Level sets, e.g. 8,6,5 (repeatable)");
    sw->add_option("--H_a", o.sweep_H_a, "Action horizons")->delimiter(',');
    sw->add_option("--H_l", o.sweep_H_l, "Token counts")->delimiter(',');
    sw->add_option("--episodes", o.episodes, "Episodes per seed");
    sw->add_option("--seeds", o.seeds, "Evaluation seeds");

    auto* rp = app.add_subcommand("report", "Autoregressive step counts per method");
    add_common(rp, o);
    rp->add_option("--tokenizer", o.tokenizers, "Tokenizer checkpoints (repeatable)")->required();
    rp->add_option("--data", o.data, "Dataset (.jsonl)")->required();
    rp->add_option("--norm", o.norm, "Normalizer (default: fit on --data)");
    rp->add_option("--prefixes", o.prefixes, "OAT prefix lengths")->delimiter(',');
    rp->add_option("--stride", o.stride, "Window stride");
    rp->add_flag("--timing", o.timing, "Print informational wall-clock per inference to stderr");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n\n";
        const auto subs = app.get_subcommands();
        std::cerr << (subs.empty() ? app.help() : subs.front()->help());
        return kExitUsage;
    }

    Run run;
    run.command = app.get_subcommands().front()->get_name();
    run.args = args;
    run.opt = o;
    try {
        run.seed = resolve_seed(o);
        resolve_config(run);
        run.out = o.out;
        fs::create_directories(run.out);
        if (run.command == "generate-data") cmd_generate_data(run);
        else if (run.command == "fit-normalizer") cmd_fit_normalizer(run);
        else if (run.command == "train-tokenizer") cmd_train_tokenizer(run);
        else if (run.command == "tokenize") cmd_tokenize(run);
        else if (run.command == "detokenize") cmd_detokenize(run);
        else if (run.command == "eval-recon") cmd_eval_recon(run);
        else if (run.command == "audit-decode") cmd_audit_decode(run);
        else if (run.command == "train-policy") cmd_train_policy(run);
        else if (run.command == "rollout") cmd_rollout(run);
        else if (run.command == "sweep") cmd_sweep(run);
        else if (run.command == "report") cmd_report(run);
        write_manifest(run);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
    return kExitOk;
}

int cli_dispatch(int argc, char** argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return cli_dispatch(args);
}

}  // namespace oatok::cli
