// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "oatok/cli.hpp"
#include "oatok/data.hpp"
#include "oatok/json_io.hpp"
#include "oatok/tokenizer.hpp"

using namespace oatok;
namespace fs = std::filesystem;

namespace {

int run(std::vector<std::string> args) { return cli::cli_dispatch(args); }

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

nlohmann::json load(const fs::path& p) { return nlohmann::json::parse(slurp(p)); }

// Small models so the whole CLI pipeline runs in seconds.
const std::vector<std::string> kSmall{"--set", "oat.model_dim=32",         "--set", "oat.head_dim=32",
                                      "--set", "oat.enc_layers=1",         "--set", "oat.dec_layers=1",
                                      "--set", "policy.model_dim=32",      "--set", "policy.head_dim=32",
                                      "--set", "policy.layers=1"};

std::vector<std::string> with_small(std::vector<std::string> args) {
    args.insert(args.end(), kSmall.begin(), kSmall.end());
    return args;
}

struct Workspace {
    fs::path root = fs::temp_directory_path() / "oatok_test_cli";
    Workspace() {
        fs::remove_all(root);
        fs::create_directories(root);
    }
    ~Workspace() { fs::remove_all(root); }
    std::string dir(const std::string& name) const { return (root / name).string(); }
};

}  // namespace

TEST_CASE("usage errors exit with 1") {
    Workspace w;
    CHECK(run({}) == cli::kExitUsage);
    CHECK(run({"generate-data", "--out", w.dir("g"), "--bogus"}) == cli::kExitUsage);
    CHECK(run({"generate-data"}) == cli::kExitUsage);
    CHECK(run({"train-tokenizer", "--scheme", "vq", "--data", "x", "--out", w.dir("t")}) == cli::kExitUsage);
    CHECK(run({"generate-data", "--out", w.dir("g"), "--set", "nonsense"}) == cli::kExitUsage);
    CHECK(run({"generate-data", "--out", w.dir("g"), "--set", "data.T=0"}) == cli::kExitUsage);
    CHECK(run({"generate-data", "--out", w.dir("g"), "--set", "unknown_key=1"}) == cli::kExitUsage);
}

TEST_CASE("runtime errors exit with 2") {
    Workspace w;
    CHECK(run({"fit-normalizer", "--data", w.dir("missing.jsonl"), "--out", w.dir("f")}) == cli::kExitRuntime);
}

TEST_CASE("generate-data writes a dataset and a manifest") {
    Workspace w;
    REQUIRE(run({"generate-data", "--n", "5", "--T", "40", "--seed", "3", "--out", w.dir("g")}) == cli::kExitOk);
    const auto ds = data::load_dataset(w.root / "g" / "dataset.jsonl");
    CHECK(ds.size() == 5);
    CHECK(ds.seed == 3);
    const auto m = load(w.root / "g" / "manifest.json");
    CHECK(m.at("command") == "generate-data");
    CHECK(m.at("seed") == 3);
    CHECK(m.at("config").at("data").at("T") == 40);
    for (const char* key : {"args", "config_path", "inputs", "outputs", "git_describe", "format_version"}) {
        CHECK(m.contains(key));
    }
}

TEST_CASE("seed falls back to OATOK_SEED") {
    Workspace w;
    ::setenv("OATOK_SEED", "42", 1);
    REQUIRE(run({"generate-data", "--n", "2", "--T", "40", "--out", w.dir("g")}) == cli::kExitOk);
    ::unsetenv("OATOK_SEED");
    CHECK(load(w.root / "g" / "manifest.json").at("seed") == 42);
    REQUIRE(run({"generate-data", "--n", "2", "--T", "40", "--out", w.dir("h")}) == cli::kExitOk);
    CHECK(load(w.root / "h" / "manifest.json").at("seed") == 0);
}

TEST_CASE("config file plus flag overrides") {
    Workspace w;
    {
        std::ofstream cfg(w.root / "cfg.json");
        cfg << R"({"data": {"n_trajectories": 3, "T": 50}})";
    }
    REQUIRE(run({"generate-data", "--config", (w.root / "cfg.json").string(), "--T", "45", "--out", w.dir("g")}) ==
            cli::kExitOk);
    const auto ds = data::load_dataset(w.root / "g" / "dataset.jsonl");
    CHECK(ds.size() == 3);
    CHECK(ds.trajectories[0].rows() == 45);
    CHECK(run({"generate-data", "--config", w.dir("nope.json"), "--out", w.dir("x")}) == cli::kExitUsage);
}

TEST_CASE("tokenizer pipeline at the file level") {
    Workspace w;
    REQUIRE(run({"generate-data", "--n", "12", "--T", "64", "--out", w.dir("data")}) == cli::kExitOk);
    const std::string data = w.dir("data") + "/dataset.jsonl";
    REQUIRE(run(with_small({"train-tokenizer", "--scheme", "oat", "--data", data, "--steps", "20", "--batch-size",
                            "8", "--lr", "1e-3", "--out", w.dir("tok")})) == cli::kExitOk);
    const std::string ckpt = w.dir("tok") + "/tokenizer.ckpt";
    const std::string norm = w.dir("tok") + "/norm.json";
    CHECK(fs::exists(w.root / "tok" / "train_log.json"));
    CHECK(AnyTokenizer::load(ckpt).header().at("ordered") == true);

    REQUIRE(run({"tokenize", "--tokenizer", ckpt, "--data", data, "--norm", norm, "--out", w.dir("ids")}) ==
            cli::kExitOk);
    const std::string ids = w.dir("ids") + "/tokens.json";
    const auto tokens = load(ids).at("tokens");
    REQUIRE(tokens.size() > 0);
    CHECK(tokens[0].size() == 8);

    REQUIRE(run({"detokenize", "--tokenizer", ckpt, "--tokens", ids, "--prefix", "4", "--out", w.dir("p4")}) ==
            cli::kExitOk);
    const auto p4 = load(w.root / "p4" / "chunks.json");
    CHECK(p4.at("prefix") == 4);
    REQUIRE(p4.at("chunks").size() == tokens.size());
    CHECK(p4.at("chunks")[0].size() == 32);
    CHECK(p4.at("chunks")[0][0].size() == 2);

    // detokenize --prefix H_l reproduces eval-recon's full-K error.
    REQUIRE(run({"detokenize", "--tokenizer", ckpt, "--tokens", ids, "--prefix", "8", "--out", w.dir("p8")}) ==
            cli::kExitOk);
    REQUIRE(run({"eval-recon", "--tokenizer", ckpt, "--data", data, "--norm", norm, "--out", w.dir("recon")}) ==
            cli::kExitOk);
    const auto recon = load(w.root / "recon" / "recon.json");
    const auto ds = data::load_dataset(data);
    const auto chunks = data::normalized_chunks(ds, data::load_norm_stats(norm), 32, 4);
    const auto decoded = load(w.root / "p8" / "chunks.json").at("chunks");
    REQUIRE(decoded.size() == chunks.size());
    double total = 0.0;
    for (std::size_t i = 0; i < chunks.size(); ++i) {
        ActionChunk c(32, 2);
        for (std::size_t t = 0; t < 32; ++t)
            for (std::size_t d = 0; d < 2; ++d) c(t, d) = decoded[i][t][d].get<double>();
        total += mse(c, chunks[i]);
    }
    CHECK(total / chunks.size() == doctest::Approx(recon.at("mse_mean")[7].get<double>()).epsilon(1e-12));

    CHECK(run({"detokenize", "--tokenizer", ckpt, "--tokens", ids, "--prefix", "9", "--out", w.dir("p9")}) ==
          cli::kExitUsage);

    REQUIRE(run(with_small({"train-tokenizer", "--scheme", "oat", "--no-nested-dropout", "--data", data, "--steps",
                            "2", "--batch-size", "4", "--out", w.dir("flat")})) == cli::kExitOk);
    CHECK(AnyTokenizer::load(w.dir("flat") + "/tokenizer.ckpt").header().at("ordered") == false);

    REQUIRE(run({"audit-decode", "--tokenizer", ckpt, "--data", data, "--samples", "200", "--out", w.dir("audit")}) ==
            cli::kExitOk);
    CHECK(load(w.root / "audit" / "audit.json").at("audits")[0].at("rate") == 0.0);
}

TEST_CASE("bin and fast schemes, audit and report") {
    Workspace w;
    REQUIRE(run({"generate-data", "--n", "40", "--T", "64", "--out", w.dir("data")}) == cli::kExitOk);
    const std::string data = w.dir("data") + "/dataset.jsonl";
    REQUIRE(run({"train-tokenizer", "--scheme", "bin", "--data", data, "--out", w.dir("bin")}) == cli::kExitOk);
    REQUIRE(run({"train-tokenizer", "--scheme", "fast", "--data", data, "--vocab-size", "300", "--out",
                 w.dir("fast")}) == cli::kExitOk);
    REQUIRE(run({"audit-decode", "--tokenizer", w.dir("fast") + "/tokenizer.ckpt", "--data", data, "--samples",
                 "2000", "--out", w.dir("audit")}) == cli::kExitOk);
    const auto audit = load(w.root / "audit" / "audit.json").at("audits");
    CHECK(audit[0].at("rate").get<double>() > 0.0);
    CHECK(audit[1].at("method") == "FAST(base)");
    CHECK(audit[1].at("rate") == 0.0);
    CHECK(run({"detokenize", "--tokenizer", w.dir("bin") + "/tokenizer.ckpt", "--tokens", "x", "--prefix", "2",
               "--out", w.dir("bad")}) == cli::kExitUsage);
    REQUIRE(run({"report", "--tokenizer", w.dir("bin") + "/tokenizer.ckpt", "--tokenizer",
                 w.dir("fast") + "/tokenizer.ckpt", "--data", data, "--out", w.dir("report")}) == cli::kExitOk);
    const auto report = load(w.root / "report" / "report.json");
    CHECK(report.dump().find("wall_ms") == std::string::npos);
    CHECK(fs::exists(w.root / "report" / "report.txt"));
}

TEST_CASE("policy commands and rollout bounds") {
    Workspace w;
    REQUIRE(run({"generate-data", "--family", "point-mass-expert", "--n", "6", "--T", "60", "--out", w.dir("data")}) ==
            cli::kExitOk);
    const std::string data = w.dir("data") + "/dataset.jsonl";
    REQUIRE(run(with_small({"train-tokenizer", "--scheme", "oat", "--data", data, "--steps", "3", "--batch-size", "4",
                            "--out", w.dir("tok")})) == cli::kExitOk);
    REQUIRE(run(with_small({"train-policy", "--binding", "oat", "--tokenizer", w.dir("tok") + "/tokenizer.ckpt",
                            "--data", data, "--norm", w.dir("tok") + "/norm.json", "--steps", "3", "--batch-size",
                            "4", "--out", w.dir("pol")})) == cli::kExitOk);
    const std::string pol = w.dir("pol") + "/policy.ckpt";
    CHECK(run({"train-policy", "--binding", "bin", "--tokenizer", w.dir("tok") + "/tokenizer.ckpt", "--data", data,
               "--out", w.dir("mismatch")}) != cli::kExitOk);
    CHECK(run({"rollout", "--policy", pol, "--prefix", "9", "--out", w.dir("r9")}) == cli::kExitUsage);
    CHECK(run({"rollout", "--policy", pol, "--execute-steps", "33", "--out", w.dir("rx")}) == cli::kExitUsage);
    const std::vector<std::string> rollout{"rollout",  "--policy", pol,  "--prefix", "2",         "--episodes",
                                           "2",        "--seeds",  "0",  "1",        "--set",     "rollout.env.episode_cap=20",
                                           "--out",    w.dir("r2")};
    REQUIRE(run(rollout) == cli::kExitOk);
    const auto r = load(w.root / "r2" / "rollout.json");
    CHECK(r.at("K") == 2);
    CHECK(r.at("episodes") == 4);

    // Determinism: re-running the recorded command reproduces every output.
    const auto first = slurp(w.root / "r2" / "rollout.json");
    const auto first_txt = slurp(w.root / "r2" / "rollout.txt");
    REQUIRE(run(rollout) == cli::kExitOk);
    CHECK(slurp(w.root / "r2" / "rollout.json") == first);
    CHECK(slurp(w.root / "r2" / "rollout.txt") == first_txt);
}

TEST_CASE("training commands are bit-reproducible") {
    Workspace w;
    REQUIRE(run({"generate-data", "--n", "8", "--T", "64", "--seed", "5", "--out", w.dir("data")}) == cli::kExitOk);
    const std::string data = w.dir("data") + "/dataset.jsonl";
    const auto args = [&](const std::string& out) {
        return with_small({"train-tokenizer", "--scheme", "oat", "--data", data, "--steps", "5", "--batch-size", "4",
                           "--seed", "9", "--out", out});
    };
    REQUIRE(run(args(w.dir("a"))) == cli::kExitOk);
    REQUIRE(run(args(w.dir("b"))) == cli::kExitOk);
    for (const char* f : {"tokenizer.ckpt", "norm.json", "train_log.json"}) {
        CAPTURE(f);
        CHECK(slurp(w.root / "a" / f) == slurp(w.root / "b" / f));
    }
    auto ma = load(w.root / "a" / "manifest.json");
    auto mb = load(w.root / "b" / "manifest.json");
    CHECK(ma.at("config") == mb.at("config"));
}
