#include <sys/wait.h>

#include <cstdlib>
#include <map>

#include "doctest.h"
#include "json.hpp"
#include "mgt/commands.hpp"
#include "mgt/config.hpp"
#include "mgt/io.hpp"
#include "test_util.hpp"

using namespace mgt;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
    const std::string cmd = std::string(MGT_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

int synth(const std::string& args) {
    const std::string cmd = std::string(MGT_SYNTH_PATH) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::map<std::string, std::string> artifact_hashes(const fs::path& manifest) {
    const json j = json::parse(test::read_text(manifest));
    std::map<std::string, std::string> out;
    for (const auto& a : j.at("artifacts")) {
        if (a.at("sha256").is_null()) continue;
        out[fs::path(a.at("path").get<std::string>()).filename().string()] = a.at("sha256").get<std::string>();
    }
    return out;
}

// synth -> sample -> encode-pos -> pretrain -> embed -> probe on a small SBM.
std::map<std::string, std::string> pipeline(const fs::path& root) {
    const std::string data = (root / "data").string(), out = (root / "run").string();
    REQUIRE(synth("--out " + data + " --rng-seed 3 sbm --nodes 80 --dim 8") == 0);
    const std::string base = "--graph " + data + "/edges.txt --features " + data + "/features.mgtf --out " + out +
                             " --hidden-size 16 --num-layers 1 --decoder-layers 1 --topk 8 --rng-seed 5";
    REQUIRE(run(base + " sample") == 0);
    REQUIRE(run(base + " --line-epochs 2 encode-pos") == 0);
    REQUIRE(run(base + " --pe " + out + "/pe.mgtp --sequences " + out + "/sequences.mgts --epochs 1 pretrain") == 0);
    REQUIRE(run(base + " --pe " + out + "/pe.mgtp --sequences " + out + "/sequences.mgts --checkpoint " + out +
                "/model.mgtc embed") == 0);
    REQUIRE(run(base + " --labels " + data + "/labels.csv --embeddings " + out +
                "/embeddings.mgte --probe-epochs 50 probe") == 0);
    std::map<std::string, std::string> all;
    for (const char* c : {"sample", "encode-pos", "pretrain", "embed"}) {
        for (auto& [k, v] : artifact_hashes(root / "run" / (std::string(c) + ".manifest.json"))) all[k] = v;
    }
    // Reports carry wall-clock timings; everything else must match.
    json report = json::parse(test::read_text(root / "run/probe_report.json"));
    report.erase("timings_ms");
    all["probe_report.json"] = report.dump();
    return all;
}

}  // namespace

TEST_CASE("run config: presets, json round trip, unknown keys, type errors") {
    const auto desk = RunConfig::from_preset("desk");
    CHECK(desk.hidden_size == 64);
    CHECK(desk.num_layers == 2);
    const auto big = RunConfig::from_preset("large");
    CHECK(big.hidden_size == 1024);
    CHECK(big.num_layers == 8);
    CHECK_THROWS_AS(RunConfig::from_preset("huge"), InputError);

    CHECK(desk.mask_rate == 0.85);
    CHECK(desk.lambda == 0.1);
    CHECK(desk.optimizer == "adamw");

    const auto back = RunConfig::from_json(desk.to_json());
    CHECK(back.to_json() == desk.to_json());
    CHECK(RunConfig::from_json(json{{"preset", "large"}, {"lr", 1}}).hidden_size == 1024);
    CHECK(RunConfig::from_json(json{{"lr", 1}}).lr == 1.0);
    CHECK_THROWS_AS(RunConfig::from_json(json{{"learning_rate", 0.1}}), InputError);
    CHECK_THROWS_AS(RunConfig::from_json(json{{"hidden_size", "big"}}), InputError);
    CHECK_THROWS_AS(RunConfig::from_json(json{{"augment", 1}}), InputError);

    RunConfig bad = desk;
    bad.optimizer = "sgd";
    CHECK_THROWS_AS(bad.validate(), InputError);
    bad = desk;
    bad.pe_mode = "random";
    CHECK_THROWS_AS(bad.validate(), InputError);
    CHECK_NOTHROW(desk.validate());

    CHECK_FALSE(desk.hyperparameters().contains("out"));
    RunConfig moved = desk;
    moved.out = "/elsewhere";
    moved.threads = 8;
    CHECK(config_hash(moved) == config_hash(desk));
    moved.lr = 0.5;
    CHECK(config_hash(moved) != config_hash(desk));
}

TEST_CASE("apply_override converts by the default's type") {
    json j = RunConfig{}.to_json();
    apply_override(j, "hidden_size", "32");
    apply_override(j, "lr", "0.5");
    apply_override(j, "augment", "false");
    apply_override(j, "optimizer", "adamw");
    const auto c = RunConfig::from_json(j);
    CHECK(c.hidden_size == 32);
    CHECK(c.lr == 0.5);
    CHECK_FALSE(c.augment);
    CHECK_THROWS_AS(apply_override(j, "hidden_size", "3x"), InputError);
    CHECK_THROWS_AS(apply_override(j, "nope", "1"), InputError);
    CHECK_THROWS_AS(apply_override(j, "augment", "maybe"), InputError);
}

TEST_CASE("select_seeds") {
    test::TempDir dir("seeds");
    const Graph g = Graph::from_edges(10, {{0, 1}, {2, 3}, {4, 5}, {6, 7}, {8, 9}}, true);
    CHECK(select_seeds(g, "all", 0).size() == 10);
    const auto a = select_seeds(g, "fraction:0.3", 7), b = select_seeds(g, "fraction:0.3", 7);
    CHECK(a == b);
    CHECK(a.size() == 3);
    CHECK(std::is_sorted(a.begin(), a.end()));
    test::write_text(dir / "s.txt", "# seeds\n4\n2\n");
    CHECK(select_seeds(g, "file:" + (dir / "s.txt").string(), 0) == std::vector<NodeId>{4, 2});
    test::write_text(dir / "bad.txt", "4\n99\n");
    CHECK_THROWS_AS(select_seeds(g, "file:" + (dir / "bad.txt").string(), 0), InputError);
    CHECK_THROWS_AS(select_seeds(g, "fraction:1.5", 0), InputError);
    CHECK_THROWS_AS(select_seeds(g, "some", 0), InputError);
}

TEST_CASE("cli exit codes") {
    test::TempDir dir("cli_exit");
    CHECK(run("--help") == 0);
    CHECK(run("frobnicate") != 0);
    CHECK(run("--graph " + (dir / "missing.txt").string() + " --out " + dir.path().string() + " sample") == 2);
    test::write_text(dir / "bad.txt", "0 1\n1 x\n");
    CHECK(run("--graph " + (dir / "bad.txt").string() + " --out " + dir.path().string() + " sample") == 2);
    test::write_text(dir / "g.txt", "0 1\n");
    CHECK(run("--graph " + (dir / "g.txt").string() + " --hidden-size abc sample") == 2);
    CHECK(run("--config " + (dir / "none.json").string() + " sample") == 2);
    test::write_text(dir / "cfg.json", "{\"bogus\": 1}");
    CHECK(run("--config " + (dir / "cfg.json").string() + " sample") == 2);
}

TEST_CASE("cli sample on a pair graph") {
    test::TempDir dir("cli_pair");
    test::write_text(dir / "g.txt", "10 20\n");
    const std::string out = (dir / "run").string();
    REQUIRE(run("--graph " + (dir / "g.txt").string() + " --out " + out + " --topk 4 sample") == 0);
    const auto seqs = load_sequences(dir / "run" / "sequences.mgts");
    REQUIRE(seqs.size() == 2);
    CHECK(seqs[0].seed == 0);
    REQUIRE(seqs[0].context.size() == 1);
    CHECK(seqs[0].context[0].node == 1);
    CHECK(test::read_text(dir / "run" / "node_map.tsv") == "# external_id dense_id\n10 0\n20 1\n");

    const json m = json::parse(test::read_text(dir / "run" / "sample.manifest.json"));
    CHECK(m.at("command") == "sample");
    CHECK(m.at("inputs").size() == 1);
    const auto first = m.at("inputs")[0].at("sha256").get<std::string>();

    test::write_text(dir / "g.txt", "10 20\n20 30\n");
    REQUIRE(run("--graph " + (dir / "g.txt").string() + " --out " + out + " --topk 4 sample") == 0);
    const json m2 = json::parse(test::read_text(dir / "run" / "sample.manifest.json"));
    CHECK(m2.at("inputs")[0].at("sha256").get<std::string>() != first);

    REQUIRE(run("--graph " + (dir / "g.txt").string() + " --out " + out + " --seeds fraction:0.5 sample") == 0);
    const auto h1 = artifact_hashes(dir / "run" / "sample.manifest.json");
    REQUIRE(run("--graph " + (dir / "g.txt").string() + " --out " + out + " --seeds fraction:0.5 sample") == 0);
    CHECK(artifact_hashes(dir / "run" / "sample.manifest.json") == h1);
    CHECK(load_sequences(dir / "run" / "sequences.mgts").size() == 2);
}

TEST_CASE("cli pipeline is reproducible and the augmentation flag matters") {
    test::TempDir a("cli_pipe_a"), b("cli_pipe_b");
    const auto ha = pipeline(a.path()), hb = pipeline(b.path());
    CHECK(ha == hb);
    for (const char* f : {"sequences.mgts", "pe.mgtp", "model.mgtc", "train_log.csv", "embeddings.mgte",
                          "probe_report.json"}) {
        CHECK(ha.count(f) == 1);
    }
    const json report = json::parse(test::read_text(a / "run/probe_report.json"));
    CHECK(report.at("metrics").contains("test_accuracy"));

    const std::string data = (a / "data").string(), out = (a / "run").string();
    const std::string base = "--graph " + data + "/edges.txt --features " + data + "/features.mgtf --out " + out +
                             " --hidden-size 16 --num-layers 1 --decoder-layers 1 --topk 8 --pe " + out +
                             "/pe.mgtp --sequences " + out + "/sequences.mgts --checkpoint " + out + "/model.mgtc";
    REQUIRE(run(base + " --no-augment embed") == 0);
    const auto plain = artifact_hashes(a / "run/embed.manifest.json");
    CHECK(plain.at("embeddings.mgte") != ha.at("embeddings.mgte"));

    REQUIRE(run(base + " --bench-seeds 5 bench") == 0);
    const std::string csv = test::read_text(a / "run/bench.csv");
    CHECK(csv.find("ppr_sequence,") != std::string::npos);
    CHECK(csv.find("full_neighborhood,") != std::string::npos);

    REQUIRE(run(base + " --epochs 0 pretrain") == 0);
    CHECK(test::read_text(a / "run/train_log.csv") == "epoch,step,loss_total,loss_feat,loss_struct\n");
}
