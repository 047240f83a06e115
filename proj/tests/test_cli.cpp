#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include "literec/cli.hpp"
#include "literec/config.hpp"
#include "literec/synthetic.hpp"

using namespace literec;
namespace fs = std::filesystem;

namespace {

fs::path temp_root() {
    static fs::path root = [] {
        auto p = fs::temp_directory_path() / ("literec_cli_" + std::to_string(::getpid()));
        fs::create_directories(p);
        return p;
    }();
    return root;
}

int run(std::vector<std::string> args) { return cli::dispatch(args); }

}  // namespace

TEST_CASE("config: parse, defaults, unknown key rejection, fingerprint") {
    const auto path = temp_root() / "good.cfg";
    {
        std::ofstream out(path);
        out << "# comment line\n";
        out << "train.lr = 0.005\n";
        out << "eval.ks=5,10\n";
        out << "train.freeze_rec_encoder=true\n";
    }
    auto cfg = RunConfig::from_file(path.string());
    CHECK(cfg.get_double("train.lr", 0) == 0.005);
    CHECK(cfg.get_int_list("eval.ks", {}) == std::vector<int64_t>{5, 10});
    CHECK(cfg.get_bool("train.freeze_rec_encoder", false));
    CHECK(cfg.get_int("train.batch_size", 64) == 64);  // default
    CHECK(!cfg.fingerprint().empty());

    const auto bad = temp_root() / "bad.cfg";
    {
        std::ofstream out(bad);
        out << "train.lrr=0.1\n";  // typo
    }
    CHECK_THROWS_WITH_AS(RunConfig::from_file(bad.string()), doctest::Contains("unknown config key"),
                         std::runtime_error);

    RunConfig direct;
    CHECK_THROWS_AS(direct.set("nope.nope", "1"), std::invalid_argument);
}

TEST_CASE("config: LLREC_CONFIG environment variable is honored") {
    const auto path = temp_root() / "env.cfg";
    {
        std::ofstream out(path);
        out << "data.kcore=7\n";
    }
    setenv("LLREC_CONFIG", path.string().c_str(), 1);
    auto cfg = RunConfig::from_env_or_default();
    CHECK(cfg.get_int("data.kcore", 5) == 7);
    unsetenv("LLREC_CONFIG");
    CHECK(RunConfig::from_env_or_default().get_int("data.kcore", 5) == 5);
}

TEST_CASE("prepare on a toy dataset reproduces the hand-computed split") {
    const auto dir = temp_root() / "toy";
    fs::create_directories(dir / "data");
    {
        std::ofstream inter(dir / "data" / "interactions.tsv");
        // one user, five interactions, shuffled timestamps
        inter << "u1\ta\t5\t30\n";
        inter << "u1\tb\t5\t10\n";
        inter << "u1\tc\t5\t20\n";
        inter << "u1\td\t5\t40\n";
        inter << "u1\te\t5\t50\n";
        inter << "u2\ta\t5\t1\n";
        inter << "u2\tb\t5\t2\n";
        inter << "u2\tc\t5\t3\n";
        std::ofstream items(dir / "data" / "items.tsv");
        for (const char* id : {"a", "b", "c", "d", "e"})
            items << id << "\tTitle " << id << "\tgenre\n";
    }
    const auto out = (dir / "run").string();
    REQUIRE(run({"prepare", "--data", (dir / "data").string(), "--format", "tsv", "--kcore", "1", "--out", out}) == 0);

    std::ifstream split(fs::path(out) / "prepared" / "split.tsv");
    std::string header, u1_row;
    std::getline(split, header);
    std::getline(split, u1_row);
    // chronological u1 order: b(10) c(20) a(30) d(40) e(50)
    // items indexed lexicographically: a=0 b=1 c=2 d=3 e=4
    // train = b,c,a -> "1,2,0"; valid = d -> 3; test = e -> 4
    CHECK(u1_row == "0\t1,2,0\t3\t4");
}

TEST_CASE("eval without a checkpoint exits nonzero with a clear cause") {
    const auto dir = temp_root() / "nockpt";
    SyntheticConfig sc;
    sc.users = 25;
    sc.items = 60;
    sc.min_len = 6;
    sc.max_len = 12;
    write_synthetic(generate_synthetic(sc), (dir / "data").string(), DataFormat::Tsv);
    const auto out = (dir / "run").string();
    REQUIRE(run({"prepare", "--data", (dir / "data").string(), "--format", "tsv", "--kcore", "2", "--out", out}) == 0);
    CHECK(run({"eval", "--out", out}) != 0);
}

TEST_CASE("unknown command and bad flags exit nonzero") {
    CHECK(run({"frobnicate"}) != 0);
    CHECK(run({"prepare", "--nonsense"}) != 0);
    CHECK(run({}) != 0);
}

TEST_CASE("full command chain: train, precompute, eval, topn, idempotent skips") {
    const auto dir = temp_root() / "chain";
    SyntheticConfig sc;
    sc.users = 30;
    sc.items = 70;
    sc.min_len = 6;
    sc.max_len = 14;
    sc.seed = 5;
    write_synthetic(generate_synthetic(sc), (dir / "data").string(), DataFormat::Jsonl);
    const auto out = (dir / "run").string();
    const auto cfgfile = dir / "run.cfg";
    {
        std::ofstream cfg(cfgfile);
        cfg << "model.item.layers=1\nmodel.item.heads=2\nmodel.item.dim=16\nmodel.item.ff_dim=32\n";
        cfg << "model.item.max_text_len=12\nmodel.item.dropout=0\n";
        cfg << "model.rec.layers=1\nmodel.rec.heads=2\nmodel.rec.dim=16\nmodel.rec.ff_dim=32\n";
        cfg << "model.rec.max_seq_len=10\nmodel.rec.dropout=0\n";
        cfg << "train.max_epochs=2\ntrain.batch_size=16\n";
    }
    auto with_cfg = [&](std::vector<std::string> args) {
        args.push_back("--config");
        args.push_back(cfgfile.string());
        args.push_back("--out");
        args.push_back(out);
        return args;
    };
    REQUIRE(run(with_cfg({"prepare", "--data", (dir / "data").string(), "--format", "jsonl", "--kcore", "2"})) == 0);
    REQUIRE(run(with_cfg({"train", "--seed", "3"})) == 0);
    REQUIRE(fs::exists(fs::path(out) / "checkpoints" / "best.ckpt"));
    REQUIRE(run(with_cfg({"precompute"})) == 0);
    REQUIRE(fs::exists(fs::path(out) / "item_embeddings.cache"));
    REQUIRE(run(with_cfg({"eval", "--k", "5,10"})) == 0);
    REQUIRE(run(with_cfg({"topn", "--negatives", "10"})) == 0);

    // second run skips completed outputs
    REQUIRE(run(with_cfg({"train"})) == 0);
    REQUIRE(run(with_cfg({"eval"})) == 0);

    // manifest lists artifacts with checksums
    std::ifstream manifest(fs::path(out) / "manifest.tsv");
    std::string content((std::istreambuf_iterator<char>(manifest)), std::istreambuf_iterator<char>());
    CHECK(content.find("prepared/split.tsv") != std::string::npos);
    CHECK(content.find("eval_test.tsv") != std::string::npos);
    CHECK(content.find("checkpoints/best.ckpt") != std::string::npos);

    // eval report file has the tabular shape
    std::ifstream report(fs::path(out) / "eval_test.tsv");
    std::string line;
    std::getline(report, line);
    CHECK(line == "metric\tk\tvalue\tconfig");
    int rows = 0;
    while (std::getline(report, line)) ++rows;
    CHECK(rows >= 4);
}

TEST_CASE("ablate emits one row per configuration") {
    const auto dir = temp_root() / "ablate";
    SyntheticConfig sc;
    sc.users = 20;
    sc.items = 50;
    sc.min_len = 5;
    sc.max_len = 9;
    sc.seed = 11;
    write_synthetic(generate_synthetic(sc), (dir / "data").string(), DataFormat::Tsv);
    const auto out = (dir / "run").string();
    const auto cfgfile = dir / "run.cfg";
    {
        std::ofstream cfg(cfgfile);
        cfg << "model.item.layers=1\nmodel.item.heads=2\nmodel.item.dim=8\nmodel.item.ff_dim=16\n";
        cfg << "model.item.max_text_len=8\nmodel.item.dropout=0\n";
        cfg << "model.rec.layers=1\nmodel.rec.heads=2\nmodel.rec.dim=8\nmodel.rec.ff_dim=16\n";
        cfg << "model.rec.max_seq_len=6\nmodel.rec.dropout=0\n";
        cfg << "baseline.layers=1\nbaseline.heads=2\nbaseline.dim=8\nbaseline.ff_dim=16\n";
        cfg << "baseline.vocab_size=256\nbaseline.max_input_len=20\nbaseline.max_output_len=5\n";
        cfg << "baseline.beam_width=5\nbaseline.dropout=0\n";
        cfg << "train.max_epochs=1\ntrain.batch_size=16\n";
    }
    REQUIRE(run({"prepare", "--data", (dir / "data").string(), "--format", "tsv", "--kcore", "2", "--out", out}) == 0);
    REQUIRE(run({"ablate", "--config", cfgfile.string(), "--out", out}) == 0);

    std::ifstream table(fs::path(out) / "ablate.tsv");
    std::string line;
    std::getline(table, line);  // header
    std::vector<std::string> names;
    while (std::getline(table, line)) {
        if (line.empty()) continue;
        names.push_back(line.substr(0, line.find('\t')));
    }
    CHECK(names == std::vector<std::string>{"lite", "lite_fixRec", "lite_fixHead", "full_beam", "wo_d", "wo_d_tid"});
}
