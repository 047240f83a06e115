#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <unistd.h>

#include "literec/data.hpp"

using namespace literec;
namespace fs = std::filesystem;

namespace {

fs::path make_temp_dir(const std::string& tag) {
    fs::path dir = fs::temp_directory_path() / ("literec_test_" + tag + "_" + std::to_string(::getpid()));
    fs::create_directories(dir);
    return dir;
}

void write_file(const fs::path& p, const std::string& content) {
    std::ofstream out(p);
    out << content;
}

// reference k-core: repeatedly delete under-degree users/items until stable
std::vector<RawInteraction> kcore_oracle(std::vector<RawInteraction> edges, int64_t k) {
    while (true) {
        std::map<std::string, int64_t> uc, ic;
        for (auto& e : edges) {
            ++uc[e.user];
            ++ic[e.item];
        }
        std::vector<RawInteraction> kept;
        for (auto& e : edges)
            if (uc[e.user] >= k && ic[e.item] >= k) kept.push_back(e);
        if (kept.size() == edges.size()) return edges;
        edges = kept;
    }
}

RawInteraction edge(const std::string& u, const std::string& i, int64_t ts = 0) {
    RawInteraction r;
    r.user = u;
    r.item = i;
    r.timestamp = ts;
    return r;
}

}  // namespace

TEST_CASE("load_interactions parses movielens-dat lines and skips malformed ones") {
    auto dir = make_temp_dir("ml");
    write_file(dir / "ratings.dat",
               "1::1193::5::978300760\n"
               "1::661::3::978302109\n"
               "2::1193::4::978298413\n"
               "2::661::4::978298414\n"
               "3::1193::4::978298415\n"
               "3::661::4::978298416\n"
               "4::1193::4::978298417\n"
               "4::661::4::978298418\n"
               "5::1193::4::978298419\n"
               "5::661::4::978298420\n"
               "brokenline::only3fields::5\n");
    write_file(dir / "movies.dat",
               "1193::One Flew Over the Cuckoo's Nest (1975)::Drama\n"
               "661::James and the Giant Peach (1996)::Animation|Children's|Musical\n");
    auto r = load_interactions(dir.string(), DataFormat::MovielensDat);
    REQUIRE(r.interactions.size() == 10);
    CHECK(r.interactions[0].user == "1");
    CHECK(r.interactions[0].item == "1193");
    CHECK(r.interactions[0].rating == doctest::Approx(5.0));
    CHECK(r.interactions[0].timestamp == 978300760);
    CHECK(r.skipped_lines == 1);
    REQUIRE(r.metadata.size() == 2);
    CHECK(r.metadata[1].genre == "Animation Children's Musical");
    fs::remove_all(dir);
}

TEST_CASE("load_interactions parses tsv") {
    auto dir = make_temp_dir("tsv");
    write_file(dir / "interactions.tsv", "u1\ti9\t4\t100\nu1\ti2\t5\t90\n");
    write_file(dir / "items.tsv", "i9\tSome Title\tdrama\ni2\tOther\tcomedy\n");
    auto r = load_interactions(dir.string(), DataFormat::Tsv);
    REQUIRE(r.interactions.size() == 2);
    CHECK(r.interactions[0].user == "u1");
    CHECK(r.interactions[0].item == "i9");
    CHECK(r.interactions[0].rating == doctest::Approx(4.0));
    CHECK(r.interactions[0].timestamp == 100);
    fs::remove_all(dir);
}

TEST_CASE("load_interactions parses jsonl and fails hard above 10% malformed") {
    auto dir = make_temp_dir("jsonl");
    write_file(dir / "interactions.jsonl",
               R"({"user":"u1","item":"i1","rating":5,"timestamp":10})"
               "\n"
               R"({"user":"u1","item":"i2","timestamp":20})"
               "\n");
    write_file(dir / "items.jsonl",
               R"({"item":"i1","title":"A","genre":"g"})"
               "\n"
               R"({"item":"i2","title":"B","genre":"h"})"
               "\n");
    auto r = load_interactions(dir.string(), DataFormat::Jsonl);
    CHECK(r.interactions.size() == 2);
    CHECK(r.interactions[1].rating == doctest::Approx(0.0));

    write_file(dir / "interactions.jsonl", "not json\nnot json either\n{\"user\":\"u\",\"item\":\"i\",\"timestamp\":1}\n");
    CHECK_THROWS_AS(load_interactions(dir.string(), DataFormat::Jsonl), std::runtime_error);
    fs::remove_all(dir);
}

TEST_CASE("load_interactions rejects missing paths and unknown formats") {
    CHECK_THROWS_AS(load_interactions("/nonexistent/literec", DataFormat::Tsv), std::runtime_error);
    CHECK_THROWS_AS(parse_format("csv"), std::invalid_argument);
}

TEST_CASE("kcore: cascade to empty set matches iterative-removal oracle") {
    std::vector<RawInteraction> edges = {edge("u1", "i1"), edge("u1", "i2"), edge("u2", "i2")};
    auto oracle = kcore_oracle(edges, 2);
    CHECK(oracle.empty());
    CHECK_THROWS_AS(kcore_filter(edges, 2), std::runtime_error);
}

TEST_CASE("kcore: complete bipartite 3x3 with k=3 unchanged; k=1 unchanged") {
    std::vector<RawInteraction> edges;
    for (int u = 0; u < 3; ++u)
        for (int i = 0; i < 3; ++i) edges.push_back(edge("u" + std::to_string(u), "i" + std::to_string(i)));
    CHECK(kcore_filter(edges, 3).size() == 9);
    CHECK(kcore_filter(edges, 1).size() == 9);
}

TEST_CASE("kcore matches oracle on random graphs and is a fixpoint") {
    std::mt19937 rng(4242);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<RawInteraction> edges;
        std::set<std::pair<int, int>> seen;
        std::uniform_int_distribution<int> ud(0, 14), id(0, 19);
        for (int e = 0; e < 120; ++e) {
            const int u = ud(rng), i = id(rng);
            if (!seen.insert({u, i}).second) continue;
            edges.push_back(edge("u" + std::to_string(u), "i" + std::to_string(i)));
        }
        const int64_t k = 3;
        auto oracle = kcore_oracle(edges, k);
        if (oracle.empty()) {
            CHECK_THROWS_AS(kcore_filter(edges, k), std::runtime_error);
            continue;
        }
        auto got = kcore_filter(edges, k);
        REQUIRE(got.size() == oracle.size());
        for (size_t j = 0; j < got.size(); ++j) {
            CHECK(got[j].user == oracle[j].user);
            CHECK(got[j].item == oracle[j].item);
        }
        // fixpoint: filtering again changes nothing
        auto again = kcore_filter(got, k);
        CHECK(again.size() == got.size());
    }
}

TEST_CASE("dataset build: dense bijective indices, chronological order, tie break by file order") {
    std::vector<RawInteraction> edges = {edge("u2", "b", 5), edge("u1", "c", 3), edge("u1", "a", 3),
                                         edge("u1", "b", 1), edge("u2", "a", 2)};
    for (size_t i = 0; i < edges.size(); ++i) edges[i].file_order = static_cast<int64_t>(i);
    std::vector<RawItemMeta> meta = {{"a", "Title A", "g1"}, {"b", "Title B", "g2"}};
    auto ds = Dataset::build(edges, meta);
    CHECK(ds.catalog_size() == 3);
    CHECK(ds.pad_index() == 3);
    std::set<int64_t> indices;
    for (const auto& it : ds.items()) indices.insert(it.index);
    CHECK(indices == std::set<int64_t>{0, 1, 2});
    // u1: b(ts1), then c(ts3, file 1) before a(ts3, file 2)
    const auto& u1 = ds.sequences()[0];
    CHECK(u1.raw_user == "u1");
    REQUIRE(u1.items.size() == 3);
    CHECK(ds.item(u1.items[0]).raw_id == "b");
    CHECK(ds.item(u1.items[1]).raw_id == "c");
    CHECK(ds.item(u1.items[2]).raw_id == "a");
    // item with no metadata gets non-empty genre
    CHECK(!ds.item(u1.items[1]).genre.empty());
}

TEST_CASE("leave-one-out split definition and conservation") {
    UserSequence s5{"u", 0, {10, 11, 12, 13, 14}, {}};
    UserSequence s3{"v", 1, {7, 8, 9}, {}};
    auto split = leave_one_out_split({s5, s3});
    CHECK(split.train_prefix[0] == std::vector<int64_t>{10, 11, 12});
    CHECK(split.valid_target[0] == 13);
    CHECK(split.test_target[0] == 14);
    CHECK(split.train_prefix[1] == std::vector<int64_t>{7});
    CHECK(split.valid_target[1] == 8);
    CHECK(split.test_target[1] == 9);
    for (size_t u = 0; u < 2; ++u)
        CHECK(split.train_prefix[u].size() + 2 == (u == 0 ? s5 : s3).items.size());

    UserSequence s2{"w", 2, {1, 2}, {}};
    CHECK_THROWS_AS(leave_one_out_split({s2}), std::invalid_argument);
}

TEST_CASE("sample_segment: short prefix gives whole prefix, long prefix caps at max_len") {
    std::mt19937 rng(1);
    std::vector<int64_t> prefix5 = {1, 2, 3, 4, 5};
    auto ex = sample_segment(prefix5, 21, rng);
    REQUIRE(ex.has_value());
    CHECK(ex->input == std::vector<int64_t>{1, 2, 3, 4});
    CHECK(ex->target == 5);

    std::vector<int64_t> prefix100(100);
    for (int i = 0; i < 100; ++i) prefix100[static_cast<size_t>(i)] = i;
    for (int t = 0; t < 50; ++t) {
        auto e = sample_segment(prefix100, 21, rng);
        REQUIRE(e.has_value());
        CHECK(e->input.size() == 20);
        CHECK(e->target == e->input.back() + 1);  // contiguity
        CHECK(e->input.front() >= 0);
        CHECK(e->input.front() <= 79);
    }

    std::vector<int64_t> prefix1 = {42};
    CHECK(!sample_segment(prefix1, 21, rng).has_value());
}

TEST_CASE("sample_segment start positions are uniform within 3 sigma") {
    std::mt19937 rng(20240);
    std::vector<int64_t> prefix(100);
    for (int i = 0; i < 100; ++i) prefix[static_cast<size_t>(i)] = i;
    const int64_t draws = 100000;
    std::vector<int64_t> counts(80, 0);
    for (int64_t t = 0; t < draws; ++t) {
        auto e = sample_segment(prefix, 21, rng);
        ++counts[static_cast<size_t>(e->input.front())];  // front encodes the start
    }
    const double p = 1.0 / 80.0;
    const double mean = draws * p;
    const double sigma = std::sqrt(draws * p * (1 - p));
    for (int64_t c : counts) CHECK(std::fabs(static_cast<double>(c) - mean) <= 3.0 * sigma + 1e-9);
}

TEST_CASE("enumerate_all_examples walks every train position with capped input") {
    std::vector<int64_t> prefix = {1, 2, 3, 4, 5, 6};
    auto all = enumerate_all_examples(prefix, 4);
    REQUIRE(all.size() == 5);
    CHECK(all[0].input == std::vector<int64_t>{1});
    CHECK(all[0].target == 2);
    CHECK(all[4].input == std::vector<int64_t>{3, 4, 5});  // capped at max_len-1 = 3
    CHECK(all[4].target == 6);
}

TEST_CASE("make_batches: sizes, left padding, masks") {
    std::vector<TrainExample> examples(10);
    for (size_t i = 0; i < 10; ++i) {
        examples[i].input = {static_cast<int64_t>(i), static_cast<int64_t>(i + 1)};
        examples[i].target = static_cast<int64_t>(i + 2);
    }
    auto batches = make_batches(examples, 4, 4, 99);
    REQUIRE(batches.size() == 3);
    CHECK(batches[0].batch_size == 4);
    CHECK(batches[1].batch_size == 4);
    CHECK(batches[2].batch_size == 2);

    const auto& b = batches[0];
    CHECK(b.input_items[0] == 99);
    CHECK(b.input_items[1] == 99);
    CHECK(b.input_items[2] == 0);
    CHECK(b.input_items[3] == 1);
    CHECK(b.input_mask[0] == 0);
    CHECK(b.input_mask[1] == 0);
    CHECK(b.input_mask[2] == 1);
    CHECK(b.input_mask[3] == 1);

    std::vector<TrainExample> full(2);
    full[0].input = {1, 2, 3, 4};
    full[1].input = {5, 6, 7, 8};
    auto fb = make_batches(full, 2, 4, 99);
    for (uint8_t m : fb[0].input_mask) CHECK(m == 1);
}
