#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "literec/training.hpp"

using namespace literec;
namespace fs = std::filesystem;

namespace {

LiteModelConfig tiny_model_cfg() {
    LiteModelConfig cfg;
    cfg.item.layers = 1;
    cfg.item.heads = 2;
    cfg.item.model_dim = 16;
    cfg.item.ff_dim = 32;
    cfg.item.max_item_text_len = 6;
    cfg.item.dropout = 0.0;
    cfg.rec.layers = 1;
    cfg.rec.heads = 2;
    cfg.rec.model_dim = 16;
    cfg.rec.ff_dim = 32;
    cfg.rec.max_seq_len = 8;
    cfg.rec.dropout = 0.0;
    return cfg;
}

// users follow "next item = previous + 1 (mod catalog)" with per-user offsets
struct ToyWorld {
    SplitView split;
    std::shared_ptr<CatalogTokens> tokens;
    int64_t catalog;
    int64_t vocab_size;
};

ToyWorld arithmetic_world(int64_t users, int64_t catalog, int64_t seq_len) {
    ToyWorld world;
    world.catalog = catalog;
    for (int64_t u = 0; u < users; ++u) {
        std::vector<int64_t> items;
        for (int64_t t = 0; t < seq_len; ++t) items.push_back((u * 3 + t) % catalog);
        world.split.train_prefix.emplace_back(items.begin(), items.end() - 2);
        world.split.valid_target.push_back(items[static_cast<size_t>(seq_len - 2)]);
        world.split.test_target.push_back(items[static_cast<size_t>(seq_len - 1)]);
    }
    // simple catalog text: each item gets 2 distinct pseudo-tokens
    auto ct = std::make_shared<CatalogTokens>();
    ct->catalog = catalog;
    ct->text_len = 2;
    ct->ids.resize(static_cast<size_t>(catalog * 2));
    ct->mask.assign(static_cast<size_t>(catalog * 2), 1);
    for (int64_t i = 0; i < catalog; ++i) {
        ct->ids[static_cast<size_t>(i * 2)] = Vocab::kReserved + (i % 17);
        ct->ids[static_cast<size_t>(i * 2 + 1)] = Vocab::kReserved + 17 + (i / 17);
    }
    world.tokens = ct;
    world.vocab_size = Vocab::kReserved + 17 + (catalog / 17) + 2;
    return world;
}

LiteModel make_model(const ToyWorld& world, uint64_t seed) {
    LiteModel model(tiny_model_cfg(), world.vocab_size, world.catalog, seed);
    model.set_catalog_tokens(world.tokens);
    return model;
}

TrainConfig fast_cfg() {
    TrainConfig cfg;
    cfg.lr = 3e-3;
    cfg.batch_size = 16;
    cfg.dropout = 0.0;
    cfg.weight_decay = 0.0;
    cfg.max_seq_len = 8;
    cfg.max_epochs = 10;
    cfg.seed = 7;
    return cfg;
}

double training_target_recall1(const LiteModel& model, const SplitView& split, int64_t max_seq_len) {
    Tape tape;
    tape.set_recording(false);
    int64_t hits = 0, total = 0;
    for (size_t u = 0; u < split.train_prefix.size(); ++u) {
        const auto& prefix = split.train_prefix[u];
        if (prefix.size() < 2) continue;
        TrainExample ex;
        const size_t start = prefix.size() > static_cast<size_t>(max_seq_len) ? prefix.size() - max_seq_len : 0;
        ex.input.assign(prefix.begin() + static_cast<int64_t>(start), prefix.end() - 1);
        ex.target = prefix.back();
        auto batch = make_batches({ex}, 1, max_seq_len - 1, model.pad_index())[0];
        auto logits = model.forward_scores(tape, batch, ForwardCtx::eval());
        int64_t best = 0;
        for (int64_t i = 1; i < model.catalog(); ++i)
            if (logits.data()[i] > logits.data()[best]) best = i;
        hits += best == ex.target ? 1 : 0;
        ++total;
        tape.reset();
    }
    return static_cast<double>(hits) / static_cast<double>(total);
}

}  // namespace

TEST_CASE("early stop: strictly increasing history continues") {
    std::vector<double> hist = {0.1, 0.2, 0.3, 0.4};
    auto r = early_stop_check(hist, 3);
    CHECK(!r.stop);
    CHECK(r.best_index == 3);
}

TEST_CASE("early stop: stops exactly patience epochs after the best") {
    std::vector<double> hist = {0.1, 0.2, 0.5};  // best at index 2 (epoch 3, 1-based)
    for (int i = 0; i < 19; ++i) {
        hist.push_back(0.4);
        CHECK(!early_stop_check(hist, 20).stop);
    }
    hist.push_back(0.4);  // 20th non-improving epoch
    auto r = early_stop_check(hist, 20);
    CHECK(r.stop);
    CHECK(r.best_index == 2);
}

TEST_CASE("early stop: a late improvement resets the counter") {
    std::vector<double> hist = {0.5};
    for (int i = 0; i < 19; ++i) hist.push_back(0.3);  // 19 flat
    hist.push_back(0.6);                               // improvement at epoch 21
    auto r = early_stop_check(hist, 20);
    CHECK(!r.stop);
    CHECK(r.best_index == 20);
    // ties with the best do NOT reset (strict improvement only)
    std::vector<double> tie = {0.5, 0.5};
    CHECK(early_stop_check(tie, 1).stop);
    CHECK(early_stop_check(tie, 1).best_index == 0);
}

TEST_CASE("compute loss equals manual -log softmax at target") {
    Tape tape;
    std::mt19937 rng(3);
    std::vector<float> vals(100);
    std::normal_distribution<float> dist(0, 1);
    for (auto& v : vals) v = dist(rng);
    auto logits = Tensor::from({1, 100}, vals);
    const int64_t target = 37;
    auto loss = tape.cross_entropy_logits(logits, {target});

    double mx = vals[0];
    for (float v : vals) mx = std::max(mx, static_cast<double>(v));
    double z = 0;
    for (float v : vals) z += std::exp(static_cast<double>(v) - mx);
    const double manual = -(static_cast<double>(vals[target]) - mx - std::log(z));
    CHECK(loss.item() == doctest::Approx(manual).epsilon(1e-5));

    // uniform logits over the catalog
    auto uniform = Tensor::zeros({1, 100});
    CHECK(tape.cross_entropy_logits(uniform, {5}).item() == doctest::Approx(std::log(100.0)).epsilon(1e-5));
}

TEST_CASE("freeze flags keep the frozen groups bit-identical") {
    auto world = arithmetic_world(24, 40, 8);

    auto run = [&](bool freeze_rec, bool freeze_head) {
        auto model = make_model(world, 11);
        auto cfg = fast_cfg();
        cfg.freeze_rec_encoder = freeze_rec;
        cfg.freeze_projection_head = freeze_head;
        Trainer trainer(model, world.split, cfg);
        auto rec_before = snapshot_params(model.rec_encoder_params());
        auto head_before = snapshot_params(model.head_params());
        auto item_before = snapshot_params(model.item_encoder_params());
        trainer.train_epoch(0);
        auto rec_after = snapshot_params(model.rec_encoder_params());
        auto head_after = snapshot_params(model.head_params());
        auto item_after = snapshot_params(model.item_encoder_params());
        auto equal = [](const std::vector<NamedTensorData>& a, const std::vector<NamedTensorData>& b) {
            for (size_t i = 0; i < a.size(); ++i)
                if (a[i].data != b[i].data) return false;
            return true;
        };
        return std::tuple{equal(rec_before, rec_after), equal(head_before, head_after),
                          equal(item_before, item_after)};
    };

    auto [rec_same_a, head_same_a, item_same_a] = run(false, true);
    CHECK(head_same_a);
    CHECK(!rec_same_a);
    CHECK(!item_same_a);

    auto [rec_same_b, head_same_b, item_same_b] = run(true, false);
    CHECK(rec_same_b);
    CHECK(!head_same_b);

    // both frozen: only item-encoder parameters change
    auto [rec_same_c, head_same_c, item_same_c] = run(true, true);
    CHECK(rec_same_c);
    CHECK(head_same_c);
    CHECK(!item_same_c);
}

TEST_CASE("training loss decreases and the toy world overfits to recall@1 = 1") {
    auto world = arithmetic_world(16, 30, 8);
    auto model = make_model(world, 5);
    auto cfg = fast_cfg();
    cfg.max_epochs = 80;
    Trainer trainer(model, world.split, cfg);
    std::vector<double> losses;
    double r1 = 0.0;
    for (int64_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        losses.push_back(trainer.train_epoch(epoch).mean_loss);
        if (epoch >= 10 && epoch % 5 == 0) {
            r1 = training_target_recall1(model, world.split, cfg.max_seq_len);
            if (r1 == 1.0) break;
        }
    }
    CHECK(losses[2] < losses[0]);
    CHECK(r1 == 1.0);
}

TEST_CASE("training is deterministic for a fixed seed") {
    auto world = arithmetic_world(20, 30, 8);
    auto run = [&]() {
        auto model = make_model(world, 13);
        Trainer trainer(model, world.split, fast_cfg());
        std::vector<double> losses;
        for (int e = 0; e < 3; ++e) losses.push_back(trainer.train_epoch(e).mean_loss);
        return losses;
    };
    CHECK(run() == run());
}

TEST_CASE("NaN loss aborts with a diagnostic") {
    auto world = arithmetic_world(12, 30, 8);
    auto model = make_model(world, 17);
    model.head().weight().vec()[0] = std::numeric_limits<float>::quiet_NaN();
    Trainer trainer(model, world.split, fast_cfg());
    try {
        trainer.train_epoch(0);
        FAIL("expected non-finite loss abort");
    } catch (const std::runtime_error& e) {
        const std::string msg = e.what();
        CHECK(msg.find("non-finite loss") != std::string::npos);
        CHECK(msg.find("lr=") != std::string::npos);
        CHECK(msg.find("batch") != std::string::npos);
    }
}

TEST_CASE("checkpoint: save/load round trip is bit-exact and resumes identically") {
    auto world = arithmetic_world(20, 30, 8);
    auto cfg = fast_cfg();

    auto model_a = make_model(world, 23);
    Trainer trainer_a(model_a, world.split, cfg);
    trainer_a.train_epoch(0);
    auto ckpt = trainer_a.make_checkpoint(0, 0.5);

    const auto path = (fs::temp_directory_path() / "literec_ckpt_test.bin").string();
    save_checkpoint(path, ckpt);
    auto loaded = load_checkpoint(path);
    REQUIRE(loaded.tensors.size() == ckpt.tensors.size());
    for (size_t i = 0; i < ckpt.tensors.size(); ++i) {
        CHECK(loaded.tensors[i].name == ckpt.tensors[i].name);
        CHECK(loaded.tensors[i].shape == ckpt.tensors[i].shape);
        CHECK(loaded.tensors[i].data == ckpt.tensors[i].data);
    }
    CHECK(loaded.opt_step == ckpt.opt_step);
    CHECK(loaded.rng_state == ckpt.rng_state);

    // one more epoch from the checkpoint reproduces the original run exactly
    const double loss_a = trainer_a.train_epoch(1).mean_loss;
    auto model_b = make_model(world, 23);
    Trainer trainer_b(model_b, world.split, cfg);
    trainer_b.restore_checkpoint(loaded);
    const double loss_b = trainer_b.train_epoch(1).mean_loss;
    CHECK(loss_a == loss_b);
    fs::remove(path);
}

TEST_CASE("checkpoint: truncation and wrong magic fail loudly") {
    auto world = arithmetic_world(12, 30, 8);
    auto model = make_model(world, 29);
    Trainer trainer(model, world.split, fast_cfg());
    auto ckpt = trainer.make_checkpoint(0, 0.0);
    const auto dir = fs::temp_directory_path();
    const auto path = (dir / "literec_ckpt_trunc.bin").string();
    save_checkpoint(path, ckpt);

    // truncate
    const auto full_size = fs::file_size(path);
    fs::resize_file(path, full_size - 16);
    CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("truncated"), std::runtime_error);

    // corrupt one payload byte -> checksum error
    save_checkpoint(path, ckpt);
    {
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(static_cast<std::streamoff>(full_size - 5));
        char c;
        f.seekg(static_cast<std::streamoff>(full_size - 5));
        f.get(c);
        c = static_cast<char>(c ^ 0x7f);
        f.seekp(static_cast<std::streamoff>(full_size - 5));
        f.put(c);
    }
    CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("checksum"), std::runtime_error);

    // wrong magic
    const auto bad = (dir / "literec_ckpt_magic.bin").string();
    {
        std::ofstream f(bad, std::ios::binary);
        f << "NOTME000restoffile";
    }
    CHECK_THROWS_WITH_AS(load_checkpoint(bad), doctest::Contains("magic"), std::runtime_error);
    fs::remove(path);
    fs::remove(bad);
}

TEST_CASE("fit selects the epoch with the best validation recall") {
    auto world = arithmetic_world(16, 30, 8);
    auto model = make_model(world, 31);
    auto cfg = fast_cfg();
    cfg.max_epochs = 6;
    cfg.early_stop_patience = 20;
    Trainer trainer(model, world.split, cfg);
    auto result = trainer.fit();
    REQUIRE(result.epochs_run >= 1);
    int64_t argmax = 0;
    for (size_t i = 1; i < result.valid_r10_history.size(); ++i)
        if (result.valid_r10_history[i] > result.valid_r10_history[static_cast<size_t>(argmax)])
            argmax = static_cast<int64_t>(i);
    CHECK(result.best_epoch == argmax);
    // restored parameters reproduce the recorded best validation value
    CHECK(trainer.validation_r10() == doctest::Approx(result.best_valid_r10).epsilon(1e-7));
}

TEST_CASE("cached-trainable phase: only the table and unfrozen groups update") {
    auto world = arithmetic_world(16, 30, 8);
    auto model = make_model(world, 37);
    auto cache = precompute_all_embeddings(model.item_encoder(), model.catalog_tokens());
    model.use_cached_table(cache.data, true);
    auto cfg = fast_cfg();
    cfg.fine_tune_cached_embeddings = true;
    Trainer trainer(model, world.split, cfg);
    auto item_before = snapshot_params(model.item_encoder_params());
    auto table_before = model.cached_table().vec();
    trainer.train_epoch(0);
    auto item_after = snapshot_params(model.item_encoder_params());
    for (size_t i = 0; i < item_before.size(); ++i) CHECK(item_before[i].data == item_after[i].data);
    CHECK(table_before != model.cached_table().vec());
}
