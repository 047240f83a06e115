#include "literec/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "literec/config.hpp"
#include "literec/evalbench.hpp"
#include "literec/model.hpp"
#include "literec/serialize.hpp"
#include "literec/synthetic.hpp"
#include "literec/training.hpp"
#include "literec/variants.hpp"

namespace literec::cli {

namespace fs = std::filesystem;

namespace {

// ---- workspace / artifacts ----

struct Workspace {
    fs::path out;
    RunConfig cfg;
    bool force = false;

    fs::path prepared() const { return out / "prepared"; }
    fs::path manifest_path() const { return out / "manifest.tsv"; }

    bool outputs_ready(const std::vector<fs::path>& paths, const std::string& command) const {
        if (force) return false;
        for (const auto& p : paths)
            if (!fs::exists(p)) return false;
        std::cout << command << ": outputs already complete under " << out << " (use --force to redo)\n";
        return true;
    }

    void record_artifacts(const std::vector<fs::path>& paths, const std::string& command) const {
        std::map<std::string, std::pair<std::string, std::string>> rows;  // rel path -> (checksum, cmd)
        if (fs::exists(manifest_path())) {
            std::ifstream in(manifest_path());
            std::string line;
            std::getline(in, line);  // header
            while (std::getline(in, line)) {
                std::istringstream ss(line);
                std::string rel, sum, cmd;
                if (std::getline(ss, rel, '\t') && std::getline(ss, sum, '\t') && std::getline(ss, cmd))
                    rows[rel] = {sum, cmd};
            }
        }
        for (const auto& p : paths) {
            std::ostringstream sum;
            sum << std::hex << file_checksum(p.string());
            rows[fs::relative(p, out).string()] = {sum.str(), command};
        }
        std::ofstream outf(manifest_path());
        outf << "artifact\tchecksum\tcommand\n";
        for (const auto& [rel, info] : rows) outf << rel << '\t' << info.first << '\t' << info.second << '\n';
    }
};

// write through a ".incomplete" name so failures never leave a final artifact
template <typename Writer>
void atomic_write(const fs::path& path, Writer&& writer) {
    fs::create_directories(path.parent_path());
    const fs::path tmp = path.string() + ".incomplete";
    writer(tmp.string());
    fs::rename(tmp, path);
}

struct Prepared {
    Dataset dataset;
    SplitView split;
    Vocab vocab;
};

void save_prepared(const Workspace& ws, const Dataset& ds, const SplitView& split, const Vocab& vocab) {
    const auto dir = ws.prepared();
    atomic_write(dir / "items.tsv", [&](const std::string& p) {
        std::ofstream out(p);
        out << "index\traw_id\ttitle\tgenre\n";
        for (const auto& item : ds.items())
            out << item.index << '\t' << item.raw_id << '\t' << item.title << '\t' << item.genre << '\n';
    });
    atomic_write(dir / "sequences.tsv", [&](const std::string& p) {
        std::ofstream out(p);
        out << "user_index\traw_user\titems\ttimestamps\n";
        for (const auto& seq : ds.sequences()) {
            out << seq.user_index << '\t' << seq.raw_user << '\t';
            for (size_t i = 0; i < seq.items.size(); ++i) out << (i ? "," : "") << seq.items[i];
            out << '\t';
            for (size_t i = 0; i < seq.timestamps.size(); ++i) out << (i ? "," : "") << seq.timestamps[i];
            out << '\n';
        }
    });
    atomic_write(dir / "split.tsv", [&](const std::string& p) {
        std::ofstream out(p);
        out << "user_index\ttrain\tvalid\ttest\n";
        for (size_t u = 0; u < split.train_prefix.size(); ++u) {
            out << u << '\t';
            for (size_t i = 0; i < split.train_prefix[u].size(); ++i)
                out << (i ? "," : "") << split.train_prefix[u][i];
            out << '\t' << split.valid_target[u] << '\t' << split.test_target[u] << '\n';
        }
    });
    atomic_write(dir / "vocab.txt", [&](const std::string& p) {
        std::ofstream out(p);
        vocab.save(out);
    });
}

std::vector<int64_t> parse_int_list(const std::string& s) {
    std::vector<int64_t> out;
    std::stringstream ss(s);
    std::string piece;
    while (std::getline(ss, piece, ','))
        if (!piece.empty()) out.push_back(std::stoll(piece));
    return out;
}

Prepared load_prepared(const Workspace& ws) {
    const auto dir = ws.prepared();
    if (!fs::exists(dir / "items.tsv"))
        throw std::runtime_error("no prepared dataset under " + ws.out.string() + "; run `prepare` first");

    std::vector<ItemRecord> items;
    {
        std::ifstream in(dir / "items.tsv");
        std::string line;
        std::getline(in, line);
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            std::istringstream ss(line);
            ItemRecord rec;
            std::string index;
            std::getline(ss, index, '\t');
            rec.index = std::stoll(index);
            std::getline(ss, rec.raw_id, '\t');
            std::getline(ss, rec.title, '\t');
            std::getline(ss, rec.genre);
            items.push_back(std::move(rec));
        }
    }
    std::vector<UserSequence> sequences;
    {
        std::ifstream in(dir / "sequences.tsv");
        std::string line;
        std::getline(in, line);
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            std::istringstream ss(line);
            UserSequence seq;
            std::string field;
            std::getline(ss, field, '\t');
            seq.user_index = std::stoll(field);
            std::getline(ss, seq.raw_user, '\t');
            std::getline(ss, field, '\t');
            seq.items = parse_int_list(field);
            std::getline(ss, field);
            seq.timestamps = parse_int_list(field);
            sequences.push_back(std::move(seq));
        }
    }
    Prepared prep{Dataset::from_parts(std::move(items), std::move(sequences)), {}, {}};
    prep.split = leave_one_out_split(prep.dataset.sequences());
    std::ifstream vin(dir / "vocab.txt");
    prep.vocab = Vocab::load(vin);
    return prep;
}

// ---- config -> module configs ----

ItemEncoderConfig item_cfg_from(const RunConfig& cfg) {
    ItemEncoderConfig c;
    c.layers = cfg.get_int("model.item.layers", 2);
    c.heads = cfg.get_int("model.item.heads", 4);
    c.model_dim = cfg.get_int("model.item.dim", 64);
    c.ff_dim = cfg.get_int("model.item.ff_dim", 256);
    c.max_item_text_len = cfg.get_int("model.item.max_text_len", 32);
    c.dropout = cfg.get_double("model.item.dropout", 0.1);
    return c;
}

RecEncoderConfig rec_cfg_from(const RunConfig& cfg) {
    RecEncoderConfig c;
    c.layers = cfg.get_int("model.rec.layers", 2);
    c.heads = cfg.get_int("model.rec.heads", 4);
    c.model_dim = cfg.get_int("model.rec.dim", 64);
    c.ff_dim = cfg.get_int("model.rec.ff_dim", 256);
    c.max_seq_len = cfg.get_int("model.rec.max_seq_len", 21);
    c.dropout = cfg.get_double("model.rec.dropout", 0.1);
    return c;
}

Seq2SeqConfig baseline_cfg_from(const RunConfig& cfg) {
    Seq2SeqConfig c;
    c.layers = cfg.get_int("baseline.layers", 2);
    c.heads = cfg.get_int("baseline.heads", 4);
    c.model_dim = cfg.get_int("baseline.dim", 64);
    c.ff_dim = cfg.get_int("baseline.ff_dim", 256);
    c.max_input_len = cfg.get_int("baseline.max_input_len", 96);
    c.max_output_len = cfg.get_int("baseline.max_output_len", 8);
    c.vocab_size = cfg.get_int("baseline.vocab_size", 4096);
    c.dropout = cfg.get_double("baseline.dropout", 0.1);
    return c;
}

TrainConfig train_cfg_from(const RunConfig& cfg) {
    TrainConfig c = TrainConfig::profile(cfg.get_str("train.profile", "desk"));
    c.strategy = parse_strategy(cfg.get_str("train.strategy", "sampling"));
    c.lr = cfg.get_double("train.lr", c.lr);
    c.batch_size = cfg.get_int("train.batch_size", c.batch_size);
    c.dropout = cfg.get_double("train.dropout", c.dropout);
    c.weight_decay = cfg.get_double("train.weight_decay", c.weight_decay);
    c.warmup_fraction = cfg.get_double("train.warmup_fraction", c.warmup_fraction);
    c.adam_eps = cfg.get_double("train.adam_eps", c.adam_eps);
    c.max_seq_len = cfg.get_int("model.rec.max_seq_len", 21);
    c.early_stop_patience = cfg.get_int("train.patience", 20);
    c.max_epochs = cfg.get_int("train.max_epochs", 200);
    c.seed = static_cast<uint64_t>(cfg.get_int("seed", 42));
    c.freeze_rec_encoder = cfg.get_bool("train.freeze_rec_encoder", false);
    c.freeze_projection_head = cfg.get_bool("train.freeze_projection_head", false);
    c.fine_tune_cached_embeddings = cfg.get_bool("train.fine_tune_cached_embeddings", false);
    return c;
}

EvalOptions eval_opts_from(const RunConfig& cfg) {
    EvalOptions o;
    o.ks = cfg.get_int_list("eval.ks", {10, 20});
    o.max_seq_len = cfg.get_int("model.rec.max_seq_len", 21);
    o.include_valid_in_test_input = cfg.get_bool("eval.include_valid_input", true);
    o.exclude_valid_from_candidates = cfg.get_bool("eval.exclude_valid", true);
    o.eval_batch = cfg.get_int("eval.batch", 64);
    return o;
}

LiteModel build_lite(const Workspace& ws, const Prepared& prep) {
    LiteModelConfig mc{item_cfg_from(ws.cfg), rec_cfg_from(ws.cfg)};
    LiteModel model(mc, prep.vocab.size(), prep.dataset.catalog_size(),
                    static_cast<uint64_t>(ws.cfg.get_int("seed", 42)));
    model.set_catalog_tokens(std::make_shared<CatalogTokens>(
        CatalogTokens::build(prep.dataset, prep.vocab, mc.item.max_item_text_len)));
    return model;
}

std::array<uint8_t, 32> cache_fingerprint(const Vocab& vocab, const LiteModel& model) {
    Fingerprint fp;
    std::ostringstream vs;
    vocab.save(vs);
    fp.update_string(vs.str());
    const auto& c = model.config().item;
    for (int64_t v : {c.layers, c.heads, c.model_dim, c.ff_dim, c.max_item_text_len}) fp.update_i64(v);
    for (const auto& p : model.item_encoder_params()) {
        fp.update_string(p.name);
        fp.update_f32(p.tensor.vec());
    }
    return fp.digest();
}

fs::path checkpoint_path(const Workspace& ws) { return ws.out / "checkpoints" / "best.ckpt"; }
fs::path cache_path(const Workspace& ws) { return ws.out / "item_embeddings.cache"; }

void restore_lite(LiteModel& model, const Checkpoint& ckpt) {
    const bool has_cached_table =
        std::any_of(ckpt.tensors.begin(), ckpt.tensors.end(),
                    [](const NamedTensorData& t) { return t.name == "cached_items"; });
    if (has_cached_table) {
        const auto it = std::find_if(ckpt.tensors.begin(), ckpt.tensors.end(),
                                     [](const NamedTensorData& t) { return t.name == "cached_items"; });
        model.use_cached_table(it->data, true);
    }
    auto params = model.all_params();
    restore_params(ckpt.tensors, params);
}

LiteModel load_trained_lite(const Workspace& ws, const Prepared& prep) {
    const auto path = checkpoint_path(ws);
    if (!fs::exists(path))
        throw std::runtime_error("no checkpoint at " + path.string() + "; run `train` first");
    auto model = build_lite(ws, prep);
    restore_lite(model, load_checkpoint(path.string()));
    return model;
}

// use the cache file when its fingerprint matches, otherwise recompute
void attach_frozen_cache(const Workspace& ws, const Prepared& prep, LiteModel& model) {
    if (model.source() == ItemVecSource::CachedTrainable) return;  // phase-2 table wins
    const auto expect = cache_fingerprint(prep.vocab, model);
    if (fs::exists(cache_path(ws))) {
        auto cache = load_embedding_cache(cache_path(ws).string());
        if (cache.fingerprint == expect && cache.rows == prep.dataset.catalog_size() + 1) {
            model.use_cached_table(cache.data, false);
            return;
        }
        std::cout << "embedding cache is stale (fingerprint mismatch); recomputing\n";
    }
    auto cache = precompute_all_embeddings(model.item_encoder(), model.catalog_tokens());
    model.use_cached_table(cache.data, false);
}

void print_report(const std::string& title, const EvalReport& report) {
    std::cout << title << " (" << report.user_count << " users)\n";
    for (const auto& row : report.rows)
        std::cout << "  " << row.name << "@" << row.k << " = " << row.value << "\n";
}

// ---- commands ----

int cmd_synth(const Workspace& ws) {
    SyntheticConfig sc;
    sc.users = ws.cfg.get_int("synth.users", 400);
    sc.items = ws.cfg.get_int("synth.items", 600);
    sc.clusters = ws.cfg.get_int("synth.clusters", 8);
    sc.min_len = ws.cfg.get_int("synth.min_len", 8);
    sc.max_len = ws.cfg.get_int("synth.max_len", 40);
    sc.seed = static_cast<uint64_t>(ws.cfg.get_int("seed", 42));
    const std::string path = ws.cfg.get_str("data.path", "");
    if (path.empty()) throw std::runtime_error("synth: data.path (--data) is required");
    const auto format = parse_format(ws.cfg.get_str("data.format", "tsv"));
    auto data = generate_synthetic(sc);
    write_synthetic(data, path, format);
    std::cout << "synth: wrote " << data.interactions.size() << " interactions over " << sc.items << " items to "
              << path << " (" << format_name(format) << ")\n";
    return 0;
}

int cmd_prepare(const Workspace& ws) {
    const std::vector<fs::path> outputs = {ws.prepared() / "items.tsv", ws.prepared() / "sequences.tsv",
                                           ws.prepared() / "split.tsv", ws.prepared() / "vocab.txt"};
    if (ws.outputs_ready(outputs, "prepare")) return 0;
    const std::string path = ws.cfg.get_str("data.path", "");
    if (path.empty()) throw std::runtime_error("prepare: data.path (--data) is required");
    const auto format = parse_format(ws.cfg.get_str("data.format", "tsv"));
    const int64_t k = ws.cfg.get_int("data.kcore", 5);

    auto loaded = load_interactions(path, format);
    auto filtered = kcore_filter(std::move(loaded.interactions), k);
    auto ds = Dataset::build(filtered, loaded.metadata);
    auto split = leave_one_out_split(ds.sequences());

    std::vector<std::string> corpus;
    for (const auto& item : ds.items()) corpus.push_back(item.title + " " + kFieldSep + " " + item.genre);
    auto vocab = build_vocab(corpus, ws.cfg.get_int("vocab.min_freq", 1));

    save_prepared(ws, ds, split, vocab);
    ws.record_artifacts(outputs, "prepare");
    std::cout << "prepare: " << ds.user_count() << " users, " << ds.catalog_size() << " items, "
              << filtered.size() << " interactions after " << k << "-core, vocab " << vocab.size() << "\n";
    return 0;
}

int cmd_train(const Workspace& ws) {
    const std::vector<fs::path> outputs = {checkpoint_path(ws), ws.out / "train_log.tsv"};
    if (ws.outputs_ready(outputs, "train")) return 0;
    auto prep = load_prepared(ws);
    auto model = build_lite(ws, prep);
    auto tc = train_cfg_from(ws.cfg);

    const bool phase2 = tc.fine_tune_cached_embeddings;
    auto phase1_cfg = tc;
    phase1_cfg.fine_tune_cached_embeddings = false;
    Trainer trainer(model, prep.split, phase1_cfg);
    auto fit = trainer.fit();
    std::cout << "train: phase 1 best valid R@10 = " << fit.best_valid_r10 << " at epoch " << fit.best_epoch + 1
              << " (" << fit.epochs_run << " epochs run)\n";

    Checkpoint best = trainer.make_checkpoint(fit.best_epoch, fit.best_valid_r10);
    std::vector<double> phase2_losses;
    if (phase2) {
        auto cache = precompute_all_embeddings(model.item_encoder(), model.catalog_tokens());
        model.use_cached_table(cache.data, true);
        auto p2 = tc;
        p2.seed = tc.seed + 1;
        Trainer trainer2(model, prep.split, p2);
        auto fit2 = trainer2.fit();
        phase2_losses = fit2.loss_history;
        std::cout << "train: phase 2 best valid R@10 = " << fit2.best_valid_r10 << " at epoch "
                  << fit2.best_epoch + 1 << "\n";
        if (fit2.best_valid_r10 >= fit.best_valid_r10)
            best = trainer2.make_checkpoint(fit2.best_epoch, fit2.best_valid_r10);
        else
            std::cout << "train: phase 2 did not improve; keeping phase 1 weights\n";
    }

    atomic_write(checkpoint_path(ws), [&](const std::string& p) { save_checkpoint(p, best); });
    atomic_write(ws.out / "train_log.tsv", [&](const std::string& p) {
        std::ofstream out(p);
        out << "epoch\tloss\tvalid_r10\n";
        for (size_t e = 0; e < fit.loss_history.size(); ++e)
            out << e + 1 << '\t' << fit.loss_history[e] << '\t' << fit.valid_r10_history[e] << '\n';
        for (size_t e = 0; e < phase2_losses.size(); ++e) out << "p2_" << e + 1 << '\t' << phase2_losses[e] << "\t\n";
    });
    ws.record_artifacts(outputs, "train");
    return 0;
}

int cmd_precompute(const Workspace& ws) {
    const std::vector<fs::path> outputs = {cache_path(ws)};
    if (ws.outputs_ready(outputs, "precompute")) return 0;
    auto prep = load_prepared(ws);
    auto model = load_trained_lite(ws, prep);
    if (model.source() == ItemVecSource::CachedTrainable)
        std::cout << "precompute: checkpoint carries fine-tuned item vectors; caching the encoder output anyway\n";
    auto cache = precompute_all_embeddings(model.item_encoder(), model.catalog_tokens());
    cache.fingerprint = cache_fingerprint(prep.vocab, model);
    atomic_write(cache_path(ws), [&](const std::string& p) { save_embedding_cache(p, cache); });
    ws.record_artifacts(outputs, "precompute");
    std::cout << "precompute: cached " << cache.rows - 1 << " item embeddings (dim " << cache.dim << ")\n";
    return 0;
}

int cmd_eval(const Workspace& ws) {
    const std::vector<fs::path> outputs = {ws.out / "eval_test.tsv", ws.out / "eval_valid.tsv"};
    if (ws.outputs_ready(outputs, "eval")) return 0;
    auto prep = load_prepared(ws);
    auto model = load_trained_lite(ws, prep);
    attach_frozen_cache(ws, prep, model);
    auto opts = eval_opts_from(ws.cfg);

    auto test = evaluate_full(model, prep.split, EvalPhase::Test, opts);
    auto valid = evaluate_full(model, prep.split, EvalPhase::Valid, opts);
    test.config_fingerprint = ws.cfg.fingerprint();
    valid.config_fingerprint = ws.cfg.fingerprint();
    atomic_write(ws.out / "eval_test.tsv", [&](const std::string& p) { write_eval_report(p, test); });
    atomic_write(ws.out / "eval_valid.tsv", [&](const std::string& p) { write_eval_report(p, valid); });
    ws.record_artifacts(outputs, "eval");
    print_report("test", test);
    print_report("valid", valid);
    return 0;
}

int cmd_topn(const Workspace& ws) {
    const std::vector<fs::path> outputs = {ws.out / "topn.tsv"};
    if (ws.outputs_ready(outputs, "topn")) return 0;
    auto prep = load_prepared(ws);
    auto model = load_trained_lite(ws, prep);
    attach_frozen_cache(ws, prep, model);
    auto opts = eval_opts_from(ws.cfg);
    const int64_t negatives = ws.cfg.get_int("topn.negatives", 99);
    auto report = topn_sampled_eval(model, prep.split, prep.dataset.catalog_size(), negatives,
                                    static_cast<uint64_t>(ws.cfg.get_int("seed", 42)), EvalPhase::Test, opts);
    report.config_fingerprint = ws.cfg.fingerprint();
    atomic_write(ws.out / "topn.tsv", [&](const std::string& p) { write_eval_report(p, report); });
    ws.record_artifacts(outputs, "topn");
    print_report("top-n (" + std::to_string(negatives) + " negatives)", report);
    return 0;
}

struct BenchResult {
    std::string pipeline;
    double median_per_batch32 = 0.0;
    double mean_per_batch32 = 0.0;
    std::map<std::string, double> component_per_batch32;
};

BenchResult summarize_reps(const std::string& name, const std::vector<TimingReport>& reps) {
    BenchResult r;
    r.pipeline = name;
    std::vector<double> totals;
    for (const auto& rep : reps) {
        totals.push_back(rep.per_batch32_ms());
        for (const auto& [comp, ms] : rep.component_ms)
            r.component_per_batch32[comp] += rep.component_per_batch32_ms(comp) / static_cast<double>(reps.size());
        r.mean_per_batch32 += rep.per_batch32_ms() / static_cast<double>(reps.size());
    }
    std::sort(totals.begin(), totals.end());
    r.median_per_batch32 = totals[totals.size() / 2];
    return r;
}

int cmd_bench(const Workspace& ws) {
    const std::vector<fs::path> outputs = {ws.out / "bench.tsv", ws.out / "lengths.tsv", ws.out / "redundancy.tsv"};
    if (ws.outputs_ready(outputs, "bench")) return 0;
    auto prep = load_prepared(ws);

    // a trained checkpoint is used when present; timing only needs matched sizes
    LiteModel model = fs::exists(checkpoint_path(ws)) ? load_trained_lite(ws, prep) : build_lite(ws, prep);
    attach_frozen_cache(ws, prep, model);

    auto opts = eval_opts_from(ws.cfg);
    auto cases = build_eval_cases(prep.split, EvalPhase::Test, opts);
    if (cases.empty()) throw std::runtime_error("bench: no evaluation cases");

    const auto beams = ws.cfg.get_int_list("bench.beams", {1, 5, 20});
    const int64_t warmup = ws.cfg.get_int("bench.warmup", 3);
    const int64_t reps = ws.cfg.get_int("bench.reps", 5);
    const int64_t batches = ws.cfg.get_int("bench.batches", 100);
    const int64_t batch_size = ws.cfg.get_int("bench.batch_size", 32);
    const int64_t k = 20;

    auto batch_cases = [&](int64_t batch_index) {
        std::vector<EvalCase> chunk;
        for (int64_t i = 0; i < batch_size; ++i)
            chunk.push_back(cases[static_cast<size_t>((batch_index * batch_size + i) % cases.size())]);
        return chunk;
    };

    std::vector<BenchResult> results;

    {  // projection-head pipeline
        std::vector<TimingReport> rep_reports;
        for (int64_t rep = 0; rep < reps; ++rep) {
            rep_reports.push_back(time_components(
                [&](int64_t b, ComponentTimer& timer) {
                    auto chunk = batch_cases(b);
                    std::vector<TrainExample> examples(chunk.size());
                    for (size_t i = 0; i < chunk.size(); ++i) {
                        examples[i].input = chunk[i].input;
                        examples[i].target = chunk[i].ground_truth;
                    }
                    auto batch =
                        make_batches(examples, batch_size, opts.max_seq_len - 1, model.pad_index())[0];
                    Tape tape;
                    tape.set_recording(false);
                    Tensor user_repr;
                    {
                        ComponentTimer::Scope scope(timer, "encoding");
                        user_repr = model.user_repr(tape, batch, ForwardCtx::eval());
                    }
                    {
                        ComponentTimer::Scope scope(timer, "head_scoring");
                        auto logits = model.head().score(tape, user_repr);
                        for (size_t i = 0; i < chunk.size(); ++i) {
                            std::unordered_set<int64_t> exclude(chunk[i].exclude.begin(), chunk[i].exclude.end());
                            std::span<const float> row(logits.data() + static_cast<int64_t>(i) * model.catalog(),
                                                       static_cast<size_t>(model.catalog()));
                            top_k_recommend(row, exclude,
                                            std::min<int64_t>(k, model.catalog() -
                                                                     static_cast<int64_t>(exclude.size())));
                        }
                    }
                },
                batches, batch_size, warmup));
        }
        results.push_back(summarize_reps("projection_head", rep_reports));
    }

    GenVocab gen_vocab(ws.cfg.get_int("baseline.vocab_size", 4096));
    Seq2Seq baseline(baseline_cfg_from(ws.cfg), static_cast<uint64_t>(ws.cfg.get_int("seed", 42)));
    for (int64_t beam : beams) {
        std::vector<TimingReport> rep_reports;
        for (int64_t rep = 0; rep < reps; ++rep) {
            rep_reports.push_back(time_components(
                [&](int64_t b, ComponentTimer& timer) {
                    auto chunk = batch_cases(b);
                    for (const auto& c : chunk) {
                        auto tokens = id_token_input(c.input, gen_vocab, baseline.config().max_input_len);
                        Tape tape;
                        tape.set_recording(false);
                        std::vector<uint8_t> mask(tokens.size(), 1);
                        Tensor enc_out;
                        {
                            ComponentTimer::Scope scope(timer, "encoding");
                            enc_out = baseline.encode(tape, tokens, mask, 1,
                                                      static_cast<int64_t>(tokens.size()), ForwardCtx::eval());
                        }
                        Seq2Seq::DecodeResult decoded;
                        {
                            ComponentTimer::Scope scope(timer, "beam_search");
                            decoded = baseline.beam_search_from_encoded(
                                tape, enc_out, mask, beam, baseline.config().max_output_len,
                                std::min<int64_t>(beam, k), ws.cfg.get_double("baseline.alpha", 0.0));
                        }
                        std::vector<std::vector<int64_t>> seqs;
                        for (const auto& bm : decoded.beams) seqs.push_back(bm.tokens);
                        parse_generated_items(seqs, gen_vocab, prep.dataset.catalog_size());
                    }
                },
                batches, batch_size, warmup));
        }
        results.push_back(summarize_reps("beam_search_b" + std::to_string(beam), rep_reports));
    }

    atomic_write(ws.out / "bench.tsv", [&](const std::string& p) {
        std::ofstream out(p);
        out << "pipeline\tmetric\tms_per_batch32\n";
        for (const auto& r : results) {
            out << r.pipeline << "\ttotal_median\t" << r.median_per_batch32 << '\n';
            out << r.pipeline << "\ttotal_mean\t" << r.mean_per_batch32 << '\n';
            for (const auto& [comp, ms] : r.component_per_batch32) out << r.pipeline << '\t' << comp << '\t' << ms << '\n';
        }
        const auto& lite = results.front();
        for (size_t i = 1; i < results.size(); ++i)
            out << results[i].pipeline << "\tspeedup_vs_projection_head\t"
                << results[i].median_per_batch32 / std::max(1e-9, lite.median_per_batch32) << '\n';
        out << "hardware\t" << hardware_descriptor() << "\t0\n";
    });

    atomic_write(ws.out / "lengths.tsv", [&](const std::string& p) {
        std::ofstream out(p);
        out << "pipeline\tmean_input_length\n";
        out << "hierarchical\t"
            << measure_input_length(PipelineKind::Hierarchical, cases, prep.dataset, prep.vocab,
                                    item_cfg_from(ws.cfg).max_item_text_len)
            << '\n';
        out << "id_tokens\t"
            << measure_input_length(PipelineKind::IdTokens, cases, prep.dataset, prep.vocab,
                                    item_cfg_from(ws.cfg).max_item_text_len)
            << '\n';
        out << "title_tokens\t"
            << measure_input_length(PipelineKind::TitleTokens, cases, prep.dataset, prep.vocab,
                                    item_cfg_from(ws.cfg).max_item_text_len)
            << '\n';
    });

    atomic_write(ws.out / "redundancy.tsv", [&](const std::string& p) {
        std::ofstream out(p);
        out << "mode\tencoder_calls\tdistinct_items\ttotal_occurrences\tratio\n";
        for (bool cached : {true, false}) {
            auto r = count_redundant_encodings(cases, cached);
            out << (cached ? "cached" : "uncached") << '\t' << r.encoder_calls << '\t' << r.distinct_items << '\t'
                << r.total_occurrences << '\t' << r.ratio() << '\n';
        }
    });

    ws.record_artifacts(outputs, "bench");
    for (const auto& r : results)
        std::cout << "bench: " << r.pipeline << " median " << r.median_per_batch32 << " ms per batch of 32\n";
    return 0;
}

int cmd_ablate(const Workspace& ws) {
    const std::vector<fs::path> outputs = {ws.out / "ablate.tsv"};
    if (ws.outputs_ready(outputs, "ablate")) return 0;
    auto prep = load_prepared(ws);
    auto opts = eval_opts_from(ws.cfg);
    auto tc = train_cfg_from(ws.cfg);

    struct Row {
        std::string name;
        EvalReport report;
    };
    std::vector<Row> rows;

    auto run_lite = [&](const std::string& name, bool fix_rec, bool fix_head) {
        auto model = build_lite(ws, prep);
        auto cfg = tc;
        cfg.freeze_rec_encoder = fix_rec;
        cfg.freeze_projection_head = fix_head;
        cfg.fine_tune_cached_embeddings = false;
        Trainer trainer(model, prep.split, cfg);
        auto fit = trainer.fit();
        auto cache = precompute_all_embeddings(model.item_encoder(), model.catalog_tokens());
        model.use_cached_table(cache.data, false);
        auto report = evaluate_full(model, prep.split, EvalPhase::Test, opts);
        std::cout << "ablate: " << name << " R@10 = " << report.get("R", 10) << " (" << fit.epochs_run
                  << " epochs)\n";
        rows.push_back({name, std::move(report)});
        return fit.epochs_run;
    };

    const int64_t lite_epochs = run_lite("lite", false, false);
    run_lite("lite_fixRec", true, false);
    run_lite("lite_fixHead", false, true);

    // the baselines train with the same epoch budget the base model used
    BaselineTrainConfig bc;
    bc.epochs = lite_epochs;
    bc.batch_size = tc.batch_size;
    bc.lr = tc.lr;
    bc.dropout = tc.dropout;
    bc.weight_decay = tc.weight_decay;
    bc.warmup_fraction = tc.warmup_fraction;
    bc.adam_eps = tc.adam_eps;
    bc.seed = tc.seed;

    GenVocab gen_vocab(ws.cfg.get_int("baseline.vocab_size", 4096));
    const auto s2s_cfg = baseline_cfg_from(ws.cfg);
    const int64_t per_item_len = ws.cfg.get_int("baseline.title_per_item_len", 8);

    auto training_examples = [&](VariantInput kind, int64_t max_len) {
        std::vector<TokenExample> examples;
        std::mt19937 rng(static_cast<uint32_t>(tc.seed));
        for (const auto& prefix : prep.split.train_prefix) {
            auto seg = sample_segment(prefix, tc.max_seq_len, rng);
            if (!seg) continue;
            TokenExample ex;
            ex.tokens = kind == VariantInput::IdTokens
                            ? id_token_input(seg->input, gen_vocab, max_len)
                            : title_token_input(seg->input, prep.dataset, prep.vocab, per_item_len, max_len);
            ex.target = seg->target;
            examples.push_back(std::move(ex));
        }
        return examples;
    };

    {
        Seq2Seq model(s2s_cfg, tc.seed);
        auto examples = training_examples(VariantInput::IdTokens, s2s_cfg.max_input_len);
        // several epochs of segment resampling, matching the lite budget
        std::vector<TokenExample> all_examples;
        for (int64_t e = 0; e < 1; ++e)
            all_examples.insert(all_examples.end(), examples.begin(), examples.end());
        BaselineTrainConfig cfg = bc;
        train_seq2seq(model, all_examples, gen_vocab, cfg);
        GenerativeEvalOptions gopts;
        gopts.beam_width = ws.cfg.get_int("baseline.beam_width", 20);
        gopts.max_steps = s2s_cfg.max_output_len;
        gopts.alpha = ws.cfg.get_double("baseline.alpha", 0.0);
        gopts.base = opts;
        auto report = evaluate_generative(model, gen_vocab, prep.dataset.catalog_size(), prep.split, EvalPhase::Test,
                                          gopts);
        std::cout << "ablate: full_beam R@10 = " << report.get("R", 10) << "\n";
        rows.push_back({"full_beam", std::move(report)});
    }

    auto run_encoder_head = [&](const std::string& name, VariantInput kind) {
        ItemEncoderConfig enc_cfg = item_cfg_from(ws.cfg);
        enc_cfg.max_item_text_len = s2s_cfg.max_input_len;
        const int64_t vocab_size = kind == VariantInput::IdTokens ? gen_vocab.size() : prep.vocab.size();
        EncoderHeadModel model(enc_cfg, vocab_size, prep.dataset.catalog_size(), tc.seed);
        train_encoder_head(model, training_examples(kind, enc_cfg.max_item_text_len), bc);
        auto report = evaluate_encoder_head(model, prep.split, prep.dataset, gen_vocab, prep.vocab, kind,
                                            per_item_len, EvalPhase::Test, opts);
        std::cout << "ablate: " << name << " R@10 = " << report.get("R", 10) << "\n";
        rows.push_back({name, std::move(report)});
    };
    run_encoder_head("wo_d", VariantInput::IdTokens);
    run_encoder_head("wo_d_tid", VariantInput::TitleTokens);

    atomic_write(ws.out / "ablate.tsv", [&](const std::string& p) {
        std::ofstream out(p);
        out << "config";
        for (int64_t k : opts.ks) out << "\tR@" << k << "\tN@" << k;
        out << "\n";
        for (const auto& row : rows) {
            out << row.name;
            for (int64_t k : opts.ks) out << '\t' << row.report.get("R", k) << '\t' << row.report.get("N", k);
            out << '\n';
        }
    });
    ws.record_artifacts(outputs, "ablate");
    return 0;
}

}  // namespace

int dispatch(const std::vector<std::string>& args) {
    CLI::App app{"hierarchical sequential recommender with a projection head, plus a generative beam-search baseline"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_file, out_dir = "runs/default", data_path, data_format;
    bool force = false;
    app.add_option("--config", config_file, "key=value config file (default: $LLREC_CONFIG)");
    app.add_option("--out", out_dir, "output directory for artifacts");
    app.add_flag("--force", force, "redo even when outputs exist");

    // collected overrides: key, value
    std::vector<std::pair<std::string, std::string>> overrides;
    auto add_override = [&overrides](const std::string& key) {
        return [&overrides, key](const std::string& v) { overrides.emplace_back(key, v); };
    };

    auto* synth = app.add_subcommand("synth", "write a synthetic dataset in a loader format");
    auto* prepare = app.add_subcommand("prepare", "ingest, k-core filter, split, build vocab");
    auto* train = app.add_subcommand("train", "train the hierarchical model");
    auto* precompute = app.add_subcommand("precompute", "write the item embedding cache");
    auto* eval = app.add_subcommand("eval", "full-catalog evaluation of the trained model");
    auto* topn = app.add_subcommand("topn", "sampled top-n evaluation");
    auto* bench = app.add_subcommand("bench", "per-component timing, input-length and redundancy meters");
    auto* ablate = app.add_subcommand("ablate", "freeze-flag grid and baseline variants comparison");

    for (auto* cmd : {synth, prepare}) {
        cmd->add_option_function<std::string>("--data", add_override("data.path"), "dataset directory");
        cmd->add_option_function<std::string>("--format", add_override("data.format"),
                                              "movielens-dat | jsonl | tsv");
    }
    prepare->add_option_function<std::string>("--kcore", add_override("data.kcore"), "k-core threshold");
    synth->add_option_function<std::string>("--users", add_override("synth.users"), "synthetic user count");
    synth->add_option_function<std::string>("--items", add_override("synth.items"), "synthetic item count");
    for (auto* cmd : {train, ablate}) {
        cmd->add_option_function<std::string>("--strategy", add_override("train.strategy"), "sampling | all");
        cmd->add_option_function<std::string>("--profile", add_override("train.profile"), "desk | paper");
        cmd->add_option_function<std::string>("--epochs", add_override("train.max_epochs"), "max training epochs");
    }
    eval->add_option_function<std::string>("--k", add_override("eval.ks"), "comma-separated k list");
    topn->add_option_function<std::string>("--negatives", add_override("topn.negatives"), "sampled negatives");
    bench->add_option_function<std::string>("--beam", add_override("bench.beams"), "comma-separated beam widths");
    bench->add_option_function<std::string>("--reps", add_override("bench.reps"), "timing repetitions");
    bench->add_option_function<std::string>("--batches", add_override("bench.batches"), "timed batches");
    for (auto* cmd : {synth, prepare, train, precompute, eval, topn, bench, ablate})
        cmd->add_option_function<std::string>("--seed", add_override("seed"), "global seed");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        Workspace ws;
        ws.cfg = config_file.empty() ? RunConfig::from_env_or_default() : RunConfig::from_file(config_file);
        for (const auto& [k, v] : overrides) ws.cfg.set(k, v);
        ws.out = out_dir;
        ws.force = force;
        fs::create_directories(ws.out);

        if (synth->parsed()) return cmd_synth(ws);
        if (prepare->parsed()) return cmd_prepare(ws);
        if (train->parsed()) return cmd_train(ws);
        if (precompute->parsed()) return cmd_precompute(ws);
        if (eval->parsed()) return cmd_eval(ws);
        if (topn->parsed()) return cmd_topn(ws);
        if (bench->parsed()) return cmd_bench(ws);
        if (ablate->parsed()) return cmd_ablate(ws);
        std::cerr << "error: no command\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace literec::cli
