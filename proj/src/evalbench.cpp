#include "literec/evalbench.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>
#include <unordered_set>

#include "literec/projection_head.hpp"

namespace literec {

double recall_at_k(const std::vector<int64_t>& ranked, int64_t ground_truth, int64_t k) {
    if (k < 1) throw std::invalid_argument("recall_at_k: k must be >= 1");
    const int64_t upto = std::min<int64_t>(k, static_cast<int64_t>(ranked.size()));
    for (int64_t i = 0; i < upto; ++i)
        if (ranked[static_cast<size_t>(i)] == ground_truth) return 1.0;
    return 0.0;
}

double ndcg_at_k(const std::vector<int64_t>& ranked, int64_t ground_truth, int64_t k) {
    if (k < 1) throw std::invalid_argument("ndcg_at_k: k must be >= 1");
    const int64_t upto = std::min<int64_t>(k, static_cast<int64_t>(ranked.size()));
    for (int64_t i = 0; i < upto; ++i)
        if (ranked[static_cast<size_t>(i)] == ground_truth)
            return 1.0 / std::log2(static_cast<double>(i) + 2.0);  // rank is i+1, IDCG = 1
    return 0.0;
}

double EvalReport::get(const std::string& name, int64_t k) const {
    for (const auto& row : rows)
        if (row.name == name && row.k == k) return row.value;
    throw std::out_of_range("eval report has no metric " + name + "@" + std::to_string(k));
}

void write_eval_report(const std::string& path, const EvalReport& report) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "metric\tk\tvalue\tconfig\n";
    for (const auto& row : report.rows)
        out << row.name << '\t' << row.k << '\t' << row.value << '\t' << report.config_fingerprint << '\n';
    out << "users\t0\t" << report.user_count << '\t' << report.config_fingerprint << '\n';
    if (report.invalid_generations || report.duplicate_generations) {
        out << "invalid_generations\t0\t" << report.invalid_generations << '\t' << report.config_fingerprint << '\n';
        out << "duplicate_generations\t0\t" << report.duplicate_generations << '\t' << report.config_fingerprint
            << '\n';
    }
}

std::vector<EvalCase> build_eval_cases(const SplitView& split, EvalPhase phase, const EvalOptions& opts) {
    std::vector<EvalCase> cases;
    const size_t users = split.train_prefix.size();
    const int64_t input_cap = opts.max_seq_len - 1;
    for (size_t u = 0; u < users; ++u) {
        EvalCase c;
        c.user = static_cast<int64_t>(u);
        std::vector<int64_t> history = split.train_prefix[u];
        if (phase == EvalPhase::Test) {
            if (opts.include_valid_in_test_input) history.push_back(split.valid_target[u]);
            c.ground_truth = split.test_target[u];
        } else {
            c.ground_truth = split.valid_target[u];
        }
        const int64_t start = std::max<int64_t>(0, static_cast<int64_t>(history.size()) - input_cap);
        c.input.assign(history.begin() + start, history.end());

        std::set<int64_t> exclude(split.train_prefix[u].begin(), split.train_prefix[u].end());
        if (phase == EvalPhase::Test && opts.exclude_valid_from_candidates) exclude.insert(split.valid_target[u]);
        exclude.erase(c.ground_truth);  // the ground truth must stay rankable
        c.exclude.assign(exclude.begin(), exclude.end());
        cases.push_back(std::move(c));
    }
    return cases;
}

namespace {

Batch cases_to_batch(const std::vector<EvalCase>& cases, size_t first, size_t count, int64_t pad_to,
                     int64_t pad_item) {
    std::vector<TrainExample> examples(count);
    for (size_t i = 0; i < count; ++i) {
        examples[i].user_index = cases[first + i].user;
        examples[i].input = cases[first + i].input;
        examples[i].target = cases[first + i].ground_truth;
    }
    return make_batches(examples, static_cast<int64_t>(count), pad_to, pad_item)[0];
}

void accumulate_metrics(const std::vector<int64_t>& ranked, int64_t gt, const std::vector<int64_t>& ks,
                        std::map<std::pair<std::string, int64_t>, double>& sums) {
    for (int64_t k : ks) {
        sums[{"R", k}] += recall_at_k(ranked, gt, k);
        sums[{"N", k}] += ndcg_at_k(ranked, gt, k);
    }
}

EvalReport finish_report(std::map<std::pair<std::string, int64_t>, double>& sums, int64_t users) {
    EvalReport report;
    report.user_count = users;
    for (auto& [key, total] : sums)
        report.rows.push_back({key.first, key.second, users > 0 ? total / static_cast<double>(users) : 0.0});
    return report;
}

}  // namespace

EvalReport evaluate_full(const LiteModel& model, const SplitView& split, EvalPhase phase, const EvalOptions& opts) {
    auto cases = build_eval_cases(split, phase, opts);
    const int64_t max_k = *std::max_element(opts.ks.begin(), opts.ks.end());
    std::map<std::pair<std::string, int64_t>, double> sums;

    Tape tape;
    tape.set_recording(false);
    const auto ctx = ForwardCtx::eval();
    const int64_t pad_to = opts.max_seq_len - 1;
    for (size_t first = 0; first < cases.size(); first += static_cast<size_t>(opts.eval_batch)) {
        const size_t count = std::min(cases.size() - first, static_cast<size_t>(opts.eval_batch));
        Batch batch = cases_to_batch(cases, first, count, pad_to, model.pad_index());
        auto logits = model.forward_scores(tape, batch, ctx);
        for (size_t i = 0; i < count; ++i) {
            const auto& c = cases[first + i];
            std::unordered_set<int64_t> exclude(c.exclude.begin(), c.exclude.end());
            std::span<const float> row(logits.data() + static_cast<int64_t>(i) * model.catalog(),
                                       static_cast<size_t>(model.catalog()));
            auto ranked = top_k_recommend(row, exclude, std::min<int64_t>(max_k, model.catalog() -
                                                                                     static_cast<int64_t>(exclude.size())));
            accumulate_metrics(ranked, c.ground_truth, opts.ks, sums);
        }
        tape.reset();
    }
    return finish_report(sums, static_cast<int64_t>(cases.size()));
}

EvalReport evaluate_popularity(const Dataset& ds, const SplitView& split, EvalPhase phase, const EvalOptions& opts) {
    std::vector<float> counts(static_cast<size_t>(ds.catalog_size()), 0.0f);
    for (size_t u = 0; u < split.train_prefix.size(); ++u) {
        for (int64_t item : split.train_prefix[u]) counts[static_cast<size_t>(item)] += 1.0f;
        counts[static_cast<size_t>(split.valid_target[u])] += 1.0f;
    }
    auto cases = build_eval_cases(split, phase, opts);
    const int64_t max_k = *std::max_element(opts.ks.begin(), opts.ks.end());
    std::map<std::pair<std::string, int64_t>, double> sums;
    for (const auto& c : cases) {
        std::unordered_set<int64_t> exclude(c.exclude.begin(), c.exclude.end());
        std::span<const float> view(counts.data(), counts.size());
        auto ranked = top_k_recommend(view, exclude,
                                      std::min<int64_t>(max_k, ds.catalog_size() - static_cast<int64_t>(exclude.size())));
        accumulate_metrics(ranked, c.ground_truth, opts.ks, sums);
    }
    return finish_report(sums, static_cast<int64_t>(cases.size()));
}

EvalReport evaluate_generative(const Seq2Seq& model, const GenVocab& vocab, int64_t catalog, const SplitView& split,
                               EvalPhase phase, const GenerativeEvalOptions& opts) {
    auto cases = build_eval_cases(split, phase, opts.base);
    std::map<std::pair<std::string, int64_t>, double> sums;
    int64_t invalid = 0, duplicates = 0;
    const int64_t max_k = *std::max_element(opts.base.ks.begin(), opts.base.ks.end());
    for (const auto& c : cases) {
        std::vector<int64_t> input_tokens;
        for (int64_t item : c.input) {
            auto toks = vocab.encode_item(item);
            input_tokens.insert(input_tokens.end(), toks.begin(), toks.end());
        }
        if (static_cast<int64_t>(input_tokens.size()) > model.config().max_input_len)
            input_tokens.erase(input_tokens.begin(),
                               input_tokens.end() - model.config().max_input_len);
        auto decoded = model.beam_search_decode(input_tokens, opts.beam_width, opts.max_steps,
                                                opts.beam_width, opts.alpha);
        std::vector<std::vector<int64_t>> sequences;
        for (const auto& beam : decoded.beams) sequences.push_back(beam.tokens);
        auto parsed = parse_generated_items(sequences, vocab, catalog);
        invalid += parsed.invalid_count;
        duplicates += parsed.duplicate_count;
        std::unordered_set<int64_t> exclude(c.exclude.begin(), c.exclude.end());
        std::vector<int64_t> ranked;
        for (int64_t item : parsed.items) {
            if (exclude.count(item)) continue;
            ranked.push_back(item);
            if (static_cast<int64_t>(ranked.size()) == max_k) break;
        }
        accumulate_metrics(ranked, c.ground_truth, opts.base.ks, sums);
    }
    auto report = finish_report(sums, static_cast<int64_t>(cases.size()));
    report.invalid_generations = invalid;
    report.duplicate_generations = duplicates;
    return report;
}

EvalReport topn_sampled_eval(const LiteModel& model, const SplitView& split, int64_t catalog, int64_t num_negatives,
                             uint64_t seed, EvalPhase phase, const EvalOptions& opts) {
    if (catalog < num_negatives + 1)
        throw std::invalid_argument("topn_sampled_eval: catalog of " + std::to_string(catalog) +
                                    " items cannot supply " + std::to_string(num_negatives) + " negatives");
    auto cases = build_eval_cases(split, phase, opts);
    std::map<std::pair<std::string, int64_t>, double> sums;

    Tape tape;
    tape.set_recording(false);
    const auto ctx = ForwardCtx::eval();
    const int64_t pad_to = opts.max_seq_len - 1;
    for (size_t first = 0; first < cases.size(); first += static_cast<size_t>(opts.eval_batch)) {
        const size_t count = std::min(cases.size() - first, static_cast<size_t>(opts.eval_batch));
        Batch batch = cases_to_batch(cases, first, count, pad_to, model.pad_index());
        auto logits = model.forward_scores(tape, batch, ctx);
        for (size_t i = 0; i < count; ++i) {
            const auto& c = cases[first + i];
            // seeded per-user negative sampling over un-interacted items
            std::unordered_set<int64_t> interacted(c.exclude.begin(), c.exclude.end());
            interacted.insert(c.ground_truth);
            std::mt19937_64 rng(mix_seed(seed, static_cast<uint64_t>(c.user)));
            std::vector<int64_t> candidates = {c.ground_truth};
            std::unordered_set<int64_t> chosen;
            std::uniform_int_distribution<int64_t> pick(0, catalog - 1);
            while (static_cast<int64_t>(candidates.size()) < num_negatives + 1) {
                const int64_t item = pick(rng);
                if (interacted.count(item) || chosen.count(item)) continue;
                chosen.insert(item);
                candidates.push_back(item);
            }
            const float* row = logits.data() + static_cast<int64_t>(i) * model.catalog();
            std::stable_sort(candidates.begin(), candidates.end(), [&](int64_t a, int64_t b) {
                if (row[a] != row[b]) return row[a] > row[b];
                return a < b;
            });
            accumulate_metrics(candidates, c.ground_truth, opts.ks, sums);
        }
        tape.reset();
    }
    return finish_report(sums, static_cast<int64_t>(cases.size()));
}

// ---- timing ----

ComponentTimer::Scope::Scope(ComponentTimer& timer, const std::string& name)
    : timer_(timer), name_(name), start_(std::chrono::steady_clock::now()) {}

ComponentTimer::Scope::~Scope() {
    const auto end = std::chrono::steady_clock::now();
    timer_.add(name_, std::chrono::duration<double, std::milli>(end - start_).count());
}

void ComponentTimer::add(const std::string& name, double ms) { totals_[name] += ms; }

double TimingReport::component_per_batch32_ms(const std::string& name) const {
    auto it = component_ms.find(name);
    if (it == component_ms.end() || users == 0) return 0.0;
    return it->second / static_cast<double>(users) * 32.0;
}

double TimingReport::other_ms() const {
    double named = 0.0;
    for (const auto& [name, ms] : component_ms) named += ms;
    return std::max(0.0, total_ms - named);
}

std::string hardware_descriptor() {
    std::string model = "unknown-cpu";
    std::ifstream cpuinfo("/proc/cpuinfo");
    std::string line;
    while (std::getline(cpuinfo, line)) {
        if (line.rfind("model name", 0) == 0) {
            const auto pos = line.find(':');
            if (pos != std::string::npos) model = line.substr(pos + 2);
            break;
        }
    }
    return model + " x" + std::to_string(std::thread::hardware_concurrency());
}

void write_timing_report(const std::string& path, const std::string& pipeline, const TimingReport& report) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "pipeline\tcomponent\ttotal_ms\tper_batch32_ms\n";
    for (const auto& [name, ms] : report.component_ms)
        out << pipeline << '\t' << name << '\t' << ms << '\t' << report.component_per_batch32_ms(name) << '\n';
    out << pipeline << "\tother\t" << report.other_ms() << '\t'
        << (report.users > 0 ? report.other_ms() / static_cast<double>(report.users) * 32.0 : 0.0) << '\n';
    out << pipeline << "\ttotal\t" << report.total_ms << '\t' << report.per_batch32_ms() << '\n';
    out << pipeline << "\tbatches\t" << report.batches << "\t0\n";
    out << pipeline << "\thardware\t" << report.hardware << "\t0\n";
}

TimingReport time_components(const std::function<void(int64_t, ComponentTimer&)>& pipeline, int64_t batches,
                             int64_t users_per_batch, int64_t warmup) {
    TimingReport report;
    report.warmup_excluded = std::min(warmup, batches);
    report.hardware = hardware_descriptor();
    ComponentTimer timer;
    for (int64_t b = 0; b < batches; ++b) {
        if (b == report.warmup_excluded) timer.reset();
        const auto start = std::chrono::steady_clock::now();
        pipeline(b, timer);
        const auto end = std::chrono::steady_clock::now();
        if (b >= report.warmup_excluded) {
            report.total_ms += std::chrono::duration<double, std::milli>(end - start).count();
            ++report.batches;
            report.users += users_per_batch;
        }
    }
    report.component_ms = timer.totals();
    return report;
}

// ---- meters ----

double measure_input_length(PipelineKind kind, const std::vector<EvalCase>& cases, const Dataset& ds,
                            const Vocab& vocab, int64_t max_item_text_len) {
    if (cases.empty()) return 0.0;
    double total = 0.0;
    for (const auto& c : cases) {
        int64_t len = 0;
        switch (kind) {
            case PipelineKind::Hierarchical:
                // item positions plus the target slot
                len = static_cast<int64_t>(c.input.size()) + 1;
                break;
            case PipelineKind::IdTokens:
                for (int64_t item : c.input)
                    len += static_cast<int64_t>(encode_item_id_tokens(item).size());
                break;
            case PipelineKind::TitleTokens:
                for (int64_t item : c.input) {
                    const auto& rec = ds.item(item);
                    len += encode_item_context(rec.title, rec.genre, vocab, max_item_text_len).length;
                }
                break;
        }
        total += static_cast<double>(len);
    }
    return total / static_cast<double>(cases.size());
}

RedundancyReport count_redundant_encodings(const std::vector<EvalCase>& cases, bool cached) {
    RedundancyReport report;
    std::unordered_set<int64_t> distinct;
    for (const auto& c : cases) {
        for (int64_t item : c.input) {
            ++report.total_occurrences;
            distinct.insert(item);
        }
    }
    report.distinct_items = static_cast<int64_t>(distinct.size());
    report.encoder_calls = cached ? report.distinct_items : report.total_occurrences;
    return report;
}

}  // namespace literec
