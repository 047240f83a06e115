// Evaluation and benchmarking: Recall@k / NDCG@k over the whole item set,
// Top-N sampled evaluation, the per-component timing harness, and the
// input-length / redundant-encoding meters.

#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "literec/data.hpp"
#include "literec/generative.hpp"
#include "literec/model.hpp"

namespace literec {

double recall_at_k(const std::vector<int64_t>& ranked, int64_t ground_truth, int64_t k);
double ndcg_at_k(const std::vector<int64_t>& ranked, int64_t ground_truth, int64_t k);

struct MetricRow {
    std::string name;  // "R" or "N"
    int64_t k = 0;
    double value = 0.0;
};

struct EvalReport {
    std::vector<MetricRow> rows;
    int64_t user_count = 0;
    std::string config_fingerprint;
    int64_t invalid_generations = 0;    // generative pipelines only
    int64_t duplicate_generations = 0;

    double get(const std::string& name, int64_t k) const;
};

void write_eval_report(const std::string& path, const EvalReport& report);

enum class EvalPhase { Valid, Test };

struct EvalOptions {
    std::vector<int64_t> ks = {10, 20};
    int64_t max_seq_len = 21;                 // input consumes at most max_seq_len - 1 slots
    bool include_valid_in_test_input = true;  // validation item joins the test-time prefix
    bool exclude_valid_from_candidates = true;
    int64_t eval_batch = 64;
};

// per-user evaluation inputs derived from the split
struct EvalCase {
    int64_t user = 0;
    std::vector<int64_t> input;   // capped history
    int64_t ground_truth = 0;
    std::vector<int64_t> exclude;  // interacted items, never contains ground truth
};
std::vector<EvalCase> build_eval_cases(const SplitView& split, EvalPhase phase, const EvalOptions& opts);

// full-catalog evaluation of the hierarchical model (any item-vector source)
EvalReport evaluate_full(const LiteModel& model, const SplitView& split, EvalPhase phase, const EvalOptions& opts);

// rank by global train-region popularity
EvalReport evaluate_popularity(const Dataset& ds, const SplitView& split, EvalPhase phase, const EvalOptions& opts);

// beam-decode, parse, and rank; seen items are filtered like the other models
struct GenerativeEvalOptions {
    int64_t beam_width = 20;
    int64_t max_steps = 6;
    double alpha = 0.0;
    EvalOptions base;
};
EvalReport evaluate_generative(const Seq2Seq& model, const GenVocab& vocab, int64_t catalog, const SplitView& split,
                               EvalPhase phase, const GenerativeEvalOptions& opts);

// rank the ground truth among `num_negatives` sampled un-interacted items
EvalReport topn_sampled_eval(const LiteModel& model, const SplitView& split, int64_t catalog, int64_t num_negatives,
                             uint64_t seed, EvalPhase phase, const EvalOptions& opts);

// ---- timing ----

class ComponentTimer {
public:
    class Scope {
    public:
        Scope(ComponentTimer& timer, const std::string& name);
        ~Scope();
        Scope(const Scope&) = delete;
        Scope& operator=(const Scope&) = delete;

    private:
        ComponentTimer& timer_;
        std::string name_;
        std::chrono::steady_clock::time_point start_;
    };

    void add(const std::string& name, double ms);
    const std::map<std::string, double>& totals() const { return totals_; }
    void reset() { totals_.clear(); }

private:
    std::map<std::string, double> totals_;
};

struct TimingReport {
    std::map<std::string, double> component_ms;  // totals over measured batches
    double total_ms = 0.0;
    int64_t batches = 0;        // measured batches (warmup excluded)
    int64_t users = 0;          // users in measured batches
    int64_t warmup_excluded = 0;
    std::string hardware;

    double per_batch32_ms() const { return users > 0 ? total_ms / static_cast<double>(users) * 32.0 : 0.0; }
    double component_per_batch32_ms(const std::string& name) const;
    double other_ms() const;  // total minus the named components
};

std::string hardware_descriptor();
void write_timing_report(const std::string& path, const std::string& pipeline, const TimingReport& report);

// Runs `pipeline` once per batch; the first `warmup` batches are timed but
// excluded from the report.
TimingReport time_components(const std::function<void(int64_t batch_index, ComponentTimer&)>& pipeline,
                             int64_t batches, int64_t users_per_batch, int64_t warmup);

// ---- meters ----

enum class PipelineKind { Hierarchical, IdTokens, TitleTokens };

// mean input length per user sequence: item positions (plus the target slot)
// for the hierarchical pipeline, tokens for the token pipelines
double measure_input_length(PipelineKind kind, const std::vector<EvalCase>& cases, const Dataset& ds,
                            const Vocab& vocab, int64_t max_item_text_len);

struct RedundancyReport {
    int64_t encoder_calls = 0;
    int64_t distinct_items = 0;
    int64_t total_occurrences = 0;
    double ratio() const {
        return distinct_items > 0 ? static_cast<double>(encoder_calls) / static_cast<double>(distinct_items) : 0.0;
    }
};

// with caching the encoder runs once per distinct item; without, once per
// occurrence
RedundancyReport count_redundant_encodings(const std::vector<EvalCase>& cases, bool cached);

}  // namespace literec
