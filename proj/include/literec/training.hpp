// Joint training of the hierarchical model with full-softmax cross entropy:
// both data strategies, freeze-flag ablations, warmup AdamW, early stopping
// on validation Recall@10, and checkpointing.

#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "literec/data.hpp"
#include "literec/evalbench.hpp"
#include "literec/model.hpp"
#include "literec/serialize.hpp"

namespace literec {

enum class TrainStrategy { Sampling, All };

TrainStrategy parse_strategy(const std::string& name);

struct TrainConfig {
    TrainStrategy strategy = TrainStrategy::Sampling;
    double lr = 1e-3;
    int64_t batch_size = 64;
    double dropout = 0.1;
    double weight_decay = 0.01;
    double warmup_fraction = 0.1;
    double adam_eps = 1e-6;
    int64_t max_seq_len = 21;
    int64_t early_stop_patience = 20;
    int64_t max_epochs = 200;
    uint64_t seed = 42;
    bool freeze_rec_encoder = false;
    bool freeze_projection_head = false;
    bool fine_tune_cached_embeddings = false;

    void validate() const {
        if (early_stop_patience < 1) throw std::invalid_argument("train config: patience must be >= 1");
        if (lr <= 0) throw std::invalid_argument("train config: lr must be > 0");
        if (batch_size < 1) throw std::invalid_argument("train config: batch_size must be >= 1");
        if (max_seq_len < 2) throw std::invalid_argument("train config: max_seq_len must be >= 2");
    }

    // "desk" fits the from-scratch desk-scale models; "paper" preserves the
    // published hyperparameters for a pretrained 512-dim backbone
    static TrainConfig profile(const std::string& name);
};

struct EpochStats {
    double mean_loss = 0.0;
    int64_t examples = 0;
    double seconds = 0.0;
    double examples_per_second() const { return seconds > 0 ? examples / seconds : 0.0; }
};

struct EarlyStopResult {
    bool stop = false;
    int64_t best_index = 0;  // 0-based index of the best entry
};

// stop once the trailing `patience` entries have not strictly improved on the
// best so far
EarlyStopResult early_stop_check(const std::vector<double>& history, int64_t patience);

struct FitResult {
    int64_t best_epoch = 0;  // 0-based
    double best_valid_r10 = 0.0;
    std::vector<double> loss_history;
    std::vector<double> valid_r10_history;
    int64_t epochs_run = 0;
};

class Trainer {
public:
    Trainer(LiteModel& model, const SplitView& split, TrainConfig cfg);

    // one pass over the training data under the configured strategy
    EpochStats train_epoch(int64_t epoch_index);

    // full loop: train, validate each epoch, early-stop, restore best params
    FitResult fit();

    // validation Recall@10 with the current parameters
    double validation_r10();

    Checkpoint make_checkpoint(int64_t epoch, double best_valid) const;
    void restore_checkpoint(const Checkpoint& ckpt);

    const std::vector<NamedParam>& trainable_params() const { return trainable_; }
    int64_t global_step() const { return global_step_; }

private:
    LiteModel& model_;
    const SplitView& split_;
    TrainConfig cfg_;
    std::vector<NamedParam> trainable_;
    std::vector<NamedParam> all_params_;
    AdamW opt_;
    std::mt19937 rng_;
    int64_t global_step_ = 0;
    int64_t total_steps_ = 0;

    std::vector<TrainExample> build_epoch_examples(int64_t epoch_index);
};

}  // namespace literec
