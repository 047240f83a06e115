#include "literec/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace literec {

TrainStrategy parse_strategy(const std::string& name) {
    if (name == "sampling") return TrainStrategy::Sampling;
    if (name == "all") return TrainStrategy::All;
    throw std::invalid_argument("unknown training strategy '" + name + "' (expected sampling or all)");
}

TrainConfig TrainConfig::profile(const std::string& name) {
    TrainConfig cfg;
    if (name == "desk") {
        cfg.lr = 1e-3;
        cfg.batch_size = 64;
        cfg.dropout = 0.1;
        cfg.weight_decay = 0.01;
    } else if (name == "paper") {
        cfg.lr = 5e-4;
        cfg.batch_size = 256;
        cfg.dropout = 0.8;
        cfg.weight_decay = 0.1;
    } else {
        throw std::invalid_argument("unknown training profile '" + name + "' (expected desk or paper)");
    }
    return cfg;
}

EarlyStopResult early_stop_check(const std::vector<double>& history, int64_t patience) {
    if (history.empty()) throw std::invalid_argument("early_stop_check: empty history");
    size_t best = 0;
    for (size_t i = 1; i < history.size(); ++i)
        if (history[i] > history[best]) best = i;  // strict improvement moves the best
    const int64_t since_best = static_cast<int64_t>(history.size() - 1 - best);
    return {since_best >= patience, static_cast<int64_t>(best)};
}

Trainer::Trainer(LiteModel& model, const SplitView& split, TrainConfig cfg)
    : model_(model), split_(split), cfg_(cfg), rng_(static_cast<uint32_t>(cfg.seed)) {
    cfg_.validate();
    if (cfg_.fine_tune_cached_embeddings && model_.source() != ItemVecSource::CachedTrainable)
        throw std::invalid_argument("trainer: fine_tune_cached_embeddings requires a trainable cached table");

    all_params_ = model_.all_params();
    if (model_.source() == ItemVecSource::LiveEncoder) {
        auto item = model_.item_encoder_params();
        trainable_.insert(trainable_.end(), item.begin(), item.end());
    } else if (model_.source() == ItemVecSource::CachedTrainable) {
        auto cached = model_.cached_table_params();
        trainable_.insert(trainable_.end(), cached.begin(), cached.end());
    }
    if (!cfg_.freeze_rec_encoder) {
        auto rec = model_.rec_encoder_params();
        trainable_.insert(trainable_.end(), rec.begin(), rec.end());
    }
    if (!cfg_.freeze_projection_head) {
        auto head = model_.head_params();
        trainable_.insert(trainable_.end(), head.begin(), head.end());
    }
    if (trainable_.empty()) throw std::invalid_argument("trainer: every parameter group is frozen");

    AdamWConfig opt_cfg;
    opt_cfg.lr = cfg_.lr;
    opt_cfg.eps = cfg_.adam_eps;
    opt_cfg.weight_decay = cfg_.weight_decay;
    opt_cfg.warmup_fraction = cfg_.warmup_fraction;
    opt_ = AdamW(opt_cfg);

    // steps-per-epoch estimate for the warmup schedule
    int64_t examples_per_epoch = 0;
    if (cfg_.strategy == TrainStrategy::Sampling) {
        for (const auto& prefix : split_.train_prefix)
            if (prefix.size() >= 2) ++examples_per_epoch;
    } else {
        for (const auto& prefix : split_.train_prefix)
            examples_per_epoch += std::max<int64_t>(0, static_cast<int64_t>(prefix.size()) - 1);
    }
    const int64_t batches = (examples_per_epoch + cfg_.batch_size - 1) / std::max<int64_t>(1, cfg_.batch_size);
    total_steps_ = std::max<int64_t>(1, batches * cfg_.max_epochs);
}

std::vector<TrainExample> Trainer::build_epoch_examples(int64_t epoch_index) {
    (void)epoch_index;
    std::vector<TrainExample> examples;
    for (size_t u = 0; u < split_.train_prefix.size(); ++u) {
        if (cfg_.strategy == TrainStrategy::Sampling) {
            auto ex = sample_segment(split_.train_prefix[u], cfg_.max_seq_len, rng_);
            if (ex) {
                ex->user_index = static_cast<int64_t>(u);
                examples.push_back(std::move(*ex));
            }
        } else {
            for (auto& ex : enumerate_all_examples(split_.train_prefix[u], cfg_.max_seq_len)) {
                ex.user_index = static_cast<int64_t>(u);
                examples.push_back(std::move(ex));
            }
        }
    }
    std::shuffle(examples.begin(), examples.end(), rng_);
    return examples;
}

EpochStats Trainer::train_epoch(int64_t epoch_index) {
    const auto start = std::chrono::steady_clock::now();
    auto examples = build_epoch_examples(epoch_index);
    if (examples.empty()) throw std::runtime_error("train_epoch: no training examples");
    auto batches = make_batches(examples, cfg_.batch_size, cfg_.max_seq_len - 1, model_.pad_index());

    EpochStats stats;
    double loss_sum = 0.0;
    for (size_t b = 0; b < batches.size(); ++b) {
        Tape tape;
        const auto ctx = ForwardCtx::train(cfg_.dropout, mix_seed(cfg_.seed, static_cast<uint64_t>(global_step_) + 1));
        auto logits = model_.forward_scores(tape, batches[b], ctx);
        auto loss = tape.cross_entropy_logits(logits, batches[b].targets);
        const double loss_val = static_cast<double>(loss.item());
        if (!std::isfinite(loss_val)) {
            std::ostringstream msg;
            msg << "train_epoch: non-finite loss at epoch " << epoch_index << " batch " << b
                << " (lr=" << opt_.effective_lr(global_step_, total_steps_) << ")";
            throw std::runtime_error(msg.str());
        }
        for (auto& p : trainable_) p.tensor.ensure_grad();
        tape.backward(loss);
        opt_.step(trainable_, global_step_, total_steps_);
        for (auto& p : trainable_) p.tensor.zero_grad();
        // intermediate grads die with the tape; parameter grads were consumed
        for (auto& p : all_params_) p.tensor.zero_grad();
        ++global_step_;
        loss_sum += loss_val;
        stats.examples += batches[b].batch_size;
    }
    stats.mean_loss = loss_sum / static_cast<double>(batches.size());
    stats.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return stats;
}

double Trainer::validation_r10() {
    EvalOptions opts;
    opts.ks = {10};
    opts.max_seq_len = cfg_.max_seq_len;

    const auto source = model_.source();
    if (source == ItemVecSource::LiveEncoder) {
        // validate against fresh offline embeddings, then return to live mode
        auto cache = precompute_all_embeddings(model_.item_encoder(), model_.catalog_tokens());
        model_.use_cached_table(cache.data, false);
        auto report = evaluate_full(model_, split_, EvalPhase::Valid, opts);
        model_.use_live_encoder();
        return report.get("R", 10);
    }
    return evaluate_full(model_, split_, EvalPhase::Valid, opts).get("R", 10);
}

Checkpoint Trainer::make_checkpoint(int64_t epoch, double best_valid) const {
    Checkpoint ckpt;
    ckpt.tensors = snapshot_params(all_params_);
    ckpt.opt_m = opt_.first_moments();
    ckpt.opt_v = opt_.second_moments();
    ckpt.opt_step = opt_.step_count();
    ckpt.epoch = epoch;
    ckpt.best_valid_r10 = best_valid;
    std::ostringstream rng_state;
    rng_state << rng_;
    ckpt.rng_state = rng_state.str();
    return ckpt;
}

void Trainer::restore_checkpoint(const Checkpoint& ckpt) {
    restore_params(ckpt.tensors, all_params_);
    opt_.restore(ckpt.opt_m, ckpt.opt_v, ckpt.opt_step);
    global_step_ = ckpt.opt_step;
    if (!ckpt.rng_state.empty()) {
        std::istringstream in(ckpt.rng_state);
        in >> rng_;
    }
}

FitResult Trainer::fit() {
    FitResult result;
    std::vector<NamedTensorData> best_params;
    for (int64_t epoch = 0; epoch < cfg_.max_epochs; ++epoch) {
        auto stats = train_epoch(epoch);
        result.loss_history.push_back(stats.mean_loss);
        const double r10 = validation_r10();
        result.valid_r10_history.push_back(r10);
        ++result.epochs_run;

        auto decision = early_stop_check(result.valid_r10_history, cfg_.early_stop_patience);
        if (decision.best_index == epoch) best_params = snapshot_params(all_params_);
        if (decision.stop) break;
    }
    auto final_decision = early_stop_check(result.valid_r10_history, cfg_.early_stop_patience);
    result.best_epoch = final_decision.best_index;
    result.best_valid_r10 = result.valid_r10_history[static_cast<size_t>(result.best_epoch)];
    if (!best_params.empty()) restore_params(best_params, all_params_);
    return result;
}

}  // namespace literec
