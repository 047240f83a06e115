#include "literec/variants.hpp"

#include <algorithm>
#include <random>
#include <stdexcept>

#include "literec/optim.hpp"

namespace literec {

std::string baseline_variant_name(BaselineVariant v) {
    switch (v) {
        case BaselineVariant::FullBeam: return "full_beam";
        case BaselineVariant::WoD: return "wo_d";
        case BaselineVariant::WoDTid: return "wo_d_tid";
    }
    return "?";
}

BaselineVariant parse_baseline_variant(const std::string& name) {
    if (name == "full_beam") return BaselineVariant::FullBeam;
    if (name == "wo_d") return BaselineVariant::WoD;
    if (name == "wo_d_tid") return BaselineVariant::WoDTid;
    throw std::invalid_argument("unknown baseline variant '" + name + "'");
}

std::vector<TokenBatch> make_token_batches(const std::vector<TokenExample>& examples, int64_t batch_size,
                                           int64_t max_len) {
    std::vector<TokenBatch> batches;
    for (size_t at = 0; at < examples.size(); at += static_cast<size_t>(batch_size)) {
        const size_t end = std::min(examples.size(), at + static_cast<size_t>(batch_size));
        TokenBatch b;
        b.batch_size = static_cast<int64_t>(end - at);
        b.pad_to = max_len;
        b.ids.assign(static_cast<size_t>(b.batch_size * max_len), 0);  // PAD = 0 in both vocabularies
        b.mask.assign(static_cast<size_t>(b.batch_size * max_len), 0);
        for (size_t i = at; i < end; ++i) {
            const auto& ex = examples[i];
            if (static_cast<int64_t>(ex.tokens.size()) > max_len)
                throw std::invalid_argument("make_token_batches: example exceeds max_len");
            const int64_t row = static_cast<int64_t>(i - at);
            const int64_t offset = max_len - static_cast<int64_t>(ex.tokens.size());
            for (size_t j = 0; j < ex.tokens.size(); ++j) {
                b.ids[static_cast<size_t>(row * max_len + offset) + j] = ex.tokens[j];
                b.mask[static_cast<size_t>(row * max_len + offset) + j] = 1;
            }
            b.targets.push_back(ex.target);
        }
        batches.push_back(std::move(b));
    }
    return batches;
}

std::vector<int64_t> id_token_input(const std::vector<int64_t>& items, const GenVocab& vocab, int64_t max_len) {
    std::vector<int64_t> tokens;
    for (int64_t item : items) {
        auto t = vocab.encode_item(item);
        tokens.insert(tokens.end(), t.begin(), t.end());
    }
    if (static_cast<int64_t>(tokens.size()) > max_len)
        tokens.erase(tokens.begin(), tokens.end() - max_len);
    return tokens;
}

std::vector<int64_t> title_token_input(const std::vector<int64_t>& items, const Dataset& ds, const Vocab& vocab,
                                       int64_t per_item_len, int64_t max_len) {
    std::vector<int64_t> tokens;
    for (int64_t item : items) {
        const auto& rec = ds.item(item);
        auto enc = encode_item_context(rec.title, rec.genre, vocab, per_item_len);
        tokens.insert(tokens.end(), enc.ids.begin(), enc.ids.end());
    }
    if (static_cast<int64_t>(tokens.size()) > max_len)
        tokens.erase(tokens.begin(), tokens.end() - max_len);
    return tokens;
}

std::vector<double> train_encoder_head(EncoderHeadModel& model, const std::vector<TokenExample>& examples,
                                       const BaselineTrainConfig& cfg) {
    if (examples.empty()) throw std::invalid_argument("train_encoder_head: no examples");
    int64_t max_len = 1;
    for (const auto& ex : examples) max_len = std::max<int64_t>(max_len, static_cast<int64_t>(ex.tokens.size()));

    auto params = model.all_params();
    AdamWConfig opt_cfg;
    opt_cfg.lr = cfg.lr;
    opt_cfg.eps = cfg.adam_eps;
    opt_cfg.weight_decay = cfg.weight_decay;
    opt_cfg.warmup_fraction = cfg.warmup_fraction;
    AdamW opt(opt_cfg);
    std::mt19937 rng(static_cast<uint32_t>(cfg.seed));

    const int64_t batches_per_epoch =
        (static_cast<int64_t>(examples.size()) + cfg.batch_size - 1) / cfg.batch_size;
    const int64_t total_steps = std::max<int64_t>(1, batches_per_epoch * cfg.epochs);
    int64_t global_step = 0;
    std::vector<double> losses;
    auto shuffled = examples;
    for (int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(shuffled.begin(), shuffled.end(), rng);
        auto batches = make_token_batches(shuffled, cfg.batch_size, max_len);
        double loss_sum = 0;
        for (const auto& batch : batches) {
            Tape tape;
            const auto ctx = ForwardCtx::train(cfg.dropout, mix_seed(cfg.seed ^ 0x5eedULL, static_cast<uint64_t>(global_step)));
            auto loss = tape.cross_entropy_logits(model.forward_scores(tape, batch, ctx), batch.targets);
            const double v = loss.item();
            if (!std::isfinite(v)) throw std::runtime_error("train_encoder_head: non-finite loss");
            for (auto& p : params) p.tensor.ensure_grad();
            tape.backward(loss);
            opt.step(params, global_step, total_steps);
            for (auto& p : params) p.tensor.zero_grad();
            ++global_step;
            loss_sum += v;
        }
        losses.push_back(loss_sum / static_cast<double>(batches.size()));
    }
    return losses;
}

std::vector<double> train_seq2seq(Seq2Seq& model, const std::vector<TokenExample>& examples, const GenVocab& vocab,
                                  const BaselineTrainConfig& cfg) {
    if (examples.empty()) throw std::invalid_argument("train_seq2seq: no examples");
    int64_t max_in = 1;
    for (const auto& ex : examples) max_in = std::max<int64_t>(max_in, static_cast<int64_t>(ex.tokens.size()));

    auto params = model.all_params();
    AdamWConfig opt_cfg;
    opt_cfg.lr = cfg.lr;
    opt_cfg.eps = cfg.adam_eps;
    opt_cfg.weight_decay = cfg.weight_decay;
    opt_cfg.warmup_fraction = cfg.warmup_fraction;
    AdamW opt(opt_cfg);
    std::mt19937 rng(static_cast<uint32_t>(cfg.seed));

    const int64_t batches_per_epoch =
        (static_cast<int64_t>(examples.size()) + cfg.batch_size - 1) / cfg.batch_size;
    const int64_t total_steps = std::max<int64_t>(1, batches_per_epoch * cfg.epochs);
    int64_t global_step = 0;
    std::vector<double> losses;
    auto shuffled = examples;
    const auto ctx_dropout = cfg.dropout;
    for (int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(shuffled.begin(), shuffled.end(), rng);
        auto batches = make_token_batches(shuffled, cfg.batch_size, max_in);
        double loss_sum = 0;
        for (const auto& batch : batches) {
            // decoder input: BOS + target ID tokens; labels: tokens + EOS
            const int64_t B = batch.batch_size;
            int64_t td = 0;
            std::vector<std::vector<int64_t>> target_tokens(static_cast<size_t>(B));
            for (int64_t i = 0; i < B; ++i) {
                target_tokens[static_cast<size_t>(i)] = vocab.encode_item(batch.targets[static_cast<size_t>(i)]);
                td = std::max<int64_t>(td, static_cast<int64_t>(target_tokens[static_cast<size_t>(i)].size()) + 1);
            }
            std::vector<int64_t> dec_ids(static_cast<size_t>(B * td), GenVocab::kPad);
            std::vector<int64_t> labels(static_cast<size_t>(B * td), -1);
            for (int64_t i = 0; i < B; ++i) {
                const auto& toks = target_tokens[static_cast<size_t>(i)];
                dec_ids[static_cast<size_t>(i * td)] = GenVocab::kBos;
                for (size_t j = 0; j < toks.size(); ++j) {
                    dec_ids[static_cast<size_t>(i * td) + j + 1] = toks[j];
                    labels[static_cast<size_t>(i * td) + j] = toks[j];
                }
                labels[static_cast<size_t>(i * td) + toks.size()] = GenVocab::kEos;
            }
            Tape tape;
            const auto ctx = ForwardCtx::train(ctx_dropout, mix_seed(cfg.seed ^ 0xbea7ULL, static_cast<uint64_t>(global_step)));
            auto enc = model.encode(tape, batch.ids, batch.mask, B, batch.pad_to, ctx);
            auto logits = model.decode(tape, enc, batch.mask, dec_ids, B, td, ctx);
            auto loss = tape.cross_entropy_logits(logits, labels);
            const double v = loss.item();
            if (!std::isfinite(v)) throw std::runtime_error("train_seq2seq: non-finite loss");
            for (auto& p : params) p.tensor.ensure_grad();
            tape.backward(loss);
            opt.step(params, global_step, total_steps);
            for (auto& p : params) p.tensor.zero_grad();
            ++global_step;
            loss_sum += v;
        }
        losses.push_back(loss_sum / static_cast<double>(batches.size()));
    }
    return losses;
}

EvalReport evaluate_encoder_head(const EncoderHeadModel& model, const SplitView& split, const Dataset& ds,
                                 const GenVocab& gen_vocab, const Vocab& text_vocab, VariantInput input_kind,
                                 int64_t per_item_len, EvalPhase phase, const EvalOptions& opts) {
    auto cases = build_eval_cases(split, phase, opts);
    const int64_t max_len = model.encoder().config().max_item_text_len;
    std::vector<TokenExample> examples(cases.size());
    for (size_t i = 0; i < cases.size(); ++i) {
        examples[i].tokens = input_kind == VariantInput::IdTokens
                                 ? id_token_input(cases[i].input, gen_vocab, max_len)
                                 : title_token_input(cases[i].input, ds, text_vocab, per_item_len, max_len);
        examples[i].target = cases[i].ground_truth;
    }
    const int64_t max_k = *std::max_element(opts.ks.begin(), opts.ks.end());
    std::map<std::pair<std::string, int64_t>, double> sums;
    Tape tape;
    tape.set_recording(false);
    const auto ctx = ForwardCtx::eval();
    size_t case_at = 0;
    for (size_t at = 0; at < examples.size(); at += static_cast<size_t>(opts.eval_batch)) {
        const size_t end = std::min(examples.size(), at + static_cast<size_t>(opts.eval_batch));
        std::vector<TokenExample> chunk(examples.begin() + static_cast<int64_t>(at),
                                        examples.begin() + static_cast<int64_t>(end));
        auto batch = make_token_batches(chunk, static_cast<int64_t>(chunk.size()), max_len)[0];
        auto logits = model.forward_scores(tape, batch, ctx);
        const int64_t catalog = model.head().catalog();
        for (size_t i = 0; i < chunk.size(); ++i, ++case_at) {
            const auto& c = cases[case_at];
            std::unordered_set<int64_t> exclude(c.exclude.begin(), c.exclude.end());
            std::span<const float> row(logits.data() + static_cast<int64_t>(i) * catalog,
                                       static_cast<size_t>(catalog));
            auto ranked = top_k_recommend(
                row, exclude, std::min<int64_t>(max_k, catalog - static_cast<int64_t>(exclude.size())));
            for (int64_t k : opts.ks) {
                sums[{"R", k}] += recall_at_k(ranked, c.ground_truth, k);
                sums[{"N", k}] += ndcg_at_k(ranked, c.ground_truth, k);
            }
        }
        tape.reset();
    }
    EvalReport report;
    report.user_count = static_cast<int64_t>(cases.size());
    for (auto& [key, total] : sums)
        report.rows.push_back({key.first, key.second,
                               report.user_count > 0 ? total / static_cast<double>(report.user_count) : 0.0});
    return report;
}

}  // namespace literec
