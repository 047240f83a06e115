// Baseline variants used by the efficiency and ablation studies:
//   full_beam – encoder-decoder over item-ID tokens with beam-search decoding
//   wo_d      – the same encoder, decoder removed, item projection head
//   wo_d_tid  – projection head again, items represented by their titles
// The token-sequence encoder reuses the item-encoder stack (token + position
// embeddings, transformer, masked mean pool).

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "literec/data.hpp"
#include "literec/evalbench.hpp"
#include "literec/generative.hpp"
#include "literec/item_encoder.hpp"
#include "literec/projection_head.hpp"
#include "literec/text.hpp"

namespace literec {

enum class BaselineVariant { FullBeam, WoD, WoDTid };

std::string baseline_variant_name(BaselineVariant v);
BaselineVariant parse_baseline_variant(const std::string& name);

struct TokenExample {
    std::vector<int64_t> tokens;
    int64_t target = 0;  // item index
};

struct TokenBatch {
    std::vector<int64_t> ids;    // [B * pad_to], left-padded with PAD (0)
    std::vector<uint8_t> mask;   // [B * pad_to]
    std::vector<int64_t> targets;
    int64_t batch_size = 0;
    int64_t pad_to = 0;
};

std::vector<TokenBatch> make_token_batches(const std::vector<TokenExample>& examples, int64_t batch_size,
                                           int64_t max_len);

// item-ID token stream of a segment, oldest tokens dropped beyond max_len
std::vector<int64_t> id_token_input(const std::vector<int64_t>& items, const GenVocab& vocab, int64_t max_len);

// concatenated item context tokens, per item capped at per_item_len
std::vector<int64_t> title_token_input(const std::vector<int64_t>& items, const Dataset& ds, const Vocab& vocab,
                                       int64_t per_item_len, int64_t max_len);

// token-sequence encoder + bias-free item projection head (no decoder)
template <typename Real>
class EncoderHeadModelT {
public:
    EncoderHeadModelT() = default;
    EncoderHeadModelT(const ItemEncoderConfig& enc_cfg, int64_t vocab_size, int64_t catalog, uint64_t seed) {
        std::mt19937 rng(static_cast<uint32_t>(seed));
        encoder_ = ItemEncoderT<Real>(enc_cfg, vocab_size, rng);
        head_ = ProjectionHeadT<Real>(catalog, enc_cfg.model_dim, rng);
    }

    const ItemEncoderT<Real>& encoder() const { return encoder_; }
    ProjectionHeadT<Real>& head() { return head_; }
    const ProjectionHeadT<Real>& head() const { return head_; }

    TensorT<Real> forward_scores(TapeT<Real>& tape, const TokenBatch& batch, const ForwardCtx& ctx) const {
        auto pooled = encoder_.forward_batch(tape, batch.ids, batch.mask, batch.batch_size, batch.pad_to, ctx);
        return head_.score(tape, pooled);
    }

    std::vector<NamedParamT<Real>> all_params() const {
        std::vector<NamedParamT<Real>> out;
        encoder_.collect(out, "variant.enc");
        head_.collect(out, "variant.head");
        return out;
    }

private:
    ItemEncoderT<Real> encoder_;
    ProjectionHeadT<Real> head_;
};

using EncoderHeadModel = EncoderHeadModelT<float>;

struct BaselineTrainConfig {
    int64_t epochs = 10;
    int64_t batch_size = 64;
    double lr = 1e-3;
    double dropout = 0.1;
    double weight_decay = 0.01;
    double warmup_fraction = 0.1;
    double adam_eps = 1e-6;
    uint64_t seed = 42;
};

// plain fixed-budget loops (the baselines get the same budget, not early
// stopping); returns mean loss per epoch
std::vector<double> train_encoder_head(EncoderHeadModel& model, const std::vector<TokenExample>& examples,
                                       const BaselineTrainConfig& cfg);
std::vector<double> train_seq2seq(Seq2Seq& model, const std::vector<TokenExample>& examples, const GenVocab& vocab,
                                  const BaselineTrainConfig& cfg);

// evaluation of the encoder+head variants over token inputs
enum class VariantInput { IdTokens, TitleTokens };
EvalReport evaluate_encoder_head(const EncoderHeadModel& model, const SplitView& split, const Dataset& ds,
                                 const GenVocab& gen_vocab, const Vocab& text_vocab, VariantInput input_kind,
                                 int64_t per_item_len, EvalPhase phase, const EvalOptions& opts);

}  // namespace literec
