// The hierarchical recommender: item encoder -> sequence encoder -> bias-free
// item projection head. Item vectors come from the live encoder during joint
// training, or from a precomputed table (frozen for inference, trainable for
// the cached fine-tuning phase).

#pragma once

#include <algorithm>
#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "literec/data.hpp"
#include "literec/item_encoder.hpp"
#include "literec/nn.hpp"
#include "literec/projection_head.hpp"
#include "literec/rec_encoder.hpp"

namespace literec {

enum class ItemVecSource { LiveEncoder, CachedFrozen, CachedTrainable };

inline std::string item_vec_source_name(ItemVecSource s) {
    switch (s) {
        case ItemVecSource::LiveEncoder: return "live";
        case ItemVecSource::CachedFrozen: return "cached";
        case ItemVecSource::CachedTrainable: return "cached-trainable";
    }
    return "?";
}

struct LiteModelConfig {
    ItemEncoderConfig item;
    RecEncoderConfig rec;

    void validate() const {
        item.validate();
        rec.validate();
        if (item.model_dim != rec.model_dim)
            throw std::invalid_argument("lite model: item and rec encoder dims must match (adapter not configured)");
    }
};

template <typename Real>
class LiteModelT {
public:
    LiteModelT() = default;

    LiteModelT(const LiteModelConfig& cfg, int64_t vocab_size, int64_t catalog, uint64_t seed)
        : cfg_(cfg), catalog_(catalog) {
        cfg.validate();
        std::mt19937 rng(static_cast<uint32_t>(seed));
        item_enc_ = ItemEncoderT<Real>(cfg.item, vocab_size, rng);
        rec_enc_ = RecEncoderT<Real>(cfg.rec, rng);
        head_ = ProjectionHeadT<Real>(catalog, cfg.rec.model_dim, rng);
    }

    const LiteModelConfig& config() const { return cfg_; }
    int64_t catalog() const { return catalog_; }
    int64_t pad_index() const { return catalog_; }

    ItemEncoderT<Real>& item_encoder() { return item_enc_; }
    const ItemEncoderT<Real>& item_encoder() const { return item_enc_; }
    RecEncoderT<Real>& rec_encoder() { return rec_enc_; }
    ProjectionHeadT<Real>& head() { return head_; }
    const ProjectionHeadT<Real>& head() const { return head_; }

    void set_catalog_tokens(std::shared_ptr<const CatalogTokens> ct) { catalog_tokens_ = std::move(ct); }
    const CatalogTokens& catalog_tokens() const {
        if (!catalog_tokens_) throw std::logic_error("lite model: catalog tokens not set");
        return *catalog_tokens_;
    }

    ItemVecSource source() const { return source_; }
    void use_live_encoder() { source_ = ItemVecSource::LiveEncoder; }

    // install a precomputed item-vector table [catalog+1, d]; PAD row zero
    void use_cached_table(const std::vector<Real>& table, bool trainable) {
        if (static_cast<int64_t>(table.size()) != (catalog_ + 1) * cfg_.rec.model_dim)
            throw std::invalid_argument("lite model: cached table has wrong size");
        cached_table_ = TensorT<Real>::from({catalog_ + 1, cfg_.rec.model_dim}, table, trainable);
        source_ = trainable ? ItemVecSource::CachedTrainable : ItemVecSource::CachedFrozen;
    }
    TensorT<Real>& cached_table() { return cached_table_; }

    // user representations for a batch: [B, d]
    TensorT<Real> user_repr(TapeT<Real>& tape, const Batch& batch, const ForwardCtx& ctx) const {
        const int64_t B = batch.batch_size, T = batch.pad_to, d = cfg_.rec.model_dim;
        TensorT<Real> vecs;
        if (source_ == ItemVecSource::LiveEncoder) {
            // encode each distinct item once, then gather per position; PAD
            // positions point at slot 0 and are fully masked downstream
            std::vector<int64_t> uniq;
            uniq.reserve(batch.input_items.size());
            for (size_t i = 0; i < batch.input_items.size(); ++i)
                if (batch.input_mask[i]) uniq.push_back(batch.input_items[i]);
            std::sort(uniq.begin(), uniq.end());
            uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
            if (uniq.empty()) throw std::invalid_argument("lite model: batch has no real items");
            std::vector<int64_t> slot_of(static_cast<size_t>(catalog_ + 1), 0);
            for (size_t s = 0; s < uniq.size(); ++s) slot_of[static_cast<size_t>(uniq[s])] = static_cast<int64_t>(s);
            auto uniq_vecs = item_enc_.encode_catalog_rows(tape, catalog_tokens(), uniq, ctx);  // [U, d]
            std::vector<int64_t> slots(batch.input_items.size(), 0);
            for (size_t i = 0; i < batch.input_items.size(); ++i)
                if (batch.input_mask[i]) slots[i] = slot_of[static_cast<size_t>(batch.input_items[i])];
            vecs = tape.reshape(tape.gather_rows(uniq_vecs, slots), {B, T, d});
        } else {
            vecs = tape.reshape(tape.gather_rows(cached_table_, batch.input_items), {B, T, d});
        }
        return rec_enc_.encode_sequence(tape, vecs, batch.input_mask, ctx);
    }

    // logits over the catalog: [B, catalog]
    TensorT<Real> forward_scores(TapeT<Real>& tape, const Batch& batch, const ForwardCtx& ctx) const {
        return head_.score(tape, user_repr(tape, batch, ctx));
    }

    // parameter groups for freeze-flag handling
    std::vector<NamedParamT<Real>> item_encoder_params() const {
        std::vector<NamedParamT<Real>> out;
        item_enc_.collect(out, "item_enc");
        return out;
    }
    std::vector<NamedParamT<Real>> rec_encoder_params() const {
        std::vector<NamedParamT<Real>> out;
        rec_enc_.collect(out, "rec_enc");
        return out;
    }
    std::vector<NamedParamT<Real>> head_params() const {
        std::vector<NamedParamT<Real>> out;
        head_.collect(out, "head");
        return out;
    }
    std::vector<NamedParamT<Real>> cached_table_params() const {
        std::vector<NamedParamT<Real>> out;
        if (source_ == ItemVecSource::CachedTrainable) out.push_back({"cached_items", cached_table_});
        return out;
    }

    std::vector<NamedParamT<Real>> all_params() const {
        auto out = item_encoder_params();
        auto rec = rec_encoder_params();
        auto head = head_params();
        auto cached = cached_table_params();
        out.insert(out.end(), rec.begin(), rec.end());
        out.insert(out.end(), head.begin(), head.end());
        out.insert(out.end(), cached.begin(), cached.end());
        return out;
    }

private:
    LiteModelConfig cfg_;
    int64_t catalog_ = 0;
    ItemEncoderT<Real> item_enc_;
    RecEncoderT<Real> rec_enc_;
    ProjectionHeadT<Real> head_;
    TensorT<Real> cached_table_;
    ItemVecSource source_ = ItemVecSource::LiveEncoder;
    std::shared_ptr<const CatalogTokens> catalog_tokens_;
};

using LiteModel = LiteModelT<float>;

}  // namespace literec
