// Item encoder: a small transformer over an item's tokenized context text,
// mean-pooled into one context-aware embedding per item, plus the precomputed
// embedding cache that removes repeated encoding work at inference.

#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "literec/data.hpp"
#include "literec/nn.hpp"
#include "literec/text.hpp"

namespace literec {

struct ItemEncoderConfig {
    int64_t layers = 2;
    int64_t heads = 4;
    int64_t model_dim = 64;
    int64_t ff_dim = 256;
    int64_t max_item_text_len = 32;
    double dropout = 0.1;

    void validate() const {
        if (layers < 1 || heads < 1 || model_dim < 1 || ff_dim < 1 || max_item_text_len < 1)
            throw std::invalid_argument("item encoder config: all dims must be >= 1");
        if (model_dim % heads != 0)
            throw std::invalid_argument("item encoder config: model_dim must be divisible by heads");
    }
};

// Tokenized context of every catalog item, padded to a fixed length.
struct CatalogTokens {
    int64_t text_len = 0;               // tokens per item row
    std::vector<int64_t> ids;           // [catalog * text_len]
    std::vector<uint8_t> mask;          // [catalog * text_len]
    int64_t catalog = 0;

    static CatalogTokens build(const Dataset& ds, const Vocab& vocab, int64_t max_len) {
        CatalogTokens ct;
        ct.text_len = max_len;
        ct.catalog = ds.catalog_size();
        ct.ids.assign(static_cast<size_t>(ct.catalog * max_len), Vocab::kPad);
        ct.mask.assign(static_cast<size_t>(ct.catalog * max_len), 0);
        for (const auto& item : ds.items()) {
            auto enc = encode_item_context(item.title, item.genre, vocab, max_len);
            for (size_t j = 0; j < enc.ids.size(); ++j) {
                ct.ids[static_cast<size_t>(item.index * max_len) + j] = enc.ids[j];
                ct.mask[static_cast<size_t>(item.index * max_len) + j] = 1;
            }
        }
        return ct;
    }
};

template <typename Real>
class ItemEncoderT {
public:
    ItemEncoderT() = default;
    ItemEncoderT(const ItemEncoderConfig& cfg, int64_t vocab_size, std::mt19937& rng)
        : cfg_(cfg), tokens_(vocab_size, cfg.model_dim, rng), positions_(cfg.max_item_text_len, cfg.model_dim, rng),
          encoder_(cfg.layers, cfg.model_dim, cfg.heads, cfg.ff_dim, rng) {
        cfg.validate();
    }

    const ItemEncoderConfig& config() const { return cfg_; }

    // token_ids/mask laid out [n, text_len]; returns [n, model_dim]
    TensorT<Real> forward_batch(TapeT<Real>& tape, const std::vector<int64_t>& token_ids,
                                const std::vector<uint8_t>& mask, int64_t n, int64_t text_len,
                                const ForwardCtx& ctx) const {
        if (n < 1) throw std::invalid_argument("item encoder: empty batch");
        if (text_len > cfg_.max_item_text_len)
            throw std::invalid_argument("item encoder: text length " + std::to_string(text_len) +
                                        " exceeds max_item_text_len");
        for (int64_t r = 0; r < n; ++r) {
            bool any = false;
            for (int64_t t = 0; t < text_len; ++t) any = any || mask[static_cast<size_t>(r * text_len + t)];
            if (!any) throw std::invalid_argument("item encoder: item row " + std::to_string(r) + " has no tokens");
        }
        forward_count_ += n;

        auto tok = tokens_.forward(tape, token_ids);  // [n*text_len, d]
        std::vector<int64_t> pos_ids(static_cast<size_t>(n * text_len));
        for (int64_t r = 0; r < n; ++r)
            for (int64_t t = 0; t < text_len; ++t) pos_ids[static_cast<size_t>(r * text_len + t)] = t;
        auto pos = positions_.forward(tape, pos_ids);
        auto x = tape.reshape(tape.add(tok, pos), {n, text_len, cfg_.model_dim});
        x = tape.dropout(x, ctx.dropout, ctx.next_seed(), ctx.training);
        auto hidden = encoder_.forward(tape, x, mask, ctx);
        return tape.masked_mean_rows(hidden, mask);  // [n, d]
    }

    // encode one tokenized item (eval-style convenience); returns [model_dim]
    TensorT<Real> encode_item(TapeT<Real>& tape, const TokenizedText& text, const ForwardCtx& ctx) const {
        if (text.ids.empty()) throw std::invalid_argument("item encoder: empty token list");
        std::vector<uint8_t> mask(text.ids.size(), 1);
        auto out = forward_batch(tape, text.ids, mask, 1, static_cast<int64_t>(text.ids.size()), ctx);
        return tape.reshape(out, {cfg_.model_dim});
    }

    // encode catalog rows [first, first+count) from padded catalog tokens
    TensorT<Real> encode_catalog_rows(TapeT<Real>& tape, const CatalogTokens& ct,
                                      const std::vector<int64_t>& item_indices, const ForwardCtx& ctx) const {
        const int64_t n = static_cast<int64_t>(item_indices.size());
        std::vector<int64_t> ids(static_cast<size_t>(n * ct.text_len));
        std::vector<uint8_t> mask(static_cast<size_t>(n * ct.text_len));
        for (int64_t r = 0; r < n; ++r) {
            const int64_t item = item_indices[static_cast<size_t>(r)];
            std::copy_n(ct.ids.begin() + item * ct.text_len, ct.text_len, ids.begin() + r * ct.text_len);
            std::copy_n(ct.mask.begin() + item * ct.text_len, ct.text_len, mask.begin() + r * ct.text_len);
        }
        return forward_batch(tape, ids, mask, n, ct.text_len, ctx);
    }

    int64_t forward_count() const { return forward_count_; }
    void reset_forward_count() const { forward_count_ = 0; }

    void collect(std::vector<NamedParamT<Real>>& out, const std::string& prefix) const {
        tokens_.collect(out, prefix + ".tok_emb");
        positions_.collect(out, prefix + ".pos_emb");
        encoder_.collect(out, prefix + ".enc");
    }

private:
    ItemEncoderConfig cfg_;
    EmbeddingT<Real> tokens_;
    EmbeddingT<Real> positions_;
    TransformerEncoderT<Real> encoder_;
    mutable int64_t forward_count_ = 0;
};

// Precomputed per-item embeddings: catalog+1 rows, last row is the all-zero
// PAD row. The fingerprint ties a cache file to the producing model.
struct EmbeddingCache {
    int64_t rows = 0;  // catalog + 1
    int64_t dim = 0;
    std::vector<float> data;              // row-major
    std::array<uint8_t, 32> fingerprint{};

    const float* row(int64_t i) const { return data.data() + i * dim; }
};

template <typename Real>
EmbeddingCache precompute_all_embeddings(const ItemEncoderT<Real>& enc, const CatalogTokens& ct,
                                         int64_t batch_size = 64) {
    EmbeddingCache cache;
    cache.rows = ct.catalog + 1;
    cache.dim = enc.config().model_dim;
    cache.data.assign(static_cast<size_t>(cache.rows * cache.dim), 0.0f);
    TapeT<Real> tape;
    tape.set_recording(false);
    const auto ctx = ForwardCtx::eval();
    for (int64_t first = 0; first < ct.catalog; first += batch_size) {
        const int64_t count = std::min(batch_size, ct.catalog - first);
        std::vector<int64_t> indices(static_cast<size_t>(count));
        for (int64_t i = 0; i < count; ++i) indices[static_cast<size_t>(i)] = first + i;
        auto vecs = enc.encode_catalog_rows(tape, ct, indices, ctx);
        for (int64_t i = 0; i < count; ++i)
            for (int64_t j = 0; j < cache.dim; ++j)
                cache.data[static_cast<size_t>((first + i) * cache.dim + j)] =
                    static_cast<float>(vecs.data()[i * cache.dim + j]);
    }
    return cache;
}

using ItemEncoder = ItemEncoderT<float>;

}  // namespace literec
