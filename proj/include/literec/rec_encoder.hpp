// Recommendation encoder: bidirectional transformer over the sequence of
// context-aware item vectors, masked-mean pooled into a user representation.

#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "literec/nn.hpp"

namespace literec {

struct RecEncoderConfig {
    int64_t layers = 2;
    int64_t heads = 4;
    int64_t model_dim = 64;
    int64_t ff_dim = 256;
    int64_t max_seq_len = 21;  // segment length including the target slot
    double dropout = 0.1;

    void validate() const {
        if (layers < 1 || heads < 1 || model_dim < 1 || ff_dim < 1)
            throw std::invalid_argument("rec encoder config: all dims must be >= 1");
        if (model_dim % heads != 0)
            throw std::invalid_argument("rec encoder config: model_dim must be divisible by heads");
        if (max_seq_len < 2) throw std::invalid_argument("rec encoder config: max_seq_len must be >= 2");
    }
};

// One-layer affine map for item vectors whose source dimension differs from
// the rec encoder's.
template <typename Real>
class DimAdapterT {
public:
    DimAdapterT() = default;
    DimAdapterT(int64_t in_dim, int64_t out_dim, std::mt19937& rng) : in_(in_dim), proj_(in_dim, out_dim, rng) {}

    // identity-initialized square adapter
    static DimAdapterT identity(int64_t dim) {
        DimAdapterT a;
        a.in_ = dim;
        std::mt19937 rng(0);
        a.proj_ = LinearT<Real>(dim, dim, rng);
        auto& w = a.proj_.weight().vec();
        std::fill(w.begin(), w.end(), Real(0));
        for (int64_t i = 0; i < dim; ++i) w[static_cast<size_t>(i * dim + i)] = Real(1);
        return a;
    }

    TensorT<Real> forward(TapeT<Real>& tape, const TensorT<Real>& x) const {
        if (x.dim(x.ndim() - 1) != in_)
            throw std::invalid_argument("dim adapter: expected input dim " + std::to_string(in_) + ", got " +
                                        shape_str(x.shape()));
        return proj_.forward(tape, x);
    }

    void collect(std::vector<NamedParamT<Real>>& out, const std::string& prefix) const {
        proj_.collect(out, prefix + ".proj");
    }

private:
    int64_t in_ = 0;
    LinearT<Real> proj_;
};

template <typename Real>
class RecEncoderT {
public:
    RecEncoderT() = default;
    RecEncoderT(const RecEncoderConfig& cfg, std::mt19937& rng)
        : cfg_(cfg), positions_(cfg.max_seq_len, cfg.model_dim, rng),
          encoder_(cfg.layers, cfg.model_dim, cfg.heads, cfg.ff_dim, rng) {
        cfg.validate();
    }

    const RecEncoderConfig& config() const { return cfg_; }

    // final hidden states before pooling: [B,T,d]
    TensorT<Real> hidden_states(TapeT<Real>& tape, const TensorT<Real>& item_vecs,
                                const std::vector<uint8_t>& mask, const ForwardCtx& ctx) const {
        const int64_t B = item_vecs.dim(0), T = item_vecs.dim(1);
        if (T > cfg_.max_seq_len)
            throw std::invalid_argument("rec encoder: sequence length " + std::to_string(T) + " exceeds max " +
                                        std::to_string(cfg_.max_seq_len));
        for (int64_t b = 0; b < B; ++b) {
            bool any = false;
            for (int64_t t = 0; t < T; ++t) any = any || mask[static_cast<size_t>(b * T + t)];
            if (!any) throw std::invalid_argument("rec encoder: sequence row " + std::to_string(b) + " is fully masked");
        }
        std::vector<int64_t> pos_ids(static_cast<size_t>(B * T));
        for (int64_t b = 0; b < B; ++b)
            for (int64_t t = 0; t < T; ++t) pos_ids[static_cast<size_t>(b * T + t)] = t;
        auto pos = tape.reshape(positions_.forward(tape, pos_ids), {B, T, cfg_.model_dim});
        auto x = tape.dropout(tape.add(item_vecs, pos), ctx.dropout, ctx.next_seed(), ctx.training);
        return encoder_.forward(tape, x, mask, ctx);
    }

    // item_vecs[B,T,d], mask[B*T] -> [B,d]
    TensorT<Real> encode_sequence(TapeT<Real>& tape, const TensorT<Real>& item_vecs,
                                  const std::vector<uint8_t>& mask, const ForwardCtx& ctx) const {
        return tape.masked_mean_rows(hidden_states(tape, item_vecs, mask, ctx), mask);
    }

    void collect(std::vector<NamedParamT<Real>>& out, const std::string& prefix) const {
        positions_.collect(out, prefix + ".pos_emb");
        encoder_.collect(out, prefix + ".enc");
    }

private:
    RecEncoderConfig cfg_;
    EmbeddingT<Real> positions_;
    TransformerEncoderT<Real> encoder_;
};

using RecEncoder = RecEncoderT<float>;

}  // namespace literec
