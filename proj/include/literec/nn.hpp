// Transformer building blocks on top of the tape: embeddings, linear layers,
// pre-norm encoder and decoder layers with masked multi-head attention.

#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "literec/optim.hpp"
#include "literec/tensor.hpp"

namespace literec {

inline uint64_t mix_seed(uint64_t a, uint64_t b) {
    // splitmix64 over the combined words
    uint64_t x = a + 0x9e3779b97f4a7c15ULL * (b + 1);
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ULL;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebULL;
    x ^= x >> 31;
    return x;
}

// Per-forward context: training flag plus a seed stream for dropout so a
// fixed (seed, call order) is reproducible.
struct ForwardCtx {
    bool training = false;
    double dropout = 0.0;
    uint64_t seed = 0;
    mutable uint64_t calls = 0;

    uint64_t next_seed() const { return mix_seed(seed, ++calls); }

    static ForwardCtx eval() { return ForwardCtx{}; }
    static ForwardCtx train(double dropout, uint64_t seed) { return ForwardCtx{true, dropout, seed, 0}; }
};

template <typename Real>
TensorT<Real> init_normal(Shape shape, std::mt19937& rng, double std_dev = 0.02) {
    std::normal_distribution<double> dist(0.0, std_dev);
    auto t = TensorT<Real>::zeros(std::move(shape), true);
    for (int64_t i = 0; i < t.size(); ++i) t.data()[i] = static_cast<Real>(dist(rng));
    return t;
}

template <typename Real>
class EmbeddingT {
public:
    EmbeddingT() = default;
    EmbeddingT(int64_t rows, int64_t dim, std::mt19937& rng) : table_(init_normal<Real>({rows, dim}, rng)) {}

    TensorT<Real> forward(TapeT<Real>& tape, const std::vector<int64_t>& ids) const {
        return tape.gather_rows(table_, ids);
    }

    TensorT<Real>& table() { return table_; }
    const TensorT<Real>& table() const { return table_; }

    void collect(std::vector<NamedParamT<Real>>& out, const std::string& prefix) const {
        out.push_back({prefix, table_});
    }

private:
    TensorT<Real> table_;
};

template <typename Real>
class LinearT {
public:
    LinearT() = default;
    LinearT(int64_t in, int64_t out, std::mt19937& rng)
        : w_(init_normal<Real>({in, out}, rng)), b_(TensorT<Real>::zeros({out}, true)) {}

    TensorT<Real> forward(TapeT<Real>& tape, const TensorT<Real>& x) const { return tape.linear(x, w_, &b_); }

    TensorT<Real>& weight() { return w_; }
    TensorT<Real>& bias() { return b_; }
    const TensorT<Real>& weight() const { return w_; }
    const TensorT<Real>& bias() const { return b_; }

    void collect(std::vector<NamedParamT<Real>>& out, const std::string& prefix) const {
        out.push_back({prefix + ".w", w_});
        out.push_back({prefix + ".b", b_});
    }

private:
    TensorT<Real> w_, b_;
};

template <typename Real>
class LayerNormT {
public:
    LayerNormT() = default;
    explicit LayerNormT(int64_t dim)
        : gamma_(TensorT<Real>::from({dim}, std::vector<Real>(static_cast<size_t>(dim), Real(1)), true)),
          beta_(TensorT<Real>::zeros({dim}, true)) {}

    TensorT<Real> forward(TapeT<Real>& tape, const TensorT<Real>& x) const {
        return tape.layer_norm(x, gamma_, beta_);
    }

    void collect(std::vector<NamedParamT<Real>>& out, const std::string& prefix) const {
        out.push_back({prefix + ".gamma", gamma_});
        out.push_back({prefix + ".beta", beta_});
    }

private:
    TensorT<Real> gamma_, beta_;
};

template <typename Real>
class MultiHeadAttentionT {
public:
    MultiHeadAttentionT() = default;
    MultiHeadAttentionT(int64_t dim, int64_t heads, std::mt19937& rng)
        : heads_(heads), q_(dim, dim, rng), k_(dim, dim, rng), v_(dim, dim, rng), o_(dim, dim, rng) {
        if (dim % heads != 0) throw std::invalid_argument("attention: model dim must be divisible by heads");
        scale_ = Real(1.0 / std::sqrt(static_cast<double>(dim / heads)));
    }

    // x_q[B,Tq,d], x_kv[B,Tk,d]; mask has batch B
    TensorT<Real> forward(TapeT<Real>& tape, const TensorT<Real>& x_q, const TensorT<Real>& x_kv,
                          const AttnMask& mask, const ForwardCtx& ctx) const {
        auto q = tape.split_heads(q_.forward(tape, x_q), heads_);
        auto k = tape.split_heads(k_.forward(tape, x_kv), heads_);
        auto v = tape.split_heads(v_.forward(tape, x_kv), heads_);
        auto scores = tape.scale(tape.bmm_nt(q, k), scale_);
        auto probs = tape.masked_softmax(scores, mask);
        probs = tape.dropout(probs, ctx.dropout, ctx.next_seed(), ctx.training);
        auto context = tape.merge_heads(tape.bmm(probs, v), heads_);
        return o_.forward(tape, context);
    }

    void collect(std::vector<NamedParamT<Real>>& out, const std::string& prefix) const {
        q_.collect(out, prefix + ".q");
        k_.collect(out, prefix + ".k");
        v_.collect(out, prefix + ".v");
        o_.collect(out, prefix + ".o");
    }

private:
    int64_t heads_ = 1;
    Real scale_ = 1;
    LinearT<Real> q_, k_, v_, o_;
};

template <typename Real>
class FeedForwardT {
public:
    FeedForwardT() = default;
    FeedForwardT(int64_t dim, int64_t hidden, std::mt19937& rng) : up_(dim, hidden, rng), down_(hidden, dim, rng) {}

    TensorT<Real> forward(TapeT<Real>& tape, const TensorT<Real>& x) const {
        return down_.forward(tape, tape.gelu(up_.forward(tape, x)));
    }

    void collect(std::vector<NamedParamT<Real>>& out, const std::string& prefix) const {
        up_.collect(out, prefix + ".up");
        down_.collect(out, prefix + ".down");
    }

private:
    LinearT<Real> up_, down_;
};

template <typename Real>
class EncoderLayerT {
public:
    EncoderLayerT() = default;
    EncoderLayerT(int64_t dim, int64_t heads, int64_t ff_dim, std::mt19937& rng)
        : ln1_(dim), ln2_(dim), attn_(dim, heads, rng), ff_(dim, ff_dim, rng) {}

    TensorT<Real> forward(TapeT<Real>& tape, const TensorT<Real>& x, const AttnMask& mask,
                          const ForwardCtx& ctx) const {
        auto normed = ln1_.forward(tape, x);
        auto attn_out = attn_.forward(tape, normed, normed, mask, ctx);
        auto h = tape.add(x, tape.dropout(attn_out, ctx.dropout, ctx.next_seed(), ctx.training));
        auto ff_out = ff_.forward(tape, ln2_.forward(tape, h));
        return tape.add(h, tape.dropout(ff_out, ctx.dropout, ctx.next_seed(), ctx.training));
    }

    void collect(std::vector<NamedParamT<Real>>& out, const std::string& prefix) const {
        ln1_.collect(out, prefix + ".ln1");
        ln2_.collect(out, prefix + ".ln2");
        attn_.collect(out, prefix + ".attn");
        ff_.collect(out, prefix + ".ff");
    }

private:
    LayerNormT<Real> ln1_, ln2_;
    MultiHeadAttentionT<Real> attn_;
    FeedForwardT<Real> ff_;
};

// Pre-norm encoder stack with a final layer norm.
template <typename Real>
class TransformerEncoderT {
public:
    TransformerEncoderT() = default;
    TransformerEncoderT(int64_t layers, int64_t dim, int64_t heads, int64_t ff_dim, std::mt19937& rng)
        : final_ln_(dim) {
        for (int64_t i = 0; i < layers; ++i) layers_.emplace_back(dim, heads, ff_dim, rng);
    }

    // x[B,T,d]; key_mask[B*T], 1 = real position
    TensorT<Real> forward(TapeT<Real>& tape, const TensorT<Real>& x, const std::vector<uint8_t>& key_mask,
                          const ForwardCtx& ctx) const {
        const auto mask = AttnMask::from_key_mask(key_mask, x.dim(0), x.dim(1), x.dim(1));
        auto h = x;
        for (const auto& layer : layers_) h = layer.forward(tape, h, mask, ctx);
        return final_ln_.forward(tape, h);
    }

    void collect(std::vector<NamedParamT<Real>>& out, const std::string& prefix) const {
        for (size_t i = 0; i < layers_.size(); ++i) layers_[i].collect(out, prefix + ".layer" + std::to_string(i));
        final_ln_.collect(out, prefix + ".final_ln");
    }

private:
    std::vector<EncoderLayerT<Real>> layers_;
    LayerNormT<Real> final_ln_;
};

template <typename Real>
class DecoderLayerT {
public:
    DecoderLayerT() = default;
    DecoderLayerT(int64_t dim, int64_t heads, int64_t ff_dim, std::mt19937& rng)
        : ln1_(dim), ln2_(dim), ln3_(dim), self_attn_(dim, heads, rng), cross_attn_(dim, heads, rng),
          ff_(dim, ff_dim, rng) {}

    TensorT<Real> forward(TapeT<Real>& tape, const TensorT<Real>& x, const AttnMask& causal_mask,
                          const TensorT<Real>& enc_out, const AttnMask& cross_mask, const ForwardCtx& ctx) const {
        auto normed = ln1_.forward(tape, x);
        auto self_out = self_attn_.forward(tape, normed, normed, causal_mask, ctx);
        auto h = tape.add(x, tape.dropout(self_out, ctx.dropout, ctx.next_seed(), ctx.training));
        auto cross_out = cross_attn_.forward(tape, ln2_.forward(tape, h), enc_out, cross_mask, ctx);
        auto h2 = tape.add(h, tape.dropout(cross_out, ctx.dropout, ctx.next_seed(), ctx.training));
        auto ff_out = ff_.forward(tape, ln3_.forward(tape, h2));
        return tape.add(h2, tape.dropout(ff_out, ctx.dropout, ctx.next_seed(), ctx.training));
    }

    void collect(std::vector<NamedParamT<Real>>& out, const std::string& prefix) const {
        ln1_.collect(out, prefix + ".ln1");
        ln2_.collect(out, prefix + ".ln2");
        ln3_.collect(out, prefix + ".ln3");
        self_attn_.collect(out, prefix + ".self_attn");
        cross_attn_.collect(out, prefix + ".cross_attn");
        ff_.collect(out, prefix + ".ff");
    }

private:
    LayerNormT<Real> ln1_, ln2_, ln3_;
    MultiHeadAttentionT<Real> self_attn_, cross_attn_;
    FeedForwardT<Real> ff_;
};

}  // namespace literec
