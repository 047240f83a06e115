// Dense tensor engine with reverse-mode autodiff on an explicit tape.
//
// Templated on the scalar type: models train and serve in float, while the
// gradient-check oracles instantiate the same code in double. Tensors are
// cheap handles onto shared storage; ops are members of TapeT so the tape a
// value belongs to is always explicit. Single-threaded per tape.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace literec {

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int64_t d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << "]";
    return os.str();
}

template <typename Real>
struct TensorStorage {
    Shape shape;
    std::vector<Real> value;
    std::vector<Real> grad;   // empty until first accumulation
    bool requires_grad = false;
    int node = -1;            // producing tape node, -1 for leaves
};

template <typename Real>
class TensorT {
public:
    TensorT() : s_(std::make_shared<TensorStorage<Real>>()) {}

    static TensorT zeros(Shape shape, bool requires_grad = false) {
        TensorT t;
        t.s_->shape = std::move(shape);
        t.s_->value.assign(static_cast<size_t>(shape_numel(t.s_->shape)), Real(0));
        t.s_->requires_grad = requires_grad;
        return t;
    }

    static TensorT from(Shape shape, std::vector<Real> data, bool requires_grad = false) {
        if (shape_numel(shape) != static_cast<int64_t>(data.size()))
            throw std::invalid_argument("tensor: shape " + shape_str(shape) + " does not match data length " +
                                        std::to_string(data.size()));
        TensorT t;
        t.s_->shape = std::move(shape);
        t.s_->value = std::move(data);
        t.s_->requires_grad = requires_grad;
        return t;
    }

    static TensorT scalar(Real v) { return from({1}, {v}); }

    const Shape& shape() const { return s_->shape; }
    int64_t ndim() const { return static_cast<int64_t>(s_->shape.size()); }
    int64_t dim(int64_t i) const { return s_->shape[static_cast<size_t>(i)]; }
    int64_t size() const { return static_cast<int64_t>(s_->value.size()); }

    // A tensor is a shared handle; constness of the handle is shallow, so the
    // storage accessors are const like shared_ptr's.
    Real* data() const { return s_->value.data(); }
    std::vector<Real>& vec() const { return s_->value; }

    Real item() const {
        if (size() != 1) throw std::logic_error("tensor: item() on non-scalar " + shape_str(shape()));
        return s_->value[0];
    }

    bool requires_grad() const { return s_->requires_grad; }
    void set_requires_grad(bool rg) const { s_->requires_grad = rg; }
    int node() const { return s_->node; }

    bool has_grad() const { return !s_->grad.empty(); }
    std::vector<Real>& grad() const {
        ensure_grad();
        return s_->grad;
    }
    const std::vector<Real>& grad_c() const { return s_->grad; }
    void ensure_grad() const {
        if (s_->grad.empty()) s_->grad.assign(s_->value.size(), Real(0));
    }
    void zero_grad() const {
        if (!s_->grad.empty()) std::fill(s_->grad.begin(), s_->grad.end(), Real(0));
    }

    bool all_finite() const {
        for (Real v : s_->value)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    std::shared_ptr<TensorStorage<Real>> storage() const { return s_; }

private:
    std::shared_ptr<TensorStorage<Real>> s_;
};

// Key mask for attention: allowed[b*Tq*Tk + q*Tk + k] != 0 means query q of
// batch row b may attend key k. Shared across heads.
struct AttnMask {
    int64_t batch = 0, tq = 0, tk = 0;
    std::vector<uint8_t> allowed;

    static AttnMask from_key_mask(const std::vector<uint8_t>& key_mask, int64_t batch, int64_t tq, int64_t tk) {
        AttnMask m;
        m.batch = batch;
        m.tq = tq;
        m.tk = tk;
        m.allowed.resize(static_cast<size_t>(batch * tq * tk));
        for (int64_t b = 0; b < batch; ++b)
            for (int64_t q = 0; q < tq; ++q)
                for (int64_t k = 0; k < tk; ++k)
                    m.allowed[static_cast<size_t>((b * tq + q) * tk + k)] = key_mask[static_cast<size_t>(b * tk + k)];
        return m;
    }

    static AttnMask causal(int64_t batch, int64_t t) {
        AttnMask m;
        m.batch = batch;
        m.tq = t;
        m.tk = t;
        m.allowed.assign(static_cast<size_t>(batch * t * t), 0);
        for (int64_t b = 0; b < batch; ++b)
            for (int64_t q = 0; q < t; ++q)
                for (int64_t k = 0; k <= q; ++k)
                    m.allowed[static_cast<size_t>((b * t + q) * t + k)] = 1;
        return m;
    }
};

template <typename Real>
class TapeT {
public:
    using Tensor = TensorT<Real>;

    bool recording() const { return recording_; }
    void set_recording(bool on) { recording_ = on; }

    size_t node_count() const { return nodes_.size(); }
    const std::vector<int>& node_inputs(size_t i) const { return nodes_[i].inputs; }

    void reset() { nodes_.clear(); }

    // ---- elementwise ----

    Tensor add(const Tensor& a, const Tensor& b) {
        require_same_shape("add", a, b);
        Tensor out = Tensor::zeros(a.shape());
        for (int64_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] + b.data()[i];
        record(out, {a, b}, [a, b, out]() mutable {
            const auto& g = out.grad_c();
            if (a.requires_grad()) {
                auto& ga = a.grad();
                for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
            }
            if (b.requires_grad()) {
                auto& gb = b.grad();
                for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
            }
        });
        return out;
    }

    Tensor mul(const Tensor& a, const Tensor& b) {
        require_same_shape("mul", a, b);
        Tensor out = Tensor::zeros(a.shape());
        for (int64_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] * b.data()[i];
        record(out, {a, b}, [a, b, out]() mutable {
            const auto& g = out.grad_c();
            if (a.requires_grad()) {
                auto& ga = a.grad();
                for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * b.data()[i];
            }
            if (b.requires_grad()) {
                auto& gb = b.grad();
                for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * a.data()[i];
            }
        });
        return out;
    }

    Tensor scale(const Tensor& x, Real c) {
        Tensor out = Tensor::zeros(x.shape());
        for (int64_t i = 0; i < x.size(); ++i) out.data()[i] = x.data()[i] * c;
        record(out, {x}, [x, out, c]() mutable {
            if (!x.requires_grad()) return;
            const auto& g = out.grad_c();
            auto& gx = x.grad();
            for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * c;
        });
        return out;
    }

    // bias broadcast over the last dimension: x[..., d] + b[d]
    Tensor add_bias(const Tensor& x, const Tensor& b) {
        const int64_t d = x.dim(x.ndim() - 1);
        if (b.ndim() != 1 || b.dim(0) != d)
            throw std::invalid_argument("add_bias: bias " + shape_str(b.shape()) + " does not match last dim of " +
                                        shape_str(x.shape()));
        const int64_t rows = x.size() / d;
        Tensor out = Tensor::zeros(x.shape());
        for (int64_t r = 0; r < rows; ++r)
            for (int64_t j = 0; j < d; ++j)
                out.data()[r * d + j] = x.data()[r * d + j] + b.data()[j];
        record(out, {x, b}, [x, b, out, rows, d]() mutable {
            const auto& g = out.grad_c();
            if (x.requires_grad()) {
                auto& gx = x.grad();
                for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
            }
            if (b.requires_grad()) {
                auto& gb = b.grad();
                for (int64_t r = 0; r < rows; ++r)
                    for (int64_t j = 0; j < d; ++j) gb[static_cast<size_t>(j)] += g[static_cast<size_t>(r * d + j)];
            }
        });
        return out;
    }

    Tensor gelu(const Tensor& x) {
        Tensor out = Tensor::zeros(x.shape());
        for (int64_t i = 0; i < x.size(); ++i) {
            const Real v = x.data()[i];
            out.data()[i] = Real(0.5) * v * (Real(1) + std::erf(v / Real(std::sqrt(2.0))));
        }
        record(out, {x}, [x, out]() mutable {
            if (!x.requires_grad()) return;
            const auto& g = out.grad_c();
            auto& gx = x.grad();
            const Real inv_sqrt2 = Real(1) / Real(std::sqrt(2.0));
            const Real inv_sqrt2pi = Real(1) / Real(std::sqrt(2.0 * 3.14159265358979323846));
            for (int64_t i = 0; i < x.size(); ++i) {
                const Real v = x.data()[i];
                const Real cdf = Real(0.5) * (Real(1) + std::erf(v * inv_sqrt2));
                const Real pdf = std::exp(Real(-0.5) * v * v) * inv_sqrt2pi;
                gx[static_cast<size_t>(i)] += g[static_cast<size_t>(i)] * (cdf + v * pdf);
            }
        });
        return out;
    }

    Tensor sum(const Tensor& x) {
        Real acc = 0;
        for (int64_t i = 0; i < x.size(); ++i) acc += x.data()[i];
        Tensor out = Tensor::scalar(acc);
        record(out, {x}, [x, out]() mutable {
            if (!x.requires_grad()) return;
            const Real g = out.grad_c()[0];
            auto& gx = x.grad();
            for (auto& v : gx) v += g;
        });
        return out;
    }

    // ---- matmul family ----

    Tensor matmul(const Tensor& a, const Tensor& b) {
        check_2d("matmul", a);
        check_2d("matmul", b);
        if (a.dim(1) != b.dim(0))
            throw std::invalid_argument("matmul: inner dimensions differ, " + shape_str(a.shape()) + " vs " +
                                        shape_str(b.shape()));
        const int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
        Tensor out = Tensor::zeros({m, n});
        gemm_nn(a.data(), b.data(), out.data(), m, k, n);
        record(out, {a, b}, [a, b, out, m, k, n]() mutable {
            const Real* g = out.grad_c().data();
            if (a.requires_grad()) gemm_nt(g, b.data(), a.grad().data(), m, n, k);   // dA += G * B^T
            if (b.requires_grad()) gemm_tn(a.data(), g, b.grad().data(), k, m, n);   // dB += A^T * G
        });
        return out;
    }

    // a[m,k] * b[n,k]^T -> [m,n]
    Tensor matmul_nt(const Tensor& a, const Tensor& b) {
        check_2d("matmul_nt", a);
        check_2d("matmul_nt", b);
        if (a.dim(1) != b.dim(1))
            throw std::invalid_argument("matmul_nt: inner dimensions differ, " + shape_str(a.shape()) + " vs " +
                                        shape_str(b.shape()));
        const int64_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
        Tensor out = Tensor::zeros({m, n});
        gemm_nt(a.data(), b.data(), out.data(), m, k, n);
        record(out, {a, b}, [a, b, out, m, k, n]() mutable {
            const Real* g = out.grad_c().data();
            if (a.requires_grad()) gemm_nn(g, b.data(), a.grad().data(), m, n, k);   // dA += G * B
            if (b.requires_grad()) gemm_tn(g, a.data(), b.grad().data(), n, m, k);   // dB += G^T * A
        });
        return out;
    }

    // x[..., d] * w[d, k] (+ bias[k]) with leading dims preserved
    Tensor linear(const Tensor& x, const Tensor& w, const Tensor* bias = nullptr) {
        check_2d("linear", w);
        const int64_t d = x.dim(x.ndim() - 1);
        if (d != w.dim(0))
            throw std::invalid_argument("linear: input " + shape_str(x.shape()) + " incompatible with weight " +
                                        shape_str(w.shape()));
        const int64_t rows = x.size() / d, k = w.dim(1);
        Tensor out = Tensor::zeros(with_last_dim(x.shape(), k));
        gemm_nn(x.data(), w.data(), out.data(), rows, d, k);
        if (bias) {
            for (int64_t r = 0; r < rows; ++r)
                for (int64_t j = 0; j < k; ++j) out.data()[r * k + j] += bias->data()[j];
        }
        Tensor b = bias ? *bias : Tensor();
        const bool has_bias = bias != nullptr;
        std::vector<Tensor> ins = {x, w};
        if (has_bias) ins.push_back(b);
        record(out, ins, [x, w, b, has_bias, out, rows, d, k]() mutable {
            const Real* g = out.grad_c().data();
            if (x.requires_grad()) gemm_nt(g, w.data(), x.grad().data(), rows, k, d);
            if (w.requires_grad()) gemm_tn(x.data(), g, w.grad().data(), d, rows, k);
            if (has_bias && b.requires_grad()) {
                auto& gb = b.grad();
                for (int64_t r = 0; r < rows; ++r)
                    for (int64_t j = 0; j < k; ++j) gb[static_cast<size_t>(j)] += g[r * k + j];
            }
        });
        return out;
    }

    // batched matmul over leading dim: a[B,m,k] * b[B,k,n] -> [B,m,n]
    Tensor bmm(const Tensor& a, const Tensor& b) {
        check_3d("bmm", a);
        check_3d("bmm", b);
        if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(1))
            throw std::invalid_argument("bmm: incompatible shapes " + shape_str(a.shape()) + " vs " +
                                        shape_str(b.shape()));
        const int64_t B = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(2);
        Tensor out = Tensor::zeros({B, m, n});
        for (int64_t s = 0; s < B; ++s)
            gemm_nn(a.data() + s * m * k, b.data() + s * k * n, out.data() + s * m * n, m, k, n);
        record(out, {a, b}, [a, b, out, B, m, k, n]() mutable {
            const Real* g = out.grad_c().data();
            for (int64_t s = 0; s < B; ++s) {
                if (a.requires_grad())
                    gemm_nt(g + s * m * n, b.data() + s * k * n, a.grad().data() + s * m * k, m, n, k);
                if (b.requires_grad())
                    gemm_tn(a.data() + s * m * k, g + s * m * n, b.grad().data() + s * k * n, k, m, n);
            }
        });
        return out;
    }

    // a[B,m,k] * b[B,n,k]^T -> [B,m,n]
    Tensor bmm_nt(const Tensor& a, const Tensor& b) {
        check_3d("bmm_nt", a);
        check_3d("bmm_nt", b);
        if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2))
            throw std::invalid_argument("bmm_nt: incompatible shapes " + shape_str(a.shape()) + " vs " +
                                        shape_str(b.shape()));
        const int64_t B = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(1);
        Tensor out = Tensor::zeros({B, m, n});
        for (int64_t s = 0; s < B; ++s)
            gemm_nt(a.data() + s * m * k, b.data() + s * n * k, out.data() + s * m * n, m, k, n);
        record(out, {a, b}, [a, b, out, B, m, k, n]() mutable {
            const Real* g = out.grad_c().data();
            for (int64_t s = 0; s < B; ++s) {
                if (a.requires_grad())
                    gemm_nn(g + s * m * n, b.data() + s * n * k, a.grad().data() + s * m * k, m, n, k);
                if (b.requires_grad())
                    gemm_tn(g + s * m * n, a.data() + s * m * k, b.grad().data() + s * n * k, n, m, k);
            }
        });
        return out;
    }

    // ---- shape moves ----

    Tensor reshape(const Tensor& x, Shape shape) {
        if (shape_numel(shape) != x.size())
            throw std::invalid_argument("reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape) +
                                        " changes element count");
        Tensor out = Tensor::from(std::move(shape), x.vec());
        record(out, {x}, [x, out]() mutable {
            if (!x.requires_grad()) return;
            const auto& g = out.grad_c();
            auto& gx = x.grad();
            for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
        });
        return out;
    }

    // [B,T,d] -> [B*H,T,d/H]
    Tensor split_heads(const Tensor& x, int64_t heads) {
        check_3d("split_heads", x);
        const int64_t B = x.dim(0), T = x.dim(1), d = x.dim(2);
        if (d % heads != 0) throw std::invalid_argument("split_heads: dim not divisible by head count");
        const int64_t dh = d / heads;
        Tensor out = Tensor::zeros({B * heads, T, dh});
        for (int64_t b = 0; b < B; ++b)
            for (int64_t h = 0; h < heads; ++h)
                for (int64_t t = 0; t < T; ++t)
                    std::copy_n(x.data() + (b * T + t) * d + h * dh, dh,
                                out.data() + ((b * heads + h) * T + t) * dh);
        record(out, {x}, [x, out, B, T, d, heads, dh]() mutable {
            if (!x.requires_grad()) return;
            const auto& g = out.grad_c();
            auto& gx = x.grad();
            for (int64_t b = 0; b < B; ++b)
                for (int64_t h = 0; h < heads; ++h)
                    for (int64_t t = 0; t < T; ++t)
                        for (int64_t j = 0; j < dh; ++j)
                            gx[static_cast<size_t>((b * T + t) * d + h * dh + j)] +=
                                g[static_cast<size_t>(((b * heads + h) * T + t) * dh + j)];
        });
        return out;
    }

    // [B*H,T,dh] -> [B,T,dh*H]
    Tensor merge_heads(const Tensor& x, int64_t heads) {
        check_3d("merge_heads", x);
        if (x.dim(0) % heads != 0) throw std::invalid_argument("merge_heads: batch not divisible by head count");
        const int64_t B = x.dim(0) / heads, T = x.dim(1), dh = x.dim(2), d = dh * heads;
        Tensor out = Tensor::zeros({B, T, d});
        for (int64_t b = 0; b < B; ++b)
            for (int64_t h = 0; h < heads; ++h)
                for (int64_t t = 0; t < T; ++t)
                    std::copy_n(x.data() + ((b * heads + h) * T + t) * dh, dh,
                                out.data() + (b * T + t) * d + h * dh);
        record(out, {x}, [x, out, B, T, d, heads, dh]() mutable {
            if (!x.requires_grad()) return;
            const auto& g = out.grad_c();
            auto& gx = x.grad();
            for (int64_t b = 0; b < B; ++b)
                for (int64_t h = 0; h < heads; ++h)
                    for (int64_t t = 0; t < T; ++t)
                        for (int64_t j = 0; j < dh; ++j)
                            gx[static_cast<size_t>(((b * heads + h) * T + t) * dh + j)] +=
                                g[static_cast<size_t>((b * T + t) * d + h * dh + j)];
        });
        return out;
    }

    // gather rows: table[N,d] indexed by ids -> [len(ids),d]; also the embedding lookup
    Tensor gather_rows(const Tensor& table, const std::vector<int64_t>& ids) {
        check_2d("gather_rows", table);
        const int64_t n = table.dim(0), d = table.dim(1);
        for (int64_t id : ids)
            if (id < 0 || id >= n)
                throw std::out_of_range("gather_rows: index " + std::to_string(id) + " out of [0," +
                                        std::to_string(n) + ")");
        Tensor out = Tensor::zeros({static_cast<int64_t>(ids.size()), d});
        for (size_t r = 0; r < ids.size(); ++r)
            std::copy_n(table.data() + ids[r] * d, d, out.data() + static_cast<int64_t>(r) * d);
        record(out, {table}, [table, out, ids, d]() mutable {
            if (!table.requires_grad()) return;
            const auto& g = out.grad_c();
            auto& gt = table.grad();
            for (size_t r = 0; r < ids.size(); ++r)
                for (int64_t j = 0; j < d; ++j)
                    gt[static_cast<size_t>(ids[r] * d + j)] += g[r * static_cast<size_t>(d) + static_cast<size_t>(j)];
        });
        return out;
    }

    // ---- normalization / softmax ----

    Tensor softmax_rows(const Tensor& x) {
        if (!x.all_finite()) throw std::invalid_argument("softmax_rows: non-finite input");
        const int64_t d = x.dim(x.ndim() - 1), rows = x.size() / d;
        Tensor out = Tensor::zeros(x.shape());
        for (int64_t r = 0; r < rows; ++r) softmax_row(x.data() + r * d, out.data() + r * d, d);
        record(out, {x}, [x, out, rows, d]() mutable {
            if (!x.requires_grad()) return;
            const auto& g = out.grad_c();
            auto& gx = x.grad();
            for (int64_t r = 0; r < rows; ++r) {
                const Real* y = out.data() + r * d;
                const Real* gr = g.data() + r * d;
                Real dot = 0;
                for (int64_t j = 0; j < d; ++j) dot += gr[j] * y[j];
                for (int64_t j = 0; j < d; ++j) gx[static_cast<size_t>(r * d + j)] += y[j] * (gr[j] - dot);
            }
        });
        return out;
    }

    // softmax over last dim of scores[B*heads_per_mask_row..., Tq, Tk] with
    // disallowed keys excluded; disallowed outputs are exactly zero.
    Tensor masked_softmax(const Tensor& scores, const AttnMask& mask) {
        check_3d("masked_softmax", scores);
        const int64_t BH = scores.dim(0), tq = scores.dim(1), tk = scores.dim(2);
        if (tq != mask.tq || tk != mask.tk || BH % mask.batch != 0)
            throw std::invalid_argument("masked_softmax: mask " + std::to_string(mask.batch) + "x" +
                                        std::to_string(mask.tq) + "x" + std::to_string(mask.tk) +
                                        " incompatible with scores " + shape_str(scores.shape()));
        const int64_t heads = BH / mask.batch;
        Tensor out = Tensor::zeros(scores.shape());
        for (int64_t bh = 0; bh < BH; ++bh) {
            const int64_t b = bh / heads;
            for (int64_t q = 0; q < tq; ++q) {
                const uint8_t* allow = mask.allowed.data() + (b * tq + q) * tk;
                const Real* in = scores.data() + (bh * tq + q) * tk;
                Real* o = out.data() + (bh * tq + q) * tk;
                Real mx = -std::numeric_limits<Real>::infinity();
                for (int64_t k = 0; k < tk; ++k)
                    if (allow[k]) mx = std::max(mx, in[k]);
                if (mx == -std::numeric_limits<Real>::infinity())
                    throw std::invalid_argument("masked_softmax: fully masked attention row");
                Real z = 0;
                for (int64_t k = 0; k < tk; ++k) {
                    if (allow[k]) {
                        o[k] = std::exp(in[k] - mx);
                        z += o[k];
                    }
                }
                for (int64_t k = 0; k < tk; ++k)
                    if (allow[k]) o[k] /= z;
            }
        }
        auto allowed = mask.allowed;
        const int64_t mb = mask.batch;
        record(out, {scores}, [scores, out, allowed, BH, tq, tk, heads, mb]() mutable {
            (void)mb;
            if (!scores.requires_grad()) return;
            const auto& g = out.grad_c();
            auto& gx = scores.grad();
            for (int64_t bh = 0; bh < BH; ++bh) {
                const int64_t b = bh / heads;
                for (int64_t q = 0; q < tq; ++q) {
                    const uint8_t* allow = allowed.data() + (b * tq + q) * tk;
                    const Real* y = out.data() + (bh * tq + q) * tk;
                    const Real* gr = g.data() + (bh * tq + q) * tk;
                    Real dot = 0;
                    for (int64_t k = 0; k < tk; ++k)
                        if (allow[k]) dot += gr[k] * y[k];
                    for (int64_t k = 0; k < tk; ++k)
                        if (allow[k]) gx[static_cast<size_t>((bh * tq + q) * tk + k)] += y[k] * (gr[k] - dot);
                }
            }
        });
        return out;
    }

    Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Real eps = Real(1e-6)) {
        const int64_t d = x.dim(x.ndim() - 1), rows = x.size() / d;
        if (gamma.size() != d || beta.size() != d)
            throw std::invalid_argument("layer_norm: gamma/beta must have length " + std::to_string(d));
        Tensor out = Tensor::zeros(x.shape());
        std::vector<Real> inv_sigma(static_cast<size_t>(rows)), xhat(static_cast<size_t>(x.size()));
        for (int64_t r = 0; r < rows; ++r) {
            const Real* in = x.data() + r * d;
            Real mean = 0;
            for (int64_t j = 0; j < d; ++j) mean += in[j];
            mean /= Real(d);
            Real var = 0;
            for (int64_t j = 0; j < d; ++j) var += (in[j] - mean) * (in[j] - mean);
            var /= Real(d);
            const Real is = Real(1) / std::sqrt(var + eps);
            inv_sigma[static_cast<size_t>(r)] = is;
            for (int64_t j = 0; j < d; ++j) {
                const Real xh = (in[j] - mean) * is;
                xhat[static_cast<size_t>(r * d + j)] = xh;
                out.data()[r * d + j] = gamma.data()[j] * xh + beta.data()[j];
            }
        }
        record(out, {x, gamma, beta}, [x, gamma, beta, out, rows, d, inv_sigma = std::move(inv_sigma),
                                       xhat = std::move(xhat)]() mutable {
            const auto& g = out.grad_c();
            for (int64_t r = 0; r < rows; ++r) {
                const Real* gr = g.data() + r * d;
                const Real* xh = xhat.data() + r * d;
                if (gamma.requires_grad()) {
                    auto& gg = gamma.grad();
                    for (int64_t j = 0; j < d; ++j) gg[static_cast<size_t>(j)] += gr[j] * xh[j];
                }
                if (beta.requires_grad()) {
                    auto& gb = beta.grad();
                    for (int64_t j = 0; j < d; ++j) gb[static_cast<size_t>(j)] += gr[j];
                }
                if (x.requires_grad()) {
                    auto& gx = x.grad();
                    Real mean_gy = 0, mean_gy_xh = 0;
                    for (int64_t j = 0; j < d; ++j) {
                        const Real gy = gr[j] * gamma.data()[j];
                        mean_gy += gy;
                        mean_gy_xh += gy * xh[j];
                    }
                    mean_gy /= Real(d);
                    mean_gy_xh /= Real(d);
                    const Real is = inv_sigma[static_cast<size_t>(r)];
                    for (int64_t j = 0; j < d; ++j) {
                        const Real gy = gr[j] * gamma.data()[j];
                        gx[static_cast<size_t>(r * d + j)] += is * (gy - mean_gy - xh[j] * mean_gy_xh);
                    }
                }
            }
        });
        return out;
    }

    // mean over unmasked rows, batched: x[B,T,d], mask[B,T] -> [B,d]
    Tensor masked_mean_rows(const Tensor& x, const std::vector<uint8_t>& mask) {
        check_3d("masked_mean_rows", x);
        const int64_t B = x.dim(0), T = x.dim(1), d = x.dim(2);
        if (static_cast<int64_t>(mask.size()) != B * T)
            throw std::invalid_argument("masked_mean_rows: mask length does not match batch layout");
        std::vector<Real> inv_count(static_cast<size_t>(B));
        for (int64_t b = 0; b < B; ++b) {
            int64_t c = 0;
            for (int64_t t = 0; t < T; ++t) c += mask[static_cast<size_t>(b * T + t)] ? 1 : 0;
            if (c == 0) throw std::invalid_argument("masked_mean_rows: empty pool (all positions masked)");
            inv_count[static_cast<size_t>(b)] = Real(1) / Real(c);
        }
        Tensor out = Tensor::zeros({B, d});
        for (int64_t b = 0; b < B; ++b)
            for (int64_t t = 0; t < T; ++t)
                if (mask[static_cast<size_t>(b * T + t)])
                    for (int64_t j = 0; j < d; ++j)
                        out.data()[b * d + j] += x.data()[(b * T + t) * d + j] * inv_count[static_cast<size_t>(b)];
        record(out, {x}, [x, out, mask, B, T, d, inv_count]() mutable {
            if (!x.requires_grad()) return;
            const auto& g = out.grad_c();
            auto& gx = x.grad();
            for (int64_t b = 0; b < B; ++b)
                for (int64_t t = 0; t < T; ++t)
                    if (mask[static_cast<size_t>(b * T + t)])
                        for (int64_t j = 0; j < d; ++j)
                            gx[static_cast<size_t>((b * T + t) * d + j)] +=
                                g[static_cast<size_t>(b * d + j)] * inv_count[static_cast<size_t>(b)];
        });
        return out;
    }

    // spec form: x[L,d] with boolean mask of length L -> [d]
    Tensor mean_pool_masked(const Tensor& x, const std::vector<uint8_t>& mask) {
        check_2d("mean_pool_masked", x);
        const int64_t L = x.dim(0), d = x.dim(1);
        Tensor x3 = reshape(x, {1, L, d});
        Tensor pooled = masked_mean_rows(x3, mask);
        return reshape(pooled, {d});
    }

    // mean over batch of -log softmax(logits)[target]; targets of -1 are ignored
    Tensor cross_entropy_logits(const Tensor& logits, const std::vector<int64_t>& targets) {
        check_2d("cross_entropy_logits", logits);
        const int64_t B = logits.dim(0), N = logits.dim(1);
        if (static_cast<int64_t>(targets.size()) != B)
            throw std::invalid_argument("cross_entropy_logits: expected " + std::to_string(B) + " targets, got " +
                                        std::to_string(targets.size()));
        int64_t counted = 0;
        for (int64_t t : targets) {
            if (t == -1) continue;
            if (t < 0 || t >= N)
                throw std::out_of_range("cross_entropy_logits: target " + std::to_string(t) + " out of [0," +
                                        std::to_string(N) + ")");
            ++counted;
        }
        if (counted == 0) throw std::invalid_argument("cross_entropy_logits: no targets to score");
        std::vector<Real> probs(static_cast<size_t>(logits.size()));
        Real loss = 0;
        for (int64_t b = 0; b < B; ++b) {
            const Real* in = logits.data() + b * N;
            Real* p = probs.data() + b * N;
            Real mx = in[0];
            for (int64_t j = 1; j < N; ++j) mx = std::max(mx, in[j]);
            Real z = 0;
            for (int64_t j = 0; j < N; ++j) {
                p[j] = std::exp(in[j] - mx);
                z += p[j];
            }
            for (int64_t j = 0; j < N; ++j) p[j] /= z;
            if (targets[static_cast<size_t>(b)] != -1) {
                const Real lse = mx + std::log(z);
                loss += lse - in[targets[static_cast<size_t>(b)]];
            }
        }
        loss /= Real(counted);
        Tensor out = Tensor::scalar(loss);
        record(out, {logits},
               [logits, out, targets, probs = std::move(probs), B, N, counted]() mutable {
                   if (!logits.requires_grad()) return;
                   const Real g = out.grad_c()[0] / Real(counted);
                   auto& gx = logits.grad();
                   for (int64_t b = 0; b < B; ++b) {
                       const int64_t t = targets[static_cast<size_t>(b)];
                       if (t == -1) continue;
                       const Real* p = probs.data() + b * N;
                       for (int64_t j = 0; j < N; ++j) gx[static_cast<size_t>(b * N + j)] += g * p[j];
                       gx[static_cast<size_t>(b * N + t)] -= g;
                   }
               });
        return out;
    }

    // inverted dropout: zero with probability rate, scale survivors by 1/(1-rate)
    Tensor dropout(const Tensor& x, double rate, uint64_t seed, bool training) {
        if (rate < 0.0 || rate >= 1.0) throw std::invalid_argument("dropout: rate must be in [0,1)");
        if (!training || rate == 0.0) {
            Tensor out = Tensor::from(x.shape(), x.vec());
            record(out, {x}, [x, out]() mutable {
                if (!x.requires_grad()) return;
                const auto& g = out.grad_c();
                auto& gx = x.grad();
                for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
            });
            return out;
        }
        std::mt19937_64 rng(seed);
        std::vector<uint8_t> keep(static_cast<size_t>(x.size()));
        const Real inv_keep = Real(1.0 / (1.0 - rate));
        Tensor out = Tensor::zeros(x.shape());
        for (int64_t i = 0; i < x.size(); ++i) {
            const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
            keep[static_cast<size_t>(i)] = u >= rate ? 1 : 0;
            out.data()[i] = keep[static_cast<size_t>(i)] ? x.data()[i] * inv_keep : Real(0);
        }
        record(out, {x}, [x, out, keep = std::move(keep), inv_keep]() mutable {
            if (!x.requires_grad()) return;
            const auto& g = out.grad_c();
            auto& gx = x.grad();
            for (size_t i = 0; i < g.size(); ++i)
                if (keep[i]) gx[i] += g[i] * inv_keep;
        });
        return out;
    }

    // ---- backward ----

    void backward(const Tensor& loss) {
        if (loss.size() != 1) throw std::logic_error("backward: loss must be scalar, got " + shape_str(loss.shape()));
        if (loss.node() < 0 || static_cast<size_t>(loss.node()) >= nodes_.size())
            throw std::logic_error("backward: loss was not produced on this tape");
        auto loss_mut = loss;
        loss_mut.grad()[0] += Real(1);
        std::vector<uint8_t> reachable(nodes_.size(), 0);
        std::vector<int> stack = {loss.node()};
        reachable[static_cast<size_t>(loss.node())] = 1;
        while (!stack.empty()) {
            const int n = stack.back();
            stack.pop_back();
            for (int in : nodes_[static_cast<size_t>(n)].inputs) {
                if (in >= 0 && !reachable[static_cast<size_t>(in)]) {
                    reachable[static_cast<size_t>(in)] = 1;
                    stack.push_back(in);
                }
            }
        }
        for (int i = loss.node(); i >= 0; --i)
            if (reachable[static_cast<size_t>(i)]) nodes_[static_cast<size_t>(i)].backward();
    }

private:
    struct Node {
        std::vector<int> inputs;
        std::function<void()> backward;
    };

    std::vector<Node> nodes_;
    bool recording_ = true;

    void record(Tensor& out, const std::vector<Tensor>& inputs, std::function<void()> backward) {
        bool any_grad = false;
        for (const auto& t : inputs) any_grad = any_grad || t.requires_grad();
        if (!recording_ || !any_grad) return;
        Node n;
        n.inputs.reserve(inputs.size());
        for (const auto& t : inputs) n.inputs.push_back(t.node());
        // output grad must exist before any backward touches it
        out.ensure_grad();
        n.backward = std::move(backward);
        nodes_.push_back(std::move(n));
        out.storage()->node = static_cast<int>(nodes_.size()) - 1;
        out.set_requires_grad(true);
    }

    static void check_2d(const char* op, const Tensor& t) {
        if (t.ndim() != 2) throw std::invalid_argument(std::string(op) + ": expected 2-d tensor, got " + shape_str(t.shape()));
    }
    static void check_3d(const char* op, const Tensor& t) {
        if (t.ndim() != 3) throw std::invalid_argument(std::string(op) + ": expected 3-d tensor, got " + shape_str(t.shape()));
    }
    static void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
        if (a.shape() != b.shape())
            throw std::invalid_argument(std::string(op) + ": shapes differ, " + shape_str(a.shape()) + " vs " +
                                        shape_str(b.shape()));
    }
    static Shape with_last_dim(Shape s, int64_t k) {
        s.back() = k;
        return s;
    }

    static void softmax_row(const Real* in, Real* out, int64_t d) {
        Real mx = in[0];
        for (int64_t j = 1; j < d; ++j) mx = std::max(mx, in[j]);
        Real z = 0;
        for (int64_t j = 0; j < d; ++j) {
            out[j] = std::exp(in[j] - mx);
            z += out[j];
        }
        for (int64_t j = 0; j < d; ++j) out[j] /= z;
    }

    // C[m,n] += A[m,k] * B[k,n]
    static void gemm_nn(const Real* a, const Real* b, Real* c, int64_t m, int64_t k, int64_t n) {
        for (int64_t i = 0; i < m; ++i) {
            Real* cr = c + i * n;
            for (int64_t p = 0; p < k; ++p) {
                const Real av = a[i * k + p];
                if (av == Real(0)) continue;
                const Real* br = b + p * n;
                for (int64_t j = 0; j < n; ++j) cr[j] += av * br[j];
            }
        }
    }

    // C[m,n] += A[m,k] * B[n,k]^T
    static void gemm_nt(const Real* a, const Real* b, Real* c, int64_t m, int64_t k, int64_t n) {
        for (int64_t i = 0; i < m; ++i) {
            const Real* ar = a + i * k;
            for (int64_t j = 0; j < n; ++j) {
                const Real* br = b + j * k;
                Real acc = 0;
                for (int64_t p = 0; p < k; ++p) acc += ar[p] * br[p];
                c[i * n + j] += acc;
            }
        }
    }

    // C[m,n] += A[k,m]^T * B[k,n]   (a is k-by-m)
    static void gemm_tn(const Real* a, const Real* b, Real* c, int64_t m, int64_t k, int64_t n) {
        for (int64_t p = 0; p < k; ++p) {
            const Real* ar = a + p * m;
            const Real* br = b + p * n;
            for (int64_t i = 0; i < m; ++i) {
                const Real av = ar[i];
                if (av == Real(0)) continue;
                Real* cr = c + i * n;
                for (int64_t j = 0; j < n; ++j) cr[j] += av * br[j];
            }
        }
    }
};

using Tensor = TensorT<float>;
using Tape = TapeT<float>;

}  // namespace literec
