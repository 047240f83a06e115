// Bias-free linear head from a user representation to per-item ranking
// scores, plus deterministic top-k selection with seen-item exclusion.

#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "literec/nn.hpp"

namespace literec {

template <typename Real>
class ProjectionHeadT {
public:
    ProjectionHeadT() = default;
    ProjectionHeadT(int64_t catalog, int64_t dim, std::mt19937& rng)
        : w_(init_normal<Real>({catalog, dim}, rng)) {}

    int64_t catalog() const { return w_.dim(0); }
    int64_t dim() const { return w_.dim(1); }
    TensorT<Real>& weight() { return w_; }
    const TensorT<Real>& weight() const { return w_; }

    // h[B,d] -> logits[B,catalog]; no bias term exists
    TensorT<Real> score(TapeT<Real>& tape, const TensorT<Real>& h) const {
        if (h.dim(h.ndim() - 1) != dim())
            throw std::invalid_argument("projection head: representation dim " + shape_str(h.shape()) +
                                        " does not match head dim " + std::to_string(dim()));
        return tape.matmul_nt(h, w_);
    }

    // single user convenience: h_u[d] -> logits[catalog]
    std::vector<Real> score_items(const std::vector<Real>& h_u) const {
        if (static_cast<int64_t>(h_u.size()) != dim())
            throw std::invalid_argument("projection head: expected dim " + std::to_string(dim()) + ", got " +
                                        std::to_string(h_u.size()));
        std::vector<Real> logits(static_cast<size_t>(catalog()), Real(0));
        for (int64_t i = 0; i < catalog(); ++i) {
            const Real* row = w_.data() + i * dim();
            Real acc = 0;
            for (int64_t j = 0; j < dim(); ++j) acc += row[j] * h_u[static_cast<size_t>(j)];
            logits[static_cast<size_t>(i)] = acc;
        }
        return logits;
    }

    void collect(std::vector<NamedParamT<Real>>& out, const std::string& prefix) const {
        out.push_back({prefix + ".w", w_});
    }

private:
    TensorT<Real> w_;
};

// The k highest-scoring items not in `exclude`, descending score, ties broken
// by ascending item index. Partial selection, not a full sort.
template <typename Real>
std::vector<int64_t> top_k_recommend(std::span<const Real> logits, const std::unordered_set<int64_t>& exclude,
                                     int64_t k) {
    const int64_t n = static_cast<int64_t>(logits.size());
    std::vector<int64_t> candidates;
    candidates.reserve(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i)
        if (!exclude.count(i)) candidates.push_back(i);
    if (k < 0 || k > static_cast<int64_t>(candidates.size()))
        throw std::invalid_argument("top_k_recommend: k=" + std::to_string(k) + " exceeds " +
                                    std::to_string(candidates.size()) + " available items");
    auto better = [&](int64_t a, int64_t b) {
        if (logits[static_cast<size_t>(a)] != logits[static_cast<size_t>(b)])
            return logits[static_cast<size_t>(a)] > logits[static_cast<size_t>(b)];
        return a < b;
    };
    if (k < static_cast<int64_t>(candidates.size()))
        std::nth_element(candidates.begin(), candidates.begin() + k, candidates.end(), better);
    candidates.resize(static_cast<size_t>(k));
    std::sort(candidates.begin(), candidates.end(), better);
    return candidates;
}

using ProjectionHead = ProjectionHeadT<float>;

}  // namespace literec
