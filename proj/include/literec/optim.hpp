// AdamW with decoupled weight decay and linear warmup into a constant rate.

#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "literec/tensor.hpp"

namespace literec {

template <typename Real>
struct NamedParamT {
    std::string name;
    TensorT<Real> tensor;
};

using NamedParam = NamedParamT<float>;

struct AdamWConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-6;
    double weight_decay = 0.01;
    double warmup_fraction = 0.1;
};

template <typename Real>
class AdamWT {
public:
    using Tensor = TensorT<Real>;

    explicit AdamWT(AdamWConfig cfg = {}) : cfg_(cfg) {}

    const AdamWConfig& config() const { return cfg_; }
    int64_t step_count() const { return step_; }

    double effective_lr(int64_t global_step, int64_t total_steps) const {
        const int64_t warmup = std::max<int64_t>(
            1, static_cast<int64_t>(std::llround(cfg_.warmup_fraction * static_cast<double>(total_steps))));
        if (global_step + 1 >= warmup) return cfg_.lr;
        return cfg_.lr * static_cast<double>(global_step + 1) / static_cast<double>(warmup);
    }

    // One update over the given parameter set. Every parameter must carry a
    // gradient; moment slots are keyed by position in `params`.
    void step(std::vector<NamedParamT<Real>>& params, int64_t global_step, int64_t total_steps) {
        if (m_.empty()) {
            m_.resize(params.size());
            v_.resize(params.size());
            for (size_t i = 0; i < params.size(); ++i) {
                m_[i].assign(static_cast<size_t>(params[i].tensor.size()), Real(0));
                v_[i].assign(static_cast<size_t>(params[i].tensor.size()), Real(0));
            }
        }
        if (m_.size() != params.size())
            throw std::logic_error("adamw: parameter set changed size after first step");
        ++step_;
        const double lr_t = effective_lr(global_step, total_steps);
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
        for (size_t i = 0; i < params.size(); ++i) {
            auto& p = params[i].tensor;
            if (!p.has_grad())
                throw std::logic_error("adamw: parameter '" + params[i].name + "' has no gradient");
            if (m_[i].size() != p.vec().size())
                throw std::logic_error("adamw: moment shape mismatch for '" + params[i].name + "'");
            const auto& g = p.grad_c();
            auto& val = p.vec();
            auto& m = m_[i];
            auto& v = v_[i];
            for (size_t j = 0; j < val.size(); ++j) {
                m[j] = Real(cfg_.beta1) * m[j] + Real(1.0 - cfg_.beta1) * g[j];
                v[j] = Real(cfg_.beta2) * v[j] + Real(1.0 - cfg_.beta2) * g[j] * g[j];
                const double mhat = static_cast<double>(m[j]) / bc1;
                const double vhat = static_cast<double>(v[j]) / bc2;
                const double moment_step = lr_t * mhat / (std::sqrt(vhat) + cfg_.eps);
                const double decay_step = lr_t * cfg_.weight_decay * static_cast<double>(val[j]);
                val[j] = static_cast<Real>(static_cast<double>(val[j]) - moment_step - decay_step);
            }
        }
    }

    // serialized state access (checkpointing)
    const std::vector<std::vector<Real>>& first_moments() const { return m_; }
    const std::vector<std::vector<Real>>& second_moments() const { return v_; }
    void restore(std::vector<std::vector<Real>> m, std::vector<std::vector<Real>> v, int64_t step) {
        m_ = std::move(m);
        v_ = std::move(v);
        step_ = step;
    }

private:
    AdamWConfig cfg_;
    int64_t step_ = 0;
    std::vector<std::vector<Real>> m_;
    std::vector<std::vector<Real>> v_;
};

using AdamW = AdamWT<float>;

}  // namespace literec
