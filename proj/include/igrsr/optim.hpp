#pragma once

#include <cmath>
#include <vector>

#include "igrsr/tensor.hpp"

namespace igrsr {

// Adaptive moment estimation over leaf tensors. Updates happen between
// graphs, so mutating parameter data in place is safe; tensors whose gradient
// buffer is empty (nothing flowed into them this step) are skipped.
class Adam {
public:
    Adam(std::vector<Tensor> params, double lr, double beta1 = 0.9, double beta2 = 0.999,
         double eps = 1e-8)
        : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
        m_.resize(params_.size());
        v_.resize(params_.size());
        for (std::size_t i = 0; i < params_.size(); ++i) {
            m_[i].assign(params_[i].numel(), 0.0);
            v_[i].assign(params_[i].numel(), 0.0);
        }
    }

    void step() {
        ++t_;
        const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        for (std::size_t p = 0; p < params_.size(); ++p) {
            Tensor& param = params_[p];
            if (!param.has_grad()) continue;
            const std::vector<double>& g = param.grad();
            double* data = param.data();
            for (std::size_t i = 0; i < g.size(); ++i) {
                m_[p][i] = beta1_ * m_[p][i] + (1.0 - beta1_) * g[i];
                v_[p][i] = beta2_ * v_[p][i] + (1.0 - beta2_) * g[i] * g[i];
                const double mhat = m_[p][i] / bc1;
                const double vhat = v_[p][i] / bc2;
                data[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
            }
        }
    }

    void zero_grad() {
        for (auto& p : params_) p.zero_grad();
    }

    const std::vector<Tensor>& params() const { return params_; }

private:
    std::vector<Tensor> params_;
    double lr_, beta1_, beta2_, eps_;
    std::size_t t_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

}  // namespace igrsr
