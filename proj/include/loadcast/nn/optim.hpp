#pragma once

#include "loadcast/nn/models.hpp"

#include <cmath>
#include <vector>

namespace loadcast::nn {

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// Bias-corrected adaptive moment estimation over every tensor of a model.
class Adam {
public:
    explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

    /// Applies one update from the gradients currently stored in `p`.
    void step(ModelParameters& p) {
        if (m_.empty()) {
            for (const auto& t : p.tensors) {
                m_.push_back(Matrix::Zero(t.tensor.rows(), t.tensor.cols()));
                v_.push_back(Matrix::Zero(t.tensor.rows(), t.tensor.cols()));
            }
        }
        if (m_.size() != p.tensors.size()) throw ShapeError("optimizer state does not match model");
        ++t_;
        const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        for (std::size_t k = 0; k < p.tensors.size(); ++k) {
            Tensor& t = p.tensors[k].tensor;
            if (t.grad.rows() != m_[k].rows() || t.grad.cols() != m_[k].cols()) {
                throw ShapeError("gradient shape changed for '" + p.tensors[k].name + "'");
            }
            m_[k] = cfg_.beta1 * m_[k] + (1.0 - cfg_.beta1) * t.grad;
            v_[k] = cfg_.beta2 * v_[k] + (1.0 - cfg_.beta2) * t.grad.cwiseProduct(t.grad);
            t.value.array() -= cfg_.learning_rate * (m_[k].array() / c1) /
                               ((v_[k].array() / c2).sqrt() + cfg_.epsilon);
        }
    }

    long steps() const { return t_; }
    const AdamConfig& config() const { return cfg_; }

private:
    AdamConfig cfg_;
    std::vector<Matrix> m_;
    std::vector<Matrix> v_;
    long t_ = 0;
};

/// Rescales all gradients so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
inline double clip_global_norm(ModelParameters& p, double max_norm) {
    double sq = 0.0;
    for (const auto& t : p.tensors) sq += t.tensor.grad.squaredNorm();
    const double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0.0) {
        const double scale = max_norm / norm;
        for (auto& t : p.tensors) t.tensor.grad *= scale;
    }
    return norm;
}

} // namespace loadcast::nn
