// SPDX-License-Identifier: Apache-2.0
#include "promptcl/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace promptcl {

double global_norm(std::span<const GradView> grads) {
    double sq = 0.0;
    for (const auto& g : grads) {
        for (std::size_t i = 0; i < g.n; ++i) sq += g.data[i] * g.data[i];
    }
    return std::sqrt(sq);
}

double clip_global_norm(std::span<const GradView> grads, double max_norm) {
    const double norm = global_norm(grads);
    if (norm > max_norm && norm > 0.0) {
        const double s = max_norm / norm;
        for (const auto& g : grads) {
            for (std::size_t i = 0; i < g.n; ++i) g.data[i] *= s;
        }
    }
    return norm;
}

Adam::Adam(std::size_t total_scalars, AdamConfig config) : cfg_(config) {
    m_ = Vec::Zero(static_cast<Eigen::Index>(total_scalars));
    v_ = Vec::Zero(static_cast<Eigen::Index>(total_scalars));
}

void Adam::step(std::span<const ParamBlock> blocks) {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    std::size_t off = 0;
    for (const auto& b : blocks) {
        for (std::size_t i = 0; i < b.n; ++i) {
            const Eigen::Index j = static_cast<Eigen::Index>(off + i);
            const double g = b.grad[i];
            m_[j] = cfg_.beta1 * m_[j] + (1.0 - cfg_.beta1) * g;
            v_[j] = cfg_.beta2 * v_[j] + (1.0 - cfg_.beta2) * g * g;
            const double mhat = m_[j] / bc1;
            const double vhat = v_[j] / bc2;
            b.param[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
        off += b.n;
    }
    if (off != static_cast<std::size_t>(m_.size())) {
        throw std::logic_error("Adam::step: block layout does not match optimizer state");
    }
}

}  // namespace promptcl
