// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "promptcl/types.hpp"

namespace promptcl {

// One contiguous parameter tensor paired with its gradient.
struct ParamBlock {
    double* param = nullptr;
    const double* grad = nullptr;
    std::size_t n = 0;
};

struct GradView {
    double* data = nullptr;
    std::size_t n = 0;
};

double global_norm(std::span<const GradView> grads);

// Scales gradients in place so their global norm is at most max_norm.
// Returns the pre-clip norm.
double clip_global_norm(std::span<const GradView> grads, double max_norm);

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;   // 0 gives pure second-moment (RMS) scaling
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Adam with bias correction over a fixed flat parameter layout. The caller
// presents the same block order every step.
class Adam {
public:
    Adam(std::size_t total_scalars, AdamConfig config);

    void step(std::span<const ParamBlock> blocks);
    long step_count() const { return t_; }
    const AdamConfig& config() const { return cfg_; }
    void set_lr(double lr) { cfg_.lr = lr; }

private:
    AdamConfig cfg_;
    Vec m_, v_;
    long t_ = 0;
};

}  // namespace promptcl
