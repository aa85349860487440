#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "contamlab/model.hpp"

namespace contamlab {

struct AdamWConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

struct OptimizerState {
    AdamWConfig config;
    std::vector<double> m;
    std::vector<double> v;
    std::uint64_t step = 0;

    static OptimizerState for_params(std::size_t n, AdamWConfig config = {});
};

/// Decoupled-weight-decay Adam with bias correction:
///   theta <- theta * (1 - lr * wd)
///   theta <- theta - lr * m_hat / (sqrt(v_hat) + eps)
/// Throws TrainingError (carrying the 1-based step) on a non-finite gradient,
/// leaving params and state untouched.
void adamw_step(std::span<double> params, std::span<const double> grads, OptimizerState& state,
                double lr);

// Same update on scorer parameters; also advances params.step_count().
void adamw_step(ScorerParams& params, std::span<const double> grads, OptimizerState& state,
                double lr);

/// Linear warm-up from 0 to base_lr over the first `warmup_fraction` of
/// total_steps, then linear decay to 0 at total_steps.
/// Requires 0 <= step <= total_steps and total_steps >= 10.
double lr_at(std::uint64_t step, std::uint64_t total_steps, double base_lr,
             double warmup_fraction = 0.1);

}  // namespace contamlab
