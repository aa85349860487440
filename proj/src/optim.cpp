#include "contamlab/optim.hpp"

#include <cmath>

#include "contamlab/error.hpp"
#include "contamlab/kernels.hpp"

namespace contamlab {

OptimizerState OptimizerState::for_params(std::size_t n, AdamWConfig config)
{
    OptimizerState s;
    s.config = config;
    s.m.assign(n, 0.0);
    s.v.assign(n, 0.0);
    return s;
}

void adamw_step(std::span<double> params, std::span<const double> grads, OptimizerState& state,
                double lr)
{
    if (params.size() != grads.size() || state.m.size() != params.size() ||
        state.v.size() != params.size()) {
        throw UsageError("adamw_step: parameter, gradient and moment sizes differ");
    }
    if (!(lr >= 0.0)) {
        throw UsageError("adamw_step: learning rate must be >= 0");
    }
    const std::uint64_t t = state.step + 1;
    for (std::size_t i = 0; i < grads.size(); ++i) {
        if (!std::isfinite(grads[i])) {
            throw TrainingError(t, "non-finite gradient at parameter " + std::to_string(i));
        }
    }
    kernels::adamw_update(params, grads, state.m, state.v, state.config, t, lr);
    state.step = t;
}

void adamw_step(ScorerParams& params, std::span<const double> grads, OptimizerState& state,
                double lr)
{
    adamw_step(params.values(), grads, state, lr);
    params.set_step_count(params.step_count() + 1);
}

double lr_at(std::uint64_t step, std::uint64_t total_steps, double base_lr, double warmup_fraction)
{
    if (total_steps < 10) {
        throw UsageError("lr_at: total_steps must be >= 10");
    }
    if (step > total_steps) {
        throw UsageError("lr_at: step " + std::to_string(step) + " beyond total_steps " +
                         std::to_string(total_steps));
    }
    if (!(warmup_fraction > 0.0 && warmup_fraction < 1.0)) {
        throw UsageError("lr_at: warmup_fraction must be in (0, 1)");
    }
    const double s = static_cast<double>(step);
    const double total = static_cast<double>(total_steps);
    const double warmup = warmup_fraction * total;
    if (s <= warmup) {
        return base_lr * s / warmup;
    }
    return base_lr * (total - s) / (total - warmup);
}

}  // namespace contamlab
