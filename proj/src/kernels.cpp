#include "contamlab/kernels.hpp"

#include <cmath>

#include "contamlab/error.hpp"

namespace contamlab::kernels {

namespace {

struct AdamWCoefficients {
    double beta1, beta2, one_minus_beta1, one_minus_beta2;
    double bias1, bias2;  // 1 - beta^t
    double decay;         // 1 - lr * wd
    double lr, eps;
};

inline void adamw_one(double& p, double g, double& m, double& v, const AdamWCoefficients& c)
{
    m = c.beta1 * m + c.one_minus_beta1 * g;
    v = c.beta2 * v + c.one_minus_beta2 * g * g;
    const double m_hat = m / c.bias1;
    const double v_hat = v / c.bias2;
    p *= c.decay;
    p -= c.lr * m_hat / (std::sqrt(v_hat) + c.eps);
}

}  // namespace

void adamw_update(std::span<double> params, std::span<const double> grads, std::span<double> m,
                  std::span<double> v, const AdamWConfig& config, std::uint64_t t, double lr,
                  Exec exec)
{
    if (t == 0) {
        throw UsageError("adamw_update: step must be 1-based");
    }
    const AdamWCoefficients c{config.beta1,
                              config.beta2,
                              1.0 - config.beta1,
                              1.0 - config.beta2,
                              1.0 - std::pow(config.beta1, static_cast<double>(t)),
                              1.0 - std::pow(config.beta2, static_cast<double>(t)),
                              1.0 - lr * config.weight_decay,
                              lr,
                              config.eps};
    const auto n = static_cast<long long>(params.size());
    if (exec == Exec::parallel) {
#pragma omp parallel for schedule(static)
        for (long long i = 0; i < n; ++i) {
            const auto k = static_cast<std::size_t>(i);
            adamw_one(params[k], grads[k], m[k], v[k], c);
        }
    } else {
        for (std::size_t k = 0; k < params.size(); ++k) {
            adamw_one(params[k], grads[k], m[k], v[k], c);
        }
    }
}

std::vector<std::vector<RankedDoc>> retrieve_batch(const InvertedIndex& index,
                                                   std::span<const Tokens> queries, std::size_t k,
                                                   Exec exec)
{
    std::vector<std::vector<RankedDoc>> out(queries.size());
    if (exec == Exec::serial) {
        std::vector<double> acc;
        for (std::size_t i = 0; i < queries.size(); ++i) {
            out[i] = index.retrieve_topk(queries[i], k, acc);
        }
        return out;
    }
    for_each_index(queries.size(), exec, [&](std::size_t i) {
        thread_local std::vector<double> acc;
        out[i] = index.retrieve_topk(queries[i], k, acc);
    });
    return out;
}

std::vector<std::vector<double>> encode_batch(const ScorerParams& params,
                                              std::span<const FeatureVector* const> inputs,
                                              Exec exec)
{
    std::vector<std::vector<double>> out(inputs.size());
    for_each_index(inputs.size(), exec,
                   [&](std::size_t i) { out[i] = dual_encode(params, *inputs[i]); });
    return out;
}

std::vector<double> score_batch(const ScorerParams& params, std::span<const PairRef> pairs,
                                Exec exec)
{
    std::vector<double> out(pairs.size());
    for_each_index(pairs.size(), exec, [&](std::size_t i) {
        out[i] = score(params, *pairs[i].query, *pairs[i].doc);
    });
    return out;
}

std::vector<FeatureVector> featurize_batch(std::span<const Tokens* const> texts, std::size_t dim,
                                           Exec exec)
{
    std::vector<FeatureVector> out(texts.size());
    for_each_index(texts.size(), exec, [&](std::size_t i) { out[i] = featurize(*texts[i], dim); });
    return out;
}

}  // namespace contamlab::kernels
