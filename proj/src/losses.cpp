#include "contamlab/losses.hpp"

#include <algorithm>
#include <cmath>

#include "contamlab/error.hpp"

namespace contamlab {

namespace {

void require_group(GroupScores s, const char* op)
{
    if (s.size() < 2) {
        throw UsageError(std::string(op) + " requires a group of at least 2 scores");
    }
}

void require_aligned(GroupScores s, std::span<const double> t, const char* op)
{
    require_group(s, op);
    if (s.size() != t.size()) {
        throw UsageError(std::string(op) + ": student and teacher lengths differ (" +
                         std::to_string(s.size()) + " vs " + std::to_string(t.size()) + ")");
    }
}

// log softmax of x / tau
std::vector<double> log_softmax(std::span<const double> x, double tau)
{
    double hi = -INFINITY;
    for (double v : x) {
        hi = std::max(hi, v / tau);
    }
    double sum = 0.0;
    for (double v : x) {
        sum += std::exp(v / tau - hi);
    }
    const double lse = hi + std::log(sum);
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        out[i] = x[i] / tau - lse;
    }
    return out;
}

// log(1 + exp(x)) without overflow
double softplus(double x)
{
    return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

double sigmoid(double x)
{
    if (x >= 0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace

std::string_view to_string(LossKind kind)
{
    switch (kind) {
    case LossKind::lce:
        return "lce";
    case LossKind::margin_mse:
        return "margin_mse";
    case LossKind::kl_div:
        return "kl_div";
    case LossKind::ranknet:
        return "ranknet";
    }
    return "unknown";
}

LossKind parse_loss_kind(std::string_view s)
{
    if (s == "lce") {
        return LossKind::lce;
    }
    if (s == "margin_mse" || s == "marginmse" || s == "margin-mse") {
        return LossKind::margin_mse;
    }
    if (s == "kl_div" || s == "kl" || s == "kl-div") {
        return LossKind::kl_div;
    }
    if (s == "ranknet") {
        return LossKind::ranknet;
    }
    throw UsageError("unknown loss `" + std::string(s) + "` (lce, margin_mse, kl_div, ranknet)");
}

LossResult lce_loss(GroupScores student)
{
    require_group(student, "lce_loss");
    const auto logp = log_softmax(student, 1.0);
    LossResult r;
    r.loss = -logp[0];
    r.grad.resize(student.size());
    for (std::size_t i = 0; i < student.size(); ++i) {
        r.grad[i] = std::exp(logp[i]);
    }
    r.grad[0] -= 1.0;
    return r;
}

LossResult margin_mse_loss(GroupScores student, std::span<const double> teacher)
{
    require_aligned(student, teacher, "margin_mse_loss");
    const std::size_t n = student.size() - 1;
    LossResult r;
    r.grad.assign(student.size(), 0.0);
    double sum = 0.0;
    for (std::size_t j = 1; j <= n; ++j) {
        const double err = (student[0] - student[j]) - (teacher[0] - teacher[j]);
        sum += err * err;
        const double g = 2.0 * err / static_cast<double>(n);
        r.grad[0] += g;
        r.grad[j] -= g;
    }
    r.loss = sum / static_cast<double>(n);
    return r;
}

LossResult kl_div_loss(GroupScores student, std::span<const double> teacher, double temperature)
{
    require_aligned(student, teacher, "kl_div_loss");
    if (!(temperature > 0.0)) {
        throw ConfigError("kl_div_loss: temperature must be > 0");
    }
    const auto logp_s = log_softmax(student, temperature);
    const auto logp_t = log_softmax(teacher, temperature);
    LossResult r;
    r.grad.resize(student.size());
    double kl = 0.0;
    for (std::size_t i = 0; i < student.size(); ++i) {
        const double pt = std::exp(logp_t[i]);
        if (pt > 0.0) {
            kl += pt * (logp_t[i] - logp_s[i]);
        }
        r.grad[i] = (std::exp(logp_s[i]) - pt) / temperature;
    }
    r.loss = std::max(kl, 0.0);
    return r;
}

LossResult ranknet_loss(GroupScores student)
{
    require_group(student, "ranknet_loss");
    const std::size_t n = student.size();
    const double pairs = static_cast<double>(n * (n - 1) / 2);
    LossResult r;
    r.grad.assign(n, 0.0);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double margin = student[i] - student[j];
            sum += softplus(-margin);
            const double w = sigmoid(-margin) / pairs;
            r.grad[i] -= w;
            r.grad[j] += w;
        }
    }
    r.loss = sum / pairs;
    return r;
}

double finite_diff_check(const LossFn& loss_fn, std::span<const double> point, double epsilon)
{
    if (!(epsilon >= 1e-7 && epsilon <= 1e-3)) {
        throw UsageError("finite_diff_check: epsilon must be in [1e-7, 1e-3]");
    }
    const LossResult at = loss_fn(point);
    if (at.grad.size() != point.size()) {
        throw UsageError("finite_diff_check: gradient length differs from point length");
    }
    std::vector<double> x(point.begin(), point.end());
    double worst = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double orig = x[i];
        x[i] = orig + epsilon;
        const double up = loss_fn(x).loss;
        x[i] = orig - epsilon;
        const double down = loss_fn(x).loss;
        x[i] = orig;
        if (!std::isfinite(up) || !std::isfinite(down)) {
            throw ValidationError("finite_diff_check: non-finite loss at perturbed coordinate " +
                                  std::to_string(i));
        }
        const double numeric = (up - down) / (2.0 * epsilon);
        const double analytic = at.grad[i];
        const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
        worst = std::max(worst, std::abs(analytic - numeric) / denom);
    }
    return worst;
}

}  // namespace contamlab
