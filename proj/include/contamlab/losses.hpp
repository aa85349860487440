#pragma once

#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace contamlab {

// Scores of one training group. For LCE and marginMSE index 0 is the
// positive; for RankNet the entries are in teacher-preferred order.
using GroupScores = std::span<const double>;

struct TeacherLabels {
    std::vector<double> labels;  // aligned with the group's documents
    std::string teacher_tag;

    bool operator==(const TeacherLabels&) const = default;
};

struct LossResult {
    double loss = 0.0;
    std::vector<double> grad;  // d loss / d student score
};

enum class LossKind { lce, margin_mse, kl_div, ranknet };

std::string_view to_string(LossKind kind);
LossKind parse_loss_kind(std::string_view s);

// All softmax and log-sum-exp evaluations below are max-shifted.

/// -log softmax(s)[0]; gradient softmax(s) - onehot(0).
LossResult lce_loss(GroupScores student);

/// Mean over negatives j of ((s0 - sj) - (y0 - yj))^2.
LossResult margin_mse_loss(GroupScores student, std::span<const double> teacher);

/// KL(softmax(y / tau) || softmax(s / tau)); gradient (p_student - p_teacher) / tau.
LossResult kl_div_loss(GroupScores student, std::span<const double> teacher,
                       double temperature = 1.0);

/// Mean over pairs i < j of -log sigmoid(s_i - s_j).
LossResult ranknet_loss(GroupScores student);

using LossFn = std::function<LossResult(std::span<const double>)>;

/// Largest componentwise relative error between the analytic gradient and a
/// central difference with step `epsilon`, using
/// max(|analytic|, |numeric|, 1e-8) as denominator.
double finite_diff_check(const LossFn& loss_fn, std::span<const double> point, double epsilon = 1e-5);

}  // namespace contamlab
