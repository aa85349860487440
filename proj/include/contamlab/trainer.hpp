#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "contamlab/collection.hpp"
#include "contamlab/index.hpp"
#include "contamlab/losses.hpp"
#include "contamlab/model.hpp"
#include "contamlab/optim.hpp"
#include "contamlab/parallel.hpp"
#include "contamlab/ranking.hpp"

namespace contamlab {

struct TrainConfig {
    std::size_t batch_queries = 32;
    double base_lr = 1e-5;
    double warmup_fraction = 0.10;
    // 0 runs a single pass over the stream; otherwise at most this many steps.
    std::uint64_t total_steps = 0;
    std::size_t group_size = 2;
    LossKind loss_kind = LossKind::lce;
    std::uint64_t seed = 0;
    double temperature = 1.0;  // kl_div only
    std::size_t dim = kDefaultFeatureDim;
    std::size_t hidden = kDefaultHidden;
    AdamWConfig adamw;
    Exec exec = Exec::parallel;

    void validate() const;
};

struct TrainLogRow {
    std::uint64_t step = 0;
    double lr = 0.0;
    double loss = 0.0;  // mean group loss of the batch, before the update
};

struct TrainResult {
    ScorerParams params;
    std::vector<TrainLogRow> log;
};

void write_train_log(std::ostream& out, const std::vector<TrainLogRow>& log);

/// Documents of one distillation group with their teacher scores. For
/// margin_mse / kl_div docs[0] is the positive; RankNet groups are stored in
/// descending teacher-score order and flagged `teacher_ordered`.
struct TeacherGroup {
    Query query;
    std::vector<std::string> docs;
    TeacherLabels labels;
    bool teacher_ordered = false;

    bool operator==(const TeacherGroup&) const = default;
};

/// `qid<TAB>doc1,...,dk<TAB>y1,...,yk<TAB>teacher_tag<TAB>labeled|ranked`,
/// scores in shortest round-trip form. Query text is resolved through
/// `queries`; an unknown query id is a DataError.
void write_teacher_groups(std::ostream& out, const std::vector<TeacherGroup>& groups);
std::vector<TeacherGroup> parse_teacher_groups(
    std::istream& in, const std::unordered_map<std::string, Query>& queries);

// Number of optimizer steps a stream of n groups yields under `config`.
std::uint64_t planned_steps(std::size_t n_groups, const TrainConfig& config);

/// LCE training of a joint scorer over the stream in order, `batch_queries`
/// groups per step, batch loss = mean group loss. Initialization is drawn
/// from config.seed unless `init` is given. Throws TrainingError naming the
/// step and group on a non-finite loss.
TrainResult train_teacher(std::span<const TrainingGroup> stream, const TrainConfig& config,
                          const FeatureStore& store, const ScorerParams* init = nullptr);

// Teacher scores for [positive, negatives...] of every group.
std::vector<TeacherGroup> label_pairs(const ScorerParams& teacher,
                                      std::span<const TrainingGroup> groups,
                                      const FeatureStore& store, const std::string& teacher_tag,
                                      Exec exec = Exec::parallel);

struct RankNetSample {
    std::vector<TeacherGroup> groups;
    std::size_t skipped = 0;  // queries with fewer than group_size retrievable documents
};

/// For each query (repeats allowed, in order): re-rank its BM25 top-k with the
/// teacher, draw `group_size` distinct documents without replacement, and
/// store them in descending teacher-score order.
RankNetSample sample_ranknet_groups(const ScorerParams& teacher, const InvertedIndex& index,
                                    std::span<const Query> queries, std::size_t k,
                                    std::size_t group_size, std::uint64_t seed,
                                    const FeatureStore& store, const std::string& teacher_tag,
                                    Exec exec = Exec::parallel);

/// Distillation with margin_mse, kl_div or ranknet. The student starts from
/// config.seed, or from the teacher's parameters when `init_from_teacher`.
TrainResult distill(Architecture student_arch, const ScorerParams& teacher,
                    std::span<const TeacherGroup> stream, const TrainConfig& config,
                    const FeatureStore& store, bool init_from_teacher = false);

// Mean loss of `groups` under `params` without updating anything.
double mean_group_loss(const ScorerParams& params, std::span<const TrainingGroup> groups,
                       const FeatureStore& store);

}  // namespace contamlab
