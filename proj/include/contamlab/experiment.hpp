#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "contamlab/contaminate.hpp"
#include "contamlab/metrics.hpp"
#include "contamlab/model.hpp"
#include "contamlab/parallel.hpp"
#include "contamlab/synthetic.hpp"
#include "contamlab/trainer.hpp"

namespace contamlab {

// ------------------------------------------------------------------ config

struct CollectionFiles {
    std::string name;
    std::string queries;  // id<TAB>text
    std::string qrels;    // qid iter docid grade
    int grade_max = 3;
};

/// Either synthetic-generator parameters or file paths. Relative paths are
/// resolved against the directory of the config file.
struct DatasetSpec {
    std::optional<SyntheticConfig> synthetic;
    std::string corpus;
    std::string train_queries;
    std::string base_groups;
    std::vector<CollectionFiles> collections;
};

struct StudentSettings {
    std::vector<Architecture> architectures{Architecture::joint, Architecture::dual};
    std::vector<LossKind> losses{LossKind::margin_mse, LossKind::kl_div, LossKind::ranknet};
    // loss_kind and seed are set per cell.
    std::map<Architecture, TrainConfig> train;

    [[nodiscard]] const TrainConfig& train_for(Architecture arch) const;
};

struct RankNetSettings {
    std::size_t k = 100;
    std::size_t group_size = 8;
    // RankNet steps as a share of the pointwise student steps.
    double steps_fraction = 0.5;
};

struct ExperimentConfig {
    DatasetSpec data;
    double k1 = 1.2;
    double b = 0.75;
    std::size_t rerank_depth = 100;
    // `seed` of each entry is derived from the master seed.
    std::vector<ContaminationSpec> contamination;
    TrainConfig teacher;
    StudentSettings students;
    RankNetSettings ranknet;
    EvaluationSettings metrics;
    double alpha = 0.05;
    std::string output_dir = "contamlab-out";
    std::uint64_t master_seed = 0;
    Exec exec = Exec::serial;
    int threads = 0;  // 0 keeps the OpenMP default

    // Throws ConfigError on inconsistent settings.
    void validate() const;
};

/// The desk-scale synthetic setup used when no config file is given.
ExperimentConfig default_experiment_config();

/// Parses the JSON config format; missing keys keep their defaults.
/// `base_dir` anchors relative dataset paths.
ExperimentConfig parse_experiment_config(std::string_view json_text,
                                         const std::string& base_dir = "");
ExperimentConfig load_experiment_config(const std::string& path);

/// Applies `a.b.c=value` overrides to the config's JSON form. The value is
/// read as JSON when it parses, otherwise as a string.
ExperimentConfig apply_overrides(const ExperimentConfig& config,
                                 const std::vector<std::string>& assignments);

// Normalized JSON with every field spelled out.
std::string experiment_config_json(const ExperimentConfig& config);

TrainConfig parse_train_config(std::string_view json_text);
std::string train_config_json(const TrainConfig& config);

/// output_dir, placed under $CONTAMLAB_OUT when that is set and output_dir is
/// relative.
std::string resolve_output_dir(const std::string& output_dir);

// ------------------------------------------------------------------ reports

/// Identity of one evaluated model in the report grid.
struct ModelKey {
    std::string collection;
    std::string model;         // teacher, joint, dual
    std::string loss;          // lce, margin_mse, kl_div, ranknet
    std::string contaminated;  // none or the contamination source

    auto operator<=>(const ModelKey&) const = default;
};

/// One line of an evaluation CSV
/// `collection,model,loss,contaminated,metric,query_id,value`; aggregate rows
/// carry query_id "all".
struct EvalRow {
    ModelKey key;
    std::string metric;
    std::string query_id;
    double value = 0.0;
};

void write_eval_header(std::ostream& out);
void write_eval_rows(std::ostream& out, const ModelKey& key, const Evaluation& evaluation);
std::vector<EvalRow> parse_eval_csv(std::istream& in);

struct ReportRow {
    ModelKey key;
    double ndcg = 0.0;
    double map = 0.0;
    double recall = 0.0;
    // One character per metric (nDCG@10, MAP, R@100): the dagger when the
    // paired t-test against the baseline gives p < alpha, '-' otherwise.
    std::string sig_marker;
};

inline constexpr std::string_view kSigMark = "†";

struct ReportBaseline {
    std::string model = "teacher";
    std::string contaminated = "none";
};

/// Joins evaluation rows into one report row per model key, in order of first
/// appearance. Each row is tested against the baseline model on the same
/// collection; rows without a baseline get no markers. Metrics missing for a
/// key are an EvaluationError.
std::vector<ReportRow> build_report(const std::vector<EvalRow>& rows, double alpha = 0.05,
                                    const ReportBaseline& baseline = {});

// `collection,model,loss,contaminated,nDCG@10,MAP,R@100,sig_marker`
void write_report(std::ostream& out, const std::vector<ReportRow>& rows);

/// nDCG@10 of `loss` students per contamination source (rows, "None" first)
/// and collection (columns), with a marker per cell tested against the "None"
/// row of the same student architecture.
void write_source_table(std::ostream& out, const std::vector<EvalRow>& rows,
                        const std::vector<std::string>& sources,
                        const std::vector<std::string>& collections,
                        const std::vector<Architecture>& architectures, LossKind loss,
                        double alpha = 0.05);

// ------------------------------------------------------------------ runner

struct ExperimentSummary {
    std::string output_dir;
    std::vector<std::string> reports;  // per-source report files
    std::size_t cells_trained = 0;
    std::size_t cells_cached = 0;
    std::vector<std::string> failures;  // "cell: message"

    [[nodiscard]] bool ok() const noexcept { return failures.empty(); }
};

/// Builds the data, trains the clean and contaminated teachers and every
/// student cell, evaluates all models on every test collection and writes
/// reports under resolve_output_dir(config.output_dir). Cells whose inputs,
/// settings and seed match a finished checkpoint are loaded instead of
/// retrained. A failing cell is recorded and the remaining cells continue.
ExperimentSummary run_experiment(const ExperimentConfig& config, std::ostream* log = nullptr);

}  // namespace contamlab
