#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "contamlab/error.hpp"
#include "contamlab/experiment.hpp"

using namespace contamlab;
namespace fs = std::filesystem;

namespace {

ExperimentConfig tiny_config(const std::string& out)
{
    auto c = default_experiment_config();
    auto& s = *c.data.synthetic;
    s.n_topics = 4;
    s.docs_per_topic = 60;
    s.queries_per_topic = 2;
    s.train_queries_per_topic = 8;
    s.vocab_per_topic = 16;
    s.background_vocab = 200;
    s.focused_per_query = 3;
    s.base_groups = 640;
    s.seed = 4;
    c.teacher.dim = 256;
    c.teacher.hidden = 8;
    for (auto& [arch, t] : c.students.train) {
        t.dim = 256;
        t.hidden = 8;
    }
    c.ranknet.k = 20;
    c.ranknet.group_size = 4;
    c.output_dir = out;
    c.master_seed = 11;
    return c;
}

fs::path scratch(const std::string& name)
{
    auto p = fs::path(::testing::TempDir()) / ("contamlab_" + name);
    fs::remove_all(p);
    return p;
}

std::vector<std::string> lines_of(const fs::path& p)
{
    std::ifstream in(p);
    std::vector<std::string> out;
    for (std::string line; std::getline(in, line);) {
        out.push_back(line);
    }
    return out;
}

// Every output file except config.json, which records the output directory.
std::map<std::string, std::string> tree_bytes(const fs::path& root)
{
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (e.is_regular_file() && e.path().filename() != "config.json") {
            std::ifstream in(e.path(), std::ios::binary);
            std::ostringstream s;
            s << in.rdbuf();
            out[fs::relative(e.path(), root).string()] = s.str();
        }
    }
    return out;
}

std::vector<std::string> differing(const std::map<std::string, std::string>& a,
                                   const std::map<std::string, std::string>& b)
{
    std::vector<std::string> out;
    for (const auto& [path, bytes] : a) {
        auto it = b.find(path);
        if (it == b.end() || it->second != bytes) {
            out.push_back(path);
        }
    }
    for (const auto& [path, _] : b) {
        if (!a.count(path)) {
            out.push_back(path);
        }
    }
    return out;
}

Evaluation constant_eval(double base, std::size_t n)
{
    Evaluation e;
    for (auto* m : {&e.ndcg, &e.map, &e.recall}) {
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double v = base + 0.01 * static_cast<double>(i % 5);
            m->per_query["q" + std::to_string(i)] = v;
            sum += v;
        }
        m->aggregate = sum / static_cast<double>(n);
    }
    e.ndcg.metric = "nDCG@10";
    e.map.metric = "MAP";
    e.recall.metric = "R@100";
    return e;
}

}  // namespace

TEST(Config, JsonRoundTrip)
{
    auto c = default_experiment_config();
    const auto text = experiment_config_json(c);
    EXPECT_EQ(experiment_config_json(parse_experiment_config(text)), text);
}

TEST(Config, UnknownKeyRejected)
{
    EXPECT_THROW(parse_experiment_config(R"({"teacher": {"learning_rate": 1}})"), ConfigError);
    EXPECT_THROW(parse_experiment_config(R"({"bogus": 1})"), ConfigError);
    EXPECT_THROW(parse_experiment_config("{not json"), ConfigError);
}

TEST(Config, PartialFileKeepsDefaults)
{
    auto c = parse_experiment_config(R"({"master_seed": 9, "teacher": {"base_lr": 0.5}})");
    EXPECT_EQ(c.master_seed, 9u);
    EXPECT_EQ(c.teacher.base_lr, 0.5);
    EXPECT_EQ(c.teacher.batch_queries, default_experiment_config().teacher.batch_queries);
}

TEST(Config, Overrides)
{
    auto c = apply_overrides(default_experiment_config(),
                             {"contamination.0.max_fraction=0.01", "students.losses=[\"kl_div\"]",
                              "output_dir=somewhere", "data.synthetic.seed=5"});
    EXPECT_EQ(c.contamination[0].max_fraction, 0.01);
    EXPECT_EQ(c.students.losses, std::vector<LossKind>{LossKind::kl_div});
    EXPECT_EQ(c.output_dir, "somewhere");
    EXPECT_EQ(c.data.synthetic->seed, 5u);
    EXPECT_THROW(apply_overrides(c, {"no_equals_sign"}), ConfigError);
    EXPECT_THROW(apply_overrides(c, {"teacher.nope=1"}), ConfigError);
}

TEST(Config, ValidationCatchesBadValues)
{
    auto c = default_experiment_config();
    c.alpha = 1.5;
    EXPECT_THROW(c.validate(), ConfigError);
    c = default_experiment_config();
    c.contamination[0].source_collection = "missing";
    EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Config, TrainConfigRoundTrip)
{
    TrainConfig t;
    t.base_lr = 0.125;
    t.loss_kind = LossKind::ranknet;
    t.exec = Exec::serial;
    auto back = parse_train_config(train_config_json(t));
    EXPECT_EQ(train_config_json(back), train_config_json(t));
}

TEST(Reports, EvalCsvRoundTrip)
{
    std::stringstream io;
    write_eval_header(io);
    write_eval_rows(io, {"target", "joint", "kl_div", "none"}, constant_eval(0.5, 6));
    auto rows = parse_eval_csv(io);
    EXPECT_EQ(rows.size(), 3u * 7u);
    EXPECT_EQ(rows.back().query_id, "all");
    std::istringstream bad("collection,model\n");
    EXPECT_THROW(parse_eval_csv(bad), ParseError);
}

TEST(Reports, IdenticalInputsHaveNoMarkers)
{
    std::stringstream io;
    write_eval_header(io);
    write_eval_rows(io, {"target", "teacher", "lce", "none"}, constant_eval(0.5, 8));
    write_eval_rows(io, {"target", "teacher", "lce", "target"}, constant_eval(0.5, 8));
    auto report = build_report(parse_eval_csv(io));
    ASSERT_EQ(report.size(), 2u);
    for (const auto& r : report) {
        EXPECT_EQ(r.sig_marker, "---");
    }
}

TEST(Reports, ShiftedRowIsMarked)
{
    std::stringstream io;
    write_eval_header(io);
    write_eval_rows(io, {"target", "teacher", "lce", "none"}, constant_eval(0.5, 8));
    auto shifted = constant_eval(0.5, 8);
    for (auto& [q, v] : shifted.ndcg.per_query) {
        v += q == "q0" ? 0.2 : 0.1;
    }
    write_eval_rows(io, {"target", "teacher", "lce", "target"}, shifted);
    auto report = build_report(parse_eval_csv(io));
    EXPECT_EQ(report[1].sig_marker, std::string(kSigMark) + "--");
    std::ostringstream out;
    write_report(out, report);
    EXPECT_EQ(out.str().substr(0, out.str().find('\n')),
              "collection,model,loss,contaminated,nDCG@10,MAP,R@100,sig_marker");
}

TEST(Experiment, TeachersOnlyWhenNoLosses)
{
    auto dir = scratch("teachers_only");
    auto c = tiny_config(dir.string());
    c.students.losses.clear();
    auto summary = run_experiment(c);
    ASSERT_TRUE(summary.ok()) << summary.failures.front();
    auto report = lines_of(dir / "report_target.csv");
    ASSERT_EQ(report.size(), 3u);
    EXPECT_EQ(report[1].rfind("target,teacher,lce,none,", 0), 0u);
    EXPECT_EQ(report[2].rfind("target,teacher,lce,target,", 0), 0u);
}

TEST(Experiment, FullMatrixIsReproducibleAndCached)
{
    auto a = scratch("matrix_a");
    auto b = scratch("matrix_b");
    auto sa = run_experiment(tiny_config(a.string()));
    ASSERT_TRUE(sa.ok()) << sa.failures.front();
    EXPECT_EQ(sa.cells_trained, 2u + 2u * 2u * 3u);
    auto report = lines_of(a / "report_target.csv");
    EXPECT_EQ(report.size(), 1u + 2u + 12u);
    EXPECT_EQ(lines_of(a / "table2.csv").size(), 1u + 2u * 2u);

    auto sb = run_experiment(tiny_config(b.string()));
    ASSERT_TRUE(sb.ok());
    EXPECT_EQ(differing(tree_bytes(a), tree_bytes(b)), std::vector<std::string>{});

    const auto before = tree_bytes(a);
    auto again = run_experiment(tiny_config(a.string()));
    EXPECT_EQ(again.cells_trained, 0u);
    EXPECT_EQ(again.cells_cached, sa.cells_trained);
    EXPECT_EQ(differing(tree_bytes(a), before), std::vector<std::string>{});
}

TEST(Experiment, ChangedSettingRetrainsOnlyAffectedCells)
{
    auto dir = scratch("partial");
    auto c = tiny_config(dir.string());
    c.students.architectures = {Architecture::joint};
    c.students.losses = {LossKind::margin_mse};
    ASSERT_TRUE(run_experiment(c).ok());
    c.students.train[Architecture::joint].base_lr *= 2.0;
    auto s = run_experiment(c);
    EXPECT_EQ(s.cells_cached, 2u);
    EXPECT_EQ(s.cells_trained, 2u);
}
