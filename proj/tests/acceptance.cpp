// Acceptance checks 1-9. Prints one PASS/FAIL line per criterion and exits
// non-zero when any criterion fails. Experiment outputs go under
// $CONTAMLAB_OUT when set, else under the system temp directory.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "contamlab/contaminate.hpp"
#include "contamlab/error.hpp"
#include "contamlab/experiment.hpp"
#include "contamlab/index.hpp"
#include "contamlab/losses.hpp"
#include "contamlab/metrics.hpp"
#include "contamlab/rng.hpp"
#include "contamlab/synthetic.hpp"
#include "contamlab/trainer.hpp"
#include "oracles.hpp"

using namespace contamlab;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

// Tolerances and budgets.
constexpr double kFdTolerance = 1e-4;
constexpr int kFdPointsPerSize = 100;
constexpr double kFdBudgetSeconds = 10.0;
constexpr double kMetricTolerance = 1e-9;
constexpr int kMetricRuns = 200;
constexpr double kMetricBudgetSeconds = 30.0;
constexpr double kBm25Tolerance = 1e-9;
constexpr double kTeacherMargin = 0.05;
constexpr std::size_t kMinTargetQueries = 40;
constexpr double kTeacherBudgetSeconds = 5 * 60.0;
constexpr double kStudentMargin = 0.03;
constexpr int kSignificantLossesPerArch = 2;
constexpr double kMatrixBudgetSeconds = 20 * 60.0;
constexpr double kSmallFraction = 0.001;
constexpr double kSmallFractionMargin = 0.02;
constexpr double kAlpha = 0.05;
constexpr double kTTestTolerance = 1e-6;
constexpr int kTTestVectors = 20;

const std::string kSource = "target";

double seconds_since(Clock::time_point t0)
{
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* pattern, double a)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, pattern, a);
    return buf;
}

int failures = 0;

void report(int id, bool pass, const std::string& detail)
{
    std::cout << "criterion " << id << ": " << (pass ? "PASS" : "FAIL") << "  " << detail << std::endl;
    failures += pass ? 0 : 1;
}

// Runs a check, turning an escaped exception into a failure line.
void guarded(int id, const std::function<void()>& check)
{
    try {
        check();
    } catch (const std::exception& e) {
        report(id, false, std::string("exception: ") + e.what());
    }
}

fs::path output_root()
{
    const char* env = std::getenv("CONTAMLAB_OUT");
    fs::path root = env != nullptr && *env != '\0' ? fs::path(env) : fs::temp_directory_path();
    return root / "contamlab-acceptance";
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
            out[fs::relative(e.path(), root).generic_string()] = s.str();
        }
    }
    return out;
}

std::vector<EvalRow> read_eval(const fs::path& dir)
{
    std::ifstream in(dir / "eval.csv");
    if (!in) {
        throw DataError("missing " + (dir / "eval.csv").string());
    }
    return parse_eval_csv(in);
}

MetricResult ndcg_of(const std::vector<EvalRow>& rows, const ModelKey& key)
{
    MetricResult m;
    m.metric = "nDCG@10";
    for (const auto& r : rows) {
        if (r.key == key && r.metric == m.metric) {
            if (r.query_id == "all") {
                m.aggregate = r.value;
            } else {
                m.per_query[r.query_id] = r.value;
            }
        }
    }
    if (m.per_query.empty()) {
        throw DataError("no nDCG@10 rows for " + key.model + "/" + key.loss + "/" + key.contaminated);
    }
    return m;
}

struct Comparison {
    double diff = 0.0;
    double p = 1.0;
    std::size_t n = 0;
};

Comparison compare(const std::vector<EvalRow>& rows, const std::string& model, const std::string& loss)
{
    auto clean = ndcg_of(rows, {kSource, model, loss, "none"});
    auto dirty = ndcg_of(rows, {kSource, model, loss, kSource});
    return {dirty.aggregate - clean.aggregate, paired_ttest(dirty, clean, kAlpha).p, clean.per_query.size()};
}

ExperimentConfig config_at(const fs::path& dir)
{
    auto c = default_experiment_config();
    c.output_dir = dir.string();
    return c;
}

ExperimentSummary run_fresh(const ExperimentConfig& c)
{
    fs::remove_all(c.output_dir);
    return run_experiment(c);
}

// ------------------------------------------------------------------ checks

void check_gradients()
{
    const auto t0 = Clock::now();
    Rng rng(derive_seed(1, "acceptance/fd"));
    double worst = 0.0;
    int points = 0;
    for (std::size_t n : {2u, 8u}) {
        for (int i = 0; i < kFdPointsPerSize; ++i) {
            std::vector<double> s(n), y(n);
            for (std::size_t j = 0; j < n; ++j) {
                s[j] = rng.uniform(-4.0, 4.0);
                y[j] = rng.uniform(-4.0, 4.0);
            }
            const double tau = rng.uniform(0.5, 2.0);
            worst = std::max({worst, finite_diff_check([](std::span<const double> x) { return lce_loss(x); }, s),
                              finite_diff_check([&](std::span<const double> x) { return margin_mse_loss(x, y); }, s),
                              finite_diff_check([&](std::span<const double> x) { return kl_div_loss(x, y, tau); }, s),
                              finite_diff_check([](std::span<const double> x) { return ranknet_loss(x); }, s)});
            ++points;
        }
    }
    const double secs = seconds_since(t0);
    report(1, worst < kFdTolerance && secs < kFdBudgetSeconds,
           "max rel error " + fmt("%.3g", worst) + " over " + std::to_string(points) +
               " points x 4 losses, " + fmt("%.2fs", secs));
}

void check_metrics()
{
    const auto t0 = Clock::now();
    auto data = generate_synthetic_collection(10, 60, 5, 20, 17);
    std::vector<std::string> ids;
    for (const auto& d : data.corpus.documents()) {
        ids.push_back(d.id);
    }
    double worst = 0.0;
    for (int r = 0; r < kMetricRuns; ++r) {
        auto run = oracle::random_run(data.target, ids, derive_seed(2, std::to_string(r)));
        auto e = evaluate_run(run, data.target);
        double sums[3] = {0, 0, 0};
        std::size_t n = 0;
        for (const auto& q : data.target.queries()) {
            const auto& judged = data.target.judged(q.id);
            if (judged.empty()) {
                continue;
            }
            auto ranked = oracle::ranked_ids(run, q.id);
            const double ref[3] = {oracle::ndcg(ranked, judged, 10), oracle::average_precision(ranked, judged, 2),
                                   oracle::recall(ranked, judged, 100, 2)};
            const double got[3] = {e.ndcg.per_query.at(q.id), e.map.per_query.at(q.id),
                                   e.recall.per_query.at(q.id)};
            for (int m = 0; m < 3; ++m) {
                worst = std::max(worst, std::abs(ref[m] - got[m]));
                sums[m] += ref[m];
            }
            ++n;
        }
        const double agg[3] = {e.ndcg.aggregate, e.map.aggregate, e.recall.aggregate};
        for (int m = 0; m < 3; ++m) {
            worst = std::max(worst, std::abs(sums[m] / static_cast<double>(n) - agg[m]));
        }
    }
    const double secs = seconds_since(t0);
    report(2, worst <= kMetricTolerance && secs < kMetricBudgetSeconds,
           "max abs diff " + fmt("%.3g", worst) + " over " + std::to_string(kMetricRuns) + " runs, " +
               fmt("%.2fs", secs));
}

void check_bm25()
{
    // Hand values, k1 = 1.2, b = 0.75:
    //   {d1: "a b", d2: "a a"}, query "a": idf = ln(1.2), d1 -> idf, d2 -> 1.375 idf
    //   {d1: "a a b"}, query "a": idf = ln(4/3), tf part 1.375
    //   5 docs below, query "c": df 2, idf = ln(3.5/2.5 + 1) = ln 2.4, avg len 2.2
    //     d3 "c c c" (len 3): 3 * 2.2 / (3 + 1.2 (0.25 + 0.75 * 3 / 2.2))
    //     d5 "c" (len 1):     2.2 / (1 + 1.2 (0.25 + 0.75 / 2.2))
    double worst = 0.0;
    auto check = [&](const Corpus& c, const Tokens& q, const std::string& doc, double expect) {
        worst = std::max(worst, std::abs(InvertedIndex::build(c).score(q, doc) - expect));
    };
    Corpus two;
    two.add({"d1", {"a", "b"}});
    two.add({"d2", {"a", "a"}});
    check(two, {"a"}, "d1", std::log(1.2));
    check(two, {"a"}, "d2", 1.375 * std::log(1.2));
    Corpus one;
    one.add({"d1", {"a", "a", "b"}});
    check(one, {"a"}, "d1", 1.375 * std::log(4.0 / 3.0));
    Corpus five;
    five.add({"d1", {"a", "b"}});
    five.add({"d2", {"a", "b", "d"}});
    five.add({"d3", {"c", "c", "c"}});
    five.add({"d4", {"b", "d"}});
    five.add({"d5", {"c"}});
    check(five, {"c"}, "d3", std::log(2.4) * 6.6 / (3.0 + 1.2 * (0.25 + 0.75 * 3.0 / 2.2)));
    check(five, {"c"}, "d5", std::log(2.4) * 2.2 / (1.0 + 1.2 * (0.25 + 0.75 / 2.2)));
    check(five, {"c"}, "d1", 0.0);

    auto data = generate_synthetic(*default_experiment_config().data.synthetic);
    auto index = InvertedIndex::build(data.corpus);
    std::size_t mismatches = 0;
    std::size_t checked = 0;
    std::vector<Query> queries = data.target.queries();
    for (std::size_t i = 0; i < data.train_queries.size(); i += 40) {
        queries.push_back(data.train_queries[i]);
    }
    for (const auto& q : queries) {
        std::vector<RankedDoc> all;
        for (std::uint32_t o = 0; o < index.n_docs(); ++o) {
            const double s = index.score(q.tokens, o);
            if (s > 0.0) {
                all.push_back({index.doc_id(o), s});
            }
        }
        std::sort(all.begin(), all.end(), [](const RankedDoc& a, const RankedDoc& b) {
            return a.score != b.score ? a.score > b.score : a.doc_id < b.doc_id;
        });
        all.resize(std::min<std::size_t>(all.size(), 100));
        auto top = index.retrieve_topk(q.tokens, 100);
        mismatches += top == all ? 0 : 1;
        ++checked;
    }
    report(3, worst <= kBm25Tolerance && mismatches == 0,
           "fixture max abs diff " + fmt("%.3g", worst) + ", top-100 mismatches " +
               std::to_string(mismatches) + "/" + std::to_string(checked) + " queries");
}

void check_ttest()
{
    Rng rng(derive_seed(8, "acceptance/ttest"));
    std::vector<std::vector<double>> vectors;
    vectors.push_back(std::vector<double>(12, 0.0));
    vectors.push_back(std::vector<double>(9, 0.125));
    vectors.push_back(std::vector<double>(7, -0.3));
    vectors.push_back({0.1, -0.05, 0.2, 0.0, 0.15});
    while (static_cast<int>(vectors.size()) < kTTestVectors) {
        const std::size_t n = 2 + rng.below(80);
        const double shift = rng.uniform(-0.1, 0.1);
        std::vector<double> d(n);
        for (auto& x : d) {
            x = shift + rng.uniform(-0.3, 0.3);
        }
        vectors.push_back(std::move(d));
    }
    double worst = 0.0;
    for (const auto& d : vectors) {
        std::vector<double> zero(d.size(), 0.0);
        auto got = paired_ttest(d, zero, kAlpha);
        auto ref = oracle::paired_t(d);
        worst = std::max(worst, std::abs(got.p - ref.p));
        if (std::isinf(ref.t) || std::isinf(got.t)) {
            worst = std::max(worst, got.t == ref.t ? 0.0 : std::numeric_limits<double>::infinity());
        } else {
            worst = std::max(worst, std::abs(got.t - ref.t) / std::max(1.0, std::abs(ref.t)));
        }
    }
    report(8, worst <= kTTestTolerance,
           "max diff " + fmt("%.3g", worst) + " over " + std::to_string(vectors.size()) +
               " vectors (3 degenerate)");
}

void check_teacher_inflation(const fs::path& dir)
{
    auto c = config_at(dir);
    c.students.losses.clear();
    const auto t0 = Clock::now();
    auto summary = run_fresh(c);
    const double secs = seconds_since(t0);
    if (!summary.ok()) {
        report(5, false, "experiment failed: " + summary.failures.front());
        return;
    }
    auto cmp = compare(read_eval(dir), "teacher", "lce");
    report(5, cmp.n >= kMinTargetQueries && cmp.diff >= kTeacherMargin && cmp.p < kAlpha && secs < kTeacherBudgetSeconds,
           "nDCG@10 gain " + fmt("%+.4f", cmp.diff) + ", p " + fmt("%.3g", cmp.p) + ", " +
               std::to_string(cmp.n) + " queries, " + fmt("%.1fs", secs));
}

void check_matrix_and_determinism(const fs::path& a, const fs::path& b)
{
    const auto t0 = Clock::now();
    auto sa = run_fresh(config_at(a));
    const double secs = seconds_since(t0);
    guarded(6, [&] {
        if (!sa.ok()) {
            report(6, false, "experiment failed: " + sa.failures.front());
            return;
        }
        const auto rows = read_eval(a);
        bool margins = true;
        bool significance = true;
        std::ostringstream cells;
        for (const std::string arch : {"joint", "dual"}) {
            int significant = 0;
            for (const std::string loss : {"margin_mse", "kl_div", "ranknet"}) {
                auto cmp = compare(rows, arch, loss);
                margins = margins && cmp.diff >= kStudentMargin;
                significant += cmp.p < kAlpha ? 1 : 0;
                cells << " " << arch << "/" << loss << " " << fmt("%+.4f", cmp.diff) << " (p "
                      << fmt("%.2g", cmp.p) << ")";
            }
            significance = significance && significant >= kSignificantLossesPerArch;
        }
        report(6, margins && significance && secs < kMatrixBudgetSeconds,
               "gains" + cells.str() + ", " + fmt("%.1fs", secs));
    });

    guarded(4, [&] {
        auto sb = run_fresh(config_at(b));
        if (!sa.ok() || !sb.ok()) {
            report(4, false, "experiment failed");
            return;
        }
        const auto ta = tree_bytes(a);
        const auto tb = tree_bytes(b);
        std::size_t checkpoints = 0, runs = 0, reports = 0, differing = 0;
        for (const auto& [path, bytes] : ta) {
            checkpoints += path.ends_with("params.bin") ? 1 : 0;
            runs += path.ends_with(".run") ? 1 : 0;
            reports += path.ends_with(".csv") && path.find('/') == std::string::npos ? 1 : 0;
            auto it = tb.find(path);
            differing += it == tb.end() || it->second != bytes ? 1 : 0;
        }
        differing += ta.size() == tb.size() ? 0 : 1;
        report(4, differing == 0 && checkpoints > 0 && runs > 0 && reports > 0,
               std::to_string(ta.size()) + " files compared (" + std::to_string(checkpoints) + " checkpoints, " +
                   std::to_string(runs) + " runs, " + std::to_string(reports) + " reports), " +
                   std::to_string(differing) + " differ");
    });
}

void check_fixed_point(const fs::path& dir)
{
    auto teacher = ScorerParams::load_file((dir / "cells" / "teacher-clean" / "params.bin").string());
    auto corpus = read_corpus((dir / "data" / "corpus.tsv").string());
    std::unordered_map<std::string, Query> queries;
    for (auto& q : read_queries((dir / "data" / "train_queries.tsv").string())) {
        queries.emplace(q.id, q);
    }
    std::ifstream in(dir / "data" / "base_groups.tsv");
    auto groups = parse_groups(in, queries);
    groups.resize(std::min<std::size_t>(groups.size(), 32 * 20));
    FeatureStore store(corpus, teacher.dim());
    auto labeled = label_pairs(teacher, groups, store, "teacher");
    TrainConfig cfg = default_experiment_config().students.train_for(Architecture::joint);
    cfg.dim = teacher.dim();
    cfg.hidden = teacher.hidden();
    std::string detail;
    bool pass = true;
    for (auto loss : {LossKind::margin_mse, LossKind::kl_div}) {
        cfg.loss_kind = loss;
        auto r = distill(Architecture::joint, teacher, labeled, cfg, store, true);
        pass = pass && !r.log.empty() && r.log.front().loss == 0.0;
        detail += std::string(to_string(loss)) + " initial batch loss " + fmt("%.3g", r.log.front().loss) + "; ";
    }
    report(9, pass, detail + "batch of " + std::to_string(cfg.batch_queries) + " groups");
}

void check_small_fraction(const fs::path& dir)
{
    auto c = config_at(dir);
    c.students.losses.clear();
    auto& spec = c.contamination.at(0);
    spec.max_fraction = kSmallFraction;
    // Size the base stream so every contaminated group fits at exactly the cap.
    auto probe_cfg = *c.data.synthetic;
    probe_cfg.base_groups = 1;
    auto probe = generate_synthetic(probe_cfg);
    const std::size_t available = binarize(probe.target, spec.relevance_cutoff).positives.size();
    c.data.synthetic->base_groups = available * 999;
    auto summary = run_fresh(c);
    if (!summary.ok()) {
        report(7, false, "experiment failed: " + summary.failures.front());
        return;
    }
    std::ifstream inj(dir / "data" / "injection.csv");
    std::string header, line;
    std::getline(inj, header);
    std::getline(inj, line);
    const double achieved = std::stod(line.substr(line.rfind(',') + 1));
    auto cmp = compare(read_eval(dir), "teacher", "lce");
    report(7, std::abs(achieved - kSmallFraction) < 1e-12 && cmp.diff >= kSmallFractionMargin && cmp.p < kAlpha,
           "achieved fraction " + fmt("%.6f", achieved) + " (" + std::to_string(available) + " groups in " +
               std::to_string(available * 1000) + "), nDCG@10 gain " + fmt("%+.4f", cmp.diff) + ", p " +
               fmt("%.3g", cmp.p));
}

}  // namespace

int main()
{
    const fs::path root = output_root();
    std::cout << "acceptance outputs under " << root.string() << std::endl;
    guarded(1, check_gradients);
    guarded(2, check_metrics);
    guarded(3, check_bm25);
    guarded(8, check_ttest);
    guarded(5, [&] { check_teacher_inflation(root / "teachers"); });
    check_matrix_and_determinism(root / "run-a", root / "run-b");
    guarded(9, [&] { check_fixed_point(root / "run-a"); });
    guarded(7, [&] { check_small_fraction(root / "small-fraction"); });
    std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed")
              << std::endl;
    return failures == 0 ? 0 : 1;
}
