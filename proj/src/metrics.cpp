#include "contamlab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <unordered_set>

#include <boost/math/distributions/students_t.hpp>

#include "contamlab/error.hpp"

namespace contamlab {

namespace {

using PerQueryFn = std::function<double(const std::vector<RankedDoc>&, const std::map<std::string, int>&)>;

void check_run_queries(const Run& run, const TestCollection& collection)
{
    std::string missing;
    for (const auto& [qid, _] : run.rankings) {
        if (!collection.has_query(qid)) {
            missing += (missing.empty() ? "" : ", ") + qid;
        }
    }
    if (!missing.empty()) {
        throw EvaluationError("run queries missing from collection " + collection.name() + ": " + missing);
    }
}

std::vector<std::string> evaluated_queries(const TestCollection& collection)
{
    std::vector<std::string> ids;
    for (const auto& q : collection.queries()) {
        if (!collection.judged(q.id).empty()) {
            ids.push_back(q.id);
        }
    }
    std::sort(ids.begin(), ids.end());
    return ids;
}

MetricResult evaluate(const std::string& name, const Run& run, const TestCollection& collection,
                      const PerQueryFn& fn, Exec exec)
{
    check_run_queries(run, collection);
    const auto ids = evaluated_queries(collection);
    static const std::vector<RankedDoc> kEmpty;
    std::vector<double> values(ids.size());
    for_each_index(ids.size(), exec, [&](std::size_t i) {
        auto it = run.rankings.find(ids[i]);
        values[i] = fn(it == run.rankings.end() ? kEmpty : it->second, collection.judged(ids[i]));
    });
    MetricResult r;
    r.metric = name;
    double sum = 0.0;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        r.per_query.emplace(ids[i], values[i]);
        sum += values[i];
    }
    r.aggregate = ids.empty() ? 0.0 : sum / static_cast<double>(ids.size());
    return r;
}

int grade_of(const std::map<std::string, int>& judged, const std::string& doc)
{
    auto it = judged.find(doc);
    return it == judged.end() ? 0 : it->second;
}

double gain(int grade)
{
    return std::exp2(static_cast<double>(grade)) - 1.0;
}

}  // namespace

MetricResult ndcg_at(const Run& run, const TestCollection& collection, std::size_t k, Exec exec)
{
    return evaluate("nDCG@" + std::to_string(k), run, collection,
                    [k](const std::vector<RankedDoc>& docs, const std::map<std::string, int>& judged) {
                        double dcg = 0.0;
                        for (std::size_t i = 0; i < std::min(k, docs.size()); ++i) {
                            dcg += gain(grade_of(judged, docs[i].doc_id)) / std::log2(static_cast<double>(i + 2));
                        }
                        std::vector<int> grades;
                        for (const auto& [_, g] : judged) {
                            grades.push_back(g);
                        }
                        std::sort(grades.begin(), grades.end(), std::greater<>());
                        double idcg = 0.0;
                        for (std::size_t i = 0; i < std::min(k, grades.size()); ++i) {
                            idcg += gain(grades[i]) / std::log2(static_cast<double>(i + 2));
                        }
                        return idcg > 0.0 ? dcg / idcg : 0.0;
                    },
                    exec);
}

MetricResult map_metric(const Run& run, const TestCollection& collection, int cutoff, Exec exec)
{
    return evaluate("MAP", run, collection,
                    [cutoff](const std::vector<RankedDoc>& docs, const std::map<std::string, int>& judged) {
                        std::size_t n_rel = 0;
                        for (const auto& [_, g] : judged) {
                            n_rel += g >= cutoff ? 1 : 0;
                        }
                        if (n_rel == 0) {
                            return 0.0;
                        }
                        double sum = 0.0;
                        std::size_t hits = 0;
                        for (std::size_t i = 0; i < docs.size(); ++i) {
                            if (grade_of(judged, docs[i].doc_id) >= cutoff) {
                                ++hits;
                                sum += static_cast<double>(hits) / static_cast<double>(i + 1);
                            }
                        }
                        return sum / static_cast<double>(n_rel);
                    },
                    exec);
}

MetricResult recall_at(const Run& run, const TestCollection& collection, std::size_t k, int cutoff,
                       Exec exec)
{
    return evaluate("R@" + std::to_string(k), run, collection,
                    [k, cutoff](const std::vector<RankedDoc>& docs, const std::map<std::string, int>& judged) {
                        std::size_t n_rel = 0;
                        for (const auto& [_, g] : judged) {
                            n_rel += g >= cutoff ? 1 : 0;
                        }
                        if (n_rel == 0) {
                            return 0.0;
                        }
                        std::size_t hits = 0;
                        for (std::size_t i = 0; i < std::min(k, docs.size()); ++i) {
                            hits += grade_of(judged, docs[i].doc_id) >= cutoff ? 1 : 0;
                        }
                        return static_cast<double>(hits) / static_cast<double>(n_rel);
                    },
                    exec);
}

Evaluation evaluate_run(const Run& run, const TestCollection& collection,
                        const EvaluationSettings& settings, Exec exec)
{
    return {ndcg_at(run, collection, settings.ndcg_depth, exec),
            map_metric(run, collection, settings.relevance_cutoff, exec),
            recall_at(run, collection, settings.recall_depth, settings.relevance_cutoff, exec)};
}

TTestResult paired_ttest(std::span<const double> a, std::span<const double> b, double alpha)
{
    if (a.size() != b.size()) {
        throw EvaluationError("paired_ttest: samples have different lengths");
    }
    const std::size_t n = a.size();
    if (n < 2) {
        throw EvaluationError("paired_ttest: need at least 2 paired values");
    }
    std::vector<double> diff(n);
    for (std::size_t i = 0; i < n; ++i) {
        diff[i] = a[i] - b[i];
    }
    double mean = 0.0;
    for (double d : diff) {
        mean += d;
    }
    mean /= static_cast<double>(n);

    TTestResult r;
    const bool constant = std::all_of(diff.begin(), diff.end(), [&](double d) { return d == diff[0]; });
    if (constant) {
        if (diff[0] == 0.0) {
            return r;  // t = 0, p = 1
        }
        r.t = diff[0] > 0 ? INFINITY : -INFINITY;
        r.p = 0.0;
        r.significant = true;
        return r;
    }
    double ss = 0.0;
    for (double d : diff) {
        ss += (d - mean) * (d - mean);
    }
    const double sd = std::sqrt(ss / static_cast<double>(n - 1));
    r.t = mean / (sd / std::sqrt(static_cast<double>(n)));
    boost::math::students_t dist(static_cast<double>(n - 1));
    r.p = std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(r.t))));
    r.significant = r.p < alpha;
    return r;
}

TTestResult paired_ttest(const MetricResult& a, const MetricResult& b, double alpha)
{
    if (a.per_query.size() != b.per_query.size()) {
        throw EvaluationError("paired_ttest: query sets differ in size");
    }
    std::vector<double> va;
    std::vector<double> vb;
    for (const auto& [qid, v] : a.per_query) {
        auto it = b.per_query.find(qid);
        if (it == b.per_query.end()) {
            throw EvaluationError("paired_ttest: query " + qid + " missing from second sample");
        }
        va.push_back(v);
        vb.push_back(it->second);
    }
    return paired_ttest(va, vb, alpha);
}

}  // namespace contamlab
