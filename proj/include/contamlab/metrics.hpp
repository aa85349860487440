#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "contamlab/collection.hpp"
#include "contamlab/parallel.hpp"

namespace contamlab {

/// Per-query values of one measure plus their arithmetic mean.
///
/// Evaluated queries are the collection's queries that have at least one
/// judgment; a query absent from the run scores 0.
struct MetricResult {
    std::string metric;  // "nDCG@10", "MAP", "R@100"
    std::map<std::string, double> per_query;
    double aggregate = 0.0;
};

// Gain 2^g - 1, discount log2(rank + 1), unjudged documents gain 0.
MetricResult ndcg_at(const Run& run, const TestCollection& collection, std::size_t k = 10,
                     Exec exec = Exec::parallel);

// Binary relevance g >= cutoff over the full run depth.
MetricResult map_metric(const Run& run, const TestCollection& collection, int cutoff = 2,
                        Exec exec = Exec::parallel);

MetricResult recall_at(const Run& run, const TestCollection& collection, std::size_t k = 100,
                       int cutoff = 2, Exec exec = Exec::parallel);

struct EvaluationSettings {
    std::size_t ndcg_depth = 10;
    std::size_t recall_depth = 100;
    int relevance_cutoff = 2;
};

struct Evaluation {
    MetricResult ndcg;
    MetricResult map;
    MetricResult recall;

    [[nodiscard]] std::vector<const MetricResult*> all() const { return {&ndcg, &map, &recall}; }
};

// Throws EvaluationError listing run queries missing from the collection.
Evaluation evaluate_run(const Run& run, const TestCollection& collection,
                        const EvaluationSettings& settings = {}, Exec exec = Exec::parallel);

struct TTestResult {
    double t = 0.0;
    double p = 1.0;
    bool significant = false;
};

/// Two-sided paired t-test on a - b with n - 1 degrees of freedom. Identical
/// differences are the degenerate case: all zero gives p = 1, any other
/// constant gives p = 0 with an infinite t.
TTestResult paired_ttest(std::span<const double> a, std::span<const double> b, double alpha = 0.05);

// Aligns by query id; mismatched query sets are an EvaluationError.
TTestResult paired_ttest(const MetricResult& a, const MetricResult& b, double alpha = 0.05);

}  // namespace contamlab
