#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "contamlab/collection.hpp"
#include "contamlab/index.hpp"

namespace contamlab {

struct ContaminationSpec {
    std::string source_collection;
    int relevance_cutoff = 2;
    std::size_t group_size = 2;
    double max_fraction = 1.0;
    std::uint64_t seed = 0;
    std::size_t bm25_depth = 100;  // BM25 negatives come from this many top documents
};

struct JudgedPair {
    std::string query_id;
    std::string doc_id;

    bool operator==(const JudgedPair&) const = default;
};

struct BinarizedPairs {
    std::vector<JudgedPair> positives;      // grade >= cutoff
    std::vector<JudgedPair> hard_negatives;  // judged, grade < cutoff
};

// Partitions the judged pairs at `cutoff`; requires 1 <= cutoff <= grade_max.
BinarizedPairs binarize(const TestCollection& collection, int cutoff);

/// One contaminated group per positive judged pair, ordered by (query_id,
/// positive doc_id). Negatives come from the query's judged non-relevant
/// documents first, then its BM25 top-`bm25_depth`, then uniformly from the
/// corpus; no negative is ever judged relevant for the query. Sampling within
/// each source is seeded per (spec.seed, query, positive).
std::vector<TrainingGroup> build_contaminated_groups(const TestCollection& collection,
                                                     const Corpus& corpus,
                                                     const InvertedIndex& index,
                                                     const ContaminationSpec& spec);

struct InjectedStream {
    std::vector<TrainingGroup> groups;
    std::size_t n_base = 0;
    std::size_t n_contaminated = 0;
    double achieved_fraction = 0.0;  // n_contaminated / groups.size()
};

/// Interleaves contaminated groups into the base stream at seeded uniformly
/// random positions, keeping the largest seeded subset of contaminated groups
/// whose share of the result does not exceed `max_fraction`. Base groups keep
/// their relative order.
InjectedStream inject(const std::vector<TrainingGroup>& base,
                      const std::vector<TrainingGroup>& contaminated, double max_fraction,
                      std::uint64_t seed);

// Largest k <= available with k / (n_base + k) <= max_fraction.
std::size_t max_contaminated(std::size_t n_base, std::size_t available, double max_fraction);

}  // namespace contamlab
