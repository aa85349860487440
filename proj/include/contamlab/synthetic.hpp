#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "contamlab/collection.hpp"

namespace contamlab {

/// Knobs of the topical-mixture generator.
///
/// Every topic owns `vocab_per_topic` distinctive terms; documents mix those
/// with a Zipf-distributed background vocabulary and a few document-unique
/// terms. Each query is a handful of its topic's terms and owns a set of
/// "focused" documents that use the query terms more often than the rest of
/// the topic. Target (held-out) queries and training queries are disjoint;
/// base training groups only ever mention training queries.
struct SyntheticConfig {
    std::size_t n_topics = 20;
    std::size_t docs_per_topic = 200;
    std::size_t queries_per_topic = 3;  // held-out target queries
    std::size_t vocab_per_topic = 40;
    std::uint64_t seed = 0;

    std::size_t train_queries_per_topic = 24;
    // Extra topics that only carry target queries (out-of-distribution source).
    std::size_t ood_topics = 0;
    std::size_t background_vocab = 1000;
    std::size_t query_length = 3;
    // Topic terms that training queries never use (0 disables the split), and
    // how many of each held-out query's terms are drawn from them.
    std::size_t heldout_query_terms = 0;
    std::size_t heldout_terms_per_query = 1;
    std::size_t focused_per_query = 5;
    std::size_t doc_length_min = 40;
    std::size_t doc_length_max = 80;
    double background_rate = 0.45;
    double focus_rate = 0.12;
    // Share of a focused document's tokens that are its query's facet term, a
    // term no query contains.
    double facet_rate = 0.0;
    // Share of every topic document's tokens drawn from the facet terms of the
    // topic's queries.
    double facet_spill_rate = 0.0;
    std::size_t unique_terms_per_doc = 2;
    std::size_t peripheral_judged = 15;
    std::size_t offtopic_judged = 10;

    std::size_t base_groups = 1000;
    std::size_t group_size = 2;
    // Share of negatives drawn from documents focused on other training queries
    // of the same topic; the rest are uniform over the corpus.
    double hard_negative_rate = 1.0;
    // Share of negatives drawn uniformly from the query's topic, which may hit
    // documents focused on held-out queries.
    double topic_negative_rate = 0.0;
};

struct SyntheticData {
    Corpus corpus;
    TestCollection target;             // named "target"
    std::optional<TestCollection> ood;  // named "ood", present when ood_topics > 0
    std::vector<Query> train_queries;
    std::vector<TrainingGroup> base_groups;
};

// Throws ConfigError when a count is zero, a topic has fewer than 8
// distinctive terms, or a topic has too few documents for its queries.
SyntheticData generate_synthetic(const SyntheticConfig& config);

// Convenience form that scales the secondary knobs to the given sizes.
SyntheticData generate_synthetic_collection(std::size_t n_topics, std::size_t docs_per_topic,
                                            std::size_t queries_per_topic,
                                            std::size_t vocab_per_topic, std::uint64_t seed);

// Base groups only; the stream for a given config is prefix-stable in
// `config.base_groups`.
std::vector<TrainingGroup> generate_base_groups(const SyntheticConfig& config);

}  // namespace contamlab
