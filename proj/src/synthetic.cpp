#include "contamlab/synthetic.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <string>

#include "contamlab/error.hpp"
#include "contamlab/rng.hpp"

namespace contamlab {

namespace {

constexpr std::size_t kNoQuery = static_cast<std::size_t>(-1);

struct QuerySpec {
    Query query;
    std::size_t topic = 0;
    std::vector<std::size_t> focused;  // corpus indices
};

struct World {
    std::vector<std::vector<std::string>> topic_terms;
    std::vector<std::vector<std::size_t>> topic_docs;  // corpus indices per topic
    std::vector<std::size_t> doc_focus;                // owning query per doc, or kNoQuery
    std::vector<std::vector<std::size_t>> topic_queries;  // query indices per topic
    std::vector<QuerySpec> queries;                    // target, ood, then train
    std::size_t n_target = 0;
    std::size_t n_ood = 0;
    Corpus corpus;
};

std::string facet_term(std::size_t query_index)
{
    return "f" + std::to_string(query_index);
}

std::string numbered(const char* prefix, std::size_t n)
{
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s%05zu", prefix, n);
    return buf;
}

void check_config(const SyntheticConfig& c)
{
    if (c.n_topics == 0 || c.docs_per_topic == 0 || c.queries_per_topic == 0 ||
        c.vocab_per_topic == 0) {
        throw ConfigError("synthetic collection sizes must all be >= 1");
    }
    if (c.vocab_per_topic < 8) {
        throw ConfigError("vocab_per_topic must be >= 8 to keep topics distinctive");
    }
    if (c.query_length == 0 || c.query_length > c.vocab_per_topic) {
        throw ConfigError("query_length must be in [1, vocab_per_topic]");
    }
    if (c.heldout_query_terms != 0 &&
        (c.heldout_query_terms < std::min(c.heldout_terms_per_query, c.query_length) ||
         c.vocab_per_topic - c.heldout_query_terms < c.query_length)) {
        throw ConfigError("heldout_query_terms leaves too few terms for held-out or training queries");
    }
    if (c.background_vocab == 0 || c.doc_length_min == 0 || c.doc_length_max < c.doc_length_min) {
        throw ConfigError("invalid background vocabulary or document length range");
    }
    if (c.focused_per_query == 0) {
        throw ConfigError("focused_per_query must be >= 1");
    }
    const std::size_t per_topic = c.queries_per_topic + c.train_queries_per_topic;
    if (per_topic * c.focused_per_query > c.docs_per_topic) {
        throw ConfigError("docs_per_topic too small for the focused documents of every query");
    }
    if (c.group_size < 2) {
        throw ConfigError("group_size must be >= 2");
    }
    if (c.background_rate < 0 || c.focus_rate < 0 || c.facet_rate < 0 || c.facet_spill_rate < 0 ||
        c.background_rate + c.focus_rate + c.facet_rate + c.facet_spill_rate > 1) {
        throw ConfigError("token source rates must be non-negative and sum to <= 1");
    }
    if (!(c.hard_negative_rate >= 0) || !(c.topic_negative_rate >= 0) ||
        c.hard_negative_rate + c.topic_negative_rate > 1) {
        throw ConfigError("negative source rates must be non-negative and sum to <= 1");
    }
}

World build_world(const SyntheticConfig& c)
{
    check_config(c);
    World w;
    const std::size_t total_topics = c.n_topics + c.ood_topics;

    for (std::size_t t = 0; t < total_topics; ++t) {
        std::vector<std::string> terms;
        for (std::size_t j = 0; j < c.vocab_per_topic; ++j) {
            terms.push_back("t" + std::to_string(t) + "x" + std::to_string(j));
        }
        w.topic_terms.push_back(std::move(terms));
    }

    // Queries: target first, then ood, then training; ids are stable per role.
    Rng qrng(derive_seed(c.seed, "queries"));
    // The first `heldout_query_terms` terms of each topic are reserved: held-out
    // queries take `heldout_terms_per_query` of their terms from them, training
    // queries never use them.
    const std::size_t reserved = c.heldout_query_terms;
    const std::size_t from_reserved =
        reserved == 0 ? 0 : std::min(c.heldout_terms_per_query, c.query_length);
    auto make_query = [&](const std::string& id, std::size_t topic, bool heldout) {
        std::vector<std::size_t> pool(reserved);
        std::iota(pool.begin(), pool.end(), 0);
        std::vector<std::size_t> shared(c.vocab_per_topic - reserved);
        std::iota(shared.begin(), shared.end(), reserved);
        qrng.shuffle(std::span(pool));
        qrng.shuffle(std::span(shared));
        const std::size_t n_pool = heldout ? from_reserved : 0;
        std::vector<std::size_t> idx(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(n_pool));
        idx.insert(idx.end(), shared.begin(),
                   shared.begin() + static_cast<std::ptrdiff_t>(c.query_length - n_pool));
        QuerySpec q;
        q.topic = topic;
        q.query.id = id;
        for (std::size_t i = 0; i < c.query_length; ++i) {
            q.query.tokens.push_back(w.topic_terms[topic][idx[i]]);
        }
        return q;
    };
    for (std::size_t t = 0; t < c.n_topics; ++t) {
        for (std::size_t i = 0; i < c.queries_per_topic; ++i) {
            w.queries.push_back(make_query(numbered("tq", w.n_target), t, true));
            ++w.n_target;
        }
    }
    for (std::size_t t = c.n_topics; t < total_topics; ++t) {
        for (std::size_t i = 0; i < c.queries_per_topic; ++i) {
            w.queries.push_back(make_query(numbered("oq", w.n_ood), t, true));
            ++w.n_ood;
        }
    }
    std::size_t n_train = 0;
    for (std::size_t t = 0; t < c.n_topics; ++t) {
        for (std::size_t i = 0; i < c.train_queries_per_topic; ++i) {
            w.queries.push_back(make_query(numbered("bq", n_train), t, false));
            ++n_train;
        }
    }

    // Focus assignment: each query owns a disjoint slice of its topic's documents.
    Rng arng(derive_seed(c.seed, "assignment"));
    const std::size_t n_docs = total_topics * c.docs_per_topic;
    w.doc_focus.assign(n_docs, kNoQuery);
    w.topic_docs.resize(total_topics);
    for (std::size_t t = 0; t < total_topics; ++t) {
        std::vector<std::size_t> slots(c.docs_per_topic);
        std::iota(slots.begin(), slots.end(), t * c.docs_per_topic);
        w.topic_docs[t] = slots;
        arng.shuffle(std::span(slots));
        std::size_t next = 0;
        for (std::size_t qi = 0; qi < w.queries.size(); ++qi) {
            if (w.queries[qi].topic != t) {
                continue;
            }
            for (std::size_t k = 0; k < c.focused_per_query; ++k) {
                std::size_t doc = slots[next++];
                w.doc_focus[doc] = qi;
                w.queries[qi].focused.push_back(doc);
            }
            std::sort(w.queries[qi].focused.begin(), w.queries[qi].focused.end());
        }
    }

    w.topic_queries.resize(total_topics);
    for (std::size_t qi = 0; qi < w.queries.size(); ++qi) {
        w.topic_queries[w.queries[qi].topic].push_back(qi);
    }

    // Background terms follow a Zipf(1) law over their rank.
    std::vector<double> bg_cdf(c.background_vocab);
    double acc = 0.0;
    for (std::size_t i = 0; i < c.background_vocab; ++i) {
        acc += 1.0 / static_cast<double>(i + 1);
        bg_cdf[i] = acc;
    }
    for (auto& v : bg_cdf) {
        v /= acc;
    }

    Rng drng(derive_seed(c.seed, "documents"));
    for (std::size_t d = 0; d < n_docs; ++d) {
        const std::size_t topic = d / c.docs_per_topic;
        const std::size_t focus = w.doc_focus[d];
        const std::size_t len =
            c.doc_length_min + drng.below(c.doc_length_max - c.doc_length_min + 1);
        Document doc;
        doc.id = numbered("doc", d);
        doc.tokens.reserve(len + c.unique_terms_per_doc);
        for (std::size_t i = 0; i < len; ++i) {
            const double u = drng.uniform();
            if (focus != kNoQuery && u < c.focus_rate) {
                const auto& qt = w.queries[focus].query.tokens;
                doc.tokens.push_back(qt[drng.below(qt.size())]);
            } else if (focus != kNoQuery && u < c.focus_rate + c.facet_rate) {
                doc.tokens.push_back(facet_term(focus));
            } else if (u < c.focus_rate + c.facet_rate + c.facet_spill_rate) {
                const auto& owners = w.topic_queries[topic];
                doc.tokens.push_back(facet_term(owners[drng.below(owners.size())]));
            } else if (u < c.focus_rate + c.facet_rate + c.facet_spill_rate + c.background_rate) {
                auto it = std::lower_bound(bg_cdf.begin(), bg_cdf.end(), drng.uniform());
                auto rank = static_cast<std::size_t>(std::min<std::ptrdiff_t>(
                    it - bg_cdf.begin(), static_cast<std::ptrdiff_t>(c.background_vocab - 1)));
                doc.tokens.push_back("w" + std::to_string(rank));
            } else {
                const auto& tt = w.topic_terms[topic];
                doc.tokens.push_back(tt[drng.below(tt.size())]);
            }
        }
        for (std::size_t k = 0; k < c.unique_terms_per_doc; ++k) {
            doc.tokens.push_back("u" + std::to_string(d) + "x" + std::to_string(k));
        }
        w.corpus.add(std::move(doc));
    }
    return w;
}

TestCollection make_collection(const SyntheticConfig& c, const World& w, std::string name,
                               std::size_t first, std::size_t count, std::uint64_t seed)
{
    Rng rng(seed);
    const std::size_t n_docs = w.corpus.size();
    std::vector<Query> queries;
    Qrels qrels;
    qrels.grade_max = 3;
    for (std::size_t qi = first; qi < first + count; ++qi) {
        const QuerySpec& q = w.queries[qi];
        queries.push_back(q.query);
        for (std::size_t d : q.focused) {
            qrels.judgments.push_back({q.query.id, w.corpus[d].id, 3});
        }
        std::vector<std::size_t> peripheral;
        for (std::size_t d : w.topic_docs[q.topic]) {
            if (!std::binary_search(q.focused.begin(), q.focused.end(), d)) {
                peripheral.push_back(d);
            }
        }
        rng.shuffle(std::span(peripheral));
        peripheral.resize(std::min(peripheral.size(), c.peripheral_judged));
        std::sort(peripheral.begin(), peripheral.end());
        for (std::size_t d : peripheral) {
            qrels.judgments.push_back({q.query.id, w.corpus[d].id, 1});
        }
        const std::size_t off_pool = n_docs - c.docs_per_topic;
        const std::size_t n_off = std::min(off_pool, c.offtopic_judged);
        std::vector<std::size_t> off;
        while (off.size() < n_off) {
            std::size_t d = rng.below(n_docs);
            if (d / c.docs_per_topic == q.topic ||
                std::find(off.begin(), off.end(), d) != off.end()) {
                continue;
            }
            off.push_back(d);
        }
        std::sort(off.begin(), off.end());
        for (std::size_t d : off) {
            qrels.judgments.push_back({q.query.id, w.corpus[d].id, 0});
        }
    }
    return TestCollection(std::move(name), std::move(queries), std::move(qrels));
}

std::vector<TrainingGroup> make_base_groups(const SyntheticConfig& c, const World& w)
{
    std::vector<TrainingGroup> groups;
    const std::size_t first_train = w.n_target + w.n_ood;
    const std::size_t n_train = w.queries.size() - first_train;
    if (n_train == 0 || c.base_groups == 0) {
        return groups;
    }
    const std::size_t n_docs = w.corpus.size();

    // Hard negatives come from the documents focused on the topic's other
    // training queries, so training documents are seen both as positives and as
    // negatives.
    std::vector<std::vector<std::size_t>> hard_pools(w.topic_docs.size());
    for (std::size_t qi = first_train; qi < w.queries.size(); ++qi) {
        const QuerySpec& q = w.queries[qi];
        hard_pools[q.topic].insert(hard_pools[q.topic].end(), q.focused.begin(), q.focused.end());
    }
    for (auto& pool : hard_pools) {
        std::sort(pool.begin(), pool.end());
    }

    Rng rng(derive_seed(c.seed, "base-groups"));
    groups.reserve(c.base_groups);
    for (std::size_t g = 0; g < c.base_groups; ++g) {
        const std::size_t qi = first_train + rng.below(n_train);
        const QuerySpec& q = w.queries[qi];
        const std::size_t pos = q.focused[rng.below(q.focused.size())];
        const auto& hard = hard_pools[q.topic].size() >= q.focused.size() + c.group_size
                               ? hard_pools[q.topic]
                               : w.topic_docs[q.topic];
        std::vector<std::size_t> negs;
        while (negs.size() + 1 < c.group_size) {
            const double u = rng.uniform();
            const auto& topic = w.topic_docs[q.topic];
            std::size_t d = 0;
            if (u < c.hard_negative_rate && !hard.empty()) {
                d = hard[rng.below(hard.size())];
            } else if (u >= c.hard_negative_rate &&
                       u < c.hard_negative_rate + c.topic_negative_rate) {
                d = topic[rng.below(topic.size())];
            } else {
                d = rng.below(n_docs);
            }
            if (std::binary_search(q.focused.begin(), q.focused.end(), d) ||
                std::find(negs.begin(), negs.end(), d) != negs.end()) {
                continue;
            }
            negs.push_back(d);
        }
        TrainingGroup group;
        group.query = q.query;
        group.positive = w.corpus[pos].id;
        for (std::size_t d : negs) {
            group.negatives.push_back(w.corpus[d].id);
        }
        group.origin = GroupOrigin::base;
        groups.push_back(std::move(group));
    }
    return groups;
}

}  // namespace

SyntheticData generate_synthetic(const SyntheticConfig& config)
{
    World w = build_world(config);
    SyntheticData out;
    out.target = make_collection(config, w, "target", 0, w.n_target,
                                 derive_seed(config.seed, "target-judgments"));
    if (w.n_ood > 0) {
        out.ood = make_collection(config, w, "ood", w.n_target, w.n_ood,
                                  derive_seed(config.seed, "ood-judgments"));
    }
    for (std::size_t qi = w.n_target + w.n_ood; qi < w.queries.size(); ++qi) {
        out.train_queries.push_back(w.queries[qi].query);
    }
    out.base_groups = make_base_groups(config, w);
    out.corpus = std::move(w.corpus);
    return out;
}

std::vector<TrainingGroup> generate_base_groups(const SyntheticConfig& config)
{
    return make_base_groups(config, build_world(config));
}

SyntheticData generate_synthetic_collection(std::size_t n_topics, std::size_t docs_per_topic,
                                            std::size_t queries_per_topic,
                                            std::size_t vocab_per_topic, std::uint64_t seed)
{
    SyntheticConfig c;
    c.n_topics = n_topics;
    c.docs_per_topic = docs_per_topic;
    c.queries_per_topic = queries_per_topic;
    c.vocab_per_topic = vocab_per_topic;
    c.seed = seed;
    c.train_queries_per_topic = 2 * queries_per_topic;
    const std::size_t per_topic = c.queries_per_topic + c.train_queries_per_topic;
    if (per_topic > 0) {
        c.focused_per_query = std::clamp<std::size_t>(docs_per_topic / (2 * per_topic), 1, 5);
    }
    c.query_length = std::min<std::size_t>(3, vocab_per_topic);
    c.background_vocab = std::max<std::size_t>(50, 5 * vocab_per_topic);
    return generate_synthetic(c);
}

}  // namespace contamlab
