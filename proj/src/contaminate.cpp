#include "contamlab/contaminate.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <tuple>
#include <unordered_set>

#include "contamlab/error.hpp"
#include "contamlab/rng.hpp"

namespace contamlab {

BinarizedPairs binarize(const TestCollection& collection, int cutoff)
{
    if (cutoff < 1 || cutoff > collection.grade_max()) {
        throw UsageError("relevance cutoff " + std::to_string(cutoff) + " outside [1, " +
                         std::to_string(collection.grade_max()) + "]");
    }
    BinarizedPairs out;
    for (const auto& j : collection.judgments()) {
        auto& dst = j.grade >= cutoff ? out.positives : out.hard_negatives;
        dst.push_back({j.query_id, j.doc_id});
    }
    return out;
}

std::vector<TrainingGroup> build_contaminated_groups(const TestCollection& collection,
                                                     const Corpus& corpus,
                                                     const InvertedIndex& index,
                                                     const ContaminationSpec& spec)
{
    if (spec.group_size < 2) {
        throw ConfigError("contamination group_size must be >= 2");
    }
    if (corpus.size() < spec.group_size) {
        throw ConfigError("corpus has fewer documents than the group size");
    }
    const std::size_t need = spec.group_size - 1;

    auto pairs = binarize(collection, spec.relevance_cutoff).positives;
    std::sort(pairs.begin(), pairs.end(), [](const JudgedPair& a, const JudgedPair& b) {
        return std::tie(a.query_id, a.doc_id) < std::tie(b.query_id, b.doc_id);
    });

    std::vector<TrainingGroup> groups;
    groups.reserve(pairs.size());
    std::string cached_qid;
    std::vector<RankedDoc> bm25;
    for (const auto& pair : pairs) {
        const Query& query = collection.query(pair.query_id);
        if (!corpus.contains(pair.doc_id)) {
            throw DataError("positive document " + pair.doc_id + " is not in the corpus");
        }
        const auto& judged = collection.judged(pair.query_id);
        auto relevant = [&](const std::string& doc) {
            auto it = judged.find(doc);
            return it != judged.end() && it->second >= spec.relevance_cutoff;
        };
        if (cached_qid != pair.query_id) {
            bm25 = index.retrieve_topk(query.tokens, std::max<std::size_t>(spec.bm25_depth, 1));
            cached_qid = pair.query_id;
        }

        Rng rng(derive_seed(derive_seed(spec.seed, pair.query_id), pair.doc_id));
        TrainingGroup g;
        g.query = query;
        g.positive = pair.doc_id;
        g.origin = GroupOrigin::contaminated;
        std::unordered_set<std::string> taken{pair.doc_id};
        auto take_from = [&](std::vector<std::string> pool) {
            rng.shuffle(std::span(pool));
            for (auto& doc : pool) {
                if (g.negatives.size() == need) {
                    return;
                }
                if (!relevant(doc) && corpus.contains(doc) && taken.insert(doc).second) {
                    g.negatives.push_back(std::move(doc));
                }
            }
        };

        std::vector<std::string> hard;
        for (const auto& [doc, grade] : judged) {
            if (grade < spec.relevance_cutoff) {
                hard.push_back(doc);
            }
        }
        take_from(std::move(hard));
        if (g.negatives.size() < need) {
            std::vector<std::string> retrieved;
            for (const auto& r : bm25) {
                retrieved.push_back(r.doc_id);
            }
            take_from(std::move(retrieved));
        }
        // Random fill; bounded so a corpus with too few non-relevant documents fails.
        std::size_t attempts = 0;
        const std::size_t max_attempts = 64 * corpus.size() + 1024;
        while (g.negatives.size() < need) {
            if (++attempts > max_attempts) {
                throw ConfigError("not enough non-relevant documents to fill a group for query " +
                                  pair.query_id);
            }
            const auto& doc = corpus[rng.below(corpus.size())].id;
            if (!relevant(doc) && taken.insert(doc).second) {
                g.negatives.push_back(doc);
            }
        }
        groups.push_back(std::move(g));
    }
    return groups;
}

std::size_t max_contaminated(std::size_t n_base, std::size_t available, double max_fraction)
{
    if (max_fraction >= 1.0) {
        return available;
    }
    auto fits = [&](std::size_t k) {
        return static_cast<double>(k) / static_cast<double>(n_base + k) <= max_fraction;
    };
    auto k = static_cast<std::size_t>(
        std::floor(max_fraction * static_cast<double>(n_base) / (1.0 - max_fraction)));
    k = std::min(k, available);
    while (k > 0 && !fits(k)) {
        --k;
    }
    while (k < available && fits(k + 1)) {
        ++k;
    }
    return k;
}

InjectedStream inject(const std::vector<TrainingGroup>& base,
                      const std::vector<TrainingGroup>& contaminated, double max_fraction,
                      std::uint64_t seed)
{
    if (!(max_fraction > 0.0) || max_fraction > 1.0) {
        throw ConfigError("max_fraction must be in (0, 1]");
    }
    if (base.empty()) {
        throw UsageError("inject requires a non-empty base stream");
    }
    Rng rng(seed);
    std::vector<std::size_t> order(contaminated.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        order[i] = i;
    }
    rng.shuffle(std::span(order));
    const std::size_t keep = max_contaminated(base.size(), contaminated.size(), max_fraction);
    order.resize(keep);

    InjectedStream out;
    out.n_base = base.size();
    out.n_contaminated = keep;
    const std::size_t total = base.size() + keep;
    out.groups.reserve(total);
    // Selection sampling: each remaining slot is contaminated with probability
    // remaining_contaminated / remaining_slots.
    std::size_t bi = 0;
    std::size_t ci = 0;
    for (std::size_t slot = 0; slot < total; ++slot) {
        const std::size_t left = total - slot;
        const std::size_t c_left = keep - ci;
        if (c_left > 0 && rng.below(left) < c_left) {
            out.groups.push_back(contaminated[order[ci++]]);
        } else {
            out.groups.push_back(base[bi++]);
        }
    }
    out.achieved_fraction = static_cast<double>(keep) / static_cast<double>(total);
    return out;
}

}  // namespace contamlab
