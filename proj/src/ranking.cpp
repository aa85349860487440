#include "contamlab/ranking.hpp"

#include <algorithm>

#include "contamlab/error.hpp"
#include "contamlab/kernels.hpp"

namespace contamlab {

FeatureStore::FeatureStore(const Corpus& corpus, std::size_t dim, Exec exec) : dim_(dim)
{
    std::vector<const Tokens*> texts;
    texts.reserve(corpus.size());
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        texts.push_back(&corpus[i].tokens);
        by_id_.emplace(corpus[i].id, i);
    }
    features_ = kernels::featurize_batch(texts, dim, exec);
}

const FeatureVector& FeatureStore::doc(std::string_view id) const
{
    auto it = by_id_.find(std::string(id));
    if (it == by_id_.end()) {
        throw DataError("no text for document " + std::string(id));
    }
    return features_[it->second];
}

void sort_ranking(std::vector<RankedDoc>& docs)
{
    std::sort(docs.begin(), docs.end(), [](const RankedDoc& a, const RankedDoc& b) {
        return a.score != b.score ? a.score > b.score : a.doc_id < b.doc_id;
    });
}

Run bm25_run(const InvertedIndex& index, const std::vector<Query>& queries, std::size_t depth,
             std::string tag, Exec exec)
{
    std::vector<Tokens> texts;
    texts.reserve(queries.size());
    for (const auto& q : queries) {
        texts.push_back(q.tokens);
    }
    auto results = kernels::retrieve_batch(index, texts, depth, exec);
    Run run;
    run.tag = std::move(tag);
    for (std::size_t i = 0; i < queries.size(); ++i) {
        run.rankings[queries[i].id] = std::move(results[i]);
    }
    return run;
}

Run rerank(const ScorerParams& params, const Run& candidates, const std::vector<Query>& queries,
           const FeatureStore& store, std::string tag, Exec exec)
{
    if (store.dim() != params.dim()) {
        throw UsageError("feature store dimension does not match the scorer");
    }
    std::unordered_map<std::string, FeatureVector> qfeat;
    for (const auto& q : queries) {
        qfeat.emplace(q.id, featurize(q.tokens, params.dim()));
    }
    auto query_features = [&](const std::string& qid) -> const FeatureVector& {
        auto it = qfeat.find(qid);
        if (it == qfeat.end()) {
            throw DataError("no text for query " + qid);
        }
        return it->second;
    };

    Run run;
    run.tag = std::move(tag);
    if (params.architecture() == Architecture::joint) {
        std::vector<kernels::PairRef> pairs;
        for (const auto& [qid, docs] : candidates.rankings) {
            const FeatureVector& qf = query_features(qid);
            for (const auto& d : docs) {
                pairs.push_back({&qf, &store.doc(d.doc_id)});
            }
        }
        const auto scores = kernels::score_batch(params, pairs, exec);
        std::size_t next = 0;
        for (const auto& [qid, docs] : candidates.rankings) {
            auto& out = run.rankings[qid];
            for (const auto& d : docs) {
                out.push_back({d.doc_id, scores[next++]});
            }
            sort_ranking(out);
        }
        return run;
    }

    // Dual: cache encodings of every distinct document and query.
    std::vector<std::string> doc_ids;
    for (const auto& [_, docs] : candidates.rankings) {
        for (const auto& d : docs) {
            doc_ids.push_back(d.doc_id);
        }
    }
    std::sort(doc_ids.begin(), doc_ids.end());
    doc_ids.erase(std::unique(doc_ids.begin(), doc_ids.end()), doc_ids.end());
    std::vector<const FeatureVector*> inputs;
    for (const auto& id : doc_ids) {
        inputs.push_back(&store.doc(id));
    }
    std::vector<std::string> qids;
    for (const auto& [qid, _] : candidates.rankings) {
        qids.push_back(qid);
        inputs.push_back(&query_features(qid));
    }
    const auto enc = kernels::encode_batch(params, inputs, exec);
    std::unordered_map<std::string, std::size_t> doc_pos;
    for (std::size_t i = 0; i < doc_ids.size(); ++i) {
        doc_pos.emplace(doc_ids[i], i);
    }
    for (std::size_t qi = 0; qi < qids.size(); ++qi) {
        const auto& qe = enc[doc_ids.size() + qi];
        auto& out = run.rankings[qids[qi]];
        for (const auto& d : candidates.rankings.at(qids[qi])) {
            out.push_back({d.doc_id, embedding_dot(qe, enc[doc_pos.at(d.doc_id)])});
        }
        sort_ranking(out);
    }
    return run;
}

}  // namespace contamlab
