#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "contamlab/collection.hpp"
#include "contamlab/index.hpp"
#include "contamlab/model.hpp"
#include "contamlab/parallel.hpp"

namespace contamlab {

/// Hashed features of every corpus document, computed once per dimension.
class FeatureStore {
  public:
    FeatureStore(const Corpus& corpus, std::size_t dim, Exec exec = Exec::parallel);

    [[nodiscard]] std::size_t dim() const noexcept { return dim_; }
    // Throws DataError for documents outside the corpus.
    [[nodiscard]] const FeatureVector& doc(std::string_view id) const;

  private:
    std::size_t dim_;
    std::vector<FeatureVector> features_;
    std::unordered_map<std::string, std::size_t> by_id_;
};

// BM25 first-stage run to `depth`.
Run bm25_run(const InvertedIndex& index, const std::vector<Query>& queries, std::size_t depth,
             std::string tag = "bm25", Exec exec = Exec::parallel);

/// Re-scores every candidate of `candidates` with the model and re-sorts by
/// descending score, ties by ascending doc_id. Dual scorers encode each
/// distinct document once and score by dot product.
Run rerank(const ScorerParams& params, const Run& candidates, const std::vector<Query>& queries,
           const FeatureStore& store, std::string tag, Exec exec = Exec::parallel);

// Sorts by descending score, ties by ascending doc_id.
void sort_ranking(std::vector<RankedDoc>& docs);

}  // namespace contamlab
