#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "contamlab/collection.hpp"
#include "contamlab/index.hpp"
#include "contamlab/model.hpp"
#include "contamlab/optim.hpp"
#include "contamlab/parallel.hpp"

// Hot loops of the pipeline. Each kernel has an Exec::serial reference path
// that the tests compare against bit-for-bit and the benchmark times.
namespace contamlab::kernels {

// Elementwise AdamW update for 1-based step t.
void adamw_update(std::span<double> params, std::span<const double> grads, std::span<double> m,
                  std::span<double> v, const AdamWConfig& config, std::uint64_t t, double lr,
                  Exec exec = Exec::parallel);

// BM25 top-k for many queries.
std::vector<std::vector<RankedDoc>> retrieve_batch(const InvertedIndex& index,
                                                   std::span<const Tokens> queries, std::size_t k,
                                                   Exec exec = Exec::parallel);

// Dual-tower encodings of many inputs.
std::vector<std::vector<double>> encode_batch(const ScorerParams& params,
                                              std::span<const FeatureVector* const> inputs,
                                              Exec exec = Exec::parallel);

// Scores (query, doc) pairs; pairs[i] = {query feature, doc feature}.
struct PairRef {
    const FeatureVector* query = nullptr;
    const FeatureVector* doc = nullptr;
};
std::vector<double> score_batch(const ScorerParams& params, std::span<const PairRef> pairs,
                                Exec exec = Exec::parallel);

// Featurizes many token sequences.
std::vector<FeatureVector> featurize_batch(std::span<const Tokens* const> texts, std::size_t dim,
                                           Exec exec = Exec::parallel);

}  // namespace contamlab::kernels
