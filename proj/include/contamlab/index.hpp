#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "contamlab/collection.hpp"

namespace contamlab {

struct Posting {
    std::uint32_t doc = 0;  // ordinal, see InvertedIndex::doc_id
    std::uint32_t tf = 0;

    bool operator==(const Posting&) const = default;
};

/// In-memory BM25 index.
///
/// Document ordinals follow ascending doc_id order, so postings sorted by
/// ordinal are also sorted by doc_id and ordinal ties resolve like doc_id
/// ties. Scoring uses
///
///   sum_t idf(t) * tf * (k1 + 1) / (tf + k1 * (1 - b + b * len / avglen))
///   idf(t) = ln((N - df + 0.5) / (df + 0.5) + 1)
///
/// summed over query tokens in order; a repeated query token counts twice.
class InvertedIndex {
  public:
    static constexpr double kDefaultK1 = 1.2;
    static constexpr double kDefaultB = 0.75;

    // Throws ConfigError for an empty corpus.
    static InvertedIndex build(const Corpus& corpus, double k1 = kDefaultK1, double b = kDefaultB);

    [[nodiscard]] double k1() const noexcept { return k1_; }
    [[nodiscard]] double b() const noexcept { return b_; }
    [[nodiscard]] std::size_t n_docs() const noexcept { return doc_ids_.size(); }
    [[nodiscard]] double avg_doc_length() const noexcept { return avg_len_; }

    [[nodiscard]] const std::string& doc_id(std::uint32_t ordinal) const { return doc_ids_[ordinal]; }
    [[nodiscard]] std::uint32_t ordinal(std::string_view doc_id) const;  // LookupError if absent
    [[nodiscard]] std::uint32_t doc_length(std::uint32_t ordinal) const { return doc_lengths_[ordinal]; }
    [[nodiscard]] std::span<const Posting> postings(std::string_view term) const;
    [[nodiscard]] std::size_t n_terms() const noexcept { return postings_.size(); }

    [[nodiscard]] double idf(std::string_view term) const;

    [[nodiscard]] double score(const Tokens& query, std::string_view doc_id) const;
    [[nodiscard]] double score(const Tokens& query, std::uint32_t ordinal) const;

    /// Top-k documents with score > 0, descending score, ties by ascending doc_id.
    [[nodiscard]] std::vector<RankedDoc> retrieve_topk(const Tokens& query, std::size_t k) const;

    // Accumulator-reusing variant for batch retrieval; `acc` is resized as needed.
    [[nodiscard]] std::vector<RankedDoc> retrieve_topk(const Tokens& query, std::size_t k,
                                                       std::vector<double>& acc) const;

    void save(std::ostream& out) const;
    static InvertedIndex load(std::istream& in);
    void save_file(const std::string& path) const;
    static InvertedIndex load_file(const std::string& path);

    bool operator==(const InvertedIndex& other) const;

  private:
    [[nodiscard]] double term_weight(double idf, std::uint32_t tf, std::uint32_t ordinal) const;

    double k1_ = kDefaultK1;
    double b_ = kDefaultB;
    double avg_len_ = 0.0;
    std::vector<std::string> doc_ids_;
    std::vector<std::uint32_t> doc_lengths_;
    std::unordered_map<std::string, std::uint32_t> ordinals_;
    std::unordered_map<std::string, std::vector<Posting>> postings_;
};

}  // namespace contamlab
