#include "contamlab/index.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>

#include "contamlab/binary_io.hpp"
#include "contamlab/error.hpp"

namespace contamlab {

namespace {

constexpr char kMagic[9] = "CLABIDX1";
constexpr std::uint32_t kVersion = 1;

}  // namespace

InvertedIndex InvertedIndex::build(const Corpus& corpus, double k1, double b)
{
    if (corpus.empty()) {
        throw ConfigError("cannot index an empty corpus");
    }
    if (!(k1 >= 0.0) || !(b >= 0.0 && b <= 1.0)) {
        throw ConfigError("BM25 requires k1 >= 0 and b in [0, 1]");
    }
    InvertedIndex index;
    index.k1_ = k1;
    index.b_ = b;

    std::vector<const Document*> docs;
    docs.reserve(corpus.size());
    for (const auto& d : corpus.documents()) {
        docs.push_back(&d);
    }
    std::sort(docs.begin(), docs.end(), [](auto* x, auto* y) { return x->id < y->id; });

    std::uint64_t total = 0;
    for (std::uint32_t ord = 0; ord < docs.size(); ++ord) {
        const Document& d = *docs[ord];
        index.doc_ids_.push_back(d.id);
        index.ordinals_.emplace(d.id, ord);
        index.doc_lengths_.push_back(static_cast<std::uint32_t>(d.tokens.size()));
        total += d.tokens.size();

        std::map<std::string_view, std::uint32_t> tf;
        for (const auto& t : d.tokens) {
            ++tf[t];
        }
        for (const auto& [term, count] : tf) {
            index.postings_[std::string(term)].push_back({ord, count});
        }
    }
    index.avg_len_ = static_cast<double>(total) / static_cast<double>(docs.size());
    return index;
}

std::uint32_t InvertedIndex::ordinal(std::string_view doc_id) const
{
    auto it = ordinals_.find(std::string(doc_id));
    if (it == ordinals_.end()) {
        throw LookupError("document " + std::string(doc_id) + " is not indexed");
    }
    return it->second;
}

std::span<const Posting> InvertedIndex::postings(std::string_view term) const
{
    auto it = postings_.find(std::string(term));
    if (it == postings_.end()) {
        return {};
    }
    return it->second;
}

double InvertedIndex::idf(std::string_view term) const
{
    const auto df = static_cast<double>(postings(term).size());
    const auto n = static_cast<double>(n_docs());
    return std::log((n - df + 0.5) / (df + 0.5) + 1.0);
}

double InvertedIndex::term_weight(double idf, std::uint32_t tf, std::uint32_t ordinal) const
{
    const double f = tf;
    const double norm = 1.0 - b_ + b_ * static_cast<double>(doc_lengths_[ordinal]) / avg_len_;
    return idf * f * (k1_ + 1.0) / (f + k1_ * norm);
}

double InvertedIndex::score(const Tokens& query, std::string_view doc_id) const
{
    return score(query, ordinal(doc_id));
}

double InvertedIndex::score(const Tokens& query, std::uint32_t ordinal) const
{
    double total = 0.0;
    for (const auto& term : query) {
        auto plist = postings(term);
        auto it = std::lower_bound(plist.begin(), plist.end(), ordinal,
                                   [](const Posting& p, std::uint32_t o) { return p.doc < o; });
        if (it != plist.end() && it->doc == ordinal) {
            total += term_weight(idf(term), it->tf, ordinal);
        }
    }
    return total;
}

std::vector<RankedDoc> InvertedIndex::retrieve_topk(const Tokens& query, std::size_t k) const
{
    std::vector<double> acc;
    return retrieve_topk(query, k, acc);
}

std::vector<RankedDoc> InvertedIndex::retrieve_topk(const Tokens& query, std::size_t k,
                                                    std::vector<double>& acc) const
{
    if (k == 0) {
        throw UsageError("retrieve_topk requires k >= 1");
    }
    acc.assign(n_docs(), 0.0);
    std::vector<std::uint32_t> touched;
    for (const auto& term : query) {
        auto plist = postings(term);
        if (plist.empty()) {
            continue;
        }
        const double w = idf(term);
        for (const Posting& p : plist) {
            if (acc[p.doc] == 0.0) {
                touched.push_back(p.doc);
            }
            acc[p.doc] += term_weight(w, p.tf, p.doc);
        }
    }
    std::sort(touched.begin(), touched.end());
    touched.erase(std::unique(touched.begin(), touched.end()), touched.end());
    std::erase_if(touched, [&](std::uint32_t d) { return !(acc[d] > 0.0); });

    auto better = [&](std::uint32_t x, std::uint32_t y) {
        return acc[x] != acc[y] ? acc[x] > acc[y] : x < y;
    };
    const std::size_t n = std::min(k, touched.size());
    std::partial_sort(touched.begin(), touched.begin() + static_cast<std::ptrdiff_t>(n),
                      touched.end(), better);
    std::vector<RankedDoc> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        out.push_back({doc_ids_[touched[i]], acc[touched[i]]});
    }
    return out;
}

void InvertedIndex::save(std::ostream& out) const
{
    binio::put_magic(out, kMagic);
    binio::put<std::uint32_t>(out, kVersion);
    binio::put<double>(out, k1_);
    binio::put<double>(out, b_);
    binio::put<std::uint64_t>(out, doc_ids_.size());
    for (std::size_t i = 0; i < doc_ids_.size(); ++i) {
        binio::put_string(out, doc_ids_[i]);
        binio::put<std::uint32_t>(out, doc_lengths_[i]);
    }
    std::vector<const std::string*> terms;
    terms.reserve(postings_.size());
    for (const auto& [term, _] : postings_) {
        terms.push_back(&term);
    }
    std::sort(terms.begin(), terms.end(), [](auto* x, auto* y) { return *x < *y; });
    binio::put<std::uint64_t>(out, terms.size());
    for (const std::string* term : terms) {
        const auto& plist = postings_.at(*term);
        binio::put_string(out, *term);
        binio::put<std::uint64_t>(out, plist.size());
        for (const auto& p : plist) {
            binio::put<std::uint32_t>(out, p.doc);
            binio::put<std::uint32_t>(out, p.tf);
        }
    }
}

InvertedIndex InvertedIndex::load(std::istream& in)
{
    binio::expect_magic(in, kMagic, "contamlab index");
    auto version = binio::get<std::uint32_t>(in);
    if (version != kVersion) {
        throw DataError("unsupported index version " + std::to_string(version));
    }
    InvertedIndex index;
    index.k1_ = binio::get<double>(in);
    index.b_ = binio::get<double>(in);
    auto n_docs = binio::get<std::uint64_t>(in);
    if (n_docs == 0 || n_docs > UINT32_MAX) {
        throw DataError("index document count out of range");
    }
    std::uint64_t total = 0;
    for (std::uint64_t i = 0; i < n_docs; ++i) {
        auto id = binio::get_string(in);
        auto len = binio::get<std::uint32_t>(in);
        if (!index.doc_ids_.empty() && !(index.doc_ids_.back() < id)) {
            throw DataError("index document ids are not strictly ascending");
        }
        index.ordinals_.emplace(id, static_cast<std::uint32_t>(i));
        index.doc_ids_.push_back(std::move(id));
        index.doc_lengths_.push_back(len);
        total += len;
    }
    index.avg_len_ = static_cast<double>(total) / static_cast<double>(n_docs);
    auto n_terms = binio::get<std::uint64_t>(in);
    for (std::uint64_t t = 0; t < n_terms; ++t) {
        auto term = binio::get_string(in);
        auto n = binio::get<std::uint64_t>(in);
        if (n > n_docs) {
            throw DataError("posting list longer than the document count");
        }
        std::vector<Posting> plist(n);
        for (auto& p : plist) {
            p.doc = binio::get<std::uint32_t>(in);
            p.tf = binio::get<std::uint32_t>(in);
            if (p.doc >= n_docs) {
                throw DataError("posting references an unknown document");
            }
        }
        index.postings_.emplace(std::move(term), std::move(plist));
    }
    return index;
}

void InvertedIndex::save_file(const std::string& path) const
{
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError("cannot write " + path);
    }
    save(out);
}

InvertedIndex InvertedIndex::load_file(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open " + path);
    }
    return load(in);
}

bool InvertedIndex::operator==(const InvertedIndex& other) const
{
    return k1_ == other.k1_ && b_ == other.b_ && avg_len_ == other.avg_len_ &&
           doc_ids_ == other.doc_ids_ && doc_lengths_ == other.doc_lengths_ &&
           postings_ == other.postings_;
}

}  // namespace contamlab
