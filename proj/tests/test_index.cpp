#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "contamlab/error.hpp"
#include "contamlab/index.hpp"
#include "contamlab/kernels.hpp"
#include "contamlab/rng.hpp"
#include "contamlab/synthetic.hpp"
#include "oracles.hpp"

using namespace contamlab;

namespace {

Corpus corpus_of(std::vector<std::pair<std::string, std::string>> docs)
{
    Corpus c;
    for (auto& [id, text] : docs) {
        c.add({id, tokenize(text)});
    }
    return c;
}

std::vector<std::vector<std::string>> token_lists(const Corpus& c)
{
    std::vector<std::vector<std::string>> out;
    for (const auto& d : c.documents()) {
        out.push_back(d.tokens);
    }
    return out;
}

}  // namespace

TEST(Bm25, TwoDocumentHandValues)
{
    auto idx = InvertedIndex::build(corpus_of({{"d1", "a b"}, {"d2", "a a"}}));
    const double idf = std::log(1.2);
    EXPECT_NEAR(idx.score({"a"}, "d1"), idf * 1.0, 1e-12);
    EXPECT_NEAR(idx.score({"a"}, "d2"), idf * 1.375, 1e-12);
    auto top = idx.retrieve_topk({"a"}, 10);
    ASSERT_EQ(top.size(), 2u);
    EXPECT_EQ(top[0].doc_id, "d2");
    EXPECT_EQ(top[1].doc_id, "d1");
}

TEST(Bm25, SingleDocumentCorpus)
{
    auto idx = InvertedIndex::build(corpus_of({{"only", "a a b"}}));
    EXPECT_NEAR(idx.score({"a"}, "only"), std::log(4.0 / 3.0) * 1.375, 1e-12);
    EXPECT_EQ(idx.score({"zzz"}, "only"), 0.0);
}

TEST(Bm25, RepeatedQueryTokenCountsTwice)
{
    auto idx = InvertedIndex::build(corpus_of({{"d1", "a b"}, {"d2", "c"}}));
    EXPECT_NEAR(idx.score({"a", "a"}, "d1"), 2.0 * idx.score({"a"}, "d1"), 1e-15);
}

TEST(Bm25, DuplicateDocumentIdRejected)
{
    EXPECT_THROW(corpus_of({{"d1", "a"}, {"d1", "b"}}), ValidationError);
}

TEST(Bm25, EmptyCorpusRejected)
{
    EXPECT_THROW(InvertedIndex::build(Corpus{}), ConfigError);
}

TEST(Bm25, UnknownDocumentIsLookupError)
{
    auto idx = InvertedIndex::build(corpus_of({{"d1", "a"}}));
    EXPECT_THROW((void)idx.score({"a"}, "nope"), LookupError);
}

TEST(Bm25, TiesBrokenByDocId)
{
    auto idx = InvertedIndex::build(corpus_of({{"z", "a b"}, {"m", "a b"}, {"c", "a b"}}));
    auto top = idx.retrieve_topk({"a"}, 3);
    ASSERT_EQ(top.size(), 3u);
    EXPECT_EQ(top[0].doc_id, "c");
    EXPECT_EQ(top[1].doc_id, "m");
    EXPECT_EQ(top[2].doc_id, "z");
}

TEST(Bm25, MatchesReferenceOnSyntheticCorpus)
{
    auto data = generate_synthetic_collection(3, 30, 2, 12, 5);
    auto idx = InvertedIndex::build(data.corpus);
    auto docs = token_lists(data.corpus);
    for (const auto& q : data.target.queries()) {
        for (std::size_t i = 0; i < docs.size(); i += 7) {
            EXPECT_NEAR(idx.score(q.tokens, data.corpus[i].id), oracle::bm25(docs, i, q.tokens), 1e-9);
        }
    }
}

TEST(Bm25, TopkEqualsExhaustiveRanking)
{
    auto data = generate_synthetic_collection(3, 30, 2, 12, 6);
    auto idx = InvertedIndex::build(data.corpus);
    for (const auto& q : data.target.queries()) {
        std::vector<RankedDoc> all;
        for (const auto& d : data.corpus.documents()) {
            const double s = idx.score(q.tokens, d.id);
            if (s > 0.0) {
                all.push_back({d.id, s});
            }
        }
        std::sort(all.begin(), all.end(), [](const RankedDoc& a, const RankedDoc& b) {
            return a.score != b.score ? a.score > b.score : a.doc_id < b.doc_id;
        });
        for (std::size_t k : {1u, 10u, 1000u}) {
            auto top = idx.retrieve_topk(q.tokens, k);
            ASSERT_EQ(top.size(), std::min(k, all.size()));
            for (std::size_t i = 0; i < top.size(); ++i) {
                EXPECT_EQ(top[i].doc_id, all[i].doc_id);
                EXPECT_NEAR(top[i].score, all[i].score, 1e-12);
            }
        }
    }
}

TEST(Bm25, SaveLoadRoundTrip)
{
    auto data = generate_synthetic_collection(2, 20, 1, 10, 9);
    auto idx = InvertedIndex::build(data.corpus, 0.9, 0.4);
    std::stringstream io;
    idx.save(io);
    auto back = InvertedIndex::load(io);
    EXPECT_TRUE(back == idx);
    EXPECT_EQ(back.k1(), 0.9);
    EXPECT_EQ(back.b(), 0.4);
}

TEST(Bm25, CorruptIndexRejected)
{
    std::stringstream io("not an index");
    EXPECT_THROW(InvertedIndex::load(io), Error);
}

TEST(Bm25, BatchRetrievalMatchesSerial)
{
    auto data = generate_synthetic_collection(4, 40, 3, 12, 2);
    auto idx = InvertedIndex::build(data.corpus);
    std::vector<Tokens> qs;
    for (const auto& q : data.train_queries) {
        qs.push_back(q.tokens);
    }
    auto a = kernels::retrieve_batch(idx, qs, 50, Exec::serial);
    auto b = kernels::retrieve_batch(idx, qs, 50, Exec::parallel);
    EXPECT_EQ(a, b);
}
