#include <gtest/gtest.h>

#include <set>
#include <tuple>

#include "contamlab/contaminate.hpp"
#include "contamlab/error.hpp"
#include "contamlab/synthetic.hpp"

using namespace contamlab;

namespace {

std::vector<TrainingGroup> numbered_groups(std::size_t n, const std::string& prefix, GroupOrigin origin)
{
    std::vector<TrainingGroup> out;
    for (std::size_t i = 0; i < n; ++i) {
        out.push_back({{prefix + std::to_string(i), {"t"}}, "p", {"n"}, origin});
    }
    return out;
}

}  // namespace

TEST(Binarize, SplitsAtCutoff)
{
    TestCollection coll("c", {{"q1", {"a"}}},
                        Qrels{{{"q1", "d1", 3}, {"q1", "d2", 1}, {"q1", "d3", 0}, {"q1", "d4", 2}}, 3});
    auto b = binarize(coll, 2);
    EXPECT_EQ(b.positives, (std::vector<JudgedPair>{{"q1", "d1"}, {"q1", "d4"}}));
    EXPECT_EQ(b.hard_negatives, (std::vector<JudgedPair>{{"q1", "d2"}, {"q1", "d3"}}));
    EXPECT_THROW(binarize(coll, 0), UsageError);
    EXPECT_THROW(binarize(coll, 4), UsageError);
}

TEST(ContaminatedGroups, OnePerPositiveWithoutRelevantNegatives)
{
    auto data = generate_synthetic_collection(3, 40, 2, 12, 4);
    auto index = InvertedIndex::build(data.corpus);
    ContaminationSpec spec;
    spec.source_collection = "target";
    spec.group_size = 8;
    spec.seed = 3;
    auto groups = build_contaminated_groups(data.target, data.corpus, index, spec);
    EXPECT_EQ(groups.size(), binarize(data.target, 2).positives.size());
    for (std::size_t i = 0; i < groups.size(); ++i) {
        const auto& g = groups[i];
        EXPECT_EQ(g.origin, GroupOrigin::contaminated);
        EXPECT_EQ(g.group_size(), 8u);
        EXPECT_NO_THROW(validate_group(g));
        const auto& judged = data.target.judged(g.query.id);
        EXPECT_GE(judged.at(g.positive), 2);
        for (const auto& n : g.negatives) {
            auto it = judged.find(n);
            EXPECT_TRUE(it == judged.end() || it->second < 2) << n;
        }
        if (i > 0) {
            EXPECT_LE(std::tie(groups[i - 1].query.id, groups[i - 1].positive),
                      std::tie(g.query.id, g.positive));
        }
    }
    EXPECT_EQ(build_contaminated_groups(data.target, data.corpus, index, spec), groups);
}

TEST(ContaminatedGroups, JudgedNegativesComeFirst)
{
    auto data = generate_synthetic_collection(3, 40, 2, 12, 4);
    auto index = InvertedIndex::build(data.corpus);
    ContaminationSpec spec;
    spec.group_size = 2;
    for (const auto& g : build_contaminated_groups(data.target, data.corpus, index, spec)) {
        ASSERT_EQ(g.negatives.size(), 1u);
        EXPECT_EQ(data.target.judged(g.query.id).count(g.negatives[0]), 1u);
    }
}

TEST(ContaminatedGroups, BadGroupSizeRejected)
{
    auto data = generate_synthetic_collection(2, 20, 1, 10, 4);
    auto index = InvertedIndex::build(data.corpus);
    ContaminationSpec spec;
    spec.group_size = 1;
    EXPECT_THROW(build_contaminated_groups(data.target, data.corpus, index, spec), ConfigError);
}

TEST(Inject, CapsAtMaxFraction)
{
    auto base = numbered_groups(99900, "b", GroupOrigin::base);
    auto cont = numbered_groups(500, "c", GroupOrigin::contaminated);
    auto s = inject(base, cont, 0.001, 7);
    EXPECT_EQ(s.n_contaminated, 100u);
    EXPECT_EQ(s.groups.size(), 100000u);
    EXPECT_DOUBLE_EQ(s.achieved_fraction, 0.001);
    std::size_t counted = 0;
    std::size_t next_base = 0;
    for (const auto& g : s.groups) {
        if (g.origin == GroupOrigin::contaminated) {
            ++counted;
        } else {
            EXPECT_EQ(g.query.id, "b" + std::to_string(next_base++));
        }
    }
    EXPECT_EQ(counted, 100u);
    EXPECT_EQ(next_base, base.size());
}

TEST(Inject, FullFractionKeepsEverything)
{
    auto base = numbered_groups(50, "b", GroupOrigin::base);
    auto cont = numbered_groups(20, "c", GroupOrigin::contaminated);
    auto s = inject(base, cont, 1.0, 1);
    EXPECT_EQ(s.n_contaminated, 20u);
    EXPECT_EQ(s.groups.size(), 70u);
    std::set<std::string> seen;
    for (const auto& g : s.groups) {
        seen.insert(g.query.id);
    }
    EXPECT_EQ(seen.size(), 70u);
}

TEST(Inject, SeededAndValidated)
{
    auto base = numbered_groups(200, "b", GroupOrigin::base);
    auto cont = numbered_groups(30, "c", GroupOrigin::contaminated);
    EXPECT_EQ(inject(base, cont, 0.1, 5).groups, inject(base, cont, 0.1, 5).groups);
    EXPECT_NE(inject(base, cont, 0.1, 5).groups, inject(base, cont, 0.1, 6).groups);
    EXPECT_THROW(inject(base, cont, 0.0, 1), ConfigError);
    EXPECT_THROW(inject(base, cont, 1.5, 1), ConfigError);
    EXPECT_THROW(inject({}, cont, 0.5, 1), UsageError);
}

TEST(Inject, MaxContaminatedBoundary)
{
    EXPECT_EQ(max_contaminated(99900, 1000, 0.001), 100u);
    EXPECT_EQ(max_contaminated(99900, 40, 0.001), 40u);
    EXPECT_EQ(max_contaminated(10, 5, 0.5), 5u);
    EXPECT_EQ(max_contaminated(10, 20, 0.5), 10u);
    EXPECT_EQ(max_contaminated(3, 10, 0.2), 0u);
    for (std::size_t n = 1; n < 300; n += 7) {
        for (double f : {0.01, 0.1, 0.33}) {
            const std::size_t k = max_contaminated(n, 1000, f);
            EXPECT_LE(static_cast<double>(k) / static_cast<double>(n + k), f);
            EXPECT_GT(static_cast<double>(k + 1) / static_cast<double>(n + k + 1), f);
        }
    }
}
