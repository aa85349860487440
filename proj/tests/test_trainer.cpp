#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include "contamlab/error.hpp"
#include "contamlab/metrics.hpp"
#include "contamlab/ranking.hpp"
#include "contamlab/rng.hpp"
#include "contamlab/synthetic.hpp"
#include "contamlab/trainer.hpp"

using namespace contamlab;

namespace {

constexpr std::size_t kDim = 1024;
constexpr std::size_t kHidden = 32;

SyntheticConfig small_config()
{
    SyntheticConfig c;
    c.n_topics = 6;
    c.docs_per_topic = 80;
    c.queries_per_topic = 2;
    c.train_queries_per_topic = 12;
    c.vocab_per_topic = 24;
    c.background_vocab = 300;
    c.focused_per_query = 4;
    c.hard_negative_rate = 0.8;
    c.seed = 3;
    return c;
}

TrainConfig small_train(double lr, LossKind loss = LossKind::lce)
{
    TrainConfig t;
    t.base_lr = lr;
    t.dim = kDim;
    t.hidden = kHidden;
    t.loss_kind = loss;
    t.seed = 1;
    return t;
}

struct Fixture {
    SyntheticData data;
    FeatureStore store;
    InvertedIndex index;

    explicit Fixture(const SyntheticConfig& c)
        : data(generate_synthetic(c)), store(data.corpus, kDim), index(InvertedIndex::build(data.corpus))
    {}
};

const Fixture& shared()
{
    static const Fixture f = [] {
        auto c = small_config();
        c.base_groups = 6400;
        return Fixture(c);
    }();
    return f;
}

const ScorerParams& shared_teacher()
{
    static const ScorerParams p =
        train_teacher(shared().data.base_groups, small_train(1e-3), shared().store).params;
    return p;
}

}  // namespace

TEST(Trainer, PlannedSteps)
{
    TrainConfig c;
    c.batch_queries = 32;
    EXPECT_EQ(planned_steps(64, c), 2u);
    EXPECT_EQ(planned_steps(65, c), 3u);
    c.total_steps = 10;
    EXPECT_EQ(planned_steps(1000, c), 10u);
}

TEST(Trainer, ConfigValidation)
{
    TrainConfig c;
    c.total_steps = 5;
    EXPECT_THROW(c.validate(), ConfigError);
    c = TrainConfig{};
    c.group_size = 1;
    EXPECT_THROW(c.validate(), ConfigError);
    c = TrainConfig{};
    c.warmup_fraction = 0.0;
    EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Trainer, TeacherLossDropsOnHeldOutBatch)
{
    auto c = small_config();
    c.base_groups = 200 * 32 + 64;
    Fixture f(c);
    std::span<const TrainingGroup> all(f.data.base_groups);
    auto train = all.first(200 * 32);
    auto held = all.last(64);
    auto cfg = small_train(1e-3);
    auto init = ScorerParams::init(Architecture::joint, kDim, kHidden, 5);
    const double before = mean_group_loss(init, held, f.store);
    auto result = train_teacher(train, cfg, f.store, &init);
    EXPECT_EQ(result.log.size(), 200u);
    EXPECT_LT(mean_group_loss(result.params, held, f.store), before);
}

TEST(Trainer, TeacherIsDeterministicAcrossExecModes)
{
    std::span<const TrainingGroup> stream(shared().data.base_groups);
    auto cfg = small_train(1e-3);
    cfg.total_steps = 20;
    cfg.exec = Exec::serial;
    auto a = train_teacher(stream, cfg, shared().store);
    cfg.exec = Exec::parallel;
    auto b = train_teacher(stream, cfg, shared().store);
    EXPECT_EQ(a.params, b.params);
    ASSERT_EQ(a.log.size(), b.log.size());
    for (std::size_t i = 0; i < a.log.size(); ++i) {
        EXPECT_EQ(a.log[i].loss, b.log[i].loss);
    }
}

TEST(Trainer, TeacherRejectsMismatchedStore)
{
    auto cfg = small_train(1e-3);
    cfg.dim = 512;
    EXPECT_THROW(train_teacher(shared().data.base_groups, cfg, shared().store), ConfigError);
}

TEST(Labels, ScoresMatchTeacher)
{
    std::span<const TrainingGroup> groups(shared().data.base_groups);
    auto labeled = label_pairs(shared_teacher(), groups.first(50), shared().store, "t");
    ASSERT_EQ(labeled.size(), 50u);
    for (std::size_t i = 0; i < labeled.size(); ++i) {
        const auto& g = groups[i];
        ASSERT_EQ(labeled[i].docs.front(), g.positive);
        const auto qf = featurize(g.query.tokens, kDim);
        EXPECT_EQ(labeled[i].labels.labels[0], joint_score(shared_teacher(), qf, shared().store.doc(g.positive)));
        EXPECT_EQ(labeled[i].labels.teacher_tag, "t");
        EXPECT_FALSE(labeled[i].teacher_ordered);
    }
}

TEST(Labels, FileRoundTrip)
{
    std::span<const TrainingGroup> groups(shared().data.base_groups);
    auto labeled = label_pairs(shared_teacher(), groups.first(20), shared().store, "teacher-clean");
    std::unordered_map<std::string, Query> queries;
    for (const auto& q : shared().data.train_queries) {
        queries.emplace(q.id, q);
    }
    std::stringstream io;
    write_teacher_groups(io, labeled);
    EXPECT_EQ(parse_teacher_groups(io, queries), labeled);

    std::istringstream bad("q\td1,d2\t1.0\tt\tlabeled\n");
    EXPECT_THROW(parse_teacher_groups(bad, queries), Error);
}

TEST(RankNetSampler, FullDepthGroupIsTeacherTopK)
{
    const auto& q = shared().data.train_queries[0];
    std::vector<Query> qs{q};
    auto s = sample_ranknet_groups(shared_teacher(), shared().index, qs, 6, 6, 1, shared().store, "t");
    ASSERT_EQ(s.groups.size(), 1u);
    auto top = shared().index.retrieve_topk(q.tokens, 6);
    const auto qf = featurize(q.tokens, kDim);
    for (auto& d : top) {
        d.score = joint_score(shared_teacher(), qf, shared().store.doc(d.doc_id));
    }
    sort_ranking(top);
    std::vector<std::string> expect;
    for (const auto& d : top) {
        expect.push_back(d.doc_id);
    }
    EXPECT_EQ(s.groups[0].docs, expect);
    EXPECT_TRUE(s.groups[0].teacher_ordered);
}

TEST(RankNetSampler, PairsCoverTopKAndStayOrdered)
{
    const auto& q = shared().data.train_queries[1];
    std::vector<Query> qs(1000, q);
    auto s = sample_ranknet_groups(shared_teacher(), shared().index, qs, 10, 2, 7, shared().store, "t");
    ASSERT_EQ(s.groups.size(), 1000u);
    std::set<std::pair<std::string, std::string>> pairs;
    for (const auto& g : s.groups) {
        ASSERT_EQ(g.docs.size(), 2u);
        EXPECT_GE(g.labels.labels[0], g.labels.labels[1]);
        pairs.insert({std::min(g.docs[0], g.docs[1]), std::max(g.docs[0], g.docs[1])});
    }
    EXPECT_EQ(pairs.size(), 45u);
}

TEST(RankNetSampler, ShortRetrievalIsSkipped)
{
    std::vector<Query> qs{{"nohit", {"zzzz"}}};
    auto s = sample_ranknet_groups(shared_teacher(), shared().index, qs, 10, 2, 7, shared().store, "t");
    EXPECT_TRUE(s.groups.empty());
    EXPECT_EQ(s.skipped, 1u);
    EXPECT_THROW(sample_ranknet_groups(shared_teacher(), shared().index, qs, 1, 2, 7, shared().store, "t"),
                 UsageError);
}

TEST(Distill, TeacherInitializedStudentStartsAtZeroLoss)
{
    std::span<const TrainingGroup> groups(shared().data.base_groups);
    auto labeled = label_pairs(shared_teacher(), groups.first(320), shared().store, "t");
    for (auto loss : {LossKind::margin_mse, LossKind::kl_div}) {
        auto cfg = small_train(1e-3, loss);
        auto r = distill(Architecture::joint, shared_teacher(), labeled, cfg, shared().store, true);
        ASSERT_FALSE(r.log.empty());
        EXPECT_EQ(r.log.front().loss, 0.0) << to_string(loss);
    }
}

TEST(Distill, RejectsBadStreams)
{
    std::span<const TrainingGroup> groups(shared().data.base_groups);
    auto labeled = label_pairs(shared_teacher(), groups.first(32), shared().store, "t");
    auto cfg = small_train(1e-3, LossKind::ranknet);
    EXPECT_THROW(distill(Architecture::dual, shared_teacher(), labeled, cfg, shared().store), ConfigError);
    cfg.loss_kind = LossKind::margin_mse;
    cfg.group_size = 8;
    EXPECT_THROW(distill(Architecture::dual, shared_teacher(), labeled, cfg, shared().store), ConfigError);
    cfg.group_size = 2;
    EXPECT_THROW(distill(Architecture::dual, shared_teacher(), labeled, cfg, shared().store, true), UsageError);
}

TEST(Distill, DualStudentBeatsUntrainedOnValidationQueries)
{
    // Validation queries are training-distribution queries. Their groups, and
    // any group touching one of their relevant docs, are withheld from both
    // teacher and student.
    const auto& f = shared();
    std::set<std::string> held;
    std::vector<Query> val;
    for (std::size_t i = 0; i < f.data.train_queries.size(); i += 6) {
        held.insert(f.data.train_queries[i].id);
        val.push_back(f.data.train_queries[i]);
    }
    Qrels qrels;
    qrels.grade_max = 3;
    std::set<std::pair<std::string, std::string>> judged;
    std::set<std::string> relevant;
    for (const auto& g : f.data.base_groups) {
        if (held.count(g.query.id) && judged.insert({g.query.id, g.positive}).second) {
            qrels.judgments.push_back({g.query.id, g.positive, 3});
            relevant.insert(g.positive);
        }
    }
    std::vector<TrainingGroup> stream;
    for (const auto& g : f.data.base_groups) {
        bool touches = held.count(g.query.id) || relevant.count(g.positive);
        for (const auto& n : g.negatives) {
            touches = touches || relevant.count(n);
        }
        if (!touches) {
            stream.push_back(g);
        }
    }
    TestCollection validation("validation", val, qrels);
    auto teacher = train_teacher(stream, small_train(1e-3), f.store).params;
    auto labeled = label_pairs(teacher, stream, f.store, "t");
    auto cfg = small_train(1e-2, LossKind::margin_mse);
    auto student = distill(Architecture::dual, teacher, labeled, cfg, f.store).params;
    auto untrained = ScorerParams::init(Architecture::dual, kDim, kHidden, derive_seed(cfg.seed, "init"));

    auto candidates = bm25_run(f.index, val, 100);
    const double trained_ndcg =
        evaluate_run(rerank(student, candidates, val, f.store, "s"), validation).ndcg.aggregate;
    const double untrained_ndcg =
        evaluate_run(rerank(untrained, candidates, val, f.store, "u"), validation).ndcg.aggregate;
    EXPECT_GT(trained_ndcg, untrained_ndcg);
}
