#include "contamlab/trainer.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <functional>
#include <istream>
#include <ostream>
#include <unordered_map>

#include "contamlab/error.hpp"
#include "contamlab/kernels.hpp"
#include "contamlab/rng.hpp"

namespace contamlab {

namespace {

struct Example {
    const Query* query = nullptr;
    std::vector<const FeatureVector*> docs;
    std::span<const double> labels;
    const std::string* first_doc = nullptr;  // for error messages
};

using GroupLoss = std::function<LossResult(std::span<const double> scores, const Example&)>;

class QueryFeatures {
  public:
    explicit QueryFeatures(std::size_t dim) : dim_(dim) {}

    const FeatureVector& get(const Query& q)
    {
        auto it = cache_.find(q.id);
        if (it == cache_.end()) {
            it = cache_.emplace(q.id, featurize(q.tokens, dim_)).first;
        }
        return it->second;
    }

  private:
    std::size_t dim_;
    std::unordered_map<std::string, FeatureVector> cache_;
};

struct GroupWork {
    double loss = 0.0;
    SparseGrad grad;
};

void group_forward_backward(const ScorerParams& params, const FeatureVector& qf, const Example& ex,
                            const GroupLoss& loss_fn, GroupWork& out)
{
    std::vector<double> scores(ex.docs.size());
    std::vector<SparseGrad> grads(ex.docs.size());
    for (std::size_t i = 0; i < ex.docs.size(); ++i) {
        scores[i] = score(params, qf, *ex.docs[i], &grads[i]);
    }
    const LossResult lr = loss_fn(scores, ex);
    out.loss = lr.loss;
    out.grad.rows.clear();
    out.grad.row_values.clear();
    out.grad.tail.clear();
    for (std::size_t i = 0; i < ex.docs.size(); ++i) {
        out.grad.append(grads[i], lr.grad[i]);
    }
}

TrainResult run_training(ScorerParams params, const std::vector<Example>& examples,
                         const TrainConfig& config, const GroupLoss& loss_fn)
{
    TrainResult result;
    const std::uint64_t steps = planned_steps(examples.size(), config);
    const std::uint64_t schedule_total = std::max<std::uint64_t>(steps, 10);
    const ParamLayout& layout = params.layout();

    QueryFeatures qcache(params.dim());
    std::vector<const FeatureVector*> qfeat(examples.size());
    for (std::size_t i = 0; i < examples.size(); ++i) {
        qfeat[i] = &qcache.get(*examples[i].query);
    }

    OptimizerState opt = OptimizerState::for_params(params.size(), config.adamw);
    std::vector<double> dense(params.size(), 0.0);
    std::vector<GroupWork> work(config.batch_queries);
    for (std::uint64_t step = 0; step < steps; ++step) {
        const std::size_t begin = step * config.batch_queries;
        const std::size_t end = std::min(begin + config.batch_queries, examples.size());
        const std::size_t n = end - begin;

        for_each_index(n, config.exec, [&](std::size_t i) {
            group_forward_backward(params, *qfeat[begin + i], examples[begin + i], loss_fn, work[i]);
        });

        std::fill(dense.begin(), dense.end(), 0.0);
        double loss_sum = 0.0;
        const double scale = 1.0 / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) {
            if (!std::isfinite(work[i].loss)) {
                const Example& ex = examples[begin + i];
                throw TrainingError(step, "non-finite loss for group " + std::to_string(begin + i) +
                                              " (query " + ex.query->id + ", first document " +
                                              *ex.first_doc + ")");
            }
            loss_sum += work[i].loss;
            work[i].grad.add_to(dense, layout, scale);
        }
        const double lr = lr_at(step, schedule_total, config.base_lr, config.warmup_fraction);
        result.log.push_back({step, lr, loss_sum * scale});
        adamw_step(params, dense, opt, lr);
    }
    result.params = std::move(params);
    return result;
}

std::vector<Example> examples_from_groups(std::span<const TrainingGroup> groups,
                                          const FeatureStore& store)
{
    std::vector<Example> out;
    out.reserve(groups.size());
    for (const auto& g : groups) {
        Example ex;
        ex.query = &g.query;
        ex.first_doc = &g.positive;
        ex.docs.push_back(&store.doc(g.positive));
        for (const auto& n : g.negatives) {
            ex.docs.push_back(&store.doc(n));
        }
        out.push_back(std::move(ex));
    }
    return out;
}

}  // namespace

void TrainConfig::validate() const
{
    if (batch_queries < 1) {
        throw ConfigError("batch_queries must be >= 1");
    }
    if (!(warmup_fraction > 0.0 && warmup_fraction < 1.0)) {
        throw ConfigError("warmup_fraction must be in (0, 1)");
    }
    if (total_steps != 0 && total_steps < 10) {
        throw ConfigError("total_steps must be >= 10 (or 0 for one pass)");
    }
    if (group_size < 2) {
        throw ConfigError("group_size must be >= 2");
    }
    if (!(base_lr >= 0.0)) {
        throw ConfigError("base_lr must be >= 0");
    }
    if (!(temperature > 0.0)) {
        throw ConfigError("temperature must be > 0");
    }
}

void write_train_log(std::ostream& out, const std::vector<TrainLogRow>& log)
{
    out << "step,lr,loss\n";
    for (const auto& r : log) {
        out << r.step << ',' << format_double(r.lr) << ',' << format_double(r.loss) << '\n';
    }
}

namespace {

std::vector<std::string_view> split_fields(std::string_view line, char sep)
{
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        auto pos = line.find(sep, start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
}

}  // namespace

void write_teacher_groups(std::ostream& out, const std::vector<TeacherGroup>& groups)
{
    for (const auto& g : groups) {
        out << g.query.id << '\t';
        for (std::size_t i = 0; i < g.docs.size(); ++i) {
            out << (i > 0 ? "," : "") << g.docs[i];
        }
        out << '\t';
        for (std::size_t i = 0; i < g.labels.labels.size(); ++i) {
            out << (i > 0 ? "," : "") << format_double(g.labels.labels[i]);
        }
        out << '\t' << g.labels.teacher_tag << '\t' << (g.teacher_ordered ? "ranked" : "labeled")
            << '\n';
    }
}

std::vector<TeacherGroup> parse_teacher_groups(
    std::istream& in, const std::unordered_map<std::string, Query>& queries)
{
    std::vector<TeacherGroup> groups;
    std::string raw;
    std::size_t lineno = 0;
    while (std::getline(in, raw)) {
        ++lineno;
        std::string_view line = raw;
        if (!line.empty() && line.back() == '\r') {
            line.remove_suffix(1);
        }
        if (line.empty()) {
            continue;
        }
        auto fields = split_fields(line, '\t');
        if (fields.size() != 5) {
            throw ParseError(lineno, "expected 5 tab-separated fields");
        }
        auto q = queries.find(std::string(fields[0]));
        if (q == queries.end()) {
            throw DataError("line " + std::to_string(lineno) + ": unknown query " +
                            std::string(fields[0]));
        }
        TeacherGroup g;
        g.query = q->second;
        for (auto d : split_fields(fields[1], ',')) {
            if (d.empty()) {
                throw ParseError(lineno, "empty document id");
            }
            g.docs.emplace_back(d);
        }
        for (auto v : split_fields(fields[2], ',')) {
            double y = 0.0;
            auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), y);
            if (ec != std::errc() || ptr != v.data() + v.size() || !std::isfinite(y)) {
                throw ParseError(lineno, "bad teacher score '" + std::string(v) + "'");
            }
            g.labels.labels.push_back(y);
        }
        if (g.labels.labels.size() != g.docs.size()) {
            throw ParseError(lineno, "score count does not match document count");
        }
        g.labels.teacher_tag = std::string(fields[3]);
        if (fields[4] == "ranked") {
            g.teacher_ordered = true;
        } else if (fields[4] != "labeled") {
            throw ParseError(lineno, "order must be 'labeled' or 'ranked'");
        }
        groups.push_back(std::move(g));
    }
    return groups;
}

std::uint64_t planned_steps(std::size_t n_groups, const TrainConfig& config)
{
    const std::uint64_t batches = (n_groups + config.batch_queries - 1) / config.batch_queries;
    return config.total_steps == 0 ? batches : std::min<std::uint64_t>(batches, config.total_steps);
}

TrainResult train_teacher(std::span<const TrainingGroup> stream, const TrainConfig& config,
                          const FeatureStore& store, const ScorerParams* init)
{
    config.validate();
    if (config.loss_kind != LossKind::lce) {
        throw ConfigError("teachers are trained with the lce loss");
    }
    if (store.dim() != config.dim) {
        throw ConfigError("feature store dimension does not match the training config");
    }
    for (const auto& g : stream) {
        if (g.group_size() != config.group_size) {
            throw ConfigError("group for query " + g.query.id + " has size " +
                              std::to_string(g.group_size()) + ", expected " +
                              std::to_string(config.group_size));
        }
    }
    ScorerParams params = init != nullptr
                              ? *init
                              : ScorerParams::init(Architecture::joint, config.dim, config.hidden,
                                                   derive_seed(config.seed, "init"));
    if (params.architecture() != Architecture::joint) {
        throw UsageError("teachers are joint scorers");
    }
    const auto examples = examples_from_groups(stream, store);
    return run_training(std::move(params), examples, config,
                        [](std::span<const double> s, const Example&) { return lce_loss(s); });
}

std::vector<TeacherGroup> label_pairs(const ScorerParams& teacher,
                                      std::span<const TrainingGroup> groups,
                                      const FeatureStore& store, const std::string& teacher_tag,
                                      Exec exec)
{
    if (teacher.architecture() != Architecture::joint) {
        throw UsageError("label_pairs expects a joint teacher");
    }
    std::unordered_map<std::string, FeatureVector> qfeat;
    for (const auto& g : groups) {
        if (!qfeat.contains(g.query.id)) {
            qfeat.emplace(g.query.id, featurize(g.query.tokens, teacher.dim()));
        }
    }
    std::vector<TeacherGroup> out(groups.size());
    for_each_index(groups.size(), exec, [&](std::size_t i) {
        const TrainingGroup& g = groups[i];
        const FeatureVector& qf = qfeat.at(g.query.id);
        TeacherGroup& tg = out[i];
        tg.query = g.query;
        tg.docs.push_back(g.positive);
        tg.docs.insert(tg.docs.end(), g.negatives.begin(), g.negatives.end());
        tg.labels.teacher_tag = teacher_tag;
        for (const auto& d : tg.docs) {
            tg.labels.labels.push_back(joint_score(teacher, qf, store.doc(d)));
        }
    });
    return out;
}

RankNetSample sample_ranknet_groups(const ScorerParams& teacher, const InvertedIndex& index,
                                    std::span<const Query> queries, std::size_t k,
                                    std::size_t group_size, std::uint64_t seed,
                                    const FeatureStore& store, const std::string& teacher_tag,
                                    Exec exec)
{
    if (group_size < 2 || k < group_size) {
        throw UsageError("sample_ranknet_groups requires k >= group_size >= 2");
    }
    // Teacher ranking of each distinct query's BM25 top-k, computed once.
    std::vector<const Query*> distinct;
    std::unordered_map<std::string, std::size_t> slot;
    for (const auto& q : queries) {
        if (slot.emplace(q.id, distinct.size()).second) {
            distinct.push_back(&q);
        }
    }
    std::vector<std::vector<RankedDoc>> ranked(distinct.size());
    for_each_index(distinct.size(), exec, [&](std::size_t i) {
        thread_local std::vector<double> acc;
        auto top = index.retrieve_topk(distinct[i]->tokens, k, acc);
        const FeatureVector qf = featurize(distinct[i]->tokens, teacher.dim());
        for (auto& d : top) {
            d.score = score(teacher, qf, store.doc(d.doc_id));
        }
        sort_ranking(top);
        ranked[i] = std::move(top);
    });

    RankNetSample sample;
    Rng rng(seed);
    std::vector<std::size_t> positions;
    for (const auto& q : queries) {
        const auto& top = ranked[slot.at(q.id)];
        if (top.size() < group_size) {
            ++sample.skipped;
            continue;
        }
        positions.resize(top.size());
        for (std::size_t i = 0; i < positions.size(); ++i) {
            positions[i] = i;
        }
        // Partial Fisher-Yates: the first group_size slots are a uniform draw.
        for (std::size_t i = 0; i < group_size; ++i) {
            std::swap(positions[i], positions[i + rng.below(positions.size() - i)]);
        }
        std::sort(positions.begin(), positions.begin() + static_cast<std::ptrdiff_t>(group_size));
        TeacherGroup g;
        g.query = q;
        g.teacher_ordered = true;
        g.labels.teacher_tag = teacher_tag;
        for (std::size_t i = 0; i < group_size; ++i) {
            g.docs.push_back(top[positions[i]].doc_id);
            g.labels.labels.push_back(top[positions[i]].score);
        }
        sample.groups.push_back(std::move(g));
    }
    return sample;
}

TrainResult distill(Architecture student_arch, const ScorerParams& teacher,
                    std::span<const TeacherGroup> stream, const TrainConfig& config,
                    const FeatureStore& store, bool init_from_teacher)
{
    config.validate();
    if (store.dim() != config.dim) {
        throw ConfigError("feature store dimension does not match the training config");
    }
    const LossKind kind = config.loss_kind;
    if (kind == LossKind::lce) {
        throw ConfigError("distill expects margin_mse, kl_div or ranknet");
    }
    for (const auto& g : stream) {
        if (g.docs.size() != config.group_size) {
            throw ConfigError("distillation group for query " + g.query.id + " has size " +
                              std::to_string(g.docs.size()) + ", expected " +
                              std::to_string(config.group_size));
        }
        if (kind == LossKind::ranknet && !g.teacher_ordered) {
            throw ConfigError("ranknet distillation needs teacher-ordered groups");
        }
        if (kind != LossKind::ranknet && g.labels.labels.size() != g.docs.size()) {
            throw ConfigError("distillation group for query " + g.query.id + " lacks teacher labels");
        }
    }
    ScorerParams params;
    if (init_from_teacher) {
        if (teacher.architecture() != student_arch) {
            throw UsageError("cannot initialize a " + std::string(to_string(student_arch)) +
                             " student from a " + std::string(to_string(teacher.architecture())) +
                             " teacher");
        }
        params = teacher;
        params.set_step_count(0);
    } else {
        params = ScorerParams::init(student_arch, config.dim, config.hidden,
                                    derive_seed(config.seed, "init"));
    }

    std::vector<Example> examples;
    examples.reserve(stream.size());
    for (const auto& g : stream) {
        Example ex;
        ex.query = &g.query;
        ex.first_doc = &g.docs.front();
        for (const auto& d : g.docs) {
            ex.docs.push_back(&store.doc(d));
        }
        ex.labels = g.labels.labels;
        examples.push_back(std::move(ex));
    }

    GroupLoss loss_fn;
    switch (kind) {
    case LossKind::margin_mse:
        loss_fn = [](std::span<const double> s, const Example& ex) { return margin_mse_loss(s, ex.labels); };
        break;
    case LossKind::kl_div:
        loss_fn = [t = config.temperature](std::span<const double> s, const Example& ex) {
            return kl_div_loss(s, ex.labels, t);
        };
        break;
    default:
        loss_fn = [](std::span<const double> s, const Example&) { return ranknet_loss(s); };
        break;
    }
    return run_training(std::move(params), examples, config, loss_fn);
}

double mean_group_loss(const ScorerParams& params, std::span<const TrainingGroup> groups,
                       const FeatureStore& store)
{
    if (groups.empty()) {
        return 0.0;
    }
    const auto examples = examples_from_groups(groups, store);
    QueryFeatures qcache(params.dim());
    double sum = 0.0;
    for (const auto& ex : examples) {
        const FeatureVector& qf = qcache.get(*ex.query);
        std::vector<double> s;
        for (const auto* d : ex.docs) {
            s.push_back(score(params, qf, *d));
        }
        sum += lce_loss(s).loss;
    }
    return sum / static_cast<double>(examples.size());
}

}  // namespace contamlab
