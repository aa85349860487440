#include "contamlab/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "contamlab/error.hpp"
#include "contamlab/index.hpp"
#include "contamlab/ranking.hpp"
#include "contamlab/rng.hpp"

namespace contamlab {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

namespace {

// ------------------------------------------------------------------ json helpers

void check_keys(const Json& j, std::initializer_list<std::string_view> allowed,
                const std::string& where)
{
    if (!j.is_object()) {
        throw ConfigError(where + " must be an object");
    }
    for (const auto& [key, _] : j.items()) {
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
            throw ConfigError("unknown key '" + key + "' in " + where);
        }
    }
}

template <typename T>
void read(const Json& j, const char* key, T& out, const std::string& where)
{
    auto it = j.find(key);
    if (it == j.end()) {
        return;
    }
    try {
        out = it->template get<T>();
    } catch (const Json::exception&) {
        throw ConfigError(where + "." + key + " has the wrong type");
    }
}

Exec parse_exec(std::string_view s)
{
    if (s == "serial") {
        return Exec::serial;
    }
    if (s == "parallel") {
        return Exec::parallel;
    }
    throw ConfigError("exec must be 'serial' or 'parallel', got '" + std::string(s) + "'");
}

std::string_view exec_name(Exec e) { return e == Exec::serial ? "serial" : "parallel"; }

Json to_json(const TrainConfig& c)
{
    Json j;
    j["batch_queries"] = c.batch_queries;
    j["base_lr"] = c.base_lr;
    j["warmup_fraction"] = c.warmup_fraction;
    j["total_steps"] = c.total_steps;
    j["group_size"] = c.group_size;
    j["loss"] = std::string(to_string(c.loss_kind));
    j["seed"] = c.seed;
    j["temperature"] = c.temperature;
    j["dim"] = c.dim;
    j["hidden"] = c.hidden;
    j["adamw"] = {{"beta1", c.adamw.beta1},
                  {"beta2", c.adamw.beta2},
                  {"eps", c.adamw.eps},
                  {"weight_decay", c.adamw.weight_decay}};
    j["exec"] = std::string(exec_name(c.exec));
    return j;
}

TrainConfig train_from_json(const Json& j, TrainConfig c, const std::string& where)
{
    check_keys(j,
               {"batch_queries", "base_lr", "warmup_fraction", "total_steps", "group_size", "loss",
                "seed", "temperature", "dim", "hidden", "adamw", "exec"},
               where);
    read(j, "batch_queries", c.batch_queries, where);
    read(j, "base_lr", c.base_lr, where);
    read(j, "warmup_fraction", c.warmup_fraction, where);
    read(j, "total_steps", c.total_steps, where);
    read(j, "group_size", c.group_size, where);
    read(j, "seed", c.seed, where);
    read(j, "temperature", c.temperature, where);
    read(j, "dim", c.dim, where);
    read(j, "hidden", c.hidden, where);
    if (auto it = j.find("loss"); it != j.end()) {
        try {
            c.loss_kind = parse_loss_kind(it->get<std::string>());
        } catch (const Json::exception&) {
            throw ConfigError(where + ".loss must be a string");
        }
    }
    if (auto it = j.find("exec"); it != j.end()) {
        c.exec = parse_exec(it->is_string() ? it->get<std::string>() : "");
    }
    if (auto it = j.find("adamw"); it != j.end()) {
        const std::string w = where + ".adamw";
        check_keys(*it, {"beta1", "beta2", "eps", "weight_decay"}, w);
        read(*it, "beta1", c.adamw.beta1, w);
        read(*it, "beta2", c.adamw.beta2, w);
        read(*it, "eps", c.adamw.eps, w);
        read(*it, "weight_decay", c.adamw.weight_decay, w);
    }
    return c;
}

Json to_json(const SyntheticConfig& s)
{
    Json j;
    j["n_topics"] = s.n_topics;
    j["docs_per_topic"] = s.docs_per_topic;
    j["queries_per_topic"] = s.queries_per_topic;
    j["vocab_per_topic"] = s.vocab_per_topic;
    j["seed"] = s.seed;
    j["train_queries_per_topic"] = s.train_queries_per_topic;
    j["ood_topics"] = s.ood_topics;
    j["background_vocab"] = s.background_vocab;
    j["query_length"] = s.query_length;
    j["heldout_query_terms"] = s.heldout_query_terms;
    j["heldout_terms_per_query"] = s.heldout_terms_per_query;
    j["focused_per_query"] = s.focused_per_query;
    j["doc_length_min"] = s.doc_length_min;
    j["doc_length_max"] = s.doc_length_max;
    j["background_rate"] = s.background_rate;
    j["focus_rate"] = s.focus_rate;
    j["facet_rate"] = s.facet_rate;
    j["facet_spill_rate"] = s.facet_spill_rate;
    j["unique_terms_per_doc"] = s.unique_terms_per_doc;
    j["peripheral_judged"] = s.peripheral_judged;
    j["offtopic_judged"] = s.offtopic_judged;
    j["base_groups"] = s.base_groups;
    j["group_size"] = s.group_size;
    j["hard_negative_rate"] = s.hard_negative_rate;
    j["topic_negative_rate"] = s.topic_negative_rate;
    return j;
}

SyntheticConfig synthetic_from_json(const Json& j, SyntheticConfig s)
{
    const std::string w = "data.synthetic";
    check_keys(j,
               {"n_topics", "docs_per_topic", "queries_per_topic", "vocab_per_topic", "seed",
                "train_queries_per_topic", "ood_topics", "background_vocab", "query_length",
                "heldout_query_terms", "heldout_terms_per_query", "focused_per_query",
                "doc_length_min", "doc_length_max", "background_rate", "focus_rate", "facet_rate",
                "facet_spill_rate", "unique_terms_per_doc", "peripheral_judged", "offtopic_judged",
                "base_groups", "group_size", "hard_negative_rate", "topic_negative_rate"},
               w);
    read(j, "n_topics", s.n_topics, w);
    read(j, "docs_per_topic", s.docs_per_topic, w);
    read(j, "queries_per_topic", s.queries_per_topic, w);
    read(j, "vocab_per_topic", s.vocab_per_topic, w);
    read(j, "seed", s.seed, w);
    read(j, "train_queries_per_topic", s.train_queries_per_topic, w);
    read(j, "ood_topics", s.ood_topics, w);
    read(j, "background_vocab", s.background_vocab, w);
    read(j, "query_length", s.query_length, w);
    read(j, "heldout_query_terms", s.heldout_query_terms, w);
    read(j, "heldout_terms_per_query", s.heldout_terms_per_query, w);
    read(j, "focused_per_query", s.focused_per_query, w);
    read(j, "doc_length_min", s.doc_length_min, w);
    read(j, "doc_length_max", s.doc_length_max, w);
    read(j, "background_rate", s.background_rate, w);
    read(j, "focus_rate", s.focus_rate, w);
    read(j, "facet_rate", s.facet_rate, w);
    read(j, "facet_spill_rate", s.facet_spill_rate, w);
    read(j, "unique_terms_per_doc", s.unique_terms_per_doc, w);
    read(j, "peripheral_judged", s.peripheral_judged, w);
    read(j, "offtopic_judged", s.offtopic_judged, w);
    read(j, "base_groups", s.base_groups, w);
    read(j, "group_size", s.group_size, w);
    read(j, "hard_negative_rate", s.hard_negative_rate, w);
    read(j, "topic_negative_rate", s.topic_negative_rate, w);
    return s;
}

Json to_json(const ExperimentConfig& c)
{
    Json j;
    j["master_seed"] = c.master_seed;
    j["output_dir"] = c.output_dir;
    j["exec"] = std::string(exec_name(c.exec));
    j["threads"] = c.threads;

    Json data = Json::object();
    if (c.data.synthetic) {
        data["synthetic"] = to_json(*c.data.synthetic);
    } else {
        data["corpus"] = c.data.corpus;
        data["train_queries"] = c.data.train_queries;
        data["base_groups"] = c.data.base_groups;
        Json cols = Json::array();
        for (const auto& f : c.data.collections) {
            cols.push_back({{"name", f.name},
                            {"queries", f.queries},
                            {"qrels", f.qrels},
                            {"grade_max", f.grade_max}});
        }
        data["collections"] = cols;
    }
    j["data"] = data;
    j["bm25"] = {{"k1", c.k1}, {"b", c.b}, {"rerank_depth", c.rerank_depth}};

    Json cont = Json::array();
    for (const auto& s : c.contamination) {
        cont.push_back({{"source", s.source_collection},
                        {"relevance_cutoff", s.relevance_cutoff},
                        {"group_size", s.group_size},
                        {"max_fraction", s.max_fraction},
                        {"bm25_depth", s.bm25_depth}});
    }
    j["contamination"] = cont;
    j["teacher"] = to_json(c.teacher);

    Json students;
    Json archs = Json::array();
    for (auto a : c.students.architectures) {
        archs.push_back(std::string(to_string(a)));
    }
    Json losses = Json::array();
    for (auto l : c.students.losses) {
        losses.push_back(std::string(to_string(l)));
    }
    students["architectures"] = archs;
    students["losses"] = losses;
    Json per = Json::object();
    for (auto a : {Architecture::joint, Architecture::dual}) {
        per[std::string(to_string(a))] = to_json(c.students.train_for(a));
    }
    students["per_architecture"] = per;
    j["students"] = students;

    j["ranknet"] = {{"k", c.ranknet.k},
                    {"group_size", c.ranknet.group_size},
                    {"steps_fraction", c.ranknet.steps_fraction}};
    j["metrics"] = {{"ndcg_depth", c.metrics.ndcg_depth},
                    {"recall_depth", c.metrics.recall_depth},
                    {"relevance_cutoff", c.metrics.relevance_cutoff},
                    {"alpha", c.alpha}};
    return j;
}

std::string resolve_path(const std::string& path, const std::string& base_dir)
{
    if (path.empty() || base_dir.empty() || fs::path(path).is_absolute()) {
        return path;
    }
    return (fs::path(base_dir) / path).string();
}

ExperimentConfig config_from_json(const Json& j, const std::string& base_dir)
{
    ExperimentConfig c = default_experiment_config();
    check_keys(j,
               {"master_seed", "output_dir", "exec", "threads", "data", "bm25", "contamination",
                "teacher", "students", "ranknet", "metrics"},
               "config");
    read(j, "master_seed", c.master_seed, "config");
    read(j, "output_dir", c.output_dir, "config");
    read(j, "threads", c.threads, "config");
    if (auto it = j.find("exec"); it != j.end()) {
        c.exec = parse_exec(it->is_string() ? it->get<std::string>() : "");
    }

    if (auto it = j.find("data"); it != j.end()) {
        const Json& d = *it;
        check_keys(d, {"synthetic", "corpus", "train_queries", "base_groups", "collections"},
                   "data");
        if (d.contains("synthetic")) {
            if (d.contains("corpus") || d.contains("collections")) {
                throw ConfigError("data takes either synthetic parameters or file paths, not both");
            }
            c.data.synthetic = synthetic_from_json(d["synthetic"], *c.data.synthetic);
        } else if (d.contains("corpus")) {
            c.data = DatasetSpec{};
            read(d, "corpus", c.data.corpus, "data");
            read(d, "train_queries", c.data.train_queries, "data");
            read(d, "base_groups", c.data.base_groups, "data");
            c.data.corpus = resolve_path(c.data.corpus, base_dir);
            c.data.train_queries = resolve_path(c.data.train_queries, base_dir);
            c.data.base_groups = resolve_path(c.data.base_groups, base_dir);
            if (auto cols = d.find("collections"); cols != d.end()) {
                if (!cols->is_array()) {
                    throw ConfigError("data.collections must be a list");
                }
                for (const auto& cj : *cols) {
                    CollectionFiles f;
                    check_keys(cj, {"name", "queries", "qrels", "grade_max"}, "data.collections");
                    read(cj, "name", f.name, "data.collections");
                    read(cj, "queries", f.queries, "data.collections");
                    read(cj, "qrels", f.qrels, "data.collections");
                    read(cj, "grade_max", f.grade_max, "data.collections");
                    f.queries = resolve_path(f.queries, base_dir);
                    f.qrels = resolve_path(f.qrels, base_dir);
                    c.data.collections.push_back(std::move(f));
                }
            }
        }
    }

    if (auto it = j.find("bm25"); it != j.end()) {
        check_keys(*it, {"k1", "b", "rerank_depth"}, "bm25");
        read(*it, "k1", c.k1, "bm25");
        read(*it, "b", c.b, "bm25");
        read(*it, "rerank_depth", c.rerank_depth, "bm25");
    }

    if (auto it = j.find("contamination"); it != j.end()) {
        if (!it->is_array()) {
            throw ConfigError("contamination must be a list");
        }
        c.contamination.clear();
        for (const auto& sj : *it) {
            check_keys(sj, {"source", "relevance_cutoff", "group_size", "max_fraction", "bm25_depth"},
                       "contamination");
            ContaminationSpec s;
            read(sj, "source", s.source_collection, "contamination");
            read(sj, "relevance_cutoff", s.relevance_cutoff, "contamination");
            read(sj, "group_size", s.group_size, "contamination");
            read(sj, "max_fraction", s.max_fraction, "contamination");
            read(sj, "bm25_depth", s.bm25_depth, "contamination");
            c.contamination.push_back(std::move(s));
        }
    }

    if (auto it = j.find("teacher"); it != j.end()) {
        c.teacher = train_from_json(*it, c.teacher, "teacher");
    }

    if (auto it = j.find("students"); it != j.end()) {
        const Json& s = *it;
        check_keys(s, {"architectures", "losses", "train", "per_architecture"}, "students");
        if (auto a = s.find("architectures"); a != s.end()) {
            c.students.architectures.clear();
            for (const auto& v : *a) {
                c.students.architectures.push_back(parse_architecture(v.get<std::string>()));
            }
        }
        if (auto l = s.find("losses"); l != s.end()) {
            c.students.losses.clear();
            for (const auto& v : *l) {
                c.students.losses.push_back(parse_loss_kind(v.get<std::string>()));
            }
        }
        for (auto arch : {Architecture::joint, Architecture::dual}) {
            const std::string name(to_string(arch));
            TrainConfig t = c.students.train_for(arch);
            if (auto tr = s.find("train"); tr != s.end()) {
                t = train_from_json(*tr, t, "students.train");
            }
            if (auto per = s.find("per_architecture"); per != s.end()) {
                check_keys(*per, {"joint", "dual"}, "students.per_architecture");
                if (auto pa = per->find(name); pa != per->end()) {
                    t = train_from_json(*pa, t, "students.per_architecture." + name);
                }
            }
            c.students.train[arch] = t;
        }
    }

    if (auto it = j.find("ranknet"); it != j.end()) {
        check_keys(*it, {"k", "group_size", "steps_fraction"}, "ranknet");
        read(*it, "k", c.ranknet.k, "ranknet");
        read(*it, "group_size", c.ranknet.group_size, "ranknet");
        read(*it, "steps_fraction", c.ranknet.steps_fraction, "ranknet");
    }

    if (auto it = j.find("metrics"); it != j.end()) {
        check_keys(*it, {"ndcg_depth", "recall_depth", "relevance_cutoff", "alpha"}, "metrics");
        read(*it, "ndcg_depth", c.metrics.ndcg_depth, "metrics");
        read(*it, "recall_depth", c.metrics.recall_depth, "metrics");
        read(*it, "relevance_cutoff", c.metrics.relevance_cutoff, "metrics");
        read(*it, "alpha", c.alpha, "metrics");
    }
    c.validate();
    return c;
}

Json parse_json(std::string_view text, const std::string& what)
{
    try {
        return Json::parse(text.begin(), text.end(), nullptr, true, true);
    } catch (const Json::parse_error& e) {
        throw ConfigError(what + ": " + e.what());
    }
}

// ------------------------------------------------------------------ csv helpers

std::vector<std::string_view> split_csv(std::string_view line)
{
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        auto pos = line.find(',', start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
}

std::string fixed4(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return buf;
}

MetricResult gather(const std::vector<const EvalRow*>& rows, const std::string& metric)
{
    MetricResult m;
    m.metric = metric;
    bool has_aggregate = false;
    for (const EvalRow* r : rows) {
        if (r->metric != metric) {
            continue;
        }
        if (r->query_id == "all") {
            m.aggregate = r->value;
            has_aggregate = true;
        } else {
            m.per_query[r->query_id] = r->value;
        }
    }
    if (!has_aggregate) {
        if (m.per_query.empty()) {
            throw EvaluationError("no " + metric + " values");
        }
        double sum = 0.0;
        for (const auto& [_, v] : m.per_query) {
            sum += v;
        }
        m.aggregate = sum / static_cast<double>(m.per_query.size());
    }
    return m;
}

const std::vector<std::string>& report_metrics()
{
    static const std::vector<std::string> names{"nDCG@10", "MAP", "R@100"};
    return names;
}

// ------------------------------------------------------------------ run helpers

std::string hex64(std::uint64_t v)
{
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

class KeyHash {
  public:
    KeyHash& add(std::string_view s)
    {
        h_ = fnv1a64(s, h_);
        h_ = fnv1a64("\x1f", h_);
        return *this;
    }
    KeyHash& add(std::uint64_t v) { return add(std::to_string(v)); }
    [[nodiscard]] std::uint64_t value() const noexcept { return h_; }

  private:
    std::uint64_t h_ = fnv1a64("");
};

void write_text(const fs::path& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError("cannot write " + path.string());
    }
    out << text;
    if (!out) {
        throw DataError("write failed for " + path.string());
    }
}

std::string read_text(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        return {};
    }
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

bool safe_name(std::string_view s)
{
    return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) {
        return std::isalnum(c) || c == '_' || c == '-' || c == '.';
    });
}

struct LoadedData {
    Corpus corpus;
    std::vector<TestCollection> collections;
    std::vector<Query> train_queries;
    std::vector<TrainingGroup> base;
};

LoadedData load_data(const DatasetSpec& spec)
{
    LoadedData d;
    if (spec.synthetic) {
        auto s = generate_synthetic(*spec.synthetic);
        d.corpus = std::move(s.corpus);
        d.collections.push_back(std::move(s.target));
        if (s.ood) {
            d.collections.push_back(std::move(*s.ood));
        }
        d.train_queries = std::move(s.train_queries);
        d.base = std::move(s.base_groups);
        return d;
    }
    d.corpus = read_corpus(spec.corpus);
    d.train_queries = read_queries(spec.train_queries);
    std::unordered_map<std::string, Query> by_id;
    for (const auto& q : d.train_queries) {
        by_id.emplace(q.id, q);
    }
    for (const auto& f : spec.collections) {
        auto queries = read_queries(f.queries);
        auto qrels = read_qrels(f.qrels, f.grade_max);
        d.collections.emplace_back(f.name, std::move(queries), std::move(qrels));
    }
    std::ifstream in(spec.base_groups);
    if (!in) {
        throw DataError("cannot open " + spec.base_groups);
    }
    d.base = parse_groups(in, by_id);
    for (const auto& g : d.base) {
        if (!d.corpus.contains(g.positive)) {
            throw DataError("base group references unknown document " + g.positive);
        }
        for (const auto& n : g.negatives) {
            if (!d.corpus.contains(n)) {
                throw DataError("base group references unknown document " + n);
            }
        }
    }
    return d;
}

template <typename F>
std::string render(F&& write)
{
    std::ostringstream s;
    write(s);
    return s.str();
}

class Logger {
  public:
    explicit Logger(std::ostream* out) : out_(out), start_(std::chrono::steady_clock::now()) {}

    void operator()(const std::string& msg) const
    {
        if (out_ == nullptr) {
            return;
        }
        const double t = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        char buf[32];
        std::snprintf(buf, sizeof(buf), "[%7.1fs] ", t);
        *out_ << buf << msg << '\n' << std::flush;
    }

  private:
    std::ostream* out_;
    std::chrono::steady_clock::time_point start_;
};

/// Trains a cell or loads its checkpoint when the stored key matches.
class CellStore {
  public:
    CellStore(fs::path root, ExperimentSummary& summary, const Logger& log)
        : root_(std::move(root)), summary_(summary), log_(log)
    {}

    std::optional<ScorerParams> get(const std::string& name, std::uint64_t key,
                                    const std::function<TrainResult()>& train)
    {
        const fs::path dir = root_ / name;
        const fs::path key_file = dir / "cell.key";
        const fs::path params_file = dir / "params.bin";
        const std::string key_text = hex64(key) + "\n";
        try {
            if (read_text(key_file) == key_text && fs::exists(params_file)) {
                auto params = ScorerParams::load_file(params_file.string());
                ++summary_.cells_cached;
                log_(name + ": cached");
                return params;
            }
        } catch (const Error&) {
            // unreadable checkpoint; retrain
        }
        try {
            fs::create_directories(dir);
            fs::remove(key_file);
            log_(name + ": training");
            TrainResult result = train();
            result.params.save_file(params_file.string());
            write_text(dir / "train_log.csv", render([&](std::ostream& o) { write_train_log(o, result.log); }));
            write_text(key_file, key_text);
            ++summary_.cells_trained;
            log_(name + ": done, " + std::to_string(result.log.size()) + " steps, final loss " +
                 (result.log.empty() ? std::string("n/a") : format_double(result.log.back().loss)));
            return std::move(result.params);
        } catch (const std::exception& e) {
            fail(name, e.what());
            return std::nullopt;
        }
    }

    void fail(const std::string& name, const std::string& what)
    {
        summary_.failures.push_back(name + ": " + what);
        log_(name + ": FAILED " + what);
    }

  private:
    fs::path root_;
    ExperimentSummary& summary_;
    const Logger& log_;
};

struct Model {
    std::string cell;
    ModelKey key;  // collection filled per evaluation
    std::optional<ScorerParams> params;
};

}  // namespace

// ------------------------------------------------------------------ config

const TrainConfig& StudentSettings::train_for(Architecture arch) const
{
    auto it = train.find(arch);
    if (it == train.end()) {
        static const TrainConfig fallback{};
        return fallback;
    }
    return it->second;
}

void ExperimentConfig::validate() const
{
    if (!data.synthetic) {
        if (data.corpus.empty() || data.train_queries.empty() || data.base_groups.empty()) {
            throw ConfigError("data needs corpus, train_queries and base_groups paths");
        }
        if (data.collections.empty()) {
            throw ConfigError("data needs at least one test collection");
        }
        for (const auto& p : {data.corpus, data.train_queries, data.base_groups}) {
            if (!fs::exists(p)) {
                throw ConfigError("missing data file " + p);
            }
        }
        std::set<std::string> names;
        for (const auto& f : data.collections) {
            if (!safe_name(f.name) || !names.insert(f.name).second) {
                throw ConfigError("collection names must be unique and use [A-Za-z0-9_.-]");
            }
            for (const auto& p : {f.queries, f.qrels}) {
                if (!fs::exists(p)) {
                    throw ConfigError("missing data file " + p);
                }
            }
        }
    }
    if (!(k1 >= 0.0) || !(b >= 0.0 && b <= 1.0)) {
        throw ConfigError("BM25 requires k1 >= 0 and b in [0, 1]");
    }
    if (rerank_depth == 0) {
        throw ConfigError("rerank_depth must be >= 1");
    }
    std::set<std::string> sources;
    for (const auto& s : contamination) {
        if (!safe_name(s.source_collection) || s.source_collection == "none" ||
            s.source_collection == "clean") {
            throw ConfigError("contamination source '" + s.source_collection +
                              "' must be a collection name");
        }
        const bool known = data.synthetic
                               ? s.source_collection == "target" ||
                                     (s.source_collection == "ood" && data.synthetic->ood_topics > 0)
                               : std::any_of(data.collections.begin(), data.collections.end(),
                                             [&](const CollectionFiles& f) { return f.name == s.source_collection; });
        if (!known) {
            throw ConfigError("contamination source " + s.source_collection + " is not a test collection");
        }
        if (!sources.insert(s.source_collection).second) {
            throw ConfigError("contamination source " + s.source_collection + " listed twice");
        }
        if (!(s.max_fraction >= 0.0 && s.max_fraction <= 1.0)) {
            throw ConfigError("max_fraction must be in [0, 1]");
        }
        if (s.group_size != teacher.group_size) {
            throw ConfigError("contamination group_size must match the teacher group_size");
        }
    }
    teacher.validate();
    if (teacher.loss_kind != LossKind::lce) {
        throw ConfigError("the teacher is trained with lce");
    }
    for (auto l : students.losses) {
        if (l == LossKind::lce) {
            throw ConfigError("student losses are margin_mse, kl_div or ranknet");
        }
    }
    for (auto a : students.architectures) {
        const TrainConfig& t = students.train_for(a);
        t.validate();
        if (t.dim != teacher.dim) {
            throw ConfigError("students and teacher must share the feature dimension");
        }
    }
    if (ranknet.group_size < 2 || ranknet.k < ranknet.group_size) {
        throw ConfigError("ranknet needs group_size >= 2 and k >= group_size");
    }
    if (!(ranknet.steps_fraction > 0.0 && ranknet.steps_fraction <= 1.0)) {
        throw ConfigError("ranknet.steps_fraction must be in (0, 1]");
    }
    if (!(alpha > 0.0 && alpha < 1.0)) {
        throw ConfigError("alpha must be in (0, 1)");
    }
    if (threads < 0) {
        throw ConfigError("threads must be >= 0");
    }
}

ExperimentConfig default_experiment_config()
{
    ExperimentConfig c;
    SyntheticConfig s;
    s.n_topics = 20;
    s.docs_per_topic = 200;
    s.queries_per_topic = 3;
    s.train_queries_per_topic = 24;
    s.heldout_query_terms = 0;
    s.heldout_terms_per_query = 1;
    s.facet_rate = 0.08;
    s.facet_spill_rate = 0.0;
    s.hard_negative_rate = 0.8;
    s.base_groups = 64000;
    s.group_size = 2;
    c.data.synthetic = s;

    ContaminationSpec target;
    target.source_collection = "target";
    target.relevance_cutoff = 2;
    target.group_size = 2;
    c.contamination.push_back(target);

    c.teacher.base_lr = 1e-3;
    c.teacher.group_size = 2;
    c.teacher.loss_kind = LossKind::lce;

    TrainConfig joint;
    joint.base_lr = 3e-3;
    TrainConfig dual;
    dual.base_lr = 1e-2;
    c.students.train[Architecture::joint] = joint;
    c.students.train[Architecture::dual] = dual;
    return c;
}

ExperimentConfig parse_experiment_config(std::string_view json_text, const std::string& base_dir)
{
    return config_from_json(parse_json(json_text, "config"), base_dir);
}

ExperimentConfig load_experiment_config(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ConfigError("cannot open config " + path);
    }
    std::ostringstream s;
    s << in.rdbuf();
    return parse_experiment_config(s.str(), fs::path(path).parent_path().string());
}

ExperimentConfig apply_overrides(const ExperimentConfig& config,
                                 const std::vector<std::string>& assignments)
{
    Json j = to_json(config);
    for (const auto& a : assignments) {
        auto eq = a.find('=');
        if (eq == std::string::npos || eq == 0) {
            throw ConfigError("override '" + a + "' is not key=value");
        }
        const std::string path = a.substr(0, eq);
        const std::string text = a.substr(eq + 1);
        Json value;
        try {
            value = Json::parse(text);
        } catch (const Json::parse_error&) {
            value = text;
        }
        Json* node = &j;
        std::size_t start = 0;
        while (true) {
            auto dot = path.find('.', start);
            const std::string part = path.substr(start, dot == std::string::npos ? dot : dot - start);
            if (part.empty()) {
                throw ConfigError("override '" + a + "' has an empty key");
            }
            if (node->is_array()) {
                std::size_t idx = 0;
                auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), idx);
                if (ec != std::errc() || ptr != part.data() + part.size() || idx >= node->size()) {
                    throw ConfigError("override '" + a + "' indexes past a list");
                }
                node = &(*node)[idx];
            } else {
                node = &(*node)[part];
            }
            if (dot == std::string::npos) {
                break;
            }
            start = dot + 1;
        }
        *node = value;
    }
    return config_from_json(j, "");
}

std::string experiment_config_json(const ExperimentConfig& config)
{
    return to_json(config).dump(2) + "\n";
}

TrainConfig parse_train_config(std::string_view json_text)
{
    return train_from_json(parse_json(json_text, "train config"), TrainConfig{}, "train");
}

std::string train_config_json(const TrainConfig& config) { return to_json(config).dump(2) + "\n"; }

std::string resolve_output_dir(const std::string& output_dir)
{
    const char* root = std::getenv("CONTAMLAB_OUT");
    if (root != nullptr && *root != '\0' && !fs::path(output_dir).is_absolute()) {
        return (fs::path(root) / output_dir).string();
    }
    return output_dir;
}

// ------------------------------------------------------------------ reports

void write_eval_header(std::ostream& out)
{
    out << "collection,model,loss,contaminated,metric,query_id,value\n";
}

void write_eval_rows(std::ostream& out, const ModelKey& key, const Evaluation& evaluation)
{
    const std::string prefix =
        key.collection + ',' + key.model + ',' + key.loss + ',' + key.contaminated + ',';
    for (const MetricResult* m : evaluation.all()) {
        for (const auto& [qid, v] : m->per_query) {
            out << prefix << m->metric << ',' << qid << ',' << format_double(v) << '\n';
        }
        out << prefix << m->metric << ",all," << format_double(m->aggregate) << '\n';
    }
}

std::vector<EvalRow> parse_eval_csv(std::istream& in)
{
    std::vector<EvalRow> rows;
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
        auto f = split_csv(line);
        if (f.size() != 7) {
            throw ParseError(lineno, "expected 7 comma-separated fields");
        }
        if (lineno == 1 && f[0] == "collection") {
            continue;
        }
        EvalRow r;
        r.key = {std::string(f[0]), std::string(f[1]), std::string(f[2]), std::string(f[3])};
        r.metric = std::string(f[4]);
        r.query_id = std::string(f[5]);
        auto [ptr, ec] = std::from_chars(f[6].data(), f[6].data() + f[6].size(), r.value);
        if (ec != std::errc() || ptr != f[6].data() + f[6].size()) {
            throw ParseError(lineno, "bad value '" + std::string(f[6]) + "'");
        }
        rows.push_back(std::move(r));
    }
    return rows;
}

std::vector<ReportRow> build_report(const std::vector<EvalRow>& rows, double alpha,
                                    const ReportBaseline& baseline)
{
    std::vector<ModelKey> order;
    std::map<ModelKey, std::vector<const EvalRow*>> by_key;
    for (const auto& r : rows) {
        auto [it, fresh] = by_key.try_emplace(r.key);
        if (fresh) {
            order.push_back(r.key);
        }
        it->second.push_back(&r);
    }
    const auto& names = report_metrics();
    std::vector<ReportRow> out;
    for (const auto& key : order) {
        const auto& mine = by_key.at(key);
        ReportRow row;
        row.key = key;
        std::vector<MetricResult> metrics;
        for (const auto& name : names) {
            metrics.push_back(gather(mine, name));
        }
        row.ndcg = metrics[0].aggregate;
        row.map = metrics[1].aggregate;
        row.recall = metrics[2].aggregate;

        const std::vector<const EvalRow*>* base = nullptr;
        for (const auto& [k, v] : by_key) {
            if (k.collection == key.collection && k.model == baseline.model &&
                k.contaminated == baseline.contaminated) {
                base = &v;
                break;
            }
        }
        for (std::size_t m = 0; m < names.size(); ++m) {
            bool sig = false;
            if (base != nullptr && base != &mine) {
                const MetricResult b = gather(*base, names[m]);
                if (!metrics[m].per_query.empty()) {
                    sig = paired_ttest(metrics[m], b, alpha).significant;
                }
            }
            row.sig_marker += sig ? std::string(kSigMark) : std::string("-");
        }
        out.push_back(std::move(row));
    }
    return out;
}

void write_report(std::ostream& out, const std::vector<ReportRow>& rows)
{
    out << "collection,model,loss,contaminated,nDCG@10,MAP,R@100,sig_marker\n";
    for (const auto& r : rows) {
        out << r.key.collection << ',' << r.key.model << ',' << r.key.loss << ','
            << r.key.contaminated << ',' << fixed4(r.ndcg) << ',' << fixed4(r.map) << ','
            << fixed4(r.recall) << ',' << r.sig_marker << '\n';
    }
}

void write_source_table(std::ostream& out, const std::vector<EvalRow>& rows,
                        const std::vector<std::string>& sources,
                        const std::vector<std::string>& collections,
                        const std::vector<Architecture>& architectures, LossKind loss,
                        double alpha)
{
    std::map<ModelKey, std::vector<const EvalRow*>> by_key;
    for (const auto& r : rows) {
        if (r.metric == "nDCG@10") {
            by_key[r.key].push_back(&r);
        }
    }
    out << "contamination_source,model";
    for (const auto& c : collections) {
        out << ',' << c;
    }
    out << ",sig_marker\n";
    const std::string loss_name(to_string(loss));
    for (auto arch : architectures) {
        const std::string model(to_string(arch));
        std::vector<std::string> row_sources{"none"};
        row_sources.insert(row_sources.end(), sources.begin(), sources.end());
        for (const auto& src : row_sources) {
            std::string marks;
            std::string values;
            bool any = false;
            for (const auto& c : collections) {
                auto it = by_key.find({c, model, loss_name, src});
                if (it == by_key.end()) {
                    values += ",";
                    marks += "-";
                    continue;
                }
                any = true;
                const MetricResult m = gather(it->second, "nDCG@10");
                values += "," + fixed4(m.aggregate);
                bool sig = false;
                auto base = by_key.find({c, model, loss_name, "none"});
                if (src != "none" && base != by_key.end() && !m.per_query.empty()) {
                    sig = paired_ttest(m, gather(base->second, "nDCG@10"), alpha).significant;
                }
                marks += sig ? std::string(kSigMark) : std::string("-");
            }
            if (any) {
                out << (src == "none" ? "None" : src) << ',' << model << values << ',' << marks
                    << '\n';
            }
        }
    }
}

// ------------------------------------------------------------------ runner

ExperimentSummary run_experiment(const ExperimentConfig& config, std::ostream* log_stream)
{
    config.validate();
    const Logger log(log_stream);
    if (config.threads > 0) {
        set_threads(config.threads);
    }
    ExperimentSummary summary;
    const fs::path root = resolve_output_dir(config.output_dir);
    summary.output_dir = root.string();
    for (const char* sub : {"data", "cells", "labels", "runs"}) {
        fs::create_directories(root / sub);
    }
    write_text(root / "config.json", experiment_config_json(config));

    // ---------------------------------------------------------- data
    LoadedData data = load_data(config.data);
    std::map<std::string, const TestCollection*> collections;
    for (const auto& c : data.collections) {
        if (!safe_name(c.name())) {
            throw ConfigError("collection name '" + c.name() + "' is not usable in file names");
        }
        collections.emplace(c.name(), &c);
    }
    for (const auto& s : config.contamination) {
        if (collections.count(s.source_collection) == 0) {
            throw ConfigError("contamination source " + s.source_collection +
                              " is not a test collection");
        }
    }
    for (const auto& g : data.base) {
        if (g.group_size() != config.teacher.group_size) {
            throw ConfigError("base groups have size " + std::to_string(g.group_size()) +
                              " but the teacher expects " + std::to_string(config.teacher.group_size));
        }
    }
    if (data.base.empty()) {
        throw ConfigError("the base stream is empty");
    }
    const std::string corpus_text = render([&](std::ostream& o) { write_corpus(o, data.corpus); });
    const std::string base_text = render([&](std::ostream& o) { write_groups(o, data.base); });
    write_text(root / "data" / "corpus.tsv", corpus_text);
    write_text(root / "data" / "train_queries.tsv",
               render([&](std::ostream& o) { write_queries(o, data.train_queries); }));
    write_text(root / "data" / "base_groups.tsv", base_text);
    for (const auto& c : data.collections) {
        write_text(root / "data" / (c.name() + ".queries.tsv"),
                   render([&](std::ostream& o) { write_queries(o, c.queries()); }));
        write_text(root / "data" / (c.name() + ".qrels"),
                   render([&](std::ostream& o) { write_qrels(o, c.judgments()); }));
    }
    const std::uint64_t corpus_hash = fnv1a64(corpus_text);
    const std::uint64_t base_hash = fnv1a64(base_text);
    log("data: " + std::to_string(data.corpus.size()) + " documents, " +
        std::to_string(data.base.size()) + " base groups");

    const InvertedIndex index = InvertedIndex::build(data.corpus, config.k1, config.b);
    index.save_file((root / "index.bin").string());
    const FeatureStore store(data.corpus, config.teacher.dim, config.exec);

    // ---------------------------------------------------------- teacher streams
    struct SourceStream {
        std::string source;
        std::vector<TrainingGroup> groups;
        std::uint64_t hash = 0;
    };
    std::vector<SourceStream> streams;
    {
        std::ostringstream inj;
        inj << "source,n_base,n_contaminated,achieved_fraction\n";
        for (const auto& spec_in : config.contamination) {
            ContaminationSpec spec = spec_in;
            spec.seed = derive_seed(config.master_seed, "contaminate/" + spec.source_collection);
            const auto& coll = *collections.at(spec.source_collection);
            auto contaminated = build_contaminated_groups(coll, data.corpus, index, spec);
            auto injected = inject(data.base, contaminated, spec.max_fraction,
                                   derive_seed(config.master_seed, "inject/" + spec.source_collection));
            const std::string cont_text = render([&](std::ostream& o) { write_groups(o, contaminated); });
            const std::string stream_text = render([&](std::ostream& o) { write_groups(o, injected.groups); });
            write_text(root / "data" / ("contaminated_" + spec.source_collection + ".tsv"), cont_text);
            write_text(root / "data" / ("stream_" + spec.source_collection + ".tsv"), stream_text);
            inj << spec.source_collection << ',' << injected.n_base << ',' << injected.n_contaminated
                << ',' << format_double(injected.achieved_fraction) << '\n';
            log("contamination " + spec.source_collection + ": " +
                std::to_string(injected.n_contaminated) + " of " +
                std::to_string(injected.groups.size()) + " groups");
            streams.push_back({spec.source_collection, std::move(injected.groups), fnv1a64(stream_text)});
        }
        write_text(root / "data" / "injection.csv", inj.str());
    }

    // ---------------------------------------------------------- cells
    CellStore cells(root / "cells", summary, log);
    const std::uint64_t teacher_seed = derive_seed(config.master_seed, "teacher");
    TrainConfig teacher_cfg = config.teacher;
    teacher_cfg.seed = teacher_seed;
    teacher_cfg.exec = config.exec;
    TrainConfig teacher_key_cfg = teacher_cfg;
    teacher_key_cfg.exec = Exec::serial;

    struct Teacher {
        std::string cell;
        std::string contaminated;  // none or source
        std::uint64_t key = 0;
        std::optional<ScorerParams> params;
    };
    std::vector<Teacher> teachers;
    auto teacher_key = [&](std::uint64_t stream_hash) {
        return KeyHash()
            .add("teacher")
            .add(corpus_hash)
            .add(stream_hash)
            .add(train_config_json(teacher_key_cfg))
            .value();
    };
    {
        Teacher clean{"teacher-clean", "none", teacher_key(base_hash), std::nullopt};
        clean.params = cells.get(clean.cell, clean.key,
                                 [&] { return train_teacher(data.base, teacher_cfg, store); });
        teachers.push_back(std::move(clean));
        for (const auto& s : streams) {
            Teacher t{"teacher-" + s.source, s.source, teacher_key(s.hash), std::nullopt};
            t.params = cells.get(t.cell, t.key,
                                 [&] { return train_teacher(s.groups, teacher_cfg, store); });
            teachers.push_back(std::move(t));
        }
    }

    // Student streams: the base groups relabeled by each teacher, and RankNet
    // groups sampled from each teacher's re-ranking of base training queries.
    std::vector<Model> models;
    for (const auto& t : teachers) {
        models.push_back({t.cell, {"", "teacher", "lce", t.contaminated}, t.params});
    }

    const bool any_pointwise = std::any_of(config.students.losses.begin(), config.students.losses.end(),
                                           [](LossKind l) { return l != LossKind::ranknet; });
    const bool any_ranknet = std::any_of(config.students.losses.begin(), config.students.losses.end(),
                                         [](LossKind l) { return l == LossKind::ranknet; });
    const std::uint64_t ranknet_seed = derive_seed(config.master_seed, "ranknet");

    for (const auto& t : teachers) {
        const std::string suffix = t.contaminated == "none" ? "clean" : t.contaminated;
        std::vector<TeacherGroup> pointwise;
        std::vector<TeacherGroup> ranked;
        std::uint64_t ranknet_steps = 0;
        if (t.params && !config.students.architectures.empty()) {
            if (any_pointwise) {
                pointwise = label_pairs(*t.params, data.base, store, t.cell, config.exec);
                write_text(root / "labels" / (t.cell + ".pointwise.tsv"),
                           render([&](std::ostream& o) { write_teacher_groups(o, pointwise); }));
            }
            if (any_ranknet) {
                std::uint64_t pointwise_steps = 0;
                for (auto a : config.students.architectures) {
                    TrainConfig c = config.students.train_for(a);
                    c.group_size = config.teacher.group_size;
                    pointwise_steps = std::max(pointwise_steps, planned_steps(data.base.size(), c));
                }
                ranknet_steps = std::max<std::uint64_t>(
                    1, static_cast<std::uint64_t>(std::floor(static_cast<double>(pointwise_steps) *
                                                             config.ranknet.steps_fraction)));
                std::size_t batch = 1;
                for (auto a : config.students.architectures) {
                    batch = std::max(batch, config.students.train_for(a).batch_queries);
                }
                std::vector<Query> rq;
                const std::size_t n_rq = static_cast<std::size_t>(ranknet_steps) * batch;
                rq.reserve(n_rq);
                for (std::size_t i = 0; i < n_rq; ++i) {
                    rq.push_back(data.base[i % data.base.size()].query);
                }
                auto sample = sample_ranknet_groups(*t.params, index, rq, config.ranknet.k,
                                                    config.ranknet.group_size, ranknet_seed, store,
                                                    t.cell, config.exec);
                if (sample.skipped > 0) {
                    log(t.cell + ": ranknet sampler skipped " + std::to_string(sample.skipped) +
                        " queries with too few documents");
                }
                ranked = std::move(sample.groups);
                write_text(root / "labels" / (t.cell + ".ranknet.tsv"),
                           render([&](std::ostream& o) { write_teacher_groups(o, ranked); }));
            }
        }
        for (auto arch : config.students.architectures) {
            for (auto loss : config.students.losses) {
                const std::string arch_name(to_string(arch));
                const std::string loss_name(to_string(loss));
                const std::string cell = arch_name + "-" + loss_name + "-" + suffix;
                Model m{cell, {"", arch_name, loss_name, t.contaminated}, std::nullopt};
                if (!t.params) {
                    cells.fail(cell, "teacher " + t.cell + " is unavailable");
                    models.push_back(std::move(m));
                    continue;
                }
                TrainConfig sc = config.students.train_for(arch);
                sc.loss_kind = loss;
                sc.seed = derive_seed(config.master_seed, "student/" + arch_name + "/" + loss_name);
                sc.exec = config.exec;
                if (loss == LossKind::ranknet) {
                    sc.group_size = config.ranknet.group_size;
                    sc.total_steps = ranknet_steps;
                } else {
                    sc.group_size = config.teacher.group_size;
                }
                TrainConfig key_cfg = sc;
                key_cfg.exec = Exec::serial;
                KeyHash kh;
                kh.add("student").add(arch_name).add(t.key).add(base_hash).add(train_config_json(key_cfg));
                if (loss == LossKind::ranknet) {
                    kh.add(config.ranknet.k).add(ranknet_seed).add(format_double(config.k1)).add(format_double(config.b));
                }
                const auto& stream = loss == LossKind::ranknet ? ranked : pointwise;
                m.params = cells.get(cell, kh.value(), [&] {
                    return distill(arch, *t.params, stream, sc, store);
                });
                models.push_back(std::move(m));
            }
        }
    }

    // ---------------------------------------------------------- evaluation
    std::ostringstream eval_csv;
    write_eval_header(eval_csv);
    for (const auto& coll : data.collections) {
        const Run candidates = bm25_run(index, coll.queries(), config.rerank_depth, "bm25", config.exec);
        write_run_file((root / "runs" / ("bm25__" + coll.name() + ".run")).string(), candidates);
        write_eval_rows(eval_csv, {coll.name(), "bm25", "none", "none"},
                        evaluate_run(candidates, coll, config.metrics, config.exec));
        for (const auto& m : models) {
            if (!m.params) {
                continue;
            }
            const Run run = rerank(*m.params, candidates, coll.queries(), store, m.cell, config.exec);
            write_run_file((root / "runs" / (m.cell + "__" + coll.name() + ".run")).string(), run);
            ModelKey key = m.key;
            key.collection = coll.name();
            write_eval_rows(eval_csv, key, evaluate_run(run, coll, config.metrics, config.exec));
        }
    }
    write_text(root / "eval.csv", eval_csv.str());
    std::istringstream eval_in(eval_csv.str());
    const std::vector<EvalRow> eval_rows = parse_eval_csv(eval_in);
    log("evaluation written");

    // ---------------------------------------------------------- reports
    std::vector<std::string> source_names;
    for (const auto& s : config.contamination) {
        source_names.push_back(s.source_collection);
    }
    for (const auto& src : source_names) {
        std::vector<ModelKey> wanted;
        for (const auto& coll : data.collections) {
            wanted.push_back({coll.name(), "teacher", "lce", "none"});
            wanted.push_back({coll.name(), "teacher", "lce", src});
            for (auto arch : config.students.architectures) {
                for (auto loss : config.students.losses) {
                    for (const auto& c : {std::string("none"), src}) {
                        wanted.push_back({coll.name(), std::string(to_string(arch)),
                                          std::string(to_string(loss)), c});
                    }
                }
            }
        }
        std::map<ModelKey, std::vector<const EvalRow*>> by_key;
        for (const auto& r : eval_rows) {
            by_key[r.key].push_back(&r);
        }
        std::vector<EvalRow> selected;
        for (const auto& k : wanted) {
            auto it = by_key.find(k);
            if (it == by_key.end()) {
                continue;
            }
            for (const EvalRow* r : it->second) {
                selected.push_back(*r);
            }
        }
        const auto report = build_report(selected, config.alpha);
        const fs::path path = root / ("report_" + src + ".csv");
        write_text(path, render([&](std::ostream& o) { write_report(o, report); }));
        summary.reports.push_back(path.string());
    }
    if (!source_names.empty() &&
        std::find(config.students.losses.begin(), config.students.losses.end(), LossKind::kl_div) !=
            config.students.losses.end()) {
        std::vector<std::string> coll_names;
        for (const auto& c : data.collections) {
            coll_names.push_back(c.name());
        }
        write_text(root / "table2.csv", render([&](std::ostream& o) {
                       write_source_table(o, eval_rows, source_names, coll_names,
                                          config.students.architectures, LossKind::kl_div,
                                          config.alpha);
                   }));
    }
    write_text(root / "failures.txt", render([&](std::ostream& o) {
                   for (const auto& f : summary.failures) {
                       o << f << '\n';
                   }
               }));
    log("finished: " + std::to_string(summary.cells_trained) + " trained, " +
        std::to_string(summary.cells_cached) + " cached, " +
        std::to_string(summary.failures.size()) + " failed");
    return summary;
}

}  // namespace contamlab
