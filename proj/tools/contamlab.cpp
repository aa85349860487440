// contamlab command-line driver.
//
// Exit codes: 0 success, 1 failed cell or runtime error, 2 usage error.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <CLI11.hpp>

#include "contamlab/collection.hpp"
#include "contamlab/contaminate.hpp"
#include "contamlab/error.hpp"
#include "contamlab/experiment.hpp"
#include "contamlab/index.hpp"
#include "contamlab/metrics.hpp"
#include "contamlab/ranking.hpp"
#include "contamlab/rng.hpp"
#include "contamlab/synthetic.hpp"
#include "contamlab/trainer.hpp"

namespace fs = std::filesystem;
using namespace contamlab;

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

std::ofstream open_out(const std::string& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError("cannot write " + path);
    }
    return out;
}

// Writes to `path`, or stdout when the path is empty or "-".
template <typename F>
void emit(const std::string& path, F&& write)
{
    if (path.empty() || path == "-") {
        write(std::cout);
        std::cout.flush();
        return;
    }
    auto out = open_out(path);
    write(out);
}

std::unordered_map<std::string, Query> load_query_map(const std::vector<std::string>& paths)
{
    std::unordered_map<std::string, Query> map;
    for (const auto& p : paths) {
        for (auto& q : read_queries(p)) {
            map.insert_or_assign(q.id, std::move(q));
        }
    }
    return map;
}

std::vector<TrainingGroup> load_groups(const std::string& path,
                                       const std::unordered_map<std::string, Query>& queries)
{
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open " + path);
    }
    return parse_groups(in, queries);
}

Exec parse_exec_flag(const std::string& s)
{
    if (s == "serial") {
        return Exec::serial;
    }
    if (s == "parallel") {
        return Exec::parallel;
    }
    throw UsageError("--exec must be serial or parallel");
}

InvertedIndex index_for(const std::string& index_path, const Corpus& corpus)
{
    return index_path.empty() ? InvertedIndex::build(corpus) : InvertedIndex::load_file(index_path);
}

// Shared trainer flags.
struct TrainFlags {
    std::optional<double> lr;
    std::optional<std::size_t> batch;
    std::optional<std::uint64_t> steps;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> group_size;
    std::optional<double> warmup;
    std::optional<std::size_t> dim;
    std::optional<std::size_t> hidden;
    std::string config;
    std::string exec = "serial";

    void add_to(CLI::App* app)
    {
        app->add_option("--config", config, "JSON training config; flags override its fields");
        app->add_option("--lr", lr, "peak learning rate");
        app->add_option("--batch", batch, "groups per step");
        app->add_option("--steps", steps, "step cap (0 = one pass over the stream)");
        app->add_option("--seed", seed, "initialization seed");
        app->add_option("--group-size", group_size, "documents per group");
        app->add_option("--warmup", warmup, "warm-up fraction");
        app->add_option("--dim", dim, "hashed feature dimension");
        app->add_option("--hidden", hidden, "hidden units");
        app->add_option("--exec", exec, "serial or parallel")->check(CLI::IsMember({"serial", "parallel"}));
    }

    TrainConfig resolve(TrainConfig base) const
    {
        if (!config.empty()) {
            std::ifstream in(config);
            if (!in) {
                throw ConfigError("cannot open config " + config);
            }
            std::ostringstream s;
            s << in.rdbuf();
            base = parse_train_config(s.str());
        }
        if (lr) base.base_lr = *lr;
        if (batch) base.batch_queries = *batch;
        if (steps) base.total_steps = *steps;
        if (seed) base.seed = *seed;
        if (group_size) base.group_size = *group_size;
        if (warmup) base.warmup_fraction = *warmup;
        if (dim) base.dim = *dim;
        if (hidden) base.hidden = *hidden;
        base.exec = parse_exec_flag(exec);
        return base;
    }
};

void write_log_file(const std::string& path, const std::vector<TrainLogRow>& log)
{
    if (!path.empty()) {
        auto out = open_out(path);
        write_train_log(out, log);
    }
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"contamlab: test-set contamination in ranking distillation"};
    app.require_subcommand(1);

    // ------------------------------------------------------------ generate
    auto* gen = app.add_subcommand("generate", "write a synthetic collection");
    std::string gen_out = ".";
    std::string gen_config;
    SyntheticConfig gen_cfg = *default_experiment_config().data.synthetic;
    gen->add_option("--out-dir", gen_out, "output directory");
    gen->add_option("--config", gen_config, "experiment config whose data.synthetic block is used");
    gen->add_option("--topics", gen_cfg.n_topics);
    gen->add_option("--docs-per-topic", gen_cfg.docs_per_topic);
    gen->add_option("--queries-per-topic", gen_cfg.queries_per_topic);
    gen->add_option("--vocab-per-topic", gen_cfg.vocab_per_topic);
    gen->add_option("--train-queries-per-topic", gen_cfg.train_queries_per_topic);
    gen->add_option("--ood-topics", gen_cfg.ood_topics);
    gen->add_option("--base-groups", gen_cfg.base_groups);
    gen->add_option("--group-size", gen_cfg.group_size);
    gen->add_option("--seed", gen_cfg.seed);

    // ------------------------------------------------------------ index
    auto* idx = app.add_subcommand("index", "build a BM25 index");
    std::string idx_corpus, idx_out;
    double k1 = InvertedIndex::kDefaultK1, b = InvertedIndex::kDefaultB;
    idx->add_option("--corpus", idx_corpus, "corpus TSV")->required();
    idx->add_option("--out", idx_out, "index file")->required();
    idx->add_option("--k1", k1, "BM25 k1");
    idx->add_option("--b", b, "BM25 b");

    // ------------------------------------------------------------ contaminate
    auto* con = app.add_subcommand("contaminate", "build contaminated groups and inject them");
    std::string con_corpus, con_index, con_queries, con_qrels, con_source = "target";
    std::string con_base, con_out;
    std::vector<std::string> con_query_files;
    ContaminationSpec con_spec;
    int con_grade_max = 3;
    con->add_option("--corpus", con_corpus, "corpus TSV")->required();
    con->add_option("--index", con_index, "index file (built from the corpus when omitted)");
    con->add_option("--collection-queries", con_queries, "test collection queries TSV")->required();
    con->add_option("--qrels", con_qrels, "test collection qrels")->required();
    con->add_option("--source", con_source, "collection name");
    con->add_option("--grade-max", con_grade_max, "declared maximum grade");
    con->add_option("--cutoff", con_spec.relevance_cutoff, "relevance cutoff");
    con->add_option("--group-size", con_spec.group_size, "documents per group");
    con->add_option("--max-fraction", con_spec.max_fraction, "cap on the contaminated share");
    con->add_option("--seed", con_spec.seed, "sampling seed");
    con->add_option("--bm25-depth", con_spec.bm25_depth, "BM25 depth for negatives");
    con->add_option("--base", con_base, "base groups TSV to inject into");
    con->add_option("--train-queries", con_query_files, "query TSVs resolving base group ids");
    con->add_option("--out", con_out, "output groups TSV")->required();

    // ------------------------------------------------------------ train-teacher
    auto* tt = app.add_subcommand("train-teacher", "train a joint teacher with LCE");
    std::string tt_corpus, tt_groups, tt_out, tt_log;
    std::vector<std::string> tt_queries;
    TrainFlags tt_flags;
    tt->add_option("--corpus", tt_corpus, "corpus TSV")->required();
    tt->add_option("--queries", tt_queries, "query TSVs resolving group ids")->required();
    tt->add_option("--groups", tt_groups, "training groups TSV")->required();
    tt->add_option("--out", tt_out, "checkpoint file")->required();
    tt->add_option("--log", tt_log, "training log CSV");
    tt_flags.add_to(tt);

    // ------------------------------------------------------------ distill
    auto* ds = app.add_subcommand("distill", "distill a student from a teacher");
    std::string ds_teacher, ds_corpus, ds_groups, ds_out, ds_log, ds_labels, ds_index;
    std::string ds_arch = "joint", ds_loss = "kl_div";
    std::vector<std::string> ds_queries;
    std::optional<double> ds_temperature;
    std::size_t ds_k = 100;
    std::uint64_t ds_sample_seed = 0;
    TrainFlags ds_flags;
    ds->add_option("--teacher", ds_teacher, "teacher checkpoint")->required();
    ds->add_option("--corpus", ds_corpus, "corpus TSV")->required();
    ds->add_option("--queries", ds_queries, "query TSVs resolving group ids")->required();
    ds->add_option("--groups", ds_groups, "base groups TSV (labels and RankNet queries)")->required();
    ds->add_option("--arch", ds_arch, "student architecture")->check(CLI::IsMember({"joint", "dual"}));
    ds->add_option("--loss", ds_loss, "margin_mse, kl_div or ranknet")
        ->check(CLI::IsMember({"margin_mse", "kl_div", "ranknet"}));
    ds->add_option("--temperature", ds_temperature, "KL temperature");
    ds->add_option("--index", ds_index, "index file for RankNet sampling");
    ds->add_option("--k", ds_k, "RankNet sampling depth");
    ds->add_option("--sample-seed", ds_sample_seed, "RankNet sampling seed");
    ds->add_option("--labels-out", ds_labels, "write the teacher-labeled stream here");
    ds->add_option("--out", ds_out, "checkpoint file")->required();
    ds->add_option("--log", ds_log, "training log CSV");
    ds_flags.add_to(ds);

    // ------------------------------------------------------------ rerank
    auto* rr = app.add_subcommand("rerank", "re-rank BM25 candidates with a model");
    std::string rr_model, rr_corpus, rr_queries, rr_run, rr_index, rr_out, rr_tag = "contamlab";
    std::size_t rr_depth = 100;
    rr->add_option("--model", rr_model, "checkpoint (omit for the BM25 run itself)");
    rr->add_option("--corpus", rr_corpus, "corpus TSV")->required();
    rr->add_option("--queries", rr_queries, "queries TSV")->required();
    rr->add_option("--run", rr_run, "candidate run (BM25 retrieval when omitted)");
    rr->add_option("--index", rr_index, "index file");
    rr->add_option("--depth", rr_depth, "BM25 depth");
    rr->add_option("--tag", rr_tag, "run tag");
    rr->add_option("--out", rr_out, "output run file (stdout when omitted)");

    // ------------------------------------------------------------ evaluate
    auto* ev = app.add_subcommand("evaluate", "score a run against qrels");
    std::string ev_run, ev_qrels, ev_queries, ev_out;
    ModelKey ev_key{"collection", "model", "none", "none"};
    int ev_grade_max = 3;
    EvaluationSettings ev_settings;
    ev->add_option("--run", ev_run, "TREC run file")->required();
    ev->add_option("--qrels", ev_qrels, "TREC qrels file")->required();
    ev->add_option("--queries", ev_queries, "query TSV (defaults to the judged query ids)");
    ev->add_option("--grade-max", ev_grade_max, "declared maximum grade");
    ev->add_option("--cutoff", ev_settings.relevance_cutoff, "relevance cutoff");
    ev->add_option("--collection", ev_key.collection, "collection label");
    ev->add_option("--model", ev_key.model, "model label");
    ev->add_option("--loss", ev_key.loss, "loss label");
    ev->add_option("--contaminated", ev_key.contaminated, "contamination label");
    ev->add_option("--out", ev_out, "evaluation CSV (stdout when omitted)");

    // ------------------------------------------------------------ report
    auto* rp = app.add_subcommand("report", "join evaluation CSVs into a report grid");
    std::vector<std::string> rp_eval;
    std::string rp_out;
    double rp_alpha = 0.05;
    ReportBaseline rp_base;
    rp->add_option("--eval", rp_eval, "evaluation CSVs")->required();
    rp->add_option("--alpha", rp_alpha, "significance level");
    rp->add_option("--baseline-model", rp_base.model, "model label of the baseline row");
    rp->add_option("--baseline-contaminated", rp_base.contaminated, "contamination label of the baseline row");
    rp->add_option("--out", rp_out, "report CSV (stdout when omitted)");

    // ------------------------------------------------------------ run
    auto* run = app.add_subcommand("run", "run the full experiment matrix");
    std::string run_config, run_out_dir, run_exec;
    std::vector<std::string> run_set;
    std::optional<std::uint64_t> run_seed;
    std::optional<int> run_threads;
    bool run_print = false, run_quiet = false;
    run->add_option("--config", run_config, "JSON experiment config (built-in default when omitted)");
    run->add_option("--set", run_set, "override a config field, e.g. teacher.base_lr=0.002");
    run->add_option("--output-dir", run_out_dir, "output directory");
    run->add_option("--seed", run_seed, "master seed");
    run->add_option("--exec", run_exec, "serial or parallel")->check(CLI::IsMember({"serial", "parallel"}));
    run->add_option("--threads", run_threads, "OpenMP threads");
    run->add_flag("--print-config", run_print, "print the resolved config and exit");
    run->add_flag("--quiet", run_quiet, "no progress output");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n\n";
        const auto subs = app.get_subcommands();
        std::cerr << (subs.empty() ? app.help() : subs.front()->help());
        return kExitUsage;
    }

    try {
        if (*gen) {
            if (!gen_config.empty()) {
                auto cfg = load_experiment_config(gen_config);
                if (!cfg.data.synthetic) {
                    throw ConfigError("config has no synthetic data block");
                }
                gen_cfg = *cfg.data.synthetic;
            }
            auto data = generate_synthetic(gen_cfg);
            fs::create_directories(gen_out);
            const fs::path dir(gen_out);
            emit((dir / "corpus.tsv").string(), [&](std::ostream& o) { write_corpus(o, data.corpus); });
            emit((dir / "train_queries.tsv").string(), [&](std::ostream& o) { write_queries(o, data.train_queries); });
            emit((dir / "base_groups.tsv").string(), [&](std::ostream& o) { write_groups(o, data.base_groups); });
            std::vector<const TestCollection*> colls{&data.target};
            if (data.ood) {
                colls.push_back(&*data.ood);
            }
            for (const auto* c : colls) {
                emit((dir / (c->name() + ".queries.tsv")).string(),
                     [&](std::ostream& o) { write_queries(o, c->queries()); });
                emit((dir / (c->name() + ".qrels")).string(),
                     [&](std::ostream& o) { write_qrels(o, c->judgments()); });
            }
            std::cout << "wrote " << data.corpus.size() << " documents, "
                      << data.base_groups.size() << " base groups to " << gen_out << "\n";
        } else if (*idx) {
            auto corpus = read_corpus(idx_corpus);
            auto index = InvertedIndex::build(corpus, k1, b);
            index.save_file(idx_out);
            std::cout << "indexed " << index.n_docs() << " documents, " << index.n_terms()
                      << " terms\n";
        } else if (*con) {
            auto corpus = read_corpus(con_corpus);
            auto index = index_for(con_index, corpus);
            TestCollection coll(con_source, read_queries(con_queries),
                                read_qrels(con_qrels, con_grade_max));
            con_spec.source_collection = con_source;
            auto contaminated = build_contaminated_groups(coll, corpus, index, con_spec);
            std::vector<TrainingGroup> out_groups;
            double achieved = 1.0;
            std::size_t n_contaminated = contaminated.size();
            if (!con_base.empty()) {
                auto queries = load_query_map(con_query_files);
                auto base = load_groups(con_base, queries);
                auto injected = inject(base, contaminated, con_spec.max_fraction,
                                       derive_seed(con_spec.seed, "inject"));
                achieved = injected.achieved_fraction;
                n_contaminated = injected.n_contaminated;
                out_groups = std::move(injected.groups);
            } else {
                out_groups = std::move(contaminated);
            }
            emit(con_out, [&](std::ostream& o) { write_groups(o, out_groups); });
            std::cout << "groups " << out_groups.size() << " contaminated " << n_contaminated
                      << " achieved_fraction " << format_double(achieved) << "\n";
        } else if (*tt) {
            auto corpus = read_corpus(tt_corpus);
            auto queries = load_query_map(tt_queries);
            auto groups = load_groups(tt_groups, queries);
            TrainConfig cfg = tt_flags.resolve(default_experiment_config().teacher);
            cfg.loss_kind = LossKind::lce;
            FeatureStore store(corpus, cfg.dim, cfg.exec);
            auto result = train_teacher(groups, cfg, store);
            result.params.save_file(tt_out);
            write_log_file(tt_log, result.log);
            std::cout << "trained " << result.log.size() << " steps, final loss "
                      << (result.log.empty() ? 0.0 : result.log.back().loss) << "\n";
        } else if (*ds) {
            auto corpus = read_corpus(ds_corpus);
            auto queries = load_query_map(ds_queries);
            auto groups = load_groups(ds_groups, queries);
            const Architecture arch = parse_architecture(ds_arch);
            const auto defaults = default_experiment_config();
            TrainConfig cfg = ds_flags.resolve(defaults.students.train_for(arch));
            cfg.loss_kind = parse_loss_kind(ds_loss);
            if (ds_temperature) {
                cfg.temperature = *ds_temperature;
            }
            auto teacher = ScorerParams::load_file(ds_teacher);
            FeatureStore store(corpus, cfg.dim, cfg.exec);
            std::vector<TeacherGroup> stream;
            if (cfg.loss_kind == LossKind::ranknet) {
                if (!ds_flags.group_size) {
                    cfg.group_size = defaults.ranknet.group_size;
                }
                auto index = index_for(ds_index, corpus);
                std::vector<Query> rq;
                for (const auto& g : groups) {
                    rq.push_back(g.query);
                }
                if (cfg.total_steps > 0) {
                    rq.resize(std::min<std::size_t>(rq.size(), cfg.total_steps * cfg.batch_queries));
                }
                auto sample = sample_ranknet_groups(teacher, index, rq, ds_k, cfg.group_size,
                                                    ds_sample_seed, store, ds_teacher, cfg.exec);
                if (sample.skipped > 0) {
                    std::cerr << "warning: skipped " << sample.skipped
                              << " queries with fewer than " << cfg.group_size << " documents\n";
                }
                stream = std::move(sample.groups);
            } else {
                if (!ds_flags.group_size && !groups.empty()) {
                    cfg.group_size = groups.front().group_size();
                }
                stream = label_pairs(teacher, groups, store, ds_teacher, cfg.exec);
            }
            if (!ds_labels.empty()) {
                emit(ds_labels, [&](std::ostream& o) { write_teacher_groups(o, stream); });
            }
            auto result = distill(arch, teacher, stream, cfg, store);
            result.params.save_file(ds_out);
            write_log_file(ds_log, result.log);
            std::cout << "distilled " << result.log.size() << " steps, final loss "
                      << (result.log.empty() ? 0.0 : result.log.back().loss) << "\n";
        } else if (*rr) {
            auto corpus = read_corpus(rr_corpus);
            auto queries = read_queries(rr_queries);
            Run candidates;
            if (!rr_run.empty()) {
                candidates = read_run(rr_run);
            } else {
                candidates = bm25_run(index_for(rr_index, corpus), queries, rr_depth, "bm25");
            }
            Run out = candidates;
            if (!rr_model.empty()) {
                auto params = ScorerParams::load_file(rr_model);
                FeatureStore store(corpus, params.dim());
                out = rerank(params, candidates, queries, store, rr_tag);
            } else {
                out.tag = rr_tag;
            }
            emit(rr_out, [&](std::ostream& o) { write_run(o, out); });
        } else if (*ev) {
            auto run_in = read_run(ev_run);
            auto qrels = read_qrels(ev_qrels, ev_grade_max);
            std::vector<Query> queries;
            if (!ev_queries.empty()) {
                queries = read_queries(ev_queries);
            } else {
                std::set<std::string> ids;
                for (const auto& j : qrels.judgments) {
                    ids.insert(j.query_id);
                }
                for (const auto& id : ids) {
                    queries.push_back({id, {}});
                }
            }
            TestCollection coll(ev_key.collection, std::move(queries), std::move(qrels));
            auto evaluation = evaluate_run(run_in, coll, ev_settings);
            emit(ev_out, [&](std::ostream& o) {
                write_eval_header(o);
                write_eval_rows(o, ev_key, evaluation);
            });
        } else if (*rp) {
            std::vector<EvalRow> rows;
            for (const auto& path : rp_eval) {
                std::ifstream in(path);
                if (!in) {
                    throw DataError("cannot open " + path);
                }
                auto part = parse_eval_csv(in);
                rows.insert(rows.end(), part.begin(), part.end());
            }
            auto report = build_report(rows, rp_alpha, rp_base);
            emit(rp_out, [&](std::ostream& o) { write_report(o, report); });
        } else if (*run) {
            ExperimentConfig cfg =
                run_config.empty() ? default_experiment_config() : load_experiment_config(run_config);
            std::vector<std::string> sets = run_set;
            if (!run_out_dir.empty()) {
                sets.push_back("output_dir=\"" + run_out_dir + "\"");
            }
            if (run_seed) {
                sets.push_back("master_seed=" + std::to_string(*run_seed));
            }
            if (!run_exec.empty()) {
                sets.push_back("exec=\"" + run_exec + "\"");
            }
            if (run_threads) {
                sets.push_back("threads=" + std::to_string(*run_threads));
            }
            if (!sets.empty()) {
                cfg = apply_overrides(cfg, sets);
            }
            if (run_print) {
                std::cout << experiment_config_json(cfg);
                return 0;
            }
            auto summary = run_experiment(cfg, run_quiet ? nullptr : &std::cerr);
            for (const auto& r : summary.reports) {
                std::cout << r << "\n";
            }
            if (!summary.ok()) {
                for (const auto& f : summary.failures) {
                    std::cerr << "failed: " << f << "\n";
                }
                return kExitFailure;
            }
        }
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitFailure;
    }
    return 0;
}
