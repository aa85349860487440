#include "contamlab/collection.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <unordered_set>

#include "contamlab/error.hpp"

namespace contamlab {

namespace {

std::vector<std::string_view> split_ws(std::string_view line)
{
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) {
            ++i;
        }
        std::size_t j = i;
        while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) {
            ++j;
        }
        if (j > i) {
            out.push_back(line.substr(i, j - i));
        }
        i = j;
    }
    return out;
}

std::vector<std::string_view> split_on(std::string_view line, char sep)
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

bool is_blank(std::string_view line)
{
    return std::all_of(line.begin(), line.end(),
                       [](unsigned char c) { return std::isspace(c) != 0; });
}

std::string_view strip_cr(std::string_view line)
{
    if (!line.empty() && line.back() == '\r') {
        line.remove_suffix(1);
    }
    return line;
}

template <typename T>
bool parse_number(std::string_view s, T& out)
{
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && ptr == s.data() + s.size();
}

std::ifstream open_in(const std::string& path)
{
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open " + path);
    }
    return in;
}

}  // namespace

Tokens tokenize(std::string_view text)
{
    Tokens tokens;
    std::string current;
    for (char ch : text) {
        auto c = static_cast<unsigned char>(ch);
        if (std::isalnum(c)) {
            current.push_back(static_cast<char>(std::tolower(c)));
        } else if (!current.empty()) {
            tokens.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) {
        tokens.push_back(std::move(current));
    }
    return tokens;
}

std::string join_tokens(const Tokens& tokens)
{
    std::string out;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (i > 0) {
            out.push_back(' ');
        }
        out += tokens[i];
    }
    return out;
}

std::string format_double(double value)
{
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, ptr);
}

// ---------------------------------------------------------------- Corpus

Corpus::Corpus(std::vector<Document> docs)
{
    docs_.reserve(docs.size());
    for (auto& d : docs) {
        add(std::move(d));
    }
}

void Corpus::add(Document doc)
{
    if (doc.tokens.empty()) {
        throw ValidationError("document " + doc.id + " has no tokens");
    }
    if (!by_id_.emplace(doc.id, docs_.size()).second) {
        throw ValidationError("duplicate document id " + doc.id);
    }
    docs_.push_back(std::move(doc));
}

bool Corpus::contains(std::string_view id) const
{
    return by_id_.contains(std::string(id));
}

const Document* Corpus::find(std::string_view id) const
{
    auto it = by_id_.find(std::string(id));
    return it == by_id_.end() ? nullptr : &docs_[it->second];
}

const Document& Corpus::at(std::string_view id) const
{
    const Document* d = find(id);
    if (d == nullptr) {
        throw LookupError("unknown document " + std::string(id));
    }
    return *d;
}

// ---------------------------------------------------------------- qrels

Qrels parse_qrels(std::istream& in, std::optional<int> declared_grade_max)
{
    Qrels qrels;
    std::set<std::pair<std::string, std::string>> seen;
    std::string raw;
    std::size_t lineno = 0;
    int observed_max = 0;
    while (std::getline(in, raw)) {
        ++lineno;
        std::string_view line = strip_cr(raw);
        if (is_blank(line)) {
            continue;
        }
        auto fields = split_ws(line);
        if (fields.size() != 4) {
            throw ParseError(lineno, "expected 4 fields `qid iter docid grade`, got " +
                                         std::to_string(fields.size()));
        }
        int grade = 0;
        if (!parse_number(fields[3], grade)) {
            throw ParseError(lineno, "grade is not an integer: " + std::string(fields[3]));
        }
        if (grade < 0) {
            throw ValidationError("line " + std::to_string(lineno) + ": negative grade");
        }
        if (declared_grade_max && grade > *declared_grade_max) {
            throw ValidationError("line " + std::to_string(lineno) + ": grade " +
                                  std::to_string(grade) + " above declared maximum " +
                                  std::to_string(*declared_grade_max));
        }
        GradedJudgment j{std::string(fields[0]), std::string(fields[2]), grade};
        if (!seen.emplace(j.query_id, j.doc_id).second) {
            throw ValidationError("line " + std::to_string(lineno) + ": duplicate judgment for (" +
                                  j.query_id + ", " + j.doc_id + ")");
        }
        observed_max = std::max(observed_max, grade);
        qrels.judgments.push_back(std::move(j));
    }
    qrels.grade_max = declared_grade_max.value_or(observed_max);
    return qrels;
}

Qrels read_qrels(const std::string& path, std::optional<int> declared_grade_max)
{
    auto in = open_in(path);
    return parse_qrels(in, declared_grade_max);
}

void write_qrels(std::ostream& out, const std::vector<GradedJudgment>& judgments)
{
    for (const auto& j : judgments) {
        out << j.query_id << " 0 " << j.doc_id << ' ' << j.grade << '\n';
    }
}

// ---------------------------------------------------------------- TestCollection

TestCollection::TestCollection(std::string name, std::vector<Query> queries, Qrels qrels)
    : name_(std::move(name)), grade_max_(qrels.grade_max), queries_(std::move(queries)),
      judgments_(std::move(qrels.judgments))
{
    for (std::size_t i = 0; i < queries_.size(); ++i) {
        if (!query_index_.emplace(queries_[i].id, i).second) {
            throw ValidationError("duplicate query id " + queries_[i].id + " in " + name_);
        }
    }
    for (const auto& j : judgments_) {
        if (!query_index_.contains(j.query_id)) {
            throw ValidationError("judgment references unknown query " + j.query_id + " in " + name_);
        }
        if (j.grade < 0 || j.grade > grade_max_) {
            throw ValidationError("grade out of range for (" + j.query_id + ", " + j.doc_id + ")");
        }
        if (!by_query_[j.query_id].emplace(j.doc_id, j.grade).second) {
            throw ValidationError("duplicate judgment for (" + j.query_id + ", " + j.doc_id + ")");
        }
    }
}

bool TestCollection::has_query(std::string_view qid) const
{
    return query_index_.contains(std::string(qid));
}

const Query& TestCollection::query(std::string_view qid) const
{
    auto it = query_index_.find(std::string(qid));
    if (it == query_index_.end()) {
        throw LookupError("unknown query " + std::string(qid) + " in " + name_);
    }
    return queries_[it->second];
}

const std::map<std::string, int>& TestCollection::judged(std::string_view qid) const
{
    static const std::map<std::string, int> empty;
    auto it = by_query_.find(std::string(qid));
    return it == by_query_.end() ? empty : it->second;
}

// ---------------------------------------------------------------- groups

std::string_view to_string(GroupOrigin origin)
{
    return origin == GroupOrigin::base ? "base" : "contaminated";
}

GroupOrigin parse_origin(std::string_view s)
{
    if (s == "base") {
        return GroupOrigin::base;
    }
    if (s == "contaminated") {
        return GroupOrigin::contaminated;
    }
    throw ValidationError("unknown group origin `" + std::string(s) + "`");
}

void validate_group(const TrainingGroup& group)
{
    if (group.negatives.empty()) {
        throw ValidationError("group for query " + group.query.id + " has no negatives");
    }
    std::unordered_set<std::string_view> seen;
    for (const auto& n : group.negatives) {
        if (n == group.positive) {
            throw ValidationError("group for query " + group.query.id +
                                  " lists its positive as a negative");
        }
        if (!seen.insert(n).second) {
            throw ValidationError("group for query " + group.query.id + " repeats negative " + n);
        }
    }
}

void write_groups(std::ostream& out, const std::vector<TrainingGroup>& groups)
{
    for (const auto& g : groups) {
        out << g.query.id << '\t' << g.positive << '\t';
        for (std::size_t i = 0; i < g.negatives.size(); ++i) {
            if (i > 0) {
                out << ',';
            }
            out << g.negatives[i];
        }
        out << '\t' << to_string(g.origin) << '\n';
    }
}

std::vector<TrainingGroup> parse_groups(std::istream& in,
                                        const std::unordered_map<std::string, Query>& queries)
{
    std::vector<TrainingGroup> groups;
    std::string raw;
    std::size_t lineno = 0;
    while (std::getline(in, raw)) {
        ++lineno;
        std::string_view line = strip_cr(raw);
        if (is_blank(line)) {
            continue;
        }
        auto fields = split_on(line, '\t');
        if (fields.size() != 4) {
            throw ParseError(lineno, "expected 4 tab-separated fields");
        }
        auto q = queries.find(std::string(fields[0]));
        if (q == queries.end()) {
            throw DataError("line " + std::to_string(lineno) + ": unknown query " +
                            std::string(fields[0]));
        }
        TrainingGroup g;
        g.query = q->second;
        g.positive = std::string(fields[1]);
        for (auto n : split_on(fields[2], ',')) {
            g.negatives.emplace_back(n);
        }
        try {
            g.origin = parse_origin(fields[3]);
            validate_group(g);
        } catch (const ValidationError& e) {
            throw ParseError(lineno, e.what());
        }
        groups.push_back(std::move(g));
    }
    return groups;
}

// ---------------------------------------------------------------- runs

void validate_run(const Run& run)
{
    for (const auto& [qid, docs] : run.rankings) {
        std::unordered_set<std::string_view> seen;
        for (std::size_t i = 0; i < docs.size(); ++i) {
            if (!seen.insert(docs[i].doc_id).second) {
                throw ValidationError("query " + qid + " ranks " + docs[i].doc_id + " twice");
            }
            if (i > 0 && docs[i].score > docs[i - 1].score) {
                throw ValidationError("query " + qid + " scores increase at rank " +
                                      std::to_string(i + 1));
            }
        }
    }
}

void write_run(std::ostream& out, const Run& run)
{
    for (const auto& [qid, docs] : run.rankings) {
        for (std::size_t i = 0; i < docs.size(); ++i) {
            out << qid << " Q0 " << docs[i].doc_id << ' ' << (i + 1) << ' '
                << format_double(docs[i].score) << ' ' << run.tag << '\n';
        }
    }
}

Run parse_run(std::istream& in)
{
    Run run;
    bool have_tag = false;
    std::string raw;
    std::size_t lineno = 0;
    while (std::getline(in, raw)) {
        ++lineno;
        std::string_view line = strip_cr(raw);
        if (is_blank(line)) {
            continue;
        }
        auto f = split_ws(line);
        if (f.size() != 6) {
            throw ParseError(lineno, "expected 6 fields `qid Q0 docid rank score tag`");
        }
        std::size_t rank = 0;
        double score = 0.0;
        if (!parse_number(f[3], rank)) {
            throw ParseError(lineno, "rank is not a positive integer");
        }
        if (!parse_number(f[4], score)) {
            throw ParseError(lineno, "score is not a number");
        }
        if (!have_tag) {
            run.tag = std::string(f[5]);
            have_tag = true;
        } else if (f[5] != run.tag) {
            throw ValidationError("line " + std::to_string(lineno) + ": mixed run tags");
        }
        auto& docs = run.rankings[std::string(f[0])];
        if (rank != docs.size() + 1) {
            throw ValidationError("line " + std::to_string(lineno) + ": rank " + std::to_string(rank) +
                                  " does not follow rank " + std::to_string(docs.size()));
        }
        if (!docs.empty() && score > docs.back().score) {
            throw ValidationError("line " + std::to_string(lineno) +
                                  ": score increases with rank");
        }
        docs.push_back({std::string(f[2]), score});
    }
    validate_run(run);
    return run;
}

Run read_run(const std::string& path)
{
    auto in = open_in(path);
    return parse_run(in);
}

void write_run_file(const std::string& path, const Run& run)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError("cannot write " + path);
    }
    write_run(out, run);
}

// ---------------------------------------------------------------- TSV text files

std::vector<std::pair<std::string, std::string>> parse_id_text_tsv(std::istream& in)
{
    std::vector<std::pair<std::string, std::string>> rows;
    std::string raw;
    std::size_t lineno = 0;
    while (std::getline(in, raw)) {
        ++lineno;
        std::string_view line = strip_cr(raw);
        if (is_blank(line)) {
            continue;
        }
        auto tab = line.find('\t');
        if (tab == std::string_view::npos || tab == 0) {
            throw ParseError(lineno, "expected `id<TAB>text`");
        }
        rows.emplace_back(std::string(line.substr(0, tab)), std::string(line.substr(tab + 1)));
    }
    return rows;
}

Corpus read_corpus(const std::string& path)
{
    auto in = open_in(path);
    Corpus corpus;
    for (auto& [id, text] : parse_id_text_tsv(in)) {
        corpus.add({std::move(id), tokenize(text)});
    }
    return corpus;
}

std::vector<Query> read_queries(const std::string& path)
{
    auto in = open_in(path);
    std::vector<Query> out;
    for (auto& [id, text] : parse_id_text_tsv(in)) {
        out.push_back({std::move(id), tokenize(text)});
    }
    return out;
}

void write_corpus(std::ostream& out, const Corpus& corpus)
{
    for (const auto& d : corpus.documents()) {
        out << d.id << '\t' << join_tokens(d.tokens) << '\n';
    }
}

void write_queries(std::ostream& out, const std::vector<Query>& queries)
{
    for (const auto& q : queries) {
        out << q.id << '\t' << join_tokens(q.tokens) << '\n';
    }
}

}  // namespace contamlab
