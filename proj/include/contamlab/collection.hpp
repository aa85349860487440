#pragma once

#include <cstddef>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace contamlab {

using Tokens = std::vector<std::string>;

// Lowercases ASCII and splits on every non-alphanumeric byte.
Tokens tokenize(std::string_view text);

std::string join_tokens(const Tokens& tokens);

struct Document {
    std::string id;
    Tokens tokens;
};

struct Query {
    std::string id;
    Tokens tokens;

    bool operator==(const Query&) const = default;
};

/// Documents in insertion order with id lookup. Ids are unique and every
/// document has at least one token.
class Corpus {
  public:
    Corpus() = default;
    explicit Corpus(std::vector<Document> docs);

    void add(Document doc);

    [[nodiscard]] std::size_t size() const noexcept { return docs_.size(); }
    [[nodiscard]] bool empty() const noexcept { return docs_.empty(); }
    [[nodiscard]] const std::vector<Document>& documents() const noexcept { return docs_; }
    [[nodiscard]] const Document& operator[](std::size_t i) const { return docs_[i]; }

    [[nodiscard]] bool contains(std::string_view id) const;
    // Throws LookupError for unknown ids.
    [[nodiscard]] const Document& at(std::string_view id) const;
    [[nodiscard]] const Document* find(std::string_view id) const;

  private:
    std::vector<Document> docs_;
    std::unordered_map<std::string, std::size_t> by_id_;
};

struct GradedJudgment {
    std::string query_id;
    std::string doc_id;
    int grade = 0;

    bool operator==(const GradedJudgment&) const = default;
};

struct Qrels {
    std::vector<GradedJudgment> judgments;
    int grade_max = 0;
};

/// Parses TREC qrels (`qid iter docid grade`). Duplicate (qid, docid) pairs,
/// negative grades and grades above `declared_grade_max` are rejected. When no
/// range is declared, grade_max is the largest grade seen.
Qrels parse_qrels(std::istream& in, std::optional<int> declared_grade_max = std::nullopt);
Qrels read_qrels(const std::string& path, std::optional<int> declared_grade_max = std::nullopt);
void write_qrels(std::ostream& out, const std::vector<GradedJudgment>& judgments);

class TestCollection {
  public:
    TestCollection() = default;
    // Validates that every judged query exists and every grade is in range.
    TestCollection(std::string name, std::vector<Query> queries, Qrels qrels);

    [[nodiscard]] const std::string& name() const noexcept { return name_; }
    [[nodiscard]] int grade_max() const noexcept { return grade_max_; }
    [[nodiscard]] const std::vector<Query>& queries() const noexcept { return queries_; }
    [[nodiscard]] const std::vector<GradedJudgment>& judgments() const noexcept { return judgments_; }

    [[nodiscard]] bool has_query(std::string_view qid) const;
    [[nodiscard]] const Query& query(std::string_view qid) const;

    // doc_id -> grade for one query; empty map for queries without judgments.
    [[nodiscard]] const std::map<std::string, int>& judged(std::string_view qid) const;

  private:
    std::string name_;
    int grade_max_ = 0;
    std::vector<Query> queries_;
    std::vector<GradedJudgment> judgments_;
    std::unordered_map<std::string, std::size_t> query_index_;
    std::unordered_map<std::string, std::map<std::string, int>> by_query_;
};

enum class GroupOrigin { base, contaminated };

std::string_view to_string(GroupOrigin origin);
GroupOrigin parse_origin(std::string_view s);

struct TrainingGroup {
    Query query;
    std::string positive;
    std::vector<std::string> negatives;
    GroupOrigin origin = GroupOrigin::base;

    [[nodiscard]] std::size_t group_size() const noexcept { return negatives.size() + 1; }
    bool operator==(const TrainingGroup&) const = default;
};

// Throws ValidationError unless the positive is absent from the negatives, the
// negatives are distinct and there is at least one negative.
void validate_group(const TrainingGroup& group);

struct RankedDoc {
    std::string doc_id;
    double score = 0.0;

    bool operator==(const RankedDoc&) const = default;
};

/// Per-query ranked lists, descending by score, query ids kept sorted.
struct Run {
    std::string tag = "contamlab";
    std::map<std::string, std::vector<RankedDoc>> rankings;

    bool operator==(const Run&) const = default;
};

void validate_run(const Run& run);

/// `qid Q0 docid rank score tag`, ranks from 1, scores in shortest
/// round-trip form.
void write_run(std::ostream& out, const Run& run);
Run parse_run(std::istream& in);
Run read_run(const std::string& path);
void write_run_file(const std::string& path, const Run& run);

// `id<TAB>text` files used for corpora and query sets.
std::vector<std::pair<std::string, std::string>> parse_id_text_tsv(std::istream& in);
Corpus read_corpus(const std::string& path);
std::vector<Query> read_queries(const std::string& path);
void write_corpus(std::ostream& out, const Corpus& corpus);
void write_queries(std::ostream& out, const std::vector<Query>& queries);

/// `qid<TAB>pos<TAB>neg1,...,negk<TAB>origin`. Query text is resolved through
/// `queries`; an unknown query id is a DataError.
void write_groups(std::ostream& out, const std::vector<TrainingGroup>& groups);
std::vector<TrainingGroup> parse_groups(std::istream& in,
                                        const std::unordered_map<std::string, Query>& queries);

std::string format_double(double value);

}  // namespace contamlab
