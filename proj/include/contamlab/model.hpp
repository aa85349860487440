#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "contamlab/collection.hpp"

namespace contamlab {

// ------------------------------------------------------------------ features

/// Hashed bag-of-terms vector of dimension `dim`, stored sparsely with
/// ascending indices. Unit L2 norm unless every bucket cancelled to zero.
struct FeatureVector {
    std::size_t dim = 0;
    std::vector<std::uint32_t> index;
    std::vector<double> value;

    [[nodiscard]] std::size_t nnz() const noexcept { return index.size(); }
    [[nodiscard]] std::vector<double> dense() const;
    bool operator==(const FeatureVector&) const = default;
};

constexpr std::size_t kDefaultFeatureDim = 1u << 12;
constexpr std::size_t kDefaultHidden = 64;

// Signed feature hashing: each token adds +-1 to one bucket, then the vector
// is L2-normalized. Empty input gives the zero vector.
FeatureVector featurize(const Tokens& tokens, std::size_t dim = kDefaultFeatureDim);

// ------------------------------------------------------------------ params

enum class Architecture : std::uint8_t { joint = 0, dual = 1 };

std::string_view to_string(Architecture arch);
Architecture parse_architecture(std::string_view s);

/// Offsets of each parameter block inside the flat parameter vector.
///
/// joint: W1 (3*dim rows x hidden), b1 (hidden), w2 (hidden), b2 (1)
///        score = w2 . tanh(W1^T [q; d; q*d] + b1) + b2
/// dual:  W1 (dim rows x hidden), b1 (hidden), W2 (hidden x hidden), b2 (hidden)
///        encode(x) = W2 tanh(W1^T x + b1) + b2, score = encode(q) . encode(d)
///
/// W1 is stored row-per-input so a sparse input touches contiguous rows.
struct ParamLayout {
    std::size_t inputs = 0;  // rows of W1
    std::size_t hidden = 0;
    std::size_t w1 = 0, b1 = 0, w2 = 0, b2 = 0, total = 0;

    static ParamLayout make(Architecture arch, std::size_t dim, std::size_t hidden);
    // Everything after W1; small and handled densely.
    [[nodiscard]] std::size_t tail_size() const noexcept { return total - b1; }
    bool operator==(const ParamLayout&) const = default;
};

class ScorerParams {
  public:
    ScorerParams() = default;

    /// Xavier-uniform weights drawn from `init_seed`, zero biases. The dual
    /// tower shares one set of weights between queries and documents.
    static ScorerParams init(Architecture arch, std::size_t dim, std::size_t hidden,
                             std::uint64_t init_seed);

    [[nodiscard]] Architecture architecture() const noexcept { return arch_; }
    [[nodiscard]] std::size_t dim() const noexcept { return dim_; }
    [[nodiscard]] std::size_t hidden() const noexcept { return layout_.hidden; }
    [[nodiscard]] const ParamLayout& layout() const noexcept { return layout_; }
    [[nodiscard]] std::uint64_t init_seed() const noexcept { return init_seed_; }
    [[nodiscard]] std::uint64_t step_count() const noexcept { return step_count_; }
    void set_step_count(std::uint64_t s) noexcept { step_count_ = s; }

    [[nodiscard]] std::span<double> values() noexcept { return values_; }
    [[nodiscard]] std::span<const double> values() const noexcept { return values_; }
    [[nodiscard]] std::size_t size() const noexcept { return values_.size(); }

    // Sets the joint output layer (w2, b2) to zero.
    void zero_output_layer();

    [[nodiscard]] bool all_finite() const;

    void save(std::ostream& out) const;
    static ScorerParams load(std::istream& in);
    void save_file(const std::string& path) const;
    static ScorerParams load_file(const std::string& path);

    bool operator==(const ScorerParams&) const = default;

  private:
    Architecture arch_ = Architecture::joint;
    std::size_t dim_ = 0;
    ParamLayout layout_;
    std::vector<double> values_;
    std::uint64_t init_seed_ = 0;
    std::uint64_t step_count_ = 0;
};

// ------------------------------------------------------------------ gradients

/// Gradient of one score (or a weighted sum of scores) with respect to the
/// parameters: a few W1 rows plus the dense tail block.
struct SparseGrad {
    std::size_t hidden = 0;
    std::vector<std::uint32_t> rows;  // may repeat; contributions add
    std::vector<double> row_values;   // rows.size() * hidden
    std::vector<double> tail;         // layout.tail_size()

    void reset(const ParamLayout& layout);
    // dense[offset] += scale * gradient, in a fixed order.
    void add_to(std::span<double> dense, const ParamLayout& layout, double scale = 1.0) const;
    // Accumulates another gradient scaled by `scale`.
    void append(const SparseGrad& other, double scale);
    [[nodiscard]] std::vector<double> to_dense(const ParamLayout& layout) const;
};

// ------------------------------------------------------------------ scoring

// Throws UsageError if params are not a joint scorer.
double joint_score(const ScorerParams& params, const FeatureVector& q, const FeatureVector& d,
                   SparseGrad* grad = nullptr);
double joint_score(const ScorerParams& params, const Tokens& q, const Tokens& d,
                   SparseGrad* grad = nullptr);

// Throws UsageError if params are not a dual scorer.
std::vector<double> dual_encode(const ScorerParams& params, const FeatureVector& x);
std::vector<double> dual_encode(const ScorerParams& params, const Tokens& text);
double dual_score(const ScorerParams& params, const FeatureVector& q, const FeatureVector& d,
                  SparseGrad* grad = nullptr);
double dual_score(const ScorerParams& params, const Tokens& q, const Tokens& d,
                  SparseGrad* grad = nullptr);

// Dot product with a fixed summation order; dual scores are defined through it.
double embedding_dot(std::span<const double> a, std::span<const double> b);

// Dispatches on the architecture.
double score(const ScorerParams& params, const FeatureVector& q, const FeatureVector& d,
             SparseGrad* grad = nullptr);

}  // namespace contamlab
