#include "contamlab/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include "contamlab/binary_io.hpp"
#include "contamlab/error.hpp"
#include "contamlab/rng.hpp"

namespace contamlab {

namespace {

constexpr char kMagic[9] = "CLABCKPT";
constexpr std::uint32_t kVersion = 1;

using Active = std::vector<std::pair<std::uint32_t, double>>;

void require(const ScorerParams& p, Architecture arch, const char* op)
{
    if (p.architecture() != arch) {
        throw UsageError(std::string(op) + " called on a " + std::string(to_string(p.architecture())) +
                         " scorer");
    }
}

void check_dim(const ScorerParams& p, const FeatureVector& x)
{
    if (x.dim != p.dim()) {
        throw UsageError("feature dimension " + std::to_string(x.dim) + " does not match scorer dimension " +
                         std::to_string(p.dim()));
    }
}

Active joint_inputs(const FeatureVector& q, const FeatureVector& d)
{
    const auto dim = static_cast<std::uint32_t>(q.dim);
    Active in;
    in.reserve(q.nnz() + d.nnz() + std::min(q.nnz(), d.nnz()));
    for (std::size_t i = 0; i < q.nnz(); ++i) {
        in.emplace_back(q.index[i], q.value[i]);
    }
    for (std::size_t i = 0; i < d.nnz(); ++i) {
        in.emplace_back(dim + d.index[i], d.value[i]);
    }
    std::size_t a = 0;
    std::size_t b = 0;
    while (a < q.nnz() && b < d.nnz()) {
        if (q.index[a] < d.index[b]) {
            ++a;
        } else if (d.index[b] < q.index[a]) {
            ++b;
        } else {
            in.emplace_back(2 * dim + q.index[a], q.value[a] * d.value[b]);
            ++a;
            ++b;
        }
    }
    return in;
}

Active plain_inputs(const FeatureVector& x)
{
    Active in;
    in.reserve(x.nnz());
    for (std::size_t i = 0; i < x.nnz(); ++i) {
        in.emplace_back(x.index[i], x.value[i]);
    }
    return in;
}

// tanh(W1^T x + b1)
std::vector<double> hidden_layer(std::span<const double> w, const ParamLayout& L, const Active& in)
{
    const std::size_t H = L.hidden;
    std::vector<double> pre(w.begin() + static_cast<std::ptrdiff_t>(L.b1),
                            w.begin() + static_cast<std::ptrdiff_t>(L.b1 + H));
    for (const auto& [row, x] : in) {
        const double* wr = w.data() + L.w1 + static_cast<std::size_t>(row) * H;
        for (std::size_t j = 0; j < H; ++j) {
            pre[j] += x * wr[j];
        }
    }
    for (auto& v : pre) {
        v = std::tanh(v);
    }
    return pre;
}

// Adds the W1 rows and b1 gradient for d(out)/d(pre) = dpre.
void backprop_hidden(SparseGrad& g, const ParamLayout& L, const Active& in,
                     std::span<const double> dpre)
{
    const std::size_t H = L.hidden;
    for (const auto& [row, x] : in) {
        g.rows.push_back(row);
        for (std::size_t j = 0; j < H; ++j) {
            g.row_values.push_back(x * dpre[j]);
        }
    }
    for (std::size_t j = 0; j < H; ++j) {
        g.tail[j] += dpre[j];  // b1 is the first tail block
    }
}

std::vector<double> dual_embed(std::span<const double> w, const ParamLayout& L,
                               const std::vector<double>& h)
{
    const std::size_t H = L.hidden;
    std::vector<double> e(H);
    for (std::size_t k = 0; k < H; ++k) {
        double acc = w[L.b2 + k];
        const double* row = w.data() + L.w2 + k * H;
        for (std::size_t j = 0; j < H; ++j) {
            acc += row[j] * h[j];
        }
        e[k] = acc;
    }
    return e;
}

// Gradient of (ge . encode(x)) for one tower.
void dual_backprop(SparseGrad& g, std::span<const double> w, const ParamLayout& L, const Active& in,
                   const std::vector<double>& h, const std::vector<double>& ge)
{
    const std::size_t H = L.hidden;
    const std::size_t w2_off = L.w2 - L.b1;
    const std::size_t b2_off = L.b2 - L.b1;
    std::vector<double> dpre(H, 0.0);
    for (std::size_t k = 0; k < H; ++k) {
        g.tail[b2_off + k] += ge[k];
        const double* row = w.data() + L.w2 + k * H;
        for (std::size_t j = 0; j < H; ++j) {
            g.tail[w2_off + k * H + j] += ge[k] * h[j];
            dpre[j] += row[j] * ge[k];
        }
    }
    for (std::size_t j = 0; j < H; ++j) {
        dpre[j] *= 1.0 - h[j] * h[j];
    }
    backprop_hidden(g, L, in, dpre);
}

}  // namespace

// ------------------------------------------------------------------ features

std::vector<double> FeatureVector::dense() const
{
    std::vector<double> out(dim, 0.0);
    for (std::size_t i = 0; i < index.size(); ++i) {
        out[index[i]] = value[i];
    }
    return out;
}

FeatureVector featurize(const Tokens& tokens, std::size_t dim)
{
    if (dim == 0) {
        throw UsageError("feature dimension must be >= 1");
    }
    std::map<std::uint32_t, long> buckets;
    for (const auto& t : tokens) {
        const std::uint64_t h = mix64(fnv1a64(t));
        const auto bucket = static_cast<std::uint32_t>(h % dim);
        buckets[bucket] += (h >> 63) != 0 ? -1 : 1;
    }
    FeatureVector fv;
    fv.dim = dim;
    double sq = 0.0;
    for (const auto& [bucket, count] : buckets) {
        if (count == 0) {
            continue;
        }
        fv.index.push_back(bucket);
        fv.value.push_back(static_cast<double>(count));
        sq += static_cast<double>(count) * static_cast<double>(count);
    }
    if (sq > 0.0) {
        const double inv = 1.0 / std::sqrt(sq);
        for (auto& v : fv.value) {
            v *= inv;
        }
    }
    return fv;
}

// ------------------------------------------------------------------ params

std::string_view to_string(Architecture arch)
{
    return arch == Architecture::joint ? "joint" : "dual";
}

Architecture parse_architecture(std::string_view s)
{
    if (s == "joint") {
        return Architecture::joint;
    }
    if (s == "dual") {
        return Architecture::dual;
    }
    throw UsageError("unknown architecture `" + std::string(s) + "` (expected joint or dual)");
}

ParamLayout ParamLayout::make(Architecture arch, std::size_t dim, std::size_t hidden)
{
    if (dim == 0 || hidden == 0) {
        throw ConfigError("scorer dimension and hidden width must be >= 1");
    }
    ParamLayout L;
    L.hidden = hidden;
    L.inputs = arch == Architecture::joint ? 3 * dim : dim;
    L.w1 = 0;
    L.b1 = L.inputs * hidden;
    L.w2 = L.b1 + hidden;
    if (arch == Architecture::joint) {
        L.b2 = L.w2 + hidden;
        L.total = L.b2 + 1;
    } else {
        L.b2 = L.w2 + hidden * hidden;
        L.total = L.b2 + hidden;
    }
    return L;
}

ScorerParams ScorerParams::init(Architecture arch, std::size_t dim, std::size_t hidden,
                                std::uint64_t init_seed)
{
    ScorerParams p;
    p.arch_ = arch;
    p.dim_ = dim;
    p.layout_ = ParamLayout::make(arch, dim, hidden);
    p.init_seed_ = init_seed;
    p.values_.assign(p.layout_.total, 0.0);

    Rng rng(init_seed);
    const auto& L = p.layout_;
    const double lim1 = std::sqrt(6.0 / static_cast<double>(L.inputs + hidden));
    for (std::size_t i = L.w1; i < L.b1; ++i) {
        p.values_[i] = rng.uniform(-lim1, lim1);
    }
    const std::size_t out_width = arch == Architecture::joint ? 1 : hidden;
    const double lim2 = std::sqrt(6.0 / static_cast<double>(hidden + out_width));
    for (std::size_t i = L.w2; i < L.b2; ++i) {
        p.values_[i] = rng.uniform(-lim2, lim2);
    }
    return p;
}

void ScorerParams::zero_output_layer()
{
    std::fill(values_.begin() + static_cast<std::ptrdiff_t>(layout_.w2), values_.end(), 0.0);
}

bool ScorerParams::all_finite() const
{
    return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

void ScorerParams::save(std::ostream& out) const
{
    binio::put_magic(out, kMagic);
    binio::put<std::uint32_t>(out, kVersion);
    binio::put<std::uint8_t>(out, static_cast<std::uint8_t>(arch_));
    binio::put<std::uint64_t>(out, dim_);
    binio::put<std::uint64_t>(out, layout_.hidden);
    binio::put<std::uint64_t>(out, values_.size());
    for (double v : values_) {
        binio::put<double>(out, v);
    }
    binio::put<std::uint64_t>(out, init_seed_);
    binio::put<std::uint64_t>(out, step_count_);
}

ScorerParams ScorerParams::load(std::istream& in)
{
    binio::expect_magic(in, kMagic, "contamlab checkpoint");
    auto version = binio::get<std::uint32_t>(in);
    if (version != kVersion) {
        throw DataError("unsupported checkpoint version " + std::to_string(version));
    }
    auto arch_tag = binio::get<std::uint8_t>(in);
    if (arch_tag > 1) {
        throw DataError("unknown architecture tag in checkpoint");
    }
    ScorerParams p;
    p.arch_ = static_cast<Architecture>(arch_tag);
    p.dim_ = binio::get<std::uint64_t>(in);
    auto hidden = binio::get<std::uint64_t>(in);
    if (p.dim_ == 0 || hidden == 0 || p.dim_ > (1u << 24) || hidden > (1u << 16)) {
        throw DataError("checkpoint shapes out of range");
    }
    p.layout_ = ParamLayout::make(p.arch_, p.dim_, hidden);
    auto n = binio::get<std::uint64_t>(in);
    if (n != p.layout_.total) {
        throw DataError("checkpoint payload size does not match its shapes");
    }
    p.values_.resize(n);
    for (auto& v : p.values_) {
        v = binio::get<double>(in);
    }
    p.init_seed_ = binio::get<std::uint64_t>(in);
    p.step_count_ = binio::get<std::uint64_t>(in);
    return p;
}

void ScorerParams::save_file(const std::string& path) const
{
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError("cannot write " + path);
    }
    save(out);
}

ScorerParams ScorerParams::load_file(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open " + path);
    }
    return load(in);
}

// ------------------------------------------------------------------ SparseGrad

void SparseGrad::reset(const ParamLayout& layout)
{
    hidden = layout.hidden;
    rows.clear();
    row_values.clear();
    tail.assign(layout.tail_size(), 0.0);
}

void SparseGrad::add_to(std::span<double> dense, const ParamLayout& layout, double scale) const
{
    const std::size_t H = layout.hidden;
    for (std::size_t r = 0; r < rows.size(); ++r) {
        double* dst = dense.data() + layout.w1 + static_cast<std::size_t>(rows[r]) * H;
        const double* src = row_values.data() + r * H;
        for (std::size_t j = 0; j < H; ++j) {
            dst[j] += scale * src[j];
        }
    }
    double* dst = dense.data() + layout.b1;
    for (std::size_t t = 0; t < tail.size(); ++t) {
        dst[t] += scale * tail[t];
    }
}

void SparseGrad::append(const SparseGrad& other, double scale)
{
    if (tail.empty()) {
        hidden = other.hidden;
        tail.assign(other.tail.size(), 0.0);
    }
    rows.insert(rows.end(), other.rows.begin(), other.rows.end());
    row_values.reserve(row_values.size() + other.row_values.size());
    for (double v : other.row_values) {
        row_values.push_back(scale * v);
    }
    for (std::size_t t = 0; t < tail.size(); ++t) {
        tail[t] += scale * other.tail[t];
    }
}

std::vector<double> SparseGrad::to_dense(const ParamLayout& layout) const
{
    std::vector<double> out(layout.total, 0.0);
    add_to(out, layout);
    return out;
}

// ------------------------------------------------------------------ scoring

double joint_score(const ScorerParams& params, const FeatureVector& q, const FeatureVector& d,
                   SparseGrad* grad)
{
    require(params, Architecture::joint, "joint_score");
    check_dim(params, q);
    check_dim(params, d);
    const auto& L = params.layout();
    const auto w = params.values();
    const Active in = joint_inputs(q, d);
    const auto h = hidden_layer(w, L, in);
    double s = w[L.b2];
    for (std::size_t j = 0; j < L.hidden; ++j) {
        s += w[L.w2 + j] * h[j];
    }
    if (grad != nullptr) {
        grad->reset(L);
        const std::size_t w2_off = L.w2 - L.b1;
        const std::size_t b2_off = L.b2 - L.b1;
        std::vector<double> dpre(L.hidden);
        for (std::size_t j = 0; j < L.hidden; ++j) {
            grad->tail[w2_off + j] = h[j];
            dpre[j] = w[L.w2 + j] * (1.0 - h[j] * h[j]);
        }
        grad->tail[b2_off] = 1.0;
        backprop_hidden(*grad, L, in, dpre);
    }
    return s;
}

double joint_score(const ScorerParams& params, const Tokens& q, const Tokens& d, SparseGrad* grad)
{
    return joint_score(params, featurize(q, params.dim()), featurize(d, params.dim()), grad);
}

double embedding_dot(std::span<const double> a, std::span<const double> b)
{
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        acc += a[i] * b[i];
    }
    return acc;
}

std::vector<double> dual_encode(const ScorerParams& params, const FeatureVector& x)
{
    require(params, Architecture::dual, "dual_encode");
    check_dim(params, x);
    const auto& L = params.layout();
    return dual_embed(params.values(), L, hidden_layer(params.values(), L, plain_inputs(x)));
}

std::vector<double> dual_encode(const ScorerParams& params, const Tokens& text)
{
    return dual_encode(params, featurize(text, params.dim()));
}

double dual_score(const ScorerParams& params, const FeatureVector& q, const FeatureVector& d,
                  SparseGrad* grad)
{
    require(params, Architecture::dual, "dual_score");
    check_dim(params, q);
    check_dim(params, d);
    const auto& L = params.layout();
    const auto w = params.values();
    const Active in_q = plain_inputs(q);
    const Active in_d = plain_inputs(d);
    const auto hq = hidden_layer(w, L, in_q);
    const auto hd = hidden_layer(w, L, in_d);
    const auto eq = dual_embed(w, L, hq);
    const auto ed = dual_embed(w, L, hd);
    const double s = embedding_dot(eq, ed);
    if (grad != nullptr) {
        grad->reset(L);
        dual_backprop(*grad, w, L, in_q, hq, ed);
        dual_backprop(*grad, w, L, in_d, hd, eq);
    }
    return s;
}

double dual_score(const ScorerParams& params, const Tokens& q, const Tokens& d, SparseGrad* grad)
{
    return dual_score(params, featurize(q, params.dim()), featurize(d, params.dim()), grad);
}

double score(const ScorerParams& params, const FeatureVector& q, const FeatureVector& d,
             SparseGrad* grad)
{
    return params.architecture() == Architecture::joint ? joint_score(params, q, d, grad)
                                                        : dual_score(params, q, d, grad);
}

}  // namespace contamlab
