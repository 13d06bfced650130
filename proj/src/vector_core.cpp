#include "mcre/vector_core.hpp"

#include <algorithm>
#include <cmath>

#include "mcre/error.hpp"

namespace mcre {

EmbeddingVector::EmbeddingVector(std::vector<double> values) : values_(std::move(values)) {
    if (values_.empty()) throw Error(ErrorCode::InvalidArgument, "embedding must have dim >= 1");
    for (std::size_t i = 0; i < values_.size(); ++i) {
        if (!std::isfinite(values_[i])) {
            throw Error(ErrorCode::NonFinite, "coordinate " + std::to_string(i) + " is not finite");
        }
    }
}

EmbeddingVector EmbeddingVector::from_floats(std::span<const float> values) {
    return EmbeddingVector(std::vector<double>(values.begin(), values.end()));
}

FusionWeights FusionWeights::make(double alpha, double beta) {
    FusionWeights w{alpha, beta};
    w.validate();
    return w;
}

namespace {
// alpha + beta is compared with a one-ulp-scale slack so grids like
// (0.1, 0.9) are accepted.
constexpr double kWeightSlack = 1e-12;
}  // namespace

bool FusionWeights::valid() const noexcept {
    return std::isfinite(alpha) && std::isfinite(beta) && alpha >= 0.0 && beta >= 0.0 &&
           alpha <= 1.0 && beta <= 1.0 && alpha + beta <= 1.0 + kWeightSlack;
}

void FusionWeights::validate() const {
    if (!valid()) {
        throw Error(ErrorCode::InvalidWeights, "require alpha, beta in [0,1] and alpha + beta <= 1, got alpha=" +
                                                   std::to_string(alpha) + " beta=" + std::to_string(beta));
    }
}

double FusionWeights::reference_weight() const noexcept {
    return std::max(0.0, 1.0 - alpha - beta);
}

double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw Error(ErrorCode::DimensionMismatch,
                    "dim " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

double l2_norm(std::span<const double> v) {
    double acc = 0.0;
    for (double x : v) acc += x * x;
    return std::sqrt(acc);
}

EmbeddingVector normalize(const EmbeddingVector& v) {
    const double n = l2_norm(v.values());
    if (n == 0.0) throw Error(ErrorCode::ZeroVector, "cannot normalize the zero vector");
    std::vector<double> out(v.values().begin(), v.values().end());
    for (double& x : out) x /= n;
    return EmbeddingVector(std::move(out));
}

double cosine_sim(const EmbeddingVector& a, const EmbeddingVector& b) {
    if (a.dim() != b.dim()) {
        throw Error(ErrorCode::DimensionMismatch,
                    "dim " + std::to_string(a.dim()) + " vs " + std::to_string(b.dim()));
    }
    const double na = l2_norm(a.values());
    const double nb = l2_norm(b.values());
    if (na == 0.0 || nb == 0.0) throw Error(ErrorCode::ZeroVector, "cosine of a zero vector");
    return std::clamp(dot(a.values(), b.values()) / (na * nb), -1.0, 1.0);
}

EmbeddingVector fuse(const EmbeddingVector& f_modi, const EmbeddingVector& f_integ,
                     const EmbeddingVector& f_r, const FusionWeights& w, bool pre_normalize) {
    w.validate();
    if (f_modi.dim() != f_integ.dim() || f_modi.dim() != f_r.dim()) {
        throw Error(ErrorCode::DimensionMismatch, "fusion inputs have dims " + std::to_string(f_modi.dim()) +
                                                      ", " + std::to_string(f_integ.dim()) + ", " +
                                                      std::to_string(f_r.dim()));
    }
    auto prepare = [pre_normalize](const EmbeddingVector& v) {
        if (pre_normalize) return normalize(v);
        if (l2_norm(v.values()) == 0.0) throw Error(ErrorCode::ZeroVector, "fusion input is the zero vector");
        return v;
    };
    const EmbeddingVector m = prepare(f_modi);
    const EmbeddingVector i = prepare(f_integ);
    const EmbeddingVector r = prepare(f_r);
    const double gamma = w.reference_weight();

    std::vector<double> out(m.dim());
    for (std::size_t d = 0; d < out.size(); ++d) {
        out[d] = w.alpha * m[d] + w.beta * i[d] + gamma * r[d];
    }
    return EmbeddingVector(std::move(out));
}

bool ranks_before(const ScoredId& a, const ScoredId& b) noexcept {
    if (a.score != b.score) return a.score > b.score;
    return a.id < b.id;
}

std::vector<ScoredId> top_k(std::vector<ScoredId> scores, std::size_t k) {
    if (k == 0) throw Error(ErrorCode::InvalidArgument, "top_k requires k >= 1");
    const std::size_t keep = std::min(k, scores.size());
    std::partial_sort(scores.begin(), scores.begin() + static_cast<std::ptrdiff_t>(keep), scores.end(),
                      ranks_before);
    scores.resize(keep);
    return scores;
}

}  // namespace mcre
