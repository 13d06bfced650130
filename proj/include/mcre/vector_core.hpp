#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace mcre {

/// Dense embedding with at least one coordinate, all finite. Coordinates are
/// held in double precision; stores on disk are single precision and widen
/// exactly on load.
class EmbeddingVector {
public:
    explicit EmbeddingVector(std::vector<double> values);

    static EmbeddingVector from_floats(std::span<const float> values);

    [[nodiscard]] std::size_t dim() const noexcept { return values_.size(); }
    [[nodiscard]] std::span<const double> values() const noexcept { return values_; }
    [[nodiscard]] double operator[](std::size_t i) const noexcept { return values_[i]; }

    bool operator==(const EmbeddingVector&) const = default;

private:
    std::vector<double> values_;
};

/// Weights of the fused query: alpha on the modification caption, beta on the
/// integration caption, and the remainder on the reference image.
struct FusionWeights {
    static constexpr double kDefaultAlpha = 0.05;
    static constexpr double kDefaultBeta = 0.9;

    double alpha = kDefaultAlpha;
    double beta = kDefaultBeta;

    /// Throws InvalidWeights unless 0 <= alpha, 0 <= beta and alpha + beta <= 1.
    static FusionWeights make(double alpha, double beta);

    void validate() const;
    [[nodiscard]] bool valid() const noexcept;
    [[nodiscard]] double reference_weight() const noexcept;

    bool operator==(const FusionWeights&) const = default;
};

struct ScoredId {
    std::string id;
    double score = 0.0;

    bool operator==(const ScoredId&) const = default;
};

// Kernels. Both accumulate in double.
[[nodiscard]] double dot(std::span<const double> a, std::span<const double> b);
[[nodiscard]] double l2_norm(std::span<const double> v);

/// Unit-norm copy of v. Throws ZeroVector for the all-zero vector.
[[nodiscard]] EmbeddingVector normalize(const EmbeddingVector& v);

/// Cosine similarity clamped to [-1, 1]. Throws DimensionMismatch or ZeroVector.
[[nodiscard]] double cosine_sim(const EmbeddingVector& a, const EmbeddingVector& b);

/// Weighted sum alpha*modi + beta*integ + (1-alpha-beta)*reference. With
/// pre_normalize each input is l2-normalized before summing.
[[nodiscard]] EmbeddingVector fuse(const EmbeddingVector& f_modi, const EmbeddingVector& f_integ,
                                   const EmbeddingVector& f_r, const FusionWeights& w,
                                   bool pre_normalize = true);

/// Ranking order: higher score first, then ascending id.
[[nodiscard]] bool ranks_before(const ScoredId& a, const ScoredId& b) noexcept;

/// The min(k, n) best items in ranking order. k == 0 is rejected.
[[nodiscard]] std::vector<ScoredId> top_k(std::vector<ScoredId> scores, std::size_t k);

}  // namespace mcre
