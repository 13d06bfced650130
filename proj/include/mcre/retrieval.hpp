#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "mcre/embedding_store.hpp"
#include "mcre/vector_core.hpp"

namespace mcre {

/// Immutable id-addressed gallery. Row norms are computed once at
/// construction; entries must be non-zero and share one dimension.
class GalleryIndex {
public:
    GalleryIndex() = default;
    explicit GalleryIndex(std::vector<std::pair<std::string, EmbeddingVector>> entries);

    static GalleryIndex from_store(const EmbeddingStore& store);

    [[nodiscard]] std::size_t size() const noexcept { return ids_.size(); }
    [[nodiscard]] bool empty() const noexcept { return ids_.empty(); }
    [[nodiscard]] std::size_t dim() const noexcept { return dim_; }

    [[nodiscard]] const std::string& id(std::size_t i) const { return ids_[i]; }
    [[nodiscard]] const std::vector<std::string>& ids() const noexcept { return ids_; }
    [[nodiscard]] std::span<const double> row(std::size_t i) const;
    [[nodiscard]] double norm(std::size_t i) const { return norms_[i]; }

    [[nodiscard]] std::optional<std::size_t> find(std::string_view id) const;
    [[nodiscard]] bool contains(std::string_view id) const { return find(id).has_value(); }
    /// Throws UnknownCandidate when id is absent.
    [[nodiscard]] EmbeddingVector vector(std::string_view id) const;

private:
    std::size_t dim_ = 0;
    std::vector<std::string> ids_;
    std::vector<double> data_;
    std::vector<double> norms_;
    std::unordered_map<std::string, std::size_t> lookup_;
};

enum class RetrievalMode { Full, NoFiltering, NoRerank, ModiOnly, IntegOnly };

inline constexpr std::array<RetrievalMode, 5> kAllModes = {
    RetrievalMode::Full, RetrievalMode::NoFiltering, RetrievalMode::NoRerank, RetrievalMode::ModiOnly,
    RetrievalMode::IntegOnly};

[[nodiscard]] std::string_view to_string(RetrievalMode mode) noexcept;
/// Accepts the snake_case names printed by to_string. Throws InvalidArgument.
[[nodiscard]] RetrievalMode parse_retrieval_mode(std::string_view name);

struct RetrievalConfig {
    static constexpr std::size_t kFashionIqK = 150;
    static constexpr std::size_t kCirrK = 200;

    std::size_t k = kFashionIqK;
    FusionWeights weights;
    RetrievalMode mode = RetrievalMode::Full;
    bool exclude_reference = false;
    bool pre_normalize = true;

    static RetrievalConfig fashioniq_defaults();
    static RetrievalConfig cirr_defaults();

    /// Throws InvalidArgument for k == 0 and InvalidWeights for bad weights.
    void validate() const;

    bool operator==(const RetrievalConfig&) const = default;
};

struct QueryEmbeddings {
    EmbeddingVector f_modi;
    EmbeddingVector f_integ;
    EmbeddingVector f_r;
};

struct RankedResult {
    std::string query_id;
    std::vector<ScoredId> ranking;
    std::vector<ScoredId> stage1_candidates;
    RetrievalMode mode = RetrievalMode::Full;

    bool operator==(const RankedResult&) const = default;
};

/// Top-k gallery items by cosine similarity to the query, optionally skipping
/// one identifier.
[[nodiscard]] std::vector<ScoredId> stage1_filter(const EmbeddingVector& query, const GalleryIndex& gallery,
                                                  std::size_t k,
                                                  std::optional<std::string_view> exclude = std::nullopt);

/// Reorders the candidate set by cosine similarity to the fused query.
[[nodiscard]] std::vector<ScoredId> stage2_rerank(const QueryEmbeddings& q, std::span<const ScoredId> candidates,
                                                  const GalleryIndex& gallery, const FusionWeights& w,
                                                  bool pre_normalize = true);

/// Full two-stage retrieval or one of its ablations. `reference_id` is the
/// query's reference image; it is required when cfg.exclude_reference is set.
[[nodiscard]] RankedResult retrieve(std::string query_id, const QueryEmbeddings& q, const GalleryIndex& gallery,
                                    const RetrievalConfig& cfg,
                                    std::optional<std::string_view> reference_id = std::nullopt);

}  // namespace mcre
