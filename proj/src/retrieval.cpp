#include "mcre/retrieval.hpp"

#include <algorithm>

#include "mcre/error.hpp"

namespace mcre {

GalleryIndex::GalleryIndex(std::vector<std::pair<std::string, EmbeddingVector>> entries) {
    if (entries.empty()) return;
    dim_ = entries.front().second.dim();
    ids_.reserve(entries.size());
    data_.reserve(entries.size() * dim_);
    norms_.reserve(entries.size());
    lookup_.reserve(entries.size());
    for (auto& [id, vec] : entries) {
        if (id.empty()) throw Error(ErrorCode::InvalidArgument, "gallery identifier is empty");
        if (vec.dim() != dim_) {
            throw Error(ErrorCode::DimensionMismatch, "gallery entry '" + id + "' has dim " +
                                                          std::to_string(vec.dim()) + ", expected " +
                                                          std::to_string(dim_));
        }
        const double n = l2_norm(vec.values());
        if (n == 0.0) throw Error(ErrorCode::ZeroVector, "gallery entry '" + id + "' is the zero vector");
        if (!lookup_.emplace(id, ids_.size()).second) {
            throw Error(ErrorCode::DuplicateId, "duplicate gallery identifier '" + id + "'");
        }
        ids_.push_back(std::move(id));
        data_.insert(data_.end(), vec.values().begin(), vec.values().end());
        norms_.push_back(n);
    }
}

GalleryIndex GalleryIndex::from_store(const EmbeddingStore& store) {
    std::vector<std::pair<std::string, EmbeddingVector>> entries;
    entries.reserve(store.size());
    for (std::size_t i = 0; i < store.size(); ++i) entries.emplace_back(store.ids[i], store.vector(i));
    GalleryIndex g(std::move(entries));
    if (g.empty()) g.dim_ = store.dim;
    return g;
}

std::span<const double> GalleryIndex::row(std::size_t i) const {
    return std::span<const double>(data_).subspan(i * dim_, dim_);
}

std::optional<std::size_t> GalleryIndex::find(std::string_view id) const {
    auto it = lookup_.find(std::string(id));
    if (it == lookup_.end()) return std::nullopt;
    return it->second;
}

EmbeddingVector GalleryIndex::vector(std::string_view id) const {
    auto i = find(id);
    if (!i) throw Error(ErrorCode::UnknownCandidate, "'" + std::string(id) + "' is not in the gallery");
    auto r = row(*i);
    return EmbeddingVector(std::vector<double>(r.begin(), r.end()));
}

std::string_view to_string(RetrievalMode mode) noexcept {
    switch (mode) {
        case RetrievalMode::Full: return "full";
        case RetrievalMode::NoFiltering: return "no_filtering";
        case RetrievalMode::NoRerank: return "no_rerank";
        case RetrievalMode::ModiOnly: return "modi_only";
        case RetrievalMode::IntegOnly: return "integ_only";
    }
    return "unknown";
}

RetrievalMode parse_retrieval_mode(std::string_view name) {
    for (auto m : kAllModes) {
        if (to_string(m) == name) return m;
    }
    throw Error(ErrorCode::InvalidArgument, "unknown retrieval mode '" + std::string(name) +
                                                "' (expected full, no_filtering, no_rerank, modi_only, integ_only)");
}

RetrievalConfig RetrievalConfig::fashioniq_defaults() {
    RetrievalConfig c;
    c.k = kFashionIqK;
    c.exclude_reference = false;
    return c;
}

RetrievalConfig RetrievalConfig::cirr_defaults() {
    RetrievalConfig c;
    c.k = kCirrK;
    c.exclude_reference = true;
    return c;
}

void RetrievalConfig::validate() const {
    if (k == 0) throw Error(ErrorCode::InvalidArgument, "retrieval k must be >= 1");
    weights.validate();
}

namespace {

void check_query_dim(const EmbeddingVector& q, const GalleryIndex& gallery, const char* what) {
    if (q.dim() != gallery.dim()) {
        throw Error(ErrorCode::DimensionMismatch, std::string(what) + " has dim " + std::to_string(q.dim()) +
                                                      ", gallery dim is " + std::to_string(gallery.dim()));
    }
}

// Shared by both stages so identical query vectors give identical scores.
double score_row(std::span<const double> query, double query_norm, const GalleryIndex& gallery, std::size_t i) {
    return std::clamp(dot(query, gallery.row(i)) / (query_norm * gallery.norm(i)), -1.0, 1.0);
}

double nonzero_norm(const EmbeddingVector& q) {
    const double n = l2_norm(q.values());
    if (n == 0.0) throw Error(ErrorCode::ZeroVector, "query embedding is the zero vector");
    return n;
}

}  // namespace

std::vector<ScoredId> stage1_filter(const EmbeddingVector& query, const GalleryIndex& gallery, std::size_t k,
                                    std::optional<std::string_view> exclude) {
    if (gallery.empty()) throw Error(ErrorCode::EmptyGallery, "stage-1 filtering over an empty gallery");
    check_query_dim(query, gallery, "stage-1 query");
    if (k == 0) throw Error(ErrorCode::InvalidArgument, "stage-1 k must be >= 1");

    const EmbeddingVector q = normalize(query);
    const double qn = l2_norm(q.values());
    std::vector<ScoredId> scores;
    scores.reserve(gallery.size());
    for (std::size_t i = 0; i < gallery.size(); ++i) {
        if (exclude && gallery.id(i) == *exclude) continue;
        scores.push_back({gallery.id(i), score_row(q.values(), qn, gallery, i)});
    }
    return top_k(std::move(scores), k);
}

std::vector<ScoredId> stage2_rerank(const QueryEmbeddings& q, std::span<const ScoredId> candidates,
                                    const GalleryIndex& gallery, const FusionWeights& w, bool pre_normalize) {
    if (candidates.empty()) throw Error(ErrorCode::InvalidArgument, "stage-2 re-ranking needs candidates");
    check_query_dim(q.f_modi, gallery, "F_Modi");
    check_query_dim(q.f_integ, gallery, "F_Integ");
    check_query_dim(q.f_r, gallery, "F_R");

    const EmbeddingVector fused = fuse(q.f_modi, q.f_integ, q.f_r, w, pre_normalize);
    const double fn = nonzero_norm(fused);
    std::vector<ScoredId> out;
    out.reserve(candidates.size());
    for (const auto& c : candidates) {
        auto i = gallery.find(c.id);
        if (!i) throw Error(ErrorCode::UnknownCandidate, "candidate '" + c.id + "' is not in the gallery");
        out.push_back({c.id, score_row(fused.values(), fn, gallery, *i)});
    }
    std::sort(out.begin(), out.end(), ranks_before);
    return out;
}

RankedResult retrieve(std::string query_id, const QueryEmbeddings& q, const GalleryIndex& gallery,
                      const RetrievalConfig& cfg, std::optional<std::string_view> reference_id) {
    cfg.validate();
    if (cfg.exclude_reference && (!reference_id || reference_id->empty())) {
        throw Error(ErrorCode::UnknownReference,
                    "query '" + query_id + "' requests reference exclusion but carries no reference id");
    }
    const auto exclude = cfg.exclude_reference ? reference_id : std::nullopt;

    RankedResult result;
    result.query_id = std::move(query_id);
    result.mode = cfg.mode;

    const EmbeddingVector& stage1_query = cfg.mode == RetrievalMode::IntegOnly ? q.f_integ : q.f_modi;
    const std::size_t k = cfg.mode == RetrievalMode::NoFiltering ? std::max<std::size_t>(gallery.size(), 1) : cfg.k;
    result.stage1_candidates = stage1_filter(stage1_query, gallery, k, exclude);
    if (result.stage1_candidates.empty()) return result;

    switch (cfg.mode) {
        case RetrievalMode::NoRerank:
            result.ranking = result.stage1_candidates;
            break;
        case RetrievalMode::Full:
        case RetrievalMode::NoFiltering:
            result.ranking = stage2_rerank(q, result.stage1_candidates, gallery, cfg.weights, cfg.pre_normalize);
            break;
        case RetrievalMode::ModiOnly:
            result.ranking = stage2_rerank(q, result.stage1_candidates, gallery, FusionWeights{1.0, 0.0},
                                           cfg.pre_normalize);
            break;
        case RetrievalMode::IntegOnly:
            result.ranking = stage2_rerank(q, result.stage1_candidates, gallery, FusionWeights{0.0, 1.0},
                                           cfg.pre_normalize);
            break;
    }
    return result;
}

}  // namespace mcre
