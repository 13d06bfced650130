#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mcre/dataset.hpp"
#include "mcre/retrieval.hpp"

namespace mcre {

struct MetricReport {
    std::string dataset;
    std::optional<std::string> category;
    RetrievalMode mode = RetrievalMode::Full;
    std::size_t k_filter = 0;
    FusionWeights weights;
    std::map<std::size_t, double> recall_at;
    std::optional<std::map<std::size_t, double>> recall_subset_at;
    std::size_t query_count = 0;

    bool operator==(const MetricReport&) const = default;
};

/// What to measure. Empty `ks` is rejected; `subset_ks` may be empty.
struct BenchmarkSpec {
    std::string dataset;
    std::vector<std::size_t> ks;
    std::vector<std::size_t> subset_ks;
    /// Worker threads for per-query retrieval; 0 picks the hardware count.
    std::size_t workers = 0;

    static BenchmarkSpec fashioniq();
    static BenchmarkSpec cirr();

    void validate() const;

    bool operator==(const BenchmarkSpec&) const = default;
};

/// Fraction of queries with any target among the first K ranked ids.
[[nodiscard]] double recall_at_k(std::span<const RankedResult> results, std::span<const EvalRecord> records,
                                 std::size_t K);

/// Recall@K after restricting each ranking to the query's subset ids.
[[nodiscard]] double recall_subset_at_k(std::span<const RankedResult> results, std::span<const EvalRecord> records,
                                        std::size_t K);

/// Assembles F_Modi, F_Integ and F_R for a record. Caption vectors live in
/// `captions` under "<query_id>#modi" / "<query_id>#integ".
[[nodiscard]] QueryEmbeddings query_embeddings(const EvalRecord& record, const GalleryIndex& gallery,
                                               const GalleryIndex& captions);

/// Throws DanglingIdError (DanglingId) listing reference/target ids missing
/// from the gallery, then (MissingCaptionEmbedding) listing missing caption
/// keys. With `require_targets` false, target ids are not checked.
void validate_ids(std::span<const EvalRecord> records, const GalleryIndex& gallery, const GalleryIndex& captions,
                  bool require_targets = true);

/// Per-query retrieval across a worker pool; output order matches records.
[[nodiscard]] std::vector<RankedResult> run_queries(std::span<const EvalRecord> records, const GalleryIndex& gallery,
                                                    const GalleryIndex& captions, const RetrievalConfig& cfg,
                                                    std::size_t workers = 0);

[[nodiscard]] MetricReport run_benchmark(std::span<const EvalRecord> records, const GalleryIndex& gallery,
                                         const GalleryIndex& captions, const RetrievalConfig& cfg,
                                         const BenchmarkSpec& spec);

/// One report per category, in first-seen order. Records without a category
/// form a single group.
[[nodiscard]] std::vector<MetricReport> run_benchmark_by_category(std::span<const EvalRecord> records,
                                                                  const GalleryIndex& gallery,
                                                                  const GalleryIndex& captions,
                                                                  const RetrievalConfig& cfg,
                                                                  const BenchmarkSpec& spec);

/// The five retrieval modes over the same queries, per category.
[[nodiscard]] std::vector<MetricReport> run_ablations(std::span<const EvalRecord> records,
                                                      const GalleryIndex& gallery, const GalleryIndex& captions,
                                                      const RetrievalConfig& base_cfg, const BenchmarkSpec& spec);

enum class ReportFormat { Table, Csv, Submission };

[[nodiscard]] ReportFormat parse_report_format(std::string_view name);

/// Leading CSV columns. One metric column follows per K in the union of the
/// reports' grids: "recall@K" ascending, then "recall_subset@K".
inline constexpr std::string_view kCsvPrefix = "dataset,category,mode,k_filter,alpha,beta,query_count";

/// Text table grouped by dataset, with one column per (category, K).
/// Values are percentages with two decimals.
[[nodiscard]] std::string render_table(std::span<const MetricReport> reports);
/// One row per report.
[[nodiscard]] std::string render_csv(std::span<const MetricReport> reports, bool header = true);

enum class SubmissionMetric { Recall, RecallSubset };

/// CIRR prediction file: a JSON object with "version" and "metric" plus one
/// line per query mapping the pair id to its top ids. For RecallSubset the
/// ranking is first restricted to the query's subset.
[[nodiscard]] std::string render_submission(std::span<const RankedResult> results,
                                            std::span<const EvalRecord> records, SubmissionMetric metric,
                                            std::size_t top);

/// Dispatches on format. Submission needs the ranked results; it emits the
/// full-gallery recall file with the top 50 ids.
[[nodiscard]] std::string emit_report(std::span<const MetricReport> reports, ReportFormat format,
                                      std::span<const RankedResult> results = {},
                                      std::span<const EvalRecord> records = {});

}  // namespace mcre
