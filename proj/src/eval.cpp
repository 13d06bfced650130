#include "mcre/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <iomanip>
#include <sstream>
#include <thread>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "mcre/error.hpp"

namespace mcre {

BenchmarkSpec BenchmarkSpec::fashioniq() { return {"fashioniq", {10, 50}, {}, 0}; }

BenchmarkSpec BenchmarkSpec::cirr() { return {"cirr", {1, 5, 10}, {1, 2, 3}, 0}; }

void BenchmarkSpec::validate() const {
    if (ks.empty()) throw Error(ErrorCode::InvalidArgument, "evaluation needs at least one K");
    for (auto k : ks) {
        if (k == 0) throw Error(ErrorCode::InvalidArgument, "K must be >= 1");
    }
    for (auto k : subset_ks) {
        if (k == 0) throw Error(ErrorCode::InvalidArgument, "subset K must be >= 1");
    }
}

namespace {

std::vector<const RankedResult*> align(std::span<const RankedResult> results, std::span<const EvalRecord> records) {
    std::unordered_map<std::string_view, const RankedResult*> by_id;
    by_id.reserve(results.size());
    for (const auto& r : results) {
        if (!by_id.emplace(r.query_id, &r).second) {
            throw Error(ErrorCode::QueryMismatch, "duplicate result for query '" + r.query_id + "'");
        }
    }
    std::vector<const RankedResult*> aligned;
    aligned.reserve(records.size());
    for (const auto& rec : records) {
        auto it = by_id.find(rec.query_id);
        if (it == by_id.end()) throw Error(ErrorCode::QueryMismatch, "no result for query '" + rec.query_id + "'");
        aligned.push_back(it->second);
    }
    if (results.size() != records.size()) {
        throw Error(ErrorCode::QueryMismatch, std::to_string(results.size()) + " results for " +
                                                  std::to_string(records.size()) + " records");
    }
    return aligned;
}

bool is_target(const EvalRecord& rec, const std::string& id) {
    return std::find(rec.target_ids.begin(), rec.target_ids.end(), id) != rec.target_ids.end();
}

void require_targets(const EvalRecord& rec) {
    if (rec.target_ids.empty()) {
        throw Error(ErrorCode::InvalidArgument, "query '" + rec.query_id + "' has no ground-truth target");
    }
}

void require_k(std::size_t K) {
    if (K == 0) throw Error(ErrorCode::InvalidArgument, "K must be >= 1");
}

}  // namespace

double recall_at_k(std::span<const RankedResult> results, std::span<const EvalRecord> records, std::size_t K) {
    require_k(K);
    const auto aligned = align(results, records);
    if (records.empty()) throw Error(ErrorCode::InvalidArgument, "recall over zero queries");
    std::size_t hits = 0;
    for (std::size_t q = 0; q < records.size(); ++q) {
        require_targets(records[q]);
        const auto& ranking = aligned[q]->ranking;
        const std::size_t window = std::min(K, ranking.size());
        for (std::size_t i = 0; i < window; ++i) {
            if (is_target(records[q], ranking[i].id)) {
                ++hits;
                break;
            }
        }
    }
    return static_cast<double>(hits) / static_cast<double>(records.size());
}

double recall_subset_at_k(std::span<const RankedResult> results, std::span<const EvalRecord> records,
                          std::size_t K) {
    require_k(K);
    const auto aligned = align(results, records);
    if (records.empty()) throw Error(ErrorCode::InvalidArgument, "recall over zero queries");
    std::size_t hits = 0;
    for (std::size_t q = 0; q < records.size(); ++q) {
        const auto& rec = records[q];
        if (!rec.subset_ids) throw Error(ErrorCode::MissingSubset, "query '" + rec.query_id + "' has no subset");
        require_targets(rec);
        const std::unordered_set<std::string_view> subset(rec.subset_ids->begin(), rec.subset_ids->end());
        std::size_t seen = 0;
        for (const auto& item : aligned[q]->ranking) {
            if (seen == K) break;
            if (!subset.contains(item.id)) continue;
            ++seen;
            if (is_target(rec, item.id)) {
                ++hits;
                break;
            }
        }
    }
    return static_cast<double>(hits) / static_cast<double>(records.size());
}

QueryEmbeddings query_embeddings(const EvalRecord& record, const GalleryIndex& gallery,
                                 const GalleryIndex& captions) {
    auto caption = [&](const std::string& key) {
        if (!captions.contains(key)) {
            throw DanglingIdError(ErrorCode::MissingCaptionEmbedding, {key});
        }
        return captions.vector(key);
    };
    if (!gallery.contains(record.reference_id)) throw DanglingIdError(ErrorCode::DanglingId, {record.reference_id});
    return QueryEmbeddings{caption(modi_key(record.query_id)), caption(integ_key(record.query_id)),
                           gallery.vector(record.reference_id)};
}

void validate_ids(std::span<const EvalRecord> records, const GalleryIndex& gallery, const GalleryIndex& captions,
                  bool require_targets) {
    std::vector<std::string> dangling;
    std::unordered_set<std::string> reported;
    auto check = [&](const std::string& id) {
        if (!gallery.contains(id) && reported.insert(id).second) dangling.push_back(id);
    };
    for (const auto& r : records) {
        check(r.reference_id);
        if (require_targets) {
            for (const auto& t : r.target_ids) check(t);
        }
    }
    if (!dangling.empty()) throw DanglingIdError(ErrorCode::DanglingId, std::move(dangling));

    std::vector<std::string> missing;
    for (const auto& r : records) {
        for (const auto& key : {modi_key(r.query_id), integ_key(r.query_id)}) {
            if (!captions.contains(key)) missing.push_back(key);
        }
    }
    if (!missing.empty()) throw DanglingIdError(ErrorCode::MissingCaptionEmbedding, std::move(missing));

    if (!records.empty() && captions.dim() != gallery.dim()) {
        throw Error(ErrorCode::DimensionMismatch, "caption embeddings have dim " + std::to_string(captions.dim()) +
                                                      ", gallery has dim " + std::to_string(gallery.dim()));
    }
}

std::vector<RankedResult> run_queries(std::span<const EvalRecord> records, const GalleryIndex& gallery,
                                      const GalleryIndex& captions, const RetrievalConfig& cfg,
                                      std::size_t workers) {
    cfg.validate();
    std::vector<RankedResult> results(records.size());
    std::vector<std::exception_ptr> errors(records.size());

    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < records.size(); i = next++) {
            try {
                const auto& rec = records[i];
                results[i] = retrieve(rec.query_id, query_embeddings(rec, gallery, captions), gallery, cfg,
                                      rec.reference_id);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
    workers = std::min(workers, std::max<std::size_t>(records.size(), 1));
    {
        std::vector<std::jthread> pool;
        for (std::size_t t = 1; t < workers; ++t) pool.emplace_back(worker);
        worker();
    }
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
    return results;
}

namespace {

MetricReport measure(std::span<const RankedResult> results, std::span<const EvalRecord> records,
                     const RetrievalConfig& cfg, const BenchmarkSpec& spec) {
    MetricReport report;
    report.dataset = spec.dataset;
    if (!records.empty() && records.front().category) {
        const auto& c = records.front().category;
        const bool same = std::all_of(records.begin(), records.end(), [&](const auto& r) { return r.category == c; });
        if (same) report.category = c;
    }
    report.mode = cfg.mode;
    report.k_filter = cfg.k;
    report.weights = cfg.weights;
    report.query_count = records.size();
    for (auto K : spec.ks) report.recall_at[K] = recall_at_k(results, records, K);
    if (!spec.subset_ks.empty()) {
        std::map<std::size_t, double> subset;
        for (auto K : spec.subset_ks) subset[K] = recall_subset_at_k(results, records, K);
        report.recall_subset_at = std::move(subset);
    }
    return report;
}

void check_benchmark_inputs(std::span<const EvalRecord> records, const RetrievalConfig& cfg,
                            const BenchmarkSpec& spec) {
    spec.validate();
    cfg.validate();
    if (records.empty()) throw Error(ErrorCode::InvalidArgument, "benchmark over zero queries");
}

}  // namespace

MetricReport run_benchmark(std::span<const EvalRecord> records, const GalleryIndex& gallery,
                           const GalleryIndex& captions, const RetrievalConfig& cfg, const BenchmarkSpec& spec) {
    check_benchmark_inputs(records, cfg, spec);
    validate_ids(records, gallery, captions);
    const auto results = run_queries(records, gallery, captions, cfg, spec.workers);
    return measure(results, records, cfg, spec);
}

namespace {

std::vector<std::vector<EvalRecord>> split_by_category(std::span<const EvalRecord> records) {
    std::vector<std::optional<std::string>> order;
    std::vector<std::vector<EvalRecord>> groups;
    for (const auto& r : records) {
        auto it = std::find(order.begin(), order.end(), r.category);
        if (it == order.end()) {
            order.push_back(r.category);
            groups.emplace_back();
            it = order.end() - 1;
        }
        groups[static_cast<std::size_t>(it - order.begin())].push_back(r);
    }
    return groups;
}

}  // namespace

std::vector<MetricReport> run_benchmark_by_category(std::span<const EvalRecord> records, const GalleryIndex& gallery,
                                                    const GalleryIndex& captions, const RetrievalConfig& cfg,
                                                    const BenchmarkSpec& spec) {
    check_benchmark_inputs(records, cfg, spec);
    validate_ids(records, gallery, captions);
    std::vector<MetricReport> out;
    for (const auto& group : split_by_category(records)) {
        const auto results = run_queries(group, gallery, captions, cfg, spec.workers);
        out.push_back(measure(results, group, cfg, spec));
    }
    return out;
}

std::vector<MetricReport> run_ablations(std::span<const EvalRecord> records, const GalleryIndex& gallery,
                                        const GalleryIndex& captions, const RetrievalConfig& base_cfg,
                                        const BenchmarkSpec& spec) {
    check_benchmark_inputs(records, base_cfg, spec);
    validate_ids(records, gallery, captions);
    const auto groups = split_by_category(records);
    std::vector<MetricReport> out;
    for (auto mode : kAllModes) {
        RetrievalConfig cfg = base_cfg;
        cfg.mode = mode;
        for (const auto& group : groups) {
            const auto results = run_queries(group, gallery, captions, cfg, spec.workers);
            out.push_back(measure(results, group, cfg, spec));
        }
    }
    return out;
}

ReportFormat parse_report_format(std::string_view name) {
    if (name == "table") return ReportFormat::Table;
    if (name == "csv") return ReportFormat::Csv;
    if (name == "submission") return ReportFormat::Submission;
    throw Error(ErrorCode::UnsupportedFormat, "unknown report format '" + std::string(name) +
                                                  "' (expected table, csv, submission)");
}

namespace {

std::string fixed(double v, int precision) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", precision, v);
    return buf;
}

std::string compact(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
}

std::string row_label(const MetricReport& r) {
    return std::string(to_string(r.mode)) + " (k=" + std::to_string(r.k_filter) + ", a=" + compact(r.weights.alpha) +
           ", b=" + compact(r.weights.beta) + ")";
}

std::string category_name(const std::optional<std::string>& c) { return c ? *c : "all"; }

template <typename T>
void push_unique(std::vector<T>& v, const T& x) {
    if (std::find(v.begin(), v.end(), x) == v.end()) v.push_back(x);
}

}  // namespace

std::string render_table(std::span<const MetricReport> reports) {
    std::vector<std::string> datasets;
    for (const auto& r : reports) push_unique(datasets, r.dataset);

    std::ostringstream out;
    for (const auto& ds : datasets) {
        std::vector<const MetricReport*> rows_in;
        for (const auto& r : reports) {
            if (r.dataset == ds) rows_in.push_back(&r);
        }

        std::vector<std::string> categories;
        if (ds == "fashioniq") categories = {"shirt", "dress", "toptee"};
        std::vector<std::size_t> ks;
        std::vector<std::size_t> sks;
        std::vector<std::string> labels;
        for (const auto* r : rows_in) {
            push_unique(categories, category_name(r->category));
            for (const auto& [k, _] : r->recall_at) push_unique(ks, k);
            if (r->recall_subset_at) {
                for (const auto& [k, _] : *r->recall_subset_at) push_unique(sks, k);
            }
            push_unique(labels, row_label(*r));
        }
        std::sort(ks.begin(), ks.end());
        std::sort(sks.begin(), sks.end());

        auto lookup = [&](const std::string& label, const std::string& cat) -> const MetricReport* {
            for (const auto* r : rows_in) {
                if (row_label(*r) == label && category_name(r->category) == cat) return r;
            }
            return nullptr;
        };

        constexpr int kLabelWidth = 40;
        constexpr int kCell = 8;
        const int group_width = kCell * static_cast<int>(ks.size() + sks.size());

        out << "dataset: " << ds << "\n";
        out << std::left << std::setw(kLabelWidth) << "";
        for (const auto& c : categories) out << "| " << std::setw(group_width) << c;
        out << "\n" << std::setw(kLabelWidth) << "method";
        for (std::size_t ci = 0; ci < categories.size(); ++ci) {
            out << "| ";
            for (auto k : ks) out << std::setw(kCell) << ("R@" + std::to_string(k));
            for (auto k : sks) out << std::setw(kCell) << ("Rs@" + std::to_string(k));
        }
        out << "\n";
        for (const auto& label : labels) {
            out << std::setw(kLabelWidth) << label;
            for (const auto& c : categories) {
                const MetricReport* r = lookup(label, c);
                out << "| ";
                for (auto k : ks) {
                    std::string cell = "-";
                    if (r) {
                        if (auto it = r->recall_at.find(k); it != r->recall_at.end()) cell = fixed(100 * it->second, 2);
                    }
                    out << std::setw(kCell) << cell;
                }
                for (auto k : sks) {
                    std::string cell = "-";
                    if (r && r->recall_subset_at) {
                        if (auto it = r->recall_subset_at->find(k); it != r->recall_subset_at->end()) {
                            cell = fixed(100 * it->second, 2);
                        }
                    }
                    out << std::setw(kCell) << cell;
                }
            }
            out << "\n";
        }
        out << "\n";
    }
    return out.str();
}

std::string render_csv(std::span<const MetricReport> reports, bool header) {
    std::vector<std::size_t> ks;
    std::vector<std::size_t> sks;
    for (const auto& r : reports) {
        for (const auto& [k, _] : r.recall_at) push_unique(ks, k);
        if (r.recall_subset_at) {
            for (const auto& [k, _] : *r.recall_subset_at) push_unique(sks, k);
        }
    }
    std::sort(ks.begin(), ks.end());
    std::sort(sks.begin(), sks.end());

    std::ostringstream out;
    if (header) {
        out << kCsvPrefix;
        for (auto k : ks) out << ",recall@" << k;
        for (auto k : sks) out << ",recall_subset@" << k;
        out << "\n";
    }
    for (const auto& r : reports) {
        out << r.dataset << "," << r.category.value_or("") << "," << to_string(r.mode) << "," << r.k_filter << ","
            << compact(r.weights.alpha) << "," << compact(r.weights.beta) << "," << r.query_count;
        for (auto k : ks) {
            out << ",";
            if (auto it = r.recall_at.find(k); it != r.recall_at.end()) out << fixed(it->second, 6);
        }
        for (auto k : sks) {
            out << ",";
            if (r.recall_subset_at) {
                if (auto it = r.recall_subset_at->find(k); it != r.recall_subset_at->end()) out << fixed(it->second, 6);
            }
        }
        out << "\n";
    }
    return out.str();
}

std::string render_submission(std::span<const RankedResult> results, std::span<const EvalRecord> records,
                              SubmissionMetric metric, std::size_t top) {
    using nlohmann::json;
    std::unordered_map<std::string_view, const EvalRecord*> rec_by_id;
    for (const auto& r : records) rec_by_id.emplace(r.query_id, &r);

    std::ostringstream out;
    out << "{\"version\": \"rc2\", \"metric\": \""
        << (metric == SubmissionMetric::Recall ? "recall" : "recall_subset") << "\"";
    for (const auto& res : results) {
        std::vector<std::string> ids;
        if (metric == SubmissionMetric::Recall) {
            for (std::size_t i = 0; i < res.ranking.size() && ids.size() < top; ++i) ids.push_back(res.ranking[i].id);
        } else {
            auto it = rec_by_id.find(res.query_id);
            if (it == rec_by_id.end() || !it->second->subset_ids) {
                throw Error(ErrorCode::MissingSubset, "query '" + res.query_id + "' has no subset");
            }
            const auto& subset = *it->second->subset_ids;
            for (const auto& item : res.ranking) {
                if (ids.size() == top) break;
                if (std::find(subset.begin(), subset.end(), item.id) != subset.end()) ids.push_back(item.id);
            }
        }
        out << ",\n" << json(res.query_id).dump() << ": " << json(ids).dump();
    }
    out << "\n}\n";
    return out.str();
}

std::string emit_report(std::span<const MetricReport> reports, ReportFormat format,
                        std::span<const RankedResult> results, std::span<const EvalRecord> records) {
    switch (format) {
        case ReportFormat::Table:
            if (reports.empty()) throw Error(ErrorCode::InvalidArgument, "no reports to render");
            return render_table(reports);
        case ReportFormat::Csv:
            if (reports.empty()) throw Error(ErrorCode::InvalidArgument, "no reports to render");
            return render_csv(reports);
        case ReportFormat::Submission:
            if (results.empty()) throw Error(ErrorCode::InvalidArgument, "submission needs ranked results");
            return render_submission(results, records, SubmissionMetric::Recall, 50);
    }
    throw Error(ErrorCode::UnsupportedFormat, "unhandled report format");
}

}  // namespace mcre
