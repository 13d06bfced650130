#include "cli.hpp"

#include <CLI11.hpp>
#include <spdlog/sinks/ostream_sink.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "mcre/caption.hpp"
#include "mcre/caption_cache.hpp"
#include "mcre/caption_generator.hpp"
#include "mcre/caption_provider.hpp"
#include "mcre/config.hpp"
#include "mcre/dataset.hpp"
#include "mcre/embedding_store.hpp"
#include "mcre/error.hpp"
#include "mcre/eval.hpp"
#include "mcre/retrieval.hpp"

namespace fs = std::filesystem;

namespace mcre::cli {
namespace {

struct Options {
    std::string config;
    std::vector<std::string> sets;
    bool dry_run = false;

    std::optional<std::string> split;
    std::size_t limit = 0;
    std::optional<std::string> provider;

    std::string input;
    std::string role = "gallery";
    std::optional<std::string> category;

    std::string query_id;
    std::size_t top = 10;

    std::optional<std::string> mode;
    std::string format = "table";

    std::string alpha_grid;
    std::string beta_grid;
    std::string k_grid;
};

[[noreturn]] void config_error(const std::string& message) { throw Error(ErrorCode::Config, message); }

bool is_usage_error(ErrorCode code) {
    switch (code) {
        case ErrorCode::Config:
        case ErrorCode::InvalidArgument:
        case ErrorCode::InvalidWeights:
        case ErrorCode::UnknownTemplate:
        case ErrorCode::InvalidTemplate:
        case ErrorCode::UnsupportedFormat:
            return true;
        default:
            return false;
    }
}

// Routes library logging to `err` for the duration of one run.
class LoggerScope {
public:
    explicit LoggerScope(std::ostream& err) : previous_(spdlog::default_logger()) {
        auto sink = std::make_shared<spdlog::sinks::ostream_sink_mt>(err, true);
        auto logger = std::make_shared<spdlog::logger>("mcre", sink);
        logger->set_pattern("%l: %v");
        logger->set_level(spdlog::level::info);
        spdlog::set_default_logger(logger);
    }
    ~LoggerScope() { spdlog::set_default_logger(previous_); }

    LoggerScope(const LoggerScope&) = delete;
    LoggerScope& operator=(const LoggerScope&) = delete;

private:
    std::shared_ptr<spdlog::logger> previous_;
};

RunConfig load_config(const Options& opt) {
    ConfigOverrides overrides;
    for (const auto& s : opt.sets) {
        auto eq = s.find('=');
        if (eq == std::string::npos || eq == 0) config_error("--set expects section.key=value, got '" + s + "'");
        overrides.emplace_back(s.substr(0, eq), s.substr(eq + 1));
    }
    if (opt.split) overrides.emplace_back("run.split", *opt.split);
    if (opt.provider) overrides.emplace_back("provider.kind", *opt.provider);
    if (opt.mode) overrides.emplace_back("retrieval.mode", *opt.mode);
    return load_run_config(opt.config, overrides);
}

// CIRR test splits ("test1") ship without ground truth.
bool targets_required(const RunConfig& cfg) {
    return !(cfg.dataset == Dataset::Cirr && cfg.split.rfind("test", 0) == 0);
}

std::vector<std::string> categories_of(const RunConfig& cfg) {
    if (cfg.dataset == Dataset::Cirr) return {""};
    return cfg.categories;
}

void require_file(const fs::path& p, const std::string& what) {
    if (p.empty()) config_error(what + " is not configured");
    std::error_code ec;
    if (!fs::is_regular_file(p, ec)) config_error(what + " not found: " + p.string());
}

void require_dir(const fs::path& p, const std::string& what) {
    if (p.empty()) config_error(what + " is not configured");
    std::error_code ec;
    if (!fs::is_directory(p, ec)) config_error(what + " is not a directory: " + p.string());
}

void check_annotations(const RunConfig& cfg) {
    for (const auto& cat : categories_of(cfg)) require_file(cfg.resolve(cfg.paths.annotations, cat), "annotations");
}

void check_stores(const RunConfig& cfg) {
    for (const auto& cat : categories_of(cfg)) {
        require_file(cfg.resolve(cfg.paths.gallery_store, cat), "gallery_store");
        require_file(cfg.resolve(cfg.paths.caption_store, cat), "caption_store");
    }
}

struct Group {
    std::string category;
    std::vector<EvalRecord> records;
    std::shared_ptr<const GalleryIndex> gallery;
    std::shared_ptr<const GalleryIndex> captions;
};

std::vector<std::pair<std::string, std::vector<EvalRecord>>> load_records(const RunConfig& cfg) {
    std::vector<std::pair<std::string, std::vector<EvalRecord>>> out;
    for (const auto& cat : categories_of(cfg)) {
        auto file = cfg.resolve(cfg.paths.annotations, cat);
        if (cfg.dataset == Dataset::FashionIq) {
            out.emplace_back(cat, load_fashioniq(file, cat));
        } else {
            out.emplace_back(cat, load_cirr(file, CirrLoadOptions{targets_required(cfg)}));
        }
    }
    return out;
}

std::vector<Group> load_groups(const RunConfig& cfg) {
    std::map<fs::path, std::shared_ptr<const GalleryIndex>> loaded;
    auto index = [&](const fs::path& p) {
        auto it = loaded.find(p);
        if (it != loaded.end()) return it->second;
        auto idx = std::make_shared<const GalleryIndex>(GalleryIndex::from_store(read_embedding_store(p)));
        loaded.emplace(p, idx);
        return idx;
    };
    std::vector<Group> groups;
    for (auto& [cat, records] : load_records(cfg)) {
        Group g;
        g.category = cat;
        g.records = std::move(records);
        g.gallery = index(cfg.resolve(cfg.paths.gallery_store, cat));
        g.captions = index(cfg.resolve(cfg.paths.caption_store, cat));
        validate_ids(g.records, *g.gallery, *g.captions, targets_required(cfg));
        groups.push_back(std::move(g));
    }
    return groups;
}

void write_output(const RunConfig& cfg, const std::string& name, const std::string& content) {
    auto dir = cfg.output_dir();
    fs::create_directories(dir);
    auto file = dir / name;
    auto tmp = file;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        out << content;
        if (!out.flush()) throw Error(ErrorCode::Io, "cannot write " + tmp.string());
    }
    fs::rename(tmp, file);
    spdlog::info("wrote {}", file.string());
}

int dry_run_ok(std::ostream& out) {
    out << "dry run: configuration and paths are valid\n";
    return kExitOk;
}

std::vector<double> parse_double_grid(const std::string& text, const char* flag) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        std::size_t used = 0;
        double v = 0;
        try {
            v = std::stod(item, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != item.size()) config_error(std::string(flag) + ": not a number: '" + item + "'");
        out.push_back(v);
    }
    if (out.empty()) config_error(std::string(flag) + " is empty");
    return out;
}

std::vector<std::size_t> parse_size_grid(const std::string& text, const char* flag) {
    std::vector<std::size_t> out;
    for (double v : parse_double_grid(text, flag)) {
        if (v < 1 || v != static_cast<double>(static_cast<std::size_t>(v))) {
            config_error(std::string(flag) + ": expected positive integers");
        }
        out.push_back(static_cast<std::size_t>(v));
    }
    return out;
}

std::string fmt_g(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
}

std::string fmt_fixed(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

// --- commands -------------------------------------------------------------

int cmd_captions(const Options& opt, std::ostream& out, std::ostream& err) {
    auto cfg = load_config(opt);
    check_annotations(cfg);
    TemplateRegistry registry;
    if (!registry.contains(cfg.provider.template_id)) {
        config_error("unknown prompt template '" + cfg.provider.template_id + "'");
    }
    if (cfg.provider.kind == "fixture") require_dir(cfg.paths.fixture_dir, "fixture_dir");
    if (cfg.provider.kind == "http") require_dir(cfg.paths.image_root, "image_root");
    if (opt.dry_run) return dry_run_ok(out);

    std::vector<ComposedQuery> queries;
    for (const auto& [cat, records] : load_records(cfg)) {
        for (const auto& r : records) {
            std::string image;
            if (!cfg.paths.image_root.empty()) {
                image = (fs::path(cfg.resolve(cfg.paths.image_root, cat)) / (r.reference_id + cfg.paths.image_ext))
                            .string();
            }
            queries.push_back({r.query_id, image, r.modification_text});
        }
    }
    if (opt.limit > 0 && queries.size() > opt.limit) queries.resize(opt.limit);

    auto cache_file = cfg.caption_cache_path();
    if (cache_file.has_parent_path()) fs::create_directories(cache_file.parent_path());
    CaptionCache cache(cache_file);

    std::unique_ptr<CaptionProvider> provider;
    if (cfg.provider.kind == "fixture") {
        provider = std::make_unique<FixtureProvider>(cfg.paths.fixture_dir);
    } else {
        provider = std::make_unique<HttpProvider>(cfg.provider.http);
    }

    CaptionGenerator generator(*provider, cache, cfg.generation_options());
    auto summary = generator.generate_all(queries, cfg.provider.template_id, registry);

    out << "queries " << queries.size() << ", generated " << summary.generated << ", cached " << summary.cached
        << ", failed " << summary.failed << '\n';
    for (const auto& o : summary.outcomes) {
        if (o.status != CaptionStatus::Failed) continue;
        err << "failed " << o.query_id << ": " << o.error << '\n';
    }
    return summary.failed > 0 ? kExitFailure : kExitOk;
}

int cmd_embed_ingest(const Options& opt, std::ostream& out, std::ostream&) {
    auto cfg = load_config(opt);
    if (opt.role != "gallery" && opt.role != "captions") {
        config_error("--role must be 'gallery' or 'captions', got '" + opt.role + "'");
    }
    check_annotations(cfg);
    require_file(opt.input, "--input");
    auto target = cfg.output_dir() / fs::path(opt.input).filename();
    std::error_code ec;
    if (fs::exists(target, ec) && fs::equivalent(target, opt.input, ec)) {
        config_error("output " + target.string() + " would overwrite the input");
    }
    if (opt.dry_run) return dry_run_ok(out);

    auto store = read_embedding_store(opt.input);
    std::unordered_set<std::string> ids(store.ids.begin(), store.ids.end());

    std::vector<std::string> missing;
    std::string counterpart;
    for (const auto& [cat, records] : load_records(cfg)) {
        if (opt.category && *opt.category != cat) continue;
        for (const auto& r : records) {
            if (opt.role == "gallery") {
                if (!ids.contains(r.reference_id)) missing.push_back(r.reference_id);
                if (targets_required(cfg)) {
                    for (const auto& t : r.target_ids) {
                        if (!ids.contains(t)) missing.push_back(t);
                    }
                }
            } else {
                if (!ids.contains(modi_key(r.query_id))) missing.push_back(modi_key(r.query_id));
                if (!ids.contains(integ_key(r.query_id))) missing.push_back(integ_key(r.query_id));
            }
        }
        if (counterpart.empty()) {
            counterpart = cfg.resolve(opt.role == "gallery" ? cfg.paths.caption_store : cfg.paths.gallery_store, cat)
                              .string();
        }
    }
    std::sort(missing.begin(), missing.end());
    missing.erase(std::unique(missing.begin(), missing.end()), missing.end());
    if (!missing.empty()) {
        throw DanglingIdError(opt.role == "gallery" ? ErrorCode::DanglingId : ErrorCode::MissingCaptionEmbedding,
                              missing);
    }

    if (!counterpart.empty() && fs::is_regular_file(counterpart, ec)) {
        auto other = read_embedding_store(counterpart);
        if (other.dim != store.dim) {
            throw Error(ErrorCode::DimensionMismatch, "store dim " + std::to_string(store.dim) + " differs from " +
                                                          counterpart + " dim " + std::to_string(other.dim));
        }
    }

    fs::create_directories(cfg.output_dir());
    write_embedding_store(store, target);
    out << "ingested " << store.size() << " vectors (dim " << store.dim << ", tag '" << store.source_tag << "') -> "
        << target.string() << '\n';
    return kExitOk;
}

int cmd_retrieve(const Options& opt, std::ostream& out, std::ostream&) {
    auto cfg = load_config(opt);
    if (opt.query_id.empty()) config_error("--query-id is required");
    if (opt.top == 0) config_error("--top must be >= 1");
    check_annotations(cfg);
    check_stores(cfg);
    if (opt.dry_run) return dry_run_ok(out);

    std::map<fs::path, std::shared_ptr<const GalleryIndex>> loaded;
    auto index = [&](const fs::path& p) {
        auto it = loaded.find(p);
        if (it != loaded.end()) return it->second;
        auto idx = std::make_shared<const GalleryIndex>(GalleryIndex::from_store(read_embedding_store(p)));
        loaded.emplace(p, idx);
        return idx;
    };

    for (const auto& [cat, records] : load_records(cfg)) {
        auto it = std::find_if(records.begin(), records.end(),
                               [&](const EvalRecord& r) { return r.query_id == opt.query_id; });
        if (it == records.end()) continue;

        auto gallery = index(cfg.resolve(cfg.paths.gallery_store, cat));
        auto captions = index(cfg.resolve(cfg.paths.caption_store, cat));
        std::span<const EvalRecord> one(&*it, 1);
        validate_ids(one, *gallery, *captions, false);

        auto result = retrieve(it->query_id, query_embeddings(*it, *gallery, *captions), *gallery, cfg.retrieval,
                               it->reference_id);
        std::unordered_map<std::string, double> s1;
        for (const auto& c : result.stage1_candidates) s1.emplace(c.id, c.score);
        bool reranked = result.mode != RetrievalMode::NoRerank;

        std::size_t width = 2;
        std::size_t rows = std::min(opt.top, result.ranking.size());
        for (std::size_t i = 0; i < rows; ++i) width = std::max(width, result.ranking[i].id.size());

        out << "query " << result.query_id << "  mode " << to_string(result.mode) << "  k " << cfg.retrieval.k
            << "  alpha " << fmt_g(cfg.retrieval.weights.alpha) << "  beta " << fmt_g(cfg.retrieval.weights.beta)
            << '\n';
        char line[512];
        std::snprintf(line, sizeof line, "%4s  %-*s  %10s  %10s\n", "rank", static_cast<int>(width), "id", "S_1st",
                      "S_2nd");
        out << line;
        for (std::size_t i = 0; i < rows; ++i) {
            const auto& r = result.ranking[i];
            auto f = s1.find(r.id);
            std::string first = f == s1.end() ? "-" : fmt_fixed(f->second);
            std::string second = reranked ? fmt_fixed(r.score) : "-";
            std::snprintf(line, sizeof line, "%4zu  %-*s  %10s  %10s\n", i + 1, static_cast<int>(width), r.id.c_str(),
                          first.c_str(), second.c_str());
            out << line;
        }
        return kExitOk;
    }
    throw Error(ErrorCode::InvalidArgument, "unknown query id '" + opt.query_id + "'");
}

const char* extension_for(ReportFormat f) { return f == ReportFormat::Csv ? "csv" : "txt"; }

int cmd_eval(const Options& opt, std::ostream& out, std::ostream&) {
    auto cfg = load_config(opt);
    auto format = parse_report_format(opt.format);
    if (format == ReportFormat::Submission && cfg.dataset != Dataset::Cirr) {
        config_error("submission format is only defined for cirr");
    }
    if (!targets_required(cfg) && format != ReportFormat::Submission) {
        config_error("split '" + cfg.split + "' has no ground truth; use --format submission");
    }
    check_annotations(cfg);
    check_stores(cfg);
    if (opt.dry_run) return dry_run_ok(out);

    auto groups = load_groups(cfg);
    if (format == ReportFormat::Submission) {
        std::vector<RankedResult> results;
        std::vector<EvalRecord> records;
        for (const auto& g : groups) {
            auto r = run_queries(g.records, *g.gallery, *g.captions, cfg.retrieval, cfg.eval.workers);
            results.insert(results.end(), r.begin(), r.end());
            records.insert(records.end(), g.records.begin(), g.records.end());
        }
        auto recall = emit_report({}, format, results, records);
        auto subset = render_submission(results, records, SubmissionMetric::RecallSubset, 3);
        write_output(cfg, "submission_recall_" + cfg.split + ".json", recall);
        write_output(cfg, "submission_recall_subset_" + cfg.split + ".json", subset);
        out << recall;
        return kExitOk;
    }

    std::vector<MetricReport> reports;
    for (const auto& g : groups) {
        auto r = run_benchmark_by_category(g.records, *g.gallery, *g.captions, cfg.retrieval, cfg.eval);
        reports.insert(reports.end(), r.begin(), r.end());
    }
    auto text = emit_report(reports, format);
    write_output(cfg, std::string("eval.") + extension_for(format), text);
    out << text;
    return kExitOk;
}

int cmd_ablate(const Options& opt, std::ostream& out, std::ostream&) {
    auto cfg = load_config(opt);
    auto format = parse_report_format(opt.format);
    if (format == ReportFormat::Submission) config_error("ablate supports table and csv output");
    if (!targets_required(cfg)) config_error("split '" + cfg.split + "' has no ground truth");
    check_annotations(cfg);
    check_stores(cfg);
    if (opt.dry_run) return dry_run_ok(out);

    std::vector<MetricReport> reports;
    for (const auto& g : load_groups(cfg)) {
        auto r = run_ablations(g.records, *g.gallery, *g.captions, cfg.retrieval, cfg.eval);
        reports.insert(reports.end(), r.begin(), r.end());
    }
    auto text = emit_report(reports, format);
    write_output(cfg, std::string("ablation.") + extension_for(format), text);
    out << text;
    return kExitOk;
}

int cmd_sweep(const Options& opt, std::ostream& out, std::ostream&) {
    auto cfg = load_config(opt);
    if (!targets_required(cfg)) config_error("split '" + cfg.split + "' has no ground truth");
    auto alphas = opt.alpha_grid.empty() ? std::vector<double>{cfg.retrieval.weights.alpha}
                                         : parse_double_grid(opt.alpha_grid, "--alpha-grid");
    auto betas = opt.beta_grid.empty() ? std::vector<double>{cfg.retrieval.weights.beta}
                                       : parse_double_grid(opt.beta_grid, "--beta-grid");
    auto ks = opt.k_grid.empty() ? std::vector<std::size_t>{cfg.retrieval.k} : parse_size_grid(opt.k_grid, "--k-grid");
    for (double a : alphas) {
        if (a < 0 || a > 1) config_error("--alpha-grid values must lie in [0, 1]");
    }
    for (double b : betas) {
        if (b < 0 || b > 1) config_error("--beta-grid values must lie in [0, 1]");
    }
    check_annotations(cfg);
    check_stores(cfg);
    if (opt.dry_run) return dry_run_ok(out);

    auto groups = load_groups(cfg);
    std::vector<MetricReport> reports;
    std::size_t evaluated = 0;
    std::size_t skipped = 0;
    for (double a : alphas) {
        for (double b : betas) {
            for (auto k : ks) {
                FusionWeights w{a, b};
                if (!w.valid()) {
                    spdlog::warn("skipping alpha={} beta={} k={}: alpha + beta > 1", fmt_g(a), fmt_g(b), k);
                    ++skipped;
                    continue;
                }
                auto point = cfg.retrieval;
                point.weights = w;
                point.k = k;
                for (const auto& g : groups) {
                    auto r = run_benchmark_by_category(g.records, *g.gallery, *g.captions, point, cfg.eval);
                    reports.insert(reports.end(), r.begin(), r.end());
                }
                ++evaluated;
            }
        }
    }
    if (reports.empty()) throw Error(ErrorCode::InvalidWeights, "no valid grid points");
    auto csv = render_csv(reports);
    write_output(cfg, "sweep.csv", csv);
    out << csv;
    spdlog::info("sweep: {} points evaluated, {} skipped", evaluated, skipped);
    return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    LoggerScope logging(err);

    CLI::App app{"Two-stage composed image retrieval with multi-caption reasoning"};
    app.name("mcre");
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Show help for all subcommands");

    Options opt;
    auto common = [&](CLI::App* sub) {
        sub->add_option("-c,--config", opt.config, "Run configuration (INI)")->required();
        sub->add_option("--set", opt.sets, "Override a config value: section.key=value")->take_all();
        sub->add_flag("--dry-run", opt.dry_run, "Validate configuration and paths, then exit");
    };

    auto* captions = app.add_subcommand("captions", "Generate reasoning captions into the cache");
    common(captions);
    captions->add_option("--split", opt.split, "Dataset split");
    captions->add_option("--limit", opt.limit, "Process at most N queries (0 = all)");
    captions->add_option("--provider", opt.provider, "Caption provider")->check(CLI::IsMember({"http", "fixture"}));

    auto* ingest = app.add_subcommand("embed-ingest", "Validate an embedding store and copy it to the output dir");
    common(ingest);
    ingest->add_option("--input", opt.input, "Embedding store to ingest")->required();
    ingest->add_option("--role", opt.role, "gallery or captions");
    ingest->add_option("--category", opt.category, "Restrict the id check to one category");
    ingest->add_option("--split", opt.split, "Dataset split");

    auto* retrieve_cmd = app.add_subcommand("retrieve", "Rank the gallery for one query");
    common(retrieve_cmd);
    retrieve_cmd->add_option("--query-id", opt.query_id, "Query identifier")->required();
    retrieve_cmd->add_option("--top", opt.top, "Rows to print");
    retrieve_cmd->add_option("--mode", opt.mode, "Retrieval mode");
    retrieve_cmd->add_option("--split", opt.split, "Dataset split");

    auto* eval_cmd = app.add_subcommand("eval", "Evaluate one retrieval mode");
    common(eval_cmd);
    eval_cmd->add_option("--mode", opt.mode, "Retrieval mode");
    eval_cmd->add_option("--format", opt.format, "table, csv or submission");
    eval_cmd->add_option("--split", opt.split, "Dataset split");

    auto* ablate = app.add_subcommand("ablate", "Evaluate all five retrieval modes");
    common(ablate);
    ablate->add_option("--format", opt.format, "table or csv");
    ablate->add_option("--split", opt.split, "Dataset split");

    auto* sweep = app.add_subcommand("sweep", "Grid search over alpha, beta and k");
    common(sweep);
    sweep->add_option("--alpha-grid", opt.alpha_grid, "Comma-separated alpha values");
    sweep->add_option("--beta-grid", opt.beta_grid, "Comma-separated beta values");
    sweep->add_option("--k-grid", opt.k_grid, "Comma-separated k values");
    sweep->add_option("--split", opt.split, "Dataset split");

    std::vector<std::string> argv_storage;
    argv_storage.reserve(args.size() + 1);
    argv_storage.emplace_back("mcre");
    argv_storage.insert(argv_storage.end(), args.begin(), args.end());
    std::vector<const char*> argv;
    for (const auto& a : argv_storage) argv.push_back(a.c_str());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (captions->parsed()) return cmd_captions(opt, out, err);
        if (ingest->parsed()) return cmd_embed_ingest(opt, out, err);
        if (retrieve_cmd->parsed()) return cmd_retrieve(opt, out, err);
        if (eval_cmd->parsed()) return cmd_eval(opt, out, err);
        if (ablate->parsed()) return cmd_ablate(opt, out, err);
        if (sweep->parsed()) return cmd_sweep(opt, out, err);
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return is_usage_error(e.code()) ? kExitConfig : kExitFailure;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitFailure;
    }
    return kExitConfig;
}

}  // namespace mcre::cli
