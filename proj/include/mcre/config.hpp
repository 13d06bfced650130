#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mcre/caption_generator.hpp"
#include "mcre/caption_provider.hpp"
#include "mcre/eval.hpp"
#include "mcre/retrieval.hpp"

namespace mcre {

enum class Dataset { FashionIq, Cirr };

[[nodiscard]] std::string_view to_string(Dataset d) noexcept;
[[nodiscard]] Dataset parse_dataset(std::string_view name);

struct PathsConfig {
    /// Paths may contain {split} and {category} placeholders.
    std::string annotations;
    std::string gallery_store;
    std::string caption_store;
    std::string caption_cache;
    std::string image_root;
    std::string image_ext = ".png";
    std::string fixture_dir;
    std::string output_dir = "out";

    bool operator==(const PathsConfig&) const = default;
};

struct ProviderSettings {
    std::string kind = "fixture";
    std::string template_id = "mcot-v1";
    HttpProviderConfig http;
    std::size_t max_in_flight = 4;
    int retry_base_delay_ms = 500;

    bool operator==(const ProviderSettings&) const = default;
};

/// Everything a CLI run needs. Loaded from an INI document with sections
/// [run], [paths], [retrieval], [provider] and [eval]; relative paths are
/// resolved against the config file's directory.
struct RunConfig {
    Dataset dataset = Dataset::FashionIq;
    std::string split = "val";
    std::vector<std::string> categories;
    PathsConfig paths;
    RetrievalConfig retrieval;
    ProviderSettings provider;
    BenchmarkSpec eval;

    /// Dataset defaults: k=150, FashionIQ K grid, categories shirt/dress/toptee,
    /// reference kept; or k=200, CIRR K grids, reference excluded.
    static RunConfig defaults(Dataset dataset);

    /// Substitutes {split} and {category} in a configured path.
    [[nodiscard]] std::filesystem::path resolve(const std::string& path, const std::string& category = "") const;
    [[nodiscard]] std::filesystem::path output_dir() const { return paths.output_dir; }
    [[nodiscard]] std::filesystem::path caption_cache_path() const;
    [[nodiscard]] GenerationOptions generation_options() const;

    /// Throws Error(Config) on invalid values.
    void validate() const;

    bool operator==(const RunConfig&) const = default;
};

using ConfigOverrides = std::vector<std::pair<std::string, std::string>>;

/// Parses INI text. `base_dir` anchors relative paths. Overrides use
/// "section.key" names and are applied after the document.
[[nodiscard]] RunConfig parse_run_config(std::string_view text, const std::filesystem::path& base_dir = {},
                                         const ConfigOverrides& overrides = {});
[[nodiscard]] RunConfig load_run_config(const std::filesystem::path& file, const ConfigOverrides& overrides = {});

/// INI rendering of a config; parse_run_config(render_run_config(c)) == c.
[[nodiscard]] std::string render_run_config(const RunConfig& config);

}  // namespace mcre
