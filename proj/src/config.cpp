#include "mcre/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "mcre/error.hpp"

namespace mcre {

std::string_view to_string(Dataset d) noexcept {
    switch (d) {
        case Dataset::FashionIq: return "fashioniq";
        case Dataset::Cirr: return "cirr";
    }
    return "unknown";
}

Dataset parse_dataset(std::string_view name) {
    if (name == "fashioniq") return Dataset::FashionIq;
    if (name == "cirr") return Dataset::Cirr;
    throw Error(ErrorCode::Config, "unknown dataset '" + std::string(name) + "' (expected fashioniq or cirr)");
}

RunConfig RunConfig::defaults(Dataset dataset) {
    RunConfig c;
    c.dataset = dataset;
    if (dataset == Dataset::FashionIq) {
        c.categories = {"shirt", "dress", "toptee"};
        c.retrieval = RetrievalConfig::fashioniq_defaults();
        c.eval = BenchmarkSpec::fashioniq();
    } else {
        c.retrieval = RetrievalConfig::cirr_defaults();
        c.eval = BenchmarkSpec::cirr();
    }
    return c;
}

std::filesystem::path RunConfig::resolve(const std::string& path, const std::string& category) const {
    std::string out;
    out.reserve(path.size());
    for (std::size_t i = 0; i < path.size();) {
        if (path.compare(i, 7, "{split}") == 0) {
            out += split;
            i += 7;
        } else if (path.compare(i, 10, "{category}") == 0) {
            out += category;
            i += 10;
        } else {
            out += path[i++];
        }
    }
    return out;
}

std::filesystem::path RunConfig::caption_cache_path() const {
    if (!paths.caption_cache.empty()) return resolve(paths.caption_cache);
    return output_dir() / "captions.jsonl";
}

GenerationOptions RunConfig::generation_options() const {
    GenerationOptions o;
    o.max_in_flight = provider.max_in_flight;
    o.retry.max_attempts = provider.http.max_retries;
    o.retry.base_delay = std::chrono::milliseconds(provider.retry_base_delay_ms);
    return o;
}

void RunConfig::validate() const {
    auto fail = [](const std::string& m) { throw Error(ErrorCode::Config, m); };
    try {
        retrieval.validate();
        eval.validate();
    } catch (const Error& e) {
        fail(e.detail());
    }
    if (split.empty()) fail("run.split must not be empty");
    if (dataset == Dataset::FashionIq && categories.empty()) fail("run.categories must list at least one category");
    if (paths.output_dir.empty()) fail("run.output_dir must not be empty");
    if (provider.kind != "fixture" && provider.kind != "http") {
        fail("provider.kind must be 'fixture' or 'http', got '" + provider.kind + "'");
    }
    if (provider.kind == "http") {
        if (provider.http.endpoint.empty()) fail("provider.endpoint is required for the http provider");
        if (provider.http.model.empty()) fail("provider.model is required for the http provider");
    }
    if (provider.max_in_flight == 0) fail("provider.max_in_flight must be >= 1");
    if (provider.http.max_retries < 1) fail("provider.max_retries must be >= 1");
    if (provider.retry_base_delay_ms < 0) fail("provider.retry_base_delay_ms must be >= 0");
    if (!(provider.http.timeout_seconds > 0)) fail("provider.timeout_seconds must be > 0");
    if (provider.http.requests_per_minute < 0) fail("provider.requests_per_minute must be >= 0");
    if (!std::isfinite(provider.http.temperature) || provider.http.temperature < 0) {
        fail("provider.temperature must be a finite value >= 0");
    }
}

namespace {

std::string trim(std::string_view s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* expected) {
    throw Error(ErrorCode::Config, key + ": expected " + expected + ", got '" + value + "'");
}

template <typename T>
T parse_integer(const std::string& key, const std::string& value) {
    T out{};
    auto v = trim(value);
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (v.empty() || ec != std::errc{} || p != v.data() + v.size()) bad_value(key, value, "an integer");
    return out;
}

double parse_double(const std::string& key, const std::string& value) {
    auto v = trim(value);
    if (v.empty()) bad_value(key, value, "a number");
    errno = 0;
    char* end = nullptr;
    double d = std::strtod(v.c_str(), &end);
    if (end != v.c_str() + v.size() || errno == ERANGE || !std::isfinite(d)) bad_value(key, value, "a number");
    return d;
}

bool parse_bool(const std::string& key, const std::string& value) {
    auto v = trim(value);
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    bad_value(key, value, "a boolean");
}

std::vector<std::string> parse_list(const std::string& value) {
    std::vector<std::string> out;
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) {
        auto t = trim(item);
        if (!t.empty()) out.push_back(std::move(t));
    }
    return out;
}

std::vector<std::size_t> parse_size_list(const std::string& key, const std::string& value) {
    std::vector<std::size_t> out;
    for (const auto& item : parse_list(value)) out.push_back(parse_integer<std::size_t>(key, item));
    return out;
}

using Setter = std::function<void(RunConfig&, const std::string& key, const std::string& value)>;

struct KeySpec {
    Setter set;
    bool is_path = false;
};

const std::map<std::string, KeySpec, std::less<>>& key_table() {
    static const std::map<std::string, KeySpec, std::less<>> table = [] {
        std::map<std::string, KeySpec, std::less<>> t;
        auto str = [](std::string RunConfig::*outer) {
            return [outer](RunConfig& c, const std::string&, const std::string& v) { c.*outer = trim(v); };
        };
        auto path = [](std::string PathsConfig::*field) {
            return KeySpec{[field](RunConfig& c, const std::string&, const std::string& v) { c.paths.*field = trim(v); },
                           true};
        };

        t["run.dataset"] = {[](RunConfig& c, const std::string&, const std::string& v) {
            c.dataset = parse_dataset(trim(v));
        }};
        t["run.split"] = {str(&RunConfig::split)};
        t["run.categories"] = {[](RunConfig& c, const std::string&, const std::string& v) {
            c.categories = parse_list(v);
        }};
        t["run.output_dir"] = path(&PathsConfig::output_dir);

        t["paths.annotations"] = path(&PathsConfig::annotations);
        t["paths.gallery_store"] = path(&PathsConfig::gallery_store);
        t["paths.caption_store"] = path(&PathsConfig::caption_store);
        t["paths.caption_cache"] = path(&PathsConfig::caption_cache);
        t["paths.image_root"] = path(&PathsConfig::image_root);
        t["paths.fixture_dir"] = path(&PathsConfig::fixture_dir);
        t["paths.image_ext"] = {[](RunConfig& c, const std::string&, const std::string& v) {
            c.paths.image_ext = trim(v);
        }};

        t["retrieval.k"] = {[](RunConfig& c, const std::string& k, const std::string& v) {
            c.retrieval.k = parse_integer<std::size_t>(k, v);
        }};
        t["retrieval.alpha"] = {[](RunConfig& c, const std::string& k, const std::string& v) {
            c.retrieval.weights.alpha = parse_double(k, v);
        }};
        t["retrieval.beta"] = {[](RunConfig& c, const std::string& k, const std::string& v) {
            c.retrieval.weights.beta = parse_double(k, v);
        }};
        t["retrieval.mode"] = {[](RunConfig& c, const std::string& k, const std::string& v) {
            try {
                c.retrieval.mode = parse_retrieval_mode(trim(v));
            } catch (const Error&) {
                bad_value(k, v, "one of full, no_filtering, no_rerank, modi_only, integ_only");
            }
        }};
        t["retrieval.exclude_reference"] = {[](RunConfig& c, const std::string& k, const std::string& v) {
            c.retrieval.exclude_reference = parse_bool(k, v);
        }};
        t["retrieval.pre_normalize"] = {[](RunConfig& c, const std::string& k, const std::string& v) {
            c.retrieval.pre_normalize = parse_bool(k, v);
        }};

        t["provider.kind"] = {[](RunConfig& c, const std::string&, const std::string& v) {
            c.provider.kind = trim(v);
        }};
        t["provider.template"] = {[](RunConfig& c, const std::string&, const std::string& v) {
            c.provider.template_id = trim(v);
        }};
        t["provider.endpoint"] = {[](RunConfig& c, const std::string&, const std::string& v) {
            c.provider.http.endpoint = trim(v);
        }};
        t["provider.api_key_env"] = {[](RunConfig& c, const std::string&, const std::string& v) {
            c.provider.http.api_key_env = trim(v);
        }};
        t["provider.model"] = {[](RunConfig& c, const std::string&, const std::string& v) {
            c.provider.http.model = trim(v);
        }};
        t["provider.timeout_seconds"] = {[](RunConfig& c, const std::string& k, const std::string& v) {
            c.provider.http.timeout_seconds = parse_double(k, v);
        }};
        t["provider.max_retries"] = {[](RunConfig& c, const std::string& k, const std::string& v) {
            c.provider.http.max_retries = parse_integer<int>(k, v);
        }};
        t["provider.temperature"] = {[](RunConfig& c, const std::string& k, const std::string& v) {
            c.provider.http.temperature = parse_double(k, v);
        }};
        t["provider.requests_per_minute"] = {[](RunConfig& c, const std::string& k, const std::string& v) {
            c.provider.http.requests_per_minute = parse_double(k, v);
        }};
        t["provider.max_in_flight"] = {[](RunConfig& c, const std::string& k, const std::string& v) {
            c.provider.max_in_flight = parse_integer<std::size_t>(k, v);
        }};
        t["provider.retry_base_delay_ms"] = {[](RunConfig& c, const std::string& k, const std::string& v) {
            c.provider.retry_base_delay_ms = parse_integer<int>(k, v);
        }};

        t["eval.ks"] = {[](RunConfig& c, const std::string& k, const std::string& v) {
            c.eval.ks = parse_size_list(k, v);
        }};
        t["eval.subset_ks"] = {[](RunConfig& c, const std::string& k, const std::string& v) {
            c.eval.subset_ks = parse_size_list(k, v);
        }};
        t["eval.workers"] = {[](RunConfig& c, const std::string& k, const std::string& v) {
            c.eval.workers = parse_integer<std::size_t>(k, v);
        }};
        return t;
    }();
    return table;
}

const KeySpec& lookup_key(const std::string& key) {
    const auto& table = key_table();
    auto it = table.find(key);
    if (it == table.end()) throw Error(ErrorCode::Config, "unknown config key '" + key + "'");
    return it->second;
}

std::string anchor(const std::string& value, const std::filesystem::path& base_dir) {
    auto v = trim(value);
    if (v.empty() || base_dir.empty()) return v;
    std::filesystem::path p(v);
    if (p.is_absolute()) return v;
    return (base_dir / p).lexically_normal().string();
}

}  // namespace

RunConfig parse_run_config(std::string_view text, const std::filesystem::path& base_dir,
                           const ConfigOverrides& overrides) {
    namespace pt = boost::property_tree;
    pt::ptree tree;
    try {
        std::istringstream in{std::string(text)};
        pt::ini_parser::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw Error(ErrorCode::Config, "line " + std::to_string(e.line()) + ": " + e.message());
    }

    std::vector<std::pair<std::string, std::string>> entries;
    for (const auto& [section, body] : tree) {
        if (body.empty() && !body.data().empty()) {
            throw Error(ErrorCode::Config, "key '" + section + "' appears outside a section");
        }
        for (const auto& [key, value] : body) {
            entries.emplace_back(section + "." + key, value.data());
        }
    }

    // The dataset decides the defaults, so it is read before anything else.
    std::optional<std::string> dataset;
    for (const auto& [k, v] : entries) {
        if (k == "run.dataset") dataset = v;
    }
    for (const auto& [k, v] : overrides) {
        if (k == "run.dataset") dataset = v;
    }
    if (!dataset) throw Error(ErrorCode::Config, "run.dataset is required");
    RunConfig config = RunConfig::defaults(parse_dataset(trim(*dataset)));

    for (const auto& [k, v] : entries) {
        const auto& spec = lookup_key(k);
        spec.set(config, k, spec.is_path ? anchor(v, base_dir) : v);
    }
    for (const auto& [k, v] : overrides) {
        lookup_key(k).set(config, k, v);
    }
    config.validate();
    return config;
}

RunConfig load_run_config(const std::filesystem::path& file, const ConfigOverrides& overrides) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw Error(ErrorCode::Config, "cannot open config file " + file.string());
    std::stringstream ss;
    ss << in.rdbuf();
    auto base = file.parent_path();
    if (base.empty()) base = ".";
    try {
        return parse_run_config(ss.str(), base, overrides);
    } catch (const Error& e) {
        throw Error(ErrorCode::Config, file.string() + ": " + e.detail());
    }
}

namespace {

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

template <typename T>
std::string join(const std::vector<T>& items) {
    std::ostringstream out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (i) out << ',';
        out << items[i];
    }
    return out.str();
}

}  // namespace

std::string render_run_config(const RunConfig& c) {
    std::ostringstream out;
    auto b = [](bool v) { return v ? "true" : "false"; };
    out << "[run]\n"
        << "dataset = " << to_string(c.dataset) << '\n'
        << "split = " << c.split << '\n'
        << "categories = " << join(c.categories) << '\n'
        << "output_dir = " << c.paths.output_dir << '\n'
        << "\n[paths]\n"
        << "annotations = " << c.paths.annotations << '\n'
        << "gallery_store = " << c.paths.gallery_store << '\n'
        << "caption_store = " << c.paths.caption_store << '\n'
        << "caption_cache = " << c.paths.caption_cache << '\n'
        << "image_root = " << c.paths.image_root << '\n'
        << "image_ext = " << c.paths.image_ext << '\n'
        << "fixture_dir = " << c.paths.fixture_dir << '\n'
        << "\n[retrieval]\n"
        << "k = " << c.retrieval.k << '\n'
        << "alpha = " << fmt_double(c.retrieval.weights.alpha) << '\n'
        << "beta = " << fmt_double(c.retrieval.weights.beta) << '\n'
        << "mode = " << to_string(c.retrieval.mode) << '\n'
        << "exclude_reference = " << b(c.retrieval.exclude_reference) << '\n'
        << "pre_normalize = " << b(c.retrieval.pre_normalize) << '\n'
        << "\n[provider]\n"
        << "kind = " << c.provider.kind << '\n'
        << "template = " << c.provider.template_id << '\n'
        << "endpoint = " << c.provider.http.endpoint << '\n'
        << "api_key_env = " << c.provider.http.api_key_env << '\n'
        << "model = " << c.provider.http.model << '\n'
        << "timeout_seconds = " << fmt_double(c.provider.http.timeout_seconds) << '\n'
        << "max_retries = " << c.provider.http.max_retries << '\n'
        << "temperature = " << fmt_double(c.provider.http.temperature) << '\n'
        << "requests_per_minute = " << fmt_double(c.provider.http.requests_per_minute) << '\n'
        << "max_in_flight = " << c.provider.max_in_flight << '\n'
        << "retry_base_delay_ms = " << c.provider.retry_base_delay_ms << '\n'
        << "\n[eval]\n"
        << "ks = " << join(c.eval.ks) << '\n'
        << "subset_ks = " << join(c.eval.subset_ks) << '\n'
        << "workers = " << c.eval.workers << '\n';
    return out.str();
}

}  // namespace mcre
