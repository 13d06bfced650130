#include "mcre/caption_cache.hpp"

#include <ctime>
#include <fstream>
#include <mutex>

#include <json.hpp>

#include "mcre/error.hpp"

namespace mcre {

using nlohmann::ordered_json;

std::string format_rfc3339_utc(std::chrono::system_clock::time_point t) {
    const std::time_t secs = std::chrono::system_clock::to_time_t(t);
    std::tm tm{};
    gmtime_r(&secs, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string serialize_record(const CaptionRecord& r) {
    ordered_json j = {
        {"query_id", r.query_id},   {"prompt_hash", r.prompt_hash},         {"provider_id", r.provider_id},
        {"c_modi", r.c_modi},       {"c_integ", r.c_integ},                 {"reasoning_trace", r.reasoning_trace},
        {"raw_response", r.raw_response}, {"created_at", r.created_at},
    };
    // Replace invalid UTF-8 from providers rather than failing the write.
    return j.dump(-1, ' ', false, ordered_json::error_handler_t::replace);
}

CaptionRecord deserialize_record(std::string_view line) {
    const ordered_json j = ordered_json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw Error(ErrorCode::CacheCorrupt, "record is not a JSON object");
    auto field = [&](const char* key) {
        auto it = j.find(key);
        if (it == j.end() || !it->is_string()) {
            throw Error(ErrorCode::CacheCorrupt, std::string("record lacks string field '") + key + "'");
        }
        return it->get<std::string>();
    };
    CaptionRecord r;
    r.query_id = field("query_id");
    r.prompt_hash = field("prompt_hash");
    r.provider_id = field("provider_id");
    r.c_modi = field("c_modi");
    r.c_integ = field("c_integ");
    r.reasoning_trace = field("reasoning_trace");
    r.raw_response = field("raw_response");
    r.created_at = field("created_at");
    return r;
}

CaptionCache::CaptionCache(std::filesystem::path file) : file_(std::move(file)) {
    std::ifstream in(file_, std::ios::binary);
    if (!in) return;  // a missing file is an empty cache
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            CaptionRecord r = deserialize_record(line);
            auto key = r.key();
            latest_[r.query_id] = key;
            index_.insert_or_assign(std::move(key), std::move(r));
        } catch (const Error& e) {
            throw Error(ErrorCode::CacheCorrupt, file_.string() + " line " + std::to_string(lineno) + ": " + e.detail());
        }
    }
}

std::optional<CaptionRecord> CaptionCache::find(const CacheKey& key) const {
    std::shared_lock lock(mutex_);
    auto it = index_.find(key);
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

std::optional<CaptionRecord> CaptionCache::latest_for_query(const std::string& query_id) const {
    std::shared_lock lock(mutex_);
    auto it = latest_.find(query_id);
    if (it == latest_.end()) return std::nullopt;
    return index_.at(it->second);
}

void CaptionCache::append(const CaptionRecord& record) {
    const std::string line = serialize_record(record) + "\n";
    std::unique_lock lock(mutex_);
    if (file_.has_parent_path()) std::filesystem::create_directories(file_.parent_path());
    std::ofstream out(file_, std::ios::binary | std::ios::app);
    if (!out) throw Error(ErrorCode::Io, "cannot append to " + file_.string());
    out.write(line.data(), static_cast<std::streamsize>(line.size()));
    out.flush();
    if (!out) throw Error(ErrorCode::Io, "short write to " + file_.string());
    latest_[record.query_id] = record.key();
    index_.insert_or_assign(record.key(), record);
}

std::size_t CaptionCache::size() const {
    std::shared_lock lock(mutex_);
    return index_.size();
}

}  // namespace mcre
