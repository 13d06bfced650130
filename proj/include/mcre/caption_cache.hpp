#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <shared_mutex>
#include <string>
#include <tuple>

#include "mcre/caption.hpp"

namespace mcre {

struct CacheKey {
    std::string query_id;
    std::string prompt_hash;
    std::string provider_id;

    auto operator<=>(const CacheKey&) const = default;
};

struct CaptionRecord {
    std::string query_id;
    std::string prompt_hash;
    std::string provider_id;
    std::string c_modi;
    std::string c_integ;
    std::string reasoning_trace;
    std::string raw_response;
    /// RFC 3339 UTC timestamp, second precision.
    std::string created_at;

    [[nodiscard]] CacheKey key() const { return {query_id, prompt_hash, provider_id}; }
    [[nodiscard]] CaptionPair pair() const { return {c_modi, c_integ, reasoning_trace, provider_id, prompt_hash}; }

    bool operator==(const CaptionRecord&) const = default;
};

[[nodiscard]] std::string format_rfc3339_utc(std::chrono::system_clock::time_point t);

/// One JSON record per line.
[[nodiscard]] std::string serialize_record(const CaptionRecord& record);
/// Throws CacheCorrupt.
[[nodiscard]] CaptionRecord deserialize_record(std::string_view line);

/// Append-only caption cache backed by a JSON-lines file. The in-memory
/// index is rebuilt from the file on open; the last record for a key wins.
/// Concurrent readers are allowed; appends are serialized.
class CaptionCache {
public:
    explicit CaptionCache(std::filesystem::path file);

    [[nodiscard]] std::optional<CaptionRecord> find(const CacheKey& key) const;
    /// Any record for the query, regardless of prompt or provider; the most
    /// recently appended wins.
    [[nodiscard]] std::optional<CaptionRecord> latest_for_query(const std::string& query_id) const;
    void append(const CaptionRecord& record);

    [[nodiscard]] std::size_t size() const;
    [[nodiscard]] const std::filesystem::path& file() const noexcept { return file_; }

private:
    std::filesystem::path file_;
    mutable std::shared_mutex mutex_;
    std::map<CacheKey, CaptionRecord> index_;
    std::map<std::string, CacheKey> latest_;
};

}  // namespace mcre
