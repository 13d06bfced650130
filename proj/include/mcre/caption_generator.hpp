#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <future>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <thread>
#include <string>
#include <vector>

#include "mcre/caption.hpp"
#include "mcre/caption_cache.hpp"
#include "mcre/caption_provider.hpp"

namespace mcre {

/// Bounded exponential backoff: delay(n) = min(base * 2^(n-1), max_delay).
struct RetryPolicy {
    int max_attempts = 3;
    std::chrono::milliseconds base_delay{500};
    std::chrono::milliseconds max_delay{8000};

    [[nodiscard]] std::chrono::milliseconds delay(int attempt) const;
};

struct GenerationOptions {
    RetryPolicy retry;
    std::size_t max_in_flight = 4;
    std::function<void(std::chrono::milliseconds)> sleep = [](std::chrono::milliseconds d) {
        std::this_thread::sleep_for(d);
    };
    std::function<std::chrono::system_clock::time_point()> clock = [] { return std::chrono::system_clock::now(); };
};

enum class CaptionStatus { Generated, Cached, Failed };

struct QueryOutcome {
    std::string query_id;
    CaptionStatus status = CaptionStatus::Failed;
    std::optional<CaptionPair> captions;
    std::optional<ErrorCode> error_code;
    std::string error;
};

struct BatchSummary {
    std::size_t generated = 0;
    std::size_t cached = 0;
    std::size_t failed = 0;
    /// In input order.
    std::vector<QueryOutcome> outcomes;
};

/// Drives a provider through the caption cache: cache lookup, bounded
/// retries on transient failures, one reprompt on an unparseable reply.
/// Concurrent requests for one cache key share a single provider call.
class CaptionGenerator {
public:
    CaptionGenerator(CaptionProvider& provider, CaptionCache& cache, GenerationOptions options = {});

    /// Returns the cached pair when present; otherwise generates, appends to
    /// the cache, and returns. `was_cached` reports which path was taken.
    CaptionPair generate(const ComposedQuery& query, const McotPrompt& prompt, bool* was_cached = nullptr);

    /// Processes every query with at most max_in_flight provider calls in
    /// flight. Per-query failures are recorded, not thrown.
    BatchSummary generate_all(std::span<const ComposedQuery> queries, std::string_view template_id,
                              const TemplateRegistry& registry);

private:
    std::string call_with_retries(const CaptionRequest& request);
    CaptionPair produce(const ComposedQuery& query, const McotPrompt& prompt);

    CaptionProvider& provider_;
    CaptionCache& cache_;
    GenerationOptions options_;
    std::mutex inflight_mutex_;
    std::map<CacheKey, std::shared_future<CaptionPair>> inflight_;
};

/// One-shot form of CaptionGenerator::generate.
CaptionPair generate_captions(const ComposedQuery& query, const McotPrompt& prompt, CaptionProvider& provider,
                              CaptionCache& cache, GenerationOptions options = {});

}  // namespace mcre
