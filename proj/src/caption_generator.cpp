#include "mcre/caption_generator.hpp"

#include <algorithm>
#include <atomic>
#include <thread>

#include <spdlog/spdlog.h>

namespace mcre {

std::chrono::milliseconds RetryPolicy::delay(int attempt) const {
    const int shift = std::clamp(attempt - 1, 0, 30);
    const auto scaled = base_delay.count() * (std::int64_t{1} << shift);
    return std::min(std::chrono::milliseconds(scaled), max_delay);
}

CaptionGenerator::CaptionGenerator(CaptionProvider& provider, CaptionCache& cache, GenerationOptions options)
    : provider_(provider), cache_(cache), options_(std::move(options)) {
    if (options_.retry.max_attempts < 1) options_.retry.max_attempts = 1;
    if (options_.max_in_flight < 1) options_.max_in_flight = 1;
}

std::string CaptionGenerator::call_with_retries(const CaptionRequest& request) {
    for (int attempt = 1;; ++attempt) {
        try {
            return provider_.complete(request);
        } catch (const TransientProviderError& e) {
            if (attempt >= options_.retry.max_attempts) {
                throw Error(ErrorCode::ProviderUnavailable, "query '" + request.query.query_id + "' failed after " +
                                                                std::to_string(attempt) + " attempts: " + e.detail());
            }
            spdlog::debug("provider attempt {} for '{}' failed: {}", attempt, request.query.query_id, e.detail());
            options_.sleep(options_.retry.delay(attempt));
        }
    }
}

CaptionPair CaptionGenerator::produce(const ComposedQuery& query, const McotPrompt& prompt) {
    std::optional<std::filesystem::path> image;
    if (provider_.needs_image()) {
        std::error_code ec;
        if (query.reference_image.empty() || !std::filesystem::is_regular_file(query.reference_image, ec)) {
            throw Error(ErrorCode::ImageUnresolvable,
                        "reference image '" + query.reference_image + "' for query '" + query.query_id + "'");
        }
        image = query.reference_image;
    }

    CaptionRequest request{query, prompt.rendered, image, false};
    std::string raw = call_with_retries(request);
    CaptionFields fields;
    try {
        fields = parse_response(raw);
    } catch (const ParseFailure& first) {
        spdlog::info("reprompting '{}' after {}", query.query_id, first.detail());
        request.prompt = reprompt_text(prompt);
        request.reprompt = true;
        raw = call_with_retries(request);
        fields = parse_response(raw);
    }
    if (fields.c_modi == fields.c_integ) {
        spdlog::warn("query '{}': modification and integration captions are identical", query.query_id);
    }

    CaptionRecord record{query.query_id,         prompt.prompt_hash, provider_.id(), fields.c_modi, fields.c_integ,
                         fields.reasoning_trace, raw,                format_rfc3339_utc(options_.clock())};
    cache_.append(record);
    return record.pair();
}

CaptionPair CaptionGenerator::generate(const ComposedQuery& query, const McotPrompt& prompt, bool* was_cached) {
    const CacheKey key{query.query_id, prompt.prompt_hash, provider_.id()};
    if (auto hit = cache_.find(key)) {
        if (was_cached) *was_cached = true;
        return hit->pair();
    }

    std::promise<CaptionPair> promise;
    {
        std::unique_lock lock(inflight_mutex_);
        if (auto hit = cache_.find(key)) {
            if (was_cached) *was_cached = true;
            return hit->pair();
        }
        if (auto it = inflight_.find(key); it != inflight_.end()) {
            auto shared = it->second;
            lock.unlock();
            if (was_cached) *was_cached = true;
            return shared.get();
        }
        inflight_.emplace(key, promise.get_future().share());
    }

    auto finish = [&] {
        std::lock_guard lock(inflight_mutex_);
        inflight_.erase(key);
    };
    try {
        CaptionPair pair = produce(query, prompt);
        promise.set_value(pair);
        finish();
        if (was_cached) *was_cached = false;
        return pair;
    } catch (...) {
        promise.set_exception(std::current_exception());
        finish();
        throw;
    }
}

BatchSummary CaptionGenerator::generate_all(std::span<const ComposedQuery> queries, std::string_view template_id,
                                            const TemplateRegistry& registry) {
    BatchSummary summary;
    summary.outcomes.resize(queries.size());

    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < queries.size(); i = next++) {
            const ComposedQuery& q = queries[i];
            QueryOutcome& out = summary.outcomes[i];
            out.query_id = q.query_id;
            try {
                const McotPrompt prompt = build_prompt(q, template_id, registry);
                bool cached = false;
                out.captions = generate(q, prompt, &cached);
                out.status = cached ? CaptionStatus::Cached : CaptionStatus::Generated;
            } catch (const Error& e) {
                out.status = CaptionStatus::Failed;
                out.error_code = e.code();
                out.error = e.what();
            } catch (const std::exception& e) {
                out.status = CaptionStatus::Failed;
                out.error = e.what();
            }
        }
    };

    const std::size_t threads = std::min(options_.max_in_flight, std::max<std::size_t>(queries.size(), 1));
    {
        std::vector<std::jthread> pool;
        for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
        worker();
    }

    for (const auto& o : summary.outcomes) {
        switch (o.status) {
            case CaptionStatus::Generated: ++summary.generated; break;
            case CaptionStatus::Cached: ++summary.cached; break;
            case CaptionStatus::Failed: ++summary.failed; break;
        }
    }
    return summary;
}

CaptionPair generate_captions(const ComposedQuery& query, const McotPrompt& prompt, CaptionProvider& provider,
                              CaptionCache& cache, GenerationOptions options) {
    CaptionGenerator gen(provider, cache, std::move(options));
    return gen.generate(query, prompt);
}

}  // namespace mcre
