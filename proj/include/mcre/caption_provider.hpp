#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <mutex>
#include <optional>
#include <string>

#include "mcre/caption.hpp"
#include "mcre/error.hpp"

namespace mcre {

struct CaptionRequest {
    const ComposedQuery& query;
    /// Full prompt text to send, including any reprompt reminder.
    std::string prompt;
    /// Resolved reference image, set when the provider needs pixels.
    std::optional<std::filesystem::path> image;
    bool reprompt = false;
};

/// Retryable provider failure: network errors, timeouts, 408/429/5xx.
class TransientProviderError : public Error {
public:
    explicit TransientProviderError(const std::string& message)
        : Error(ErrorCode::ProviderUnavailable, message) {}
};

/// A multimodal model that answers a prompt about a reference image.
/// Implementations must be safe to call from several threads.
class CaptionProvider {
public:
    virtual ~CaptionProvider() = default;

    /// Stable identifier; part of the caption cache key.
    [[nodiscard]] virtual std::string id() const = 0;
    [[nodiscard]] virtual bool needs_image() const = 0;

    /// Raw reply text. Throws TransientProviderError for retryable failures
    /// and Error(ProviderUnavailable) for permanent ones.
    virtual std::string complete(const CaptionRequest& request) = 0;
};

/// Canned replies read from `<dir>/<query_id>.txt`. A reprompt reads
/// `<query_id>.reprompt.txt` when present and falls back to the first file.
class FixtureProvider : public CaptionProvider {
public:
    explicit FixtureProvider(std::filesystem::path dir);

    [[nodiscard]] std::string id() const override { return "fixture"; }
    [[nodiscard]] bool needs_image() const override { return false; }
    std::string complete(const CaptionRequest& request) override;

    [[nodiscard]] std::size_t calls() const noexcept { return calls_.load(); }

private:
    std::filesystem::path dir_;
    std::atomic<std::size_t> calls_{0};
};

/// Spaces requests evenly to at most `per_minute` per minute. Zero or
/// negative disables limiting.
class RateLimiter {
public:
    explicit RateLimiter(double per_minute);

    void acquire();

private:
    std::chrono::steady_clock::duration interval_{};
    std::mutex mutex_;
    std::chrono::steady_clock::time_point next_{};
};

struct HttpProviderConfig {
    /// Full URL of an OpenAI-compatible chat-completions endpoint.
    std::string endpoint;
    /// Name of the environment variable holding the API key. Empty sends no
    /// Authorization header.
    std::string api_key_env;
    std::string model;
    double timeout_seconds = 60.0;
    int max_retries = 3;
    double temperature = 0.0;
    double requests_per_minute = 0.0;

    bool operator==(const HttpProviderConfig&) const = default;
};

/// Sends the prompt and the base64-encoded reference image to a
/// chat-completions endpoint and returns the first choice's text.
class HttpProvider : public CaptionProvider {
public:
    explicit HttpProvider(HttpProviderConfig config);

    [[nodiscard]] std::string id() const override { return "http:" + config_.model; }
    [[nodiscard]] bool needs_image() const override { return true; }
    std::string complete(const CaptionRequest& request) override;

    [[nodiscard]] const HttpProviderConfig& config() const noexcept { return config_; }

    /// JSON request body for a prompt and image bytes; exposed for tests.
    [[nodiscard]] std::string request_body(const std::string& prompt, const std::string& image_bytes,
                                           const std::string& mime_type) const;

    /// Extracts the reply text from a chat-completions response body.
    [[nodiscard]] static std::string reply_text(const std::string& body);

private:
    HttpProviderConfig config_;
    std::string scheme_host_port_;
    std::string path_;
    std::optional<std::string> api_key_;
    RateLimiter limiter_;
};

[[nodiscard]] std::string base64_encode(std::string_view bytes);

}  // namespace mcre
