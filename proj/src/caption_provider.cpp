#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <cstdlib>
#include <fstream>
#include <iterator>
#include <thread>

#include <json.hpp>
#include <openssl/evp.h>

#include "mcre/caption_provider.hpp"

namespace mcre {

using nlohmann::json;

namespace {

std::optional<std::string> read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) return std::nullopt;
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

std::string mime_for(const std::filesystem::path& p) {
    auto ext = p.extension().string();
    for (auto& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
    if (ext == ".webp") return "image/webp";
    if (ext == ".gif") return "image/gif";
    return "image/png";
}

}  // namespace

std::string base64_encode(std::string_view bytes) {
    std::string out(4 * ((bytes.size() + 2) / 3), '\0');
    const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                  reinterpret_cast<const unsigned char*>(bytes.data()),
                                  static_cast<int>(bytes.size()));
    out.resize(static_cast<std::size_t>(n));
    return out;
}

FixtureProvider::FixtureProvider(std::filesystem::path dir) : dir_(std::move(dir)) {}

std::string FixtureProvider::complete(const CaptionRequest& request) {
    ++calls_;
    const auto& qid = request.query.query_id;
    if (request.reprompt) {
        if (auto text = read_file(dir_ / (qid + ".reprompt.txt"))) return *text;
    }
    if (auto text = read_file(dir_ / (qid + ".txt"))) return *text;
    throw Error(ErrorCode::ProviderUnavailable, "no fixture for query '" + qid + "' in " + dir_.string());
}

RateLimiter::RateLimiter(double per_minute) {
    if (per_minute > 0.0) {
        interval_ = std::chrono::duration_cast<std::chrono::steady_clock::duration>(
            std::chrono::duration<double>(60.0 / per_minute));
    }
}

void RateLimiter::acquire() {
    if (interval_ == std::chrono::steady_clock::duration::zero()) return;
    std::chrono::steady_clock::time_point slot;
    {
        std::lock_guard lock(mutex_);
        const auto now = std::chrono::steady_clock::now();
        slot = std::max(now, next_);
        next_ = slot + interval_;
    }
    std::this_thread::sleep_until(slot);
}

HttpProvider::HttpProvider(HttpProviderConfig config)
    : config_(std::move(config)), limiter_(config_.requests_per_minute) {
    const auto scheme_end = config_.endpoint.find("://");
    if (config_.endpoint.empty() || scheme_end == std::string::npos) {
        throw Error(ErrorCode::Config, "provider endpoint must be an absolute URL, got '" + config_.endpoint + "'");
    }
    const auto path_begin = config_.endpoint.find('/', scheme_end + 3);
    scheme_host_port_ = config_.endpoint.substr(0, path_begin);
    path_ = path_begin == std::string::npos ? "/" : config_.endpoint.substr(path_begin);
    if (config_.model.empty()) throw Error(ErrorCode::Config, "provider model is not set");
    if (!config_.api_key_env.empty()) {
        const char* key = std::getenv(config_.api_key_env.c_str());
        if (key == nullptr || *key == '\0') {
            throw Error(ErrorCode::Config, "environment variable " + config_.api_key_env + " is not set");
        }
        api_key_ = key;
    }
}

std::string HttpProvider::request_body(const std::string& prompt, const std::string& image_bytes,
                                       const std::string& mime_type) const {
    json content = json::array();
    content.push_back({{"type", "text"}, {"text", prompt}});
    if (!image_bytes.empty()) {
        content.push_back({{"type", "image_url"},
                           {"image_url", {{"url", "data:" + mime_type + ";base64," + base64_encode(image_bytes)}}}});
    }
    json body = {
        {"model", config_.model},
        {"temperature", config_.temperature},
        {"messages", json::array({{{"role", "user"}, {"content", content}}})},
    };
    return body.dump();
}

std::string HttpProvider::reply_text(const std::string& body) {
    const json doc = json::parse(body, nullptr, false);
    if (doc.is_discarded() || !doc.contains("choices") || !doc["choices"].is_array() || doc["choices"].empty()) {
        throw Error(ErrorCode::ProviderUnavailable, "response has no choices");
    }
    const json& message = doc["choices"][0].value("message", json::object());
    const json content = message.value("content", json());
    if (content.is_string()) return content.get<std::string>();
    if (content.is_array()) {
        std::string text;
        for (const auto& part : content) {
            if (part.is_object() && part.value("type", "") == "text") text += part.value("text", "");
        }
        return text;
    }
    throw Error(ErrorCode::ProviderUnavailable, "response message has no text content");
}

std::string HttpProvider::complete(const CaptionRequest& request) {
    std::string image_bytes;
    std::string mime = "image/png";
    if (request.image) {
        auto bytes = read_file(*request.image);
        if (!bytes) throw Error(ErrorCode::ImageUnresolvable, "cannot read " + request.image->string());
        image_bytes = std::move(*bytes);
        mime = mime_for(*request.image);
    }
    const std::string body = request_body(request.prompt, image_bytes, mime);

    limiter_.acquire();
    httplib::Client client(scheme_host_port_);
    const auto timeout = std::chrono::duration_cast<std::chrono::microseconds>(
        std::chrono::duration<double>(config_.timeout_seconds));
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);
    httplib::Headers headers;
    if (api_key_) headers.emplace("Authorization", "Bearer " + *api_key_);

    auto res = client.Post(path_, headers, body, "application/json");
    if (!res) {
        throw TransientProviderError("request to " + config_.endpoint + " failed: " + httplib::to_string(res.error()));
    }
    const int status = res->status;
    if (status == 408 || status == 429 || status >= 500) {
        throw TransientProviderError("HTTP " + std::to_string(status) + " from " + config_.endpoint);
    }
    if (status != 200) {
        throw Error(ErrorCode::ProviderUnavailable, "HTTP " + std::to_string(status) + " from " + config_.endpoint +
                                                        ": " + res->body.substr(0, 200));
    }
    return reply_text(res->body);
}

}  // namespace mcre
