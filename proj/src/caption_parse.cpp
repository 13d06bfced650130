#include <algorithm>
#include <optional>

#include <json.hpp>

#include "mcre/caption.hpp"
#include "mcre/error.hpp"

namespace mcre {

using nlohmann::json;

namespace {

struct FoundObject {
    std::size_t begin = 0;
    std::size_t end = 0;  // one past the closing brace
    json value;
};

// Index one past the brace matching raw[open], or npos if unbalanced.
std::size_t match_brace(std::string_view raw, std::size_t open) {
    int depth = 0;
    bool in_string = false;
    bool escaped = false;
    for (std::size_t i = open; i < raw.size(); ++i) {
        const char c = raw[i];
        if (in_string) {
            if (escaped) {
                escaped = false;
            } else if (c == '\\') {
                escaped = true;
            } else if (c == '"') {
                in_string = false;
            }
            continue;
        }
        if (c == '"') {
            in_string = true;
        } else if (c == '{') {
            ++depth;
        } else if (c == '}') {
            if (--depth == 0) return i + 1;
        }
    }
    return std::string_view::npos;
}

// Bounds the quadratic worst case on brace-heavy garbage.
constexpr std::size_t kMaxOpenBraces = 4096;
constexpr int kMaxDepth = 64;

std::vector<FoundObject> find_objects(std::string_view raw) {
    std::vector<FoundObject> found;
    std::size_t attempts = 0;
    std::size_t pos = raw.find('{');
    while (pos != std::string_view::npos && attempts++ < kMaxOpenBraces) {
        const std::size_t end = match_brace(raw, pos);
        if (end != std::string_view::npos) {
            json value = json::parse(raw.substr(pos, end - pos), nullptr, /*allow_exceptions=*/false);
            if (value.is_object()) {
                found.push_back({pos, end, std::move(value)});
                pos = raw.find('{', end);
                continue;
            }
        }
        pos = raw.find('{', pos + 1);
    }
    return found;
}

bool has_caption_key(const json& obj) {
    return obj.contains(std::string(kModiKey)) || obj.contains(std::string(kIntegKey));
}

// Depth-first search for the first object carrying either caption key.
const json* find_caption_object(const json& value, int depth = 0) {
    if (value.is_object() && has_caption_key(value)) return &value;
    if (value.is_structured() && depth < kMaxDepth) {
        for (const auto& child : value) {
            if (const json* hit = find_caption_object(child, depth + 1)) return hit;
        }
    }
    return nullptr;
}

std::string_view trim(std::string_view s) {
    const auto ws = " \t\r\n";
    const auto b = s.find_first_not_of(ws);
    if (b == std::string_view::npos) return {};
    return s.substr(b, s.find_last_not_of(ws) - b + 1);
}

bool blank(std::string_view s) { return trim(s).empty(); }

std::string reasoning_before(std::string_view raw, std::size_t object_begin) {
    std::string_view head = trim(raw.substr(0, object_begin));
    // Drop a code-fence opener that directly precedes the object.
    if (auto fence = head.rfind("```"); fence != std::string_view::npos) {
        std::string_view tail = head.substr(fence + 3);
        if (tail.find('\n') == std::string_view::npos) head = trim(head.substr(0, fence));
    }
    return std::string(head);
}

std::string caption_value(const json& obj, std::string_view key) {
    const auto& v = obj.at(std::string(key));
    if (!v.is_string()) {
        throw ParseFailure(ParseFailureKind::MissingKey, "'" + std::string(key) + "' is not a string");
    }
    return std::string(trim(v.get_ref<const std::string&>()));
}

}  // namespace

CaptionFields parse_response(std::string_view raw) {
    if (blank(raw)) throw ParseFailure(ParseFailureKind::NoObjectFound, "empty response");

    const auto objects = find_objects(raw);
    if (objects.empty()) throw ParseFailure(ParseFailureKind::NoObjectFound, "no JSON object in response");

    // The final answer comes last; prefer the last object that mentions a key.
    const FoundObject* chosen = nullptr;
    const json* caption_obj = nullptr;
    for (auto it = objects.rbegin(); it != objects.rend(); ++it) {
        if (const json* hit = find_caption_object(it->value)) {
            chosen = &*it;
            caption_obj = hit;
            break;
        }
    }
    if (caption_obj == nullptr) {
        throw ParseFailure(ParseFailureKind::MissingKey, "no object carries 'modification_focused' or "
                                                         "'integration_focused'");
    }

    std::optional<std::string> modi;
    std::optional<std::string> integ;
    for (auto [key, slot] : {std::pair{kModiKey, &modi}, std::pair{kIntegKey, &integ}}) {
        if (caption_obj->contains(std::string(key))) {
            *slot = caption_value(*caption_obj, key);
            if ((*slot)->empty()) {
                throw ParseFailure(ParseFailureKind::EmptyCaption, "'" + std::string(key) + "' is empty");
            }
        }
    }
    if (!modi) throw ParseFailure(ParseFailureKind::MissingKey, "missing 'modification_focused'");
    if (!integ) throw ParseFailure(ParseFailureKind::MissingKey, "missing 'integration_focused'");

    return CaptionFields{std::move(*modi), std::move(*integ), reasoning_before(raw, chosen->begin)};
}

}  // namespace mcre
