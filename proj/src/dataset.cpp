#include "mcre/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <iterator>

#include <json.hpp>

#include "mcre/error.hpp"

namespace mcre {

using nlohmann::json;

std::string join_captions(std::span<const std::string> captions) {
    std::string out;
    for (std::size_t i = 0; i < captions.size(); ++i) {
        if (i) out += kCaptionSeparator;
        out += captions[i];
    }
    return out;
}

namespace {

bool blank(std::string_view s) {
    return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c) != 0; });
}

json parse_annotation_file(const std::filesystem::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot open annotation file " + file.string());
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    try {
        json doc = json::parse(text);
        if (!doc.is_array()) {
            throw Error(ErrorCode::MalformedAnnotation, file.string() + ": top level must be an array");
        }
        return doc;
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::MalformedAnnotation,
                    file.string() + " at byte " + std::to_string(e.byte) + ": " + e.what());
    }
}

std::string where(const std::filesystem::path& file, std::size_t index) {
    return file.string() + " entry " + std::to_string(index);
}

const json& require(const json& entry, const char* key, const std::filesystem::path& file, std::size_t index) {
    if (!entry.is_object()) throw Error(ErrorCode::MalformedAnnotation, where(file, index) + ": not an object");
    auto it = entry.find(key);
    if (it == entry.end() || it->is_null()) {
        throw Error(ErrorCode::MissingField, where(file, index) + ": missing field '" + key + "'");
    }
    return *it;
}

std::string require_id(const json& entry, const char* key, const std::filesystem::path& file, std::size_t index) {
    const json& v = require(entry, key, file, index);
    std::string id;
    if (v.is_string()) {
        id = v.get<std::string>();
    } else if (v.is_number_integer()) {
        id = std::to_string(v.get<long long>());
    } else {
        throw Error(ErrorCode::MalformedAnnotation, where(file, index) + ": field '" + key + "' is not an id");
    }
    if (id.empty()) throw Error(ErrorCode::MalformedAnnotation, where(file, index) + ": field '" + key + "' is empty");
    return id;
}

std::string require_text(const json& entry, const char* key, const std::filesystem::path& file, std::size_t index) {
    const json& v = require(entry, key, file, index);
    if (!v.is_string() || blank(v.get_ref<const std::string&>())) {
        throw Error(ErrorCode::MalformedAnnotation, where(file, index) + ": field '" + key + "' must be non-empty text");
    }
    return v.get<std::string>();
}

}  // namespace

std::vector<EvalRecord> load_fashioniq(const std::filesystem::path& captions_file, const std::string& category) {
    const json doc = parse_annotation_file(captions_file);
    std::vector<EvalRecord> out;
    out.reserve(doc.size());
    for (std::size_t i = 0; i < doc.size(); ++i) {
        const json& entry = doc[i];
        EvalRecord r;
        r.query_id = category + "-" + std::to_string(i);
        r.reference_id = require_id(entry, "candidate", captions_file, i);
        const std::string target = require_id(entry, "target", captions_file, i);
        const json& caps = require(entry, "captions", captions_file, i);
        if (!caps.is_array() || caps.empty()) {
            throw Error(ErrorCode::MalformedAnnotation, where(captions_file, i) + ": captions must be a non-empty array");
        }
        std::vector<std::string> texts;
        for (const auto& c : caps) {
            if (!c.is_string() || blank(c.get_ref<const std::string&>())) {
                throw Error(ErrorCode::MalformedAnnotation, where(captions_file, i) + ": caption is not non-empty text");
            }
            texts.push_back(c.get<std::string>());
        }
        r.modification_text = join_captions(texts);
        if (target == r.reference_id) {
            throw Error(ErrorCode::MalformedAnnotation, where(captions_file, i) + ": target equals reference");
        }
        r.target_ids = {target};
        r.category = category;
        out.push_back(std::move(r));
    }
    return out;
}

std::vector<EvalRecord> load_cirr(const std::filesystem::path& split_file, CirrLoadOptions options) {
    const json doc = parse_annotation_file(split_file);
    std::vector<EvalRecord> out;
    out.reserve(doc.size());
    for (std::size_t i = 0; i < doc.size(); ++i) {
        const json& entry = doc[i];
        EvalRecord r;
        r.query_id = require_id(entry, "pairid", split_file, i);
        r.reference_id = require_id(entry, "reference", split_file, i);
        r.modification_text = require_text(entry, "caption", split_file, i);

        std::optional<std::string> target;
        for (const char* key : {"target_hard", "target"}) {
            if (entry.contains(key) && !entry[key].is_null()) {
                target = require_id(entry, key, split_file, i);
                break;
            }
        }
        if (!target && options.require_targets) {
            throw Error(ErrorCode::MissingField, where(split_file, i) + ": missing field 'target_hard'");
        }

        const json& img_set = require(entry, "img_set", split_file, i);
        const json& members = require(img_set, "members", split_file, i);
        if (!members.is_array()) {
            throw Error(ErrorCode::MalformedAnnotation, where(split_file, i) + ": img_set.members must be an array");
        }
        std::vector<std::string> subset;
        for (const auto& m : members) {
            if (!m.is_string() || m.get_ref<const std::string&>().empty()) {
                throw Error(ErrorCode::MalformedAnnotation, where(split_file, i) + ": img_set member is not an id");
            }
            const auto& id = m.get_ref<const std::string&>();
            if (id != r.reference_id && std::find(subset.begin(), subset.end(), id) == subset.end()) {
                subset.push_back(id);
            }
        }

        if (target) {
            if (*target == r.reference_id) {
                throw Error(ErrorCode::MalformedAnnotation, where(split_file, i) + ": target equals reference");
            }
            if (std::find(subset.begin(), subset.end(), *target) == subset.end()) {
                throw Error(ErrorCode::MalformedAnnotation,
                            where(split_file, i) + ": target '" + *target + "' is not in img_set");
            }
            r.target_ids = {*target};
        }
        r.subset_ids = std::move(subset);
        out.push_back(std::move(r));
    }
    std::vector<std::string_view> ids;
    for (const auto& r : out) ids.push_back(r.query_id);
    std::sort(ids.begin(), ids.end());
    if (auto dup = std::adjacent_find(ids.begin(), ids.end()); dup != ids.end()) {
        throw Error(ErrorCode::MalformedAnnotation, split_file.string() + ": duplicate pairid " + std::string(*dup));
    }
    return out;
}

}  // namespace mcre
