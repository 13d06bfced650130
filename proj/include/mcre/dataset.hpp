#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mcre {

/// One evaluation query in dataset-neutral form.
struct EvalRecord {
    std::string query_id;
    std::string reference_id;
    std::string modification_text;
    /// Acceptable targets. Empty only for CIRR test-split queries, whose
    /// ground truth is withheld.
    std::vector<std::string> target_ids;
    /// CIRR image-set members other than the reference.
    std::optional<std::vector<std::string>> subset_ids;
    std::optional<std::string> category;

    bool operator==(const EvalRecord&) const = default;
};

inline constexpr std::string_view kCaptionSeparator = "; ";

/// Joins per-query captions in dataset order with "; ".
[[nodiscard]] std::string join_captions(std::span<const std::string> captions);

/// Reads a FashionIQ caption file: a JSON array of
/// {"candidate": id, "target": id, "captions": [text, ...]}.
/// Query ids are synthesized as "<category>-<index>".
[[nodiscard]] std::vector<EvalRecord> load_fashioniq(const std::filesystem::path& captions_file,
                                                     const std::string& category);

struct CirrLoadOptions {
    /// When false, pairs without a target (test split) load with empty
    /// target_ids instead of raising MissingField.
    bool require_targets = true;
};

/// Reads a CIRR caption file: a JSON array of {"pairid", "reference",
/// "caption", "target_hard" (or "target"), "img_set": {"members": [...]}}.
[[nodiscard]] std::vector<EvalRecord> load_cirr(const std::filesystem::path& split_file,
                                                CirrLoadOptions options = {});

}  // namespace mcre
