#pragma once

#include <map>
#include <mutex>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

namespace mcre {

/// Reference image plus the requested modification.
struct ComposedQuery {
    std::string query_id;
    /// Path or opaque handle of the reference image.
    std::string reference_image;
    std::string modification_text;
};

/// The four reasoning steps, in the order the model must follow them.
enum class ReasoningStep { UnderstandReference, InterpretModification, ReasonVisualChanges, AnticipateTarget };

inline constexpr std::size_t kReasoningSteps = 4;

/// Source parts of a prompt. `query_section` must contain the placeholder
/// `{modification_text}` exactly once.
struct PromptTemplate {
    static constexpr std::string_view kPlaceholder = "{modification_text}";

    std::string id;
    std::string system_preamble;
    std::string query_section;
    std::vector<std::string> step_instructions;
    std::string output_format_instruction;
};

struct McotPrompt {
    std::string template_id;
    std::string system_preamble;
    std::vector<std::string> step_instructions;
    std::string output_format_instruction;
    std::string rendered;
    /// Lowercase hex SHA-256 of `rendered`.
    std::string prompt_hash;
};

/// Lowercase hex SHA-256 digest.
[[nodiscard]] std::string sha256_hex(std::string_view data);

/// Thread-safe template registry. Templates are checked when registered:
/// four non-empty steps, the placeholder exactly once, and an output
/// instruction naming both caption keys.
class TemplateRegistry {
public:
    static constexpr std::string_view kDefaultTemplate = "mcot-v1";

    /// Registry pre-populated with the built-in templates.
    TemplateRegistry();

    void add(PromptTemplate tmpl);
    [[nodiscard]] bool contains(std::string_view id) const;
    [[nodiscard]] PromptTemplate get(std::string_view id) const;
    [[nodiscard]] std::vector<std::string> ids() const;

private:
    mutable std::shared_mutex mutex_;
    std::map<std::string, PromptTemplate, std::less<>> templates_;
};

/// Throws InvalidTemplate describing the first violated rule.
void validate_template(const PromptTemplate& tmpl);

[[nodiscard]] McotPrompt build_prompt(const ComposedQuery& query, std::string_view template_id,
                                      const TemplateRegistry& registry);

/// Appended to the prompt for the single retry after an unparseable reply.
[[nodiscard]] std::string reprompt_text(const McotPrompt& prompt);

inline constexpr std::string_view kModiKey = "modification_focused";
inline constexpr std::string_view kIntegKey = "integration_focused";

struct CaptionFields {
    std::string c_modi;
    std::string c_integ;
    std::string reasoning_trace;
};

/// Extracts the two-caption object from a model reply, tolerating prose and
/// code fences around it. Throws ParseFailure; never anything else.
[[nodiscard]] CaptionFields parse_response(std::string_view raw);

struct CaptionPair {
    std::string c_modi;
    std::string c_integ;
    std::string reasoning_trace;
    std::string provider_id;
    std::string prompt_hash;

    bool operator==(const CaptionPair&) const = default;
};

}  // namespace mcre
