#include <algorithm>
#include <cctype>
#include <array>
#include <cstdio>

#include <openssl/evp.h>

#include "mcre/caption.hpp"
#include "mcre/error.hpp"

namespace mcre {

std::string sha256_hex(std::string_view data) {
    std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1) {
        throw Error(ErrorCode::Io, "SHA-256 digest failed");
    }
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(kHex[digest[i] >> 4]);
        out.push_back(kHex[digest[i] & 0x0F]);
    }
    return out;
}

namespace {

std::size_t count_occurrences(std::string_view haystack, std::string_view needle) {
    std::size_t n = 0;
    for (auto pos = haystack.find(needle); pos != std::string_view::npos; pos = haystack.find(needle, pos + 1)) ++n;
    return n;
}

bool blank(std::string_view s) {
    return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c) != 0; });
}

PromptTemplate builtin_mcot_v1() {
    PromptTemplate t;
    t.id = std::string(TemplateRegistry::kDefaultTemplate);
    t.system_preamble =
        "You are given a reference image and a short instruction describing how a target image differs from it. "
        "Work through the four steps below in order, writing a few sentences for each of the first three, and "
        "then produce two descriptions of the target image.";
    t.query_section = "Instruction: \"{modification_text}\"";
    t.step_instructions = {
        "Step 1 - Reference image. List what the reference image shows: the main objects and their attributes, "
        "the background, the layout, and the overall style. Ignore the instruction for now.",
        "Step 2 - Instruction. Work out which elements of the image the instruction targets and in what direction "
        "each one should change.",
        "Step 3 - Visual consequences. Decide how those changes affect the rest of the scene, which side effects "
        "they imply, and which elements must stay as they are.",
        "Step 4 - Target image. Combine the previous steps and describe the target image twice: once covering only "
        "the requested changes, and once covering the changes together with the preserved context of the "
        "reference image (background, style, mood).",
    };
    t.output_format_instruction =
        "End your reply with a single JSON object and nothing after it, of the form "
        "{\"modification_focused\": \"<one sentence describing only the requested changes>\", "
        "\"integration_focused\": \"<one sentence describing the changes within the preserved visual context>\"}. "
        "Both values must be non-empty plain strings.";
    return t;
}

}  // namespace

void validate_template(const PromptTemplate& tmpl) {
    auto fail = [&](const std::string& why) {
        throw Error(ErrorCode::InvalidTemplate, "template '" + tmpl.id + "': " + why);
    };
    if (tmpl.id.empty()) fail("empty template id");
    if (tmpl.step_instructions.size() != kReasoningSteps) {
        fail("expected " + std::to_string(kReasoningSteps) + " reasoning steps, found " +
             std::to_string(tmpl.step_instructions.size()));
    }
    for (std::size_t i = 0; i < tmpl.step_instructions.size(); ++i) {
        if (blank(tmpl.step_instructions[i])) fail("step " + std::to_string(i + 1) + " is empty");
    }
    if (count_occurrences(tmpl.query_section, PromptTemplate::kPlaceholder) != 1) {
        fail("query section must contain {modification_text} exactly once");
    }
    for (const auto& part : {tmpl.system_preamble, tmpl.output_format_instruction}) {
        if (part.find(PromptTemplate::kPlaceholder) != std::string::npos) {
            fail("{modification_text} may only appear in the query section");
        }
    }
    for (const auto& step : tmpl.step_instructions) {
        if (step.find(PromptTemplate::kPlaceholder) != std::string::npos) {
            fail("{modification_text} may only appear in the query section");
        }
    }
    if (tmpl.output_format_instruction.find(kModiKey) == std::string::npos ||
        tmpl.output_format_instruction.find(kIntegKey) == std::string::npos) {
        fail("output instruction must name both caption keys");
    }
}

TemplateRegistry::TemplateRegistry() { add(builtin_mcot_v1()); }

void TemplateRegistry::add(PromptTemplate tmpl) {
    validate_template(tmpl);
    std::unique_lock lock(mutex_);
    auto id = tmpl.id;
    templates_.insert_or_assign(std::move(id), std::move(tmpl));
}

bool TemplateRegistry::contains(std::string_view id) const {
    std::shared_lock lock(mutex_);
    return templates_.find(id) != templates_.end();
}

PromptTemplate TemplateRegistry::get(std::string_view id) const {
    std::shared_lock lock(mutex_);
    auto it = templates_.find(id);
    if (it == templates_.end()) throw Error(ErrorCode::UnknownTemplate, "no template named '" + std::string(id) + "'");
    return it->second;
}

std::vector<std::string> TemplateRegistry::ids() const {
    std::shared_lock lock(mutex_);
    std::vector<std::string> out;
    for (const auto& [id, _] : templates_) out.push_back(id);
    return out;
}

McotPrompt build_prompt(const ComposedQuery& query, std::string_view template_id, const TemplateRegistry& registry) {
    if (blank(query.modification_text)) {
        throw Error(ErrorCode::InvalidArgument, "query '" + query.query_id + "' has empty modification text");
    }
    const PromptTemplate t = registry.get(template_id);

    std::string slot = t.query_section;
    slot.replace(slot.find(PromptTemplate::kPlaceholder), PromptTemplate::kPlaceholder.size(),
                 query.modification_text);

    McotPrompt p;
    p.template_id = t.id;
    p.system_preamble = t.system_preamble;
    p.step_instructions = t.step_instructions;
    p.output_format_instruction = t.output_format_instruction;

    std::string& r = p.rendered;
    r += t.system_preamble;
    r += "\n\n";
    r += slot;
    r += "\n\n";
    for (const auto& step : t.step_instructions) {
        r += step;
        r += "\n";
    }
    r += "\n";
    r += t.output_format_instruction;
    r += "\n";
    p.prompt_hash = sha256_hex(p.rendered);
    return p;
}

std::string reprompt_text(const McotPrompt& prompt) {
    return prompt.rendered +
           "\nYour previous reply could not be read. Reply again and finish with exactly one JSON object "
           "with the keys \"modification_focused\" and \"integration_focused\", each a non-empty string, "
           "with no text after the object.\n";
}

}  // namespace mcre
