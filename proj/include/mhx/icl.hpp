#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "mhx/tasks.hpp"

namespace mhx {

/// A fully labeled worked example for the few-shot prompt.
struct FewShotExample {
    std::string text;
    std::map<TaskId, std::string> labels;  ///< must cover all five tasks
};

/// Three synthetic worked examples shipped as defaults (the clinical ones
/// are not distributable).
const std::vector<FewShotExample>& default_fewshot_examples();

/// Reads examples from a notes.jsonl file; every example must carry all five
/// labels.
std::vector<FewShotExample> load_fewshot_examples(const std::filesystem::path& path);

inline constexpr std::string_view kDefaultIclPreamble =
    "You are extracting menstrual health attributes from a clinical note. For each note, report "
    "dysmenorrhea (yes/no/unknown), dysmenorrhea severity (mild/moderate/severe/unknown), "
    "regularity (regular/irregular/unknown), flow (scanty/normal/abundant/unknown), and "
    "intermenstrual bleeding (yes/no/unknown).";

/// Deterministic rendering: preamble, the worked examples in order, the
/// answer-format instruction, then the query note.
std::string build_fewshot_prompt(const std::vector<FewShotExample>& examples,
                                 std::string_view query_text,
                                 std::string_view preamble = kDefaultIclPreamble);

/// Structured predictions recovered from free-form model output. Every task
/// is always present; unparseable tasks fall back to "unknown" with a
/// warning.
struct ParsedPrediction {
    std::map<TaskId, std::string> labels;
    std::vector<std::string> parse_warnings;
};

/// Case-insensitive line parser for "task: label" outputs. Task names accept
/// both spellings ("dysmenorrhea severity" / "dysmenorrhea_severity");
/// labels must match the fixed label set exactly after trimming and
/// lowercasing — no synonym mapping.
ParsedPrediction parse_icl_response(std::string_view response);

/// POST /generate against a generative HTTP service:
/// {"prompt": ..., "max_tokens": ...} -> {"text": ...}.
class GenerativeClient {
public:
    explicit GenerativeClient(std::string base_url, int max_tokens = 256);
    std::string generate(const std::string& prompt) const;

private:
    std::string base_url_;
    int max_tokens_;
};

/// One round trip: send the prompt, parse the reply. Transport errors and
/// non-2xx or empty responses throw RemoteError; parse problems only warn.
ParsedPrediction icl_predict(const GenerativeClient& client, const std::string& prompt);

} // namespace mhx
