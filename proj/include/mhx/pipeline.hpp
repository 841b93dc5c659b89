#pragma once

#include <map>
#include <string>
#include <vector>

#include "mhx/corpus.hpp"
#include "mhx/embedding.hpp"
#include "mhx/prompting.hpp"
#include "mhx/retrieval.hpp"

namespace mhx {

/// How note text reaches the scorer: hybrid retrieval, the raw note, or the
/// first-512-token truncation baseline.
enum class InputMode { retrieval, full, truncate };

InputMode parse_input_mode(const std::string& name);  ///< "on" | "off" | "truncate"
std::string input_mode_name(InputMode mode);

inline constexpr std::size_t kTruncationTokenLimit = 512;

/// First `kTruncationTokenLimit` pipeline tokens of the normalized note,
/// space-joined.
std::string truncate_text(const std::string& text);

/// The model-facing input text for one note under the given mode.
std::string preprocess_text(const ClinicalNote& note, InputMode mode, const RetrievalConfig& cfg,
                            EmbeddingProvider& provider);

/// Labeled prompt instances per task; notes without gold for a task are
/// omitted from that task's list.
std::map<TaskId, std::vector<PromptInstance>> build_task_instances(
    const std::vector<ClinicalNote>& notes, const std::vector<std::string>& input_texts,
    const std::vector<TaskSpec>& specs);

} // namespace mhx
