#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "mhx/tasks.hpp"

namespace mhx {

/// One task's labels, prompt template trigger, and verbalizer word lists.
/// Label words must be single tokens; within a task a word may appear in at
/// most one label's list.
struct TaskSpec {
    TaskId task;
    std::vector<std::string> labels;          ///< classification + tie-break order
    std::string template_trigger;             ///< e.g. "period pattern: [MASK]"
    std::vector<std::pair<std::string, std::vector<std::string>>> verbalizer;  ///< label -> words
    const std::vector<std::string>& words_for(std::string_view label) const;
};

/// The built-in five-task configuration.
const std::vector<TaskSpec>& default_task_specs();

std::vector<TaskSpec> task_specs_from_json(const nlohmann::json& j);
nlohmann::json task_specs_to_json(const std::vector<TaskSpec>& specs);
std::vector<TaskSpec> load_task_specs(const std::filesystem::path& path);
void save_task_specs(const std::filesystem::path& path, const std::vector<TaskSpec>& specs);
void validate_task_specs(const std::vector<TaskSpec>& specs);
const TaskSpec& spec_for(const std::vector<TaskSpec>& specs, TaskId task);

/// Canonical serialization of specs; the 64-bit FNV-1a of this string pins
/// the shipped configuration in tests.
std::string task_specs_canonical(const std::vector<TaskSpec>& specs);
std::uint64_t task_specs_checksum(const std::vector<TaskSpec>& specs);

/// Dense token-to-index map. Index 0 is [MASK], index 1 is [OOV]; lookups of
/// unseen tokens land on [OOV].
class Vocabulary {
public:
    Vocabulary();
    explicit Vocabulary(std::vector<std::string> tokens);  ///< e.g. from a checkpoint

    /// Reserved tokens, then the specs' trigger tokens and label words, then
    /// corpus tokens in first-occurrence order.
    static Vocabulary build(const std::vector<std::string>& texts, const std::vector<TaskSpec>& specs);

    std::size_t size() const { return tokens_.size(); }
    std::size_t lookup(std::string_view token) const;
    bool contains(std::string_view token) const;
    const std::string& token(std::size_t index) const { return tokens_.at(index); }
    const std::vector<std::string>& tokens() const { return tokens_; }
    std::size_t mask_index() const { return 0; }
    std::size_t oov_index() const { return 1; }

private:
    void add(const std::string& token);
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, std::size_t> index_;
};

/// A note turned into one task's mask-fill instance: input tokens followed by
/// the template trigger tokens, with exactly one [MASK].
struct PromptInstance {
    std::string note_id;
    TaskId task;
    std::vector<std::string> tokens;
    std::size_t mask_position = 0;
    std::optional<std::string> gold;
};

PromptInstance build_prompt(std::string note_id, std::string_view input_text, const TaskSpec& spec,
                            std::optional<std::string> gold = std::nullopt);

} // namespace mhx
