#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mhx {

/// The five menstrual attributes extracted from a clinical note. The task set
/// and each task's label set are fixed; configs may only customize templates
/// and verbalizer word lists for these tasks.
enum class TaskId {
    dysmenorrhea = 0,
    dysmenorrhea_severity = 1,
    regularity = 2,
    flow = 3,
    intermenstrual_bleeding = 4,
};

inline constexpr std::array<TaskId, 5> kAllTasks = {
    TaskId::dysmenorrhea,
    TaskId::dysmenorrhea_severity,
    TaskId::regularity,
    TaskId::flow,
    TaskId::intermenstrual_bleeding,
};

inline constexpr std::size_t kTaskCount = kAllTasks.size();

inline constexpr std::size_t task_index(TaskId t) { return static_cast<std::size_t>(t); }

/// Canonical machine name, e.g. "dysmenorrhea_severity".
std::string_view task_name(TaskId t);

/// Human-facing name, e.g. "dysmenorrhea severity".
std::string_view task_display_name(TaskId t);

/// Accepts both the canonical and display spellings, case-insensitively.
std::optional<TaskId> parse_task(std::string_view name);

/// Fixed label set for a task, in canonical (tie-break) order.
const std::vector<std::string>& task_labels(TaskId t);

bool is_valid_label(TaskId t, std::string_view label);

} // namespace mhx
