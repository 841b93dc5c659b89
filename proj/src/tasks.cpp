#include "mhx/tasks.hpp"

#include <algorithm>
#include <cctype>

namespace mhx {

namespace {

const std::array<std::string_view, kTaskCount> kNames = {
    "dysmenorrhea",
    "dysmenorrhea_severity",
    "regularity",
    "flow",
    "intermenstrual_bleeding",
};

const std::array<std::string_view, kTaskCount> kDisplayNames = {
    "dysmenorrhea",
    "dysmenorrhea severity",
    "regularity",
    "flow",
    "intermenstrual bleeding",
};

const std::array<std::vector<std::string>, kTaskCount> kLabels = {{
    {"yes", "no", "unknown"},
    {"mild", "moderate", "severe", "unknown"},
    {"regular", "irregular", "unknown"},
    {"scanty", "normal", "abundant", "unknown"},
    {"yes", "no", "unknown"},
}};

std::string ascii_lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

} // namespace

std::string_view task_name(TaskId t) { return kNames[task_index(t)]; }

std::string_view task_display_name(TaskId t) { return kDisplayNames[task_index(t)]; }

std::optional<TaskId> parse_task(std::string_view name) {
    const std::string lowered = ascii_lower(name);
    for (TaskId t : kAllTasks) {
        if (lowered == kNames[task_index(t)] || lowered == kDisplayNames[task_index(t)]) {
            return t;
        }
    }
    return std::nullopt;
}

const std::vector<std::string>& task_labels(TaskId t) { return kLabels[task_index(t)]; }

bool is_valid_label(TaskId t, std::string_view label) {
    const auto& labels = task_labels(t);
    return std::find(labels.begin(), labels.end(), label) != labels.end();
}

} // namespace mhx
