#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mhx/corpus.hpp"
#include "mhx/tasks.hpp"

namespace mhx {

/// Rows are gold labels, columns predictions, both in the task's label order.
struct ConfusionMatrix {
    TaskId task;
    std::vector<std::string> labels;
    std::vector<std::size_t> counts;  ///< row-major [labels x labels]

    ConfusionMatrix() : task(TaskId::dysmenorrhea) {}
    ConfusionMatrix(TaskId t, std::vector<std::string> l)
        : task(t), labels(std::move(l)), counts(labels.size() * labels.size(), 0) {}
    std::size_t& at(std::size_t gold, std::size_t pred) { return counts[gold * labels.size() + pred]; }
    std::size_t at(std::size_t gold, std::size_t pred) const { return counts[gold * labels.size() + pred]; }
    std::size_t total() const;
};

struct LabelScore {
    std::string label;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::size_t support = 0;  ///< gold occurrences
};

struct TaskEval {
    ConfusionMatrix confusion;
    std::vector<LabelScore> per_label;
    double macro_f1 = 0.0;
    bool has_support = false;   ///< any gold example for this task
    std::size_t evaluated = 0;  ///< notes with gold for this task
};

struct EvalReport {
    std::map<TaskId, TaskEval> tasks;
    double overall_macro_f1 = 0.0;  ///< mean over tasks with support
    std::size_t tasks_with_support = 0;
};

/// Macro-averaged F1 over labels with gold support; zero-denominator
/// precision/recall count as 0, unsupported labels are excluded.
double macro_f1(const std::vector<std::string>& gold, const std::vector<std::string>& pred,
                const std::vector<std::string>& labels);

TaskEval evaluate_task(TaskId task, const std::vector<std::string>& gold,
                       const std::vector<std::string>& pred);

/// Per-note predictions, as serialized in predictions.jsonl.
struct NotePrediction {
    std::string id;
    std::map<TaskId, std::string> predictions;
    std::map<TaskId, std::map<std::string, double>> probabilities;
};

std::vector<NotePrediction> load_predictions(const std::filesystem::path& path);
void write_predictions(const std::filesystem::path& path, const std::vector<NotePrediction>& preds);

/// Joins predictions with gold notes. Notes lacking gold for a task are
/// skipped for that task only; a predicted id absent from gold is an error.
EvalReport build_report(const std::vector<ClinicalNote>& gold,
                        const std::vector<NotePrediction>& predictions);

EvalReport evaluate_files(const std::filesystem::path& predictions_path,
                          const std::filesystem::path& gold_path);

nlohmann::json report_to_json(const EvalReport& report);
EvalReport report_from_json(const nlohmann::json& j);

/// Per-task and overall deltas, b - a.
struct RunDelta {
    std::map<TaskId, double> task_delta;
    double overall_delta = 0.0;
};

/// Requires the two reports to cover the same task set.
RunDelta compare_runs(const EvalReport& a, const EvalReport& b);

std::string format_signed(double value, int decimals = 3);  ///< "+0.260", "-0.057", "+0.000"
std::string render_report_table(const EvalReport& report);
std::string render_delta_table(const EvalReport& a, const EvalReport& b);

} // namespace mhx
