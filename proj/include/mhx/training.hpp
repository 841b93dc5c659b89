#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mhx/corpus.hpp"
#include "mhx/evaluation.hpp"
#include "mhx/model.hpp"
#include "mhx/pipeline.hpp"
#include "mhx/prompting.hpp"

namespace mhx {

enum class TrainMode { single_task, multi_task, direct };

TrainMode parse_train_mode(const std::string& name);  ///< "pbl" | "mtpbl" | "direct"
std::string train_mode_name(TrainMode mode);

struct TrainConfig {
    // Tuned for the unit-norm bag-of-tokens features: logits move by
    // lr * step along a unit feature direction, so the rate is large by
    // SGD-on-raw-counts standards.
    double learning_rate = 200.0;
    std::size_t batch_size = 50;
    std::size_t epochs = 8000;
    std::uint64_t seed = 0;
    TrainMode mode = TrainMode::multi_task;
    std::optional<TaskId> task;  ///< required for single_task and direct
    /// Seed for the per-step task visit order in multi-task training; when
    /// unset it derives from `seed`. Kept separate so the full-batch
    /// order-invariance property can be exercised directly.
    std::optional<std::uint64_t> task_order_seed;

    void validate() const;
};

/// One multi-task optimization step: per-task batch losses, their mean, and
/// the task visit order used.
struct TrainStepReport {
    std::size_t step = 0;
    std::map<TaskId, double> task_loss;
    double total_loss = 0.0;
    std::vector<TaskId> task_order;
};

struct SingleTaskResult {
    std::vector<double> epoch_loss;  ///< mean batch loss per epoch
};

struct MultiTaskResult {
    std::vector<TrainStepReport> steps;
    std::size_t steps_per_epoch = 0;
};

/// Mini-batch SGD on one task's instances; reshuffles per epoch by seed.
SingleTaskResult train_single_task(MaskFillModel& model, const std::vector<PromptInstance>& data,
                                   const std::vector<TaskSpec>& specs, const TrainConfig& cfg);

/// One shared model over all tasks. Per step, one mini-batch is drawn from
/// every task's cycling loader and visited in a freshly shuffled order; the
/// per-task mean NLLs are averaged and a single parameter update is applied,
/// so the final weights do not depend on the visit order under full batches.
/// Steps per epoch follow the largest task: ceil(max size / batch size).
MultiTaskResult train_multi_task(MaskFillModel& model,
                                 const std::map<TaskId, std::vector<PromptInstance>>& data,
                                 const std::vector<TaskSpec>& specs, const TrainConfig& cfg);

/// The supervised-classifier baseline: same bag-of-tokens features over the
/// note text alone (no template trigger), logits directly over the task's
/// labels, softmax cross-entropy.
class DirectClassifier {
public:
    DirectClassifier(TaskId task, Vocabulary vocab);

    TaskId task() const { return task_; }
    const Vocabulary& vocabulary() const { return vocab_; }
    const std::vector<std::string>& labels() const { return labels_; }
    Matrix& weights() { return weights_; }
    const Matrix& weights() const { return weights_; }
    std::size_t feature_dim() const { return vocab_.size() + 1; }

    std::vector<double> label_logits(const std::vector<std::string>& tokens) const;
    std::pair<std::string, LabelDistribution> predict_text(const std::string& text) const;

private:
    TaskId task_;
    Vocabulary vocab_;
    std::vector<std::string> labels_;
    Matrix weights_;  ///< [labels x (V+1)]
};

struct DirectExample {
    std::string note_id;
    std::vector<std::string> tokens;
    std::string gold;
};

DirectExample make_direct_example(const ClinicalNote& note, const std::string& input_text, TaskId task);
SingleTaskResult train_direct(DirectClassifier& clf, const std::vector<DirectExample>& data,
                              const TrainConfig& cfg);

void save_direct(const std::filesystem::path& path, const DirectClassifier& clf);
DirectClassifier load_direct(const std::filesystem::path& path);

/// Seeded shuffle plus round-robin assignment; folds are disjoint, cover the
/// input, and differ in size by at most one.
struct FoldPlan {
    std::vector<std::vector<std::string>> folds;  ///< note ids per fold
};

FoldPlan kfold_split(const std::vector<ClinicalNote>& notes, std::size_t k, std::uint64_t seed);

struct CvConfig {
    TrainConfig train;
    std::size_t folds = 3;
    InputMode input_mode = InputMode::retrieval;
    RetrievalConfig retrieval;
};

struct CvResult {
    std::vector<EvalReport> fold_reports;
    std::map<TaskId, double> mean_macro_f1;
    double overall_mean = 0.0;
    /// Model retrained on the full note set after cross-validation.
    std::optional<MaskFillModel> final_model;
    std::optional<DirectClassifier> final_direct;
};

/// Per fold: preprocess, build instances, train, evaluate on the held-out
/// fold; then retrain on everything. Fold seeds derive as seed + fold index.
CvResult run_cv(const std::vector<ClinicalNote>& notes, const CvConfig& cfg,
                const std::vector<TaskSpec>& specs, EmbeddingProvider& provider);

/// Predictions for a set of notes under a trained mask-fill scorer.
std::vector<NotePrediction> predict_notes(const MaskFillScorer& scorer,
                                          const std::vector<ClinicalNote>& notes,
                                          const std::vector<std::string>& input_texts,
                                          const std::vector<TaskSpec>& specs);

} // namespace mhx
