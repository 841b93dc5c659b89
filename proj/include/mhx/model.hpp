#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mhx/prompting.hpp"
#include "mhx/tasks.hpp"

namespace mhx {

/// Dense row-major matrix of 64-bit reals.
class Matrix {
public:
    Matrix() : rows_(0), cols_(0) {}
    Matrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }
    double max_abs() const;

    bool operator==(const Matrix&) const = default;

private:
    std::size_t rows_, cols_;
    std::vector<double> data_;
};

/// Bag-of-tokens features of an instance: counts of each vocabulary token
/// among the non-mask tokens, plus an always-on bias at index V.
struct SparseFeatures {
    std::vector<std::pair<std::size_t, double>> entries;  ///< (feature index, count)
};

SparseFeatures featurize(const PromptInstance& instance, const Vocabulary& vocab);

/// Same features over a plain token list (used by the direct classifier,
/// which has no mask to skip).
SparseFeatures featurize_tokens(const std::vector<std::string>& tokens, const Vocabulary& vocab);

/// Anything that scores the [MASK] position over a vocabulary.
class MaskFillScorer {
public:
    virtual ~MaskFillScorer() = default;
    virtual std::vector<double> logits(const PromptInstance& instance) const = 0;
    virtual const Vocabulary& vocabulary() const = 0;
};

/// Trainable log-linear reference scorer: logits = W * phi(instance), with
/// W of shape [V x (V+1)] initialized to zeros. The template trigger tokens
/// enter the features, so one model serves all five tasks.
class MaskFillModel : public MaskFillScorer {
public:
    explicit MaskFillModel(Vocabulary vocab);

    std::vector<double> logits(const PromptInstance& instance) const override;
    std::vector<double> logits(const SparseFeatures& features) const;
    const Vocabulary& vocabulary() const override { return vocab_; }

    std::size_t feature_dim() const { return vocab_.size() + 1; }
    Matrix& weights() { return weights_; }
    const Matrix& weights() const { return weights_; }

private:
    Vocabulary vocab_;
    Matrix weights_;
};

/// Probabilities over one task's labels, in the task's label order.
struct LabelDistribution {
    TaskId task;
    std::vector<std::string> labels;
    std::vector<double> probs;
    double prob_of(std::string_view label) const;
};

std::vector<double> stable_softmax(std::span<const double> logits);

/// Vocabulary softmax, then per-label sums of word probabilities, then
/// normalization over the task's labels.
LabelDistribution verbalize(const std::vector<double>& logits, const TaskSpec& spec,
                            const Vocabulary& vocab);

/// Argmax label; ties break toward the earlier label in the task's order.
std::pair<std::string, LabelDistribution> predict(const MaskFillScorer& scorer,
                                                  const PromptInstance& instance,
                                                  const TaskSpec& spec);

/// -ln p(gold), with p clamped at 1e-12.
double nll_loss(const MaskFillScorer& scorer, const PromptInstance& instance, const TaskSpec& spec);

/// Mean NLL over the batch and its analytic gradient with respect to W.
/// Instances may mix tasks; each is resolved against `specs`.
double batch_loss_and_gradient(const MaskFillModel& model, std::span<const PromptInstance> batch,
                               const std::vector<TaskSpec>& specs, Matrix& grad_out);

/// A task's verbalizer resolved against a vocabulary once, for loops that
/// score many instances of the same task.
struct ResolvedTask {
    const TaskSpec* spec = nullptr;
    std::vector<std::vector<std::size_t>> word_indices;  ///< aligned with spec->verbalizer
    std::size_t label_index(std::string_view label) const;
};

ResolvedTask resolve_task(const TaskSpec& spec, const Vocabulary& vocab);

/// Training fast path over pre-featurized single-task instances; adds the
/// batch-mean gradient into `grad_out` (cleared first) and returns the mean
/// NLL. `batch_loss_and_gradient` is a thin wrapper over this.
double featurized_loss_and_gradient(const MaskFillModel& model, const ResolvedTask& task,
                                    std::span<const SparseFeatures* const> features,
                                    std::span<const std::size_t> gold_labels, Matrix& grad_out);

/// Gradient of the mean NLL over the batch, shape [V x (V+1)].
Matrix loss_gradient(const MaskFillModel& model, const std::vector<PromptInstance>& batch,
                     const std::vector<TaskSpec>& specs);

void save_model(const std::filesystem::path& path, const MaskFillModel& model);
MaskFillModel load_model(const std::filesystem::path& path);

} // namespace mhx
