#include "mhx/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "mhx/errors.hpp"
#include "mhx/random.hpp"
#include "mhx/tokenizer.hpp"
#include "mhx/version.hpp"

using nlohmann::json;

namespace mhx {

TrainMode parse_train_mode(const std::string& name) {
    if (name == "pbl") return TrainMode::single_task;
    if (name == "mtpbl") return TrainMode::multi_task;
    if (name == "direct") return TrainMode::direct;
    throw ValidationError("unknown training mode '" + name + "' (expected pbl, mtpbl, or direct)");
}

std::string train_mode_name(TrainMode mode) {
    switch (mode) {
        case TrainMode::single_task: return "pbl";
        case TrainMode::multi_task: return "mtpbl";
        case TrainMode::direct: return "direct";
    }
    return "mtpbl";
}

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw ValidationError("learning rate must be positive");
    if (batch_size < 1) throw ValidationError("batch size must be >= 1");
    if (epochs < 1) throw ValidationError("epochs must be >= 1");
    if ((mode == TrainMode::single_task || mode == TrainMode::direct) && !task) {
        throw ValidationError("single-task and direct modes require a task");
    }
}

namespace {

/// Infinite index stream over a dataset; reshuffles at every wrap.
class CyclingLoader {
public:
    CyclingLoader(std::size_t size, std::uint64_t seed)
        : rng_(seeded_rng(seed)), order_(size) {
        std::iota(order_.begin(), order_.end(), std::size_t{0});
        deterministic_shuffle(order_, rng_);
    }

    std::vector<std::size_t> draw(std::size_t batch_size) {
        const std::size_t want = std::min(batch_size, order_.size());
        std::vector<std::size_t> batch;
        batch.reserve(want);
        for (std::size_t i = 0; i < want; ++i) {
            if (cursor_ == order_.size()) {
                deterministic_shuffle(order_, rng_);
                cursor_ = 0;
            }
            batch.push_back(order_[cursor_++]);
        }
        return batch;
    }

private:
    std::mt19937_64 rng_;
    std::vector<std::size_t> order_;
    std::size_t cursor_ = 0;
};

void apply_update(Matrix& weights, const Matrix& grad, double lr) {
    auto& w = weights.data();
    const auto& g = grad.data();
    for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr * g[i];
}

/// Instances featurized once up front; training touches only indices.
struct FeaturizedTask {
    ResolvedTask resolved;
    std::vector<SparseFeatures> features;
    std::vector<std::size_t> gold;

    FeaturizedTask(const std::vector<PromptInstance>& data, const TaskSpec& spec,
                   const Vocabulary& vocab)
        : resolved(resolve_task(spec, vocab)) {
        features.reserve(data.size());
        gold.reserve(data.size());
        for (const auto& inst : data) {
            if (!inst.gold) {
                throw ValidationError("training requires a gold label on every instance");
            }
            features.push_back(featurize(inst, vocab));
            gold.push_back(resolved.label_index(*inst.gold));
        }
    }

    double loss_and_gradient(const MaskFillModel& model, const std::vector<std::size_t>& batch,
                             Matrix& grad_out) const {
        std::vector<const SparseFeatures*> feats;
        std::vector<std::size_t> batch_gold;
        feats.reserve(batch.size());
        batch_gold.reserve(batch.size());
        for (std::size_t i : batch) {
            feats.push_back(&features[i]);
            batch_gold.push_back(gold[i]);
        }
        return featurized_loss_and_gradient(model, resolved, feats, batch_gold, grad_out);
    }
};

} // namespace

SingleTaskResult train_single_task(MaskFillModel& model, const std::vector<PromptInstance>& data,
                                   const std::vector<TaskSpec>& specs, const TrainConfig& cfg) {
    cfg.validate();
    if (data.empty()) {
        throw ValidationError("single-task training received no instances");
    }
    const TaskId task = data.front().task;
    for (const auto& inst : data) {
        if (inst.task != task) {
            throw ValidationError("single-task training received instances from mixed tasks");
        }
    }
    SingleTaskResult result;
    const FeaturizedTask featurized(data, spec_for(specs, task), model.vocabulary());
    std::mt19937_64 rng = seeded_rng(cfg.seed);
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Matrix grad(model.vocabulary().size(), model.feature_dim());
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        deterministic_shuffle(order, rng);
        double epoch_loss = 0.0;
        std::size_t batches = 0;
        for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
            const std::size_t end = std::min(begin + cfg.batch_size, order.size());
            const std::vector<std::size_t> batch(order.begin() + begin, order.begin() + end);
            epoch_loss += featurized.loss_and_gradient(model, batch, grad);
            apply_update(model.weights(), grad, cfg.learning_rate);
            ++batches;
        }
        result.epoch_loss.push_back(epoch_loss / static_cast<double>(batches));
    }
    return result;
}

MultiTaskResult train_multi_task(MaskFillModel& model,
                                 const std::map<TaskId, std::vector<PromptInstance>>& data,
                                 const std::vector<TaskSpec>& specs, const TrainConfig& cfg) {
    cfg.validate();
    if (data.size() < 2) {
        throw ValidationError("multi-task training needs at least two tasks");
    }
    std::size_t max_size = 0;
    for (const auto& [task, instances] : data) {
        if (instances.empty()) {
            throw ValidationError("task " + std::string(task_name(task)) + " has no training instances");
        }
        max_size = std::max(max_size, instances.size());
    }

    std::vector<TaskId> tasks;  // canonical order; accumulation always follows it
    std::map<TaskId, CyclingLoader> loaders;
    std::map<TaskId, FeaturizedTask> featurized;
    for (const auto& [task, instances] : data) {
        tasks.push_back(task);
        loaders.emplace(task, CyclingLoader(instances.size(), mix_seed(cfg.seed, task_index(task))));
        featurized.emplace(task,
                           FeaturizedTask(instances, spec_for(specs, task), model.vocabulary()));
    }
    std::mt19937_64 order_rng = seeded_rng(cfg.task_order_seed ? *cfg.task_order_seed : mix_seed(cfg.seed, 1337));

    const std::size_t steps_per_epoch = (max_size + cfg.batch_size - 1) / cfg.batch_size;
    const std::size_t total_steps = steps_per_epoch * cfg.epochs;
    const double inv_tasks = 1.0 / static_cast<double>(tasks.size());

    MultiTaskResult result;
    result.steps_per_epoch = steps_per_epoch;
    Matrix total_grad(model.vocabulary().size(), model.feature_dim());
    std::map<TaskId, Matrix> task_grad;
    for (TaskId t : tasks) task_grad.emplace(t, Matrix(model.vocabulary().size(), model.feature_dim()));

    for (std::size_t step = 0; step < total_steps; ++step) {
        std::vector<TaskId> visit = tasks;
        deterministic_shuffle(visit, order_rng);

        TrainStepReport report;
        report.step = step;
        report.task_order = visit;
        for (TaskId t : visit) {
            const auto batch = loaders.at(t).draw(cfg.batch_size);
            report.task_loss[t] = featurized.at(t).loss_and_gradient(model, batch, task_grad.at(t));
        }

        // Combine losses and gradients in canonical task order so the result
        // is independent of the visit order, then apply one update.
        double loss_sum = 0.0;
        std::fill(total_grad.data().begin(), total_grad.data().end(), 0.0);
        for (TaskId t : tasks) {
            loss_sum += report.task_loss.at(t);
            const auto& g = task_grad.at(t).data();
            auto& acc = total_grad.data();
            for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += g[i];
        }
        for (double& x : total_grad.data()) x *= inv_tasks;
        report.total_loss = loss_sum * inv_tasks;
        apply_update(model.weights(), total_grad, cfg.learning_rate);
        result.steps.push_back(std::move(report));
    }
    return result;
}

// ---------------------------------------------------------------------------
// Direct classifier baseline
// ---------------------------------------------------------------------------

DirectClassifier::DirectClassifier(TaskId task, Vocabulary vocab)
    : task_(task),
      vocab_(std::move(vocab)),
      labels_(task_labels(task)),
      weights_(labels_.size(), vocab_.size() + 1) {}

std::vector<double> DirectClassifier::label_logits(const std::vector<std::string>& tokens) const {
    const auto features = featurize_tokens(tokens, vocab_);
    std::vector<double> z(labels_.size(), 0.0);
    const std::size_t f_dim = feature_dim();
    for (std::size_t l = 0; l < labels_.size(); ++l) {
        const double* row = weights_.data().data() + l * f_dim;
        double acc = 0.0;
        for (const auto& [idx, count] : features.entries) acc += row[idx] * count;
        z[l] = acc;
    }
    return z;
}

std::pair<std::string, LabelDistribution> DirectClassifier::predict_text(const std::string& text) const {
    const auto z = label_logits(tokenize(text));
    LabelDistribution dist;
    dist.task = task_;
    dist.labels = labels_;
    dist.probs = stable_softmax(z);
    std::size_t best = 0;
    for (std::size_t i = 1; i < dist.probs.size(); ++i) {
        if (dist.probs[i] > dist.probs[best]) best = i;
    }
    return {labels_[best], std::move(dist)};
}

DirectExample make_direct_example(const ClinicalNote& note, const std::string& input_text, TaskId task) {
    const auto it = note.labels.find(task);
    if (it == note.labels.end()) {
        throw ValidationError("note '" + note.id + "' lacks a gold label for task " +
                              std::string(task_name(task)));
    }
    return DirectExample{note.id, tokenize(input_text), it->second};
}

SingleTaskResult train_direct(DirectClassifier& clf, const std::vector<DirectExample>& data,
                              const TrainConfig& cfg) {
    cfg.validate();
    if (data.empty()) {
        throw ValidationError("direct training received no examples");
    }
    const auto& labels = clf.labels();
    const std::size_t f_dim = clf.feature_dim();
    SingleTaskResult result;
    std::mt19937_64 rng = seeded_rng(cfg.seed);
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Matrix grad(labels.size(), f_dim);
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        deterministic_shuffle(order, rng);
        double epoch_loss = 0.0;
        std::size_t batches = 0;
        for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
            const std::size_t end = std::min(begin + cfg.batch_size, order.size());
            std::fill(grad.data().begin(), grad.data().end(), 0.0);
            const double inv_n = 1.0 / static_cast<double>(end - begin);
            double batch_loss = 0.0;
            for (std::size_t i = begin; i < end; ++i) {
                const auto& ex = data[order[i]];
                const auto gold_it = std::find(labels.begin(), labels.end(), ex.gold);
                if (gold_it == labels.end()) {
                    throw ValidationError("gold label '" + ex.gold + "' outside the label set of task " +
                                          std::string(task_name(clf.task())));
                }
                const auto gold = static_cast<std::size_t>(gold_it - labels.begin());
                const auto features = featurize_tokens(ex.tokens, clf.vocabulary());
                const auto p = stable_softmax(clf.label_logits(ex.tokens));
                batch_loss += -std::log(std::max(p[gold], 1e-12));
                for (std::size_t l = 0; l < labels.size(); ++l) {
                    const double dz = (p[l] - (l == gold ? 1.0 : 0.0)) * inv_n;
                    double* row = grad.data().data() + l * f_dim;
                    for (const auto& [idx, count] : features.entries) row[idx] += dz * count;
                }
            }
            epoch_loss += batch_loss * inv_n;
            apply_update(clf.weights(), grad, cfg.learning_rate);
            ++batches;
        }
        result.epoch_loss.push_back(epoch_loss / static_cast<double>(batches));
    }
    return result;
}

void save_direct(const std::filesystem::path& path, const DirectClassifier& clf) {
    json weights = json::array();
    for (std::size_t r = 0; r < clf.labels().size(); ++r) {
        json row = json::array();
        for (std::size_t c = 0; c < clf.feature_dim(); ++c) row.push_back(clf.weights()(r, c));
        weights.push_back(std::move(row));
    }
    const json doc{{"format_version", kCheckpointFormatVersion},
                   {"kind", "direct"},
                   {"task", std::string(task_name(clf.task()))},
                   {"labels", clf.labels()},
                   {"vocabulary", clf.vocabulary().tokens()},
                   {"dim_features", clf.feature_dim()},
                   {"weights", std::move(weights)}};
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot write checkpoint: " + path.string());
    }
    out << doc.dump() << '\n';
}

DirectClassifier load_direct(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open checkpoint: " + path.string());
    }
    json doc;
    try {
        in >> doc;
    } catch (const json::parse_error& e) {
        throw ValidationError("checkpoint " + path.string() + " is corrupt: " + e.what());
    }
    if (doc.value("kind", "") != "direct") {
        throw ValidationError("checkpoint " + path.string() + " is not a direct classifier");
    }
    if (doc.value("format_version", -1) != kCheckpointFormatVersion) {
        throw ValidationError("checkpoint " + path.string() + " has an unsupported format_version");
    }
    const auto task = parse_task(doc.at("task").get<std::string>());
    if (!task) {
        throw ValidationError("checkpoint names an unknown task");
    }
    DirectClassifier clf(*task, Vocabulary(doc.at("vocabulary").get<std::vector<std::string>>()));
    const auto& weights = doc.at("weights");
    if (weights.size() != clf.labels().size()) {
        throw ValidationError("direct checkpoint must have one weight row per label");
    }
    for (std::size_t r = 0; r < weights.size(); ++r) {
        if (weights[r].size() != clf.feature_dim()) {
            throw ValidationError("checkpoint weight row " + std::to_string(r) + " has " +
                                  std::to_string(weights[r].size()) + " entries, expected " +
                                  std::to_string(clf.feature_dim()));
        }
        for (std::size_t c = 0; c < clf.feature_dim(); ++c) clf.weights()(r, c) = weights[r][c].get<double>();
    }
    return clf;
}

// ---------------------------------------------------------------------------
// Cross-validation
// ---------------------------------------------------------------------------

FoldPlan kfold_split(const std::vector<ClinicalNote>& notes, std::size_t k, std::uint64_t seed) {
    if (k < 2) {
        throw ValidationError("k-fold split requires k >= 2");
    }
    if (k > notes.size()) {
        throw ValidationError("k-fold split requires k <= number of notes (" +
                              std::to_string(notes.size()) + ")");
    }
    std::vector<std::size_t> order(notes.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng = seeded_rng(seed);
    deterministic_shuffle(order, rng);
    FoldPlan plan;
    plan.folds.resize(k);
    for (std::size_t i = 0; i < order.size(); ++i) {
        plan.folds[i % k].push_back(notes[order[i]].id);
    }
    return plan;
}

namespace {

struct TrainedPredictor {
    std::optional<MaskFillModel> model;
    std::optional<DirectClassifier> direct;
};

TrainedPredictor train_on(const std::vector<ClinicalNote>& notes,
                          const std::vector<std::string>& texts, const TrainConfig& cfg,
                          const std::vector<TaskSpec>& specs) {
    TrainedPredictor out;
    if (cfg.mode == TrainMode::direct) {
        const TaskId task = *cfg.task;
        std::vector<DirectExample> examples;
        std::vector<std::string> train_texts;
        for (std::size_t i = 0; i < notes.size(); ++i) {
            if (notes[i].labels.count(task)) {
                examples.push_back(make_direct_example(notes[i], texts[i], task));
                train_texts.push_back(texts[i]);
            }
        }
        DirectClassifier clf(task, Vocabulary::build(train_texts, specs));
        train_direct(clf, examples, cfg);
        out.direct = std::move(clf);
        return out;
    }

    MaskFillModel model(Vocabulary::build(texts, specs));
    auto instances = build_task_instances(notes, texts, specs);
    if (cfg.mode == TrainMode::single_task) {
        const TaskId task = *cfg.task;
        train_single_task(model, instances.at(task), specs, cfg);
    } else {
        train_multi_task(model, instances, specs, cfg);
    }
    out.model = std::move(model);
    return out;
}

std::vector<NotePrediction> predict_with(const TrainedPredictor& predictor,
                                         const std::vector<ClinicalNote>& notes,
                                         const std::vector<std::string>& texts,
                                         const std::vector<TaskSpec>& specs, const TrainConfig& cfg) {
    if (predictor.direct) {
        std::vector<NotePrediction> preds;
        for (std::size_t i = 0; i < notes.size(); ++i) {
            NotePrediction p;
            p.id = notes[i].id;
            auto [label, dist] = predictor.direct->predict_text(texts[i]);
            p.predictions[predictor.direct->task()] = label;
            for (std::size_t li = 0; li < dist.labels.size(); ++li) {
                p.probabilities[predictor.direct->task()][dist.labels[li]] = dist.probs[li];
            }
            preds.push_back(std::move(p));
        }
        return preds;
    }
    std::vector<TaskSpec> active_specs;
    if (cfg.mode == TrainMode::single_task) {
        active_specs.push_back(spec_for(specs, *cfg.task));
    } else {
        active_specs = specs;
    }
    return predict_notes(*predictor.model, notes, texts, active_specs);
}

} // namespace

std::vector<NotePrediction> predict_notes(const MaskFillScorer& scorer,
                                          const std::vector<ClinicalNote>& notes,
                                          const std::vector<std::string>& input_texts,
                                          const std::vector<TaskSpec>& specs) {
    if (notes.size() != input_texts.size()) {
        throw ValidationError("note list and input text list differ in length");
    }
    std::vector<NotePrediction> out;
    out.reserve(notes.size());
    for (std::size_t i = 0; i < notes.size(); ++i) {
        NotePrediction p;
        p.id = notes[i].id;
        for (const auto& spec : specs) {
            const auto instance = build_prompt(notes[i].id, input_texts[i], spec);
            auto [label, dist] = predict(scorer, instance, spec);
            p.predictions[spec.task] = label;
            for (std::size_t li = 0; li < dist.labels.size(); ++li) {
                p.probabilities[spec.task][dist.labels[li]] = dist.probs[li];
            }
        }
        out.push_back(std::move(p));
    }
    return out;
}

CvResult run_cv(const std::vector<ClinicalNote>& notes, const CvConfig& cfg,
                const std::vector<TaskSpec>& specs, EmbeddingProvider& provider) {
    cfg.train.validate();
    if (notes.empty()) {
        throw ValidationError("cross-validation requires a non-empty note set");
    }
    const FoldPlan plan = kfold_split(notes, cfg.folds, cfg.train.seed);

    // Preprocessing is deterministic per note, so it runs once up front.
    std::vector<std::string> texts;
    texts.reserve(notes.size());
    for (const auto& note : notes) {
        texts.push_back(preprocess_text(note, cfg.input_mode, cfg.retrieval, provider));
    }

    CvResult result;
    std::map<TaskId, double> task_sum;
    std::map<TaskId, std::size_t> task_folds;
    double overall_sum = 0.0;
    for (std::size_t f = 0; f < plan.folds.size(); ++f) {
        const std::unordered_set<std::string> val_ids(plan.folds[f].begin(), plan.folds[f].end());
        std::vector<ClinicalNote> train_notes, val_notes;
        std::vector<std::string> train_texts, val_texts;
        for (std::size_t i = 0; i < notes.size(); ++i) {
            if (val_ids.count(notes[i].id)) {
                val_notes.push_back(notes[i]);
                val_texts.push_back(texts[i]);
            } else {
                train_notes.push_back(notes[i]);
                train_texts.push_back(texts[i]);
            }
        }
        TrainConfig fold_cfg = cfg.train;
        fold_cfg.seed = cfg.train.seed + f;
        const auto predictor = train_on(train_notes, train_texts, fold_cfg, specs);
        const auto preds = predict_with(predictor, val_notes, val_texts, specs, fold_cfg);
        EvalReport report = build_report(val_notes, preds);
        overall_sum += report.overall_macro_f1;
        for (const auto& [task, eval] : report.tasks) {
            if (eval.has_support) {
                task_sum[task] += eval.macro_f1;
                ++task_folds[task];
            }
        }
        result.fold_reports.push_back(std::move(report));
    }
    for (const auto& [task, sum] : task_sum) {
        result.mean_macro_f1[task] = sum / static_cast<double>(task_folds[task]);
    }
    result.overall_mean = overall_sum / static_cast<double>(plan.folds.size());

    auto final_predictor = train_on(notes, texts, cfg.train, specs);
    result.final_model = std::move(final_predictor.model);
    result.final_direct = std::move(final_predictor.direct);
    return result;
}

} // namespace mhx
