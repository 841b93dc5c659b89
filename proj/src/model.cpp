#include "mhx/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "mhx/errors.hpp"
#include "mhx/version.hpp"

using nlohmann::json;

namespace mhx {

double Matrix::max_abs() const {
    double m = 0.0;
    for (double x : data_) m = std::max(m, std::abs(x));
    return m;
}

namespace {

// The count-plus-bias vector is L2-normalized per instance: with raw counts
// the curvature along frequent-token coordinates dwarfs the rest and
// gradient descent either diverges or crawls. Unit feature norm keeps the
// step size meaningful for every instance regardless of note length.
SparseFeatures counts_to_features(std::unordered_map<std::size_t, double>&& counts,
                                  const Vocabulary& vocab) {
    SparseFeatures f;
    f.entries.reserve(counts.size() + 1);
    for (const auto& [idx, c] : counts) f.entries.emplace_back(idx, c);
    std::sort(f.entries.begin(), f.entries.end());
    f.entries.emplace_back(vocab.size(), 1.0);  // bias
    double sum_sq = 0.0;
    for (const auto& [idx, c] : f.entries) sum_sq += c * c;
    const double inv_norm = 1.0 / std::sqrt(sum_sq);
    for (auto& [idx, c] : f.entries) c *= inv_norm;
    return f;
}

} // namespace

SparseFeatures featurize(const PromptInstance& instance, const Vocabulary& vocab) {
    std::unordered_map<std::size_t, double> counts;
    for (std::size_t i = 0; i < instance.tokens.size(); ++i) {
        if (i == instance.mask_position) continue;
        ++counts[vocab.lookup(instance.tokens[i])];
    }
    return counts_to_features(std::move(counts), vocab);
}

SparseFeatures featurize_tokens(const std::vector<std::string>& tokens, const Vocabulary& vocab) {
    std::unordered_map<std::size_t, double> counts;
    for (const auto& tok : tokens) ++counts[vocab.lookup(tok)];
    return counts_to_features(std::move(counts), vocab);
}

MaskFillModel::MaskFillModel(Vocabulary vocab)
    : vocab_(std::move(vocab)), weights_(vocab_.size(), vocab_.size() + 1) {}

std::vector<double> MaskFillModel::logits(const PromptInstance& instance) const {
    return logits(featurize(instance, vocab_));
}

std::vector<double> MaskFillModel::logits(const SparseFeatures& features) const {
    const std::size_t v = vocab_.size();
    const std::size_t f_dim = feature_dim();
    std::vector<double> z(v, 0.0);
    const double* w = weights_.data().data();
    for (std::size_t row = 0; row < v; ++row) {
        double acc = 0.0;
        const double* wr = w + row * f_dim;
        for (const auto& [idx, count] : features.entries) acc += wr[idx] * count;
        z[row] = acc;
    }
    return z;
}

double LabelDistribution::prob_of(std::string_view label) const {
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] == label) return probs[i];
    }
    throw ValidationError("label '" + std::string(label) + "' not in distribution for task " +
                          std::string(task_name(task)));
}

std::vector<double> stable_softmax(std::span<const double> logits) {
    std::vector<double> p(logits.size());
    if (logits.empty()) return p;
    const double m = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] - m);
        sum += p[i];
    }
    for (double& x : p) x /= sum;
    return p;
}

std::size_t ResolvedTask::label_index(std::string_view label) const {
    for (std::size_t li = 0; li < spec->verbalizer.size(); ++li) {
        if (spec->verbalizer[li].first == label) return li;
    }
    throw ValidationError("gold label '" + std::string(label) + "' is not a label of task " +
                          std::string(task_name(spec->task)));
}

ResolvedTask resolve_task(const TaskSpec& spec, const Vocabulary& vocab) {
    ResolvedTask r;
    r.spec = &spec;
    for (const auto& [label, words] : spec.verbalizer) {
        std::vector<std::size_t> idx;
        for (const auto& word : words) {
            if (!vocab.contains(word)) {
                throw ValidationError("verbalizer word '" + word + "' is missing from the vocabulary");
            }
            idx.push_back(vocab.lookup(word));
        }
        r.word_indices.push_back(std::move(idx));
    }
    return r;
}

LabelDistribution verbalize(const std::vector<double>& logits, const TaskSpec& spec,
                            const Vocabulary& vocab) {
    if (logits.size() != vocab.size()) {
        throw ValidationError("logit vector length does not match the vocabulary size");
    }
    const auto resolved = resolve_task(spec, vocab);
    const auto p = stable_softmax(logits);
    LabelDistribution dist;
    dist.task = spec.task;
    double total = 0.0;
    for (std::size_t li = 0; li < spec.verbalizer.size(); ++li) {
        double mass = 0.0;
        for (std::size_t w : resolved.word_indices[li]) mass += p[w];
        dist.labels.push_back(spec.verbalizer[li].first);
        dist.probs.push_back(mass);
        total += mass;
    }
    for (double& x : dist.probs) x /= total;
    return dist;
}

std::pair<std::string, LabelDistribution> predict(const MaskFillScorer& scorer,
                                                  const PromptInstance& instance,
                                                  const TaskSpec& spec) {
    auto dist = verbalize(scorer.logits(instance), spec, scorer.vocabulary());
    std::size_t best = 0;
    for (std::size_t i = 1; i < dist.probs.size(); ++i) {
        if (dist.probs[i] > dist.probs[best]) best = i;
    }
    return {dist.labels[best], std::move(dist)};
}

namespace {
constexpr double kProbClamp = 1e-12;
}

double nll_loss(const MaskFillScorer& scorer, const PromptInstance& instance, const TaskSpec& spec) {
    if (!instance.gold) {
        throw ValidationError("nll_loss requires a gold label on the instance");
    }
    const auto dist = verbalize(scorer.logits(instance), spec, scorer.vocabulary());
    return -std::log(std::max(dist.prob_of(*instance.gold), kProbClamp));
}

double featurized_loss_and_gradient(const MaskFillModel& model, const ResolvedTask& task,
                                    std::span<const SparseFeatures* const> features,
                                    std::span<const std::size_t> gold_labels, Matrix& grad_out) {
    const std::size_t v = model.vocabulary().size();
    const std::size_t f_dim = model.feature_dim();
    if (grad_out.rows() != v || grad_out.cols() != f_dim) {
        grad_out = Matrix(v, f_dim);
    } else {
        std::fill(grad_out.data().begin(), grad_out.data().end(), 0.0);
    }
    if (features.empty() || features.size() != gold_labels.size()) {
        throw ValidationError("gradient requested for an empty or misaligned batch");
    }
    const double inv_n = 1.0 / static_cast<double>(features.size());
    double loss_sum = 0.0;

    for (std::size_t i = 0; i < features.size(); ++i) {
        const SparseFeatures& phi = *features[i];
        const std::size_t gold_index = gold_labels[i];
        const auto z = model.logits(phi);
        const auto p = stable_softmax(z);

        double total_mass = 0.0;
        std::vector<double> mass(task.word_indices.size(), 0.0);
        for (std::size_t li = 0; li < mass.size(); ++li) {
            for (std::size_t w : task.word_indices[li]) mass[li] += p[w];
            total_mass += mass[li];
        }
        const double q_gold = mass[gold_index] / total_mass;
        loss_sum += -std::log(std::max(q_gold, kProbClamp));
        if (q_gold <= kProbClamp) continue;  // loss is clamped flat here

        // dJ/dz_w = p_w * ([w in any label list]/total_mass
        //                  - [w in gold list]/gold_mass),
        // zero for words outside every list.
        for (std::size_t li = 0; li < mass.size(); ++li) {
            const double coeff = 1.0 / total_mass - (li == gold_index ? 1.0 / mass[gold_index] : 0.0);
            for (std::size_t w : task.word_indices[li]) {
                const double dz = p[w] * coeff * inv_n;
                if (dz == 0.0) continue;
                double* row = grad_out.data().data() + w * f_dim;
                for (const auto& [idx, count] : phi.entries) row[idx] += dz * count;
            }
        }
    }
    return loss_sum * inv_n;
}

double batch_loss_and_gradient(const MaskFillModel& model, std::span<const PromptInstance> batch,
                               const std::vector<TaskSpec>& specs, Matrix& grad_out) {
    if (batch.empty()) {
        throw ValidationError("gradient requested for an empty batch");
    }
    const Vocabulary& vocab = model.vocabulary();
    // Group by task, preserving the mean over the whole batch.
    std::map<TaskId, ResolvedTask> tasks;
    std::vector<SparseFeatures> storage;
    storage.reserve(batch.size());
    std::map<TaskId, std::vector<std::size_t>> task_members;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto& instance = batch[i];
        if (!instance.gold) {
            throw ValidationError("gradient requires a gold label on every instance");
        }
        if (!tasks.count(instance.task)) {
            tasks.emplace(instance.task, resolve_task(spec_for(specs, instance.task), vocab));
        }
        storage.push_back(featurize(instance, vocab));
        task_members[instance.task].push_back(i);
    }
    if (task_members.size() == 1) {
        const auto& [task, members] = *task_members.begin();
        const ResolvedTask& resolved = tasks.at(task);
        std::vector<const SparseFeatures*> feats;
        std::vector<std::size_t> gold;
        for (std::size_t i : members) {
            feats.push_back(&storage[i]);
            gold.push_back(resolved.label_index(*batch[i].gold));
        }
        return featurized_loss_and_gradient(model, resolved, feats, gold, grad_out);
    }

    Matrix task_grad;
    const std::size_t v = vocab.size();
    const std::size_t f_dim = model.feature_dim();
    if (grad_out.rows() != v || grad_out.cols() != f_dim) {
        grad_out = Matrix(v, f_dim);
    } else {
        std::fill(grad_out.data().begin(), grad_out.data().end(), 0.0);
    }
    double loss_sum = 0.0;
    for (const auto& [task, members] : task_members) {
        const ResolvedTask& resolved = tasks.at(task);
        std::vector<const SparseFeatures*> feats;
        std::vector<std::size_t> gold;
        for (std::size_t i : members) {
            feats.push_back(&storage[i]);
            gold.push_back(resolved.label_index(*batch[i].gold));
        }
        const double task_mean = featurized_loss_and_gradient(model, resolved, feats, gold, task_grad);
        const double scale = static_cast<double>(members.size()) / static_cast<double>(batch.size());
        loss_sum += task_mean * static_cast<double>(members.size());
        auto& acc = grad_out.data();
        const auto& g = task_grad.data();
        for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += g[i] * scale;
    }
    return loss_sum / static_cast<double>(batch.size());
}

Matrix loss_gradient(const MaskFillModel& model, const std::vector<PromptInstance>& batch,
                     const std::vector<TaskSpec>& specs) {
    Matrix grad(model.vocabulary().size(), model.feature_dim());
    batch_loss_and_gradient(model, batch, specs, grad);
    return grad;
}

void save_model(const std::filesystem::path& path, const MaskFillModel& model) {
    const std::size_t v = model.vocabulary().size();
    const std::size_t f_dim = model.feature_dim();
    json weights = json::array();
    for (std::size_t r = 0; r < v; ++r) {
        json row = json::array();
        for (std::size_t c = 0; c < f_dim; ++c) row.push_back(model.weights()(r, c));
        weights.push_back(std::move(row));
    }
    const json doc{{"format_version", kCheckpointFormatVersion},
                   {"vocabulary", model.vocabulary().tokens()},
                   {"dim_features", f_dim},
                   {"weights", std::move(weights)}};
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot write checkpoint: " + path.string());
    }
    out << doc.dump() << '\n';
}

MaskFillModel load_model(const std::filesystem::path& path) {
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
    if (!doc.contains("format_version") || !doc["format_version"].is_number_integer() ||
        doc["format_version"].get<int>() != kCheckpointFormatVersion) {
        throw ValidationError("checkpoint " + path.string() + " has an unsupported format_version");
    }
    if (doc.contains("kind") && doc["kind"] != "mask_fill") {
        throw ValidationError("checkpoint " + path.string() + " is not a mask-fill model (kind '" +
                              doc["kind"].get<std::string>() + "')");
    }
    for (const char* key : {"vocabulary", "dim_features", "weights"}) {
        if (!doc.contains(key)) {
            throw ValidationError("checkpoint " + path.string() + " is missing '" + key + "'");
        }
    }
    Vocabulary vocab(doc["vocabulary"].get<std::vector<std::string>>());
    const auto f_dim = doc["dim_features"].get<std::size_t>();
    if (f_dim != vocab.size() + 1) {
        throw ValidationError("checkpoint dim_features does not equal vocabulary size + 1");
    }
    const auto& weights = doc["weights"];
    if (!weights.is_array() || weights.size() != vocab.size()) {
        throw ValidationError("checkpoint weight matrix must have one row per vocabulary token");
    }
    MaskFillModel model(std::move(vocab));
    for (std::size_t r = 0; r < weights.size(); ++r) {
        const auto& row = weights[r];
        if (!row.is_array() || row.size() != f_dim) {
            throw ValidationError("checkpoint weight row " + std::to_string(r) + " has " +
                                  std::to_string(row.size()) + " entries, expected " +
                                  std::to_string(f_dim));
        }
        for (std::size_t c = 0; c < f_dim; ++c) {
            model.weights()(r, c) = row[c].get<double>();
        }
    }
    return model;
}

} // namespace mhx
