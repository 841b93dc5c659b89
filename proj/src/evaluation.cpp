#include "mhx/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "mhx/errors.hpp"

using nlohmann::json;

namespace mhx {

std::size_t ConfusionMatrix::total() const {
    std::size_t t = 0;
    for (std::size_t c : counts) t += c;
    return t;
}

namespace {

std::size_t label_index(const std::vector<std::string>& labels, const std::string& value) {
    const auto it = std::find(labels.begin(), labels.end(), value);
    if (it == labels.end()) {
        throw ValidationError("unknown label value '" + value + "'");
    }
    return static_cast<std::size_t>(it - labels.begin());
}

} // namespace

TaskEval evaluate_task(TaskId task, const std::vector<std::string>& gold,
                       const std::vector<std::string>& pred) {
    if (gold.size() != pred.size()) {
        throw ValidationError("gold and prediction lists differ in length for task " +
                              std::string(task_name(task)));
    }
    const auto& labels = task_labels(task);
    TaskEval eval;
    eval.confusion = ConfusionMatrix(task, labels);
    eval.evaluated = gold.size();
    for (std::size_t i = 0; i < gold.size(); ++i) {
        eval.confusion.at(label_index(labels, gold[i]), label_index(labels, pred[i]))++;
    }
    const std::size_t n = labels.size();
    double f1_sum = 0.0;
    std::size_t supported = 0;
    for (std::size_t li = 0; li < n; ++li) {
        LabelScore score;
        score.label = labels[li];
        std::size_t tp = eval.confusion.at(li, li);
        std::size_t fp = 0, fn = 0, support = 0;
        for (std::size_t other = 0; other < n; ++other) {
            support += eval.confusion.at(li, other);
            if (other != li) {
                fn += eval.confusion.at(li, other);
                fp += eval.confusion.at(other, li);
            }
        }
        score.support = support;
        score.precision = (tp + fp) == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
        score.recall = (tp + fn) == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
        score.f1 = (score.precision + score.recall) == 0.0
                       ? 0.0
                       : 2.0 * score.precision * score.recall / (score.precision + score.recall);
        eval.per_label.push_back(score);
        if (support > 0) {
            f1_sum += score.f1;
            ++supported;
        }
    }
    eval.has_support = supported > 0;
    eval.macro_f1 = supported == 0 ? 0.0 : f1_sum / static_cast<double>(supported);
    return eval;
}

double macro_f1(const std::vector<std::string>& gold, const std::vector<std::string>& pred,
                const std::vector<std::string>& labels) {
    if (gold.size() != pred.size()) {
        throw ValidationError("gold and prediction lists differ in length");
    }
    const std::size_t n = labels.size();
    std::vector<std::size_t> tp(n, 0), fp(n, 0), fn(n, 0), support(n, 0);
    for (std::size_t i = 0; i < gold.size(); ++i) {
        const std::size_t g = label_index(labels, gold[i]);
        const std::size_t p = label_index(labels, pred[i]);
        ++support[g];
        if (g == p) {
            ++tp[g];
        } else {
            ++fn[g];
            ++fp[p];
        }
    }
    double sum = 0.0;
    std::size_t supported = 0;
    for (std::size_t li = 0; li < n; ++li) {
        if (support[li] == 0) continue;
        const double prec =
            (tp[li] + fp[li]) == 0 ? 0.0 : static_cast<double>(tp[li]) / static_cast<double>(tp[li] + fp[li]);
        const double rec =
            (tp[li] + fn[li]) == 0 ? 0.0 : static_cast<double>(tp[li]) / static_cast<double>(tp[li] + fn[li]);
        sum += (prec + rec) == 0.0 ? 0.0 : 2.0 * prec * rec / (prec + rec);
        ++supported;
    }
    return supported == 0 ? 0.0 : sum / static_cast<double>(supported);
}

std::vector<NotePrediction> load_predictions(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open predictions file: " + path.string());
    }
    std::vector<NotePrediction> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw ValidationError("predictions line " + std::to_string(line_no) + ": " + e.what());
        }
        NotePrediction p;
        p.id = j.at("id").get<std::string>();
        for (const auto& [key, value] : j.at("predictions").items()) {
            const auto task = parse_task(key);
            if (!task) {
                throw ValidationError("predictions line " + std::to_string(line_no) + ": unknown task '" +
                                      key + "'");
            }
            const auto label = value.get<std::string>();
            if (!is_valid_label(*task, label)) {
                throw ValidationError("predictions line " + std::to_string(line_no) + ": unknown label '" +
                                      label + "' for task " + key);
            }
            p.predictions[*task] = label;
        }
        if (j.contains("probabilities")) {
            for (const auto& [key, probs] : j.at("probabilities").items()) {
                const auto task = parse_task(key);
                if (!task) continue;
                for (const auto& [label, prob] : probs.items()) {
                    p.probabilities[*task][label] = prob.get<double>();
                }
            }
        }
        out.push_back(std::move(p));
    }
    return out;
}

void write_predictions(const std::filesystem::path& path, const std::vector<NotePrediction>& preds) {
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot write predictions file: " + path.string());
    }
    for (const auto& p : preds) {
        json predictions = json::object();
        for (const auto& [task, label] : p.predictions) {
            predictions[std::string(task_name(task))] = label;
        }
        json probabilities = json::object();
        for (const auto& [task, probs] : p.probabilities) {
            probabilities[std::string(task_name(task))] = probs;
        }
        out << json{{"id", p.id}, {"predictions", predictions}, {"probabilities", probabilities}}.dump()
            << '\n';
    }
}

EvalReport build_report(const std::vector<ClinicalNote>& gold,
                        const std::vector<NotePrediction>& predictions) {
    std::map<std::string, const ClinicalNote*> by_id;
    for (const auto& note : gold) by_id.emplace(note.id, &note);

    std::map<TaskId, std::vector<std::string>> gold_lists, pred_lists;
    for (const auto& pred : predictions) {
        const auto it = by_id.find(pred.id);
        if (it == by_id.end()) {
            throw ValidationError("prediction id '" + pred.id + "' is absent from the gold set");
        }
        for (const auto& [task, label] : pred.predictions) {
            const auto gold_it = it->second->labels.find(task);
            if (gold_it == it->second->labels.end()) continue;  // not annotated -> skip this task
            gold_lists[task].push_back(gold_it->second);
            pred_lists[task].push_back(label);
        }
    }

    EvalReport report;
    double sum = 0.0;
    for (TaskId task : kAllTasks) {
        TaskEval eval = evaluate_task(task, gold_lists[task], pred_lists[task]);
        if (eval.has_support) {
            sum += eval.macro_f1;
            ++report.tasks_with_support;
        }
        report.tasks.emplace(task, std::move(eval));
    }
    report.overall_macro_f1 =
        report.tasks_with_support == 0 ? 0.0 : sum / static_cast<double>(report.tasks_with_support);
    return report;
}

EvalReport evaluate_files(const std::filesystem::path& predictions_path,
                          const std::filesystem::path& gold_path) {
    return build_report(load_notes(gold_path), load_predictions(predictions_path));
}

json report_to_json(const EvalReport& report) {
    json tasks = json::object();
    for (const auto& [task, eval] : report.tasks) {
        json per_label = json::object();
        for (const auto& score : eval.per_label) {
            per_label[score.label] = {{"precision", score.precision},
                                      {"recall", score.recall},
                                      {"f1", score.f1},
                                      {"support", score.support}};
        }
        json confusion = json::array();
        const std::size_t n = eval.confusion.labels.size();
        for (std::size_t g = 0; g < n; ++g) {
            json row = json::array();
            for (std::size_t p = 0; p < n; ++p) row.push_back(eval.confusion.at(g, p));
            confusion.push_back(std::move(row));
        }
        tasks[std::string(task_name(task))] = {{"macro_f1", eval.macro_f1},
                                               {"has_support", eval.has_support},
                                               {"evaluated", eval.evaluated},
                                               {"labels", eval.confusion.labels},
                                               {"confusion", std::move(confusion)},
                                               {"per_label", std::move(per_label)}};
    }
    return {{"tasks", std::move(tasks)},
            {"overall_macro_f1", report.overall_macro_f1},
            {"tasks_with_support", report.tasks_with_support}};
}

EvalReport report_from_json(const json& j) {
    EvalReport report;
    for (const auto& [name, entry] : j.at("tasks").items()) {
        const auto task = parse_task(name);
        if (!task) {
            throw ValidationError("report names unknown task '" + name + "'");
        }
        TaskEval eval;
        eval.macro_f1 = entry.at("macro_f1").get<double>();
        eval.has_support = entry.value("has_support", true);
        eval.evaluated = entry.value("evaluated", 0);
        eval.confusion = ConfusionMatrix(*task, task_labels(*task));
        if (entry.contains("confusion")) {
            const auto& confusion = entry["confusion"];
            for (std::size_t g = 0; g < confusion.size(); ++g) {
                for (std::size_t p = 0; p < confusion[g].size(); ++p) {
                    eval.confusion.at(g, p) = confusion[g][p].get<std::size_t>();
                }
            }
        }
        report.tasks.emplace(*task, std::move(eval));
    }
    report.overall_macro_f1 = j.at("overall_macro_f1").get<double>();
    report.tasks_with_support = j.value("tasks_with_support", report.tasks.size());
    return report;
}

RunDelta compare_runs(const EvalReport& a, const EvalReport& b) {
    std::set<TaskId> tasks_a, tasks_b;
    for (const auto& [task, eval] : a.tasks) tasks_a.insert(task);
    for (const auto& [task, eval] : b.tasks) tasks_b.insert(task);
    if (tasks_a != tasks_b) {
        throw ValidationError("cannot compare runs over different task sets");
    }
    RunDelta delta;
    for (const auto& [task, eval_a] : a.tasks) {
        delta.task_delta[task] = b.tasks.at(task).macro_f1 - eval_a.macro_f1;
    }
    delta.overall_delta = b.overall_macro_f1 - a.overall_macro_f1;
    return delta;
}

std::string format_signed(double value, int decimals) {
    std::ostringstream out;
    out << (value < 0 ? '-' : '+') << std::fixed << std::setprecision(decimals) << std::abs(value);
    return out.str();
}

namespace {

std::string fixed3(double v) {
    std::ostringstream out;
    out << std::fixed << std::setprecision(3) << v;
    return out.str();
}

} // namespace

std::string render_report_table(const EvalReport& report) {
    std::ostringstream out;
    out << std::left << std::setw(26) << "task" << std::right << std::setw(10) << "macro-F1"
        << std::setw(11) << "evaluated" << '\n';
    for (const auto& [task, eval] : report.tasks) {
        out << std::left << std::setw(26) << task_display_name(task) << std::right << std::setw(10)
            << (eval.has_support ? fixed3(eval.macro_f1) : std::string("no support")) << std::setw(11)
            << eval.evaluated << '\n';
    }
    out << std::left << std::setw(26) << "overall" << std::right << std::setw(10)
        << fixed3(report.overall_macro_f1) << '\n';
    return out.str();
}

std::string render_delta_table(const EvalReport& a, const EvalReport& b) {
    const RunDelta delta = compare_runs(a, b);
    std::ostringstream out;
    out << std::left << std::setw(26) << "task" << std::right << std::setw(8) << "a" << std::setw(8)
        << "b" << std::setw(10) << "delta" << '\n';
    for (const auto& [task, d] : delta.task_delta) {
        out << std::left << std::setw(26) << task_display_name(task) << std::right << std::setw(8)
            << fixed3(a.tasks.at(task).macro_f1) << std::setw(8) << fixed3(b.tasks.at(task).macro_f1)
            << std::setw(10) << "(" + format_signed(d) + ")" << '\n';
    }
    out << std::left << std::setw(26) << "overall" << std::right << std::setw(8)
        << fixed3(a.overall_macro_f1) << std::setw(8) << fixed3(b.overall_macro_f1) << std::setw(10)
        << "(" + format_signed(delta.overall_delta) + ")" << '\n';
    return out.str();
}

} // namespace mhx
