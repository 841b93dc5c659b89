#include "mhx/prompting.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "mhx/errors.hpp"
#include "mhx/hash.hpp"
#include "mhx/tokenizer.hpp"

using nlohmann::json;

namespace mhx {

const std::vector<std::string>& TaskSpec::words_for(std::string_view label) const {
    for (const auto& [l, words] : verbalizer) {
        if (l == label) return words;
    }
    throw ValidationError("no verbalizer entry for label '" + std::string(label) + "' in task " +
                          std::string(task_name(task)));
}

const std::vector<TaskSpec>& default_task_specs() {
    static const std::vector<TaskSpec> specs = [] {
        std::vector<TaskSpec> s;
        s.push_back({TaskId::dysmenorrhea,
                     {"yes", "no", "unknown"},
                     "dysmenorrhea: [MASK]",
                     {{"yes", {"yes", "mild", "moderate", "severe"}},
                      {"no", {"no", "none"}},
                      {"unknown", {"unknown", "unspecified", "uncertain"}}}});
        s.push_back({TaskId::dysmenorrhea_severity,
                     {"mild", "moderate", "severe", "unknown"},
                     "dysmenorrhea severity: [MASK]",
                     {{"mild", {"mild", "light", "manageable"}},
                      {"moderate", {"moderate", "medium", "average"}},
                      {"severe", {"severe", "intense", "extreme", "painful"}},
                      {"unknown", {"unknown", "unspecified", "uncertain"}}}});
        s.push_back({TaskId::regularity,
                     {"regular", "irregular", "unknown"},
                     "period pattern: [MASK]",
                     {{"regular", {"regular", "normal"}},
                      {"irregular", {"irregular"}},
                      {"unknown", {"unknown", "unspecified", "uncertain"}}}});
        s.push_back({TaskId::flow,
                     {"scanty", "normal", "abundant", "unknown"},
                     "bleeding pattern: [MASK]",
                     {{"scanty", {"scanty", "light", "spotting"}},
                      {"normal", {"normal", "regular", "moderate"}},
                      {"abundant", {"abundant", "heavy", "profuse"}},
                      {"unknown", {"unknown", "unspecified", "uncertain"}}}});
        s.push_back({TaskId::intermenstrual_bleeding,
                     {"yes", "no", "unknown"},
                     "intermenstrual bleeding: [MASK]",
                     {{"yes", {"yes", "present", "spotting"}},
                      {"no", {"no", "none", "absent"}},
                      {"unknown", {"unknown", "unspecified", "uncertain"}}}});
        validate_task_specs(s);
        return s;
    }();
    return specs;
}

void validate_task_specs(const std::vector<TaskSpec>& specs) {
    std::set<TaskId> seen;
    for (const auto& spec : specs) {
        const std::string name(task_name(spec.task));
        if (!seen.insert(spec.task).second) {
            throw ValidationError("task " + name + " appears more than once");
        }
        const auto& fixed = task_labels(spec.task);
        if (std::set<std::string>(spec.labels.begin(), spec.labels.end()) !=
            std::set<std::string>(fixed.begin(), fixed.end())) {
            throw ValidationError("label set for task " + name + " does not match the fixed label set");
        }
        const auto mask_pos = spec.template_trigger.find(kMaskToken);
        if (mask_pos == std::string::npos ||
            spec.template_trigger.find(kMaskToken, mask_pos + 1) != std::string::npos) {
            throw ValidationError("template for task " + name + " must contain exactly one [MASK]");
        }
        std::set<std::string> words_seen;
        std::set<std::string> labels_covered;
        for (const auto& [label, words] : spec.verbalizer) {
            if (std::find(spec.labels.begin(), spec.labels.end(), label) == spec.labels.end()) {
                throw ValidationError("verbalizer for task " + name + " names unknown label '" + label + "'");
            }
            if (!labels_covered.insert(label).second) {
                throw ValidationError("verbalizer for task " + name + " repeats label '" + label + "'");
            }
            if (words.empty()) {
                throw ValidationError("verbalizer for task " + name + " label '" + label + "' has no words");
            }
            for (const auto& word : words) {
                const auto toks = tokenize(word);
                if (toks.size() != 1 || toks[0] != word) {
                    throw ValidationError("verbalizer word '" + word + "' for task " + name +
                                          " is not a single lowercase token");
                }
                if (!words_seen.insert(word).second) {
                    throw ValidationError("verbalizer word '" + word + "' appears in two labels of task " +
                                          name);
                }
            }
        }
        if (labels_covered.size() != spec.labels.size()) {
            throw ValidationError("verbalizer for task " + name + " does not cover every label");
        }
    }
}

const TaskSpec& spec_for(const std::vector<TaskSpec>& specs, TaskId task) {
    for (const auto& spec : specs) {
        if (spec.task == task) return spec;
    }
    throw ValidationError("no task spec for " + std::string(task_name(task)));
}

std::vector<TaskSpec> task_specs_from_json(const json& j) {
    if (!j.is_array()) {
        throw ValidationError("tasks config must be a JSON array");
    }
    std::vector<TaskSpec> specs;
    for (const auto& entry : j) {
        TaskSpec spec;
        const auto name = entry.at("task").get<std::string>();
        const auto task = parse_task(name);
        if (!task) {
            throw ValidationError("unknown task '" + name + "' in tasks config");
        }
        spec.task = *task;
        spec.labels = entry.at("labels").get<std::vector<std::string>>();
        spec.template_trigger = entry.at("template_trigger").get<std::string>();
        const auto& verb = entry.at("verbalizer");
        for (const auto& label : spec.labels) {
            if (!verb.contains(label)) {
                throw ValidationError("verbalizer for task " + name + " missing label '" + label + "'");
            }
            spec.verbalizer.emplace_back(label, verb.at(label).get<std::vector<std::string>>());
        }
        if (verb.size() != spec.labels.size()) {
            throw ValidationError("verbalizer for task " + name + " has entries outside the label set");
        }
        specs.push_back(std::move(spec));
    }
    validate_task_specs(specs);
    return specs;
}

json task_specs_to_json(const std::vector<TaskSpec>& specs) {
    json out = json::array();
    for (const auto& spec : specs) {
        json verb = json::object();
        for (const auto& [label, words] : spec.verbalizer) verb[label] = words;
        out.push_back({{"task", std::string(task_name(spec.task))},
                       {"labels", spec.labels},
                       {"template_trigger", spec.template_trigger},
                       {"verbalizer", verb}});
    }
    return out;
}

std::vector<TaskSpec> load_task_specs(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open tasks config: " + path.string());
    }
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw ValidationError("tasks config " + path.string() + ": " + e.what());
    }
    return task_specs_from_json(j);
}

void save_task_specs(const std::filesystem::path& path, const std::vector<TaskSpec>& specs) {
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot write tasks config: " + path.string());
    }
    out << task_specs_to_json(specs).dump(2) << '\n';
}

std::string task_specs_canonical(const std::vector<TaskSpec>& specs) {
    std::ostringstream out;
    for (const auto& spec : specs) {
        out << task_name(spec.task) << '|' << spec.template_trigger << '|';
        for (const auto& [label, words] : spec.verbalizer) {
            out << label << "->";
            for (std::size_t i = 0; i < words.size(); ++i) {
                if (i) out << ',';
                out << words[i];
            }
            out << ';';
        }
        out << '\n';
    }
    return out.str();
}

std::uint64_t task_specs_checksum(const std::vector<TaskSpec>& specs) {
    return fnv1a64(task_specs_canonical(specs));
}

// ---------------------------------------------------------------------------
// Vocabulary
// ---------------------------------------------------------------------------

Vocabulary::Vocabulary() {
    add(std::string(kMaskToken));
    add(std::string(kOovToken));
}

Vocabulary::Vocabulary(std::vector<std::string> tokens) {
    if (tokens.size() < 2 || tokens[0] != kMaskToken || tokens[1] != kOovToken) {
        throw ValidationError("vocabulary must start with the reserved tokens [MASK], [OOV]");
    }
    for (auto& t : tokens) {
        if (index_.count(t)) {
            throw ValidationError("duplicate token '" + t + "' in vocabulary");
        }
        index_.emplace(t, tokens_.size());
        tokens_.push_back(std::move(t));
    }
}

void Vocabulary::add(const std::string& token) {
    if (index_.emplace(token, tokens_.size()).second) {
        tokens_.push_back(token);
    }
}

Vocabulary Vocabulary::build(const std::vector<std::string>& texts, const std::vector<TaskSpec>& specs) {
    Vocabulary v;
    for (const auto& spec : specs) {
        for (const auto& tok : tokenize_template(spec.template_trigger)) v.add(tok);
        for (const auto& [label, words] : spec.verbalizer) {
            for (const auto& word : words) v.add(word);
        }
    }
    for (const auto& text : texts) {
        for (const auto& tok : tokenize(text)) v.add(tok);
    }
    return v;
}

std::size_t Vocabulary::lookup(std::string_view token) const {
    auto it = index_.find(std::string(token));
    return it == index_.end() ? oov_index() : it->second;
}

bool Vocabulary::contains(std::string_view token) const {
    return index_.count(std::string(token)) > 0;
}

// ---------------------------------------------------------------------------
// Prompt construction
// ---------------------------------------------------------------------------

PromptInstance build_prompt(std::string note_id, std::string_view input_text, const TaskSpec& spec,
                            std::optional<std::string> gold) {
    PromptInstance inst;
    inst.note_id = std::move(note_id);
    inst.task = spec.task;
    inst.tokens = tokenize(input_text);
    for (auto& tok : tokenize_template(spec.template_trigger)) {
        inst.tokens.push_back(std::move(tok));
    }
    const auto it = std::find(inst.tokens.begin(), inst.tokens.end(), kMaskToken);
    if (it == inst.tokens.end()) {
        throw ValidationError("prompt template produced no [MASK] token");
    }
    inst.mask_position = static_cast<std::size_t>(it - inst.tokens.begin());
    inst.gold = std::move(gold);
    return inst;
}

} // namespace mhx
