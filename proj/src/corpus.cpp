#include "mhx/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "mhx/errors.hpp"
#include "mhx/random.hpp"
#include "mhx/tokenizer.hpp"

using nlohmann::json;

namespace mhx {

namespace {

constexpr std::array<std::size_t, 7> kBucketEdges = {0, 64, 128, 256, 512, 1024, 2048};

ClinicalNote parse_note_line(const std::string& line, std::size_t line_no) {
    json j;
    try {
        j = json::parse(line);
    } catch (const json::parse_error& e) {
        throw ValidationError("line " + std::to_string(line_no) + ": malformed JSON: " + e.what());
    }
    if (!j.is_object()) {
        throw ValidationError("line " + std::to_string(line_no) + ": expected a JSON object");
    }
    ClinicalNote note;
    for (const auto& [key, value] : j.items()) {
        if (key == "id") {
            if (!value.is_string()) {
                throw ValidationError("line " + std::to_string(line_no) + ": 'id' must be a string");
            }
            note.id = value.get<std::string>();
        } else if (key == "text") {
            if (!value.is_string()) {
                throw ValidationError("line " + std::to_string(line_no) + ": 'text' must be a string");
            }
            note.text = value.get<std::string>();
        } else if (key == "labels") {
            if (!value.is_object()) {
                throw ValidationError("line " + std::to_string(line_no) + ": 'labels' must be an object");
            }
            for (const auto& [task_key, label_value] : value.items()) {
                const auto task = parse_task(task_key);
                if (!task || task_key != task_name(*task)) {
                    throw ValidationError("line " + std::to_string(line_no) + ": unknown task key '" +
                                          task_key + "' in labels");
                }
                if (!label_value.is_string()) {
                    throw ValidationError("line " + std::to_string(line_no) + ": label for task " +
                                          std::string(task_name(*task)) + " must be a string");
                }
                const auto label = label_value.get<std::string>();
                if (!is_valid_label(*task, label)) {
                    throw ValidationError("line " + std::to_string(line_no) + ": unknown label '" + label +
                                          "' for task " + std::string(task_name(*task)));
                }
                note.labels[*task] = label;
            }
        } else {
            throw ValidationError("line " + std::to_string(line_no) + ": unknown key '" + key + "'");
        }
    }
    if (note.id.empty()) {
        throw ValidationError("line " + std::to_string(line_no) + ": missing or empty 'id'");
    }
    if (!j.contains("text")) {
        throw ValidationError("line " + std::to_string(line_no) + ": missing 'text'");
    }
    return note;
}

} // namespace

std::vector<ClinicalNote> load_notes(const std::filesystem::path& path, bool require_labels) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open notes file: " + path.string());
    }
    std::vector<ClinicalNote> notes;
    std::string line;
    std::size_t line_no = 0;
    std::map<std::string, std::size_t> seen;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        ClinicalNote note = parse_note_line(line, line_no);
        if (auto it = seen.find(note.id); it != seen.end()) {
            throw ValidationError("line " + std::to_string(line_no) + ": duplicate note id '" + note.id +
                                  "' (first seen on line " + std::to_string(it->second) + ")");
        }
        if (require_labels && note.labels.empty()) {
            throw ValidationError("line " + std::to_string(line_no) + ": note '" + note.id +
                                  "' has no gold labels but labels are required");
        }
        seen.emplace(note.id, line_no);
        notes.push_back(std::move(note));
    }
    return notes;
}

void write_notes(const std::filesystem::path& path, const std::vector<ClinicalNote>& notes) {
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot write notes file: " + path.string());
    }
    for (const auto& note : notes) {
        json j{{"id", note.id}, {"text", note.text}};
        if (!note.labels.empty()) {
            json labels = json::object();
            for (const auto& [task, label] : note.labels) {
                labels[std::string(task_name(task))] = label;
            }
            j["labels"] = labels;
        }
        out << j.dump() << '\n';
    }
}

CorpusStats dataset_stats(const std::vector<ClinicalNote>& notes) {
    return dataset_stats(notes, [](std::string_view text) { return count_tokens(text); });
}

CorpusStats dataset_stats(const std::vector<ClinicalNote>& notes, const TokenCounter& counter) {
    CorpusStats stats;
    stats.note_count = notes.size();
    for (TaskId t : kAllTasks) {
        for (const auto& label : task_labels(t)) {
            stats.label_counts[t][label] = 0;
        }
    }
    std::vector<std::size_t> counts;
    counts.reserve(notes.size());
    for (const auto& note : notes) {
        for (const auto& [task, label] : note.labels) {
            ++stats.label_counts[task][label];
        }
        counts.push_back(counter(note.text));
    }
    for (std::size_t i = 0; i < kBucketEdges.size(); ++i) {
        const std::size_t lo = kBucketEdges[i];
        const std::size_t hi = i + 1 < kBucketEdges.size() ? kBucketEdges[i + 1] : SIZE_MAX;
        stats.token_histogram.push_back({lo, hi, 0});
    }
    if (!counts.empty()) {
        std::sort(counts.begin(), counts.end());
        stats.min_tokens = counts.front();
        stats.max_tokens = counts.back();
        const std::size_t mid = counts.size() / 2;
        stats.median_tokens = counts.size() % 2 == 1
                                  ? static_cast<double>(counts[mid])
                                  : (static_cast<double>(counts[mid - 1]) + static_cast<double>(counts[mid])) / 2.0;
        for (std::size_t c : counts) {
            for (auto& bucket : stats.token_histogram) {
                if (c >= bucket.lo && c < bucket.hi) {
                    ++bucket.count;
                    break;
                }
            }
        }
    }
    return stats;
}

std::pair<std::vector<ClinicalNote>, std::vector<ClinicalNote>>
split_train_test(const std::vector<ClinicalNote>& notes, double ratio, std::uint64_t seed) {
    if (!(ratio > 0.0 && ratio < 1.0)) {
        throw ValidationError("split ratio must lie strictly between 0 and 1");
    }
    std::vector<std::size_t> order(notes.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::mt19937_64 rng = seeded_rng(seed);
    deterministic_shuffle(order, rng);
    const auto train_size =
        static_cast<std::size_t>(std::floor(ratio * static_cast<double>(notes.size()) + 0.5));
    std::vector<ClinicalNote> train, test;
    train.reserve(train_size);
    test.reserve(notes.size() - train_size);
    for (std::size_t i = 0; i < order.size(); ++i) {
        (i < train_size ? train : test).push_back(notes[order[i]]);
    }
    return {std::move(train), std::move(test)};
}

// ---------------------------------------------------------------------------
// Synthetic generator
// ---------------------------------------------------------------------------

namespace {

struct MentionBank {
    TaskId task;
    const char* label;
    std::vector<const char*> templated;
    std::vector<const char*> narrative;
};

// Mention texts double as the audit patterns. Tests enforce that no pattern
// is a substring of another and that distractors stay clear of query tokens
// and label words.
const std::vector<MentionBank>& mention_banks() {
    static const std::vector<MentionBank> banks = {
        {TaskId::dysmenorrhea, "no",
         {"Dysmenorrhea None"},
         {"denies discomfort with menses", "menses without discomfort"}},
        {TaskId::dysmenorrhea, "yes",  // severity unknown; joint mentions live in the severity banks
         {"Dysmenorrhea Yes"},
         {"reports ongoing dysmenorrhea with cycles"}},
        {TaskId::dysmenorrhea_severity, "mild",
         {"Dysmenorrhea Mild"},
         {"mild cramping with menses"}},
        {TaskId::dysmenorrhea_severity, "moderate",
         {"Dysmenorrhea Moderate"},
         {"moderate dysmenorrhea with cycles"}},
        {TaskId::dysmenorrhea_severity, "severe",
         {"Dysmenorrhea Severe"},
         {"severe dysmenorrhea limiting daily activity"}},
        {TaskId::regularity, "regular",
         {"Period Pattern Regular"},
         {"menses are regular", "menses occur monthly at predictable intervals"}},
        {TaskId::regularity, "irregular",
         {"Period Pattern Irregular"},
         {"skips menses frequently, cycle timing unpredictable"}},
        {TaskId::flow, "scanty",
         {"Bleeding Pattern scanty"},
         {"scanty spotting with minimal staining only"}},
        {TaskId::flow, "normal",
         {"Bleeding Pattern normal"},
         {"menstrual flow is normal"}},
        {TaskId::flow, "abundant",
         {"Bleeding Pattern heavy"},
         {"profuse heavy bleeding with large clots",
          "reports flooding and profuse heavy bleeding"}},
        {TaskId::intermenstrual_bleeding, "yes",
         {"Intermenstrual Bleeding Present"},
         {"reports spotting between periods"}},
        {TaskId::intermenstrual_bleeding, "no",
         {"Intermenstrual Bleeding None"},
         {"denies intermenstrual spotting"}},
    };
    return banks;
}

const std::vector<std::string>& distractor_bank() {
    static const std::vector<std::string> bank = {
        "Reason for Visit: Gynecology / Annual Exam",
        "Vitals reviewed and stable",
        "Blood pressure 118/72, pulse 68",
        "Pap smear collected, results pending",
        "Breast exam without masses or tenderness",
        "Immunizations up to date",
        "Counseled on diet and exercise",
        "Family history reviewed and unchanged",
        "Abdomen soft and nontender",
        "Follow up in 12 months or as needed",
    };
    return bank;
}

const std::vector<std::size_t>& distractor_token_counts() {
    static const std::vector<std::size_t> counts = [] {
        std::vector<std::size_t> c;
        for (const auto& d : distractor_bank()) c.push_back(count_tokens(d));
        return c;
    }();
    return counts;
}

std::vector<double> weights_to_probs(TaskId task, const std::map<std::string, double>& weights) {
    double sum = 0.0;
    for (const auto& [label, w] : weights) {
        if (!is_valid_label(task, label)) {
            throw ValidationError("synthetic profile: unknown label '" + label + "' for task " +
                                  std::string(task_name(task)));
        }
        if (w < 0.0) {
            throw ValidationError("synthetic profile: negative probability for task " +
                                  std::string(task_name(task)));
        }
        sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
        throw ValidationError("synthetic profile: probabilities for task " +
                              std::string(task_name(task)) + " sum to " + std::to_string(sum) +
                              ", expected 1");
    }
    std::vector<double> probs;
    for (const auto& label : task_labels(task)) {
        auto it = weights.find(label);
        probs.push_back(it == weights.end() ? 0.0 : it->second);
    }
    return probs;
}

const MentionBank& find_bank(TaskId task, const std::string& label) {
    for (const auto& bank : mention_banks()) {
        if (bank.task == task && label == bank.label) return bank;
    }
    throw ValidationError("no mention bank for task " + std::string(task_name(task)) + " label '" +
                          label + "'");
}

std::string pick_mention(const MentionBank& bank, bool narrative, std::mt19937_64& rng) {
    const auto& pool = narrative ? bank.narrative : bank.templated;
    return pool[bounded_rand(rng, pool.size())];
}

} // namespace

SynthProfile SynthProfile::defaults() {
    SynthProfile p;
    // Reference train-split label proportions. Severity is conditional on
    // dysmenorrhea == yes (28 of the 29 yes cases carry a severity).
    p.label_weights[TaskId::dysmenorrhea] = {{"yes", 29.0 / 91.0}, {"no", 21.0 / 91.0}, {"unknown", 41.0 / 91.0}};
    p.label_weights[TaskId::dysmenorrhea_severity] = {
        {"mild", 7.0 / 29.0}, {"moderate", 11.0 / 29.0}, {"severe", 10.0 / 29.0}, {"unknown", 1.0 / 29.0}};
    p.label_weights[TaskId::regularity] = {
        {"regular", 68.0 / 91.0}, {"irregular", 9.0 / 91.0}, {"unknown", 14.0 / 91.0}};
    p.label_weights[TaskId::flow] = {
        {"scanty", 3.0 / 91.0}, {"normal", 46.0 / 91.0}, {"abundant", 10.0 / 91.0}, {"unknown", 32.0 / 91.0}};
    p.label_weights[TaskId::intermenstrual_bleeding] = {
        {"yes", 3.0 / 91.0}, {"no", 11.0 / 91.0}, {"unknown", 77.0 / 91.0}};
    return p;
}

void SynthProfile::validate() const {
    for (TaskId t : kAllTasks) {
        auto it = label_weights.find(t);
        if (it == label_weights.end()) {
            throw ValidationError("synthetic profile: missing distribution for task " +
                                  std::string(task_name(t)));
        }
        (void)weights_to_probs(t, it->second);
    }
    for (double f : {long_note_fraction, narrative_fraction, conflict_fraction}) {
        if (f < 0.0 || f > 1.0) {
            throw ValidationError("synthetic profile: fractions must lie in [0,1]");
        }
    }
}

std::vector<ClinicalNote> generate_synthetic(std::uint64_t seed, std::size_t n, const SynthProfile& profile) {
    profile.validate();
    std::map<TaskId, std::vector<double>> probs;
    for (TaskId t : kAllTasks) probs[t] = weights_to_probs(t, profile.label_weights.at(t));

    std::vector<ClinicalNote> notes;
    notes.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::mt19937_64 rng = seeded_rng(mix_seed(seed, i));
        ClinicalNote note;
        {
            std::ostringstream id;
            id << "synth-" << seed << "-" << i;
            note.id = id.str();
        }

        // One documentation latent per note: attributes are documented
        // together, the way a menstrual-history block is either filled in or
        // skipped. Thresholds on a single uniform draw keep every per-task
        // marginal exactly equal to the configured distribution while
        // documented attributes co-occur.
        const double completeness = unit_real(rng);
        const auto documented_value = [&](TaskId t) {
            // Renormalized draw over the non-unknown labels.
            const auto& labels = task_labels(t);
            std::vector<double> w = probs[t];
            double known_mass = 0.0;
            for (std::size_t i = 0; i < labels.size(); ++i) {
                if (labels[i] == "unknown") w[i] = 0.0;
                known_mass += w[i];
            }
            if (known_mass <= 0.0) return std::string("unknown");
            for (double& x : w) x /= known_mass;
            return labels[discrete_draw(rng, w)];
        };
        const auto known_mass_of = [&](TaskId t) {
            const auto& labels = task_labels(t);
            double mass = 0.0;
            for (std::size_t i = 0; i < labels.size(); ++i) {
                if (labels[i] != "unknown") mass += probs[t][i];
            }
            return mass;
        };
        const double p_dys_yes = probs[TaskId::dysmenorrhea][0];  // labels: yes, no, unknown
        const double p_dys_no = probs[TaskId::dysmenorrhea][1];
        if (completeness <= p_dys_yes) {
            note.labels[TaskId::dysmenorrhea] = "yes";
        } else if (completeness <= p_dys_yes + p_dys_no) {
            note.labels[TaskId::dysmenorrhea] = "no";
        } else {
            note.labels[TaskId::dysmenorrhea] = "unknown";
        }
        // Severity is documented for the most thoroughly documented notes
        // only, and only when dysmenorrhea is present.
        const double sev_rate = p_dys_yes * known_mass_of(TaskId::dysmenorrhea_severity);
        note.labels[TaskId::dysmenorrhea_severity] =
            (note.labels[TaskId::dysmenorrhea] == "yes" && completeness <= sev_rate)
                ? documented_value(TaskId::dysmenorrhea_severity)
                : "unknown";
        for (TaskId t : {TaskId::regularity, TaskId::flow, TaskId::intermenstrual_bleeding}) {
            note.labels[t] =
                completeness <= known_mass_of(t) ? documented_value(t) : "unknown";
        }

        // One mention per attribute; the dysmenorrhea mention carries the
        // severity when it is documented.
        std::vector<std::pair<TaskId, std::string>> mentions;  // task -> snippet text
        const auto plant = [&](TaskId t, const MentionBank& bank) {
            const bool narrative = unit_real(rng) < profile.narrative_fraction;
            mentions.emplace_back(t, pick_mention(bank, narrative, rng));
        };
        const auto& dys = note.labels[TaskId::dysmenorrhea];
        const auto& sev = note.labels[TaskId::dysmenorrhea_severity];
        if (dys == "yes" && sev != "unknown") {
            plant(TaskId::dysmenorrhea_severity, find_bank(TaskId::dysmenorrhea_severity, sev));
        } else if (dys != "unknown") {
            plant(TaskId::dysmenorrhea, find_bank(TaskId::dysmenorrhea, dys));
        }
        for (TaskId t : {TaskId::regularity, TaskId::flow, TaskId::intermenstrual_bleeding}) {
            if (note.labels[t] != "unknown") plant(t, find_bank(t, note.labels[t]));
        }

        // Conflict mode: force one mention to its narrative form and append a
        // stale templated field for a different label of the same task.
        std::vector<std::string> conflicts;
        if (!mentions.empty() && unit_real(rng) < profile.conflict_fraction) {
            const std::size_t pick = bounded_rand(rng, mentions.size());
            TaskId t = mentions[pick].first;
            const std::string& gold = note.labels[t];
            const MentionBank& bank = find_bank(t, gold);
            mentions[pick].second = pick_mention(bank, true, rng);
            std::vector<std::string> others;
            for (const auto& other : mention_banks()) {
                if (other.task == t && gold != other.label) others.push_back(other.templated.front());
            }
            if (!others.empty()) {
                conflicts.push_back(others[bounded_rand(rng, others.size())] + " - -");
            }
        }

        // Distractor padding up to the target token budget.
        const bool long_note = unit_real(rng) < profile.long_note_fraction;
        std::size_t mention_tokens = 0;
        for (const auto& [t, text] : mentions) mention_tokens += count_tokens(text);
        const std::size_t target_tokens =
            long_note ? 530 + bounded_rand(rng, 320) : 60 + bounded_rand(rng, 200);

        const auto& bank = distractor_bank();
        const auto& bank_tokens = distractor_token_counts();
        std::vector<std::string> prefix;
        std::size_t prefix_tokens = 0;
        while (prefix_tokens < profile.distractor_prefix_tokens) {
            const std::size_t d = bounded_rand(rng, bank.size());
            prefix.push_back(bank[d]);
            prefix_tokens += bank_tokens[d];
        }
        std::vector<std::string> body;
        std::size_t body_tokens = prefix_tokens + mention_tokens;
        const std::size_t min_distractors = prefix.empty() ? 4 : 0;
        while (body.size() < min_distractors || body_tokens < target_tokens) {
            const std::size_t d = bounded_rand(rng, bank.size());
            body.push_back(bank[d]);
            body_tokens += bank_tokens[d];
        }
        for (const auto& [t, text] : mentions) body.push_back(text);
        for (const auto& c : conflicts) body.push_back(c);
        deterministic_shuffle(body, rng);

        std::string text;
        const auto append_segment = [&](const std::string& seg) {
            if (!text.empty()) text += "  ";
            text += seg;
        };
        for (const auto& seg : prefix) append_segment(seg);
        for (const auto& seg : body) append_segment(seg);
        note.text = std::move(text);
        notes.push_back(std::move(note));
    }
    return notes;
}

const std::vector<SnippetPattern>& synthetic_snippet_patterns() {
    static const std::vector<SnippetPattern> patterns = [] {
        std::vector<SnippetPattern> out;
        for (const auto& bank : mention_banks()) {
            for (const char* t : bank.templated) {
                out.push_back({bank.task, bank.label, t, false});
            }
            for (const char* t : bank.narrative) {
                out.push_back({bank.task, bank.label, t, true});
            }
            // Severity mentions double as dysmenorrhea == yes evidence.
            if (bank.task == TaskId::dysmenorrhea_severity) {
                for (const char* t : bank.templated) {
                    out.push_back({TaskId::dysmenorrhea, "yes", t, false});
                }
                for (const char* t : bank.narrative) {
                    out.push_back({TaskId::dysmenorrhea, "yes", t, true});
                }
            }
        }
        return out;
    }();
    return patterns;
}

std::map<TaskId, std::string> extract_planted_labels(std::string_view note_text) {
    std::map<TaskId, std::string> out;
    for (TaskId t : kAllTasks) out[t] = "unknown";
    const std::string text(note_text);
    for (TaskId t : kAllTasks) {
        std::string templated_hit;
        std::string narrative_hit;
        for (const auto& p : synthetic_snippet_patterns()) {
            if (p.task != t) continue;
            if (text.find(p.text) == std::string::npos) continue;
            (p.narrative ? narrative_hit : templated_hit) = p.label;
        }
        // Narrative mentions win: stale templated fields are only ever
        // injected alongside a narrative mention of the true label.
        if (!narrative_hit.empty()) {
            out[t] = narrative_hit;
        } else if (!templated_hit.empty()) {
            out[t] = templated_hit;
        }
    }
    return out;
}

} // namespace mhx
