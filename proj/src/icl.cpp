#include "mhx/icl.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "mhx/corpus.hpp"
#include "mhx/errors.hpp"

using nlohmann::json;

namespace mhx {

namespace {

std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

void require_full_labels(const FewShotExample& ex, std::size_t index) {
    for (TaskId t : kAllTasks) {
        if (!ex.labels.count(t)) {
            throw ValidationError("few-shot example " + std::to_string(index + 1) +
                                  " lacks a label for task " + std::string(task_name(t)));
        }
        if (!is_valid_label(t, ex.labels.at(t))) {
            throw ValidationError("few-shot example " + std::to_string(index + 1) +
                                  " carries label '" + ex.labels.at(t) + "' outside the set of task " +
                                  std::string(task_name(t)));
        }
    }
}

} // namespace

const std::vector<FewShotExample>& default_fewshot_examples() {
    // Synthetic examples; no clinical text.
    static const std::vector<FewShotExample> examples = {
        {"Annual visit.  Menses are regular, every 28 days.  Dysmenorrhea None  Bleeding Pattern "
         "normal  Denies spotting between periods.",
         {{TaskId::dysmenorrhea, "no"},
          {TaskId::dysmenorrhea_severity, "unknown"},
          {TaskId::regularity, "regular"},
          {TaskId::flow, "normal"},
          {TaskId::intermenstrual_bleeding, "no"}}},
        {"Follow-up.  Reports severe dysmenorrhea limiting daily activity.  Skips menses "
         "frequently.  Heavy menstrual flow with clots.",
         {{TaskId::dysmenorrhea, "yes"},
          {TaskId::dysmenorrhea_severity, "severe"},
          {TaskId::regularity, "irregular"},
          {TaskId::flow, "abundant"},
          {TaskId::intermenstrual_bleeding, "unknown"}}},
        {"Wellness exam.  Vitals stable.  Mild cramping with menses.  Reports spotting between "
         "periods.  Reports scanty menstrual flow.",
         {{TaskId::dysmenorrhea, "yes"},
          {TaskId::dysmenorrhea_severity, "mild"},
          {TaskId::regularity, "unknown"},
          {TaskId::flow, "scanty"},
          {TaskId::intermenstrual_bleeding, "yes"}}},
    };
    return examples;
}

std::vector<FewShotExample> load_fewshot_examples(const std::filesystem::path& path) {
    const auto notes = load_notes(path, /*require_labels=*/true);
    std::vector<FewShotExample> out;
    for (std::size_t i = 0; i < notes.size(); ++i) {
        FewShotExample ex{notes[i].text, notes[i].labels};
        require_full_labels(ex, i);
        out.push_back(std::move(ex));
    }
    return out;
}

std::string build_fewshot_prompt(const std::vector<FewShotExample>& examples,
                                 std::string_view query_text, std::string_view preamble) {
    if (examples.empty()) {
        throw ValidationError("few-shot prompt requires at least one worked example");
    }
    std::ostringstream out;
    out << preamble << "\n";
    for (std::size_t i = 0; i < examples.size(); ++i) {
        require_full_labels(examples[i], i);
        out << "\nExample " << (i + 1) << ":\nNote: " << examples[i].text << '\n';
        for (TaskId t : kAllTasks) {
            out << task_display_name(t) << ": " << examples[i].labels.at(t) << '\n';
        }
    }
    out << "\nAnswer with exactly five lines 'task: label'.\n\nNote: " << query_text << '\n';
    return out.str();
}

ParsedPrediction parse_icl_response(std::string_view response) {
    ParsedPrediction result;
    std::istringstream lines{std::string(response)};
    std::string line;
    while (std::getline(lines, line)) {
        const auto colon = line.find(':');
        if (colon == std::string::npos) continue;
        const auto task = parse_task(trim(line.substr(0, colon)));
        if (!task) continue;
        if (result.labels.count(*task)) continue;  // first answer per task wins
        const std::string value = lower(trim(line.substr(colon + 1)));
        if (is_valid_label(*task, value)) {
            result.labels[*task] = value;
        } else {
            result.parse_warnings.push_back("task " + std::string(task_name(*task)) + ": value '" +
                                            value + "' is outside the label set");
            result.labels[*task] = "unknown";
        }
    }
    for (TaskId t : kAllTasks) {
        if (!result.labels.count(t)) {
            result.parse_warnings.push_back("task " + std::string(task_name(t)) +
                                            ": no answer line found");
            result.labels[t] = "unknown";
        }
    }
    return result;
}

GenerativeClient::GenerativeClient(std::string base_url, int max_tokens)
    : base_url_(std::move(base_url)), max_tokens_(max_tokens) {}

std::string GenerativeClient::generate(const std::string& prompt) const {
    httplib::Client client(base_url_);
    client.set_connection_timeout(5, 0);
    client.set_read_timeout(120, 0);
    const json request{{"prompt", prompt}, {"max_tokens", max_tokens_}};
    auto res = client.Post("/generate", request.dump(), "application/json");
    if (!res) {
        throw RemoteError("generative service unreachable at " + base_url_ + ": " +
                          httplib::to_string(res.error()));
    }
    if (res->status < 200 || res->status >= 300) {
        throw RemoteError("generative service returned status " + std::to_string(res->status) + ": " +
                          res->body);
    }
    json body;
    try {
        body = json::parse(res->body);
    } catch (const json::parse_error& e) {
        throw RemoteError(std::string("generative service returned invalid JSON: ") + e.what());
    }
    if (!body.contains("text") || !body["text"].is_string()) {
        throw RemoteError("generative response missing 'text'");
    }
    const auto text = body["text"].get<std::string>();
    if (text.empty()) {
        throw RemoteError("generative service returned an empty completion");
    }
    return text;
}

ParsedPrediction icl_predict(const GenerativeClient& client, const std::string& prompt) {
    return parse_icl_response(client.generate(prompt));
}

} // namespace mhx
