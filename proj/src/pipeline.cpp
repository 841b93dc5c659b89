#include "mhx/pipeline.hpp"

#include "mhx/errors.hpp"
#include "mhx/segmenter.hpp"
#include "mhx/tokenizer.hpp"

namespace mhx {

InputMode parse_input_mode(const std::string& name) {
    if (name == "on") return InputMode::retrieval;
    if (name == "off") return InputMode::full;
    if (name == "truncate") return InputMode::truncate;
    throw ValidationError("unknown retrieval mode '" + name + "' (expected on, off, or truncate)");
}

std::string input_mode_name(InputMode mode) {
    switch (mode) {
        case InputMode::retrieval: return "on";
        case InputMode::full: return "off";
        case InputMode::truncate: return "truncate";
    }
    return "off";
}

std::string truncate_text(const std::string& text) {
    const auto tokens = tokenize(normalize_whitespace(text));
    std::string out;
    for (std::size_t i = 0; i < tokens.size() && i < kTruncationTokenLimit; ++i) {
        if (!out.empty()) out += ' ';
        out += tokens[i];
    }
    return out;
}

std::string preprocess_text(const ClinicalNote& note, InputMode mode, const RetrievalConfig& cfg,
                            EmbeddingProvider& provider) {
    switch (mode) {
        case InputMode::retrieval: return retrieve(note, cfg, provider).retrieved_text;
        case InputMode::truncate: return truncate_text(note.text);
        case InputMode::full: break;
    }
    return note.text;
}

std::map<TaskId, std::vector<PromptInstance>> build_task_instances(
    const std::vector<ClinicalNote>& notes, const std::vector<std::string>& input_texts,
    const std::vector<TaskSpec>& specs) {
    if (notes.size() != input_texts.size()) {
        throw ValidationError("note list and preprocessed text list differ in length");
    }
    std::map<TaskId, std::vector<PromptInstance>> out;
    for (const auto& spec : specs) out[spec.task] = {};
    for (std::size_t i = 0; i < notes.size(); ++i) {
        for (const auto& spec : specs) {
            const auto it = notes[i].labels.find(spec.task);
            if (it == notes[i].labels.end()) continue;
            out[spec.task].push_back(build_prompt(notes[i].id, input_texts[i], spec, it->second));
        }
    }
    return out;
}

} // namespace mhx
