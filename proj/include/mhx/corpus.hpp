#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mhx/tasks.hpp"

namespace mhx {

/// One clinical note. A task absent from `labels` means "not annotated" and
/// is excluded from evaluation; the label value "unknown" is itself an
/// annotated class.
struct ClinicalNote {
    std::string id;
    std::string text;
    std::map<TaskId, std::string> labels;

    bool operator==(const ClinicalNote&) const = default;
};

struct HistogramBucket {
    std::size_t lo;     ///< inclusive token-count lower edge
    std::size_t hi;     ///< exclusive upper edge; SIZE_MAX for the last bucket
    std::size_t count;
};

struct CorpusStats {
    std::size_t note_count = 0;
    std::map<TaskId, std::map<std::string, std::size_t>> label_counts;
    std::size_t min_tokens = 0;
    std::size_t max_tokens = 0;
    double median_tokens = 0.0;
    std::vector<HistogramBucket> token_histogram;
};

/// Reads line-delimited JSON notes. Errors name the offending line; duplicate
/// ids, unknown label values, and unknown keys are rejected. With
/// `require_labels`, a note without a gold map is an error.
std::vector<ClinicalNote> load_notes(const std::filesystem::path& path, bool require_labels = false);

void write_notes(const std::filesystem::path& path, const std::vector<ClinicalNote>& notes);

/// Per-task label counts plus a token-count distribution. The default
/// counter is the pipeline tokenizer.
using TokenCounter = std::function<std::size_t(std::string_view)>;
CorpusStats dataset_stats(const std::vector<ClinicalNote>& notes);
CorpusStats dataset_stats(const std::vector<ClinicalNote>& notes, const TokenCounter& counter);

/// Deterministic shuffled split; train size = round-half-up(ratio * N).
std::pair<std::vector<ClinicalNote>, std::vector<ClinicalNote>>
split_train_test(const std::vector<ClinicalNote>& notes, double ratio, std::uint64_t seed);

/// Label distributions and shape knobs for the synthetic note generator.
/// The severity distribution is conditional on dysmenorrhea == "yes"; notes
/// with dysmenorrhea "no"/"unknown" always carry severity "unknown", which
/// keeps every note internally consistent while hitting the configured
/// per-task marginals.
struct SynthProfile {
    std::map<TaskId, std::map<std::string, double>> label_weights;
    double long_note_fraction = 0.6;      ///< fraction of notes padded past 512 tokens
    double narrative_fraction = 0.9;      ///< chance a mention is narrative rather than templated
    double conflict_fraction = 0.0;       ///< chance a note gets a contradictory stale mention
    std::size_t distractor_prefix_tokens = 0;  ///< when > 0, this many distractor tokens precede all mentions

    static SynthProfile defaults();
    void validate() const;
};

/// Deterministic synthetic corpus standing in for the PHI-restricted notes.
/// Notes are double-space-joined segments: gynecological boilerplate plus
/// attribute mentions in templated ("Period Pattern Regular") and narrative
/// ("menses are regular") styles. Gold labels record what was planted.
std::vector<ClinicalNote> generate_synthetic(std::uint64_t seed, std::size_t n,
                                             const SynthProfile& profile = SynthProfile::defaults());

/// Re-extracts the generator's planted labels from note text by exact
/// pattern match (self-audit). Narrative mentions win over stale templated
/// ones, matching how conflicts are injected.
std::map<TaskId, std::string> extract_planted_labels(std::string_view note_text);

/// All snippet pattern strings the generator can plant, with their task and
/// label. Exposed for the audit and for tests.
struct SnippetPattern {
    TaskId task;
    std::string label;
    std::string text;
    bool narrative;
};
const std::vector<SnippetPattern>& synthetic_snippet_patterns();

} // namespace mhx
