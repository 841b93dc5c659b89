#include <doctest.h>

#include <algorithm>
#include <set>

#include "mhx/corpus.hpp"
#include "mhx/errors.hpp"
#include "mhx/retrieval.hpp"
#include "mhx/tokenizer.hpp"
#include "support.hpp"

using namespace mhx;
using mhx::testing::TempDir;
using mhx::testing::write_text;

TEST_CASE("load_notes on an empty file") {
    TempDir dir;
    write_text(dir.file("empty.jsonl"), "");
    CHECK(load_notes(dir.file("empty.jsonl")).empty());
}

TEST_CASE("load_notes parses a minimal labeled record") {
    TempDir dir;
    write_text(dir.file("one.jsonl"),
               R"({"id":"n1","text":"menses are regular","labels":{"regularity":"regular"}})"
               "\n");
    const auto notes = load_notes(dir.file("one.jsonl"));
    REQUIRE(notes.size() == 1);
    CHECK(notes[0].id == "n1");
    CHECK(notes[0].labels.size() == 1);
    CHECK(notes[0].labels.at(TaskId::regularity) == "regular");
}

TEST_CASE("load_notes rejects out-of-vocabulary label values") {
    TempDir dir;
    write_text(dir.file("bad.jsonl"), R"({"id":"n1","text":"x","labels":{"flow":"heavy"}})"
                                      "\n");
    CHECK_THROWS_WITH_AS(load_notes(dir.file("bad.jsonl")),
                         doctest::Contains("unknown label 'heavy' for task flow"), ValidationError);
}

TEST_CASE("load_notes names the malformed line") {
    TempDir dir;
    write_text(dir.file("bad.jsonl"), R"({"id":"a","text":"x"})"
                                      "\n{not json\n");
    CHECK_THROWS_WITH_AS(load_notes(dir.file("bad.jsonl")), doctest::Contains("line 2"),
                         ValidationError);
}

TEST_CASE("load_notes rejects duplicates, unknown keys, and missing fields") {
    TempDir dir;
    write_text(dir.file("dup.jsonl"), R"({"id":"a","text":"x"})"
                                      "\n"
                                      R"({"id":"a","text":"y"})"
                                      "\n");
    CHECK_THROWS_WITH_AS(load_notes(dir.file("dup.jsonl")), doctest::Contains("duplicate note id 'a'"),
                         ValidationError);

    write_text(dir.file("key.jsonl"), R"({"id":"a","text":"x","extra":1})"
                                      "\n");
    CHECK_THROWS_WITH_AS(load_notes(dir.file("key.jsonl")), doctest::Contains("unknown key 'extra'"),
                         ValidationError);

    write_text(dir.file("task.jsonl"), R"({"id":"a","text":"x","labels":{"mood":"fine"}})"
                                       "\n");
    CHECK_THROWS_WITH_AS(load_notes(dir.file("task.jsonl")), doctest::Contains("unknown task key"),
                         ValidationError);

    write_text(dir.file("noid.jsonl"), R"({"text":"x"})"
                                       "\n");
    CHECK_THROWS_AS(load_notes(dir.file("noid.jsonl")), ValidationError);

    write_text(dir.file("notext.jsonl"), R"({"id":"a"})"
                                         "\n");
    CHECK_THROWS_AS(load_notes(dir.file("notext.jsonl")), ValidationError);

    CHECK_THROWS_AS(load_notes(dir.file("absent.jsonl")), IoError);
}

TEST_CASE("load_notes with require_labels") {
    TempDir dir;
    write_text(dir.file("nolab.jsonl"), R"({"id":"a","text":"x"})"
                                        "\n");
    CHECK_NOTHROW(load_notes(dir.file("nolab.jsonl"), false));
    CHECK_THROWS_WITH_AS(load_notes(dir.file("nolab.jsonl"), true),
                         doctest::Contains("no gold labels"), ValidationError);
}

TEST_CASE("write/load round-trip preserves every field") {
    TempDir dir;
    const auto notes = generate_synthetic(11, 40);
    write_notes(dir.file("rt.jsonl"), notes);
    const auto back = load_notes(dir.file("rt.jsonl"));
    CHECK(back == notes);
}

TEST_CASE("dataset_stats reproduces the reference train-split counts") {
    const auto notes = mhx::testing::table1_train_fixture();
    const auto stats = dataset_stats(notes);
    CHECK(stats.label_counts.at(TaskId::dysmenorrhea).at("yes") == 29);
    CHECK(stats.label_counts.at(TaskId::dysmenorrhea).at("no") == 21);
    CHECK(stats.label_counts.at(TaskId::dysmenorrhea).at("unknown") == 41);
    CHECK(stats.label_counts.at(TaskId::dysmenorrhea_severity).at("mild") == 7);
    CHECK(stats.label_counts.at(TaskId::dysmenorrhea_severity).at("moderate") == 11);
    CHECK(stats.label_counts.at(TaskId::dysmenorrhea_severity).at("severe") == 10);
    CHECK(stats.label_counts.at(TaskId::dysmenorrhea_severity).at("unknown") == 63);
    CHECK(stats.label_counts.at(TaskId::regularity).at("regular") == 68);
    CHECK(stats.label_counts.at(TaskId::flow).at("normal") == 46);
    CHECK(stats.label_counts.at(TaskId::intermenstrual_bleeding).at("unknown") == 77);

    // Per-task totals equal the number of notes annotated for that task.
    for (const auto& [task, counts] : stats.label_counts) {
        std::size_t sum = 0;
        for (const auto& [label, n] : counts) sum += n;
        std::size_t annotated = 0;
        for (const auto& note : notes) annotated += note.labels.count(task);
        CHECK(sum == annotated);
    }
}

TEST_CASE("dataset_stats accepts a custom token counter") {
    std::vector<ClinicalNote> notes(2);
    notes[0] = {"a", "one two three", {}};
    notes[1] = {"b", "four", {}};
    const auto stats = dataset_stats(notes, [](std::string_view) { return std::size_t{7}; });
    CHECK(stats.min_tokens == 7);
    CHECK(stats.max_tokens == 7);
    CHECK(stats.median_tokens == 7.0);

    const auto standard = dataset_stats(notes);
    CHECK(standard.min_tokens == 1);
    CHECK(standard.max_tokens == 3);
}

TEST_CASE("dataset_stats on an empty corpus") {
    const auto stats = dataset_stats({});
    CHECK(stats.note_count == 0);
    CHECK(stats.min_tokens == 0);
    CHECK(stats.max_tokens == 0);
    for (const auto& bucket : stats.token_histogram) CHECK(bucket.count == 0);
}

TEST_CASE("dataset_stats counts what the generator planted") {
    const auto notes = generate_synthetic(7, 3);
    const auto stats = dataset_stats(notes);
    for (TaskId t : kAllTasks) {
        std::map<std::string, std::size_t> expected;
        for (const auto& label : task_labels(t)) expected[label] = 0;
        for (const auto& note : notes) expected[note.labels.at(t)]++;
        CHECK(stats.label_counts.at(t) == expected);
    }
}

TEST_CASE("split_train_test yields the 65:35 reference sizes") {
    std::vector<ClinicalNote> notes(140);
    for (std::size_t i = 0; i < notes.size(); ++i) notes[i].id = "n" + std::to_string(i);
    const auto [train, test] = split_train_test(notes, 0.65, 3);
    CHECK(train.size() == 91);
    CHECK(test.size() == 49);
}

TEST_CASE("split_train_test rounds half up and handles N=1") {
    std::vector<ClinicalNote> notes(1);
    notes[0].id = "only";
    const auto [train, test] = split_train_test(notes, 0.65, 0);
    CHECK(train.size() == 1);
    CHECK(test.size() == 0);

    std::vector<ClinicalNote> three(3);
    for (std::size_t i = 0; i < 3; ++i) three[i].id = "n" + std::to_string(i);
    const auto [tr, te] = split_train_test(three, 0.5, 0);
    CHECK(tr.size() == 2);  // 1.5 rounds up
    CHECK(te.size() == 1);
}

TEST_CASE("split_train_test is deterministic and partitions the input") {
    const auto notes = generate_synthetic(3, 53);
    const auto [a_train, a_test] = split_train_test(notes, 0.3, 99);
    const auto [b_train, b_test] = split_train_test(notes, 0.3, 99);
    CHECK(a_train == b_train);
    CHECK(a_test == b_test);

    std::set<std::string> seen;
    for (const auto& n : a_train) seen.insert(n.id);
    for (const auto& n : a_test) seen.insert(n.id);
    CHECK(seen.size() == notes.size());
    CHECK(a_train.size() + a_test.size() == notes.size());

    const auto [c_train, c_test] = split_train_test(notes, 0.3, 100);
    CHECK(c_train != a_train);  // a different seed shuffles differently
}

TEST_CASE("split_train_test validates the ratio") {
    std::vector<ClinicalNote> notes(2);
    notes[0].id = "a";
    notes[1].id = "b";
    CHECK_THROWS_AS(split_train_test(notes, 0.0, 1), ValidationError);
    CHECK_THROWS_AS(split_train_test(notes, 1.0, 1), ValidationError);
}

TEST_CASE("generate_synthetic basics") {
    CHECK(generate_synthetic(42, 0).empty());

    const auto a = generate_synthetic(42, 10);
    const auto b = generate_synthetic(42, 10);
    CHECK(a == b);

    // Every note is labeled for all five tasks and ids are unique.
    std::set<std::string> ids;
    for (const auto& note : a) {
        ids.insert(note.id);
        CHECK(note.labels.size() == kTaskCount);
    }
    CHECK(ids.size() == a.size());
}

TEST_CASE("generate_synthetic frequencies approach the configured distribution") {
    const auto notes = generate_synthetic(20240801, 1000);
    const auto stats = dataset_stats(notes);
    const auto expect = [&](TaskId t, const std::string& label, double p) {
        const double freq =
            static_cast<double>(stats.label_counts.at(t).at(label)) / static_cast<double>(notes.size());
        CHECK(std::abs(freq - p) < 0.03);
    };
    expect(TaskId::dysmenorrhea, "yes", 29.0 / 91.0);
    expect(TaskId::dysmenorrhea, "no", 21.0 / 91.0);
    expect(TaskId::dysmenorrhea, "unknown", 41.0 / 91.0);
    expect(TaskId::dysmenorrhea_severity, "mild", 7.0 / 91.0);
    expect(TaskId::dysmenorrhea_severity, "moderate", 11.0 / 91.0);
    expect(TaskId::dysmenorrhea_severity, "severe", 10.0 / 91.0);
    expect(TaskId::dysmenorrhea_severity, "unknown", 63.0 / 91.0);
    expect(TaskId::regularity, "regular", 68.0 / 91.0);
    expect(TaskId::regularity, "irregular", 9.0 / 91.0);
    expect(TaskId::flow, "scanty", 3.0 / 91.0);
    expect(TaskId::flow, "normal", 46.0 / 91.0);
    expect(TaskId::flow, "abundant", 10.0 / 91.0);
    expect(TaskId::intermenstrual_bleeding, "yes", 3.0 / 91.0);
    expect(TaskId::intermenstrual_bleeding, "no", 11.0 / 91.0);
}

TEST_CASE("generator self-audit recovers every planted label") {
    SynthProfile profile = SynthProfile::defaults();
    SUBCASE("plain") {}
    SUBCASE("with conflicts") { profile.conflict_fraction = 0.35; }
    SUBCASE("with distractor prefix") { profile.distractor_prefix_tokens = 450; }
    const auto notes = generate_synthetic(5150, 300, profile);
    for (const auto& note : notes) {
        const auto extracted = extract_planted_labels(note.text);
        for (TaskId t : kAllTasks) {
            CAPTURE(note.id);
            CAPTURE(task_name(t));
            CHECK(extracted.at(t) == note.labels.at(t));
        }
    }
}

TEST_CASE("long-note fraction controls token counts") {
    SynthProfile all_long = SynthProfile::defaults();
    all_long.long_note_fraction = 1.0;
    for (const auto& note : generate_synthetic(9, 30, all_long)) {
        CHECK(count_tokens(note.text) > 512);
    }

    SynthProfile none_long = SynthProfile::defaults();
    none_long.long_note_fraction = 0.0;
    std::size_t over = 0;
    for (const auto& note : generate_synthetic(9, 30, none_long)) {
        over += count_tokens(note.text) > 512;
    }
    CHECK(over == 0);
}

TEST_CASE("distractor prefix precedes every planted mention") {
    SynthProfile profile = SynthProfile::defaults();
    profile.distractor_prefix_tokens = 450;
    profile.long_note_fraction = 0.0;
    for (const auto& note : generate_synthetic(31, 40, profile)) {
        std::size_t first_mention = std::string::npos;
        for (const auto& p : synthetic_snippet_patterns()) {
            first_mention = std::min(first_mention, note.text.find(p.text));
        }
        if (first_mention == std::string::npos) continue;  // all-unknown note
        CHECK(count_tokens(note.text.substr(0, first_mention)) >= 450);
    }
}

TEST_CASE("invalid profile distributions are rejected") {
    SynthProfile profile = SynthProfile::defaults();
    profile.label_weights[TaskId::flow] = {{"scanty", 0.5}, {"normal", 0.6}};
    CHECK_THROWS_WITH_AS(generate_synthetic(1, 1, profile), doctest::Contains("sum to"),
                         ValidationError);

    SynthProfile bad_label = SynthProfile::defaults();
    bad_label.label_weights[TaskId::flow] = {{"torrential", 1.0}};
    CHECK_THROWS_AS(generate_synthetic(1, 1, bad_label), ValidationError);
}

TEST_CASE("audit patterns are unambiguous and retrievable") {
    const auto& patterns = synthetic_snippet_patterns();
    // No pattern may contain another pattern of the same task with a
    // different label (substring matching must stay unambiguous).
    for (const auto& a : patterns) {
        for (const auto& b : patterns) {
            if (a.task != b.task || a.label == b.label) continue;
            CHECK(a.text.find(b.text) == std::string::npos);
        }
    }
    // Every mention carries at least one retrieval query token so the
    // fixed-query ranking can find it.
    std::set<std::string> query_tokens;
    for (const auto& tok : lexical_tokens(kDefaultRetrievalQuery)) query_tokens.insert(tok);
    for (const auto& p : patterns) {
        bool hit = false;
        for (const auto& tok : lexical_tokens(p.text)) {
            if (query_tokens.count(tok)) hit = true;
        }
        CAPTURE(p.text);
        CHECK(hit);
    }
}
