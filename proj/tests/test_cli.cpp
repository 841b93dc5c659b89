#include <doctest.h>

#include <nlohmann/json.hpp>

#include "mhx/cli.hpp"
#include "mhx/corpus.hpp"
#include "mhx/evaluation.hpp"
#include "mhx/pipeline.hpp"
#include "mhx/prompting.hpp"
#include "mhx/tokenizer.hpp"
#include "support.hpp"

using namespace mhx;
using mhx::testing::TempDir;
using mhx::testing::read_text;
using nlohmann::json;

namespace {

int mhx_run(std::vector<std::string> args) { return cli::run(std::move(args)); }

} // namespace

TEST_CASE("synth is byte-for-byte reproducible") {
    TempDir dir;
    const auto a = dir.file("a.jsonl").string();
    const auto b = dir.file("b.jsonl").string();
    REQUIRE(mhx_run({"synth", "--seed", "42", "--n", "100", "--out", a}) == 0);
    REQUIRE(mhx_run({"synth", "--seed", "42", "--n", "100", "--out", b}) == 0);
    CHECK(read_text(a) == read_text(b));
    CHECK_FALSE(read_text(a).empty());
}

TEST_CASE("retrieve emits per-note token counts that never grow") {
    TempDir dir;
    const auto notes = dir.file("notes.jsonl").string();
    const auto retrieved = dir.file("retrieved.jsonl").string();
    REQUIRE(mhx_run({"synth", "--seed", "7", "--n", "25", "--out", notes}) == 0);
    REQUIRE(mhx_run({"retrieve", "--notes", notes, "--out", retrieved, "--k", "10"}) == 0);

    std::istringstream lines(read_text(retrieved));
    std::string line;
    std::size_t count = 0;
    while (std::getline(lines, line)) {
        const auto j = json::parse(line);
        CHECK(j.at("tokens_after").get<std::size_t>() <= j.at("tokens_before").get<std::size_t>());
        CHECK(j.at("segments").size() <= 10);
        ++count;
    }
    CHECK(count == 25);
}

TEST_CASE("segment subcommand writes one json line per segment") {
    TempDir dir;
    const auto notes = dir.file("notes.jsonl").string();
    mhx::testing::write_text(notes, R"({"id":"n1","text":"A  B  C"})"
                                    "\n");
    const auto out = dir.file("segments.jsonl").string();
    REQUIRE(mhx_run({"segment", "--notes", notes, "--out", out}) == 0);
    std::istringstream lines(read_text(out));
    std::string line;
    std::vector<std::string> texts;
    while (std::getline(lines, line)) {
        const auto j = json::parse(line);
        CHECK(j.at("id") == "n1");
        texts.push_back(j.at("text"));
    }
    CHECK(texts == std::vector<std::string>{"A", "B", "C"});
}

TEST_CASE("full pipeline: synth, retrieve, train, predict, evaluate") {
    TempDir dir;
    const auto notes = dir.file("notes.jsonl").string();
    const auto model = dir.file("model.json").string();
    const auto preds = dir.file("preds.jsonl").string();
    const auto report = dir.file("report.json").string();

    REQUIRE(mhx_run({"synth", "--seed", "11", "--n", "40", "--out", notes}) == 0);
    REQUIRE(mhx_run({"train", "--notes", notes, "--out", model, "--mode", "mtpbl", "--epochs", "6",
                     "--seed", "3"}) == 0);
    REQUIRE(mhx_run({"predict", "--model", model, "--notes", notes, "--out", preds}) == 0);
    REQUIRE(mhx_run({"evaluate", "--pred", preds, "--gold", notes, "--out", report}) == 0);

    const auto j = json::parse(read_text(report));
    CHECK(j.at("tasks").size() == 5);
    for (const auto& [task, entry] : j.at("tasks").items()) {
        CHECK(entry.at("macro_f1").get<double>() >= 0.0);
        CHECK(entry.at("macro_f1").get<double>() <= 1.0);
    }
    CHECK(j.at("overall_macro_f1").get<double>() > 0.0);
}

TEST_CASE("train/predict honor the truncate mode") {
    TempDir dir;
    const auto notes = dir.file("notes.jsonl").string();
    // Long notes guarantee truncation actually bites.
    REQUIRE(mhx_run({"synth", "--seed", "5", "--n", "8", "--out", notes, "--long-fraction", "1.0"}) == 0);
    const auto loaded = load_notes(notes);
    for (const auto& note : loaded) {
        const auto truncated = truncate_text(note.text);
        CHECK(tokenize(truncated).size() == 512);
        CHECK(tokenize(note.text).size() > 512);
    }

    const auto model = dir.file("model.json").string();
    const auto preds = dir.file("preds.jsonl").string();
    REQUIRE(mhx_run({"train", "--notes", notes, "--out", model, "--epochs", "2", "--retrieval",
                     "truncate"}) == 0);
    REQUIRE(mhx_run({"predict", "--model", model, "--notes", notes, "--out", preds, "--retrieval",
                     "truncate"}) == 0);
    CHECK(load_predictions(preds).size() == loaded.size());
}

TEST_CASE("cv subcommand writes fold reports and a final model") {
    TempDir dir;
    const auto notes = dir.file("notes.jsonl").string();
    const auto report = dir.file("cv.json").string();
    const auto model = dir.file("final.json").string();
    REQUIRE(mhx_run({"synth", "--seed", "13", "--n", "24", "--out", notes}) == 0);
    REQUIRE(mhx_run({"cv", "--notes", notes, "--folds", "3", "--epochs", "3", "--report", report,
                     "--out", model}) == 0);
    const auto j = json::parse(read_text(report));
    CHECK(j.at("folds").size() == 3);
    CHECK(j.at("mean_macro_f1").size() == 5);
    CHECK(json::parse(read_text(model)).at("format_version") == 1);
}

TEST_CASE("exit codes: usage 1, validation 1, missing input 2") {
    TempDir dir;
    CHECK(mhx_run({"no-such-subcommand"}) == 1);
    CHECK(mhx_run({}) == 1);
    CHECK(mhx_run({"synth", "--seed", "1", "--n", "5", "--out", dir.file("x.jsonl").string(),
                   "--unknown-flag"}) == 1);
    CHECK(mhx_run({"--version"}) == 0);
    CHECK(mhx_run({"stats", "--notes", dir.file("absent.jsonl").string()}) == 2);
    // Validation failure inside a file -> 1.
    mhx::testing::write_text(dir.file("bad.jsonl"), R"({"id":"a","text":"x","labels":{"flow":"huge"}})"
                                                    "\n");
    CHECK(mhx_run({"stats", "--notes", dir.file("bad.jsonl").string()}) == 1);
    // Remote failure -> 2.
    mhx::testing::write_text(dir.file("one.jsonl"), R"({"id":"a","text":"x y  z"})"
                                                    "\n");
    CHECK(mhx_run({"retrieve", "--notes", dir.file("one.jsonl").string(), "--out",
                   dir.file("r.jsonl").string(), "--provider", "http", "--embed-url",
                   "http://127.0.0.1:1"}) == 2);
    CHECK(mhx_run({"retrieve", "--notes", dir.file("one.jsonl").string(), "--out",
                   dir.file("r.jsonl").string(), "--provider", "bogus"}) == 1);
}

TEST_CASE("config file values apply with flag precedence") {
    TempDir dir;
    const auto notes = dir.file("notes.jsonl").string();
    REQUIRE(mhx_run({"synth", "--seed", "3", "--n", "6", "--out", notes}) == 0);

    const auto config = dir.file("config.json").string();
    mhx::testing::write_text(config, R"({"retrieval":{"k":2},"train":{"epochs":1}})");

    // k=2 from the config restricts output segments.
    const auto retrieved = dir.file("r.jsonl").string();
    REQUIRE(mhx_run({"retrieve", "--config", config, "--notes", notes, "--out", retrieved}) == 0);
    std::istringstream lines(read_text(retrieved));
    std::string line;
    while (std::getline(lines, line)) {
        CHECK(json::parse(line).at("segments").size() <= 2);
    }

    // The flag overrides the config.
    REQUIRE(mhx_run({"retrieve", "--config", config, "--notes", notes, "--out", retrieved, "--k",
                     "4"}) == 0);
    std::size_t max_segments = 0;
    std::istringstream lines2(read_text(retrieved));
    while (std::getline(lines2, line)) {
        max_segments = std::max(max_segments, json::parse(line).at("segments").size());
    }
    CHECK(max_segments > 2);

    // Unknown config keys are rejected.
    mhx::testing::write_text(config, R"({"retrieval":{"kay":2}})");
    CHECK(mhx_run({"retrieve", "--config", config, "--notes", notes, "--out", retrieved}) == 1);
}

TEST_CASE("icl subcommand runs against the mock generative service") {
    TempDir dir;
    const auto notes = dir.file("notes.jsonl").string();
    mhx::testing::write_text(notes, R"({"id":"n1","text":"menses are regular"})"
                                    "\n"
                                    R"({"id":"n2","text":"heavy menstrual flow"})"
                                    "\n");
    mhx::testing::MockServer server(
        "/generate", mhx::testing::fixed_generate_handler(
                         "dysmenorrhea: unknown\ndysmenorrhea severity: unknown\n"
                         "regularity: regular\nflow: abundant\nintermenstrual bleeding: unknown"));
    const auto out = dir.file("icl.jsonl").string();
    REQUIRE(mhx_run({"icl", "--url", server.url(), "--notes", notes, "--out", out}) == 0);
    const auto preds = load_predictions(out);
    REQUIRE(preds.size() == 2);
    CHECK(preds[0].predictions.at(TaskId::regularity) == "regular");
    CHECK(preds[1].predictions.at(TaskId::flow) == "abundant");

    // Unreachable service is a remote failure.
    CHECK(mhx_run({"icl", "--url", "http://127.0.0.1:1", "--notes", notes, "--out", out}) == 2);
    // No URL anywhere is a usage error.
    CHECK(mhx_run({"icl", "--notes", notes, "--out", out}) == 1);
}

TEST_CASE("evaluate renders a delta table against a baseline report") {
    TempDir dir;
    const auto notes = dir.file("notes.jsonl").string();
    const auto model = dir.file("model.json").string();
    const auto preds = dir.file("preds.jsonl").string();
    const auto report_a = dir.file("a.json").string();
    const auto csv = dir.file("bars.csv").string();
    REQUIRE(mhx_run({"synth", "--seed", "21", "--n", "30", "--out", notes}) == 0);
    REQUIRE(mhx_run({"train", "--notes", notes, "--out", model, "--epochs", "4"}) == 0);
    REQUIRE(mhx_run({"predict", "--model", model, "--notes", notes, "--out", preds}) == 0);
    REQUIRE(mhx_run({"evaluate", "--pred", preds, "--gold", notes, "--out", report_a, "--csv", csv}) ==
            0);
    REQUIRE(
        mhx_run({"evaluate", "--pred", preds, "--gold", notes, "--baseline", report_a}) == 0);

    const auto csv_text = read_text(csv);
    CHECK(csv_text.find("task,macro_f1") == 0);
    CHECK(csv_text.find("overall,") != std::string::npos);
}

TEST_CASE("a custom tasks config flows through train and predict") {
    TempDir dir;
    const auto notes = dir.file("notes.jsonl").string();
    const auto tasks = dir.file("tasks.json").string();
    const auto model = dir.file("model.json").string();
    const auto preds = dir.file("preds.jsonl").string();
    REQUIRE(mhx_run({"synth", "--seed", "31", "--n", "20", "--out", notes}) == 0);

    // Same five tasks, but the flow trigger is customized.
    auto specs = default_task_specs();
    for (auto& spec : specs) {
        if (spec.task == TaskId::flow) spec.template_trigger = "menstrual flow volume: [MASK]";
    }
    save_task_specs(tasks, specs);

    REQUIRE(mhx_run({"train", "--notes", notes, "--out", model, "--epochs", "3", "--tasks", tasks}) ==
            0);
    REQUIRE(mhx_run({"predict", "--model", model, "--notes", notes, "--out", preds, "--tasks",
                     tasks}) == 0);
    CHECK(load_predictions(preds).size() == 20);

    // A config with a label set drift is rejected up front.
    mhx::testing::write_text(tasks,
                             R"([{"task":"flow","labels":["light","unknown"],
                                  "template_trigger":"flow: [MASK]",
                                  "verbalizer":{"light":["light"],"unknown":["unknown"]}}])");
    CHECK(mhx_run({"train", "--notes", notes, "--out", model, "--epochs", "3", "--tasks", tasks}) ==
          1);
}

TEST_CASE("stats emits a histogram CSV") {
    TempDir dir;
    const auto notes = dir.file("notes.jsonl").string();
    const auto csv = dir.file("hist.csv").string();
    REQUIRE(mhx_run({"synth", "--seed", "2", "--n", "15", "--out", notes}) == 0);
    REQUIRE(mhx_run({"stats", "--notes", notes, "--out", dir.file("s.json").string(), "--csv", csv}) ==
            0);
    const auto text = read_text(csv);
    CHECK(text.find("bucket_lo,bucket_hi,count") == 0);
    CHECK(text.find("inf") != std::string::npos);
}
