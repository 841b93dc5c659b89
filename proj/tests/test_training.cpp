#include <doctest.h>

#include <cmath>
#include <set>

#include "mhx/embedding.hpp"
#include "mhx/errors.hpp"
#include "mhx/random.hpp"
#include "mhx/training.hpp"
#include "support.hpp"

using namespace mhx;
using mhx::testing::TempDir;

namespace {

const std::vector<TaskSpec>& specs() { return default_task_specs(); }

PromptInstance labeled(TaskId task, const std::string& text, const std::string& gold) {
    return build_prompt("n", text, spec_for(specs(), task), gold);
}

MaskFillModel model_over(const std::vector<std::string>& texts) {
    return MaskFillModel(Vocabulary::build(texts, specs()));
}

/// Small separable two-task dataset: distinct cue tokens per label.
std::map<TaskId, std::vector<PromptInstance>> toy_multitask_data() {
    std::map<TaskId, std::vector<PromptInstance>> data;
    data[TaskId::regularity] = {
        labeled(TaskId::regularity, "menses are regular", "regular"),
        labeled(TaskId::regularity, "cycle is predictable", "regular"),
        labeled(TaskId::regularity, "skips menses frequently", "irregular"),
        labeled(TaskId::regularity, "cycle varies widely", "irregular"),
        labeled(TaskId::regularity, "routine exam today", "unknown"),
    };
    data[TaskId::flow] = {
        labeled(TaskId::flow, "very light menstrual flow", "scanty"),
        labeled(TaskId::flow, "flow is typical", "normal"),
        labeled(TaskId::flow, "heavy soaking flow", "abundant"),
        labeled(TaskId::flow, "routine exam today", "unknown"),
    };
    data[TaskId::dysmenorrhea] = {
        labeled(TaskId::dysmenorrhea, "painful cramping reported", "yes"),
        labeled(TaskId::dysmenorrhea, "denies cramping", "no"),
        labeled(TaskId::dysmenorrhea, "routine exam today", "unknown"),
    };
    return data;
}

std::vector<std::string> toy_texts() {
    return {"menses are regular",      "cycle is predictable", "skips menses frequently",
            "cycle varies widely",     "routine exam today",   "very light menstrual flow",
            "flow is typical",         "heavy soaking flow",   "painful cramping reported",
            "denies cramping"};
}

} // namespace

TEST_CASE("single-task training drives a separable instance to near-zero loss") {
    const auto note = generate_synthetic(1, 1).front();
    auto model = model_over({note.text});
    TrainConfig cfg;
    cfg.mode = TrainMode::single_task;
    cfg.task = TaskId::dysmenorrhea;
    cfg.epochs = 50;
    const auto data = std::vector<PromptInstance>{
        labeled(TaskId::dysmenorrhea, note.text, note.labels.at(TaskId::dysmenorrhea))};
    const auto result = train_single_task(model, data, specs(), cfg);
    REQUIRE(result.epoch_loss.size() == 50);
    CHECK(result.epoch_loss.back() < 0.05);
    CHECK(predict(model, data[0], spec_for(specs(), TaskId::dysmenorrhea)).first ==
          note.labels.at(TaskId::dysmenorrhea));
}

TEST_CASE("zero learning-rate training is a no-op") {
    auto model = model_over(toy_texts());
    const Matrix before = model.weights();
    TrainConfig cfg;
    cfg.mode = TrainMode::single_task;
    cfg.task = TaskId::regularity;
    cfg.learning_rate = 1e-300;  // an exact 0 is rejected by validation
    cfg.epochs = 5;
    const auto data = toy_multitask_data().at(TaskId::regularity);
    const auto result = train_single_task(model, data, specs(), cfg);
    for (std::size_t i = 0; i + 1 < result.epoch_loss.size(); ++i) {
        CHECK(result.epoch_loss[i] == doctest::Approx(result.epoch_loss[i + 1]).epsilon(1e-12));
    }
    double max_change = 0.0;
    for (std::size_t i = 0; i < before.data().size(); ++i) {
        max_change = std::max(max_change, std::abs(before.data()[i] - model.weights().data()[i]));
    }
    CHECK(max_change <= 1e-290);

    TrainConfig zero = cfg;
    zero.learning_rate = 0.0;
    CHECK_THROWS_AS(zero.validate(), ValidationError);
}

TEST_CASE("training is bit-deterministic given the seed") {
    const auto data = toy_multitask_data();
    TrainConfig cfg;
    cfg.seed = 99;
    cfg.epochs = 6;
    cfg.batch_size = 2;

    auto m1 = model_over(toy_texts());
    auto m2 = model_over(toy_texts());
    train_multi_task(m1, data, specs(), cfg);
    train_multi_task(m2, data, specs(), cfg);
    CHECK(m1.weights() == m2.weights());

    cfg.mode = TrainMode::single_task;
    cfg.task = TaskId::flow;
    auto s1 = model_over(toy_texts());
    auto s2 = model_over(toy_texts());
    train_single_task(s1, data.at(TaskId::flow), specs(), cfg);
    train_single_task(s2, data.at(TaskId::flow), specs(), cfg);
    CHECK(s1.weights() == s2.weights());

    // A different seed changes the trajectory.
    TrainConfig other = cfg;
    other.seed = 100;
    auto s3 = model_over(toy_texts());
    train_single_task(s3, data.at(TaskId::flow), specs(), other);
    CHECK(s3.weights() != s1.weights());
}

TEST_CASE("full-batch loss is non-increasing on a separable fixture") {
    auto model = model_over(toy_texts());
    TrainConfig cfg;
    cfg.mode = TrainMode::single_task;
    cfg.task = TaskId::regularity;
    cfg.batch_size = 64;      // full batch
    cfg.learning_rate = 1.0;  // descent regime: monotone decrease needs a modest step
    cfg.epochs = 40;
    const auto result = train_single_task(model, toy_multitask_data().at(TaskId::regularity), specs(), cfg);
    for (std::size_t i = 0; i + 1 < result.epoch_loss.size(); ++i) {
        CHECK(result.epoch_loss[i + 1] <= result.epoch_loss[i] + 1e-9);
    }
}

TEST_CASE("single-task training rejects empty and mixed-task data") {
    auto model = model_over(toy_texts());
    TrainConfig cfg;
    cfg.mode = TrainMode::single_task;
    cfg.task = TaskId::flow;
    CHECK_THROWS_AS(train_single_task(model, {}, specs(), cfg), ValidationError);
    std::vector<PromptInstance> mixed = {labeled(TaskId::flow, "x", "normal"),
                                         labeled(TaskId::regularity, "x", "regular")};
    CHECK_THROWS_AS(train_single_task(model, mixed, specs(), cfg), ValidationError);
}

TEST_CASE("multi-task step reports: total equals the mean of per-task losses") {
    auto model = model_over(toy_texts());
    TrainConfig cfg;
    cfg.epochs = 4;
    cfg.batch_size = 2;
    const auto data = toy_multitask_data();
    const auto result = train_multi_task(model, data, specs(), cfg);

    // steps per epoch follow the largest task (5 instances, batch 2 -> 3).
    CHECK(result.steps_per_epoch == 3);
    REQUIRE(result.steps.size() == 12);

    for (const auto& step : result.steps) {
        REQUIRE(step.task_loss.size() == data.size());
        double mean = 0.0;
        for (const auto& [task, loss] : step.task_loss) mean += loss;
        mean /= static_cast<double>(step.task_loss.size());
        CHECK(std::abs(step.total_loss - mean) <= 1e-12);

        // The visit order is a permutation of the participating tasks.
        std::set<TaskId> visited(step.task_order.begin(), step.task_order.end());
        CHECK(visited.size() == data.size());
    }
}

TEST_CASE("full-batch multi-task training is invariant to the task visit order") {
    const auto data = toy_multitask_data();
    TrainConfig cfg;
    cfg.epochs = 8;
    cfg.batch_size = 16;  // >= every task size
    cfg.seed = 7;

    std::vector<Matrix> finals;
    for (std::uint64_t order_seed : {11ULL, 222ULL, 3333ULL, 44444ULL}) {
        auto model = model_over(toy_texts());
        TrainConfig c = cfg;
        c.task_order_seed = order_seed;
        const auto result = train_multi_task(model, data, specs(), c);
        finals.push_back(model.weights());
        // Orders genuinely differ across seeds somewhere.
        (void)result;
    }
    for (std::size_t i = 1; i < finals.size(); ++i) {
        double max_diff = 0.0;
        for (std::size_t j = 0; j < finals[0].data().size(); ++j) {
            max_diff = std::max(max_diff, std::abs(finals[i].data()[j] - finals[0].data()[j]));
        }
        CHECK(max_diff <= 1e-9);
    }
}

TEST_CASE("with small batches the visit order shuffles across steps") {
    auto model = model_over(toy_texts());
    TrainConfig cfg;
    cfg.epochs = 10;
    cfg.batch_size = 2;
    const auto result = train_multi_task(model, toy_multitask_data(), specs(), cfg);
    std::set<std::vector<TaskId>> orders;
    for (const auto& step : result.steps) orders.insert(step.task_order);
    CHECK(orders.size() > 1);
}

TEST_CASE("multi-task training names an empty task") {
    auto model = model_over(toy_texts());
    auto data = toy_multitask_data();
    data[TaskId::intermenstrual_bleeding] = {};
    TrainConfig cfg;
    CHECK_THROWS_WITH_AS(train_multi_task(model, data, specs(), cfg),
                         doctest::Contains("intermenstrual_bleeding"), ValidationError);

    std::map<TaskId, std::vector<PromptInstance>> single;
    single[TaskId::flow] = toy_multitask_data().at(TaskId::flow);
    CHECK_THROWS_WITH_AS(train_multi_task(model, single, specs(), cfg),
                         doctest::Contains("two tasks"), ValidationError);
}

TEST_CASE("direct classifier: zero weights give a uniform distribution") {
    DirectClassifier clf(TaskId::flow, Vocabulary::build(toy_texts(), specs()));
    const auto [label, dist] = clf.predict_text("anything at all");
    REQUIRE(dist.probs.size() == 4);
    for (double p : dist.probs) CHECK(p == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(label == "scanty");  // first label wins the four-way tie
}

TEST_CASE("direct classifier learns separable data") {
    std::vector<DirectExample> data;
    ClinicalNote note;
    const std::vector<std::pair<std::string, std::string>> rows = {
        {"very light menstrual flow", "scanty"},   {"flow is typical today", "normal"},
        {"heavy soaking flow with clots", "abundant"}, {"routine exam only", "unknown"},
        {"light spotting flow", "scanty"},         {"typical monthly flow", "normal"},
    };
    for (std::size_t i = 0; i < rows.size(); ++i) {
        note.id = "d" + std::to_string(i);
        note.text = rows[i].first;
        note.labels[TaskId::flow] = rows[i].second;
        data.push_back(make_direct_example(note, note.text, TaskId::flow));
    }
    DirectClassifier clf(TaskId::flow, Vocabulary::build(toy_texts(), specs()));
    TrainConfig cfg;
    cfg.mode = TrainMode::direct;
    cfg.task = TaskId::flow;
    const auto result = train_direct(clf, data, cfg);
    REQUIRE(result.epoch_loss.size() == cfg.epochs);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        correct += clf.predict_text(rows[i].first).first == rows[i].second;
    }
    CHECK(static_cast<double>(correct) / rows.size() >= 0.95);

    // Deterministic under a fixed seed.
    DirectClassifier clf2(TaskId::flow, Vocabulary::build(toy_texts(), specs()));
    train_direct(clf2, data, cfg);
    CHECK(clf.weights() == clf2.weights());
}

TEST_CASE("direct classifier checkpoints round trip") {
    TempDir dir;
    DirectClassifier clf(TaskId::regularity, Vocabulary::build(toy_texts(), specs()));
    clf.weights()(1, 2) = 0.75;
    save_direct(dir.file("direct.json"), clf);
    const auto back = load_direct(dir.file("direct.json"));
    CHECK(back.task() == TaskId::regularity);
    CHECK(back.weights() == clf.weights());
    CHECK(back.vocabulary().tokens() == clf.vocabulary().tokens());

    // The mask-fill loader refuses a direct checkpoint.
    CHECK_THROWS_WITH_AS(load_model(dir.file("direct.json")), doctest::Contains("not a mask-fill"),
                         ValidationError);
}

TEST_CASE("kfold_split spreads 91 notes as 31/30/30") {
    std::vector<ClinicalNote> notes(91);
    for (std::size_t i = 0; i < notes.size(); ++i) notes[i].id = "n" + std::to_string(i);
    const auto plan = kfold_split(notes, 3, 5);
    REQUIRE(plan.folds.size() == 3);
    CHECK(plan.folds[0].size() == 31);
    CHECK(plan.folds[1].size() == 30);
    CHECK(plan.folds[2].size() == 30);
    // Training sizes are the complements: 60, 61, 61.
    CHECK(notes.size() - plan.folds[0].size() == 60);
    CHECK(notes.size() - plan.folds[1].size() == 61);
    CHECK(notes.size() - plan.folds[2].size() == 61);
}

TEST_CASE("kfold_split properties") {
    std::vector<ClinicalNote> six(6);
    for (std::size_t i = 0; i < six.size(); ++i) six[i].id = "n" + std::to_string(i);
    const auto plan = kfold_split(six, 3, 1);
    for (const auto& fold : plan.folds) CHECK(fold.size() == 2);

    CHECK(kfold_split(six, 3, 8).folds == kfold_split(six, 3, 8).folds);
    CHECK(kfold_split(six, 3, 8).folds != kfold_split(six, 3, 9).folds);

    std::set<std::string> seen;
    std::size_t lo = SIZE_MAX, hi = 0;
    for (const auto& fold : kfold_split(six, 2, 3).folds) {
        lo = std::min(lo, fold.size());
        hi = std::max(hi, fold.size());
        for (const auto& id : fold) CHECK(seen.insert(id).second);
    }
    CHECK(seen.size() == six.size());
    CHECK(hi - lo <= 1);

    CHECK_THROWS_AS(kfold_split(six, 7, 0), ValidationError);
    CHECK_THROWS_AS(kfold_split(six, 1, 0), ValidationError);
}

TEST_CASE("cross-validated retrieval beats truncation on distractor-prefixed notes") {
    SynthProfile profile = SynthProfile::defaults();
    profile.distractor_prefix_tokens = 520;
    const auto notes = generate_synthetic(77, 36, profile);
    HashedTrigramProvider provider;
    CvConfig cfg;
    cfg.folds = 3;
    cfg.train.epochs = 600;
    cfg.train.seed = 1;
    cfg.input_mode = InputMode::retrieval;
    const auto with_retrieval = run_cv(notes, cfg, specs(), provider);
    cfg.input_mode = InputMode::truncate;
    const auto with_truncation = run_cv(notes, cfg, specs(), provider);
    CHECK(with_retrieval.overall_mean - with_truncation.overall_mean >= 0.05);
}

TEST_CASE("run_cv validates its config and produces one report per fold") {
    const auto notes = generate_synthetic(2718, 30);
    HashedTrigramProvider provider;
    CvConfig cfg;
    cfg.folds = 3;
    cfg.train.epochs = 3;
    cfg.train.seed = 4;
    cfg.input_mode = InputMode::retrieval;

    SUBCASE("zero epochs are rejected before any work") {
        cfg.train.epochs = 0;
        CHECK_THROWS_AS(run_cv(notes, cfg, specs(), provider), ValidationError);
    }

    SUBCASE("three folds, final model afterwards") {
        const auto result = run_cv(notes, cfg, specs(), provider);
        CHECK(result.fold_reports.size() == 3);
        CHECK(result.final_model.has_value());
        CHECK_FALSE(result.final_direct.has_value());
        CHECK(result.mean_macro_f1.size() == kTaskCount);
        for (const auto& [task, f1] : result.mean_macro_f1) {
            CHECK(f1 >= 0.0);
            CHECK(f1 <= 1.0);
        }
    }

    SUBCASE("direct mode emits a direct final model") {
        cfg.train.mode = TrainMode::direct;
        cfg.train.task = TaskId::regularity;
        const auto result = run_cv(notes, cfg, specs(), provider);
        CHECK(result.final_direct.has_value());
        CHECK_FALSE(result.final_model.has_value());
        for (const auto& report : result.fold_reports) {
            CHECK(report.tasks.at(TaskId::regularity).has_support);
            // Only the trained task carries predictions.
            CHECK_FALSE(report.tasks.at(TaskId::flow).has_support);
        }
    }

    SUBCASE("single-task mode evaluates only its task") {
        cfg.train.mode = TrainMode::single_task;
        cfg.train.task = TaskId::flow;
        const auto result = run_cv(notes, cfg, specs(), provider);
        for (const auto& report : result.fold_reports) {
            CHECK(report.tasks.at(TaskId::flow).has_support);
            CHECK_FALSE(report.tasks.at(TaskId::regularity).has_support);
        }
    }
}
