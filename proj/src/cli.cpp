#include "mhx/cli.hpp"

#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "mhx/corpus.hpp"
#include "mhx/errors.hpp"
#include "mhx/evaluation.hpp"
#include "mhx/icl.hpp"
#include "mhx/model.hpp"
#include "mhx/pipeline.hpp"
#include "mhx/prompting.hpp"
#include "mhx/retrieval.hpp"
#include "mhx/segmenter.hpp"
#include "mhx/tokenizer.hpp"
#include "mhx/training.hpp"
#include "mhx/version.hpp"

using nlohmann::json;

namespace mhx::cli {

namespace {

// ---------------------------------------------------------------------------
// Config file: one JSON document, strict keys, flag > config > default.
// ---------------------------------------------------------------------------

struct AppConfig {
    RetrievalConfig retrieval;
    std::string provider = "hash";
    std::string embed_url;
    std::size_t embed_dim = 0;  // 0 = provider default / adopt response

    TrainConfig train;
    std::size_t cv_folds = 3;
    std::string tasks_path;
    std::string icl_url;
    std::string icl_shots;
};

void reject_unknown_keys(const json& obj, std::initializer_list<const char*> allowed,
                         const std::string& where) {
    for (const auto& [key, value] : obj.items()) {
        bool ok = false;
        for (const char* a : allowed) {
            if (key == a) {
                ok = true;
                break;
            }
        }
        if (!ok) {
            throw ValidationError("config: unknown key '" + key + "' in " + where);
        }
    }
}

AppConfig load_config(const std::string& path) {
    AppConfig cfg;
    if (path.empty()) return cfg;
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open config file: " + path);
    }
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw ValidationError("config " + path + ": " + e.what());
    }
    reject_unknown_keys(j, {"retrieval", "train", "cv", "tasks", "icl"}, "top level");
    if (j.contains("retrieval")) {
        const auto& r = j["retrieval"];
        reject_unknown_keys(r, {"query", "k", "alpha", "k1", "b", "provider", "embed_url", "embed_dim"},
                            "retrieval");
        if (r.contains("query")) cfg.retrieval.query = r["query"].get<std::string>();
        if (r.contains("k")) cfg.retrieval.k = r["k"].get<std::size_t>();
        if (r.contains("alpha")) cfg.retrieval.alpha = r["alpha"].get<double>();
        if (r.contains("k1")) cfg.retrieval.k1 = r["k1"].get<double>();
        if (r.contains("b")) cfg.retrieval.b = r["b"].get<double>();
        if (r.contains("provider")) cfg.provider = r["provider"].get<std::string>();
        if (r.contains("embed_url")) cfg.embed_url = r["embed_url"].get<std::string>();
        if (r.contains("embed_dim")) cfg.embed_dim = r["embed_dim"].get<std::size_t>();
    }
    if (j.contains("train")) {
        const auto& t = j["train"];
        reject_unknown_keys(t, {"lr", "batch_size", "epochs", "seed", "mode"}, "train");
        if (t.contains("lr")) cfg.train.learning_rate = t["lr"].get<double>();
        if (t.contains("batch_size")) cfg.train.batch_size = t["batch_size"].get<std::size_t>();
        if (t.contains("epochs")) cfg.train.epochs = t["epochs"].get<std::size_t>();
        if (t.contains("seed")) cfg.train.seed = t["seed"].get<std::uint64_t>();
        if (t.contains("mode")) cfg.train.mode = parse_train_mode(t["mode"].get<std::string>());
    }
    if (j.contains("cv")) {
        reject_unknown_keys(j["cv"], {"folds"}, "cv");
        if (j["cv"].contains("folds")) cfg.cv_folds = j["cv"]["folds"].get<std::size_t>();
    }
    if (j.contains("tasks")) {
        reject_unknown_keys(j["tasks"], {"path"}, "tasks");
        if (j["tasks"].contains("path")) cfg.tasks_path = j["tasks"]["path"].get<std::string>();
    }
    if (j.contains("icl")) {
        reject_unknown_keys(j["icl"], {"url", "shots"}, "icl");
        if (j["icl"].contains("url")) cfg.icl_url = j["icl"]["url"].get<std::string>();
        if (j["icl"].contains("shots")) cfg.icl_shots = j["icl"]["shots"].get<std::string>();
    }
    return cfg;
}

void log_setting(const std::string& name, const std::string& value, const std::string& source) {
    std::cerr << "mhx: " << name << " = " << value << " (" << source << ")\n";
}

/// Resolution order is flag > config > default; `flag_set` comes from the
/// parsed CLI option, `config_differs` from comparing against the defaults.
std::string source_of(bool flag_set, bool config_differs) {
    if (flag_set) return "flag";
    if (config_differs) return "config";
    return "default";
}

std::vector<TaskSpec> resolve_specs(const std::string& tasks_path) {
    return tasks_path.empty() ? default_task_specs() : load_task_specs(tasks_path);
}

// ---------------------------------------------------------------------------
// Shared option bundles
// ---------------------------------------------------------------------------

struct RetrievalFlags {
    CLI::Option* k = nullptr;
    CLI::Option* alpha = nullptr;
    CLI::Option* query = nullptr;
    CLI::Option* k1 = nullptr;
    CLI::Option* b = nullptr;
    CLI::Option* provider = nullptr;
    CLI::Option* embed_url = nullptr;
    CLI::Option* embed_dim = nullptr;

    std::size_t k_v = 10;
    double alpha_v = 0.5;
    std::string query_v{kDefaultRetrievalQuery};
    double k1_v = 1.2;
    double b_v = 0.75;
    std::string provider_v = "hash";
    std::string embed_url_v;
    std::size_t embed_dim_v = 0;

    void add(CLI::App* cmd) {
        k = cmd->add_option("--k", k_v, "number of segments to retrieve");
        alpha = cmd->add_option("--alpha", alpha_v, "lexical weight in the score fusion [0,1]");
        query = cmd->add_option("--query", query_v, "retrieval query");
        k1 = cmd->add_option("--k1", k1_v, "BM25 term-saturation parameter");
        b = cmd->add_option("--b", b_v, "BM25 length-normalization parameter");
        provider = cmd->add_option("--provider", provider_v, "embedding provider: hash or http");
        embed_url = cmd->add_option("--embed-url", embed_url_v, "embedding service base URL");
        embed_dim = cmd->add_option("--embed-dim", embed_dim_v, "embedding dimension");
    }

    RetrievalConfig resolve(const AppConfig& file_cfg, std::string& provider_out, std::string& url_out,
                            std::size_t& dim_out, bool log) const {
        const AppConfig defaults;
        RetrievalConfig out = file_cfg.retrieval;
        if (k->count()) out.k = k_v;
        if (alpha->count()) out.alpha = alpha_v;
        if (query->count()) out.query = query_v;
        if (k1->count()) out.k1 = k1_v;
        if (b->count()) out.b = b_v;
        provider_out = provider->count() ? provider_v : file_cfg.provider;
        url_out = embed_url->count() ? embed_url_v : file_cfg.embed_url;
        dim_out = embed_dim->count() ? embed_dim_v : file_cfg.embed_dim;
        out.validate();
        if (log) {
            log_setting("retrieval.k", std::to_string(out.k),
                        source_of(k->count() > 0, file_cfg.retrieval.k != defaults.retrieval.k));
            log_setting("retrieval.alpha", std::to_string(out.alpha),
                        source_of(alpha->count() > 0,
                                  file_cfg.retrieval.alpha != defaults.retrieval.alpha));
            log_setting("retrieval.provider", provider_out,
                        source_of(provider->count() > 0, file_cfg.provider != defaults.provider));
        }
        return out;
    }
};

struct TrainFlags {
    CLI::Option* mode = nullptr;
    CLI::Option* task = nullptr;
    CLI::Option* lr = nullptr;
    CLI::Option* batch = nullptr;
    CLI::Option* epochs = nullptr;
    CLI::Option* seed = nullptr;

    std::string mode_v = "mtpbl";
    std::string task_v;
    double lr_v = 200.0;
    std::size_t batch_v = 50;
    std::size_t epochs_v = 8000;
    std::uint64_t seed_v = 0;

    void add(CLI::App* cmd) {
        mode = cmd->add_option("--mode", mode_v, "training mode: pbl, mtpbl, or direct");
        task = cmd->add_option("--task", task_v, "task for pbl/direct modes");
        lr = cmd->add_option("--lr", lr_v, "learning rate");
        batch = cmd->add_option("--batch-size", batch_v, "mini-batch size");
        epochs = cmd->add_option("--epochs", epochs_v, "training epochs");
        seed = cmd->add_option("--seed", seed_v, "seed for all randomness");
    }

    TrainConfig resolve(const AppConfig& file_cfg, bool log) const {
        const AppConfig defaults;
        TrainConfig out = file_cfg.train;
        if (mode->count()) out.mode = parse_train_mode(mode_v);
        if (lr->count()) out.learning_rate = lr_v;
        if (batch->count()) out.batch_size = batch_v;
        if (epochs->count()) out.epochs = epochs_v;
        if (seed->count()) out.seed = seed_v;
        if (task->count()) {
            const auto t = parse_task(task_v);
            if (!t) {
                throw ValidationError("unknown task '" + task_v + "'");
            }
            out.task = *t;
        }
        out.validate();
        if (log) {
            log_setting("train.mode", train_mode_name(out.mode),
                        source_of(mode->count() > 0, file_cfg.train.mode != defaults.train.mode));
            log_setting("train.lr", std::to_string(out.learning_rate),
                        source_of(lr->count() > 0,
                                  file_cfg.train.learning_rate != defaults.train.learning_rate));
            log_setting("train.epochs", std::to_string(out.epochs),
                        source_of(epochs->count() > 0, file_cfg.train.epochs != defaults.train.epochs));
            log_setting("train.seed", std::to_string(out.seed),
                        source_of(seed->count() > 0, file_cfg.train.seed != defaults.train.seed));
        }
        return out;
    }
};

std::vector<std::string> preprocess_all(const std::vector<ClinicalNote>& notes, InputMode mode,
                                        const RetrievalConfig& rcfg, EmbeddingProvider& provider) {
    std::vector<std::string> texts;
    texts.reserve(notes.size());
    for (const auto& note : notes) texts.push_back(preprocess_text(note, mode, rcfg, provider));
    return texts;
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot write output file: " + path);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

void cmd_synth(std::uint64_t seed, std::size_t n, const std::string& out_path,
               const std::string& profile_path, std::optional<double> long_fraction,
               std::optional<double> conflict_fraction, std::optional<std::size_t> prefix_tokens) {
    SynthProfile profile = SynthProfile::defaults();
    if (!profile_path.empty()) {
        std::ifstream in(profile_path);
        if (!in) {
            throw IoError("cannot open profile: " + profile_path);
        }
        json j;
        try {
            in >> j;
        } catch (const json::parse_error& e) {
            throw ValidationError("profile " + profile_path + ": " + e.what());
        }
        reject_unknown_keys(j,
                            {"label_weights", "long_note_fraction", "narrative_fraction",
                             "conflict_fraction", "distractor_prefix_tokens"},
                            "profile");
        if (j.contains("label_weights")) {
            for (const auto& [name, weights] : j["label_weights"].items()) {
                const auto task = parse_task(name);
                if (!task) {
                    throw ValidationError("profile names unknown task '" + name + "'");
                }
                std::map<std::string, double> w;
                for (const auto& [label, p] : weights.items()) w[label] = p.get<double>();
                profile.label_weights[*task] = std::move(w);
            }
        }
        if (j.contains("long_note_fraction")) profile.long_note_fraction = j["long_note_fraction"];
        if (j.contains("narrative_fraction")) profile.narrative_fraction = j["narrative_fraction"];
        if (j.contains("conflict_fraction")) profile.conflict_fraction = j["conflict_fraction"];
        if (j.contains("distractor_prefix_tokens"))
            profile.distractor_prefix_tokens = j["distractor_prefix_tokens"];
    }
    if (long_fraction) profile.long_note_fraction = *long_fraction;
    if (conflict_fraction) profile.conflict_fraction = *conflict_fraction;
    if (prefix_tokens) profile.distractor_prefix_tokens = *prefix_tokens;
    const auto notes = generate_synthetic(seed, n, profile);
    write_notes(out_path, notes);
    std::cerr << "mhx: wrote " << notes.size() << " synthetic notes to " << out_path << "\n";
}

void cmd_segment(const std::string& notes_path, const std::string& out_path) {
    const auto notes = load_notes(notes_path);
    std::ostream* out = &std::cout;
    std::ofstream file;
    if (!out_path.empty()) {
        file = open_out(out_path);
        out = &file;
    }
    for (const auto& note : notes) {
        for (const auto& seg : segment_note(note.text)) {
            *out << json{{"id", note.id}, {"ordinal", seg.ordinal}, {"text", seg.text}}.dump() << '\n';
        }
    }
}

void cmd_retrieve(const std::string& notes_path, const std::string& out_path,
                  const RetrievalConfig& rcfg, EmbeddingProvider& provider) {
    const auto notes = load_notes(notes_path);
    auto out = open_out(out_path);
    for (const auto& note : notes) {
        const auto result = retrieve(note, rcfg, provider);
        json segments = json::array();
        for (const auto& rs : result.segments) {
            segments.push_back({{"ordinal", rs.segment.ordinal},
                                {"text", rs.segment.text},
                                {"bm25", rs.lexical},
                                {"semantic", rs.semantic},
                                {"fused", rs.fused}});
        }
        out << json{{"id", note.id},
                    {"retrieved_text", result.retrieved_text},
                    {"segments", std::move(segments)},
                    {"tokens_before", result.tokens_before},
                    {"tokens_after", result.tokens_after}}
                   .dump()
            << '\n';
    }
}

void cmd_train(const std::string& notes_path, const std::string& out_path, const TrainConfig& tcfg,
               InputMode mode, const RetrievalConfig& rcfg, EmbeddingProvider& provider,
               const std::vector<TaskSpec>& specs) {
    const auto notes = load_notes(notes_path, /*require_labels=*/true);
    const auto texts = preprocess_all(notes, mode, rcfg, provider);

    if (tcfg.mode == TrainMode::direct) {
        std::vector<DirectExample> examples;
        std::vector<std::string> train_texts;
        for (std::size_t i = 0; i < notes.size(); ++i) {
            if (notes[i].labels.count(*tcfg.task)) {
                examples.push_back(make_direct_example(notes[i], texts[i], *tcfg.task));
                train_texts.push_back(texts[i]);
            }
        }
        DirectClassifier clf(*tcfg.task, Vocabulary::build(train_texts, specs));
        const auto result = train_direct(clf, examples, tcfg);
        save_direct(out_path, clf);
        std::cerr << "mhx: trained direct classifier on " << examples.size() << " examples; final loss "
                  << (result.epoch_loss.empty() ? 0.0 : result.epoch_loss.back()) << "\n";
        return;
    }

    MaskFillModel model(Vocabulary::build(texts, specs));
    auto instances = build_task_instances(notes, texts, specs);
    if (tcfg.mode == TrainMode::single_task) {
        const auto result = train_single_task(model, instances.at(*tcfg.task), specs, tcfg);
        std::cerr << "mhx: trained single-task model; final loss "
                  << (result.epoch_loss.empty() ? 0.0 : result.epoch_loss.back()) << "\n";
    } else {
        const auto result = train_multi_task(model, instances, specs, tcfg);
        std::cerr << "mhx: trained multi-task model over " << result.steps.size() << " steps; final loss "
                  << (result.steps.empty() ? 0.0 : result.steps.back().total_loss) << "\n";
    }
    save_model(out_path, model);
}

void cmd_predict(const std::string& model_path, const std::string& notes_path,
                 const std::string& out_path, InputMode mode, const RetrievalConfig& rcfg,
                 EmbeddingProvider& provider, const std::vector<TaskSpec>& specs) {
    const auto notes = load_notes(notes_path);
    const auto texts = preprocess_all(notes, mode, rcfg, provider);

    std::ifstream peek(model_path);
    if (!peek) {
        throw IoError("cannot open checkpoint: " + model_path);
    }
    json doc;
    try {
        peek >> doc;
    } catch (const json::parse_error& e) {
        throw ValidationError("checkpoint " + model_path + " is corrupt: " + e.what());
    }
    peek.close();

    std::vector<NotePrediction> preds;
    if (doc.value("kind", "mask_fill") == "direct") {
        const auto clf = load_direct(model_path);
        for (std::size_t i = 0; i < notes.size(); ++i) {
            NotePrediction p;
            p.id = notes[i].id;
            auto [label, dist] = clf.predict_text(texts[i]);
            p.predictions[clf.task()] = label;
            for (std::size_t li = 0; li < dist.labels.size(); ++li) {
                p.probabilities[clf.task()][dist.labels[li]] = dist.probs[li];
            }
            preds.push_back(std::move(p));
        }
    } else {
        const auto model = load_model(model_path);
        preds = predict_notes(model, notes, texts, specs);
    }
    write_predictions(out_path, preds);
    std::cerr << "mhx: wrote predictions for " << preds.size() << " notes to " << out_path << "\n";
}

void cmd_evaluate(const std::string& pred_path, const std::string& gold_path,
                  const std::string& out_path, const std::string& baseline_path,
                  const std::string& csv_path) {
    const EvalReport report = evaluate_files(pred_path, gold_path);
    std::cout << render_report_table(report);
    if (!out_path.empty()) {
        auto out = open_out(out_path);
        out << report_to_json(report).dump(2) << '\n';
    }
    if (!csv_path.empty()) {
        auto csv = open_out(csv_path);
        csv << "task,macro_f1\n";
        for (const auto& [task, eval] : report.tasks) {
            csv << task_name(task) << ',' << eval.macro_f1 << '\n';
        }
        csv << "overall," << report.overall_macro_f1 << '\n';
    }
    if (!baseline_path.empty()) {
        std::ifstream in(baseline_path);
        if (!in) {
            throw IoError("cannot open baseline report: " + baseline_path);
        }
        json j;
        in >> j;
        const EvalReport baseline = report_from_json(j);
        std::cout << '\n' << render_delta_table(baseline, report);
    }
}

void cmd_cv(const std::string& notes_path, const std::string& report_path,
            const std::string& model_out, const CvConfig& cfg, const std::vector<TaskSpec>& specs,
            EmbeddingProvider& provider) {
    const auto notes = load_notes(notes_path, /*require_labels=*/true);
    const CvResult result = run_cv(notes, cfg, specs, provider);

    json folds = json::array();
    for (const auto& fold : result.fold_reports) folds.push_back(report_to_json(fold));
    json means = json::object();
    for (const auto& [task, mean] : result.mean_macro_f1) {
        means[std::string(task_name(task))] = mean;
    }
    const json doc{{"folds", std::move(folds)},
                   {"mean_macro_f1", std::move(means)},
                   {"overall_mean", result.overall_mean}};
    if (!report_path.empty()) {
        auto out = open_out(report_path);
        out << doc.dump(2) << '\n';
    }
    std::cout << "cv overall mean macro-F1: " << result.overall_mean << '\n';
    for (const auto& [task, mean] : result.mean_macro_f1) {
        std::cout << "  " << task_display_name(task) << ": " << mean << '\n';
    }
    if (!model_out.empty()) {
        if (result.final_model) {
            save_model(model_out, *result.final_model);
        } else if (result.final_direct) {
            save_direct(model_out, *result.final_direct);
        }
        std::cerr << "mhx: wrote final model to " << model_out << "\n";
    }
}

void cmd_icl(const std::string& url, const std::string& shots_path, const std::string& notes_path,
             const std::string& out_path, int max_tokens) {
    if (url.empty()) {
        throw ValidationError("icl requires --url (or icl.url in the config)");
    }
    const auto examples =
        shots_path.empty() ? default_fewshot_examples() : load_fewshot_examples(shots_path);
    const auto notes = load_notes(notes_path);
    const GenerativeClient client(url, max_tokens);
    std::vector<NotePrediction> preds;
    for (const auto& note : notes) {
        const auto prompt = build_fewshot_prompt(examples, note.text);
        const auto parsed = icl_predict(client, prompt);
        for (const auto& warning : parsed.parse_warnings) {
            std::cerr << "mhx: note " << note.id << ": " << warning << "\n";
        }
        NotePrediction p;
        p.id = note.id;
        p.predictions = parsed.labels;
        preds.push_back(std::move(p));
    }
    write_predictions(out_path, preds);
    std::cerr << "mhx: wrote ICL predictions for " << preds.size() << " notes to " << out_path << "\n";
}

void cmd_stats(const std::string& notes_path, const std::string& out_path,
               const std::string& csv_path) {
    const auto notes = load_notes(notes_path);
    const CorpusStats stats = dataset_stats(notes);
    json labels = json::object();
    for (const auto& [task, counts] : stats.label_counts) {
        labels[std::string(task_name(task))] = counts;
    }
    json histogram = json::array();
    for (const auto& bucket : stats.token_histogram) {
        histogram.push_back({{"lo", bucket.lo},
                             {"hi", bucket.hi == SIZE_MAX ? json() : json(bucket.hi)},
                             {"count", bucket.count}});
    }
    const json doc{{"notes", stats.note_count},
                   {"label_counts", std::move(labels)},
                   {"tokens", {{"min", stats.min_tokens}, {"median", stats.median_tokens},
                               {"max", stats.max_tokens}}},
                   {"token_histogram", std::move(histogram)}};
    if (!out_path.empty()) {
        auto out = open_out(out_path);
        out << doc.dump(2) << '\n';
    } else {
        std::cout << doc.dump(2) << '\n';
    }
    if (!csv_path.empty()) {
        auto csv = open_out(csv_path);
        csv << "bucket_lo,bucket_hi,count\n";
        for (const auto& bucket : stats.token_histogram) {
            csv << bucket.lo << ',';
            if (bucket.hi == SIZE_MAX) {
                csv << "inf";
            } else {
                csv << bucket.hi;
            }
            csv << ',' << bucket.count << '\n';
        }
    }
}

} // namespace

int run(std::vector<std::string> args) {
    CLI::App app{"menstrual health attribute extraction toolkit"};
    app.require_subcommand(1);
    app.fallthrough(true);  // --config may follow the subcommand name
    app.set_version_flag("--version", std::string("mhx ") + kToolkitVersion + " (checkpoint format " +
                                          std::to_string(kCheckpointFormatVersion) + ")");
    std::string config_path;
    app.add_option("--config", config_path, "JSON config file; flags take precedence");

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic labeled corpus");
    std::uint64_t synth_seed = 42;
    std::size_t synth_n = 100;
    std::string synth_out, synth_profile;
    double synth_long = 0.0, synth_conflict = 0.0;
    std::size_t synth_prefix = 0;
    synth->add_option("--seed", synth_seed, "generator seed");
    synth->add_option("--n", synth_n, "number of notes");
    synth->add_option("--out", synth_out, "output notes.jsonl")->required();
    synth->add_option("--profile", synth_profile, "JSON profile overriding label distributions");
    auto* opt_long = synth->add_option("--long-fraction", synth_long, "fraction of notes over 512 tokens");
    auto* opt_conflict =
        synth->add_option("--conflict-fraction", synth_conflict, "fraction with contradictory mentions");
    auto* opt_prefix =
        synth->add_option("--prefix-tokens", synth_prefix, "distractor tokens before any mention");

    // segment
    auto* segment = app.add_subcommand("segment", "split notes at double-space runs");
    std::string seg_notes, seg_out;
    segment->add_option("--notes", seg_notes, "input notes.jsonl")->required();
    segment->add_option("--out", seg_out, "output segments.jsonl (default stdout)");

    // retrieve
    auto* retrieve_cmd = app.add_subcommand("retrieve", "rank and keep the top-k segments per note");
    std::string ret_notes, ret_out;
    retrieve_cmd->add_option("--notes", ret_notes, "input notes.jsonl")->required();
    retrieve_cmd->add_option("--out", ret_out, "output retrieved.jsonl")->required();
    RetrievalFlags ret_flags;
    ret_flags.add(retrieve_cmd);

    // train
    auto* train = app.add_subcommand("train", "train a scorer on labeled notes");
    std::string train_notes, train_out, train_retrieval = "on";
    std::string train_tasks;
    train->add_option("--notes", train_notes, "labeled notes.jsonl")->required();
    train->add_option("--out", train_out, "output checkpoint")->required();
    auto* train_ret_opt =
        train->add_option("--retrieval", train_retrieval, "input mode: on, off, or truncate");
    train->add_option("--tasks", train_tasks, "tasks config JSON");
    TrainFlags train_flags;
    train_flags.add(train);
    RetrievalFlags train_rflags;
    train_rflags.add(train);

    // predict
    auto* predict_cmd = app.add_subcommand("predict", "label notes with a trained checkpoint");
    std::string pred_model, pred_notes, pred_out, pred_retrieval = "on", pred_tasks;
    predict_cmd->add_option("--model", pred_model, "checkpoint path")->required();
    predict_cmd->add_option("--notes", pred_notes, "input notes.jsonl")->required();
    predict_cmd->add_option("--out", pred_out, "output predictions.jsonl")->required();
    predict_cmd->add_option("--retrieval", pred_retrieval, "input mode: on, off, or truncate");
    predict_cmd->add_option("--tasks", pred_tasks, "tasks config JSON");
    RetrievalFlags pred_rflags;
    pred_rflags.add(predict_cmd);

    // evaluate
    auto* evaluate_cmd = app.add_subcommand("evaluate", "score predictions against gold labels");
    std::string eval_pred, eval_gold, eval_out, eval_baseline, eval_csv;
    evaluate_cmd->add_option("--pred", eval_pred, "predictions.jsonl")->required();
    evaluate_cmd->add_option("--gold", eval_gold, "gold notes.jsonl")->required();
    evaluate_cmd->add_option("--out", eval_out, "report JSON output");
    evaluate_cmd->add_option("--baseline", eval_baseline, "prior report JSON for a delta table");
    evaluate_cmd->add_option("--csv", eval_csv, "per-task macro-F1 CSV output");

    // cv
    auto* cv = app.add_subcommand("cv", "k-fold cross-validation plus final retrain");
    std::string cv_notes, cv_report, cv_model_out, cv_retrieval = "on", cv_tasks;
    std::size_t cv_folds = 3;
    cv->add_option("--notes", cv_notes, "labeled notes.jsonl")->required();
    cv->add_option("--report", cv_report, "cross-validation report JSON");
    cv->add_option("--out", cv_model_out, "final model checkpoint");
    auto* cv_folds_opt = cv->add_option("--folds", cv_folds, "number of folds");
    cv->add_option("--retrieval", cv_retrieval, "input mode: on, off, or truncate");
    cv->add_option("--tasks", cv_tasks, "tasks config JSON");
    TrainFlags cv_tflags;
    cv_tflags.add(cv);
    RetrievalFlags cv_rflags;
    cv_rflags.add(cv);

    // icl
    auto* icl = app.add_subcommand("icl", "few-shot predictions via a generative HTTP service");
    std::string icl_url, icl_shots, icl_notes, icl_out;
    int icl_max_tokens = 256;
    auto* icl_url_opt = icl->add_option("--url", icl_url, "generative service base URL");
    auto* icl_shots_opt = icl->add_option("--shots-file", icl_shots, "worked examples notes.jsonl");
    icl->add_option("--notes", icl_notes, "input notes.jsonl")->required();
    icl->add_option("--out", icl_out, "output predictions.jsonl")->required();
    icl->add_option("--max-tokens", icl_max_tokens, "completion budget per request");

    // stats
    auto* stats = app.add_subcommand("stats", "label counts and token distribution");
    std::string stats_notes, stats_out, stats_csv;
    stats->add_option("--notes", stats_notes, "input notes.jsonl")->required();
    stats->add_option("--out", stats_out, "stats JSON output (default stdout)");
    stats->add_option("--csv", stats_csv, "token histogram CSV output");

    std::vector<const char*> argv;
    argv.reserve(args.size() + 1);
    argv.push_back("mhx");
    for (const auto& a : args) argv.push_back(a.c_str());

    try {
        try {
            app.parse(static_cast<int>(argv.size()), argv.data());
        } catch (const CLI::CallForHelp& e) {
            return app.exit(e);
        } catch (const CLI::CallForVersion& e) {
            return app.exit(e);
        } catch (const CLI::ParseError& e) {
            std::cerr << "mhx: " << e.what() << "\n" << app.help() << "\n";
            return 1;
        }

        const AppConfig file_cfg = load_config(config_path);

        if (*synth) {
            cmd_synth(synth_seed, synth_n, synth_out, synth_profile,
                      opt_long->count() ? std::optional<double>(synth_long) : std::nullopt,
                      opt_conflict->count() ? std::optional<double>(synth_conflict) : std::nullopt,
                      opt_prefix->count() ? std::optional<std::size_t>(synth_prefix) : std::nullopt);
        } else if (*segment) {
            cmd_segment(seg_notes, seg_out);
        } else if (*retrieve_cmd) {
            std::string provider_name, url;
            std::size_t dim = 0;
            const auto rcfg = ret_flags.resolve(file_cfg, provider_name, url, dim, /*log=*/true);
            const auto provider = make_provider(provider_name, url, dim);
            cmd_retrieve(ret_notes, ret_out, rcfg, *provider);
        } else if (*train) {
            std::string provider_name, url;
            std::size_t dim = 0;
            const auto rcfg = train_rflags.resolve(file_cfg, provider_name, url, dim, /*log=*/true);
            const auto tcfg = train_flags.resolve(file_cfg, /*log=*/true);
            const auto mode = parse_input_mode(train_retrieval);
            (void)train_ret_opt;
            const auto provider = make_provider(provider_name, url, dim);
            const auto specs = resolve_specs(!train_tasks.empty() ? train_tasks : file_cfg.tasks_path);
            cmd_train(train_notes, train_out, tcfg, mode, rcfg, *provider, specs);
        } else if (*predict_cmd) {
            std::string provider_name, url;
            std::size_t dim = 0;
            const auto rcfg = pred_rflags.resolve(file_cfg, provider_name, url, dim, /*log=*/false);
            const auto provider = make_provider(provider_name, url, dim);
            const auto specs = resolve_specs(!pred_tasks.empty() ? pred_tasks : file_cfg.tasks_path);
            cmd_predict(pred_model, pred_notes, pred_out, parse_input_mode(pred_retrieval), rcfg,
                        *provider, specs);
        } else if (*evaluate_cmd) {
            cmd_evaluate(eval_pred, eval_gold, eval_out, eval_baseline, eval_csv);
        } else if (*cv) {
            std::string provider_name, url;
            std::size_t dim = 0;
            CvConfig cfg;
            cfg.retrieval = cv_rflags.resolve(file_cfg, provider_name, url, dim, /*log=*/true);
            cfg.train = cv_tflags.resolve(file_cfg, /*log=*/true);
            cfg.folds = cv_folds_opt->count() ? cv_folds : file_cfg.cv_folds;
            cfg.input_mode = parse_input_mode(cv_retrieval);
            const auto provider = make_provider(provider_name, url, dim);
            const auto specs = resolve_specs(!cv_tasks.empty() ? cv_tasks : file_cfg.tasks_path);
            cmd_cv(cv_notes, cv_report, cv_model_out, cfg, specs, *provider);
        } else if (*icl) {
            const std::string url = icl_url_opt->count() ? icl_url : file_cfg.icl_url;
            const std::string shots = icl_shots_opt->count() ? icl_shots : file_cfg.icl_shots;
            cmd_icl(url, shots, icl_notes, icl_out, icl_max_tokens);
        } else if (*stats) {
            cmd_stats(stats_notes, stats_out, stats_csv);
        }
        return 0;
    } catch (const ValidationError& e) {
        std::cerr << "mhx: error: " << e.what() << "\n";
        return 1;
    } catch (const IoError& e) {
        std::cerr << "mhx: i/o error: " << e.what() << "\n";
        return 2;
    } catch (const RemoteError& e) {
        std::cerr << "mhx: remote error: " << e.what() << "\n";
        return 2;
    } catch (const json::exception& e) {
        std::cerr << "mhx: error: " << e.what() << "\n";
        return 1;
    }
}

int run(int argc, const char* const* argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run(std::move(args));
}

} // namespace mhx::cli
