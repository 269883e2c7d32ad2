// Command-line front end: data generation, training, evaluation,
// hyperparameter search, ablations, and report assembly on top of the
// library.  All file outputs are atomic and free of wall-clock data, so
// any invocation rerun with the same inputs produces identical bytes.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "saf/error.hpp"
#include "saf/harness.hpp"
#include "saf/io.hpp"
#include "saf/model.hpp"
#include "saf/rng.hpp"

namespace {

using ordered_json = nlohmann::ordered_json;

std::size_t to_count(const std::string& value, const std::string& key) {
    const char* s = value.c_str();
    char* end = nullptr;
    errno = 0;
    unsigned long long v = std::strtoull(s, &end, 10);
    if (end == s || *end != '\0' || errno == ERANGE || value.front() == '-')
        throw saf::ConfigError("key '" + key + "' expects a non-negative integer, got '" + value +
                               "'");
    return static_cast<std::size_t>(v);
}

double to_number(const std::string& value, const std::string& key) {
    const char* s = value.c_str();
    char* end = nullptr;
    errno = 0;
    double v = std::strtod(s, &end);
    if (end == s || *end != '\0' || !std::isfinite(v))
        throw saf::ConfigError("key '" + key + "' expects a finite number, got '" + value + "'");
    return v;
}

std::string sidecar_schema_path(const std::string& csv_path) {
    std::filesystem::path p(csv_path);
    p.replace_extension(".json");
    return p.string();
}

// Experiment configuration assembled from a flat JSON file plus key=value
// overrides.  Dataset-shaping keys are staged so their order never matters;
// everything else routes through apply_setting, which rejects unknowns.
struct ConfigDraft {
    saf::ExperimentSpec spec;
    std::string dataset;
    std::string schema;
    std::string statics;
    std::optional<std::size_t> duration;
    std::optional<std::uint64_t> data_seed;
    std::optional<double> noise_std;
    bool seeds_set = false;
    bool master_set = false;
    std::uint64_t master_seed = 0;
    std::size_t num_seeds = 5;
    std::set<std::string> keys_seen;
};

void config_entry(ConfigDraft& draft, const std::string& key, const std::string& value) {
    draft.keys_seen.insert(key);
    if (key == "dataset") {
        draft.dataset = value;
    } else if (key == "schema") {
        draft.schema = value;
    } else if (key == "statics") {
        draft.statics = value;
    } else if (key == "duration") {
        draft.duration = to_count(value, key);
    } else if (key == "data_seed") {
        draft.data_seed = to_count(value, key);
    } else if (key == "noise_std") {
        draft.noise_std = to_number(value, key);
    } else if (key == "validation") {
        draft.spec.dataset.split.validation = to_count(value, key);
    } else if (key == "test") {
        draft.spec.dataset.split.test = to_count(value, key);
    } else if (key == "normalization") {
        draft.spec.dataset.normalization = saf::normalization_mode_from_name(value);
    } else if (key == "seeds") {
        draft.seeds_set = true;
        draft.spec.seeds.clear();
        std::size_t pos = 0;
        while (pos <= value.size()) {
            std::size_t comma = value.find(',', pos);
            if (comma == std::string::npos) comma = value.size();
            draft.spec.seeds.push_back(to_count(value.substr(pos, comma - pos), key));
            pos = comma + 1;
        }
    } else if (key == "master_seed") {
        draft.master_set = true;
        draft.master_seed = to_count(value, key);
    } else if (key == "num_seeds") {
        draft.num_seeds = to_count(value, key);
    } else {
        saf::apply_setting(draft.spec, key, value);
    }
}

std::string json_scalar_text(const nlohmann::json& value, const std::string& key) {
    if (value.is_string()) return value.get<std::string>();
    if (value.is_boolean() || value.is_number()) return value.dump();
    throw saf::ConfigError("key '" + key + "' must be a scalar or an array of scalars");
}

void load_config_file(ConfigDraft& draft, const std::string& path) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(saf::read_file(path));
    } catch (const nlohmann::json::exception& err) {
        throw saf::ParseError(path + ": " + err.what());
    }
    if (!doc.is_object()) throw saf::ParseError(path + ": config must be a JSON object");
    for (const auto& [key, value] : doc.items()) {
        if (value.is_array()) {
            std::string joined;
            for (const auto& item : value) {
                if (!joined.empty()) joined += ",";
                joined += json_scalar_text(item, key);
            }
            config_entry(draft, key, joined);
        } else {
            config_entry(draft, key, json_scalar_text(value, key));
        }
    }
}

void apply_overrides(ConfigDraft& draft, const std::vector<std::string>& overrides) {
    for (const std::string& pair : overrides) {
        std::size_t eq = pair.find('=');
        if (eq == std::string::npos || eq == 0)
            throw saf::ConfigError("override '" + pair + "' is not of the form key=value");
        config_entry(draft, pair.substr(0, eq), pair.substr(eq + 1));
    }
}

/// Documented seed-splitting rule: seed_i = CounterRng::mix(master_seed, i)
/// for i = 1..num_seeds.
saf::ExperimentSpec finalize(ConfigDraft draft) {
    if (draft.dataset.empty()) throw saf::ConfigError("config needs a 'dataset'");
    bool is_ar = true;
    saf::ArVariant variant{};
    try {
        variant = saf::ar_variant_from_name(draft.dataset);
    } catch (const saf::Error&) {
        is_ar = false;
    }
    if (is_ar) {
        if (!draft.schema.empty() || !draft.statics.empty())
            throw saf::ConfigError("'schema' and 'statics' only apply to CSV datasets");
        saf::ArProcessSpec ar;
        ar.variant = variant;
        if (draft.duration) ar.duration = *draft.duration;
        if (draft.data_seed) ar.seed = *draft.data_seed;
        if (draft.noise_std) ar.noise_std = *draft.noise_std;
        draft.spec.dataset.ar = ar;
    } else {
        if (draft.duration || draft.data_seed || draft.noise_std)
            throw saf::ConfigError(
                "'duration', 'data_seed' and 'noise_std' only apply to generated datasets");
        draft.spec.dataset.panel_path = draft.dataset;
        draft.spec.dataset.schema_path =
            draft.schema.empty() ? sidecar_schema_path(draft.dataset) : draft.schema;
        draft.spec.dataset.static_path = draft.statics;
    }
    if (draft.seeds_set && draft.master_set)
        throw saf::ConfigError("'seeds' and 'master_seed' are mutually exclusive");
    if (draft.keys_seen.count("num_seeds") && !draft.master_set)
        throw saf::ConfigError("'num_seeds' needs 'master_seed'");
    if (draft.master_set) {
        if (draft.num_seeds == 0) throw saf::ConfigError("'num_seeds' must be positive");
        draft.spec.seeds.clear();
        for (std::size_t i = 1; i <= draft.num_seeds; ++i)
            draft.spec.seeds.push_back(saf::CounterRng::mix(draft.master_seed, i));
    }
    draft.spec.validate();
    return std::move(draft.spec);
}

void warn_unused_saf_keys(const ConfigDraft& draft) {
    static const char* const kSafOnly[] = {"adapt_rate", "adapt_steps", "use_error_signal",
                                           "masked_only", "mask"};
    for (const char* key : kSafOnly)
        if (draft.keys_seen.count(key))
            std::cerr << "saf: warning: unused key '" << key << "' with --baseline\n";
}

ordered_json seed_record(const saf::SeedRun& run) {
    ordered_json doc;
    doc["seed"] = run.seed;
    doc["failed"] = run.failed;
    doc["failure"] = run.failure;
    doc["best_validation"] = run.best_validation;
    doc["test_at_best"] = run.test_at_best;
    doc["best_iteration"] = run.best_iteration;
    doc["validation_curve"] = run.validation_curve;
    return doc;
}

const saf::SeedRun* winning_seed(const saf::TrialResult& trial) {
    const saf::SeedRun* winner = nullptr;
    for (const saf::SeedRun& run : trial.seeds)
        if (!run.failed && (!winner || run.best_validation < winner->best_validation))
            winner = &run;
    return winner;
}

ordered_json config_record(const saf::ExperimentSpec& spec) {
    const saf::SafConfig& cfg = spec.config;
    ordered_json c;
    c["window"] = cfg.window;
    c["mask"] = cfg.mask;
    c["horizon"] = cfg.horizon;
    c["adapt_rate"] = cfg.adapt_rate;
    c["train_rate"] = cfg.train_rate;
    c["adapt_steps"] = cfg.adapt_steps;
    c["use_error_signal"] = cfg.use_error_signal;
    c["masked_only"] = cfg.masked_only_backcast_loss;
    c["loss"] = saf::loss_name(cfg.loss);
    c["merge"] = saf::merge_name(cfg.merge);
    return c;
}

saf::SafConfig config_from_record(const nlohmann::json& c) {
    try {
        saf::SafConfig cfg;
        cfg.window = c.at("window").get<std::size_t>();
        cfg.mask = c.at("mask").get<std::size_t>();
        cfg.horizon = c.at("horizon").get<std::size_t>();
        cfg.adapt_rate = c.at("adapt_rate").get<double>();
        cfg.train_rate = c.at("train_rate").get<double>();
        cfg.adapt_steps = c.at("adapt_steps").get<std::size_t>();
        cfg.use_error_signal = c.at("use_error_signal").get<bool>();
        cfg.masked_only_backcast_loss = c.at("masked_only").get<bool>();
        cfg.loss = saf::loss_from_name(c.at("loss").get<std::string>());
        cfg.merge = saf::merge_from_name(c.at("merge").get<std::string>());
        return cfg;
    } catch (const nlohmann::json::exception& err) {
        throw saf::ParseError(std::string("bundle metadata is incomplete: ") + err.what());
    }
}

// ---------------------------------------------------------------- generate

int cmd_generate(const std::string& dataset, std::size_t duration, std::uint64_t seed,
                 const std::string& out) {
    saf::ArProcessSpec ar;
    ar.variant = saf::ar_variant_from_name(dataset);
    ar.duration = duration;
    ar.seed = seed;
    saf::PanelDataset panel = saf::ar_panel(ar);
    saf::save_csv(panel, out, "");

    ordered_json schema;
    schema["target"] = saf::ar_variant_name(ar.variant);
    schema["frequency"] = panel.frequency;
    std::string schema_path = sidecar_schema_path(out);
    saf::atomic_write_file(schema_path, schema.dump(2) + "\n");

    std::cout << "wrote " << out << " (" << duration << " rows) and " << schema_path << "\n";
    return 0;
}

// ------------------------------------------------------------------- train

int cmd_train(const std::string& config_path, bool baseline, const std::string& ablation,
              const std::string& out_dir, const std::vector<std::string>& overrides) {
    ConfigDraft draft;
    load_config_file(draft, config_path);
    apply_overrides(draft, overrides);
    saf::ExperimentSpec spec = finalize(draft);
    spec.use_saf = !baseline;
    spec.ablation = saf::ablation_from_name(ablation);
    if (baseline && spec.ablation != saf::Ablation::None)
        throw saf::ConfigError("ablations require the SAF pipeline, not --baseline");
    if (baseline) warn_unused_saf_keys(draft);

    saf::ModelBundle bundle;
    saf::TrialResult trial = saf::run_trial(spec, &bundle);
    const saf::SeedRun* winner = winning_seed(trial);

    std::filesystem::create_directories(out_dir);
    const std::string variant = baseline ? "baseline"
                                         : (spec.ablation == saf::Ablation::None
                                                ? "saf"
                                                : saf::ablation_name(spec.ablation));

    ordered_json result;
    result["command"] = "train";
    result["dataset"] = spec.dataset.label();
    result["variant"] = variant;
    result["ablation"] = saf::ablation_name(spec.ablation);
    result["baseline"] = baseline;
    result["failed"] = trial.failed;
    result["failure"] = trial.failure;
    if (trial.failed) {
        result["validation"] = nullptr;
        result["test"] = nullptr;
        result["test_median"] = nullptr;
    } else {
        result["validation"] = trial.validation;
        result["test"] = trial.test;
        result["test_median"] = trial.test_median;
    }
    if (winner)
        result["best_seed"] = winner->seed;
    else
        result["best_seed"] = nullptr;
    ordered_json seeds = ordered_json::array();
    for (const saf::SeedRun& run : trial.seeds) seeds.push_back(seed_record(run));
    result["seeds"] = seeds;

    std::string result_path = (std::filesystem::path(out_dir) / "result.json").string();
    saf::atomic_write_file(result_path, result.dump(2) + "\n");

    std::string bundle_path;
    if (winner) {
        ordered_json meta;
        meta["seed"] = winner->seed;
        meta["baseline"] = baseline;
        meta["ablation"] = saf::ablation_name(spec.ablation);
        meta["metric"] = saf::loss_name(spec.eval_metric);
        meta["normalization"] = saf::normalization_mode_name(spec.dataset.normalization);
        meta["validation"] = spec.dataset.split.validation;
        meta["test"] = spec.dataset.split.test;
        meta["config"] = config_record(spec);
        bundle_path = (std::filesystem::path(out_dir) / "model.safp1").string();
        saf::save_bundle(bundle, bundle_path, meta.dump());
    }

    if (trial.failed) {
        std::size_t failures = 0;
        for (const saf::SeedRun& run : trial.seeds) failures += run.failed ? 1 : 0;
        std::cerr << "saf: error: " << failures << " of " << trial.seeds.size()
                  << " seeds failed (" << trial.failure << "); details in " << result_path
                  << "\n";
        return 1;
    }
    std::cout << "dataset " << spec.dataset.label() << " variant " << variant << "\n"
              << "validation " << trial.validation << " test " << trial.test << " (median "
              << trial.test_median << ")\n"
              << "wrote " << result_path << " and " << bundle_path << "\n";
    return 0;
}

// ---------------------------------------------------------------- evaluate

int cmd_evaluate(const std::string& bundle_path, const std::string& data_path,
                 const std::string& schema_path, const std::string& statics_path,
                 const std::string& split, const std::string& out) {
    if (split != "test" && split != "validation")
        throw saf::ConfigError("--split must be 'test' or 'validation', got '" + split + "'");

    std::string meta_text;
    saf::ModelBundle bundle = saf::load_bundle(bundle_path, &meta_text);
    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(meta_text);
    } catch (const nlohmann::json::exception& err) {
        throw saf::ParseError(bundle_path + ": metadata is not JSON: " + err.what());
    }
    saf::SafConfig cfg = config_from_record(meta.at("config"));
    bool baseline = meta.at("baseline").get<bool>();
    saf::Ablation ablation = saf::ablation_from_name(meta.at("ablation").get<std::string>());
    saf::LossKind metric_kind = saf::loss_from_name(meta.at("metric").get<std::string>());
    saf::NormalizationMode mode =
        saf::normalization_mode_from_name(meta.at("normalization").get<std::string>());
    saf::SplitSpec split_spec{meta.at("validation").get<std::size_t>(),
                              meta.at("test").get<std::size_t>()};

    saf::PanelSchema schema =
        saf::load_schema(schema_path.empty() ? sidecar_schema_path(data_path) : schema_path);
    saf::PanelDataset data = saf::load_csv(data_path, statics_path, schema);
    if (data.feature_count() != bundle.dims.covariates)
        throw saf::ConfigError("bundle expects " + std::to_string(bundle.dims.covariates) +
                               " features but the dataset has " +
                               std::to_string(data.feature_count()));

    saf::PanelSplits splits = saf::split_ranges(data.common_length(), split_spec);
    saf::NormalizationStats stats = saf::fit_normalization(data, splits.train, mode);
    saf::PanelDataset normed = saf::apply_normalization(data, stats);
    const saf::TimeRange& range = split == "test" ? splits.test : splits.validation;
    saf::WindowBuild windows =
        saf::make_windows(normed, range, cfg.window, cfg.horizon, true);
    if (windows.samples.empty()) throw saf::ConfigError("the requested split yields no windows");

    std::vector<double> forecasts, targets;
    for (const saf::WindowSample& w : windows.samples) {
        std::vector<double> f = baseline
                                    ? saf::baseline_infer(bundle, cfg, w.window, w.statics)
                                    : saf::infer(bundle, cfg, w.window, w.statics, ablation);
        for (std::size_t k = 0; k < f.size(); ++k) {
            forecasts.push_back(
                saf::denormalize_target(stats, w.entity, normed.target_column, f[k]));
            targets.push_back(saf::denormalize_target(stats, w.entity, normed.target_column,
                                                      w.target.at(k)));
        }
    }
    double value = saf::metric(metric_kind, forecasts, targets);

    ordered_json doc;
    doc["command"] = "evaluate";
    doc["split"] = split;
    doc["metric"] = saf::loss_name(metric_kind);
    doc["windows"] = windows.samples.size();
    doc["value"] = value;
    if (!out.empty()) saf::atomic_write_file(out, doc.dump(2) + "\n");

    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", value);
    std::cout << "split " << split << " " << saf::loss_name(metric_kind) << " " << buf << " over "
              << windows.samples.size() << " windows\n";
    return 0;
}

// --------------------------------------------------------------------- hpo

saf::GridSpace load_space_file(const std::string& path) {
    ordered_json doc;  // axis order in the file defines combination order
    try {
        doc = ordered_json::parse(saf::read_file(path));
    } catch (const nlohmann::json::exception& err) {
        throw saf::ParseError(path + ": " + err.what());
    }
    if (!doc.is_object() || doc.empty())
        throw saf::ParseError(path + ": search space must be a non-empty JSON object");
    saf::GridSpace space;
    for (const auto& [key, values] : doc.items()) {
        if (!values.is_array() || values.empty())
            throw saf::ParseError(path + ": axis '" + key +
                                  "' must be a non-empty array of candidates");
        std::vector<std::string> candidates;
        for (const auto& v : values) candidates.push_back(json_scalar_text(v, key));
        space.emplace_back(key, std::move(candidates));
    }
    return space;
}

int cmd_hpo(const std::string& config_path, const std::string& space_path, std::size_t trials,
            std::uint64_t master_seed, bool baseline, const std::string& out,
            const std::vector<std::string>& overrides) {
    if (trials == 0) throw saf::ConfigError("--trials must be positive");
    ConfigDraft draft;
    load_config_file(draft, config_path);
    apply_overrides(draft, overrides);
    saf::ExperimentSpec base = finalize(draft);
    base.use_saf = !baseline;
    if (baseline) warn_unused_saf_keys(draft);

    saf::GridSpace space = load_space_file(space_path);
    saf::GridOutcome outcome = saf::grid_search(space, base, master_seed, trials, trials);
    saf::write_summary_json(out, base.dataset.label(), outcome);

    if (outcome.ranked.empty()) {
        std::cerr << "saf: error: every combination failed; details in " << out << "\n";
        return 1;
    }
    const saf::TrialResult& best = outcome.ranked.front();
    std::cout << (outcome.sampled ? "sampled " : "exhausted ")
              << (outcome.ranked.size() + outcome.failed.size()) << " of "
              << outcome.total_combinations << " combinations\n";
    std::cout << "best validation " << best.validation << " test " << best.test << " with";
    for (const auto& [key, value] : best.assignment) std::cout << " " << key << "=" << value;
    std::cout << "\nwrote " << out << "\n";
    return 0;
}

// ------------------------------------------------------------------ ablate

int cmd_ablate(const std::string& config_path, const std::string& out,
               const std::vector<std::string>& overrides) {
    ConfigDraft draft;
    load_config_file(draft, config_path);
    apply_overrides(draft, overrides);
    saf::ExperimentSpec spec = finalize(draft);
    spec.use_saf = true;

    saf::AblationReport report = saf::ablation_battery(spec);

    ordered_json doc;
    doc["command"] = "ablate";
    doc["dataset"] = spec.dataset.label();
    ordered_json rows = ordered_json::array();
    bool any_failed = false;
    for (const saf::AblationRow& row : report.rows) {
        ordered_json r;
        r["label"] = row.label;
        r["ablation"] = saf::ablation_name(row.ablation);
        r["failed"] = row.trial.failed;
        if (row.trial.failed) {
            any_failed = true;
            r["failure"] = row.trial.failure;
            r["validation"] = nullptr;
            r["test"] = nullptr;
            r["test_median"] = nullptr;
        } else {
            r["validation"] = row.trial.validation;
            r["test"] = row.trial.test;
            r["test_median"] = row.trial.test_median;
        }
        ordered_json seeds = ordered_json::array();
        for (const saf::SeedRun& run : row.trial.seeds) seeds.push_back(seed_record(run));
        r["seeds"] = seeds;
        rows.push_back(r);
    }
    doc["rows"] = rows;
    saf::atomic_write_file(out, doc.dump(2) + "\n");

    for (const saf::AblationRow& row : report.rows) {
        std::cout << row.label << ": ";
        if (row.trial.failed)
            std::cout << "failed (" << row.trial.failure << ")\n";
        else
            std::cout << "test " << row.trial.test << "\n";
    }
    std::cout << "wrote " << out << "\n";
    if (any_failed) {
        std::cerr << "saf: error: at least one ablation variant failed; details in " << out
                  << "\n";
        return 1;
    }
    return 0;
}

// ------------------------------------------------------------------ report

double best_test_from_summary(const std::string& path) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(saf::read_file(path));
    } catch (const nlohmann::json::exception& err) {
        throw saf::ParseError(path + ": " + err.what());
    }
    if (!doc.contains("trials") || !doc["trials"].is_array() || doc["trials"].empty())
        throw saf::ParseError(path + ": no ranked trials to report");
    return doc["trials"][0].at("test").get<double>();
}

int cmd_report(const std::string& sweep_dir, const std::string& out_csv,
               std::string out_json) {
    if (out_json.empty()) {
        std::filesystem::path p(out_csv);
        p.replace_extension(".json");
        out_json = p.string();
    }

    // expects <duration>_baseline.json / <duration>_saf.json pairs
    std::map<std::size_t, std::pair<std::string, std::string>> arms;
    for (const auto& entry : std::filesystem::directory_iterator(sweep_dir)) {
        if (!entry.is_regular_file()) continue;
        std::string name = entry.path().filename().string();
        std::size_t underscore = name.find('_');
        if (underscore == std::string::npos || underscore == 0) continue;
        std::string digits = name.substr(0, underscore);
        if (digits.find_first_not_of("0123456789") != std::string::npos) continue;
        std::size_t duration = to_count(digits, "duration");
        if (name.substr(underscore) == "_baseline.json")
            arms[duration].first = entry.path().string();
        else if (name.substr(underscore) == "_saf.json")
            arms[duration].second = entry.path().string();
    }
    if (arms.empty())
        throw saf::ConfigError(sweep_dir +
                               " holds no <duration>_baseline.json / <duration>_saf.json pairs");

    std::vector<std::pair<std::size_t, double>> baseline, safarm;
    for (const auto& [duration, paths] : arms) {
        if (paths.first.empty() || paths.second.empty())
            throw saf::ConfigError("duration " + std::to_string(duration) +
                                   " is missing one arm's summary");
        baseline.emplace_back(duration, best_test_from_summary(paths.first));
        safarm.emplace_back(duration, best_test_from_summary(paths.second));
    }

    saf::AggregateReport report = saf::aggregate_durations(baseline, safarm);
    saf::write_sweep_csv(out_csv, report);
    saf::write_aggregate_json(out_json, report);

    for (const saf::DurationPoint& p : report.points)
        std::cout << "duration " << p.duration << " baseline " << p.baseline << " saf " << p.saf
                  << " delta " << p.delta_percent() << "%\n";
    std::cout << "mean baseline " << report.baseline_mean << " mean saf " << report.saf_mean
              << " delta " << report.delta_percent << "%\n"
              << "wrote " << out_csv << " and " << out_json << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"self-adaptive time-series forecaster"};
    app.require_subcommand(1);

    auto* gen = app.add_subcommand("generate", "write a synthetic AR panel as CSV + schema");
    std::string gen_dataset, gen_out;
    std::size_t gen_duration = 1000;
    std::uint64_t gen_seed = 0;
    gen->add_option("--dataset", gen_dataset, "ar1|ar2|ar3|ar4")->required();
    gen->add_option("--duration", gen_duration, "series length");
    gen->add_option("--seed", gen_seed, "generator seed");
    gen->add_option("--out", gen_out, "output CSV path")->required();

    auto* train = app.add_subcommand("train", "train over the configured seeds, save the best");
    std::string train_config, train_ablation = "none", train_out = ".";
    bool train_baseline = false;
    std::vector<std::string> train_overrides;
    train->add_option("--config", train_config, "experiment config JSON")->required();
    train->add_flag("--baseline", train_baseline, "plain forecaster without adaptation");
    train->add_option("--ablation", train_ablation,
                      "none|no-decoder-update|no-encoder-update|no-error-signal");
    train->add_option("--out", train_out, "output directory");
    train->add_option("overrides", train_overrides, "key=value settings applied after the file");

    auto* eval = app.add_subcommand("evaluate", "score a saved bundle on a CSV dataset split");
    std::string eval_bundle, eval_data, eval_schema, eval_statics, eval_split = "test", eval_out;
    eval->add_option("--bundle", eval_bundle, "SAFP1 bundle path")->required();
    eval->add_option("--data", eval_data, "panel CSV path")->required();
    eval->add_option("--schema", eval_schema, "schema sidecar (default: CSV path with .json)");
    eval->add_option("--statics", eval_statics, "static covariates CSV");
    eval->add_option("--split", eval_split, "test|validation");
    eval->add_option("--out", eval_out, "also write the metric as JSON here");

    auto* hpo = app.add_subcommand("hpo", "grid-search hyperparameters");
    std::string hpo_config, hpo_space, hpo_out = "hpo_summary.json";
    std::size_t hpo_trials = 100;
    std::uint64_t hpo_master = 0;
    bool hpo_baseline = false;
    std::vector<std::string> hpo_overrides;
    hpo->add_option("--config", hpo_config, "experiment config JSON")->required();
    hpo->add_option("--space", hpo_space, "search-space JSON (key -> candidate array)")
        ->required();
    hpo->add_option("--trials", hpo_trials, "max combinations to run (samples beyond this)");
    hpo->add_option("--master-seed", hpo_master, "seed for sampled search");
    hpo->add_flag("--baseline", hpo_baseline, "search the non-adaptive arm");
    hpo->add_option("--out", hpo_out, "summary JSON path");
    hpo->add_option("overrides", hpo_overrides, "key=value settings applied after the file");

    auto* ablate = app.add_subcommand("ablate", "run the four-variant component knockout");
    std::string ablate_config, ablate_out = "ablation.json";
    std::vector<std::string> ablate_overrides;
    ablate->add_option("--config", ablate_config, "experiment config JSON")->required();
    ablate->add_option("--out", ablate_out, "report JSON path");
    ablate->add_option("overrides", ablate_overrides,
                       "key=value settings applied after the file");

    auto* report = app.add_subcommand("report", "fold per-duration summaries into a sweep table");
    std::string report_sweep, report_out = "sweep.csv", report_json;
    report->add_option("--sweep", report_sweep, "directory of per-duration summary JSONs")
        ->required();
    report->add_option("--out", report_out, "sweep CSV path");
    report->add_option("--json", report_json, "aggregate JSON path (default: CSV with .json)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& err) {
        if (err.get_exit_code() == 0) return app.exit(err);
        std::cerr << "saf: error: " << err.what() << "\n";
        return 2;
    }

    try {
        if (gen->parsed()) return cmd_generate(gen_dataset, gen_duration, gen_seed, gen_out);
        if (train->parsed())
            return cmd_train(train_config, train_baseline, train_ablation, train_out,
                             train_overrides);
        if (eval->parsed())
            return cmd_evaluate(eval_bundle, eval_data, eval_schema, eval_statics, eval_split,
                                eval_out);
        if (hpo->parsed())
            return cmd_hpo(hpo_config, hpo_space, hpo_trials, hpo_master, hpo_baseline, hpo_out,
                           hpo_overrides);
        if (ablate->parsed()) return cmd_ablate(ablate_config, ablate_out, ablate_overrides);
        if (report->parsed()) return cmd_report(report_sweep, report_out, report_json);
    } catch (const saf::Error& err) {
        std::cerr << "saf: error: " << err.what() << "\n";
        return 1;
    } catch (const std::exception& err) {
        std::cerr << "saf: error: " << err.what() << "\n";
        return 1;
    }
    return 0;
}
