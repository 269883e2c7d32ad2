#include "saf/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <limits>
#include <numeric>
#include <set>
#include <thread>

#include <json.hpp>

#include "saf/error.hpp"
#include "saf/io.hpp"
#include "saf/model.hpp"
#include "saf/rng.hpp"

namespace saf {

namespace {

double parse_number(const std::string& value, const std::string& key) {
    const char* s = value.c_str();
    char* end = nullptr;
    errno = 0;
    double v = std::strtod(s, &end);
    if (end == s || *end != '\0' || !std::isfinite(v))
        throw ConfigError("setting '" + key + "' expects a finite number, got '" + value + "'");
    return v;
}

std::size_t parse_count(const std::string& value, const std::string& key) {
    const char* s = value.c_str();
    char* end = nullptr;
    errno = 0;
    unsigned long long v = std::strtoull(s, &end, 10);
    if (end == s || *end != '\0' || errno == ERANGE || value.front() == '-')
        throw ConfigError("setting '" + key + "' expects a non-negative integer, got '" + value +
                          "'");
    return static_cast<std::size_t>(v);
}

bool parse_flag(const std::string& value, const std::string& key) {
    if (value == "true") return true;
    if (value == "false") return false;
    throw ConfigError("setting '" + key + "' expects true or false, got '" + value + "'");
}

double mean_of(const std::vector<double>& xs) {
    return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

double population_std(const std::vector<double>& xs) {
    double m = mean_of(xs);
    double var = 0.0;
    for (double x : xs) var += (x - m) * (x - m);
    return std::sqrt(var / static_cast<double>(xs.size()));
}

double median_of(std::vector<double> xs) {
    std::sort(xs.begin(), xs.end());
    std::size_t n = xs.size();
    return n % 2 == 1 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

std::string format_full(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

} // namespace

double metric(LossKind kind, const std::vector<double>& forecasts,
              const std::vector<double>& targets) {
    if (forecasts.size() != targets.size())
        throw ShapeError("metric inputs differ in length: " + std::to_string(forecasts.size()) +
                         " vs " + std::to_string(targets.size()));
    if (forecasts.empty()) throw ShapeError("metric needs at least one pair");
    double sum = 0.0;
    for (std::size_t i = 0; i < forecasts.size(); ++i) {
        double d = forecasts[i] - targets[i];
        sum += kind == LossKind::MSE ? d * d : std::fabs(d);
    }
    return sum / static_cast<double>(forecasts.size());
}

namespace {

// 1-based ranks; runs of equal values share the average of their positions
std::vector<double> average_ranks(const std::vector<double>& xs) {
    const std::size_t n = xs.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && xs[order[j + 1]] == xs[order[i]]) ++j;
        double shared = 1.0 + 0.5 * (static_cast<double>(i) + static_cast<double>(j));
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = shared;
        i = j + 1;
    }
    return ranks;
}

} // namespace

double spearman(const std::vector<double>& xs, const std::vector<double>& ys) {
    if (xs.size() != ys.size()) throw ShapeError("spearman inputs differ in length");
    if (xs.size() < 2) throw ShapeError("spearman needs at least two pairs");
    std::vector<double> rx = average_ranks(xs);
    std::vector<double> ry = average_ranks(ys);
    // ranks always sum to n(n+1)/2, so the mean is exact
    double m = 0.5 * static_cast<double>(xs.size() + 1);
    double cov = 0.0, vx = 0.0, vy = 0.0;
    for (std::size_t i = 0; i < rx.size(); ++i) {
        double a = rx[i] - m, b = ry[i] - m;
        cov += a * b;
        vx += a * a;
        vy += b * b;
    }
    if (vx == 0.0 || vy == 0.0) return std::numeric_limits<double>::quiet_NaN();
    return cov / std::sqrt(vx * vy);
}

PanelDataset DatasetSpec::load() const {
    validate();
    if (ar) return ar_panel(*ar);
    PanelSchema schema = load_schema(schema_path);
    return load_csv(panel_path, static_path, schema);
}

std::string DatasetSpec::label() const {
    if (ar) return ar_variant_name(ar->variant);
    return std::filesystem::path(panel_path).stem().string();
}

void DatasetSpec::validate() const {
    if (ar) {
        if (!panel_path.empty() || !schema_path.empty())
            throw ConfigError("dataset is either generated or loaded from CSV, not both");
        ar->validate();
        return;
    }
    if (panel_path.empty()) throw ConfigError("dataset needs an AR spec or a panel CSV path");
    if (schema_path.empty()) throw ConfigError("CSV datasets need a schema sidecar path");
}

void ExperimentSpec::validate() const {
    dataset.validate();
    config.validate();
    if (seeds.empty()) throw ConfigError("experiment needs at least one seed");
    if (max_iterations == 0) throw ConfigError("max iterations must be positive");
    if (batch_size == 0) throw ConfigError("batch size must be positive");
    if (eval_every == 0) throw ConfigError("evaluation interval must be positive");
    if (hidden_units == 0) throw ConfigError("hidden units must be positive");
}

void apply_setting(ExperimentSpec& spec, const std::string& key, const std::string& value) {
    if (key == "batch_size") spec.batch_size = parse_count(value, key);
    else if (key == "train_rate") spec.config.train_rate = parse_number(value, key);
    else if (key == "adapt_rate") spec.config.adapt_rate = parse_number(value, key);
    else if (key == "units") spec.hidden_units = parse_count(value, key);
    else if (key == "window") spec.config.window = parse_count(value, key);
    else if (key == "mask") spec.config.mask = parse_count(value, key);
    else if (key == "horizon") spec.config.horizon = parse_count(value, key);
    else if (key == "merge") spec.config.merge = merge_from_name(value);
    else if (key == "use_error_signal") spec.config.use_error_signal = parse_flag(value, key);
    else if (key == "adapt_steps") spec.config.adapt_steps = parse_count(value, key);
    else if (key == "masked_only")
        spec.config.masked_only_backcast_loss = parse_flag(value, key);
    else if (key == "loss") spec.config.loss = loss_from_name(value);
    else if (key == "metric") spec.eval_metric = loss_from_name(value);
    else if (key == "max_iterations") spec.max_iterations = parse_count(value, key);
    else if (key == "eval_every") spec.eval_every = parse_count(value, key);
    else throw ConfigError("unknown setting '" + key + "'");
}

SeedRun run_seed(const ExperimentSpec& spec, std::uint64_t seed, const PhaseObserver& observer,
                 ModelBundle* best_bundle) {
    spec.validate();
    SeedRun run;
    run.seed = seed;

    auto phase_hook = [&observer](RunPhase phase) -> AccessObserver {
        if (!observer) return {};
        return [&observer, phase](std::size_t e, std::size_t t) { observer(phase, e, t); };
    };

    PanelDataset raw = spec.dataset.load();
    PanelSplits splits = split_ranges(raw.common_length(), spec.dataset.split);
    NormalizationStats stats = fit_normalization(raw, splits.train, spec.dataset.normalization,
                                                 phase_hook(RunPhase::Statistics));
    PanelDataset data = apply_normalization(raw, stats);

    const SafConfig& cfg = spec.config;
    WindowBuild train = make_windows(data, splits.train, cfg.window, cfg.horizon, false, 1,
                                     phase_hook(RunPhase::TrainingWindows));
    if (train.samples.empty())
        throw ConfigError("training split yields no windows for window " +
                          std::to_string(cfg.window) + " + horizon " +
                          std::to_string(cfg.horizon));
    WindowBuild val = make_windows(data, splits.validation, cfg.window, cfg.horizon, true, 1,
                                   phase_hook(RunPhase::Selection));
    if (val.samples.empty()) throw ConfigError("validation split yields no windows");

    ModelDims dims;
    dims.covariates = data.feature_count();
    dims.statics = data.static_names.size();
    dims.hidden = spec.hidden_units;
    dims.window = cfg.window;
    dims.horizon = cfg.horizon;
    dims.error_channel = spec.use_saf;
    ModelBundle bundle = init_params(dims, cfg.merge, CounterRng::mix(seed, 0x11));

    auto evaluate = [&](const ModelBundle& b, const std::vector<WindowSample>& windows) {
        std::vector<double> forecasts, targets;
        forecasts.reserve(windows.size() * cfg.horizon);
        targets.reserve(windows.size() * cfg.horizon);
        for (const WindowSample& w : windows) {
            std::vector<double> f = spec.use_saf
                                        ? infer(b, cfg, w.window, w.statics, spec.ablation)
                                        : baseline_infer(b, cfg, w.window, w.statics);
            for (std::size_t k = 0; k < f.size(); ++k) {
                forecasts.push_back(
                    denormalize_target(stats, w.entity, data.target_column, f[k]));
                targets.push_back(
                    denormalize_target(stats, w.entity, data.target_column, w.target.at(k)));
            }
        }
        return metric(spec.eval_metric, forecasts, targets);
    };

    CounterRng sampler(CounterRng::mix(seed, 0x22));
    ModelBundle best;
    bool have_best = false;
    try {
        for (std::size_t it = 1; it <= spec.max_iterations; ++it) {
            std::vector<WindowSample> batch;
            batch.reserve(spec.batch_size);
            for (std::size_t b = 0; b < spec.batch_size; ++b)
                batch.push_back(train.samples[sampler.next_u64() % train.samples.size()]);
            if (spec.use_saf) train_step(bundle, cfg, batch, spec.ablation);
            else baseline_train_step(bundle, cfg, batch);

            if (it % spec.eval_every == 0 || it == spec.max_iterations) {
                double v = evaluate(bundle, val.samples);
                run.validation_curve.push_back(v);
                if (!have_best || v < run.best_validation) {
                    run.best_validation = v;
                    run.best_iteration = it;
                    best = bundle.clone();
                    have_best = true;
                }
            }
        }
        WindowBuild test = make_windows(data, splits.test, cfg.window, cfg.horizon, true, 1,
                                        phase_hook(RunPhase::TestEval));
        if (test.samples.empty()) throw ConfigError("test split yields no windows");
        run.test_at_best = evaluate(best, test.samples);
        if (best_bundle) *best_bundle = std::move(best);
    } catch (const AdaptationError& err) {
        run.failed = true;
        run.failure = err.what();
    } catch (const NumericError& err) {
        run.failed = true;
        run.failure = err.what();
    }
    return run;
}

TrialResult run_trial(const ExperimentSpec& spec, ModelBundle* best_bundle) {
    spec.validate();
    auto start = std::chrono::steady_clock::now();
    TrialResult trial;
    ModelBundle winner;
    bool have_winner = false;
    double winner_validation = 0.0;
    for (std::uint64_t seed : spec.seeds) {
        try {
            ModelBundle snapshot;
            SeedRun run = run_seed(spec, seed, {}, best_bundle ? &snapshot : nullptr);
            if (best_bundle && !run.failed &&
                (!have_winner || run.best_validation < winner_validation)) {
                winner = std::move(snapshot);
                winner_validation = run.best_validation;
                have_winner = true;
            }
            trial.seeds.push_back(std::move(run));
        } catch (const Error& err) {
            SeedRun r;
            r.seed = seed;
            r.failed = true;
            r.failure = err.what();
            trial.seeds.push_back(std::move(r));
        }
    }
    if (best_bundle && have_winner) *best_bundle = std::move(winner);

    std::vector<double> vals, tests;
    for (const SeedRun& r : trial.seeds) {
        if (r.failed) {
            trial.failed = true;
            if (trial.failure.empty()) trial.failure = r.failure;
        } else {
            vals.push_back(r.best_validation);
            tests.push_back(r.test_at_best);
        }
    }
    if (!trial.failed) {
        trial.validation = mean_of(vals);
        trial.test = mean_of(tests);
        trial.test_median = median_of(tests);
    }
    trial.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return trial;
}

std::size_t worker_count() {
    if (const char* env = std::getenv("SAF_WORKERS")) {
        char* end = nullptr;
        errno = 0;
        unsigned long long v = std::strtoull(env, &end, 10);
        if (end == env || *end != '\0' || errno == ERANGE || v == 0)
            throw ConfigError("SAF_WORKERS must be a positive integer");
        return static_cast<std::size_t>(v);
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : hw;
}

GridOutcome grid_search(const GridSpace& space, const ExperimentSpec& base,
                        std::uint64_t master_seed, std::size_t cap_exhaustive,
                        std::size_t sample_size) {
    if (space.empty()) throw ConfigError("grid space is empty");
    for (const auto& [key, candidates] : space)
        if (candidates.empty())
            throw ConfigError("grid axis '" + key + "' has no candidates");
    if (sample_size == 0) throw ConfigError("grid sample size must be positive");

    std::uint64_t total = 1;
    bool huge = false;
    for (const auto& [key, candidates] : space) {
        std::uint64_t n = candidates.size();
        if (total > std::numeric_limits<std::uint64_t>::max() / n) {
            huge = true;
            total = std::numeric_limits<std::uint64_t>::max();
            break;
        }
        total *= n;
    }

    std::vector<std::uint64_t> combos;
    bool sampled = false;
    if (!huge && total <= cap_exhaustive) {
        combos.resize(total);
        std::iota(combos.begin(), combos.end(), std::uint64_t{0});
    } else {
        sampled = true;
        std::uint64_t want = std::min<std::uint64_t>(sample_size, total);
        CounterRng rng(CounterRng::mix(master_seed, 0x6B1D));
        std::set<std::uint64_t> chosen;
        while (chosen.size() < want) chosen.insert(rng.next_u64() % total);
        combos.assign(chosen.begin(), chosen.end());  // combination order
    }

    // the last axis varies fastest in combination order
    auto decode = [&](std::uint64_t code) {
        std::map<std::string, std::string> assignment;
        for (std::size_t a = space.size(); a-- > 0;) {
            const auto& [key, candidates] = space[a];
            assignment[key] = candidates[code % candidates.size()];
            code /= candidates.size();
        }
        return assignment;
    };

    std::vector<TrialResult> results(combos.size());
    std::atomic<std::size_t> cursor{0};
    auto work = [&]() {
        while (true) {
            std::size_t i = cursor.fetch_add(1);
            if (i >= combos.size()) break;
            std::map<std::string, std::string> assignment = decode(combos[i]);
            TrialResult trial;
            try {
                ExperimentSpec spec = base;
                for (const auto& [key, value] : assignment) apply_setting(spec, key, value);
                trial = run_trial(spec);
            } catch (const Error& err) {
                trial.failed = true;
                trial.failure = err.what();
            }
            trial.index = i;
            trial.assignment = std::move(assignment);
            results[i] = std::move(trial);
        }
    };

    std::size_t workers = std::min(worker_count(), combos.size());
    if (workers <= 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
        for (std::thread& t : pool) t.join();
    }

    GridOutcome out;
    out.total_combinations = total;
    out.sampled = sampled;
    std::vector<double> vals, tests;
    for (TrialResult& trial : results) {
        if (trial.failed) {
            out.failed.push_back(std::move(trial));
        } else {
            vals.push_back(trial.validation);
            tests.push_back(trial.test);
            out.ranked.push_back(std::move(trial));
        }
    }
    std::sort(out.ranked.begin(), out.ranked.end(), [](const TrialResult& a, const TrialResult& b) {
        if (a.validation != b.validation) return a.validation < b.validation;
        return a.index < b.index;
    });
    out.validation_test_spearman = vals.size() >= 2
                                       ? spearman(vals, tests)
                                       : std::numeric_limits<double>::quiet_NaN();
    return out;
}

AggregateReport aggregate_durations(const std::vector<std::pair<std::size_t, double>>& baseline,
                                    const std::vector<std::pair<std::size_t, double>>& saf) {
    if (baseline.empty()) throw ConfigError("aggregate needs at least one duration");
    auto sorted = [](std::vector<std::pair<std::size_t, double>> xs) {
        std::sort(xs.begin(), xs.end(),
                  [](const auto& a, const auto& b) { return a.first < b.first; });
        return xs;
    };
    std::vector<std::pair<std::size_t, double>> b = sorted(baseline), s = sorted(saf);
    if (b.size() != s.size()) throw ConfigError("baseline and SAF duration sets differ in size");
    for (std::size_t i = 0; i < b.size(); ++i)
        if (b[i].first != s[i].first)
            throw ConfigError("baseline and SAF duration sets differ at duration " +
                              std::to_string(b[i].first));
    for (std::size_t i = 1; i < b.size(); ++i)
        if (b[i].first == b[i - 1].first)
            throw ConfigError("duplicate duration " + std::to_string(b[i].first));

    AggregateReport report;
    std::vector<double> bv, sv;
    for (std::size_t i = 0; i < b.size(); ++i) {
        report.points.push_back({b[i].first, b[i].second, s[i].second});
        bv.push_back(b[i].second);
        sv.push_back(s[i].second);
    }
    report.baseline_mean = mean_of(bv);
    report.baseline_std = population_std(bv);
    report.saf_mean = mean_of(sv);
    report.saf_std = population_std(sv);
    report.delta_percent = (report.saf_mean - report.baseline_mean) / report.baseline_mean * 100.0;
    return report;
}

SweepOutcome duration_sweep(const DurationSweepSpec& spec) {
    if (!spec.base.dataset.ar) throw ConfigError("duration sweep needs a generated AR dataset");
    if (spec.durations.empty()) throw ConfigError("duration sweep needs at least one duration");

    GridSpace saf_space = spec.shared_space;
    saf_space.insert(saf_space.end(), spec.saf_space.begin(), spec.saf_space.end());

    SweepOutcome out;
    std::vector<std::pair<std::size_t, double>> baseline_points, saf_points;
    for (std::size_t duration : spec.durations) {
        ExperimentSpec arm = spec.base;
        arm.dataset.ar->duration = duration;
        arm.dataset.ar->seed = CounterRng::mix(spec.master_seed, duration);

        DurationOutcome point;
        point.duration = duration;

        arm.use_saf = false;
        point.baseline = grid_search(spec.shared_space, arm,
                                     CounterRng::mix(spec.master_seed, 2 * duration));
        arm.use_saf = true;
        point.saf = grid_search(saf_space, arm,
                                CounterRng::mix(spec.master_seed, 2 * duration + 1));

        if (point.baseline.ranked.empty())
            throw ConfigError("every baseline trial failed at duration " +
                              std::to_string(duration));
        if (point.saf.ranked.empty())
            throw ConfigError("every SAF trial failed at duration " + std::to_string(duration));

        baseline_points.emplace_back(duration, point.baseline.ranked.front().test);
        saf_points.emplace_back(duration, point.saf.ranked.front().test);
        out.durations.push_back(std::move(point));
    }
    out.aggregate = aggregate_durations(baseline_points, saf_points);
    return out;
}

AblationReport ablation_battery(const ExperimentSpec& spec) {
    if (!spec.use_saf) throw ConfigError("the ablation battery compares SAF variants");
    static const std::pair<const char*, Ablation> kRows[] = {
        {"SAF without updating the decoder", Ablation::NoDecoderUpdate},
        {"SAF without updating the encoder", Ablation::NoEncoderUpdate},
        {"SAF without error signal", Ablation::NoErrorSignal},
        {"SAF", Ablation::None},
    };
    AblationReport report;
    for (const auto& [label, ablation] : kRows) {
        ExperimentSpec variant = spec;
        variant.ablation = ablation;
        AblationRow row;
        row.label = label;
        row.ablation = ablation;
        row.trial = run_trial(variant);
        report.rows.push_back(std::move(row));
    }
    return report;
}

namespace {

nlohmann::ordered_json seed_json(const SeedRun& run) {
    nlohmann::ordered_json doc;
    doc["seed"] = run.seed;
    doc["failed"] = run.failed;
    doc["failure"] = run.failure;
    doc["best_validation"] = run.best_validation;
    doc["test_at_best"] = run.test_at_best;
    doc["best_iteration"] = run.best_iteration;
    doc["validation_curve"] = run.validation_curve;
    return doc;
}

} // namespace

void write_seed_records(const std::string& dir, const std::string& dataset,
                        const std::string& variant, const TrialResult& trial) {
    std::filesystem::create_directories(dir);
    for (const SeedRun& run : trial.seeds) {
        nlohmann::ordered_json doc;
        doc["dataset"] = dataset;
        doc["variant"] = variant;
        nlohmann::ordered_json body = seed_json(run);
        doc.update(body);
        std::string name = dataset + "_" + variant + "_" + std::to_string(run.seed) + ".json";
        atomic_write_file(dir + "/" + name, doc.dump(2) + "\n");
    }
}

void write_summary_json(const std::string& path, const std::string& dataset,
                        const GridOutcome& outcome) {
    nlohmann::ordered_json doc;
    doc["dataset"] = dataset;
    doc["total_combinations"] = outcome.total_combinations;
    doc["sampled"] = outcome.sampled;
    if (std::isnan(outcome.validation_test_spearman))
        doc["spearman_validation_test"] = nullptr;
    else
        doc["spearman_validation_test"] = outcome.validation_test_spearman;

    auto trial_json = [](const TrialResult& trial) {
        nlohmann::ordered_json t;
        t["index"] = trial.index;
        t["assignment"] = trial.assignment;
        t["validation"] = trial.validation;
        t["test"] = trial.test;
        t["test_median"] = trial.test_median;
        nlohmann::ordered_json seeds = nlohmann::ordered_json::array();
        for (const SeedRun& run : trial.seeds) seeds.push_back(seed_json(run));
        t["seeds"] = seeds;
        return t;
    };

    nlohmann::ordered_json ranked = nlohmann::ordered_json::array();
    for (const TrialResult& trial : outcome.ranked) ranked.push_back(trial_json(trial));
    doc["trials"] = ranked;

    nlohmann::ordered_json failed = nlohmann::ordered_json::array();
    for (const TrialResult& trial : outcome.failed) {
        nlohmann::ordered_json f;
        f["index"] = trial.index;
        f["assignment"] = trial.assignment;
        f["failure"] = trial.failure;
        failed.push_back(f);
    }
    doc["failed"] = failed;
    atomic_write_file(path, doc.dump(2) + "\n");
}

void write_aggregate_json(const std::string& path, const AggregateReport& report) {
    nlohmann::ordered_json doc;
    nlohmann::ordered_json points = nlohmann::ordered_json::array();
    for (const DurationPoint& p : report.points) {
        nlohmann::ordered_json row;
        row["duration"] = p.duration;
        row["baseline"] = p.baseline;
        row["saf"] = p.saf;
        row["delta_percent"] = p.delta_percent();
        points.push_back(row);
    }
    doc["points"] = points;
    doc["baseline_mean"] = report.baseline_mean;
    doc["baseline_std"] = report.baseline_std;
    doc["saf_mean"] = report.saf_mean;
    doc["saf_std"] = report.saf_std;
    doc["delta_percent"] = report.delta_percent;
    atomic_write_file(path, doc.dump(2) + "\n");
}

void write_sweep_csv(const std::string& path, const AggregateReport& report) {
    std::string text = "duration,baseline,saf,delta_percent\n";
    for (const DurationPoint& p : report.points) {
        text += std::to_string(p.duration);
        text += "," + format_full(p.baseline);
        text += "," + format_full(p.saf);
        text += "," + format_full(p.delta_percent());
        text += "\n";
    }
    atomic_write_file(path, text);
}

} // namespace saf
