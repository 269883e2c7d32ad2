#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "saf/panel.hpp"
#include "saf/saf.hpp"
#include "saf/synthetic.hpp"

namespace saf {

/// Pooled forecast-error metric over all (anchor, horizon step) pairs.
/// Lengths must match and be non-zero; ShapeError otherwise.
double metric(LossKind kind, const std::vector<double>& forecasts,
              const std::vector<double>& targets);

/// Rank correlation in [-1, 1] with ties resolved by average ranks.
/// Inputs must have equal length >= 2 (ShapeError).  When either side has
/// zero rank variance the coefficient is undefined and NaN is returned
/// (serialized as null in reports).
double spearman(const std::vector<double>& xs, const std::vector<double>& ys);

/// Where the training data comes from: a generated autoregressive process
/// or CSV files on disk.
struct DatasetSpec {
    std::optional<ArProcessSpec> ar;
    std::string panel_path;   // used when !ar
    std::string static_path;  // optional
    std::string schema_path;  // JSON sidecar naming the target
    SplitSpec split;
    NormalizationMode normalization = NormalizationMode::Global;

    PanelDataset load() const;
    std::string label() const;  // variant name or panel file stem
    void validate() const;
};

/// One experiment: dataset, model settings, training budget, seeds.
/// `config` carries the forecasting geometry and both learning rates;
/// `use_saf` false runs the plain encoder-decoder baseline instead.
struct ExperimentSpec {
    DatasetSpec dataset;
    SafConfig config;
    bool use_saf = true;
    Ablation ablation = Ablation::None;
    std::size_t hidden_units = 16;
    std::size_t batch_size = 64;
    std::size_t max_iterations = 300;
    std::size_t eval_every = 50;
    std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
    LossKind eval_metric = LossKind::MSE;

    void validate() const;
};

/// Applies one textual hyperparameter setting (grid axes and CLI overrides
/// share this choke point).  Known keys: batch_size, train_rate,
/// adapt_rate, units, window, mask, horizon, merge, use_error_signal,
/// adapt_steps, masked_only, loss, metric, max_iterations, eval_every.
/// ConfigError on unknown keys or malformed values.
void apply_setting(ExperimentSpec& spec, const std::string& key, const std::string& value);

/// Pipeline phases for access instrumentation.  Training itself consumes
/// only materialized windows, so dataset rows are touched while fitting
/// statistics and while building each split's windows.
enum class RunPhase : std::uint8_t { Statistics, TrainingWindows, Selection, TestEval };

using PhaseObserver = std::function<void(RunPhase, std::size_t entity, std::size_t t)>;

/// Outcome of one seeded training run.  Validation is evaluated every
/// eval_every iterations plus once at the end; the best-validation bundle
/// is snapshotted and the test metric comes from that snapshot only.
/// Metrics are reported on the original data scale.
struct SeedRun {
    std::uint64_t seed = 0;
    bool failed = false;
    std::string failure;
    double best_validation = 0.0;
    double test_at_best = 0.0;
    std::size_t best_iteration = 0;
    std::vector<double> validation_curve;  // one entry per evaluation
};

/// When best_bundle is given and the run succeeds, it receives the weight
/// snapshot behind test_at_best (the best-validation checkpoint).
SeedRun run_seed(const ExperimentSpec& spec, std::uint64_t seed,
                 const PhaseObserver& observer = {}, ModelBundle* best_bundle = nullptr);

/// One hyperparameter assignment run over every configured seed.  A trial
/// fails when any seed fails, so rankings never mix seed subsets.
/// wall_seconds is in-memory diagnostics only and never written to files.
struct TrialResult {
    std::size_t index = 0;
    std::map<std::string, std::string> assignment;
    std::vector<SeedRun> seeds;
    bool failed = false;
    std::string failure;
    double validation = 0.0;   // mean of per-seed best validation
    double test = 0.0;         // mean of per-seed test at best checkpoint
    double test_median = 0.0;
    double wall_seconds = 0.0;
};

/// When best_bundle is given and at least one seed succeeds, it receives the
/// checkpoint of the seed with the lowest best_validation.
TrialResult run_trial(const ExperimentSpec& spec, ModelBundle* best_bundle = nullptr);

/// Ordered hyperparameter axes: name -> candidate values as text.
using GridSpace = std::vector<std::pair<std::string, std::vector<std::string>>>;

struct GridOutcome {
    std::vector<TrialResult> ranked;  // succeeded trials, validation ascending,
                                      // ties broken by earlier trial index
    std::vector<TrialResult> failed;
    std::size_t total_combinations = 0;
    bool sampled = false;
    double validation_test_spearman = 0.0;  // NaN when under two trials
};

/// Exhaustive Cartesian sweep when the product is at most cap_exhaustive,
/// otherwise a seeded uniform sample of sample_size distinct combinations
/// (enumerated in combination order either way; the last axis varies
/// fastest).  Trials run on a worker pool sized by worker_count().
GridOutcome grid_search(const GridSpace& space, const ExperimentSpec& base,
                        std::uint64_t master_seed, std::size_t cap_exhaustive = 256,
                        std::size_t sample_size = 100);

/// Workers used for trial execution: the SAF_WORKERS environment variable
/// when set, otherwise the hardware concurrency, never less than one.
std::size_t worker_count();

struct DurationPoint {
    std::size_t duration = 0;
    double baseline = 0.0;
    double saf = 0.0;
    double delta_percent() const { return (saf - baseline) / baseline * 100.0; }
};

/// Mean and population std of the test metric across durations, plus the
/// percent change of the SAF mean against the baseline mean.
struct AggregateReport {
    std::vector<DurationPoint> points;
    double baseline_mean = 0.0;
    double baseline_std = 0.0;
    double saf_mean = 0.0;
    double saf_std = 0.0;
    double delta_percent = 0.0;
};

/// Pairs the two series by duration; the duration sets must match exactly
/// (ConfigError otherwise) and be non-empty.
AggregateReport aggregate_durations(const std::vector<std::pair<std::size_t, double>>& baseline,
                                    const std::vector<std::pair<std::size_t, double>>& saf);

/// Paired baseline/SAF comparison over several dataset durations: per
/// duration, each arm grid-searches its space, the best-validation trial
/// supplies the test metric, and the duration points aggregate.  Both arms
/// share the dataset realization (seeded by duration) and the seed list.
struct DurationSweepSpec {
    ExperimentSpec base;                  // dataset.ar must be set
    std::vector<std::size_t> durations;
    GridSpace shared_space;               // applied to both arms
    GridSpace saf_space;                  // extra SAF-only axes
    std::uint64_t master_seed = 0;
};

struct DurationOutcome {
    std::size_t duration = 0;
    GridOutcome baseline;
    GridOutcome saf;
};

struct SweepOutcome {
    std::vector<DurationOutcome> durations;
    AggregateReport aggregate;
};

SweepOutcome duration_sweep(const DurationSweepSpec& spec);

/// The four method variants compared by the ablation study, run with
/// shared data and seeds; rows keep a fixed order and labeling.
struct AblationRow {
    std::string label;
    Ablation ablation = Ablation::None;
    TrialResult trial;
};

struct AblationReport {
    std::vector<AblationRow> rows;
};

AblationReport ablation_battery(const ExperimentSpec& spec);

/// Report writers.  All files are written atomically and contain no
/// wall-clock or host-specific data, so reruns are byte-identical.
/// Seed records are named `<dataset>_<variant>_<seed>.json`.
void write_seed_records(const std::string& dir, const std::string& dataset,
                        const std::string& variant, const TrialResult& trial);
void write_summary_json(const std::string& path, const std::string& dataset,
                        const GridOutcome& outcome);
void write_aggregate_json(const std::string& path, const AggregateReport& report);
void write_sweep_csv(const std::string& path, const AggregateReport& report);

} // namespace saf
