#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "saf/error.hpp"
#include "saf/harness.hpp"
#include "saf/io.hpp"

namespace {

std::string tmp_path(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / "saf_harness_tests";
    std::filesystem::create_directories(dir);
    return (dir / name).string();
}

// AR(1) panel small enough that a full trial takes well under a second
saf::ExperimentSpec tiny_experiment() {
    saf::ExperimentSpec spec;
    saf::ArProcessSpec ar;
    ar.variant = saf::ArVariant::AR4;
    ar.duration = 260;
    ar.seed = 42;
    spec.dataset.ar = ar;
    spec.dataset.split = {30, 30};
    spec.config.window = 8;
    spec.config.mask = 4;
    spec.config.horizon = 2;
    spec.config.adapt_rate = 1e-3;
    spec.config.train_rate = 1e-2;
    spec.hidden_units = 4;
    spec.batch_size = 4;
    spec.max_iterations = 6;
    spec.eval_every = 3;
    spec.seeds = {1, 2};
    return spec;
}

} // namespace

TEST_CASE("pooled forecast metrics") {
    CHECK(saf::metric(saf::LossKind::MSE, {1.0, 2.0}, {1.0, 2.0}) == 0.0);
    CHECK(saf::metric(saf::LossKind::MSE, {1.0, 3.0}, {0.0, 1.0}) == 2.5);
    CHECK(saf::metric(saf::LossKind::MAE, {1.0, 3.0}, {0.0, 1.0}) == 1.5);
    CHECK_THROWS_AS(saf::metric(saf::LossKind::MSE, {1.0}, {1.0, 2.0}), saf::ShapeError);
    CHECK_THROWS_AS(saf::metric(saf::LossKind::MSE, {}, {}), saf::ShapeError);
}

TEST_CASE("spearman on plain orderings") {
    CHECK(saf::spearman({1, 2, 3, 4}, {10, 20, 30, 40}) == 1.0);
    CHECK(saf::spearman({1, 2, 3, 4}, {40, 30, 20, 10}) == -1.0);
    CHECK(saf::spearman({1, 2, 3, 4}, {2, 1, 4, 3}) == 0.6);
    CHECK_THROWS_AS(saf::spearman({1, 2}, {1, 2, 3}), saf::ShapeError);
    CHECK_THROWS_AS(saf::spearman({1}, {1}), saf::ShapeError);
    CHECK_THROWS_AS(saf::spearman({}, {}), saf::ShapeError);
    CHECK(std::isnan(saf::spearman({1, 1}, {1, 2})));
    CHECK(std::isnan(saf::spearman({1, 2}, {5, 5})));
}

TEST_CASE("spearman matches the exact rational form on every tie-free ordering") {
    for (std::size_t n = 2; n <= 6; ++n) {
        std::vector<double> xs(n);
        std::iota(xs.begin(), xs.end(), 1.0);
        std::vector<int> perm(n);
        std::iota(perm.begin(), perm.end(), 1);
        do {
            std::vector<double> ys(perm.begin(), perm.end());
            long long d2 = 0;
            for (std::size_t i = 0; i < n; ++i) {
                long long d = static_cast<long long>(i) + 1 - perm[i];
                d2 += d * d;
            }
            const long long scale = static_cast<long long>(n) *
                                    (static_cast<long long>(n) * static_cast<long long>(n) - 1);
            double expected =
                static_cast<double>(scale - 6 * d2) / static_cast<double>(scale);
            CHECK(saf::spearman(xs, ys) == expected);
        } while (std::next_permutation(perm.begin(), perm.end()));
    }
}

TEST_CASE("spearman averages ranks across ties") {
    CHECK(saf::spearman({1, 1, 2}, {1, 1, 2}) == 1.0);
    CHECK(saf::spearman({1, 1, 2, 2}, {1, 2, 3, 4}) == 4.0 / std::sqrt(20.0));
}

TEST_CASE("duration aggregation reproduces the mean-shift formula") {
    auto rep = saf::aggregate_durations({{1000, 0.002061}}, {{1000, 0.001859}});
    CHECK(rep.baseline_mean == 0.002061);
    CHECK(rep.saf_mean == 0.001859);
    CHECK(rep.baseline_std == 0.0);
    CHECK(rep.saf_std == 0.0);
    double expected = (0.001859 - 0.002061) / 0.002061 * 100.0;
    CHECK(std::fabs(rep.delta_percent - expected) <= 1e-12);
    CHECK(std::fabs(rep.delta_percent + 9.81) <= 0.01);
    REQUIRE(rep.points.size() == 1);
    CHECK(rep.points[0].duration == 1000);
    CHECK(std::fabs(rep.points[0].delta_percent() - expected) <= 1e-12);
}

TEST_CASE("duration aggregation sorts, matches and validates the two arms") {
    // saf arm deliberately out of order; pairing is by duration, not position
    auto rep = saf::aggregate_durations({{1000, 2.0}, {2000, 4.0}}, {{2000, 2.0}, {1000, 1.0}});
    REQUIRE(rep.points.size() == 2);
    CHECK(rep.points[0].duration == 1000);
    CHECK(rep.points[0].baseline == 2.0);
    CHECK(rep.points[0].saf == 1.0);
    CHECK(rep.points[1].duration == 2000);
    CHECK(rep.baseline_mean == 3.0);
    CHECK(rep.saf_mean == 1.5);
    CHECK(rep.baseline_std == 1.0);
    CHECK(rep.delta_percent == -50.0);

    // recomputing the summary from the points must agree
    double bm = 0.0, sm = 0.0;
    for (const auto& p : rep.points) {
        bm += p.baseline;
        sm += p.saf;
    }
    bm /= static_cast<double>(rep.points.size());
    sm /= static_cast<double>(rep.points.size());
    CHECK(std::fabs((sm - bm) / bm * 100.0 - rep.delta_percent) <= 1e-12);

    auto zero = saf::aggregate_durations({{500, 3.0}}, {{500, 3.0}});
    CHECK(zero.delta_percent == 0.0);

    CHECK_THROWS_AS(saf::aggregate_durations({{1000, 1.0}}, {{2000, 1.0}}), saf::ConfigError);
    CHECK_THROWS_AS(saf::aggregate_durations({{1000, 1.0}, {2000, 1.0}}, {{1000, 1.0}}),
                    saf::ConfigError);
    CHECK_THROWS_AS(saf::aggregate_durations({}, {}), saf::ConfigError);
    CHECK_THROWS_AS(saf::aggregate_durations({{1000, 1.0}, {1000, 2.0}},
                                             {{1000, 1.0}, {1000, 2.0}}),
                    saf::ConfigError);
}

TEST_CASE("settings apply to the right knobs and reject junk") {
    saf::ExperimentSpec spec = tiny_experiment();
    saf::apply_setting(spec, "batch_size", "8");
    CHECK(spec.batch_size == 8);
    saf::apply_setting(spec, "train_rate", "0.5");
    CHECK(spec.config.train_rate == 0.5);
    saf::apply_setting(spec, "adapt_rate", "1e-4");
    CHECK(spec.config.adapt_rate == 1e-4);
    saf::apply_setting(spec, "units", "32");
    CHECK(spec.hidden_units == 32);
    saf::apply_setting(spec, "window", "10");
    CHECK(spec.config.window == 10);
    saf::apply_setting(spec, "mask", "5");
    CHECK(spec.config.mask == 5);
    saf::apply_setting(spec, "horizon", "3");
    CHECK(spec.config.horizon == 3);
    saf::apply_setting(spec, "merge", "concatenation");
    CHECK(spec.config.merge == saf::MergeMode::Concatenation);
    saf::apply_setting(spec, "use_error_signal", "false");
    CHECK_FALSE(spec.config.use_error_signal);
    saf::apply_setting(spec, "adapt_steps", "2");
    CHECK(spec.config.adapt_steps == 2);
    saf::apply_setting(spec, "masked_only", "true");
    CHECK(spec.config.masked_only_backcast_loss);
    saf::apply_setting(spec, "loss", "mae");
    CHECK(spec.config.loss == saf::LossKind::MAE);
    saf::apply_setting(spec, "metric", "mae");
    CHECK(spec.eval_metric == saf::LossKind::MAE);
    saf::apply_setting(spec, "max_iterations", "100");
    CHECK(spec.max_iterations == 100);
    saf::apply_setting(spec, "eval_every", "10");
    CHECK(spec.eval_every == 10);

    CHECK_THROWS_AS(saf::apply_setting(spec, "learning_rate", "0.1"), saf::ConfigError);
    CHECK_THROWS_AS(saf::apply_setting(spec, "batch_size", "abc"), saf::ConfigError);
    CHECK_THROWS_AS(saf::apply_setting(spec, "batch_size", "-3"), saf::ConfigError);
    CHECK_THROWS_AS(saf::apply_setting(spec, "train_rate", "much"), saf::ConfigError);
    CHECK_THROWS_AS(saf::apply_setting(spec, "use_error_signal", "1"), saf::ConfigError);
    CHECK_THROWS_AS(saf::apply_setting(spec, "merge", "addit"), saf::ConfigError);
}

TEST_CASE("experiment validation rejects impossible setups") {
    saf::ExperimentSpec spec = tiny_experiment();
    spec.max_iterations = 0;
    CHECK_THROWS_AS(saf::run_trial(spec), saf::ConfigError);

    spec = tiny_experiment();
    spec.seeds.clear();
    CHECK_THROWS_AS(saf::run_trial(spec), saf::ConfigError);

    spec = tiny_experiment();
    spec.batch_size = 0;
    CHECK_THROWS_AS(spec.validate(), saf::ConfigError);
    spec = tiny_experiment();
    spec.eval_every = 0;
    CHECK_THROWS_AS(spec.validate(), saf::ConfigError);
    spec = tiny_experiment();
    spec.hidden_units = 0;
    CHECK_THROWS_AS(spec.validate(), saf::ConfigError);

    saf::DatasetSpec ds;
    CHECK_THROWS_AS(ds.validate(), saf::ConfigError);  // neither generated nor loaded
    ds.panel_path = "panel.csv";
    CHECK_THROWS_AS(ds.validate(), saf::ConfigError);  // schema missing
    ds.schema_path = "panel.json";
    ds.ar = saf::ArProcessSpec{};
    CHECK_THROWS_AS(ds.validate(), saf::ConfigError);  // both at once
}

TEST_CASE("dataset labels name what will be reported") {
    saf::DatasetSpec ds;
    ds.ar = saf::ArProcessSpec{};
    ds.ar->variant = saf::ArVariant::AR2;
    CHECK(ds.label() == "ar2");
    saf::DatasetSpec csv;
    csv.panel_path = "/data/energy_panel.csv";
    csv.schema_path = "/data/energy_panel.json";
    CHECK(csv.label() == "energy_panel");
}

TEST_CASE("seed runs are deterministic") {
    saf::ExperimentSpec spec = tiny_experiment();
    saf::TrialResult a = saf::run_trial(spec);
    saf::TrialResult b = saf::run_trial(spec);
    REQUIRE_FALSE(a.failed);
    CHECK(a.validation == b.validation);
    CHECK(a.test == b.test);
    CHECK(a.test_median == b.test_median);
    REQUIRE(a.seeds.size() == b.seeds.size());
    for (std::size_t i = 0; i < a.seeds.size(); ++i) {
        CHECK(a.seeds[i].best_validation == b.seeds[i].best_validation);
        CHECK(a.seeds[i].test_at_best == b.seeds[i].test_at_best);
        CHECK(a.seeds[i].best_iteration == b.seeds[i].best_iteration);
        CHECK(a.seeds[i].validation_curve == b.seeds[i].validation_curve);
    }
    // two evals at iterations 3 and 6
    CHECK(a.seeds[0].validation_curve.size() == 2);
    CHECK(a.seeds[0].best_iteration % 3 == 0);
    // different seeds genuinely differ
    CHECK(a.seeds[0].best_validation != a.seeds[1].best_validation);
}

TEST_CASE("trials hand back the checkpoint of the winning seed") {
    saf::ExperimentSpec spec = tiny_experiment();
    saf::ModelBundle from_trial;
    saf::TrialResult trial = saf::run_trial(spec, &from_trial);
    REQUIRE_FALSE(trial.failed);

    std::uint64_t winner = trial.seeds[0].best_validation <= trial.seeds[1].best_validation
                               ? trial.seeds[0].seed
                               : trial.seeds[1].seed;
    saf::ModelBundle from_seed;
    saf::SeedRun run = saf::run_seed(spec, winner, {}, &from_seed);
    REQUIRE_FALSE(run.failed);
    CHECK(from_trial.value_hash() == from_seed.value_hash());
}

TEST_CASE("a trained model beats the unconditional mean on AR data") {
    saf::ExperimentSpec spec = tiny_experiment();
    spec.dataset.ar->duration = 400;
    spec.dataset.ar->seed = 9;
    spec.dataset.split = {70, 70};
    spec.config.window = 10;
    spec.config.mask = 5;
    spec.config.horizon = 1;
    spec.config.train_rate = 3e-2;
    spec.hidden_units = 8;
    spec.batch_size = 8;
    spec.max_iterations = 800;
    spec.eval_every = 50;
    spec.seeds = {3};

    saf::SeedRun run = saf::run_seed(spec, 3);
    REQUIRE_FALSE(run.failed);
    CHECK(run.validation_curve.size() == 16);
    CHECK(run.best_iteration % 50 == 0);

    // yardstick: always forecasting the train mean, scored on the same split regions
    saf::PanelDataset raw = spec.dataset.load();
    const auto& y = raw.entities[0].values;
    double train_mean = 0.0;
    for (std::size_t t = 0; t < 260; ++t) train_mean += y.at(t, 0);
    train_mean /= 260.0;
    auto mean_mse = [&](std::size_t lo, std::size_t hi) {
        double sum = 0.0;
        for (std::size_t t = lo; t < hi; ++t) {
            double d = y.at(t, 0) - train_mean;
            sum += d * d;
        }
        return sum / static_cast<double>(hi - lo);
    };

    CHECK(run.best_validation < mean_mse(260, 330));
    CHECK(run.test_at_best < mean_mse(330, 400));
}

TEST_CASE("phase observer confirms the causal data flow") {
    saf::ExperimentSpec spec = tiny_experiment();
    spec.dataset.ar->duration = 300;
    spec.dataset.split = {100, 100};
    spec.config.window = 30;
    spec.config.mask = 15;
    spec.config.horizon = 5;
    spec.hidden_units = 2;
    spec.batch_size = 2;
    spec.max_iterations = 2;
    spec.eval_every = 1;

    std::vector<std::pair<saf::RunPhase, std::size_t>> events;
    saf::SeedRun run = saf::run_seed(spec, 1, [&](saf::RunPhase phase, std::size_t, std::size_t t) {
        events.emplace_back(phase, t);
    });
    REQUIRE_FALSE(run.failed);
    REQUIRE_FALSE(events.empty());

    std::size_t stat_rows = 0;
    bool selection_reached_val = false, test_reached_test = false;
    int last_phase = -1;
    for (const auto& [phase, row] : events) {
        int p = static_cast<int>(phase);
        CHECK(p >= last_phase);  // phases never interleave
        last_phase = p;
        switch (phase) {
        case saf::RunPhase::Statistics:
            ++stat_rows;
            CHECK(row < 100);
            break;
        case saf::RunPhase::TrainingWindows:
            CHECK(row < 100);
            break;
        case saf::RunPhase::Selection:
            CHECK(row < 200);
            if (row >= 100) selection_reached_val = true;
            break;
        case saf::RunPhase::TestEval:
            CHECK(row < 300);
            if (row >= 200) test_reached_test = true;
            break;
        }
    }
    CHECK(stat_rows == 100);
    CHECK(selection_reached_val);
    CHECK(test_reached_test);
}

TEST_CASE("exploding adaptation marks the trial failed instead of crashing") {
    saf::ExperimentSpec spec = tiny_experiment();
    spec.config.adapt_rate = 1e200;
    spec.config.adapt_steps = 2;
    spec.seeds = {1};
    saf::TrialResult trial = saf::run_trial(spec);
    CHECK(trial.failed);
    CHECK_FALSE(trial.failure.empty());
    REQUIRE(trial.seeds.size() == 1);
    CHECK(trial.seeds[0].failed);
    CHECK_FALSE(trial.seeds[0].failure.empty());
}

TEST_CASE("exhaustive grids enumerate every combination with the last axis fastest") {
    saf::ExperimentSpec base = tiny_experiment();
    base.max_iterations = 4;
    base.eval_every = 2;
    base.seeds = {1};
    saf::GridSpace space{{"batch_size", {"2", "4"}}, {"units", {"2", "3"}}};

    saf::GridOutcome out = saf::grid_search(space, base, 7);
    CHECK(out.total_combinations == 4);
    CHECK_FALSE(out.sampled);
    CHECK(out.failed.empty());
    REQUIRE(out.ranked.size() == 4);

    std::map<std::size_t, std::map<std::string, std::string>> byindex;
    for (const auto& trial : out.ranked) byindex[trial.index] = trial.assignment;
    REQUIRE(byindex.size() == 4);
    std::map<std::string, std::string> c0{{"batch_size", "2"}, {"units", "2"}};
    std::map<std::string, std::string> c1{{"batch_size", "2"}, {"units", "3"}};
    std::map<std::string, std::string> c2{{"batch_size", "4"}, {"units", "2"}};
    std::map<std::string, std::string> c3{{"batch_size", "4"}, {"units", "3"}};
    CHECK(byindex[0] == c0);
    CHECK(byindex[1] == c1);
    CHECK(byindex[2] == c2);
    CHECK(byindex[3] == c3);

    for (std::size_t i = 0; i + 1 < out.ranked.size(); ++i)
        CHECK(out.ranked[i].validation <= out.ranked[i + 1].validation);
    CHECK_FALSE(std::isnan(out.validation_test_spearman));
    CHECK(std::fabs(out.validation_test_spearman) <= 1.0);

    CHECK_THROWS_AS(saf::grid_search({}, base, 7), saf::ConfigError);
    CHECK_THROWS_AS(saf::grid_search({{"units", {}}}, base, 7), saf::ConfigError);
}

TEST_CASE("oversized grids fall back to a seeded distinct sample") {
    saf::ExperimentSpec base = tiny_experiment();
    base.max_iterations = 2;
    base.eval_every = 2;
    base.seeds = {1};
    saf::GridSpace space{{"batch_size", {"2", "4"}},
                         {"units", {"2", "3"}},
                         {"adapt_steps", {"1", "2"}}};

    saf::GridOutcome a = saf::grid_search(space, base, 11, 4, 3);
    saf::GridOutcome b = saf::grid_search(space, base, 11, 4, 3);
    CHECK(a.sampled);
    CHECK(a.total_combinations == 8);
    CHECK(a.ranked.size() + a.failed.size() == 3);
    REQUIRE(a.ranked.size() == b.ranked.size());
    for (std::size_t i = 0; i < a.ranked.size(); ++i) {
        CHECK(a.ranked[i].index == b.ranked[i].index);
        CHECK(a.ranked[i].assignment == b.ranked[i].assignment);
        CHECK(a.ranked[i].validation == b.ranked[i].validation);
        CHECK(a.ranked[i].test == b.ranked[i].test);
    }
}

TEST_CASE("grids keep diverged combinations out of the ranking but report them") {
    saf::ExperimentSpec base = tiny_experiment();
    base.max_iterations = 4;
    base.eval_every = 2;
    base.seeds = {1};
    base.config.adapt_steps = 2;
    saf::GridSpace space{{"adapt_rate", {"1e200", "0.001"}}};

    saf::GridOutcome out = saf::grid_search(space, base, 5);
    REQUIRE(out.ranked.size() == 1);
    REQUIRE(out.failed.size() == 1);
    CHECK(out.ranked[0].assignment.at("adapt_rate") == "0.001");
    CHECK(out.failed[0].assignment.at("adapt_rate") == "1e200");
    CHECK_FALSE(out.failed[0].failure.empty());
    CHECK(std::isnan(out.validation_test_spearman));  // one survivor is not a correlation
}

TEST_CASE("report files are byte-identical across reruns") {
    saf::ExperimentSpec base = tiny_experiment();
    base.max_iterations = 4;
    base.eval_every = 2;
    base.seeds = {1};
    saf::GridSpace space{{"batch_size", {"2", "4"}}};

    saf::GridOutcome out1 = saf::grid_search(space, base, 7);
    saf::GridOutcome out2 = saf::grid_search(space, base, 7);
    std::string p1 = tmp_path("summary_a.json");
    std::string p2 = tmp_path("summary_b.json");
    saf::write_summary_json(p1, "ar4", out1);
    saf::write_summary_json(p2, "ar4", out2);
    std::string text = saf::read_file(p1);
    CHECK(text == saf::read_file(p2));
    CHECK(text.find("\"dataset\": \"ar4\"") != std::string::npos);
    CHECK(text.find("wall") == std::string::npos);  // no timing leaks into reports

    std::string d1 = tmp_path("records_a");
    std::string d2 = tmp_path("records_b");
    saf::write_seed_records(d1, "ar4", "saf", out1.ranked.front());
    saf::write_seed_records(d2, "ar4", "saf", out2.ranked.front());
    CHECK(saf::read_file(d1 + "/ar4_saf_1.json") == saf::read_file(d2 + "/ar4_saf_1.json"));

    saf::AggregateReport rep = saf::aggregate_durations({{1000, 2.0}, {2000, 4.0}},
                                                        {{1000, 1.0}, {2000, 2.0}});
    std::string a1 = tmp_path("aggregate_a.json");
    std::string a2 = tmp_path("aggregate_b.json");
    saf::write_aggregate_json(a1, rep);
    saf::write_aggregate_json(a2, rep);
    CHECK(saf::read_file(a1) == saf::read_file(a2));

    std::string c1 = tmp_path("sweep_a.csv");
    saf::write_sweep_csv(c1, rep);
    std::string csv = saf::read_file(c1);
    CHECK(csv.rfind("duration,baseline,saf,delta_percent\n", 0) == 0);
    CHECK(csv.find("\n1000,2,1,-50\n") != std::string::npos);
}

TEST_CASE("the ablation battery reports the four labeled variants") {
    saf::ExperimentSpec spec = tiny_experiment();
    saf::AblationReport report = saf::ablation_battery(spec);
    REQUIRE(report.rows.size() == 4);
    CHECK(report.rows[0].label == "SAF without updating the decoder");
    CHECK(report.rows[1].label == "SAF without updating the encoder");
    CHECK(report.rows[2].label == "SAF without error signal");
    CHECK(report.rows[3].label == "SAF");
    CHECK(report.rows[0].ablation == saf::Ablation::NoDecoderUpdate);
    CHECK(report.rows[1].ablation == saf::Ablation::NoEncoderUpdate);
    CHECK(report.rows[2].ablation == saf::Ablation::NoErrorSignal);
    CHECK(report.rows[3].ablation == saf::Ablation::None);
    for (const auto& row : report.rows) CHECK_FALSE(row.trial.failed);
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = i + 1; j < 4; ++j)
            CHECK(report.rows[i].trial.test != report.rows[j].trial.test);

    saf::ExperimentSpec baseline = tiny_experiment();
    baseline.use_saf = false;
    CHECK_THROWS_AS(saf::ablation_battery(baseline), saf::ConfigError);
}

TEST_CASE("duration sweeps pair both arms over a shared data realization") {
    saf::DurationSweepSpec sweep;
    sweep.base = tiny_experiment();
    sweep.base.hidden_units = 3;
    sweep.base.batch_size = 2;
    sweep.base.max_iterations = 4;
    sweep.base.eval_every = 2;
    sweep.base.seeds = {1};
    sweep.durations = {240, 260};
    sweep.shared_space = {{"train_rate", {"0.01"}}};
    sweep.saf_space = {{"adapt_rate", {"0.001"}}};
    sweep.master_seed = 99;

    saf::SweepOutcome out = saf::duration_sweep(sweep);
    REQUIRE(out.durations.size() == 2);
    CHECK(out.durations[0].duration == 240);
    CHECK(out.durations[1].duration == 260);
    for (const auto& point : out.durations) {
        REQUIRE(point.baseline.ranked.size() == 1);
        REQUIRE(point.saf.ranked.size() == 1);
        // only the SAF arm searches over the adaptation rate
        CHECK(point.baseline.ranked[0].assignment.count("adapt_rate") == 0);
        CHECK(point.saf.ranked[0].assignment.at("adapt_rate") == "0.001");
    }
    REQUIRE(out.aggregate.points.size() == 2);
    CHECK(out.aggregate.points[0].duration == 240);
    CHECK(std::isfinite(out.aggregate.delta_percent));
    CHECK(out.aggregate.points[0].baseline == out.durations[0].baseline.ranked[0].test);
    CHECK(out.aggregate.points[0].saf == out.durations[0].saf.ranked[0].test);

    saf::SweepOutcome again = saf::duration_sweep(sweep);
    CHECK(again.aggregate.delta_percent == out.aggregate.delta_percent);

    saf::DurationSweepSpec empty = sweep;
    empty.durations.clear();
    CHECK_THROWS_AS(saf::duration_sweep(empty), saf::ConfigError);
}

TEST_CASE("worker count honors the environment override") {
    const char* before = std::getenv("SAF_WORKERS");
    std::string saved = before ? before : "";

    setenv("SAF_WORKERS", "3", 1);
    CHECK(saf::worker_count() == 3);
    setenv("SAF_WORKERS", "0", 1);
    CHECK_THROWS_AS(saf::worker_count(), saf::ConfigError);
    setenv("SAF_WORKERS", "abc", 1);
    CHECK_THROWS_AS(saf::worker_count(), saf::ConfigError);
    unsetenv("SAF_WORKERS");
    CHECK(saf::worker_count() >= 1);

    if (before) setenv("SAF_WORKERS", saved.c_str(), 1);
}
