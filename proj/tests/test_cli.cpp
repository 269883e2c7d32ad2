#include <doctest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "saf/io.hpp"
#include "saf/model.hpp"
#include "saf/panel.hpp"
#include "saf/rng.hpp"
#include "saf/synthetic.hpp"

namespace {

struct CliResult {
    int exit = -1;
    std::string out;
    std::string err;
};

const std::string& work_dir() {
    static const std::string dir = [] {
        auto d = std::filesystem::temp_directory_path() / "saf_cli_tests";
        std::filesystem::remove_all(d);
        std::filesystem::create_directories(d);
        return d.string();
    }();
    return dir;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

CliResult run_cli(const std::string& args) {
    static int counter = 0;
    std::string out_path = work_dir() + "/stdout_" + std::to_string(counter) + ".txt";
    std::string err_path = work_dir() + "/stderr_" + std::to_string(counter) + ".txt";
    ++counter;
    std::string command = std::string(SAF_CLI_PATH) + " " + args + " >" + out_path + " 2>" +
                          err_path;
    int status = std::system(command.c_str());
    CliResult result;
    result.exit = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    result.out = slurp(out_path);
    result.err = slurp(err_path);
    return result;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
}

// small AR experiment; whole trials finish in well under a second
std::string ar_config_path() {
    static const std::string path = [] {
        std::string p = work_dir() + "/ar_config.json";
        write_text(p, R"({
  "dataset": "ar4",
  "duration": 120,
  "data_seed": 7,
  "validation": 20,
  "test": 20,
  "window": 6,
  "mask": 3,
  "horizon": 2,
  "adapt_rate": 0.001,
  "train_rate": 0.01,
  "units": 3,
  "batch_size": 2,
  "max_iterations": 4,
  "eval_every": 2,
  "seeds": [1, 2]
}
)");
        return p;
    }();
    return path;
}

nlohmann::json parse_file(const std::string& path) {
    return nlohmann::json::parse(saf::read_file(path));
}

} // namespace

TEST_CASE("generate writes a deterministic panel plus schema sidecar") {
    std::string csv = work_dir() + "/gen.csv";
    CliResult r = run_cli("generate --dataset ar4 --duration 50 --seed 7 --out " + csv);
    REQUIRE(r.exit == 0);
    std::string bytes = saf::read_file(csv);
    std::string schema_bytes = saf::read_file(work_dir() + "/gen.json");
    CHECK(schema_bytes.find("\"target\": \"ar4\"") != std::string::npos);

    CliResult again = run_cli("generate --dataset ar4 --duration 50 --seed 7 --out " + csv);
    REQUIRE(again.exit == 0);
    CHECK(saf::read_file(csv) == bytes);

    // CSV values round-trip the generator exactly
    saf::PanelSchema schema = saf::load_schema(work_dir() + "/gen.json");
    saf::PanelDataset panel = saf::load_csv(csv, "", schema);
    REQUIRE(panel.common_length() == 50);
    saf::ArProcessSpec ar;
    ar.variant = saf::ArVariant::AR4;
    ar.duration = 50;
    ar.seed = 7;
    std::vector<double> y = saf::generate_ar(ar);
    for (std::size_t t = 0; t < 50; ++t) CHECK(panel.entities[0].values.at(t, 0) == y[t]);

    // row-count claim for a second variant
    std::string big = work_dir() + "/gen_ar1.csv";
    REQUIRE(run_cli("generate --dataset ar1 --duration 300 --seed 1 --out " + big).exit == 0);
    std::string text = saf::read_file(big);
    std::size_t lines = 0;
    for (char c : text) lines += c == '\n' ? 1 : 0;
    CHECK(lines == 301);  // header + 300 rows

    CliResult bad = run_cli("generate --dataset ar4 --duration 1 --seed 7 --out " + csv);
    CHECK(bad.exit == 1);
    CHECK(bad.err.rfind("saf: error: ", 0) == 0);
    CHECK(run_cli("generate --dataset ar9 --duration 5 --seed 7 --out " + csv).exit == 1);
}

TEST_CASE("train writes the trial result and the winning bundle") {
    std::string dir1 = work_dir() + "/train1";
    CliResult r = run_cli("train --config " + ar_config_path() + " --out " + dir1);
    REQUIRE(r.exit == 0);

    nlohmann::json result = parse_file(dir1 + "/result.json");
    CHECK(result["command"] == "train");
    CHECK(result["dataset"] == "ar4");
    CHECK(result["variant"] == "saf");
    CHECK(result["failed"] == false);
    REQUIRE(result["seeds"].size() == 2);
    CHECK(result["validation"].is_number());
    CHECK(std::isfinite(result["test"].get<double>()));

    std::string meta_text;
    saf::ModelBundle bundle = saf::load_bundle(dir1 + "/model.safp1", &meta_text);
    CHECK(bundle.dims.hidden == 3);
    CHECK(bundle.dims.error_channel);
    nlohmann::json meta = nlohmann::json::parse(meta_text);
    CHECK(meta["seed"] == result["best_seed"]);
    CHECK(meta["ablation"] == "none");
    CHECK(meta["config"]["window"] == 6);

    // rerun produces identical bytes
    std::string dir2 = work_dir() + "/train2";
    REQUIRE(run_cli("train --config " + ar_config_path() + " --out " + dir2).exit == 0);
    CHECK(saf::read_file(dir2 + "/result.json") == saf::read_file(dir1 + "/result.json"));

    // overrides land after the file
    std::string dir3 = work_dir() + "/train3";
    REQUIRE(run_cli("train --config " + ar_config_path() + " --out " + dir3 + " units=4").exit ==
            0);
    CHECK(saf::load_bundle(dir3 + "/model.safp1").dims.hidden == 4);

    // the ablation kind is recorded verbatim
    std::string dir4 = work_dir() + "/train4";
    REQUIRE(run_cli("train --config " + ar_config_path() + " --ablation no-error-signal --out " +
                    dir4)
                .exit == 0);
    nlohmann::json ablated = parse_file(dir4 + "/result.json");
    CHECK(ablated["ablation"] == "no-error-signal");
    CHECK(ablated["variant"] == "no-error-signal");
}

TEST_CASE("baseline training warns about unused adaptation keys") {
    std::string dir = work_dir() + "/train_base";
    CliResult r = run_cli("train --config " + ar_config_path() + " --baseline --out " + dir);
    REQUIRE(r.exit == 0);
    CHECK(r.err.find("unused key 'adapt_rate'") != std::string::npos);

    std::string meta_text;
    saf::ModelBundle bundle = saf::load_bundle(dir + "/model.safp1", &meta_text);
    CHECK_FALSE(bundle.dims.error_channel);
    CHECK(nlohmann::json::parse(meta_text)["baseline"] == true);

    CliResult bad = run_cli("train --config " + ar_config_path() +
                            " --baseline --ablation no-error-signal --out " + dir);
    CHECK(bad.exit == 1);
    CHECK(bad.err.rfind("saf: error: ", 0) == 0);
}

TEST_CASE("evaluate reproduces the recorded metrics exactly") {
    // train on a CSV so evaluate can see the same file
    std::string csv = work_dir() + "/eval_panel.csv";
    REQUIRE(run_cli("generate --dataset ar4 --duration 120 --seed 7 --out " + csv).exit == 0);
    std::string cfg = work_dir() + "/eval_config.json";
    write_text(cfg, R"({
  "dataset": ")" + csv + R"(",
  "validation": 20,
  "test": 20,
  "window": 6,
  "mask": 3,
  "horizon": 2,
  "adapt_rate": 0.001,
  "train_rate": 0.01,
  "units": 3,
  "batch_size": 2,
  "max_iterations": 4,
  "eval_every": 2,
  "seeds": [1, 2]
}
)");
    std::string dir = work_dir() + "/eval_train";
    REQUIRE(run_cli("train --config " + cfg + " --out " + dir).exit == 0);
    nlohmann::json result = parse_file(dir + "/result.json");

    const nlohmann::json* best = nullptr;
    for (const auto& seed : result["seeds"])
        if (!seed["failed"].get<bool>() &&
            (!best || seed["best_validation"].get<double>() <
                          (*best)["best_validation"].get<double>()))
            best = &seed;
    REQUIRE(best != nullptr);

    std::string eval_out = work_dir() + "/eval.json";
    CliResult r = run_cli("evaluate --bundle " + dir + "/model.safp1 --data " + csv +
                          " --split test --out " + eval_out);
    REQUIRE(r.exit == 0);
    nlohmann::json eval = parse_file(eval_out);
    CHECK(eval["value"].get<double>() == (*best)["test_at_best"].get<double>());

    CliResult v = run_cli("evaluate --bundle " + dir + "/model.safp1 --data " + csv +
                          " --split validation --out " + eval_out);
    REQUIRE(v.exit == 0);
    CHECK(parse_file(eval_out)["value"].get<double>() ==
          (*best)["best_validation"].get<double>());

    CliResult missing = run_cli("evaluate --bundle " + work_dir() + "/no_such.safp1 --data " +
                                csv + " --split test");
    CHECK(missing.exit == 1);
    CHECK(missing.err.rfind("saf: error: ", 0) == 0);
    CHECK(run_cli("evaluate --bundle " + dir + "/model.safp1 --data " + csv + " --split train")
              .exit == 1);
}

TEST_CASE("hpo exhausts small spaces and samples big ones deterministically") {
    std::string space = work_dir() + "/space.json";
    write_text(space, R"({"units": [2, 3], "batch_size": [2, 4]}
)");
    std::string out = work_dir() + "/hpo_full.json";
    CliResult r = run_cli("hpo --config " + ar_config_path() + " --space " + space +
                          " --trials 10 --out " + out + " seeds=1");
    REQUIRE(r.exit == 0);
    nlohmann::json full = parse_file(out);
    CHECK(full["sampled"] == false);
    CHECK(full["total_combinations"] == 4);
    CHECK(full["trials"].size() + full["failed"].size() == 4);
    // ranked by validation
    for (std::size_t i = 0; i + 1 < full["trials"].size(); ++i)
        CHECK(full["trials"][i]["validation"].get<double>() <=
              full["trials"][i + 1]["validation"].get<double>());

    std::string sampled_out = work_dir() + "/hpo_sampled.json";
    CliResult s1 = run_cli("hpo --config " + ar_config_path() + " --space " + space +
                           " --trials 3 --master-seed 5 --out " + sampled_out + " seeds=1");
    REQUIRE(s1.exit == 0);
    std::string bytes = saf::read_file(sampled_out);
    nlohmann::json sampled = nlohmann::json::parse(bytes);
    CHECK(sampled["sampled"] == true);
    CHECK(sampled["trials"].size() + sampled["failed"].size() == 3);

    REQUIRE(run_cli("hpo --config " + ar_config_path() + " --space " + space +
                    " --trials 3 --master-seed 5 --out " + sampled_out + " seeds=1")
                .exit == 0);
    CHECK(saf::read_file(sampled_out) == bytes);
}

TEST_CASE("ablate emits the four labeled variants") {
    std::string out = work_dir() + "/ablation.json";
    CliResult r = run_cli("ablate --config " + ar_config_path() + " --out " + out);
    REQUIRE(r.exit == 0);
    nlohmann::json doc = parse_file(out);
    REQUIRE(doc["rows"].size() == 4);
    CHECK(doc["rows"][0]["label"] == "SAF without updating the decoder");
    CHECK(doc["rows"][1]["label"] == "SAF without updating the encoder");
    CHECK(doc["rows"][2]["label"] == "SAF without error signal");
    CHECK(doc["rows"][3]["label"] == "SAF");
    for (const auto& row : doc["rows"]) CHECK(row["failed"] == false);
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = i + 1; j < 4; ++j)
            CHECK(doc["rows"][i]["test"].get<double>() != doc["rows"][j]["test"].get<double>());
}

TEST_CASE("report folds per-duration summaries into the sweep table") {
    std::string dir = work_dir() + "/sweep";
    std::filesystem::create_directories(dir);
    std::string shared = work_dir() + "/shared_space.json";
    std::string safsp = work_dir() + "/saf_space.json";
    write_text(shared, R"({"train_rate": [0.01]}
)");
    write_text(safsp, R"({"train_rate": [0.01], "adapt_rate": [0.001]}
)");
    for (const char* d : {"110", "120"}) {
        REQUIRE(run_cli("hpo --config " + ar_config_path() + " --space " + shared +
                        " --baseline --out " + dir + "/" + d + "_baseline.json duration=" + d +
                        " seeds=1")
                    .exit == 0);
        REQUIRE(run_cli("hpo --config " + ar_config_path() + " --space " + safsp + " --out " +
                        dir + "/" + d + "_saf.json duration=" + d + " seeds=1")
                    .exit == 0);
    }
    std::string csv = work_dir() + "/sweep.csv";
    CliResult r = run_cli("report --sweep " + dir + " --out " + csv);
    REQUIRE(r.exit == 0);

    std::string text = saf::read_file(csv);
    CHECK(text.rfind("duration,baseline,saf,delta_percent\n", 0) == 0);
    CHECK(text.find("\n110,") != std::string::npos);
    CHECK(text.find("\n120,") != std::string::npos);

    nlohmann::json agg = parse_file(work_dir() + "/sweep.json");
    REQUIRE(agg["points"].size() == 2);
    CHECK(agg["points"][0]["duration"] == 110);
    double bm = agg["baseline_mean"].get<double>();
    double sm = agg["saf_mean"].get<double>();
    CHECK(std::fabs((sm - bm) / bm * 100.0 - agg["delta_percent"].get<double>()) <= 1e-12);

    std::string empty = work_dir() + "/sweep_empty";
    std::filesystem::create_directories(empty);
    CliResult none = run_cli("report --sweep " + empty + " --out " + csv);
    CHECK(none.exit == 1);
    CHECK(none.err.rfind("saf: error: ", 0) == 0);

    std::string half = work_dir() + "/sweep_half";
    std::filesystem::create_directories(half);
    std::filesystem::copy_file(dir + "/110_baseline.json", half + "/110_baseline.json");
    CHECK(run_cli("report --sweep " + half + " --out " + csv).exit == 1);
}

TEST_CASE("the bundled toy panel trains through the command line") {
    std::string assets = SAF_ASSET_DIR;
    std::string cfg = work_dir() + "/toy_config.json";
    write_text(cfg, R"({
  "dataset": ")" + assets + R"(/toy_panel.csv",
  "schema": ")" + assets + R"(/toy_panel.json",
  "statics": ")" + assets + R"(/toy_panel_static.csv",
  "validation": 20,
  "test": 20,
  "window": 12,
  "mask": 6,
  "horizon": 3,
  "adapt_rate": 0.001,
  "train_rate": 0.01,
  "merge": "concatenation",
  "units": 4,
  "batch_size": 4,
  "max_iterations": 6,
  "eval_every": 3,
  "seeds": [1]
}
)");
    std::string dir = work_dir() + "/toy_train";
    CliResult r = run_cli("train --config " + cfg + " --out " + dir);
    REQUIRE(r.exit == 0);
    nlohmann::json result = parse_file(dir + "/result.json");
    CHECK(result["dataset"] == "toy_panel");
    CHECK(result["failed"] == false);
    saf::ModelBundle bundle = saf::load_bundle(dir + "/model.safp1");
    CHECK(bundle.dims.statics == 1);
    CHECK(bundle.dims.covariates == 2);
    CHECK(bundle.merge == saf::MergeMode::Concatenation);
}

TEST_CASE("bad invocations exit nonzero with the machine-parseable prefix") {
    CliResult unknown = run_cli("frobnicate");
    CHECK(unknown.exit == 2);
    CHECK(unknown.err.rfind("saf: error: ", 0) == 0);

    CliResult noconfig = run_cli("train");
    CHECK(noconfig.exit == 2);
    CHECK(noconfig.err.rfind("saf: error: ", 0) == 0);

    std::string bad_cfg = work_dir() + "/bad_config.json";
    write_text(bad_cfg, R"({"dataset": "ar4", "alpha": 1}
)");
    CliResult badkey = run_cli("train --config " + bad_cfg + " --out " + work_dir() + "/bad");
    CHECK(badkey.exit == 1);
    CHECK(badkey.err.find("unknown setting 'alpha'") != std::string::npos);

    CliResult badoverride =
        run_cli("train --config " + ar_config_path() + " --out " + work_dir() + "/bad units");
    CHECK(badoverride.exit == 1);
    CHECK(badoverride.err.find("key=value") != std::string::npos);

    std::string both = work_dir() + "/both_seeds.json";
    write_text(both, R"({"dataset": "ar4", "seeds": [1], "master_seed": 5}
)");
    CliResult conflict = run_cli("train --config " + both + " --out " + work_dir() + "/bad");
    CHECK(conflict.exit == 1);
    CHECK(conflict.err.find("mutually exclusive") != std::string::npos);
}

TEST_CASE("master seeds expand through the documented splitting rule") {
    std::string cfg = work_dir() + "/master_config.json";
    write_text(cfg, R"({
  "dataset": "ar4",
  "duration": 120,
  "data_seed": 7,
  "validation": 20,
  "test": 20,
  "window": 6,
  "mask": 3,
  "horizon": 2,
  "adapt_rate": 0.001,
  "train_rate": 0.01,
  "units": 3,
  "batch_size": 2,
  "max_iterations": 2,
  "eval_every": 2,
  "master_seed": 5,
  "num_seeds": 3
}
)");
    std::string dir = work_dir() + "/master_train";
    REQUIRE(run_cli("train --config " + cfg + " --out " + dir).exit == 0);
    nlohmann::json result = parse_file(dir + "/result.json");
    REQUIRE(result["seeds"].size() == 3);
    for (std::size_t i = 0; i < 3; ++i)
        CHECK(result["seeds"][i]["seed"].get<std::uint64_t>() ==
              saf::CounterRng::mix(5, i + 1));
}
