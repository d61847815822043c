#include <catch2/catch_amalgamated.hpp>

#include <sstream>
#include <string>

#include "amtnn/config.hpp"
#include "amtnn/report.hpp"

using namespace amtnn;

namespace {

ExperimentConfig parse_str(const std::string& text) {
    std::istringstream in(text);
    return ExperimentConfig::parse(in);
}

}  // namespace

TEST_CASE("method presets pin metric and alpha mode", "[config]") {
    struct Case {
        const char* method;
        Metric metric;
        AlphaMode mode;
    };
    const Case cases[] = {
        {"mtl_uni", Metric::none, AlphaMode::uniform_fixed},
        {"mtl_weighted", Metric::none, AlphaMode::solved},
        {"mtl_disH", Metric::hdiv, AlphaMode::uniform_fixed},
        {"mtl_disW", Metric::w1, AlphaMode::uniform_fixed},
        {"amtnn_h", Metric::hdiv, AlphaMode::solved},
        {"amtnn_w", Metric::w1, AlphaMode::solved},
    };
    for (const Case& c : cases) {
        ExperimentConfig cfg = parse_str(std::string("method = ") + c.method + "\n");
        REQUIRE(cfg.train.metric == c.metric);
        REQUIRE(cfg.train.alpha_mode == c.mode);
    }
    REQUIRE(parse_str("method = mtl_weighted\n").train.kappa2 == 0.0);
    REQUIRE_THROWS_AS(parse_str("method = mtl_weighted\nkappa2 = 0.5\n"), ConfigError);
    REQUIRE_THROWS_AS(parse_str("method = nonsense\n"), ConfigError);
}

TEST_CASE("empty config parses to the documented defaults", "[config]") {
    ExperimentConfig cfg = parse_str("");
    REQUIRE(cfg.method == "mtl_uni");
    REQUIRE(cfg.data == "synthetic");
    REQUIRE(cfg.train.lr == Catch::Approx(0.01));
    REQUIRE(cfg.train.momentum == Catch::Approx(0.9));
    REQUIRE(cfg.train.epochs == 30);
    REQUIRE(cfg.train.batch_size == 32);
    REQUIRE(cfg.train.kappa1 == 1.0);
    REQUIRE(cfg.train.gp_weight == 1.0);
    REQUIRE(cfg.train.critic_steps == 1);
    REQUIRE(cfg.train.rho < 0);  // auto = 1/T
    REQUIRE(cfg.train.resolve_rho(4) == Catch::Approx(0.25));
    REQUIRE(cfg.train.extractor_dims == std::vector<std::size_t>{256, 128});
    REQUIRE(cfg.out_dir == "out");
}

TEST_CASE("unknown fields are hard errors that name the key", "[config]") {
    try {
        parse_str("methud = amtnn_w\n");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        REQUIRE(std::string(e.what()).find("methud") != std::string::npos);
    }
    REQUIRE_THROWS_AS(parse_str("task1_bogus = x\n"), ConfigError);
    REQUIRE_THROWS_AS(parse_str("lr = fast\n"), ConfigError);
    REQUIRE_THROWS_AS(parse_str("lr = 0.1\nlr = 0.2\n"), ConfigError);  // duplicate
    REQUIRE_THROWS_AS(parse_str("just a line\n"), ConfigError);
}

TEST_CASE("typed values, comments, and lists parse", "[config]") {
    ExperimentConfig cfg = parse_str(
        "# comment\n"
        "method = amtnn_w\n"
        "seed = 17\n"
        "rho = 0.25   # inline comment\n"
        "extractor_dims = 16, 8\n"
        "syn_shifts = 0, 0, 5\n"
        "w1_sigmoid_output = true\n"
        "kappa2_grid = 0.2, 0.5, 1.0\n");
    REQUIRE(cfg.train.seed == 17);
    REQUIRE(cfg.train.rho == Catch::Approx(0.25));
    REQUIRE(cfg.train.extractor_dims == std::vector<std::size_t>{16, 8});
    REQUIRE(cfg.syn_shifts.size() == 3);
    REQUIRE(cfg.train.w1_sigmoid_output);
    REQUIRE(cfg.kappa2_grid.size() == 3);

    ExperimentConfig aut = parse_str("rho = auto\n");
    REQUIRE(aut.train.rho < 0);
}

TEST_CASE("file-backed sources demand task paths", "[config]") {
    REQUIRE_THROWS_AS(parse_str("data = idx\n"), ConfigError);
    REQUIRE_THROWS_AS(parse_str("data = nonsense\n"), ConfigError);
    ExperimentConfig cfg = parse_str(
        "data = bow\n"
        "bow_dim = 100\n"
        "num_classes = 2\n"
        "task1_train = a.txt\n"
        "task1_test = b.txt\n"
        "task2_train = c.txt\n"
        "task2_test = d.txt\n");
    REQUIRE(cfg.task_files.size() == 2);
    REQUIRE(cfg.task_files[1].test == "d.txt");
    // Paths are validated lazily; loading nonexistent files is an IoError.
    REQUIRE_THROWS_AS(cfg.load_datasets(), IoError);
}

TEST_CASE("synthetic datasets load straight from config", "[config]") {
    ExperimentConfig cfg = parse_str(
        "data = synthetic\n"
        "syn_tasks = 2\n"
        "syn_dim = 4\n"
        "syn_classes = 2\n"
        "syn_train_per_task = 12\n"
        "syn_test_per_task = 6\n"
        "seed = 5\n");
    auto tasks = cfg.load_datasets();
    REQUIRE(tasks.size() == 2);
    REQUIRE(tasks[0].train.size() == 12);
    REQUIRE(tasks[0].train.x.cols() == 4);

    // The shift list must match the task count when present.
    ExperimentConfig bad = parse_str("syn_tasks = 2\nsyn_shifts = 0, 0, 5\n");
    REQUIRE_THROWS_AS(bad.load_datasets(), ConfigError);
}

TEST_CASE("report json carries distance sections only for adversarial metrics", "[config]") {
    RunReport report;
    report.seed = 4;
    report.tasks = 2;
    report.train_sizes = {10, 10};
    report.config_echo["metric"] = "none";
    EpochRecord rec;
    rec.r_hat = LossMatrix(2);
    rec.d_hat = DistanceMatrix(2);
    rec.disc_accuracy = SquareMatrix(2);
    rec.alpha = RelationMatrix::uniform(2);
    rec.train_acc = {0.5, 0.5};
    rec.test_acc = {0.5, 0.5};
    report.epochs.push_back(rec);
    report.final_alpha = RelationMatrix::uniform(2);
    report.final_test_acc = {0.5, 0.5};
    report.final_macro_acc = 0.5;

    json none_json = report_to_json(report);
    REQUIRE_FALSE(none_json["epochs"][0].contains("d_hat"));
    REQUIRE_FALSE(none_json["epochs"][0].contains("e_hat"));

    report.config_echo["metric"] = "hdiv";
    json hdiv_json = report_to_json(report);
    REQUIRE(hdiv_json["epochs"][0].contains("d_hat"));
    REQUIRE(hdiv_json["epochs"][0].contains("disc_accuracy"));
    REQUIRE_FALSE(hdiv_json["epochs"][0].contains("penalty"));

    report.config_echo["metric"] = "w1";
    json w1_json = report_to_json(report);
    REQUIRE(w1_json["epochs"][0].contains("penalty"));
    REQUIRE_FALSE(w1_json["epochs"][0].contains("disc_accuracy"));
}

TEST_CASE("parameter checkpoints round-trip exactly", "[config]") {
    ModelArch arch = make_mlp_arch(4, {5}, {3}, 3, {3}, Metric::w1);
    AmtnnParams params = init_params(arch, 2, Metric::w1, 77);
    json j = params_to_json(params);
    AmtnnParams back = params_from_json(j);

    auto a = get_parameter_values(params);
    auto b = get_parameter_values(back);
    REQUIRE(a.size() == b.size());
    for (std::size_t k = 0; k < a.size(); ++k) REQUIRE(a[k].data() == b[k].data());
    REQUIRE(back.discriminators.at(PairKey(0, 1)).spec.back().act == Activation::none);
}

TEST_CASE("csv writers format matrices row per line", "[config]") {
    RelationMatrix a = RelationMatrix::identity(2);
    REQUIRE(matrix_to_csv(a) == "1,0\n0,1\n");
}
