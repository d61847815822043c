// Batch command-line front end: train experiments, evaluate saved models,
// decompose bound terms, solve standalone relation-coefficient problems and
// run the gradient check suite.

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "amtnn/amtnn.hpp"

namespace fs = std::filesystem;
using namespace amtnn;

namespace {

json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError(path + ": cannot open");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw IoError(path + ": " + std::string(e.what()));
    }
    return j;
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError(dir + ": cannot create directory (" + ec.message() + ")");
}

std::string iso_now() {
    auto now = std::chrono::system_clock::now();
    std::time_t tt = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&tt));
    return buf;
}

std::string k2_suffix(real v) {
    std::string s = format_real(v);
    for (char& c : s)
        if (c == '.' || c == '-' || c == '+') c = '_';
    return "_k2_" + s;
}

struct TrainArgs {
    std::string config;
    std::string out;
    std::string seed;
};

int cmd_train(const TrainArgs& args) {
    ExperimentConfig cfg = ExperimentConfig::parse_file(args.config);
    if (!args.seed.empty()) cfg.train.seed = std::stoull(args.seed);
    if (!args.out.empty()) cfg.out_dir = args.out;
    ensure_dir(cfg.out_dir);

    std::vector<TaskDataset> datasets = cfg.load_datasets();

    std::vector<real> grid = cfg.kappa2_grid;
    const bool sweeping = !grid.empty();
    if (!sweeping) grid = {cfg.train.kappa2};

    for (real k2 : grid) {
        TrainConfig run_cfg = cfg.train;
        run_cfg.kappa2 = k2;
        TrainedRun run = run_training(run_cfg, datasets);
        for (const auto& [k, v] : cfg.data_echo()) run.report.config_echo[k] = v;

        std::string suffix = sweeping ? k2_suffix(k2) : "";
        std::string base = cfg.out_dir + "/";
        write_text_file(base + "report" + suffix + ".json", report_to_json(run.report).dump(2) + "\n");
        write_text_file(base + "alpha" + suffix + ".csv", matrix_to_csv(run.report.final_alpha));
        write_text_file(base + "features" + suffix + ".csv", features_to_csv(run.params, run.datasets));
        write_text_file(base + "params" + suffix + ".json", params_to_json(run.params).dump() + "\n");

        std::cout << cfg.method << (sweeping ? " kappa2=" + format_real(k2) : "")
                  << " final test accuracy:";
        for (real a : run.report.final_test_acc) std::cout << " " << format_real(a);
        std::cout << " (macro " << format_real(run.report.final_macro_acc) << ")\n";
    }

    json meta;
    meta["written_at"] = iso_now();
    meta["config_path"] = args.config;
    write_text_file(cfg.out_dir + "/meta.json", meta.dump(2) + "\n");
    return 0;
}

int cmd_eval(const std::string& config_path, const std::string& params_path,
             const std::string& seed, const std::string& out_dir) {
    ExperimentConfig cfg = ExperimentConfig::parse_file(config_path);
    if (!seed.empty()) cfg.train.seed = std::stoull(seed);
    AmtnnParams params = params_from_json(read_json_file(params_path));
    std::vector<TaskDataset> datasets = cfg.load_datasets();
    EvalResult r = evaluate(params, datasets, true);
    json j;
    j["per_task_accuracy"] = r.per_task;
    j["macro_accuracy"] = r.macro;
    std::cout << j.dump(2) << "\n";
    if (!out_dir.empty()) {
        ensure_dir(out_dir);
        write_text_file(out_dir + "/eval.json", j.dump(2) + "\n");
    }
    return 0;
}

int cmd_bounds(const std::string& report_path, double vc_dim, double delta, double lipschitz_k,
               const std::string& out_dir) {
    json j = read_json_file(report_path);
    BoundInputs in;
    in.alpha = RelationMatrix(j.at("final_alpha").size());
    static_cast<SquareMatrix&>(in.alpha) = square_from_json(j.at("final_alpha"));
    const json& last = j.at("epochs").back();
    in.r_hat = LossMatrix(last.at("r_hat").size());
    static_cast<SquareMatrix&>(in.r_hat) = square_from_json(last.at("r_hat"));
    std::size_t tasks = in.alpha.dim();
    in.d_hat = DistanceMatrix(tasks);
    if (last.contains("d_hat"))
        static_cast<SquareMatrix&>(in.d_hat) = square_from_json(last.at("d_hat"));
    in.m = j.at("train_sizes").get<std::vector<std::size_t>>();
    in.vc_dim = static_cast<real>(vc_dim);
    in.delta = static_cast<real>(delta);
    in.lipschitz_k = static_cast<real>(lipschitz_k);
    std::string metric = j.at("config").value("metric", "none");
    // Runs without a metric report through the H-divergence form with zero
    // distances.
    in.metric = metric == "w1" ? Metric::w1 : Metric::hdiv;

    BoundReport rep = bound_decomposition(in);
    json out = bound_report_to_json(rep);
    std::cout << out.dump(2) << "\n";
    if (!out_dir.empty()) {
        ensure_dir(out_dir);
        write_text_file(out_dir + "/bounds.json", out.dump(2) + "\n");
    }
    return 0;
}

int cmd_alpha_solve(const std::string& problem_path, const std::string& out_dir) {
    json j = read_json_file(problem_path);
    AlphaProblem p;
    p.r_hat = LossMatrix(j.at("r_hat").size());
    static_cast<SquareMatrix&>(p.r_hat) = square_from_json(j.at("r_hat"));
    p.d_hat = DistanceMatrix(j.at("d_hat").size());
    static_cast<SquareMatrix&>(p.d_hat) = square_from_json(j.at("d_hat"));
    p.kappa1 = static_cast<real>(j.value("kappa1", 1.0));
    p.kappa2 = static_cast<real>(j.value("kappa2", 0.0));
    real tol = static_cast<real>(j.value("tol", 1e-10));
    std::size_t max_iter = j.value("max_iter", std::size_t(10000));

    AlphaSolution sol = solve_alpha(p, tol, max_iter);
    json out;
    out["alpha"] = to_json(sol.alpha);
    out["objective"] = sol.objective;
    out["converged"] = sol.converged;
    out["iterations"] = sol.iterations;
    std::cout << out.dump(2) << "\n";
    if (!out_dir.empty()) {
        ensure_dir(out_dir);
        write_text_file(out_dir + "/alpha_solution.json", out.dump(2) + "\n");
        write_text_file(out_dir + "/alpha.csv", matrix_to_csv(sol.alpha));
    }
    return sol.converged ? 0 : 2;
}

int cmd_gradcheck(double h) {
    real worst = 0;
    for (Metric metric : {Metric::hdiv, Metric::w1}) {
        ObjectiveGradcheck r = full_objective_gradcheck(metric, 1, static_cast<real>(h));
        std::cout << "metric " << to_string(metric) << ": max relative error " << r.max_rel_error
                  << " over " << r.coordinates << " coordinates\n";
        worst = std::max(worst, r.max_rel_error);
    }
    std::cout << "max relative error: " << worst << "\n";
    return worst < real(1e-4) ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"adversarial multitask neural network toolkit"};
    app.require_subcommand(1);

    TrainArgs train_args;
    CLI::App* train = app.add_subcommand("train", "run one experiment and write its artifacts");
    train->add_option("--config", train_args.config, "experiment config file")->required();
    train->add_option("--seed", train_args.seed, "override the config seed");
    train->add_option("--out", train_args.out, "override the output directory");

    std::string eval_config, eval_params, eval_out, eval_seed;
    CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a saved model on the test splits");
    eval_cmd->add_option("--config", eval_config, "experiment config file")->required();
    eval_cmd->add_option("--params", eval_params, "params.json written by train")->required();
    eval_cmd->add_option("--seed", eval_seed, "override the config seed (data generation)");
    eval_cmd->add_option("--out", eval_out, "directory for eval.json");

    std::string bounds_report, bounds_out;
    double vc_dim = 10, delta = 0.05, lipschitz_k = 1;
    CLI::App* bounds_cmd =
        app.add_subcommand("bounds", "decompose the computable bound terms of a finished run");
    bounds_cmd->add_option("--report", bounds_report, "report.json written by train")->required();
    bounds_cmd->add_option("--vc-dim", vc_dim, "capacity measure d (default 10)");
    bounds_cmd->add_option("--delta", delta, "confidence level (default 0.05)");
    bounds_cmd->add_option("--lipschitz-k", lipschitz_k, "Lipschitz constant K for w1 (default 1)");
    bounds_cmd->add_option("--out", bounds_out, "directory for bounds.json");

    std::string problem_path, alpha_out;
    CLI::App* alpha_cmd =
        app.add_subcommand("alpha-solve", "solve a standalone relation-coefficient problem");
    alpha_cmd->add_option("--problem", problem_path, "problem JSON (r_hat, d_hat, kappa1, kappa2)")
        ->required();
    alpha_cmd->add_option("--out", alpha_out, "directory for the solution files");

    double gradcheck_h = 1e-5;
    CLI::App* gradcheck_cmd =
        app.add_subcommand("gradcheck", "finite-difference check of the full objective");
    gradcheck_cmd->add_option("--step", gradcheck_h, "central-difference step (default 1e-5)");

    try {
        app.parse(argc, argv);
        if (train->parsed()) return cmd_train(train_args);
        if (eval_cmd->parsed()) return cmd_eval(eval_config, eval_params, eval_seed, eval_out);
        if (bounds_cmd->parsed())
            return cmd_bounds(bounds_report, vc_dim, delta, lipschitz_k, bounds_out);
        if (alpha_cmd->parsed()) return cmd_alpha_solve(problem_path, alpha_out);
        if (gradcheck_cmd->parsed()) return cmd_gradcheck(gradcheck_h);
        return 1;
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 3;
    } catch (const DivergenceError& e) {
        std::cerr << "divergence: " << e.what() << "\n";
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
