#ifndef AMTNN_REPORT_HPP
#define AMTNN_REPORT_HPP

#include <cstdio>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "amtnn/bounds.hpp"
#include "amtnn/model.hpp"
#include "amtnn/trainer.hpp"

namespace amtnn {

using json = nlohmann::json;

// nlohmann::json keeps keys in std::map order and prints doubles with the
// shortest round-trip representation, so identical runs serialize to
// identical bytes. Timestamps live in a separate metadata file for the same
// reason.

inline json to_json(const SquareMatrix& m) {
    json rows = json::array();
    for (std::size_t r = 0; r < m.dim(); ++r) {
        json row = json::array();
        for (std::size_t c = 0; c < m.dim(); ++c) row.push_back(m.at(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline SquareMatrix square_from_json(const json& j) {
    SquareMatrix m(j.size());
    for (std::size_t r = 0; r < j.size(); ++r)
        for (std::size_t c = 0; c < j.size(); ++c) m.at(r, c) = j.at(r).at(c).get<real>();
    return m;
}

inline json pairs_to_json(const std::map<PairKey, real>& pairs) {
    json out = json::array();
    for (const auto& [pair, v] : pairs) out.push_back({pair.first, pair.second, v});
    return out;
}

inline json report_to_json(const RunReport& report) {
    json j;
    j["schema"] = report.schema;
    j["seed"] = report.seed;
    j["tasks"] = report.tasks;
    j["train_sizes"] = report.train_sizes;
    j["config"] = report.config_echo;

    const bool has_metric = report.config_echo.count("metric") &&
                            report.config_echo.at("metric") != "none";
    const bool hdiv = has_metric && report.config_echo.at("metric") == "hdiv";

    json epochs = json::array();
    for (std::size_t e = 0; e < report.epochs.size(); ++e) {
        const EpochRecord& rec = report.epochs[e];
        json je;
        je["epoch"] = e;
        je["total_loss"] = rec.total_loss;
        je["task_loss"] = rec.task_loss;
        je["r_hat"] = to_json(rec.r_hat);
        je["alpha"] = to_json(rec.alpha);
        je["alpha_converged"] = rec.alpha_converged;
        je["train_acc"] = rec.train_acc;
        je["test_acc"] = rec.test_acc;
        if (has_metric) {
            je["adv_loss"] = rec.adv_loss;
            je["e_hat"] = pairs_to_json(rec.e_hat);
            je["d_hat"] = to_json(rec.d_hat);
            if (hdiv) je["disc_accuracy"] = to_json(rec.disc_accuracy);
            else je["penalty"] = rec.penalty;
        }
        epochs.push_back(std::move(je));
    }
    j["epochs"] = std::move(epochs);
    j["final_alpha"] = to_json(report.final_alpha);
    j["final_test_acc"] = report.final_test_acc;
    j["final_macro_acc"] = report.final_macro_acc;
    return j;
}

inline json bound_report_to_json(const BoundReport& rep) {
    json j;
    j["metric"] = to_string(rep.metric);
    j["weighted_empirical_loss"] = rep.weighted_empirical_loss;
    j["coefficient_regularization"] = rep.coefficient_regularization;
    j["empirical_distance_term"] = rep.empirical_distance_term;
    j["c1"] = rep.c1;
    if (rep.c2_available) j["c2"] = rep.c2;
    j["total_computable"] = rep.total_computable;
    json excluded = json::array();
    excluded.push_back("joint_optimal_errors");  // the lambda terms
    if (!rep.c2_available) excluded.push_back("c2");
    j["not_computable"] = std::move(excluded);
    // The distances feeding the decomposition are the training-time
    // surrogates, not the population quantities the theory names.
    j["distance_source"] = "empirical_surrogate";
    return j;
}

inline void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError(path + ": cannot open for writing");
    out << content;
    if (!out) throw IoError(path + ": write failed");
}

inline std::string format_real(real v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", static_cast<double>(v));
    return buf;
}

inline std::string matrix_to_csv(const SquareMatrix& m) {
    std::string s;
    for (std::size_t r = 0; r < m.dim(); ++r) {
        for (std::size_t c = 0; c < m.dim(); ++c) {
            if (c) s += ",";
            s += format_real(m.at(r, c));
        }
        s += "\n";
    }
    return s;
}

/// Extractor outputs of every task's training rows, one line per sample:
/// task, label, then the feature coordinates. Meant for external embedding
/// tools.
inline std::string features_to_csv(const AmtnnParams& params,
                                   const std::vector<TaskDataset>& datasets) {
    std::string s = "task,label";
    for (std::size_t k = 0; k < params.feature_dim(); ++k) s += ",f" + std::to_string(k);
    s += "\n";
    for (std::size_t t = 0; t < datasets.size(); ++t) {
        Tape tape;
        BoundModel model(tape, params);
        NodeId f = model.extract_features(tape.constant(datasets[t].train.x));
        const Tensor& fv = tape.value(f);
        for (std::size_t r = 0; r < fv.rows(); ++r) {
            s += std::to_string(t) + "," + std::to_string(datasets[t].train.y[r]);
            for (std::size_t c = 0; c < fv.cols(); ++c) s += "," + format_real(fv.at(r, c));
            s += "\n";
        }
    }
    return s;
}

// Parameter checkpoint: architecture plus flat tensors in canonical order.

inline json layers_to_json(const std::vector<LayerSpec>& spec) {
    json out = json::array();
    for (const LayerSpec& l : spec) out.push_back({l.in, l.out, to_string(l.act)});
    return out;
}

inline Activation activation_from_string(const std::string& s) {
    if (s == "none") return Activation::none;
    if (s == "relu") return Activation::relu;
    if (s == "elu") return Activation::elu;
    if (s == "sigmoid") return Activation::sigmoid;
    if (s == "softmax") return Activation::softmax;
    throw ConfigError("unknown activation '" + s + "'");
}

inline std::vector<LayerSpec> layers_from_json(const json& j) {
    std::vector<LayerSpec> out;
    for (const json& l : j)
        out.push_back({l.at(0).get<std::size_t>(), l.at(1).get<std::size_t>(),
                       activation_from_string(l.at(2).get<std::string>())});
    return out;
}

inline json params_to_json(const AmtnnParams& params) {
    json j;
    j["schema"] = 1;
    j["input_dim"] = params.arch.input_dim;
    j["num_tasks"] = params.num_tasks();
    j["extractor"] = layers_to_json(params.arch.extractor);
    j["head"] = layers_to_json(params.arch.head);
    j["disc"] = layers_to_json(params.arch.disc);
    j["has_discriminators"] = !params.discriminators.empty();
    json tensors = json::array();
    for (const Tensor& t : get_parameter_values(params)) tensors.push_back(t.data());
    j["tensors"] = std::move(tensors);
    return j;
}

inline AmtnnParams params_from_json(const json& j) {
    ModelArch arch;
    arch.input_dim = j.at("input_dim").get<std::size_t>();
    arch.extractor = layers_from_json(j.at("extractor"));
    arch.head = layers_from_json(j.at("head"));
    arch.disc = layers_from_json(j.at("disc"));
    std::size_t tasks = j.at("num_tasks").get<std::size_t>();
    bool with_disc = j.at("has_discriminators").get<bool>();
    // The metric argument only decides whether discriminators exist; their
    // layer specs (including the final activation) come from arch.disc.
    AmtnnParams params = init_params(arch, tasks, with_disc ? Metric::hdiv : Metric::none, 0);

    std::vector<Tensor> values = get_parameter_values(params);
    const json& tensors = j.at("tensors");
    if (tensors.size() != values.size())
        throw ConfigError("params file: expected " + std::to_string(values.size()) + " tensors, found " +
                          std::to_string(tensors.size()));
    for (std::size_t k = 0; k < values.size(); ++k) {
        const json& flat = tensors.at(k);
        if (flat.size() != values[k].size()) throw ConfigError("params file: tensor size mismatch");
        for (std::size_t i = 0; i < values[k].size(); ++i) values[k][i] = flat.at(i).get<real>();
    }
    set_parameter_values(params, values);
    return params;
}

}  // namespace amtnn

#endif  // AMTNN_REPORT_HPP
