#ifndef AMTNN_CONFIG_HPP
#define AMTNN_CONFIG_HPP

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "amtnn/data.hpp"
#include "amtnn/errors.hpp"
#include "amtnn/trainer.hpp"

namespace amtnn {

/// The six experiment presets. Each one pins a (metric, alpha_mode) pair;
/// mtl_weighted additionally forces kappa2 = 0 so its coefficients depend on
/// the loss matrix alone.
inline void apply_method(const std::string& method, TrainConfig& cfg) {
    if (method == "mtl_uni") {
        cfg.metric = Metric::none;
        cfg.alpha_mode = AlphaMode::uniform_fixed;
    } else if (method == "mtl_weighted") {
        cfg.metric = Metric::none;
        cfg.alpha_mode = AlphaMode::solved;
        cfg.kappa2 = 0;
    } else if (method == "mtl_disH") {
        cfg.metric = Metric::hdiv;
        cfg.alpha_mode = AlphaMode::uniform_fixed;
    } else if (method == "mtl_disW") {
        cfg.metric = Metric::w1;
        cfg.alpha_mode = AlphaMode::uniform_fixed;
    } else if (method == "amtnn_h") {
        cfg.metric = Metric::hdiv;
        cfg.alpha_mode = AlphaMode::solved;
    } else if (method == "amtnn_w") {
        cfg.metric = Metric::w1;
        cfg.alpha_mode = AlphaMode::solved;
    } else {
        throw ConfigError("method: unknown value '" + method +
                          "' (expected mtl_uni, mtl_weighted, mtl_disH, mtl_disW, amtnn_h, amtnn_w)");
    }
}

struct TaskFiles {
    std::string train_images, train_labels, test_images, test_labels;  // idx
    std::string train, test;                                           // bow
};

/// A full experiment: data source, method, training setup, output location.
/// Parsed from the flat key-value config format documented in the README;
/// unknown keys are hard errors and every field has a default.
struct ExperimentConfig {
    std::string method = "mtl_uni";
    TrainConfig train;

    std::string data = "synthetic";  // synthetic | idx | bow
    std::size_t syn_tasks = 3;
    std::size_t syn_dim = 8;
    std::size_t syn_classes = 3;
    std::size_t syn_train_per_task = 200;
    std::size_t syn_test_per_task = 200;
    real syn_separation = 3.0;
    real syn_sigma = 1.0;
    std::vector<real> syn_shifts;                    // per-task magnitudes along the diagonal
    std::vector<std::vector<real>> syn_shift_vectors;  // or full per-task vectors

    std::vector<TaskFiles> task_files;
    std::size_t num_classes = 10;
    std::size_t bow_dim = 10000;
    bool idx_downscale = false;
    std::size_t subsample_n = 0;  // 0 = use everything

    std::vector<real> kappa2_grid;  // optional sweep values
    std::string out_dir = "out";

    static ExperimentConfig parse(std::istream& in);

    static ExperimentConfig parse_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw IoError(path + ": cannot open config");
        return parse(in);
    }

    std::vector<TaskDataset> load_datasets() const;

    /// Resolved data-source settings, merged into the report's config echo.
    std::map<std::string, std::string> data_echo() const;
};

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    std::size_t e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? "" : s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream is(s);
    while (std::getline(is, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

struct KeyParser {
    std::map<std::string, std::string> pairs;

    std::set<std::string> consumed;

    bool has(const std::string& key) const { return pairs.count(key) != 0; }

    std::string raw(const std::string& key) {
        consumed.insert(key);
        return pairs.at(key);
    }

    template <typename T, typename Fn>
    T get(const std::string& key, T fallback, Fn convert) {
        if (!has(key)) return fallback;
        try {
            return convert(raw(key));
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception&) {
            throw ConfigError(key + ": cannot parse value '" + pairs.at(key) + "'");
        }
    }

    std::string get_string(const std::string& key, const std::string& fallback) {
        return get<std::string>(key, fallback, [](const std::string& v) { return v; });
    }

    real get_real(const std::string& key, real fallback) {
        return get<real>(key, fallback,
                         [](const std::string& v) { return static_cast<real>(std::stod(v)); });
    }

    std::size_t get_size(const std::string& key, std::size_t fallback) {
        return get<std::size_t>(key, fallback, [](const std::string& v) {
            long long x = std::stoll(v);
            if (x < 0) throw ConfigError("negative value");
            return static_cast<std::size_t>(x);
        });
    }

    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) {
        return get<std::uint64_t>(key, fallback,
                                  [](const std::string& v) { return std::stoull(v); });
    }

    bool get_bool(const std::string& key, bool fallback) {
        return get<bool>(key, fallback, [&](const std::string& v) {
            if (v == "true" || v == "1") return true;
            if (v == "false" || v == "0") return false;
            throw ConfigError(key + ": expected true/false, got '" + v + "'");
        });
    }

    std::vector<std::size_t> get_dims(const std::string& key, std::vector<std::size_t> fallback) {
        return get<std::vector<std::size_t>>(key, std::move(fallback), [](const std::string& v) {
            std::vector<std::size_t> out;
            for (const std::string& item : split_list(v)) out.push_back(std::stoul(item));
            return out;
        });
    }

    std::vector<real> get_reals(const std::string& key, std::vector<real> fallback) {
        return get<std::vector<real>>(key, std::move(fallback), [](const std::string& v) {
            std::vector<real> out;
            for (const std::string& item : split_list(v)) out.push_back(static_cast<real>(std::stod(item)));
            return out;
        });
    }
};

inline bool parse_task_key(const std::string& key, std::size_t& index, std::string& suffix) {
    if (key.rfind("task", 0) != 0) return false;
    std::size_t pos = 4;
    std::size_t end = pos;
    while (end < key.size() && std::isdigit(static_cast<unsigned char>(key[end]))) ++end;
    if (end == pos || end >= key.size() || key[end] != '_') return false;
    index = std::stoul(key.substr(pos, end - pos));
    suffix = key.substr(end + 1);
    return true;
}

}  // namespace detail

inline ExperimentConfig ExperimentConfig::parse(std::istream& in) {
    detail::KeyParser kp;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        std::string key = detail::trim(line.substr(0, eq));
        std::string value = detail::trim(line.substr(eq + 1));
        if (key.empty()) throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
        if (kp.pairs.count(key))
            throw ConfigError(key + ": duplicate key at line " + std::to_string(lineno));
        kp.pairs[key] = value;
    }

    ExperimentConfig cfg;
    cfg.method = kp.get_string("method", cfg.method);
    apply_method(cfg.method, cfg.train);

    cfg.train.seed = kp.get_u64("seed", cfg.train.seed);
    cfg.train.epochs = kp.get_size("epochs", cfg.train.epochs);
    cfg.train.batch_size = kp.get_size("batch_size", cfg.train.batch_size);
    cfg.train.lr = kp.get_real("lr", cfg.train.lr);
    cfg.train.momentum = kp.get_real("momentum", cfg.train.momentum);
    if (kp.has("rho")) {
        std::string rho = kp.raw("rho");
        cfg.train.rho = rho == "auto" ? real(-1) : static_cast<real>(std::stod(rho));
    }
    cfg.train.kappa1 = kp.get_real("kappa1", cfg.train.kappa1);
    cfg.train.kappa2 = kp.get_real("kappa2", cfg.train.kappa2);
    if (cfg.method == "mtl_weighted" && cfg.train.kappa2 != 0)
        throw ConfigError("kappa2: mtl_weighted pins kappa2 = 0");
    cfg.train.gp_weight = kp.get_real("gp_weight", cfg.train.gp_weight);
    cfg.train.critic_steps = kp.get_size("critic_steps", cfg.train.critic_steps);
    cfg.train.w1_sigmoid_output = kp.get_bool("w1_sigmoid_output", cfg.train.w1_sigmoid_output);
    cfg.train.alpha_tol = kp.get_real("alpha_tol", cfg.train.alpha_tol);
    cfg.train.alpha_max_iter = kp.get_size("alpha_max_iter", cfg.train.alpha_max_iter);
    cfg.train.extractor_dims = kp.get_dims("extractor_dims", cfg.train.extractor_dims);
    cfg.train.head_hidden = kp.get_dims("head_hidden", cfg.train.head_hidden);
    cfg.train.disc_hidden = kp.get_dims("disc_hidden", cfg.train.disc_hidden);

    cfg.data = kp.get_string("data", cfg.data);
    cfg.syn_tasks = kp.get_size("syn_tasks", cfg.syn_tasks);
    cfg.syn_dim = kp.get_size("syn_dim", cfg.syn_dim);
    cfg.syn_classes = kp.get_size("syn_classes", cfg.syn_classes);
    cfg.syn_train_per_task = kp.get_size("syn_train_per_task", cfg.syn_train_per_task);
    cfg.syn_test_per_task = kp.get_size("syn_test_per_task", cfg.syn_test_per_task);
    cfg.syn_separation = kp.get_real("syn_separation", cfg.syn_separation);
    cfg.syn_sigma = kp.get_real("syn_sigma", cfg.syn_sigma);
    cfg.syn_shifts = kp.get_reals("syn_shifts", cfg.syn_shifts);
    // Full per-task shift vectors: rows separated by ';', coordinates by ','.
    if (kp.has("syn_shift_vectors")) {
        std::string rows = kp.raw("syn_shift_vectors");
        std::istringstream rs(rows);
        std::string row;
        while (std::getline(rs, row, ';')) {
            std::vector<real> vec;
            for (const std::string& item : detail::split_list(row))
                vec.push_back(static_cast<real>(std::stod(item)));
            cfg.syn_shift_vectors.push_back(std::move(vec));
        }
    }
    if (!cfg.syn_shifts.empty() && !cfg.syn_shift_vectors.empty())
        throw ConfigError("syn_shift_vectors: give either magnitudes or vectors, not both");

    cfg.num_classes = kp.get_size("num_classes", cfg.num_classes);
    cfg.bow_dim = kp.get_size("bow_dim", cfg.bow_dim);
    cfg.idx_downscale = kp.get_bool("idx_downscale", cfg.idx_downscale);
    cfg.subsample_n = kp.get_size("subsample_n", cfg.subsample_n);
    cfg.kappa2_grid = kp.get_reals("kappa2_grid", cfg.kappa2_grid);
    cfg.out_dir = kp.get_string("out_dir", cfg.out_dir);

    // Per-task file keys.
    std::size_t max_task = 0;
    for (const auto& [key, value] : kp.pairs) {
        std::size_t index;
        std::string suffix;
        if (!detail::parse_task_key(key, index, suffix)) continue;
        static const std::set<std::string> known = {"train_images", "train_labels", "test_images",
                                                    "test_labels",  "train",        "test"};
        if (!known.count(suffix)) throw ConfigError(key + ": unknown task file kind '" + suffix + "'");
        if (index == 0) throw ConfigError(key + ": task indices start at 1");
        max_task = std::max(max_task, index);
        kp.consumed.insert(key);
    }
    cfg.task_files.resize(max_task);
    for (const auto& [key, value] : kp.pairs) {
        std::size_t index;
        std::string suffix;
        if (!detail::parse_task_key(key, index, suffix)) continue;
        TaskFiles& tf = cfg.task_files[index - 1];
        if (suffix == "train_images") tf.train_images = value;
        else if (suffix == "train_labels") tf.train_labels = value;
        else if (suffix == "test_images") tf.test_images = value;
        else if (suffix == "test_labels") tf.test_labels = value;
        else if (suffix == "train") tf.train = value;
        else if (suffix == "test") tf.test = value;
    }

    for (const auto& [key, value] : kp.pairs)
        if (!kp.consumed.count(key)) throw ConfigError(key + ": unknown config field");

    if (cfg.data != "synthetic" && cfg.data != "idx" && cfg.data != "bow")
        throw ConfigError("data: unknown source '" + cfg.data + "' (expected synthetic, idx or bow)");
    if (cfg.data != "synthetic" && cfg.task_files.empty())
        throw ConfigError("data: task1_* file keys are required for source '" + cfg.data + "'");
    cfg.train.validate();
    return cfg;
}

inline std::vector<TaskDataset> ExperimentConfig::load_datasets() const {
    std::vector<TaskDataset> out;
    if (data == "synthetic") {
        SyntheticSpec spec;
        spec.tasks = syn_tasks;
        spec.dim = syn_dim;
        spec.classes = syn_classes;
        spec.train_per_task = syn_train_per_task;
        spec.test_per_task = syn_test_per_task;
        spec.separation = syn_separation;
        spec.sigma = syn_sigma;
        if (!syn_shifts.empty()) {
            if (syn_shifts.size() != syn_tasks)
                throw ConfigError("syn_shifts: expected one magnitude per task");
            spec.shifts = diagonal_shifts(syn_dim, syn_shifts);
        } else if (!syn_shift_vectors.empty()) {
            if (syn_shift_vectors.size() != syn_tasks)
                throw ConfigError("syn_shift_vectors: expected one vector per task");
            spec.shifts = syn_shift_vectors;
        }
        spec.seed = mix_seed(train.seed, 0x64617461ULL);
        out = gen_synthetic_tasks(spec);
    } else if (data == "idx") {
        for (std::size_t t = 0; t < task_files.size(); ++t) {
            const TaskFiles& tf = task_files[t];
            if (tf.train_images.empty() || tf.train_labels.empty() || tf.test_images.empty() ||
                tf.test_labels.empty())
                throw ConfigError("task" + std::to_string(t + 1) +
                                  ": idx data needs train/test image and label paths");
            TaskDataset ds;
            ds.name = "task-" + std::to_string(t + 1);
            ds.num_classes = num_classes;
            IdxDims train_dims, test_dims;
            ds.train = load_idx(tf.train_images, tf.train_labels, &train_dims);
            ds.test = load_idx(tf.test_images, tf.test_labels, &test_dims);
            if (idx_downscale) {
                ds.train.x = downscale_2x2(ds.train.x, train_dims.rows, train_dims.cols);
                ds.test.x = downscale_2x2(ds.test.x, test_dims.rows, test_dims.cols);
            }
            ds.validate();
            out.push_back(std::move(ds));
        }
    } else {  // bow
        for (std::size_t t = 0; t < task_files.size(); ++t) {
            const TaskFiles& tf = task_files[t];
            if (tf.train.empty() || tf.test.empty())
                throw ConfigError("task" + std::to_string(t + 1) +
                                  ": bow data needs train and test paths");
            TaskDataset ds;
            ds.name = "task-" + std::to_string(t + 1);
            ds.num_classes = num_classes;
            ds.train = load_sparse_bow(tf.train, bow_dim);
            ds.test = load_sparse_bow(tf.test, bow_dim);
            ds.validate();
            out.push_back(std::move(ds));
        }
    }
    if (subsample_n > 0)
        for (std::size_t t = 0; t < out.size(); ++t)
            out[t] = subsample(out[t], subsample_n, mix_seed(train.seed, 0x737373ULL, t));
    return out;
}

inline std::map<std::string, std::string> ExperimentConfig::data_echo() const {
    std::map<std::string, std::string> m;
    auto fmt = [](real v) {
        std::ostringstream os;
        os.precision(17);
        os << v;
        return os.str();
    };
    m["method"] = method;
    m["data"] = data;
    if (data == "synthetic") {
        m["syn_tasks"] = std::to_string(syn_tasks);
        m["syn_dim"] = std::to_string(syn_dim);
        m["syn_classes"] = std::to_string(syn_classes);
        m["syn_train_per_task"] = std::to_string(syn_train_per_task);
        m["syn_test_per_task"] = std::to_string(syn_test_per_task);
        m["syn_separation"] = fmt(syn_separation);
        m["syn_sigma"] = fmt(syn_sigma);
        std::string shifts;
        for (std::size_t i = 0; i < syn_shifts.size(); ++i)
            shifts += (i ? "," : "") + fmt(syn_shifts[i]);
        m["syn_shifts"] = shifts;
        std::string vectors;
        for (std::size_t t = 0; t < syn_shift_vectors.size(); ++t) {
            if (t) vectors += ";";
            for (std::size_t i = 0; i < syn_shift_vectors[t].size(); ++i)
                vectors += (i ? "," : "") + fmt(syn_shift_vectors[t][i]);
        }
        m["syn_shift_vectors"] = vectors;
    } else {
        m["num_classes"] = std::to_string(num_classes);
        if (data == "bow") m["bow_dim"] = std::to_string(bow_dim);
        if (data == "idx") m["idx_downscale"] = idx_downscale ? "true" : "false";
        m["task_count"] = std::to_string(task_files.size());
    }
    if (subsample_n > 0) m["subsample_n"] = std::to_string(subsample_n);
    return m;
}

}  // namespace amtnn

#endif  // AMTNN_CONFIG_HPP
