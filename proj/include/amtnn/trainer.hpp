#ifndef AMTNN_TRAINER_HPP
#define AMTNN_TRAINER_HPP

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "amtnn/alpha.hpp"
#include "amtnn/data.hpp"
#include "amtnn/losses.hpp"
#include "amtnn/model.hpp"
#include "amtnn/types.hpp"

namespace amtnn {

struct TrainConfig {
    Metric metric = Metric::none;
    AlphaMode alpha_mode = AlphaMode::uniform_fixed;
    real rho = -1;  // negative = auto (1/T)
    real kappa1 = 1;
    real kappa2 = 0.5;
    real lr = 0.01;
    real momentum = 0.9;
    std::size_t batch_size = 32;
    std::size_t epochs = 30;
    std::uint64_t seed = 0;
    real gp_weight = 1;
    std::size_t critic_steps = 1;
    bool w1_sigmoid_output = false;
    real alpha_tol = 1e-10;
    std::size_t alpha_max_iter = 10000;

    // Architecture (hidden widths; the head/discriminator output widths are
    // implied by the class count and the metric).
    std::vector<std::size_t> extractor_dims = {256, 128};
    std::vector<std::size_t> head_hidden = {64};
    std::vector<std::size_t> disc_hidden = {64};

    void validate() const {
        if (!(lr > 0)) throw ConfigError("TrainConfig: lr must be > 0");
        if (!(momentum >= 0) || momentum >= 1)
            throw ConfigError("TrainConfig: momentum must lie in [0,1)");
        if (epochs < 1) throw ConfigError("TrainConfig: epochs must be >= 1");
        if (batch_size < 1) throw ConfigError("TrainConfig: batch_size must be >= 1");
        if (!(kappa1 >= 0) || !(kappa2 >= 0))
            throw ConfigError("TrainConfig: kappa1/kappa2 must be >= 0");
        if (!(gp_weight >= 0)) throw ConfigError("TrainConfig: gp_weight must be >= 0");
        if (critic_steps < 1) throw ConfigError("TrainConfig: critic_steps must be >= 1");
    }

    real resolve_rho(std::size_t tasks) const { return rho < 0 ? real(1) / real(tasks) : rho; }
};

/// Momentum buffers, one per parameter, in collect_parameters() order.
struct OptimizerState {
    std::vector<Tensor> velocity;

    static OptimizerState zeros_like(AmtnnParams& params) {
        OptimizerState s;
        for (Tensor* p : collect_parameters(params)) s.velocity.emplace_back(p->shape());
        return s;
    }
};

/// v <- momentum * v + g;  p <- p - lr * v.
inline void sgd_momentum_step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads,
                              OptimizerState& state, real lr, real momentum) {
    if (params.size() != grads.size() || params.size() != state.velocity.size())
        throw ShapeError("sgd_momentum_step: parameter/gradient/state count mismatch");
    for (std::size_t k = 0; k < params.size(); ++k) {
        Tensor& p = *params[k];
        const Tensor& g = grads[k];
        Tensor& v = state.velocity[k];
        if (!p.same_shape(g) || !p.same_shape(v))
            throw ShapeError("sgd_momentum_step: shape mismatch at parameter " + std::to_string(k));
        for (std::size_t i = 0; i < p.size(); ++i) {
            v[i] = momentum * v[i] + g[i];
            p[i] -= lr * v[i];
        }
    }
}

struct EpochStats {
    LossMatrix r_hat_mean;
    std::map<PairKey, real> e_hat_mean;   // mean adversarial loss per pair
    std::map<PairKey, real> critic_stat;  // hdiv: epoch accuracy; w1: mean critic loss (-E)
    SquareMatrix disc_accuracy;           // hdiv raw accuracies, also logged
    DistanceMatrix d_hat;
    real mean_total = 0;
    real mean_task = 0;
    real mean_adv = 0;
    real mean_penalty = 0;
    std::size_t steps = 0;
};

namespace detail {

inline std::size_t worker_cap() {
    if (const char* env = std::getenv("AMTNN_THREADS")) {
        long v = std::atol(env);
        if (v >= 1) return static_cast<std::size_t>(v);
    }
    return 1;
}

}  // namespace detail

/// Per-task accuracy of the heads on the given splits (argmax prediction,
/// ties to the smallest class). Tasks fan out over worker threads up to the
/// AMTNN_THREADS cap; results land in per-task slots, so the outcome is
/// identical either way.
inline std::vector<real> evaluate_accuracy(const AmtnnParams& params,
                                           const std::vector<const LabeledBatch*>& splits) {
    std::vector<real> acc(splits.size(), 0);
    auto eval_task = [&](std::size_t t) {
        const LabeledBatch& split = *splits[t];
        if (split.size() == 0) throw Error("evaluate: empty split for task " + std::to_string(t));
        Tape tape;
        BoundModel model(tape, params);
        NodeId probs = model.predict_task(t, model.extract_features(tape.constant(split.x)));
        const Tensor& pv = tape.value(probs);
        std::size_t correct = 0;
        for (std::size_t r = 0; r < pv.rows(); ++r) {
            std::size_t best = 0;
            for (std::size_t c = 1; c < pv.cols(); ++c)
                if (pv.at(r, c) > pv.at(r, best)) best = c;
            correct += best == static_cast<std::size_t>(split.y[r]) ? 1 : 0;
        }
        acc[t] = real(correct) / real(split.size());
    };

    std::size_t workers = std::min(detail::worker_cap(), splits.size());
    if (workers <= 1) {
        for (std::size_t t = 0; t < splits.size(); ++t) eval_task(t);
    } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w)
            pool.emplace_back([&, w]() {
                for (std::size_t t = w; t < splits.size(); t += workers) eval_task(t);
            });
        for (std::thread& th : pool) th.join();
    }
    return acc;
}

struct EvalResult {
    std::vector<real> per_task;
    real macro = 0;
};

inline EvalResult evaluate(const AmtnnParams& params, const std::vector<TaskDataset>& datasets,
                           bool on_test = true) {
    std::vector<const LabeledBatch*> splits;
    for (const TaskDataset& ds : datasets) splits.push_back(on_test ? &ds.test : &ds.train);
    EvalResult r;
    r.per_task = evaluate_accuracy(params, splits);
    for (real a : r.per_task) r.macro += a;
    r.macro /= real(r.per_task.size());
    return r;
}

/// One pass over the longest task: aligned minibatches, a single backward
/// through the reversal-instrumented objective, and an SGD step. Epoch
/// statistics accumulate the loss matrix, the pair losses and the
/// discriminator decisions that the distance estimates need.
inline EpochStats train_epoch(AmtnnParams& params, OptimizerState& state,
                              const std::vector<TaskDataset>& datasets, const RelationMatrix& alpha,
                              const TrainConfig& cfg, std::size_t epoch) {
    const std::size_t tasks = datasets.size();
    alpha.require_feasible("train_epoch");

    std::vector<BatchStream> streams;
    std::size_t steps = 0;
    for (std::size_t t = 0; t < tasks; ++t) {
        streams.emplace_back(datasets[t].train, cfg.batch_size, cfg.seed, t);
        streams.back().start_epoch(epoch);
        steps = std::max(steps, streams.back().batches_per_epoch());
    }

    ObjectiveOptions opt;
    opt.metric = cfg.metric;
    opt.rho = cfg.resolve_rho(tasks);
    opt.gp_weight = cfg.gp_weight;
    opt.training_graph = true;

    EpochStats stats;
    stats.r_hat_mean = LossMatrix(tasks);
    stats.disc_accuracy = SquareMatrix(tasks);
    std::map<PairKey, real> critic_loss_sum;
    std::map<PairKey, std::size_t> correct, total;

    std::vector<Tensor*> param_refs = collect_parameters(params);

    for (std::size_t step = 0; step < steps; ++step) {
        std::vector<LabeledBatch> batches;
        for (BatchStream& s : streams) batches.push_back(s.next());

        opt.gp_seed = mix_seed(cfg.seed, 0x677370ULL, epoch, step);
        for (std::size_t critic_round = 1; critic_round < cfg.critic_steps; ++critic_round) {
            // Extra critic-only rounds on fresh batches; only theta_d moves.
            std::vector<LabeledBatch> extra;
            for (BatchStream& s : streams) extra.push_back(s.next());
            Tape tape;
            BoundModel model(tape, params);
            ObjectiveGraph g = build_objective(tape, model, extra, alpha, opt);
            GradientMap gm = tape.gradients(g.total, model.all_params());
            std::vector<NodeId> ids = model.all_params();
            std::size_t head_count = model.theta_f().size() + model.theta_h().size();
            std::vector<Tensor> grads;
            for (std::size_t k = 0; k < ids.size(); ++k)
                grads.push_back(k < head_count ? Tensor(param_refs[k]->shape()) : gm.at(ids[k]));
            sgd_momentum_step(param_refs, grads, state, cfg.lr, cfg.momentum);
        }

        Tape tape;
        BoundModel model(tape, params);
        ObjectiveGraph g;
        try {
            g = build_objective(tape, model, batches, alpha, opt);
        } catch (const DivergenceError&) {
            throw;
        } catch (const NumericError& e) {
            throw DivergenceError("training diverged at epoch " + std::to_string(epoch) + " step " +
                                  std::to_string(step) + ": " + e.what());
        }

        std::vector<NodeId> ids = model.all_params();
        GradientMap gm = tape.gradients(g.total, ids);
        std::vector<Tensor> grads;
        grads.reserve(ids.size());
        for (NodeId id : ids) grads.push_back(gm.at(id));
        sgd_momentum_step(param_refs, grads, state, cfg.lr, cfg.momentum);

        for (std::size_t t = 0; t < tasks; ++t)
            for (std::size_t i = 0; i < tasks; ++i) stats.r_hat_mean.at(t, i) += g.r_hat.at(t, i);
        stats.mean_total += tape.value(g.total).scalar_value();
        stats.mean_task += g.task_term;
        stats.mean_adv += g.adv_term;
        stats.mean_penalty += g.penalty_term;
        for (const auto& [pair, terms] : g.pairs) {
            stats.e_hat_mean[pair] += terms.e_hat;
            critic_loss_sum[pair] += -terms.e_hat;
            correct[pair] += terms.disc_correct;
            total[pair] += terms.disc_total;
        }
        ++stats.steps;
    }

    const real inv_steps = real(1) / real(steps);
    for (real& x : stats.r_hat_mean.data()) x *= inv_steps;
    stats.mean_total *= inv_steps;
    stats.mean_task *= inv_steps;
    stats.mean_adv *= inv_steps;
    stats.mean_penalty *= inv_steps;
    for (auto& [pair, e] : stats.e_hat_mean) e *= inv_steps;

    if (cfg.metric == Metric::hdiv) {
        for (auto& [pair, c] : correct) {
            real acc = total[pair] > 0 ? real(c) / real(total[pair]) : real(0.5);
            stats.critic_stat[pair] = acc;
            stats.disc_accuracy.at(pair.first, pair.second) = acc;
            stats.disc_accuracy.at(pair.second, pair.first) = acc;
        }
    } else if (cfg.metric == Metric::w1) {
        for (auto& [pair, s] : critic_loss_sum) stats.critic_stat[pair] = s * inv_steps;
    }
    if (cfg.metric != Metric::none && opt.rho != real(0))
        stats.d_hat = make_distance_matrix(cfg.metric, tasks, stats.critic_stat);
    else
        stats.d_hat = DistanceMatrix(tasks);

    return stats;
}

/// Standalone distribution-distance estimation: trains every pair critic by
/// plain ascent on its adversarial loss (plus the gradient penalty under w1)
/// while the extractor and heads stay fixed, then reads the distance matrix
/// off the last epoch's statistics. This is the estimator the relation
/// experiments use to probe task geometry; the full training loop instead
/// couples critic steps to the relation coefficients.
inline DistanceMatrix estimate_distances(const AmtnnParams& params_in,
                                         const std::vector<TaskDataset>& datasets, Metric metric,
                                         std::size_t epochs, const TrainConfig& cfg) {
    if (metric == Metric::none) throw ConfigError("estimate_distances: pick hdiv or w1");
    const std::size_t tasks = datasets.size();
    if (tasks < 2) throw ConfigError("estimate_distances: at least 2 tasks required");

    AmtnnParams params = params_in;  // critics train on a copy
    OptimizerState state = OptimizerState::zeros_like(params);
    std::vector<Tensor*> param_refs = collect_parameters(params);

    std::map<PairKey, real> critic_stat;
    for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
        std::vector<BatchStream> streams;
        std::size_t steps = 0;
        for (std::size_t t = 0; t < tasks; ++t) {
            streams.emplace_back(datasets[t].train, cfg.batch_size, mix_seed(cfg.seed, 0x657374ULL), t);
            streams.back().start_epoch(epoch);
            steps = std::max(steps, streams.back().batches_per_epoch());
        }

        std::map<PairKey, real> e_sum;
        std::map<PairKey, std::size_t> correct, total;
        for (std::size_t step = 0; step < steps; ++step) {
            std::vector<LabeledBatch> batches;
            for (BatchStream& s : streams) batches.push_back(s.next());

            Tape tape;
            BoundModel model(tape, params);
            std::vector<NodeId> feats;
            for (const LabeledBatch& b : batches)
                feats.push_back(model.extract_features(tape.constant(b.x)));

            NodeId critic_loss = kNoNode;  // minimized by theta_d: -sum E (+ penalty)
            for (std::size_t t = 0; t < tasks; ++t) {
                for (std::size_t i = t + 1; i < tasks; ++i) {
                    PairKey pair(t, i);
                    NodeId e;
                    if (metric == Metric::hdiv) {
                        e = adversarial_loss_h_node(tape, model, pair, feats[t], feats[i]);
                        const Tensor& st = tape.value(model.discriminate_pre(pair, feats[t]));
                        const Tensor& si = tape.value(model.discriminate_pre(pair, feats[i]));
                        for (real v : st.data()) correct[pair] += v > 0 ? 1 : 0;
                        for (real v : si.data()) correct[pair] += v <= 0 ? 1 : 0;
                        total[pair] += st.size() + si.size();
                    } else {
                        e = adversarial_loss_w1_node(tape, model, pair, feats[t], feats[i]);
                    }
                    e_sum[pair] += tape.value(e).scalar_value();
                    NodeId term = tape.scalar_mul(e, real(-1));
                    if (metric == Metric::w1 && cfg.gp_weight != real(0)) {
                        NodeId pen = gradient_penalty_node(tape, model, pair, batches[t].x,
                                                           batches[i].x,
                                                           mix_seed(cfg.seed, 0x6567ULL, epoch, step));
                        term = tape.add(term, tape.scalar_mul(pen, cfg.gp_weight));
                    }
                    critic_loss = critic_loss == kNoNode ? term : tape.add(critic_loss, term);
                }
            }

            GradientMap gm = tape.gradients(critic_loss, model.theta_d());
            std::vector<Tensor> grads;
            std::size_t head_count = model.theta_f().size() + model.theta_h().size();
            std::vector<NodeId> d_ids = model.theta_d();
            for (std::size_t k = 0; k < param_refs.size(); ++k)
                grads.push_back(k < head_count ? Tensor(param_refs[k]->shape())
                                               : gm.at(d_ids[k - head_count]));
            sgd_momentum_step(param_refs, grads, state, cfg.lr, cfg.momentum);
        }

        critic_stat.clear();
        if (metric == Metric::hdiv) {
            for (auto& [pair, c] : correct)
                critic_stat[pair] = total[pair] > 0 ? real(c) / real(total[pair]) : real(0.5);
        } else {
            for (auto& [pair, s] : e_sum) critic_stat[pair] = -s / real(steps);
        }
    }
    return make_distance_matrix(metric, tasks, critic_stat);
}

struct EpochRecord {
    real total_loss = 0;
    real task_loss = 0;
    real adv_loss = 0;
    real penalty = 0;
    LossMatrix r_hat;
    std::map<PairKey, real> e_hat;
    DistanceMatrix d_hat;
    SquareMatrix disc_accuracy;
    RelationMatrix alpha;  // coefficients after this epoch's re-estimation
    bool alpha_converged = true;
    std::vector<real> train_acc, test_acc;
};

struct RunReport {
    int schema = 1;
    std::uint64_t seed = 0;
    std::size_t tasks = 0;
    std::vector<std::size_t> train_sizes;  // after any equalization
    std::map<std::string, std::string> config_echo;
    std::vector<EpochRecord> epochs;
    RelationMatrix final_alpha;
    std::vector<real> final_test_acc;
    real final_macro_acc = 0;
};

namespace detail {

inline std::string join_dims(const std::vector<std::size_t>& dims) {
    std::string s;
    for (std::size_t i = 0; i < dims.size(); ++i) s += (i ? "," : "") + std::to_string(dims[i]);
    return s;
}

inline std::map<std::string, std::string> echo_config(const TrainConfig& cfg, std::size_t tasks) {
    std::map<std::string, std::string> m;
    auto fmt = [](real v) {
        std::ostringstream os;
        os.precision(17);
        os << v;
        return os.str();
    };
    m["metric"] = to_string(cfg.metric);
    m["alpha_mode"] = to_string(cfg.alpha_mode);
    m["rho"] = fmt(cfg.resolve_rho(tasks));
    m["kappa1"] = fmt(cfg.kappa1);
    m["kappa2"] = fmt(cfg.kappa2);
    m["lr"] = fmt(cfg.lr);
    m["momentum"] = fmt(cfg.momentum);
    m["batch_size"] = std::to_string(cfg.batch_size);
    m["epochs"] = std::to_string(cfg.epochs);
    m["seed"] = std::to_string(cfg.seed);
    m["gp_weight"] = fmt(cfg.gp_weight);
    m["critic_steps"] = std::to_string(cfg.critic_steps);
    m["w1_sigmoid_output"] = cfg.w1_sigmoid_output ? "true" : "false";
    m["alpha_tol"] = fmt(cfg.alpha_tol);
    m["alpha_max_iter"] = std::to_string(cfg.alpha_max_iter);
    m["extractor_dims"] = join_dims(cfg.extractor_dims);
    m["head_hidden"] = join_dims(cfg.head_hidden);
    m["disc_hidden"] = join_dims(cfg.disc_hidden);
    // Distance statistics come from training minibatches, averaged per
    // epoch, not from held-out data.
    m["distance_stats"] = "train-epoch-average";
    return m;
}

}  // namespace detail

struct TrainedRun {
    RunReport report;
    AmtnnParams params;
    std::vector<TaskDataset> datasets;  // post-equalization data actually used
};

/// The full alternating loop: alpha starts uniform; every epoch updates the
/// network parameters over the minibatch pass, then (in solved mode)
/// re-estimates alpha from the epoch-averaged loss and distance matrices.
inline TrainedRun run_training(const TrainConfig& cfg, std::vector<TaskDataset> datasets) {
    cfg.validate();
    const std::size_t tasks = datasets.size();
    if (tasks == 0) throw ConfigError("run_training: no datasets");
    if (cfg.metric != Metric::none && tasks < 2)
        throw ConfigError("run_training: adversarial metrics need at least 2 tasks");

    std::size_t classes = datasets[0].num_classes;
    std::size_t width = datasets[0].train.x.cols();
    for (const TaskDataset& ds : datasets) {
        ds.validate();
        if (ds.num_classes != classes)
            throw ConfigError("run_training: tasks must share one label space");
        if (ds.train.x.cols() != width || ds.test.x.cols() != width)
            throw ConfigError("run_training: tasks must share feature width");
    }

    // Relation solving assumes equal task sizes; subsample down to the
    // smallest task when it is on.
    if (cfg.alpha_mode == AlphaMode::solved) {
        std::size_t m_min = datasets[0].train.size();
        for (const TaskDataset& ds : datasets) m_min = std::min(m_min, ds.train.size());
        for (std::size_t t = 0; t < tasks; ++t)
            if (datasets[t].train.size() > m_min)
                datasets[t] = subsample(datasets[t], m_min, mix_seed(cfg.seed, 0x6571ULL, t));
    }

    ModelArch arch = make_mlp_arch(width, cfg.extractor_dims, cfg.head_hidden, classes,
                                   cfg.disc_hidden, cfg.metric, cfg.w1_sigmoid_output);
    AmtnnParams params = init_params(arch, tasks, cfg.metric, cfg.seed);
    OptimizerState state = OptimizerState::zeros_like(params);

    RelationMatrix alpha;
    switch (cfg.alpha_mode) {
        case AlphaMode::identity_fixed: alpha = RelationMatrix::identity(tasks); break;
        case AlphaMode::uniform_fixed:
        case AlphaMode::solved: alpha = RelationMatrix::uniform(tasks); break;
    }

    RunReport report;
    report.seed = cfg.seed;
    report.tasks = tasks;
    for (const TaskDataset& ds : datasets) report.train_sizes.push_back(ds.train.size());
    report.config_echo = detail::echo_config(cfg, tasks);

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        EpochStats stats = train_epoch(params, state, datasets, alpha, cfg, epoch);

        EpochRecord rec;
        rec.total_loss = stats.mean_total;
        rec.task_loss = stats.mean_task;
        rec.adv_loss = stats.mean_adv;
        rec.penalty = stats.mean_penalty;
        rec.r_hat = stats.r_hat_mean;
        rec.e_hat = stats.e_hat_mean;
        rec.d_hat = stats.d_hat;
        rec.disc_accuracy = stats.disc_accuracy;

        if (cfg.alpha_mode == AlphaMode::solved) {
            AlphaProblem problem;
            problem.r_hat = stats.r_hat_mean;
            problem.d_hat = stats.d_hat;
            problem.kappa1 = cfg.kappa1;
            problem.kappa2 = cfg.kappa2;
            AlphaSolution sol = solve_alpha(problem, cfg.alpha_tol, cfg.alpha_max_iter);
            alpha = sol.alpha;
            rec.alpha_converged = sol.converged;
        }
        rec.alpha = alpha;

        rec.train_acc = evaluate(params, datasets, false).per_task;
        rec.test_acc = evaluate(params, datasets, true).per_task;
        report.epochs.push_back(std::move(rec));
    }

    report.final_alpha = alpha;
    EvalResult final_eval = evaluate(params, datasets, true);
    report.final_test_acc = final_eval.per_task;
    report.final_macro_acc = final_eval.macro;

    return TrainedRun{std::move(report), std::move(params), std::move(datasets)};
}

}  // namespace amtnn

#endif  // AMTNN_TRAINER_HPP
