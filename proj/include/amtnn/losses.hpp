#ifndef AMTNN_LOSSES_HPP
#define AMTNN_LOSSES_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "amtnn/autodiff.hpp"
#include "amtnn/model.hpp"
#include "amtnn/rng.hpp"
#include "amtnn/types.hpp"

namespace amtnn {

/// r_hat[t][i] = mean cross-entropy of head t evaluated on data of task i.
class LossMatrix : public SquareMatrix {
public:
    LossMatrix() = default;
    explicit LossMatrix(std::size_t t) : SquareMatrix(t) {}

    void require_valid(const char* where) const {
        for (real x : data())
            if (!(x >= 0) || !std::isfinite(x))
                throw NumericError(std::string(where) + ": loss matrix entries must be finite and >= 0");
    }
};

/// Symmetric estimated distribution distances with an exactly zero diagonal.
class DistanceMatrix : public SquareMatrix {
public:
    DistanceMatrix() = default;
    explicit DistanceMatrix(std::size_t t) : SquareMatrix(t) {}

    void require_valid(const char* where) const {
        for (std::size_t r = 0; r < dim(); ++r) {
            if (at(r, r) != 0) throw NumericError(std::string(where) + ": distance diagonal must be 0");
            for (std::size_t c = 0; c < dim(); ++c) {
                if (!(at(r, c) >= 0) || !std::isfinite(at(r, c)))
                    throw NumericError(std::string(where) + ": distances must be finite and >= 0");
                if (at(r, c) != at(c, r))
                    throw NumericError(std::string(where) + ": distance matrix must be symmetric");
            }
        }
    }
};

/// Mean cross-entropy of a logit batch against integer labels, computed
/// through log-softmax so extreme logits cannot reach log(0).
inline NodeId cross_entropy_mean(Tape& tape, NodeId logits, const std::vector<int>& labels) {
    const Tensor& z = tape.value(logits);
    if (z.rank() != 2) throw ShapeError("cross_entropy_mean: logits must be a batch");
    std::size_t m = z.rows(), classes = z.cols();
    if (m == 0 || labels.empty()) throw Error("cross_entropy_mean: empty batch");
    if (labels.size() != m) throw ShapeError("cross_entropy_mean: batch/label count mismatch");

    Tensor onehot({m, classes});
    Tensor rowmax({m, classes});
    for (std::size_t r = 0; r < m; ++r) {
        if (labels[r] < 0 || static_cast<std::size_t>(labels[r]) >= classes)
            throw Error("cross_entropy_mean: label " + std::to_string(labels[r]) + " out of range [0," +
                        std::to_string(classes) + ")");
        onehot.at(r, static_cast<std::size_t>(labels[r])) = 1;
        real mx = z.at(r, 0);
        for (std::size_t c = 1; c < classes; ++c) mx = std::max(mx, z.at(r, c));
        for (std::size_t c = 0; c < classes; ++c) rowmax.at(r, c) = mx;
    }

    // log-softmax: (z - max) - log(sum(exp(z - max))), with the shift as a
    // constant; softmax shift invariance keeps the gradients exact.
    NodeId zc = tape.sub(logits, tape.constant(std::move(rowmax)));
    NodeId ez = tape.exp(zc);
    NodeId rowsum = tape.matmul(ez, tape.constant(Tensor::ones({classes, 1})));
    NodeId lse = tape.matmul(tape.log(rowsum), tape.constant(Tensor::ones({1, classes})));
    NodeId logsm = tape.sub(zc, lse);
    NodeId picked = tape.mul(tape.constant(std::move(onehot)), logsm);
    return tape.scalar_mul(tape.sum(picked), real(-1) / real(m));
}

/// H-divergence surrogate on one pair, mean-normalized and evaluated in
/// logit space: mean log g over the first batch plus mean log(1-g) over the
/// second; always <= 0, equal to -2 ln 2 for a maximally confused
/// discriminator.
inline NodeId adversarial_loss_h_node(Tape& tape, const BoundModel& model, PairKey pair,
                                      NodeId feat_t, NodeId feat_i) {
    if (model.disc_output_activation(pair) != Activation::sigmoid)
        throw ConfigError("adversarial_loss_h: discriminator must end in sigmoid under hdiv");
    NodeId st = model.discriminate_pre(pair, feat_t);
    NodeId si = model.discriminate_pre(pair, feat_i);
    // log sigmoid(s) = -softplus(-s), log(1 - sigmoid(s)) = -softplus(s).
    NodeId log_gt = tape.scalar_mul(tape.mean(tape.softplus(tape.scalar_mul(st, real(-1)))), real(-1));
    NodeId log_1gi = tape.scalar_mul(tape.mean(tape.softplus(si)), real(-1));
    return tape.add(log_gt, log_1gi);
}

/// Kantorovich-Rubinstein surrogate: difference of per-batch mean critic
/// scores. Exactly 0 on identical batches and antisymmetric under swap.
inline NodeId adversarial_loss_w1_node(Tape& tape, const BoundModel& model, PairKey pair,
                                       NodeId feat_t, NodeId feat_i) {
    NodeId st = model.discriminate(pair, feat_t);
    NodeId si = model.discriminate(pair, feat_i);
    return tape.sub(tape.mean(st), tape.mean(si));
}

/// Mean of (||grad_x g(x_hat)|| - 1)^2 over interpolated raw inputs, where g
/// is the composite extractor + critic. Interpolation pairs samples by index
/// after a seeded shuffle of each batch; unequal sizes truncate to the
/// shorter. The inner backward pass is recorded, so the result participates
/// in the outer gradient like any other node.
inline NodeId gradient_penalty_node(Tape& tape, const BoundModel& model, PairKey pair,
                                    const Tensor& batch_t, const Tensor& batch_i,
                                    std::uint64_t seed) {
    if (batch_t.rank() != 2 || batch_i.rank() != 2 || batch_t.cols() != batch_i.cols())
        throw ShapeError("gradient_penalty: batches must share feature width");
    std::size_t n = std::min(batch_t.rows(), batch_i.rows());
    if (n == 0) throw Error("gradient_penalty: empty batch");
    std::size_t d = batch_t.cols();

    Rng rng(mix_seed(seed, 0x6770ULL, pair.first, pair.second));
    std::vector<std::size_t> pt(batch_t.rows()), pi(batch_i.rows());
    for (std::size_t k = 0; k < pt.size(); ++k) pt[k] = k;
    for (std::size_t k = 0; k < pi.size(); ++k) pi[k] = k;
    rng.shuffle(pt);
    rng.shuffle(pi);

    Tensor xhat({n, d});
    for (std::size_t k = 0; k < n; ++k) {
        real u = static_cast<real>(rng.uniform());
        for (std::size_t c = 0; c < d; ++c)
            xhat.at(k, c) = u * batch_t.at(pt[k], c) + (real(1) - u) * batch_i.at(pi[k], c);
    }

    NodeId xnode = tape.leaf(std::move(xhat));
    NodeId scores = model.discriminate(pair, model.extract_features(xnode));
    NodeId gx = tape.backward_nodes(tape.sum(scores), std::vector<NodeId>{xnode})[0];
    // Per-row gradient norms.
    NodeId norms = tape.sqrt(tape.matmul(tape.square(gx), tape.constant(Tensor::ones({d, 1}))));
    NodeId excess = tape.sub(norms, tape.constant(Tensor::ones({n, 1})));
    return tape.mean(tape.square(excess));
}

// Value-level forms of the pair losses; each builds a scratch tape.

inline real adversarial_loss_h(const AmtnnParams& params, const Tensor& batch_t,
                               const Tensor& batch_i, PairKey pair) {
    if (batch_t.rows() == 0 || batch_i.rows() == 0) throw Error("adversarial_loss_h: empty batch");
    Tape tape;
    BoundModel model(tape, params);
    NodeId ft = model.extract_features(tape.constant(batch_t));
    NodeId fi = model.extract_features(tape.constant(batch_i));
    return tape.value(adversarial_loss_h_node(tape, model, pair, ft, fi)).scalar_value();
}

inline real adversarial_loss_w1(const AmtnnParams& params, const Tensor& batch_t,
                                const Tensor& batch_i, PairKey pair) {
    if (batch_t.rows() == 0 || batch_i.rows() == 0) throw Error("adversarial_loss_w1: empty batch");
    Tape tape;
    BoundModel model(tape, params);
    NodeId ft = model.extract_features(tape.constant(batch_t));
    NodeId fi = model.extract_features(tape.constant(batch_i));
    return tape.value(adversarial_loss_w1_node(tape, model, pair, ft, fi)).scalar_value();
}

inline real gradient_penalty(const AmtnnParams& params, const Tensor& batch_t,
                             const Tensor& batch_i, PairKey pair, std::uint64_t seed,
                             Metric metric = Metric::w1) {
    if (metric != Metric::w1)
        throw ConfigError("gradient_penalty: only defined for the w1 metric");
    Tape tape;
    BoundModel model(tape, params);
    return tape.value(gradient_penalty_node(tape, model, pair, batch_t, batch_i, seed)).scalar_value();
}

/// Empirical loss matrix over per-task batches.
inline LossMatrix task_loss_matrix(const AmtnnParams& params,
                                   const std::vector<LabeledBatch>& batches) {
    std::size_t tasks = params.num_tasks();
    if (batches.size() != tasks) throw ShapeError("task_loss_matrix: one batch per task required");
    Tape tape;
    BoundModel model(tape, params);
    std::vector<NodeId> feats;
    for (const LabeledBatch& b : batches) {
        if (b.size() == 0) throw Error("task_loss_matrix: empty batch");
        feats.push_back(model.extract_features(tape.constant(b.x)));
    }
    LossMatrix r(tasks);
    for (std::size_t t = 0; t < tasks; ++t)
        for (std::size_t i = 0; i < tasks; ++i)
            r.at(t, i) =
                tape.value(cross_entropy_mean(tape, model.predict_logits(t, feats[i]), batches[i].y))
                    .scalar_value();
    r.require_valid("task_loss_matrix");
    return r;
}

struct WeightedTaskLoss {
    std::vector<real> per_task;  // R_hat_{alpha_t}
    real total = 0;              // sum over tasks
};

inline WeightedTaskLoss weighted_task_loss(const LossMatrix& r_hat, const RelationMatrix& alpha) {
    if (r_hat.dim() != alpha.dim()) throw ShapeError("weighted_task_loss: dimension mismatch");
    alpha.require_feasible("weighted_task_loss");
    WeightedTaskLoss out;
    out.per_task.resize(r_hat.dim(), 0);
    for (std::size_t t = 0; t < r_hat.dim(); ++t) {
        for (std::size_t i = 0; i < r_hat.dim(); ++i) out.per_task[t] += alpha.at(t, i) * r_hat.at(t, i);
        out.total += out.per_task[t];
    }
    return out;
}

/// Turns an epoch statistic into a distance estimate.
///   hdiv: stat is the epoch-average discriminator accuracy; the affine
///         rescale 2*acc - 1 (clamped to [0,1]) makes chance level map to
///         distance 0, so identical distributions get a zero distance.
///   w1:   stat is the epoch-average critic loss, the negative of the dual
///         objective; a trained critic drives it below 0 and the distance is
///         its negation clamped at 0.
inline real distance_estimate(Metric metric, real stat) {
    switch (metric) {
        case Metric::hdiv: return std::clamp(real(2) * stat - real(1), real(0), real(1));
        case Metric::w1: return std::max(real(0), -stat);
        case Metric::none: break;
    }
    throw ConfigError("distance_estimate: no distance under metric 'none'");
}

/// Assembles the symmetric distance matrix from per-pair statistics; the
/// diagonal is exactly 0.
inline DistanceMatrix make_distance_matrix(Metric metric, std::size_t tasks,
                                           const std::map<PairKey, real>& stats) {
    DistanceMatrix d(tasks);
    for (const auto& [pair, stat] : stats) {
        real v = distance_estimate(metric, stat);
        d.at(pair.first, pair.second) = v;
        d.at(pair.second, pair.first) = v;
    }
    d.require_valid("make_distance_matrix");
    return d;
}

/// Scalar value of the joint objective: the alpha-weighted task losses plus
/// rho times the alpha-weighted pair losses (plus a penalty term when one is
/// supplied). e_hat holds one value per unordered pair, used for both
/// orientations.
inline real total_objective(const LossMatrix& r_hat, const RelationMatrix& alpha,
                            const std::map<PairKey, real>& e_hat, real rho,
                            real penalty_sum = 0, real gp_weight = 1) {
    WeightedTaskLoss task = weighted_task_loss(r_hat, alpha);
    real adv = 0;
    for (const auto& [pair, e] : e_hat)
        adv += (alpha.at(pair.first, pair.second) + alpha.at(pair.second, pair.first)) * e;
    return task.total + rho * adv + gp_weight * penalty_sum;
}

/// Options for the full objective graph.
struct ObjectiveOptions {
    Metric metric = Metric::none;
    real rho = 0;
    real gp_weight = 1;
    // Training graphs insert gradient reversal so one descent step descends
    // theta_f / theta_h and ascends theta_d; evaluation graphs leave the
    // reversal out, making the analytic gradient the true derivative of the
    // objective value (that is what the finite-difference suites check).
    bool training_graph = false;
    std::uint64_t gp_seed = 0;
};

struct PairTerms {
    real e_hat = 0;                   // adversarial loss value
    real penalty = 0;                 // gradient penalty value (w1 only)
    std::size_t disc_correct = 0;     // hdiv: correct decisions at threshold 0.5
    std::size_t disc_total = 0;
};

struct ObjectiveGraph {
    NodeId total = kNoNode;
    LossMatrix r_hat;
    std::vector<real> weighted_per_task;
    real task_term = 0;
    real adv_term = 0;      // rho-weighted adversarial sum (objective value)
    real penalty_term = 0;  // gp-weighted penalty sum
    std::map<PairKey, PairTerms> pairs;
};

/// Builds the full objective on one tape. With training_graph set, a single
/// backward pass yields the min-max update directions; without it, the same
/// scalar value is produced with plain gradients everywhere.
inline ObjectiveGraph build_objective(Tape& tape, const BoundModel& model,
                                      const std::vector<LabeledBatch>& batches,
                                      const RelationMatrix& alpha, const ObjectiveOptions& opt) {
    const AmtnnParams& params = model.params();
    std::size_t tasks = params.num_tasks();
    if (batches.size() != tasks) throw ShapeError("build_objective: one batch per task required");
    if (alpha.dim() != tasks) throw ShapeError("build_objective: alpha dimension mismatch");
    alpha.require_feasible("build_objective");

    ObjectiveGraph out;
    out.r_hat = LossMatrix(tasks);

    std::vector<NodeId> feats;
    for (const LabeledBatch& b : batches) {
        if (b.size() == 0) throw Error("build_objective: empty batch");
        feats.push_back(model.extract_features(tape.constant(b.x)));
    }

    // Weighted empirical loss: sum_t sum_i alpha[t][i] * r_hat[t][i].
    NodeId task_term = kNoNode;
    out.weighted_per_task.assign(tasks, 0);
    for (std::size_t t = 0; t < tasks; ++t) {
        for (std::size_t i = 0; i < tasks; ++i) {
            NodeId r = cross_entropy_mean(tape, model.predict_logits(t, feats[i]), batches[i].y);
            out.r_hat.at(t, i) = tape.value(r).scalar_value();
            out.weighted_per_task[t] += alpha.at(t, i) * out.r_hat.at(t, i);
            if (alpha.at(t, i) == real(0)) continue;
            NodeId term = tape.scalar_mul(r, alpha.at(t, i));
            task_term = task_term == kNoNode ? term : tape.add(task_term, term);
        }
    }
    if (task_term == kNoNode) task_term = tape.constant(Tensor::scalar(0));
    out.task_term = tape.value(task_term).scalar_value();
    NodeId total = task_term;

    const bool adversarial = opt.metric != Metric::none && opt.rho != real(0) && tasks > 1;
    if (adversarial) {
        NodeId adv_sum = kNoNode;
        NodeId pen_sum = kNoNode;
        for (std::size_t t = 0; t < tasks; ++t) {
            for (std::size_t i = t + 1; i < tasks; ++i) {
                PairKey pair(t, i);
                NodeId ft = feats[t];
                NodeId fi = feats[i];
                if (opt.training_graph) {
                    ft = gradient_reversal(tape, ft);
                    fi = gradient_reversal(tape, fi);
                }
                PairTerms terms;
                NodeId e;
                if (opt.metric == Metric::hdiv) {
                    e = adversarial_loss_h_node(tape, model, pair, ft, fi);
                    // Decision counts at threshold 0.5 (logit 0) for the
                    // epoch accuracy statistic: positive logits predict the
                    // first task of the pair.
                    const Tensor& st = tape.value(model.discriminate_pre(pair, feats[t]));
                    const Tensor& si = tape.value(model.discriminate_pre(pair, feats[i]));
                    for (real v : st.data()) terms.disc_correct += v > 0 ? 1 : 0;
                    for (real v : si.data()) terms.disc_correct += v <= 0 ? 1 : 0;
                    terms.disc_total = st.size() + si.size();
                } else {
                    e = adversarial_loss_w1_node(tape, model, pair, ft, fi);
                }
                terms.e_hat = tape.value(e).scalar_value();

                real coef = opt.rho * (alpha.at(t, i) + alpha.at(i, t));
                if (coef != real(0)) {
                    NodeId term = tape.scalar_mul(e, coef);
                    adv_sum = adv_sum == kNoNode ? term : tape.add(adv_sum, term);
                }

                if (opt.metric == Metric::w1 && opt.gp_weight != real(0)) {
                    NodeId pen = gradient_penalty_node(tape, model, pair, batches[t].x, batches[i].x,
                                                       opt.gp_seed);
                    terms.penalty = tape.value(pen).scalar_value();
                    pen_sum = pen_sum == kNoNode ? pen : tape.add(pen_sum, pen);
                }
                out.pairs.emplace(pair, terms);
            }
        }
        if (adv_sum != kNoNode) {
            out.adv_term = tape.value(adv_sum).scalar_value();
            // Second reversal on the summed term: theta_d sees one flip
            // (ascent), theta_f sees two (plain descent), and the value is
            // untouched.
            if (opt.training_graph) adv_sum = tape.reverse_grad(adv_sum);
            total = tape.add(total, adv_sum);
        }
        if (pen_sum != kNoNode) {
            NodeId weighted = tape.scalar_mul(pen_sum, opt.gp_weight);
            out.penalty_term = tape.value(weighted).scalar_value();
            total = tape.add(total, weighted);
        }
    }

    out.total = total;
    return out;
}

}  // namespace amtnn

#endif  // AMTNN_LOSSES_HPP
