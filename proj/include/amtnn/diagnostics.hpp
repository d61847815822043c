#ifndef AMTNN_DIAGNOSTICS_HPP
#define AMTNN_DIAGNOSTICS_HPP

#include <cstdint>
#include <vector>

#include "amtnn/gradcheck.hpp"
#include "amtnn/losses.hpp"
#include "amtnn/rng.hpp"

namespace amtnn {

struct ObjectiveGradcheck {
    real max_rel_error = 0;
    std::size_t coordinates = 0;
};

/// Finite-difference check of the full joint objective (weighted task
/// losses, adversarial pair losses, and under w1 the gradient penalty) on a
/// 2-task, 8-feature, 3-class toy model.
inline ObjectiveGradcheck full_objective_gradcheck(Metric metric, std::uint64_t seed = 1,
                                                   real h = real(1e-5)) {
    if (metric == Metric::none) throw ConfigError("full_objective_gradcheck: pick hdiv or w1");
    Rng rng(mix_seed(seed, 0x6763ULL));

    const std::size_t dim = 8, classes = 3;
    auto random_batch = [&](std::size_t n) {
        LabeledBatch b;
        b.x = Tensor({n, dim});
        for (std::size_t i = 0; i < b.x.size(); ++i) b.x[i] = rng.uniform(-2, 2);
        b.y.resize(n);
        for (std::size_t i = 0; i < n; ++i) b.y[i] = static_cast<int>(rng.index(classes));
        return b;
    };
    std::vector<LabeledBatch> batches = {random_batch(5), random_batch(6)};

    RelationMatrix alpha(2);
    alpha.at(0, 0) = 0.65;
    alpha.at(0, 1) = 0.35;
    alpha.at(1, 0) = 0.25;
    alpha.at(1, 1) = 0.75;

    ModelArch arch = make_mlp_arch(dim, {6}, {5}, classes, {5}, metric);
    AmtnnParams params = init_params(arch, 2, metric, mix_seed(seed, 0x70ULL));

    ObjectiveOptions opt;
    opt.metric = metric;
    opt.rho = 0.5;
    opt.gp_weight = 1;
    opt.gp_seed = mix_seed(seed, 0x677073ULL);
    opt.training_graph = false;

    auto build = [&](Tape& tape, const AmtnnParams& p, std::vector<NodeId>& ids) {
        BoundModel model(tape, p);
        ids = model.all_params();
        return build_objective(tape, model, batches, alpha, opt).total;
    };

    Tape tape;
    std::vector<NodeId> ids;
    NodeId root = build(tape, params, ids);
    GradientMap gm = tape.gradients(root, ids);
    std::vector<Tensor> analytic;
    for (NodeId id : ids) analytic.push_back(gm.at(id));

    auto objective = [&](const std::vector<Tensor>& values) {
        AmtnnParams q = params;
        set_parameter_values(q, values);
        Tape t2;
        std::vector<NodeId> unused;
        return t2.value(build(t2, q, unused)).scalar_value();
    };
    std::vector<Tensor> values = get_parameter_values(params);
    auto fd = finite_difference_gradient(objective, values, h);

    ObjectiveGradcheck result;
    result.max_rel_error = max_rel_error(analytic, fd);
    for (const Tensor& t : values) result.coordinates += t.size();
    return result;
}

}  // namespace amtnn

#endif  // AMTNN_DIAGNOSTICS_HPP
