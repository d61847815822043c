#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "amtnn/gradcheck.hpp"
#include "amtnn/model.hpp"
#include "amtnn/rng.hpp"

using namespace amtnn;

namespace {

Tensor random_batch(std::size_t n, std::size_t d, Rng& rng, real lo = -2, real hi = 2) {
    Tensor x({n, d});
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.uniform(lo, hi);
    return x;
}

AmtnnParams toy_params(Metric metric, std::uint64_t seed, std::size_t tasks = 2) {
    ModelArch arch = make_mlp_arch(4, {5}, {3}, 3, {3}, metric);
    return init_params(arch, tasks, metric, seed);
}

}  // namespace

TEST_CASE("init_params is deterministic in the seed with zero biases", "[model]") {
    AmtnnParams a = toy_params(Metric::hdiv, 42);
    AmtnnParams b = toy_params(Metric::hdiv, 42);
    auto va = get_parameter_values(a);
    auto vb = get_parameter_values(b);
    REQUIRE(va.size() == vb.size());
    for (std::size_t i = 0; i < va.size(); ++i) REQUIRE(va[i].data() == vb[i].data());

    for (const Stack* s : {&a.extractor, &a.heads[0], &a.heads[1]})
        for (const DenseLayer& l : s->layers)
            for (real x : l.bias.data()) REQUIRE(x == 0.0);

    AmtnnParams c = toy_params(Metric::hdiv, 43);
    REQUIRE(get_parameter_values(c)[0].data() != va[0].data());
}

TEST_CASE("init_params builds T heads and T(T-1)/2 discriminators", "[model]") {
    AmtnnParams p = toy_params(Metric::w1, 1, 4);
    REQUIRE(p.heads.size() == 4);
    REQUIRE(p.discriminators.size() == 6);
    // The same parameters serve (t,i) and (i,t).
    REQUIRE(&p.discriminators.at(PairKey(1, 3)) == &p.discriminators.at(PairKey(3, 1)));
    REQUIRE_THROWS_AS(init_params(make_mlp_arch(4, {5}, {3}, 3, {3}, Metric::w1), 1, Metric::w1, 0),
                      ConfigError);
}

TEST_CASE("glorot weights have near-zero mean at the stated variance", "[model]") {
    // One 100x100 layer: bound a = sqrt(6/200), var = a^2/3, and the mean of
    // 10^4 entries should sit within 3 standard errors of zero.
    ModelArch arch;
    arch.input_dim = 100;
    arch.extractor = {{100, 100, Activation::elu}};
    arch.head = {{100, 2, Activation::softmax}};
    AmtnnParams p = init_params(arch, 1, Metric::none, 7);
    const Tensor& w = p.extractor.layers[0].weight;
    real bound = std::sqrt(6.0 / 200.0);
    real var = bound * bound / 3.0;
    real mean = 0;
    for (real x : w.data()) {
        REQUIRE(std::abs(x) <= bound);
        mean += x;
    }
    mean /= real(w.size());
    REQUIRE(std::abs(mean) <= 3.0 * std::sqrt(var / real(w.size())));
}

TEST_CASE("empty extractor is the identity and batch sizes are preserved", "[model]") {
    ModelArch arch;
    arch.input_dim = 4;
    arch.head = {{4, 2, Activation::softmax}};
    AmtnnParams p = init_params(arch, 2, Metric::none, 3);

    Rng rng(5);
    Tensor x = random_batch(6, 4, rng);
    Tape tape;
    BoundModel model(tape, p);
    NodeId f = model.extract_features(tape.constant(x));
    REQUIRE(tape.value(f).data() == x.data());
    REQUIRE(tape.value(f).rows() == 6);

    AmtnnParams q = toy_params(Metric::none, 9);
    Tape tape2;
    BoundModel m2(tape2, q);
    NodeId f2 = m2.extract_features(tape2.constant(x));
    REQUIRE(tape2.value(f2).rows() == 6);
    REQUIRE(tape2.value(f2).cols() == 5);
    REQUIRE_THROWS_AS(m2.extract_features(tape2.constant(random_batch(3, 7, rng))), ShapeError);
}

TEST_CASE("predict_task puts rows on the simplex, uniform at zero logits", "[model]") {
    AmtnnParams p = toy_params(Metric::none, 11);
    // Zero the head so its logits vanish.
    for (DenseLayer& l : p.heads[0].layers) {
        for (real& x : l.weight.data()) x = 0;
        for (real& x : l.bias.data()) x = 0;
    }
    Rng rng(12);
    Tensor x = random_batch(5, 4, rng);
    Tape tape;
    BoundModel model(tape, p);
    NodeId probs = model.predict_task(0, model.extract_features(tape.constant(x)));
    const Tensor& pv = tape.value(probs);
    for (std::size_t r = 0; r < 5; ++r) {
        real s = 0;
        for (std::size_t c = 0; c < 3; ++c) {
            REQUIRE(pv.at(r, c) == Catch::Approx(1.0 / 3.0).margin(1e-12));
            s += pv.at(r, c);
        }
        REQUIRE(s == Catch::Approx(1.0).margin(1e-9));
    }
}

TEST_CASE("argmax of head probabilities is invariant to logit shifts", "[model]") {
    // Softmax shift invariance, checked through the bias of the final layer.
    AmtnnParams p = toy_params(Metric::none, 21);
    Rng rng(22);
    Tensor x = random_batch(4, 4, rng);

    auto argmaxes = [&](const AmtnnParams& params) {
        Tape tape;
        BoundModel model(tape, params);
        NodeId probs = model.predict_task(1, model.extract_features(tape.constant(x)));
        std::vector<std::size_t> out;
        for (std::size_t r = 0; r < 4; ++r) {
            std::size_t best = 0;
            for (std::size_t c = 1; c < 3; ++c)
                if (tape.value(probs).at(r, c) > tape.value(probs).at(r, best)) best = c;
            out.push_back(best);
        }
        return out;
    };

    auto before = argmaxes(p);
    for (real& b : p.heads[1].layers.back().bias.data()) b += 7.5;
    REQUIRE(argmaxes(p) == before);
}

TEST_CASE("discriminator scores follow the metric's output convention", "[model]") {
    // hdiv: zero final layer -> 0.5 scores, always strictly inside (0,1).
    AmtnnParams ph = toy_params(Metric::hdiv, 31);
    Stack& dh = ph.discriminators.at(PairKey(0, 1));
    for (real& x : dh.layers.back().weight.data()) x = 0;
    Rng rng(32);
    Tensor x = random_batch(5, 4, rng);
    {
        Tape tape;
        BoundModel model(tape, ph);
        NodeId s = model.discriminate(PairKey(0, 1), model.extract_features(tape.constant(x)));
        for (std::size_t i = 0; i < 5; ++i) REQUIRE(tape.value(s)[i] == 0.5);
    }
    {
        AmtnnParams p2 = toy_params(Metric::hdiv, 33);
        Tape tape;
        BoundModel model(tape, p2);
        NodeId s = model.discriminate(PairKey(0, 1), model.extract_features(tape.constant(x)));
        for (std::size_t i = 0; i < 5; ++i) {
            REQUIRE(tape.value(s)[i] > 0.0);
            REQUIRE(tape.value(s)[i] < 1.0);
        }
    }
    // w1: zero weights -> 0 scores, no final activation.
    AmtnnParams pw = toy_params(Metric::w1, 34);
    Stack& dw = pw.discriminators.at(PairKey(0, 1));
    for (DenseLayer& l : dw.layers)
        for (real& v : l.weight.data()) v = 0;
    {
        Tape tape;
        BoundModel model(tape, pw);
        REQUIRE(model.disc_output_activation(PairKey(0, 1)) == Activation::none);
        NodeId s = model.discriminate(PairKey(0, 1), model.extract_features(tape.constant(x)));
        for (std::size_t i = 0; i < 5; ++i) REQUIRE(tape.value(s)[i] == 0.0);
    }
    // Config switch for a bounded w1 critic.
    ModelArch bounded = make_mlp_arch(4, {5}, {3}, 3, {3}, Metric::w1, true);
    REQUIRE(bounded.disc.back().act == Activation::sigmoid);
}

TEST_CASE("reversal negates parameter gradients of a wrapped loss", "[model]") {
    AmtnnParams p = toy_params(Metric::none, 41);
    Rng rng(42);
    Tensor x = random_batch(5, 4, rng);

    auto grads = [&](bool reversed) {
        Tape tape;
        BoundModel model(tape, p);
        NodeId f = model.extract_features(tape.constant(x));
        if (reversed) f = gradient_reversal(tape, f);
        NodeId loss = tape.mean(tape.square(f));
        GradientMap gm = tape.gradients(loss, model.theta_f());
        std::vector<real> out;
        for (NodeId id : model.theta_f())
            for (real v : gm.at(id).data()) out.push_back(v);
        return out;
    };

    auto plain = grads(false);
    auto rev = grads(true);
    REQUIRE(plain.size() == rev.size());
    for (std::size_t i = 0; i < plain.size(); ++i)
        REQUIRE(rev[i] == Catch::Approx(-plain[i]).margin(1e-15));
}

#ifndef AMTNN_FLOAT32
TEST_CASE("full toy model passes the gradient check end to end", "[model][gradcheck]") {
    AmtnnParams p = toy_params(Metric::w1, 51);
    Rng rng(52);
    Tensor x0 = random_batch(3, 4, rng);
    Tensor x1 = random_batch(3, 4, rng);

    auto build = [&](Tape& tape, const AmtnnParams& params, std::vector<NodeId>& ids) {
        BoundModel model(tape, params);
        ids = model.all_params();
        NodeId f0 = model.extract_features(tape.constant(x0));
        NodeId f1 = model.extract_features(tape.constant(x1));
        NodeId a = tape.mean(tape.square(model.predict_task(0, f0)));
        NodeId b = tape.mean(tape.square(model.predict_task(1, f1)));
        NodeId c = tape.mean(tape.square(model.discriminate(PairKey(0, 1), f0)));
        return tape.add(tape.add(a, b), c);
    };

    Tape tape;
    std::vector<NodeId> ids;
    NodeId root = build(tape, p, ids);
    GradientMap gm = tape.gradients(root, ids);
    std::vector<Tensor> analytic;
    for (NodeId id : ids) analytic.push_back(gm.at(id));

    auto objective = [&](const std::vector<Tensor>& values) {
        AmtnnParams q = p;
        set_parameter_values(q, values);
        Tape t2;
        std::vector<NodeId> unused;
        return t2.value(build(t2, q, unused)).scalar_value();
    };
    auto fd = finite_difference_gradient(objective, get_parameter_values(p), 1e-5);
    REQUIRE(max_rel_error(analytic, fd) < 1e-4);
}
#endif
