#ifndef AMTNN_MODEL_HPP
#define AMTNN_MODEL_HPP

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "amtnn/autodiff.hpp"
#include "amtnn/rng.hpp"
#include "amtnn/tensor.hpp"
#include "amtnn/types.hpp"

namespace amtnn {

enum class Activation { none, relu, elu, sigmoid, softmax };

inline std::string to_string(Activation a) {
    switch (a) {
        case Activation::none: return "none";
        case Activation::relu: return "relu";
        case Activation::elu: return "elu";
        case Activation::sigmoid: return "sigmoid";
        case Activation::softmax: return "softmax";
    }
    return "?";
}

struct LayerSpec {
    std::size_t in = 0, out = 0;
    Activation act = Activation::none;
};

struct DenseLayer {
    Tensor weight;  // in x out
    Tensor bias;    // out
};

/// A fully connected stack: layout plus parameter values.
struct Stack {
    std::vector<LayerSpec> spec;
    std::vector<DenseLayer> layers;

    std::size_t out_dim(std::size_t fallback) const { return spec.empty() ? fallback : spec.back().out; }
};

/// Network layout of the three parameter groups. The head and discriminator
/// entries are prototypes instantiated once per task / per task pair.
struct ModelArch {
    std::size_t input_dim = 0;
    std::vector<LayerSpec> extractor;
    std::vector<LayerSpec> head;
    std::vector<LayerSpec> disc;

    std::size_t feature_dim() const { return extractor.empty() ? input_dim : extractor.back().out; }
};

/// Default MLP layout: elu hidden layers everywhere, softmax classification
/// heads and scalar-output discriminators. The discriminator's final
/// activation is sigmoid under the H-divergence metric; under Wasserstein-1
/// the dual potential is unconstrained, so it defaults to a linear output
/// (w1_sigmoid_output opts back into a bounded critic).
inline ModelArch make_mlp_arch(std::size_t input_dim, const std::vector<std::size_t>& extractor_dims,
                               const std::vector<std::size_t>& head_hidden, std::size_t classes,
                               const std::vector<std::size_t>& disc_hidden, Metric metric,
                               bool w1_sigmoid_output = false) {
    if (input_dim == 0) throw ConfigError("make_mlp_arch: input_dim must be positive");
    if (classes < 2) throw ConfigError("make_mlp_arch: classes must be at least 2");
    ModelArch arch;
    arch.input_dim = input_dim;
    std::size_t prev = input_dim;
    for (std::size_t w : extractor_dims) {
        arch.extractor.push_back({prev, w, Activation::elu});
        prev = w;
    }
    std::size_t feat = prev;
    prev = feat;
    for (std::size_t w : head_hidden) {
        arch.head.push_back({prev, w, Activation::elu});
        prev = w;
    }
    arch.head.push_back({prev, classes, Activation::softmax});
    if (metric != Metric::none) {
        prev = feat;
        for (std::size_t w : disc_hidden) {
            arch.disc.push_back({prev, w, Activation::elu});
            prev = w;
        }
        Activation out_act = metric == Metric::hdiv
                                 ? Activation::sigmoid
                                 : (w1_sigmoid_output ? Activation::sigmoid : Activation::none);
        arch.disc.push_back({prev, 1, out_act});
    }
    return arch;
}

/// The three AMTNN parameter groups: shared extractor, one classification
/// head per task, and one discriminator per unordered task pair.
struct AmtnnParams {
    ModelArch arch;
    Stack extractor;
    std::vector<Stack> heads;
    std::map<PairKey, Stack> discriminators;

    std::size_t num_tasks() const { return heads.size(); }
    std::size_t feature_dim() const { return arch.feature_dim(); }
};

namespace detail {

inline void validate_chain(const std::vector<LayerSpec>& spec, std::size_t expect_in, const char* what) {
    std::size_t prev = expect_in;
    for (const LayerSpec& l : spec) {
        if (l.in == 0 || l.out == 0)
            throw ConfigError(std::string(what) + ": layer dims must be positive");
        if (l.in != prev)
            throw ConfigError(std::string(what) + ": layer input width " + std::to_string(l.in) +
                              " does not match previous width " + std::to_string(prev));
        prev = l.out;
    }
}

inline Stack init_stack(const std::vector<LayerSpec>& spec, Rng& rng) {
    Stack s;
    s.spec = spec;
    for (const LayerSpec& l : spec) {
        DenseLayer d;
        d.weight = Tensor({l.in, l.out});
        real bound = std::sqrt(real(6) / real(l.in + l.out));
        for (std::size_t i = 0; i < d.weight.size(); ++i)
            d.weight[i] = static_cast<real>(rng.uniform(-bound, bound));
        d.bias = Tensor::zeros({l.out});
        s.layers.push_back(std::move(d));
    }
    return s;
}

}  // namespace detail

/// Glorot-uniform weights, zero biases, deterministic in the seed. The
/// extractor is initialized first, then heads in task order, then
/// discriminators in pair order, so configurations that differ only in the
/// metric share extractor and head initializations.
inline AmtnnParams init_params(const ModelArch& arch, std::size_t num_tasks, Metric metric,
                               std::uint64_t seed) {
    if (num_tasks < 1) throw ConfigError("init_params: task count must be positive");
    if (metric != Metric::none && num_tasks < 2)
        throw ConfigError("init_params: adversarial metrics need at least 2 tasks");
    detail::validate_chain(arch.extractor, arch.input_dim, "extractor");
    detail::validate_chain(arch.head, arch.feature_dim(), "head");
    if (metric != Metric::none) detail::validate_chain(arch.disc, arch.feature_dim(), "discriminator");

    Rng rng(mix_seed(seed, 0x6d6f64656cULL));
    AmtnnParams p;
    p.arch = arch;
    p.extractor = detail::init_stack(arch.extractor, rng);
    for (std::size_t t = 0; t < num_tasks; ++t) p.heads.push_back(detail::init_stack(arch.head, rng));
    if (metric != Metric::none) {
        for (std::size_t t = 0; t < num_tasks; ++t)
            for (std::size_t i = t + 1; i < num_tasks; ++i)
                p.discriminators.emplace(PairKey(t, i), detail::init_stack(arch.disc, rng));
    }
    return p;
}

/// Pointers to every parameter tensor in canonical order: extractor layers
/// (weight, bias), then heads in task order, then discriminators in pair
/// order. Optimizer state and bound node ids use the same order.
inline std::vector<Tensor*> collect_parameters(AmtnnParams& p) {
    std::vector<Tensor*> out;
    auto push_stack = [&](Stack& s) {
        for (DenseLayer& l : s.layers) {
            out.push_back(&l.weight);
            out.push_back(&l.bias);
        }
    };
    push_stack(p.extractor);
    for (Stack& h : p.heads) push_stack(h);
    for (auto& [key, d] : p.discriminators) push_stack(d);
    return out;
}

inline std::vector<Tensor> get_parameter_values(const AmtnnParams& p) {
    std::vector<Tensor> out;
    auto add = [&](const Stack& s) {
        for (const DenseLayer& l : s.layers) {
            out.push_back(l.weight);
            out.push_back(l.bias);
        }
    };
    add(p.extractor);
    for (const Stack& h : p.heads) add(h);
    for (const auto& [key, d] : p.discriminators) add(d);
    return out;
}

inline void set_parameter_values(AmtnnParams& p, const std::vector<Tensor>& values) {
    std::vector<Tensor*> refs = collect_parameters(p);
    if (refs.size() != values.size())
        throw ShapeError("set_parameter_values: expected " + std::to_string(refs.size()) +
                         " tensors, got " + std::to_string(values.size()));
    for (std::size_t i = 0; i < refs.size(); ++i) {
        if (!refs[i]->same_shape(values[i]))
            throw ShapeError("set_parameter_values: shape mismatch at index " + std::to_string(i));
        *refs[i] = values[i];
    }
}

/// Forward pass is the identity; the backward pass multiplies the incoming
/// gradient by -1. Composing it twice restores the plain gradient.
inline NodeId gradient_reversal(Tape& tape, NodeId x) { return tape.reverse_grad(x); }

/// One model bound onto one tape: parameter leaves plus forward paths.
class BoundModel {
public:
    BoundModel(Tape& tape, const AmtnnParams& params) : tape_(&tape), params_(&params) {
        bind_stack(params.extractor, extractor_, theta_f_);
        heads_.resize(params.heads.size());
        for (std::size_t t = 0; t < params.heads.size(); ++t)
            bind_stack(params.heads[t], heads_[t], theta_h_);
        for (const auto& [key, d] : params.discriminators) {
            std::vector<NodeId>& ids = disc_ids_[key];
            bind_stack(d, discs_[key], ids);
            for (NodeId id : ids) theta_d_.push_back(id);
        }
    }

    Tape& tape() const { return *tape_; }
    const AmtnnParams& params() const { return *params_; }

    /// Shared feature extractor; an empty extractor returns x unchanged.
    NodeId extract_features(NodeId x) const {
        check_width(x, params_->arch.input_dim, "extract_features");
        return forward_stack(params_->extractor, extractor_, x, false);
    }

    /// Class probabilities of task t's head; rows lie on the simplex.
    NodeId predict_task(std::size_t t, NodeId features) const {
        check_width(features, params_->feature_dim(), "predict_task");
        return forward_stack(params_->heads[t], heads_.at(t), features, false);
    }

    /// Head output before the final softmax; the cross-entropy path works in
    /// logit space.
    NodeId predict_logits(std::size_t t, NodeId features) const {
        check_width(features, params_->feature_dim(), "predict_logits");
        return forward_stack(params_->heads[t], heads_.at(t), features, true);
    }

    /// Discriminator output before its final activation (the logits under
    /// hdiv, the raw potential under w1).
    NodeId discriminate_pre(PairKey pair, NodeId features) const {
        check_width(features, params_->feature_dim(), "discriminate");
        return forward_stack(params_->discriminators.at(pair), discs_.at(pair), features, true);
    }

    /// Discriminator score with the configured final activation applied:
    /// values in (0,1) under hdiv, unconstrained reals under a linear w1
    /// critic.
    NodeId discriminate(PairKey pair, NodeId features) const {
        NodeId pre = discriminate_pre(pair, features);
        const std::vector<LayerSpec>& spec = params_->discriminators.at(pair).spec;
        return spec.empty() ? pre : apply_activation(spec.back().act, pre);
    }

    Activation disc_output_activation(PairKey pair) const {
        const std::vector<LayerSpec>& spec = params_->discriminators.at(pair).spec;
        return spec.empty() ? Activation::none : spec.back().act;
    }

    const std::vector<NodeId>& theta_f() const { return theta_f_; }
    const std::vector<NodeId>& theta_h() const { return theta_h_; }
    const std::vector<NodeId>& theta_d() const { return theta_d_; }
    const std::vector<NodeId>& theta_d_pair(PairKey pair) const { return disc_ids_.at(pair); }

    /// All parameter node ids in the canonical collect_parameters() order.
    std::vector<NodeId> all_params() const {
        std::vector<NodeId> out = theta_f_;
        out.insert(out.end(), theta_h_.begin(), theta_h_.end());
        out.insert(out.end(), theta_d_.begin(), theta_d_.end());
        return out;
    }

    NodeId apply_activation(Activation act, NodeId x) const {
        switch (act) {
            case Activation::none: return x;
            case Activation::relu: return tape_->relu(x);
            case Activation::elu: return tape_->elu(x);
            case Activation::sigmoid: return tape_->sigmoid(x);
            case Activation::softmax: return tape_->softmax(x);
        }
        return x;
    }

private:
    using StackIds = std::vector<std::pair<NodeId, NodeId>>;

    Tape* tape_;
    const AmtnnParams* params_;
    StackIds extractor_;
    std::vector<StackIds> heads_;
    std::map<PairKey, StackIds> discs_;
    std::map<PairKey, std::vector<NodeId>> disc_ids_;
    std::vector<NodeId> theta_f_, theta_h_, theta_d_;

    void bind_stack(const Stack& s, StackIds& ids, std::vector<NodeId>& group) {
        for (const DenseLayer& l : s.layers) {
            NodeId w = tape_->leaf(l.weight);
            NodeId b = tape_->leaf(l.bias);
            ids.emplace_back(w, b);
            group.push_back(w);
            group.push_back(b);
        }
    }

    NodeId forward_stack(const Stack& s, const StackIds& ids, NodeId x, bool skip_final_act) const {
        NodeId h = x;
        for (std::size_t k = 0; k < s.layers.size(); ++k) {
            h = tape_->affine(h, ids[k].first, ids[k].second);
            if (!(skip_final_act && k + 1 == s.layers.size()))
                h = apply_activation(s.spec[k].act, h);
        }
        return h;
    }

    void check_width(NodeId x, std::size_t expect, const char* what) const {
        const Tensor& v = tape_->value(x);
        if (v.rank() != 2 || v.cols() != expect)
            throw ShapeError(std::string(what) + ": input of shape " + shape_str(v.shape()) +
                             ", expected batch of width " + std::to_string(expect));
    }
};

}  // namespace amtnn

#endif  // AMTNN_MODEL_HPP
