#ifndef AMTNN_BOUNDS_HPP
#define AMTNN_BOUNDS_HPP

#include <cmath>
#include <cstddef>
#include <vector>

#include "amtnn/errors.hpp"
#include "amtnn/losses.hpp"
#include "amtnn/types.hpp"

namespace amtnn {

/// Everything needed to evaluate the computable terms of the generalization
/// bounds for a finished run. The capacity measure d and (for w1) the
/// Lipschitz constant K are user supplied; they are unknown for neural nets
/// and the report is parametric in them.
struct BoundInputs {
    RelationMatrix alpha;
    LossMatrix r_hat;
    DistanceMatrix d_hat;
    std::vector<std::size_t> m;  // per-task sample counts
    real vc_dim = 1;
    real delta = 0.05;
    real lipschitz_k = 1;  // used by the w1 distance term only
    Metric metric = Metric::hdiv;

    std::size_t tasks() const { return alpha.dim(); }

    std::size_t m_total() const {
        std::size_t s = 0;
        for (std::size_t v : m) s += v;
        return s;
    }

    void validate() const {
        if (alpha.dim() == 0 || alpha.dim() != r_hat.dim() || alpha.dim() != d_hat.dim() ||
            m.size() != alpha.dim())
            throw ConfigError("BoundInputs: dimensions disagree");
        alpha.require_feasible("BoundInputs");
        r_hat.require_valid("BoundInputs");
        d_hat.require_valid("BoundInputs");
        for (std::size_t v : m)
            if (v < 1) throw ConfigError("BoundInputs: every m_t must be >= 1");
        if (!(delta > 0) || !(delta < 1)) throw ConfigError("BoundInputs: delta must lie in (0,1)");
        if (!(vc_dim >= 1)) throw ConfigError("BoundInputs: vc_dim must be >= 1");
        if (metric == Metric::w1 && !(lipschitz_k > 0))
            throw ConfigError("BoundInputs: lipschitz_k must be > 0");
        if (!(real(m_total()) > vc_dim)) throw ConfigError("BoundInputs: total samples must exceed vc_dim");
    }
};

inline std::vector<real> beta_weights(const std::vector<std::size_t>& m) {
    std::size_t total = 0;
    for (std::size_t v : m) total += v;
    if (total == 0) throw ConfigError("beta_weights: empty sample counts");
    std::vector<real> beta;
    beta.reserve(m.size());
    for (std::size_t v : m) beta.push_back(real(v) / real(total));
    return beta;
}

/// sum_t sqrt(sum_i alpha[t][i]^2 / beta_i): the coefficient concentration
/// penalty. Invariant to rescaling all sample counts together.
inline real coefficient_regularizer(const RelationMatrix& alpha, const std::vector<real>& beta) {
    if (beta.size() != alpha.dim()) throw ConfigError("coefficient_regularizer: beta size mismatch");
    for (real b : beta)
        if (!(b > 0)) throw ConfigError("coefficient_regularizer: zero beta entry");
    real total = 0;
    for (std::size_t t = 0; t < alpha.dim(); ++t) {
        real s = 0;
        for (std::size_t i = 0; i < alpha.dim(); ++i) s += alpha.at(t, i) * alpha.at(t, i) / beta[i];
        total += std::sqrt(s);
    }
    return total;
}

/// 2 sqrt(2 (d log(2em/d) + log(16T/delta)) / m).
inline real c1_constant(real d, real m, std::size_t tasks, real delta) {
    if (!(d >= 1)) throw ConfigError("c1_constant: d must be >= 1");
    if (!(m > d)) throw ConfigError("c1_constant: m must exceed d");
    if (!(delta > 0) || !(delta < 1)) throw ConfigError("c1_constant: delta must lie in (0,1)");
    if (tasks < 1) throw ConfigError("c1_constant: tasks must be >= 1");
    const real e = real(2.718281828459045235360287471352662498L);
    return 2 * std::sqrt(2 * (d * std::log(2 * e * m / d) + std::log(16 * real(tasks) / delta)) / m);
}

/// 2 min over task pairs of sqrt((2 d log(2 m_ij) + log(32T/delta)) / m_ij)
/// with m_ij the smaller count of the pair. A single task falls back to its
/// own count.
inline real c2_constant_thm1(const std::vector<std::size_t>& m, real d, std::size_t tasks,
                             real delta) {
    if (m.size() != tasks || tasks < 1) throw ConfigError("c2_constant_thm1: bad task count");
    if (!(d >= 1)) throw ConfigError("c2_constant_thm1: d must be >= 1");
    if (!(delta > 0) || !(delta < 1)) throw ConfigError("c2_constant_thm1: delta must lie in (0,1)");
    for (std::size_t v : m)
        if (v < 1) throw ConfigError("c2_constant_thm1: every m_t must be >= 1");

    auto expr = [&](std::size_t mij) {
        return std::sqrt((2 * d * std::log(2 * real(mij)) + std::log(32 * real(tasks) / delta)) /
                         real(mij));
    };
    real best = 0;
    bool first = true;
    if (tasks == 1) {
        best = expr(m[0]);
        first = false;
    } else {
        for (std::size_t i = 0; i < tasks; ++i)
            for (std::size_t j = i + 1; j < tasks; ++j) {
                real v = expr(std::min(m[i], m[j]));
                if (first || v < best) {
                    best = v;
                    first = false;
                }
            }
    }
    return 2 * best;
}

/// The computable bound terms. coefficient_regularization already carries
/// its C1 factor and empirical_distance_term carries 1/T (and 2K under w1);
/// total_computable is their sum plus C2 where available. The joint optimal
/// errors (the lambda terms) and, under w1, the concentration constant C2
/// are not computable and are excluded.
struct BoundReport {
    real weighted_empirical_loss = 0;
    real coefficient_regularization = 0;
    real empirical_distance_term = 0;
    real c1 = 0;
    real c2 = 0;
    bool c2_available = false;
    real total_computable = 0;
    Metric metric = Metric::hdiv;
};

inline BoundReport bound_decomposition(const BoundInputs& in) {
    in.validate();
    const std::size_t tasks = in.tasks();
    BoundReport out;
    out.metric = in.metric;

    WeightedTaskLoss wl = weighted_task_loss(in.r_hat, in.alpha);
    out.weighted_empirical_loss = wl.total / real(tasks);

    out.c1 = c1_constant(in.vc_dim, real(in.m_total()), tasks, in.delta);
    out.coefficient_regularization = out.c1 * coefficient_regularizer(in.alpha, beta_weights(in.m));

    real dist = 0;
    for (std::size_t t = 0; t < tasks; ++t)
        for (std::size_t i = 0; i < tasks; ++i) dist += in.alpha.at(t, i) * in.d_hat.at(t, i);
    dist /= real(tasks);
    if (in.metric == Metric::w1) dist *= 2 * in.lipschitz_k;
    out.empirical_distance_term = dist;

    if (in.metric == Metric::hdiv) {
        out.c2 = c2_constant_thm1(in.m, in.vc_dim, tasks, in.delta);
        out.c2_available = true;
    }

    out.total_computable = out.weighted_empirical_loss + out.coefficient_regularization +
                           out.empirical_distance_term + (out.c2_available ? out.c2 : real(0));
    return out;
}

}  // namespace amtnn

#endif  // AMTNN_BOUNDS_HPP
