#ifndef AMTNN_ALPHA_HPP
#define AMTNN_ALPHA_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

#include "amtnn/errors.hpp"
#include "amtnn/losses.hpp"
#include "amtnn/types.hpp"

namespace amtnn {

/// One relation-coefficient solve: per-task losses, pairwise distances and
/// the two regularization weights.
struct AlphaProblem {
    LossMatrix r_hat;
    DistanceMatrix d_hat;
    real kappa1 = 1;
    real kappa2 = 0;

    std::size_t dim() const { return r_hat.dim(); }

    void validate() const {
        if (r_hat.dim() == 0 || r_hat.dim() != d_hat.dim())
            throw ConfigError("AlphaProblem: matrix dimensions disagree");
        if (!(kappa1 >= 0) || !(kappa2 >= 0))
            throw ConfigError("AlphaProblem: kappa1 and kappa2 must be >= 0");
        r_hat.require_valid("AlphaProblem");
        d_hat.require_valid("AlphaProblem");
    }
};

/// Euclidean projection onto the probability simplex by sort-and-threshold:
/// with u the coordinates in nonincreasing order, the largest k with
/// u_k > (sum_{j<=k} u_j - 1)/k fixes the shift, and coordinates clamp at 0.
inline std::vector<real> project_simplex(std::vector<real> v) {
    if (v.empty()) throw ShapeError("project_simplex: empty input");
    for (real x : v)
        if (!std::isfinite(x)) throw NumericError("project_simplex: non-finite input");

    std::vector<real> u = v;
    std::sort(u.begin(), u.end(), std::greater<real>());
    real css = 0;
    real theta = 0;
    for (std::size_t k = 0; k < u.size(); ++k) {
        css += u[k];
        real cand = (css - real(1)) / real(k + 1);
        if (u[k] - cand > 0) theta = cand;
    }
    for (real& x : v) x = std::max(x - theta, real(0));
    return v;
}

namespace detail {

inline std::vector<real> row_costs(const AlphaProblem& p, std::size_t t) {
    std::vector<real> c(p.dim());
    for (std::size_t i = 0; i < p.dim(); ++i) c[i] = p.r_hat.at(t, i) + p.kappa2 * p.d_hat.at(t, i);
    return c;
}

inline real row_objective(const std::vector<real>& a, const std::vector<real>& c, real kappa1) {
    real lin = 0, sq = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        lin += a[i] * c[i];
        sq += a[i] * a[i];
    }
    return lin + kappa1 * std::sqrt(sq);
}

}  // namespace detail

/// Exact objective value of a feasible relation matrix; separable over rows.
inline real alpha_objective(const RelationMatrix& alpha, const AlphaProblem& p) {
    p.validate();
    if (alpha.dim() != p.dim()) throw ShapeError("alpha_objective: dimension mismatch");
    alpha.require_feasible("alpha_objective");
    real total = 0;
    for (std::size_t t = 0; t < p.dim(); ++t) {
        std::vector<real> row(p.dim());
        for (std::size_t i = 0; i < p.dim(); ++i) row[i] = alpha.at(t, i);
        total += detail::row_objective(row, detail::row_costs(p, t), p.kappa1);
    }
    return total;
}

struct AlphaSolution {
    RelationMatrix alpha;
    real objective = 0;
    bool converged = true;
    std::size_t iterations = 0;  // worst row
};

/// Solves the relation-coefficient problem row by row (the objective is
/// separable in t).
///
/// kappa1 == 0 reduces each row to a linear program over the simplex whose
/// optimum is the vertex with the smallest cost; ties break to the smallest
/// task index. Otherwise projected gradient descent runs from the uniform
/// point. The norm term is smooth on the simplex (||a|| >= 1/sqrt(T)), and
/// the trial step 1/(max|c| + kappa1) is halved whenever it fails to
/// decrease the objective, so descent is monotone.
inline AlphaSolution solve_alpha(const AlphaProblem& p, real tol = real(1e-10),
                                 std::size_t max_iter = 10000) {
    p.validate();
    if (!(tol > 0)) throw ConfigError("solve_alpha: tol must be positive");
    const std::size_t tasks = p.dim();

    AlphaSolution sol;
    sol.alpha = RelationMatrix(tasks);

    for (std::size_t t = 0; t < tasks; ++t) {
        std::vector<real> c = detail::row_costs(p, t);
        std::vector<real> a(tasks, real(1) / real(tasks));

        if (p.kappa1 == real(0)) {
            std::size_t best = 0;
            for (std::size_t i = 1; i < tasks; ++i)
                if (c[i] < c[best]) best = i;
            std::fill(a.begin(), a.end(), real(0));
            a[best] = 1;
        } else {
            real f = detail::row_objective(a, c, p.kappa1);
            real cmax = 0;
            for (real x : c) cmax = std::max(cmax, std::abs(x));
            const real trial_step = real(1) / (cmax + p.kappa1);

            std::size_t iter = 0;
            for (; iter < max_iter; ++iter) {
                real norm = 0;
                for (real x : a) norm += x * x;
                norm = std::sqrt(norm);
                std::vector<real> g(tasks);
                for (std::size_t i = 0; i < tasks; ++i) g[i] = c[i] + p.kappa1 * a[i] / norm;

                real step = trial_step;
                std::vector<real> cand;
                real fc = f;
                bool moved = false;
                while (step > trial_step * real(1e-16)) {
                    cand = a;
                    for (std::size_t i = 0; i < tasks; ++i) cand[i] -= step * g[i];
                    cand = project_simplex(std::move(cand));
                    fc = detail::row_objective(cand, c, p.kappa1);
                    if (fc <= f) {
                        moved = true;
                        break;
                    }
                    step /= 2;
                }
                if (!moved) break;  // no feasible descent direction left
                real decrease = f - fc;
                a = std::move(cand);
                f = fc;
                if (decrease < tol) break;
            }
            sol.iterations = std::max(sol.iterations, iter);
            if (iter == max_iter) sol.converged = false;  // best iterate returned
        }
        for (std::size_t i = 0; i < tasks; ++i) sol.alpha.at(t, i) = a[i];
    }

    sol.alpha.require_feasible("solve_alpha");
    sol.objective = alpha_objective(sol.alpha, p);
    return sol;
}

namespace detail {

/// Enumerates k_0 + ... + k_{T-1} = n compositions and reports each grid
/// point k/n to the visitor.
inline void for_each_grid_point(std::size_t dims, std::size_t n,
                                const std::function<void(const std::vector<std::size_t>&)>& visit) {
    std::vector<std::size_t> k(dims, 0);
    std::function<void(std::size_t, std::size_t)> rec = [&](std::size_t pos, std::size_t left) {
        if (pos + 1 == dims) {
            k[pos] = left;
            visit(k);
            return;
        }
        for (std::size_t v = 0; v <= left; ++v) {
            k[pos] = v;
            rec(pos + 1, left - v);
        }
    };
    rec(0, n);
}

}  // namespace detail

/// Exhaustive search over the discretized simplex, row by row. The testing
/// oracle for solve_alpha; limited to small task counts.
inline RelationMatrix brute_force_alpha(const AlphaProblem& p, real grid_step) {
    p.validate();
    if (p.dim() > 4) throw ConfigError("brute_force_alpha: task count too large for grid search");
    if (!(grid_step >= real(1e-3))) throw ConfigError("brute_force_alpha: grid_step must be >= 1e-3");
    const std::size_t n = static_cast<std::size_t>(std::llround(real(1) / grid_step));

    RelationMatrix alpha(p.dim());
    for (std::size_t t = 0; t < p.dim(); ++t) {
        std::vector<real> c = detail::row_costs(p, t);
        std::vector<real> best;
        real best_f = 0;
        std::vector<real> a(p.dim());
        detail::for_each_grid_point(p.dim(), n, [&](const std::vector<std::size_t>& k) {
            for (std::size_t i = 0; i < p.dim(); ++i) a[i] = real(k[i]) / real(n);
            real f = detail::row_objective(a, c, p.kappa1);
            if (best.empty() || f < best_f) {
                best = a;
                best_f = f;
            }
        });
        for (std::size_t i = 0; i < p.dim(); ++i) alpha.at(t, i) = best[i];
    }
    return alpha;
}

/// Grid minimizer of ||x - v||^2 over the simplex; the oracle for
/// project_simplex.
inline std::vector<real> brute_force_projection(const std::vector<real>& v, real grid_step) {
    if (v.size() > 4) throw ConfigError("brute_force_projection: dimension too large");
    const std::size_t n = static_cast<std::size_t>(std::llround(real(1) / grid_step));
    std::vector<real> best;
    real best_d = 0;
    std::vector<real> a(v.size());
    detail::for_each_grid_point(v.size(), n, [&](const std::vector<std::size_t>& k) {
        real d = 0;
        for (std::size_t i = 0; i < v.size(); ++i) {
            a[i] = real(k[i]) / real(n);
            d += (a[i] - v[i]) * (a[i] - v[i]);
        }
        if (best.empty() || d < best_d) {
            best = a;
            best_d = d;
        }
    });
    return best;
}

}  // namespace amtnn

#endif  // AMTNN_ALPHA_HPP
