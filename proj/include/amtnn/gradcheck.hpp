#ifndef AMTNN_GRADCHECK_HPP
#define AMTNN_GRADCHECK_HPP

#include <cmath>
#include <functional>
#include <vector>

#include "amtnn/errors.hpp"
#include "amtnn/tensor.hpp"

namespace amtnn {

/// Scalar objective over a list of parameter tensors. Must be deterministic
/// for fixed parameters (seed any internal randomness).
using Objective = std::function<real(const std::vector<Tensor>&)>;

/// Central-difference gradient estimate, (f(p+h) - f(p-h)) / 2h per
/// coordinate. Independent of the reverse-mode path: only forward
/// evaluations of the objective are used.
inline std::vector<Tensor> finite_difference_gradient(const Objective& f,
                                                      std::vector<Tensor> params,
                                                      real h) {
    if (!(h > real(0))) throw NumericError("finite_difference_gradient: h must be positive");
    std::vector<Tensor> grads;
    grads.reserve(params.size());
    for (std::size_t p = 0; p < params.size(); ++p) {
        Tensor g(params[p].shape());
        for (std::size_t i = 0; i < params[p].size(); ++i) {
            real saved = params[p][i];
            params[p][i] = saved + h;
            real fp = f(params);
            params[p][i] = saved - h;
            real fm = f(params);
            params[p][i] = saved;
            if (!std::isfinite(fp) || !std::isfinite(fm))
                throw NumericError("finite_difference_gradient: non-finite objective");
            g[i] = (fp - fm) / (real(2) * h);
        }
        grads.push_back(std::move(g));
    }
    return grads;
}

/// Componentwise relative error with the denominator clamped from below.
inline real rel_error(real a, real b, real clamp = real(1e-8)) {
    real denom = std::max({std::abs(a), std::abs(b), clamp});
    return std::abs(a - b) / denom;
}

inline real max_rel_error(const std::vector<Tensor>& a, const std::vector<Tensor>& b,
                          real clamp = real(1e-8)) {
    real worst = 0;
    for (std::size_t p = 0; p < a.size(); ++p)
        for (std::size_t i = 0; i < a[p].size(); ++i)
            worst = std::max(worst, rel_error(a[p][i], b[p][i], clamp));
    return worst;
}

}  // namespace amtnn

#endif  // AMTNN_GRADCHECK_HPP
