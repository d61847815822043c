#ifndef AMTNN_TYPES_HPP
#define AMTNN_TYPES_HPP

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "amtnn/errors.hpp"
#include "amtnn/tensor.hpp"

namespace amtnn {

/// Distribution-similarity metric driving the adversarial loss.
enum class Metric { none, hdiv, w1 };

/// How the relation coefficients evolve during training.
enum class AlphaMode { uniform_fixed, identity_fixed, solved };

inline std::string to_string(Metric m) {
    switch (m) {
        case Metric::none: return "none";
        case Metric::hdiv: return "hdiv";
        case Metric::w1: return "w1";
    }
    return "?";
}

inline std::string to_string(AlphaMode m) {
    switch (m) {
        case AlphaMode::uniform_fixed: return "uniform-fixed";
        case AlphaMode::identity_fixed: return "identity-fixed";
        case AlphaMode::solved: return "solved";
    }
    return "?";
}

/// Unordered task pair; normalized so that first < second. One discriminator
/// serves both (t,i) and (i,t).
struct PairKey {
    std::size_t first, second;

    PairKey(std::size_t a, std::size_t b) : first(a < b ? a : b), second(a < b ? b : a) {
        if (a == b) throw Error("PairKey: pair of a task with itself");
    }

    bool operator<(const PairKey& o) const {
        return first != o.first ? first < o.first : second < o.second;
    }
    bool operator==(const PairKey& o) const { return first == o.first && second == o.second; }
};

/// A batch of samples: feature rows plus integer class labels.
struct LabeledBatch {
    Tensor x;
    std::vector<int> y;

    std::size_t size() const { return y.size(); }
};

class SquareMatrix {
public:
    SquareMatrix() = default;
    explicit SquareMatrix(std::size_t t, real fill = 0) : t_(t), v_(t * t, fill) {}

    std::size_t dim() const { return t_; }
    real& at(std::size_t r, std::size_t c) { return v_[r * t_ + c]; }
    real at(std::size_t r, std::size_t c) const { return v_[r * t_ + c]; }
    std::vector<real>& data() { return v_; }
    const std::vector<real>& data() const { return v_; }

    bool all_finite() const {
        for (real x : v_)
            if (!std::isfinite(x)) return false;
        return true;
    }

private:
    std::size_t t_ = 0;
    std::vector<real> v_;
};

/// T x T row-stochastic task relation coefficients; row t is the simplex
/// weight vector alpha_t.
class RelationMatrix : public SquareMatrix {
public:
    RelationMatrix() = default;
    explicit RelationMatrix(std::size_t t) : SquareMatrix(t) {}

    static RelationMatrix uniform(std::size_t t) {
        RelationMatrix a(t);
        for (real& x : a.data()) x = real(1) / real(t);
        return a;
    }

    static RelationMatrix identity(std::size_t t) {
        RelationMatrix a(t);
        for (std::size_t i = 0; i < t; ++i) a.at(i, i) = 1;
        return a;
    }

    bool rows_feasible(real tol = real(1e-9)) const {
        for (std::size_t r = 0; r < dim(); ++r) {
            real s = 0;
            for (std::size_t c = 0; c < dim(); ++c) {
                if (at(r, c) < 0) return false;
                s += at(r, c);
            }
            if (std::abs(s - real(1)) > tol) return false;
        }
        return true;
    }

    void require_feasible(const char* where) const {
        if (!rows_feasible())
            throw NumericError(std::string(where) + ": relation matrix rows are not on the simplex");
    }
};

}  // namespace amtnn

#endif  // AMTNN_TYPES_HPP
