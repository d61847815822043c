#ifndef AMTNN_TENSOR_HPP
#define AMTNN_TENSOR_HPP

#include <cmath>
#include <cstddef>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "amtnn/errors.hpp"

namespace amtnn {

// Element type of every tensor. Training and all stated test tolerances
// assume the 64-bit build; -DAMTNN_FLOAT32 switches to a 32-bit build in
// which the gradient-check suites are disabled.
#ifdef AMTNN_FLOAT32
using real = float;
#else
using real = double;
#endif

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t e : s) n *= e;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ")";
    return os.str();
}

/// Dense row-major n-dimensional array. Rank 0 is a scalar, rank 1 a
/// vector, rank 2 a matrix; higher ranks are not used by this library.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(Shape shape)
        : shape_(std::move(shape)), data_(shape_size(shape_), real(0)) {}

    Tensor(Shape shape, std::vector<real> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (data_.size() != shape_size(shape_))
            throw ShapeError("Tensor: data length " + std::to_string(data_.size()) +
                             " does not match shape " + shape_str(shape_));
    }

    static Tensor scalar(real v) { return Tensor({}, {v}); }

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

    static Tensor full(Shape shape, real v) {
        Tensor t(std::move(shape));
        for (real& x : t.data_) x = v;
        return t;
    }

    static Tensor ones(Shape shape) { return full(std::move(shape), real(1)); }

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }

    // Rank-2 accessors.
    std::size_t rows() const { return rank() == 2 ? shape_[0] : (rank() == 1 ? shape_[0] : 1); }
    std::size_t cols() const { return rank() == 2 ? shape_[1] : 1; }

    real& operator[](std::size_t i) { return data_[i]; }
    real operator[](std::size_t i) const { return data_[i]; }

    real& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
    real at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

    std::vector<real>& data() { return data_; }
    const std::vector<real>& data() const { return data_; }

    bool is_scalar() const { return data_.size() == 1 && rank() == 0; }

    real scalar_value() const {
        if (data_.size() != 1)
            throw ShapeError("scalar_value: tensor of shape " + shape_str(shape_) + " is not a scalar");
        return data_[0];
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    bool all_finite() const {
        for (real x : data_)
            if (!std::isfinite(x)) return false;
        return true;
    }

private:
    Shape shape_;
    std::vector<real> data_;
};

}  // namespace amtnn

#endif  // AMTNN_TENSOR_HPP
