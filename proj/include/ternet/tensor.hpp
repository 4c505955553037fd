#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace ternet {

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Row-major dense tensor: a shape plus flat storage, with Eigen maps for the
// actual math. Batch dimension, when present, is axis 0 by convention.
template <typename Scalar>
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> shape)
        : shape_(std::move(shape)), data_(count(shape_), Scalar{0}) {}

    Tensor(std::initializer_list<std::size_t> shape)
        : Tensor(std::vector<std::size_t>(shape)) {}

    static Tensor from_values(std::vector<std::size_t> shape, std::vector<Scalar> values) {
        if (count(shape) != values.size()) {
            throw std::invalid_argument("Tensor: value count does not match shape");
        }
        Tensor t;
        t.shape_ = std::move(shape);
        t.data_ = std::move(values);
        return t;
    }

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    Scalar* data() { return data_.data(); }
    const Scalar* data() const { return data_.data(); }

    Scalar& operator[](std::size_t i) { return data_[i]; }
    Scalar operator[](std::size_t i) const { return data_[i]; }

    auto vec() {
        return Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>(data_.data(), size());
    }
    auto vec() const {
        return Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>(data_.data(), size());
    }
    auto array() { return vec().array(); }
    auto array() const { return vec().array(); }

    // 2-D view; the product of rows*cols must equal size()
    auto matrix(Eigen::Index rows, Eigen::Index cols) {
        check_view(rows, cols);
        return Eigen::Map<RowMatrix<Scalar>>(data_.data(), rows, cols);
    }
    auto matrix(Eigen::Index rows, Eigen::Index cols) const {
        check_view(rows, cols);
        return Eigen::Map<const RowMatrix<Scalar>>(data_.data(), rows, cols);
    }

    Tensor reshaped(std::vector<std::size_t> shape) const {
        if (count(shape) != size()) {
            throw std::invalid_argument("Tensor::reshaped: element count mismatch");
        }
        Tensor t = *this;
        t.shape_ = std::move(shape);
        return t;
    }

    void set_zero() { std::fill(data_.begin(), data_.end(), Scalar{0}); }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    static std::size_t count(const std::vector<std::size_t>& shape) {
        return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                               std::multiplies<std::size_t>());
    }

private:
    void check_view(Eigen::Index rows, Eigen::Index cols) const {
        if (static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols) != size()) {
            throw std::invalid_argument("Tensor::matrix: view does not cover storage");
        }
    }

    std::vector<std::size_t> shape_;
    std::vector<Scalar> data_;
};

using Tensord = Tensor<double>;
using Tensorf = Tensor<float>;

}  // namespace ternet
