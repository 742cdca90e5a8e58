// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "core/error.hpp"

namespace relgen::core {

// Dense row-major double tensor. Rank is arbitrary but almost everything in
// this codebase is 1-D or 2-D; matmul and the row-wise ops require rank 2.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> shape);
    Tensor(std::vector<std::size_t> shape, std::vector<double> data);

    static Tensor zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape)); }
    static Tensor full(std::vector<std::size_t> shape, double v);
    static Tensor scalar(double v) { return Tensor({1}, {v}); }
    static Tensor identity(std::size_t n);

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    std::size_t rows() const { return shape_.empty() ? 0 : shape_[0]; }
    std::size_t cols() const { return shape_.size() < 2 ? 1 : shape_[1]; }
    bool empty() const { return data_.empty(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& vec() { return data_; }
    const std::vector<double>& vec() const { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }
    double& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
    double at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
    double& at(std::size_t i, std::size_t j, std::size_t k) {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }
    double at(std::size_t i, std::size_t j, std::size_t k) const {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
    bool all_finite() const;
    double max_abs() const;
    double max_abs_diff(const Tensor& o) const;

    Tensor reshaped(std::vector<std::size_t> shape) const;

private:
    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

// ---------------------------------------------------------------------------
// Reverse-mode autodiff. A Var is a shared node in a dynamically built graph;
// backward() runs the tape in reverse topological order. Leaves created with
// requires_grad accumulate gradients; everything else is treated as constant
// and receives exactly zero gradient by construction.
// ---------------------------------------------------------------------------

namespace ad {

struct Node {
    Tensor value;
    Tensor grad;  // lazily sized to value
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;  // pulls node.grad into parents

    Tensor& ensure_grad();
};

using Var = std::shared_ptr<Node>;

Var constant(Tensor v);
Var leaf(Tensor v, bool requires_grad);

const Tensor& val(const Var& v);

// elementwise, same shape
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var square(const Var& a);
Var sqrt_v(const Var& a);
Var tanh_v(const Var& a);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);

// y = a + rowvec broadcast over rows of 2-D a (bias add)
Var add_rowvec(const Var& a, const Var& v);
// y = s * a where s is a 1-element Var (learnable scalar gate)
Var mul_scalar_var(const Var& a, const Var& s);

// 2-D linear algebra
Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);

// row-wise ops over 2-D tensors
Var softmax_rows(const Var& a);
Var layer_norm_rows(const Var& a, const Var& gain, const Var& bias, double eps = 1e-5);
Var sum_cols(const Var& a);  // [m,n] -> [m]

// structural
Var concat_rows(const std::vector<Var>& parts);
Var slice_rows(const Var& a, std::size_t from, std::size_t to);
Var concat_cols(const std::vector<Var>& parts);
Var slice_cols(const Var& a, std::size_t from, std::size_t to);
Var gather_rows(const Var& a, std::vector<std::size_t> indices);
Var reshape(const Var& a, std::vector<std::size_t> shape);

// reductions to a scalar (shape {1})
Var sum_all(const Var& a);
Var mean_all(const Var& a);

void backward(const Var& loss);

}  // namespace ad

}  // namespace relgen::core
