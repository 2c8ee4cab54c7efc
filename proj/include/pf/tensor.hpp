#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "pf/rng.hpp"

namespace pf {

// Dense row-major float64 tensor with reverse-mode autodiff. Operations
// record a computation graph (parents + backward closure) on their results;
// Tensor::backward() on a scalar walks it in reverse topological order.
// Data is immutable once an op produced it; only leaf parameters are mutated
// (by the optimizer, between graph lifetimes).

struct TensorImpl {
    std::vector<std::size_t> shape;
    std::vector<double> data;
    bool requires_grad = false;
    std::vector<double> grad;  // sized lazily; same length as data when present

    std::vector<std::shared_ptr<TensorImpl>> parents;
    std::function<void(TensorImpl&)> backward_fn;  // reads this->grad, accumulates into parents

    std::size_t size() const { return data.size(); }
    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
    }
};

// Scoped switch that disables graph recording (sampling / finite differences).
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

bool grad_recording_enabled();

class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(std::vector<std::size_t> shape);
    static Tensor full(std::vector<std::size_t> shape, double value);
    static Tensor from_data(std::vector<std::size_t> shape, std::vector<double> data);
    static Tensor scalar(double value);
    static Tensor randn(std::vector<std::size_t> shape, Rng& rng, double sd = 1.0);

    bool defined() const { return impl_ != nullptr; }
    const std::vector<std::size_t>& shape() const { return impl_->shape; }
    std::size_t size() const { return impl_->data.size(); }
    std::size_t ndim() const { return impl_->shape.size(); }
    std::size_t rows() const { return impl_->shape.at(0); }
    std::size_t cols() const { return impl_->shape.at(1); }

    std::span<double> data() { return impl_->data; }
    std::span<const double> data() const { return impl_->data; }
    double item() const;
    double at(std::size_t i) const { return impl_->data.at(i); }
    double at(std::size_t r, std::size_t c) const { return impl_->data.at(r * cols() + c); }

    bool requires_grad() const { return impl_->requires_grad; }
    Tensor& set_requires_grad(bool v) {
        impl_->requires_grad = v;
        return *this;
    }
    std::span<double> grad() {
        impl_->ensure_grad();
        return impl_->grad;
    }
    std::span<const double> grad() const { return impl_->grad; }
    bool has_grad() const { return impl_->grad.size() == impl_->data.size(); }
    void zero_grad() {
        if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
    }

    bool all_finite() const;

    // Reverse-mode pass from a scalar result. Seeds d(self)/d(self) = 1.
    void backward();

    // Value copy without graph history.
    Tensor detach() const;

    std::shared_ptr<TensorImpl> impl() const { return impl_; }

    // Used by op implementations.
    static Tensor make(std::vector<std::size_t> shape, std::vector<double> data,
                       std::vector<Tensor> parents,
                       std::function<void(TensorImpl&)> backward_fn);

private:
    std::shared_ptr<TensorImpl> impl_;
};

std::string shape_str(const std::vector<std::size_t>& shape);

}  // namespace pf
