#include "pf/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "pf/errors.hpp"

namespace pf {

namespace {
thread_local bool g_grad_enabled = true;

std::size_t shape_product(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (auto s : shape) n *= s;
    return n;
}
}  // namespace

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

bool grad_recording_enabled() { return g_grad_enabled; }

Tensor Tensor::zeros(std::vector<std::size_t> shape) {
    return full(std::move(shape), 0.0);
}

Tensor Tensor::full(std::vector<std::size_t> shape, double value) {
    Tensor t;
    t.impl_ = std::make_shared<TensorImpl>();
    t.impl_->shape = std::move(shape);
    t.impl_->data.assign(shape_product(t.impl_->shape), value);
    return t;
}

Tensor Tensor::from_data(std::vector<std::size_t> shape, std::vector<double> data) {
    if (shape_product(shape) != data.size())
        throw DimensionError("from_data: shape " + shape_str(shape) + " does not match " +
                             std::to_string(data.size()) + " values");
    Tensor t;
    t.impl_ = std::make_shared<TensorImpl>();
    t.impl_->shape = std::move(shape);
    t.impl_->data = std::move(data);
    return t;
}

Tensor Tensor::scalar(double value) { return from_data({1}, {value}); }

Tensor Tensor::randn(std::vector<std::size_t> shape, Rng& rng, double sd) {
    Tensor t = zeros(std::move(shape));
    for (auto& x : t.impl_->data) x = sd * rng.normal();
    return t;
}

double Tensor::item() const {
    if (size() != 1) throw DimensionError("item() on non-scalar tensor " + shape_str(shape()));
    return impl_->data[0];
}

bool Tensor::all_finite() const {
    for (double v : impl_->data)
        if (!std::isfinite(v)) return false;
    return true;
}

Tensor Tensor::detach() const {
    return from_data(impl_->shape, impl_->data);
}

Tensor Tensor::make(std::vector<std::size_t> shape, std::vector<double> data,
                    std::vector<Tensor> parents,
                    std::function<void(TensorImpl&)> backward_fn) {
    Tensor t = from_data(std::move(shape), std::move(data));
    bool needs = false;
    if (g_grad_enabled) {
        for (const auto& p : parents)
            if (p.requires_grad()) needs = true;
    }
    if (needs) {
        t.impl_->requires_grad = true;
        t.impl_->parents.reserve(parents.size());
        for (auto& p : parents) t.impl_->parents.push_back(p.impl());
        t.impl_->backward_fn = std::move(backward_fn);
    }
    return t;
}

void Tensor::backward() {
    if (size() != 1) throw PreconditionError("backward() requires a scalar tensor");
    if (!impl_->requires_grad) return;

    // Iterative post-order DFS for the topological order.
    std::vector<TensorImpl*> order;
    std::unordered_set<TensorImpl*> seen;
    std::vector<std::pair<TensorImpl*, std::size_t>> stack;
    stack.emplace_back(impl_.get(), 0);
    seen.insert(impl_.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            TensorImpl* p = node->parents[next++].get();
            if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    impl_->ensure_grad();
    impl_->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TensorImpl* node = *it;
        if (node->backward_fn && !node->grad.empty()) node->backward_fn(*node);
    }
}

std::string shape_str(const std::vector<std::size_t>& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << "x";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

}  // namespace pf
