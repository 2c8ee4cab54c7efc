#include "pf/optim.hpp"

#include <cmath>

#include "pf/errors.hpp"

namespace pf {

Tensor& ParameterSet::add(const std::string& name, Tensor t) {
    if (params_.count(name)) throw ConfigError("parameter '" + name + "' already registered");
    t.set_requires_grad(true);
    auto [it, ok] = params_.emplace(name, std::move(t));
    (void)ok;
    return it->second;
}

Tensor& ParameterSet::at(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw ConfigError("unknown parameter '" + name + "'");
    return it->second;
}

const Tensor& ParameterSet::at(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw ConfigError("unknown parameter '" + name + "'");
    return it->second;
}

void ParameterSet::zero_grad() {
    for (auto& [name, t] : params_) t.zero_grad();
}

std::size_t ParameterSet::total_size() const {
    std::size_t n = 0;
    for (const auto& [name, t] : params_) n += t.size();
    return n;
}

std::vector<std::string> ParameterSet::names() const {
    std::vector<std::string> out;
    out.reserve(params_.size());
    for (const auto& [name, t] : params_) out.push_back(name);
    return out;
}

void ParameterSet::adopt(const std::string& prefix, ParameterSet& other) {
    for (auto& [name, t] : other.params_) {
        const std::string full = prefix + "." + name;
        if (params_.count(full)) throw ConfigError("parameter '" + full + "' already registered");
        params_.emplace(full, t);  // shares the same TensorImpl
    }
}

void adam_step(ParameterSet& params, AdamState& state, double lr, double weight_decay) {
    for (auto& [name, p] : params) {
        if (!p.has_grad())
            throw PreconditionError("adam_step: parameter '" + name + "' has no gradient");
    }
    state.t += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
    for (auto& [name, p] : params) {
        auto& mom = state.moments[name];
        if (mom.m.size() != p.size()) {
            mom.m.assign(p.size(), 0.0);
            mom.v.assign(p.size(), 0.0);
        }
        auto data = p.data();
        auto grad = p.grad();
        for (std::size_t i = 0; i < data.size(); ++i) {
            data[i] *= 1.0 - lr * weight_decay;
            const double g = grad[i];
            mom.m[i] = state.beta1 * mom.m[i] + (1.0 - state.beta1) * g;
            mom.v[i] = state.beta2 * mom.v[i] + (1.0 - state.beta2) * g * g;
            const double mhat = mom.m[i] / bc1;
            const double vhat = mom.v[i] / bc2;
            data[i] -= lr * mhat / (std::sqrt(vhat) + state.eps);
        }
    }
}

double clip_grad_norm(ParameterSet& params, double threshold) {
    if (threshold <= 0.0)
        throw ConfigError("clip_grad_norm: threshold must be positive, got " +
                          std::to_string(threshold));
    double sq = 0.0;
    for (auto& [name, p] : params) {
        if (!p.has_grad()) continue;
        for (double g : p.grad()) sq += g * g;
    }
    const double norm = std::sqrt(sq);
    if (norm > threshold) {
        const double s = threshold / norm;
        for (auto& [name, p] : params) {
            if (!p.has_grad()) continue;
            for (auto& g : p.grad()) g *= s;
        }
    }
    return norm;
}

double grad_check(const std::function<Tensor()>& f, ParameterSet& inputs, double eps) {
    if (eps < 1e-6 || eps > 1e-2)
        throw ConfigError("grad_check: eps must lie in [1e-6, 1e-2]");
    inputs.zero_grad();
    Tensor out = f();
    if (!out.all_finite()) throw NumericalError("grad_check: function value is not finite");
    out.backward();

    double max_rel = 0.0;
    for (auto& [name, p] : inputs) {
        auto data = p.data();
        auto g_ad = p.grad();
        for (std::size_t i = 0; i < data.size(); ++i) {
            const double orig = data[i];
            double fp, fm;
            {
                NoGradGuard ng;
                data[i] = orig + eps;
                fp = f().item();
                data[i] = orig - eps;
                fm = f().item();
                data[i] = orig;
            }
            if (!std::isfinite(fp) || !std::isfinite(fm))
                throw NumericalError("grad_check: perturbed value of '" + name +
                                     "' is not finite");
            const double g_fd = (fp - fm) / (2.0 * eps);
            const double rel = std::abs(g_ad[i] - g_fd) / std::max(1.0, std::abs(g_fd));
            max_rel = std::max(max_rel, rel);
        }
    }
    return max_rel;
}

}  // namespace pf
