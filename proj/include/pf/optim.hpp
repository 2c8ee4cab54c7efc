#pragma once

#include <functional>
#include <map>

#include "pf/params.hpp"
#include "pf/tensor.hpp"

namespace pf {

// Adam moments, one pair per parameter, plus a shared step counter.
struct AdamState {
    struct Moments {
        std::vector<double> m;
        std::vector<double> v;
    };
    std::map<std::string, Moments> moments;
    long long t = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Decoupled weight decay (applied before the Adam update), then the
// bias-corrected Adam step. Throws PreconditionError when a parameter has no
// gradient buffer.
void adam_step(ParameterSet& params, AdamState& state, double lr, double weight_decay);

// Returns the pre-clip global L2 norm over all gradients; rescales gradients
// in place when the norm exceeds the threshold.
double clip_grad_norm(ParameterSet& params, double threshold);

// Central finite differences of a scalar-valued function against the
// reverse-mode gradient. Returns the max per-coordinate relative error
// |g_ad - g_fd| / max(1, |g_fd|).
double grad_check(const std::function<Tensor()>& f, ParameterSet& inputs, double eps);

}  // namespace pf
