#include "pf/synth.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "pf/errors.hpp"

namespace pf {

using nlohmann::json;

namespace {

template <typename T>
T require_key(const json& j, const char* key) {
    if (!j.contains(key)) throw ConfigError(std::string("missing required key '") + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(std::string("key '") + key + "' has the wrong type");
    }
}

std::map<std::string, std::vector<double>> read_vector_map(const json& j, const char* key) {
    std::map<std::string, std::vector<double>> out;
    if (!j.contains(key)) return out;
    for (const auto& [name, v] : j.at(key).items())
        out[name] = v.get<std::vector<double>>();
    return out;
}

// Sparse signed vector: `count` distinct genes, magnitudes in [lo, hi].
std::vector<double> draw_sparse(std::size_t m, std::size_t count, double lo, double hi,
                                Rng& rng) {
    std::vector<double> v(m, 0.0);
    std::vector<std::size_t> idx(m);
    for (std::size_t i = 0; i < m; ++i) idx[i] = i;
    rng.shuffle(idx);
    const std::size_t k = std::min(count, m);
    for (std::size_t i = 0; i < k; ++i) {
        const double mag = rng.uniform(lo, hi);
        v[idx[i]] = rng.bernoulli(0.5) ? mag : -mag;
    }
    return v;
}

std::vector<double> draw_dense(std::size_t m, double lo, double hi, Rng& rng) {
    std::vector<double> v(m);
    for (auto& x : v) x = rng.uniform(lo, hi);
    return v;
}

}  // namespace

GeneratorSpec GeneratorSpec::from_json(const json& j) {
    GeneratorSpec s;
    s.n_genes = require_key<std::size_t>(j, "n_genes");
    s.covariates = require_key<std::vector<std::string>>(j, "covariates");
    s.perturbations = require_key<std::vector<std::string>>(j, "perturbations");
    s.cells_per_condition = require_key<std::size_t>(j, "cells_per_condition");
    s.effects = read_vector_map(j, "effects");
    s.baselines = read_vector_map(j, "baselines");
    s.mode_vectors = read_vector_map(j, "mode_vectors");
    if (j.contains("baseline_range")) {
        auto r = j.at("baseline_range").get<std::vector<double>>();
        if (r.size() != 2) throw ConfigError("baseline_range must be [low, high]");
        s.baseline_low = r[0];
        s.baseline_high = r[1];
    }
    if (j.contains("effect_range")) {
        auto r = j.at("effect_range").get<std::vector<double>>();
        if (r.size() != 2) throw ConfigError("effect_range must be [low, high]");
        s.effect_low = r[0];
        s.effect_high = r[1];
    }
    s.effect_genes = j.value("effect_genes", s.effect_genes);
    s.mode_genes = j.value("mode_genes", s.mode_genes);
    s.mode_scale = j.value("mode_scale", s.mode_scale);
    s.mixture_weight = j.value("mixture_weight", s.mixture_weight);
    s.noise_sd = j.value("noise_sd", s.noise_sd);
    s.interaction_scale = j.value("interaction_scale", s.interaction_scale);
    s.interaction_genes = j.value("interaction_genes", s.interaction_genes);
    if (j.contains("combos")) {
        for (const auto& pair : j.at("combos")) {
            auto v = pair.get<std::vector<std::string>>();
            if (v.size() != 2) throw ConfigError("combos entries must name exactly two perturbations");
            s.combos.emplace_back(v[0], v[1]);
        }
    }
    return s;
}

json GeneratorSpec::to_json() const {
    json j;
    j["n_genes"] = n_genes;
    j["covariates"] = covariates;
    j["perturbations"] = perturbations;
    j["cells_per_condition"] = cells_per_condition;
    j["baseline_range"] = {baseline_low, baseline_high};
    j["effect_range"] = {effect_low, effect_high};
    j["effect_genes"] = effect_genes;
    j["mode_genes"] = mode_genes;
    j["mode_scale"] = mode_scale;
    j["mixture_weight"] = mixture_weight;
    j["noise_sd"] = noise_sd;
    j["interaction_scale"] = interaction_scale;
    j["interaction_genes"] = interaction_genes;
    json combos_j = json::array();
    for (const auto& [a, b] : combos) combos_j.push_back(json::array({a, b}));
    j["combos"] = combos_j;
    if (!effects.empty()) j["effects"] = effects;
    if (!baselines.empty()) j["baselines"] = baselines;
    if (!mode_vectors.empty()) j["mode_vectors"] = mode_vectors;
    return j;
}

GeneratorOutput synth_generate(const GeneratorSpec& spec, std::uint64_t seed) {
    if (spec.n_genes == 0) throw ConfigError("synth_generate: gene list is empty");
    if (spec.perturbations.empty()) throw ConfigError("synth_generate: perturbation list is empty");
    if (spec.covariates.empty()) throw ConfigError("synth_generate: covariate list is empty");
    if (spec.cells_per_condition == 0)
        throw ConfigError("synth_generate: cells_per_condition must be positive");
    const std::size_t m = spec.n_genes;
    auto check_len = [m](const std::string& what, const std::vector<double>& v) {
        if (v.size() != m)
            throw ConfigError("synth_generate: vector for '" + what + "' has wrong length");
    };

    Rng root(seed);
    Rng vec_rng = root.fork(1);   // parameter vectors
    Rng cell_rng = root.fork(2);  // per-cell noise

    GeneratorOutput out;
    out.noise_sd = spec.noise_sd;
    for (const auto& cov : spec.covariates) {
        auto it = spec.baselines.find(cov);
        out.baselines[cov] = it != spec.baselines.end()
                                 ? it->second
                                 : draw_dense(m, spec.baseline_low, spec.baseline_high, vec_rng);
        check_len(cov, out.baselines[cov]);
    }
    for (const auto& p : spec.perturbations) {
        auto it = spec.effects.find(p);
        out.effects[p] = it != spec.effects.end()
                             ? it->second
                             : draw_sparse(m, spec.effect_genes, spec.effect_low, spec.effect_high,
                                           vec_rng);
        check_len(p, out.effects[p]);
        auto mit = spec.mode_vectors.find(p);
        if (mit != spec.mode_vectors.end()) {
            out.mode_vectors[p] = mit->second;
        } else if (spec.mode_scale > 0.0) {
            out.mode_vectors[p] = draw_sparse(m, spec.mode_genes, 0.5 * spec.mode_scale,
                                              spec.mode_scale, vec_rng);
        } else {
            out.mode_vectors[p] = std::vector<double>(m, 0.0);
        }
        check_len(p, out.mode_vectors[p]);
    }
    const std::set<std::string> known_perts(spec.perturbations.begin(), spec.perturbations.end());
    for (const auto& [a, b] : spec.combos) {
        if (!known_perts.count(a) || !known_perts.count(b))
            throw ConfigError("synth_generate: combo names unknown perturbation '" +
                              (known_perts.count(a) ? b : a) + "'");
        const std::string key = Condition({a, b}, "").key();  // canonical pert part
        out.interactions[key] =
            spec.interaction_scale > 0.0
                ? draw_sparse(m, spec.interaction_genes, 0.5 * spec.interaction_scale,
                              spec.interaction_scale, vec_rng)
                : std::vector<double>(m, 0.0);
    }

    // Condition list: per covariate, control then singles then combos.
    PerturbDataset ds;
    ds.genes.reserve(m);
    for (std::size_t j = 0; j < m; ++j) ds.genes.push_back("g" + std::to_string(j));
    ds.perturbation_vocab = spec.perturbations;
    ds.covariate_vocab = spec.covariates;
    ds.normalization = {{"kind", "synthetic_log1p"},
                        {"note", "values generated directly in log1p space, clamped at zero"}};

    std::vector<Condition> cond_order;
    for (const auto& cov : spec.covariates) {
        cond_order.emplace_back(std::vector<std::string>{}, cov);
        for (const auto& p : spec.perturbations)
            cond_order.emplace_back(std::vector<std::string>{p}, cov);
        for (const auto& [a, b] : spec.combos)
            cond_order.emplace_back(std::vector<std::string>{a, b}, cov);
    }

    const std::size_t n = cond_order.size() * spec.cells_per_condition;
    ds.cells.reserve(n * m);
    ds.conditions.reserve(n);
    ds.split.assign(n, Split::Train);

    std::vector<double> base_mean(m);
    for (const auto& cond : cond_order) {
        // Mean in log1p space and the mixture offset for this condition.
        const auto& baseline = out.baselines.at(cond.covariate);
        std::vector<double> mode(m, 0.0);
        for (std::size_t j = 0; j < m; ++j) base_mean[j] = baseline[j];
        for (const auto& p : cond.perturbations) {
            const auto& eff = out.effects.at(p);
            const auto& mv = out.mode_vectors.at(p);
            for (std::size_t j = 0; j < m; ++j) {
                base_mean[j] += eff[j];
                mode[j] += mv[j];
            }
        }
        if (cond.n_perturbations() == 2) {
            const std::string key = Condition(cond.perturbations, "").key();
            const auto& inter = out.interactions.at(key);
            for (std::size_t j = 0; j < m; ++j) base_mean[j] += inter[j];
        }
        for (std::size_t i = 0; i < spec.cells_per_condition; ++i) {
            const double sign = cell_rng.bernoulli(spec.mixture_weight) ? 1.0 : -1.0;
            for (std::size_t j = 0; j < m; ++j) {
                const double v =
                    base_mean[j] + sign * mode[j] + spec.noise_sd * cell_rng.normal();
                ds.cells.push_back(std::max(0.0, v));
            }
            ds.conditions.push_back(cond);
        }
    }
    ds.validate();
    out.dataset = std::move(ds);
    return out;
}

}  // namespace pf
