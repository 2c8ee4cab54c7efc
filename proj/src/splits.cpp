#include "pf/splits.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "pf/errors.hpp"

namespace pf {

namespace {

// Stable string hash for rng forking (std::hash is not pinned across stdlibs).
std::uint64_t fnv64(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Pert-set identity without the covariate.
std::string pert_key(const Condition& c) {
    Condition bare(c.perturbations, "");
    return bare.key();
}

void assign_cells_val_test(PerturbDataset& ds, const Condition& cond, Rng& rng) {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < ds.n_cells(); ++i)
        if (ds.conditions[i] == cond) rows.push_back(i);
    rng.shuffle(rows);
    for (std::size_t i = 0; i < rows.size(); ++i)
        ds.split[rows[i]] = i < rows.size() / 2 ? Split::Val : Split::Test;
}

}  // namespace

PerturbDataset split_covariate_transfer(const PerturbDataset& ds, double holdout_fraction,
                                        std::uint64_t seed) {
    if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0))
        throw ConfigError("split_covariate_transfer: holdout_fraction must be in (0,1)");
    if (ds.covariate_vocab.size() < 2)
        throw ConfigError("split_covariate_transfer: needs at least 2 covariates");

    PerturbDataset out = ds;
    std::fill(out.split.begin(), out.split.end(), Split::Train);

    // Distinct perturbed conditions, grouped per covariate; for every pert
    // set, the number of covariates where it is still trainable.
    std::map<std::string, std::vector<Condition>> per_cov;
    std::map<std::string, int> train_cov_count;
    {
        std::set<Condition> uniq(ds.conditions.begin(), ds.conditions.end());
        for (const auto& c : uniq) {
            if (c.is_control()) continue;
            per_cov[c.covariate].push_back(c);
            train_cov_count[pert_key(c)] += 1;
        }
    }

    Rng rng(seed);
    for (auto& [cov, conds] : per_cov) {
        std::sort(conds.begin(), conds.end());
        Rng pick_rng = rng.fork(fnv64(cov));
        std::vector<Condition> order = conds;
        pick_rng.shuffle(order);
        const std::size_t quota =
            static_cast<std::size_t>(std::llround(holdout_fraction * conds.size()));
        std::vector<Condition> chosen;
        std::vector<std::string> blocked;
        for (const auto& c : order) {
            if (chosen.size() == quota) break;
            auto& remaining = train_cov_count[pert_key(c)];
            if (remaining >= 2) {
                remaining -= 1;
                chosen.push_back(c);
            } else {
                blocked.push_back(pert_key(c));
            }
        }
        if (chosen.size() < quota) {
            std::string msg = "split_covariate_transfer: covariate '" + cov +
                              "' cannot hold out " + std::to_string(quota) +
                              " perturbations; blocked:";
            for (const auto& b : blocked) msg += " " + b;
            throw SplitError(msg);
        }
        for (const auto& c : chosen) {
            Rng cell_rng = rng.fork(fnv64(c.key()));
            assign_cells_val_test(out, c, cell_rng);
        }
    }
    out.validate();
    return out;
}

PerturbDataset split_combo(const PerturbDataset& ds, double holdout_fraction, std::uint64_t seed,
                           bool allow_no_duals) {
    if (!(holdout_fraction > 0.0 && holdout_fraction <= 1.0))
        throw ConfigError("split_combo: holdout_fraction must be in (0,1]");

    PerturbDataset out = ds;
    std::fill(out.split.begin(), out.split.end(), Split::Train);

    std::set<Condition> uniq(ds.conditions.begin(), ds.conditions.end());
    std::vector<Condition> duals;
    for (const auto& c : uniq)
        if (c.n_perturbations() == 2) duals.push_back(c);
    if (duals.empty()) {
        if (allow_no_duals) return out;
        throw SplitError("split_combo: dataset contains no dual-perturbation conditions");
    }
    for (const auto& d : duals) {
        for (const auto& p : d.perturbations) {
            Condition single({p}, d.covariate);
            if (!uniq.count(single))
                throw SplitError("split_combo: dual '" + d.key() + "' lacks single '" +
                                 single.key() + "' in the dataset");
        }
    }

    Rng rng(seed);
    std::vector<Condition> order = duals;
    rng.shuffle(order);
    const std::size_t quota =
        std::min(duals.size(),
                 static_cast<std::size_t>(std::llround(holdout_fraction * duals.size())));
    for (std::size_t i = 0; i < quota; ++i) {
        Rng cell_rng = rng.fork(fnv64(order[i].key()));
        assign_cells_val_test(out, order[i], cell_rng);
    }
    out.validate();
    return out;
}

}  // namespace pf
