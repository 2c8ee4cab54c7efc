#pragma once

#include <string>
#include <vector>

namespace pf {

// A set of perturbation identifiers plus one covariate identifier. An empty
// perturbation set is a control cell. Perturbations are kept sorted and
// unique so equal conditions compare equal.
struct Condition {
    std::vector<std::string> perturbations;
    std::string covariate;

    Condition() = default;
    Condition(std::vector<std::string> perts, std::string cov);

    bool is_control() const { return perturbations.empty(); }
    std::size_t n_perturbations() const { return perturbations.size(); }

    // "pertA+pertB@covariate"; controls print as "control@covariate".
    std::string key() const;

    bool operator==(const Condition& o) const = default;
    bool operator<(const Condition& o) const;
};

}  // namespace pf
