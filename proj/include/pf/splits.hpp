#pragma once

#include "pf/dataset.hpp"
#include "pf/rng.hpp"

namespace pf {

// Covariate-transfer task split: per covariate, a fraction of its perturbed
// conditions move to val/test (cells split evenly between the two), but only
// when the same perturbation set stays in train under another covariate.
// Controls always stay in train. Throws SplitError when a covariate cannot
// reach its quota, listing the perturbations that blocked it.
PerturbDataset split_covariate_transfer(const PerturbDataset& ds, double holdout_fraction,
                                        std::uint64_t seed);

// Combo-prediction task split: a fraction of dual-perturbation conditions
// move to val/test; their constituent singles and controls stay in train.
// Throws SplitError when a dual's single is absent from the dataset, or when
// there are no duals (unless allow_no_duals).
PerturbDataset split_combo(const PerturbDataset& ds, double holdout_fraction, std::uint64_t seed,
                           bool allow_no_duals = false);

}  // namespace pf
