#pragma once

#include <filesystem>
#include <json.hpp>

#include "pf/params.hpp"

namespace pf {

// Checkpoint directory layout:
//   manifest.json  — dtype, blob name, per-parameter {name, shape, offset},
//                    plus a free-form "model" section (architecture, vocab)
//   params.f64     — little-endian float64 blob, parameters concatenated in
//                    lexicographic name order
// Round-trips are bitwise exact.
void save_checkpoint(const std::filesystem::path& dir, const ParameterSet& params,
                     const nlohmann::json& model_section);

struct LoadedCheckpoint {
    nlohmann::json model_section;
    std::map<std::string, Tensor> params;  // requires_grad already set
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir);

// Copies loaded values into an existing ParameterSet (shapes must match).
void restore_params(ParameterSet& params, const LoadedCheckpoint& ckpt);

}  // namespace pf
