#pragma once

#include <filesystem>
#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "pf/condition.hpp"

namespace pf {

enum class Split { Train, Val, Test };

std::string split_name(Split s);
Split split_from_name(const std::string& name);

// Expression matrix plus per-cell condition labels and split assignment.
// Values are log1p-normalized, hence non-negative.
struct PerturbDataset {
    std::vector<std::string> genes;
    std::vector<std::string> perturbation_vocab;
    std::vector<std::string> covariate_vocab;
    std::vector<double> cells;  // n x m row-major
    std::vector<Condition> conditions;
    std::vector<Split> split;
    nlohmann::json normalization;  // record of how values were produced

    std::size_t n_cells() const { return conditions.size(); }
    std::size_t n_genes() const { return genes.size(); }
    const double* row(std::size_t i) const { return cells.data() + i * n_genes(); }

    // Throws DataError / VocabularyError when internal consistency is broken.
    void validate() const;

    std::vector<std::size_t> rows_of_split(Split s) const;
    // Indices of control cells (n_c = 0) for one covariate, any split.
    std::vector<std::size_t> control_rows(const std::string& covariate) const;
    // Distinct conditions within a split, sorted by key.
    std::vector<Condition> distinct_conditions(Split s) const;
    std::vector<std::size_t> rows_of_condition(const Condition& c, Split s) const;
};

struct Pseudobulk {
    Condition condition;
    std::vector<double> mean_expression;
    std::size_t cell_count = 0;
};

// Row-rescale to target_sum then ln(1+x). Throws DataError naming the row
// index when a row has zero total count.
std::vector<double> log1p_normalize(const std::vector<double>& counts, std::size_t n,
                                    std::size_t m, double target_sum);

// One Pseudobulk per distinct condition of the split, sorted by key.
std::vector<Pseudobulk> pseudobulk(const PerturbDataset& ds, Split split);
Pseudobulk pseudobulk_of_rows(const PerturbDataset& ds, const Condition& c,
                              const std::vector<std::size_t>& rows);

// Difference of log1p-space means. Throws DataError on covariate mismatch.
std::vector<double> log_fold_change(const Pseudobulk& perturbed, const Pseudobulk& control);

// On-disk form: meta.json + cells.f64 (little-endian row-major).
void save_dataset(const std::filesystem::path& dir, const PerturbDataset& ds);
PerturbDataset load_dataset(const std::filesystem::path& dir);

// CSV export of pseudobulk tables (one row per condition, one column per gene).
void write_pseudobulk_csv(const std::filesystem::path& path,
                          const std::vector<std::string>& genes,
                          const std::vector<Pseudobulk>& table);

}  // namespace pf
