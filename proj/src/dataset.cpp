#include "pf/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "pf/errors.hpp"
#include "pf/io.hpp"

namespace pf {

using nlohmann::json;

Condition::Condition(std::vector<std::string> perts, std::string cov)
    : perturbations(std::move(perts)), covariate(std::move(cov)) {
    std::sort(perturbations.begin(), perturbations.end());
    perturbations.erase(std::unique(perturbations.begin(), perturbations.end()),
                        perturbations.end());
}

std::string Condition::key() const {
    std::string k;
    if (perturbations.empty()) {
        k = "control";
    } else {
        for (std::size_t i = 0; i < perturbations.size(); ++i) {
            if (i) k += "+";
            k += perturbations[i];
        }
    }
    k += "@";
    k += covariate;
    return k;
}

bool Condition::operator<(const Condition& o) const {
    if (covariate != o.covariate) return covariate < o.covariate;
    return perturbations < o.perturbations;
}

std::string split_name(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Val: return "val";
        case Split::Test: return "test";
    }
    return "?";
}

Split split_from_name(const std::string& name) {
    if (name == "train") return Split::Train;
    if (name == "val") return Split::Val;
    if (name == "test") return Split::Test;
    throw DataError("unknown split label '" + name + "'");
}

void PerturbDataset::validate() const {
    const std::size_t n = n_cells(), m = n_genes();
    if (cells.size() != n * m)
        throw DataError("cell matrix has " + std::to_string(cells.size()) + " values, expected " +
                        std::to_string(n * m));
    if (split.size() != n) throw DataError("split labels do not cover every cell");
    {
        std::set<std::string> uniq(genes.begin(), genes.end());
        if (uniq.size() != genes.size()) throw DataError("gene identifiers are not unique");
    }
    const std::set<std::string> perts(perturbation_vocab.begin(), perturbation_vocab.end());
    const std::set<std::string> covs(covariate_vocab.begin(), covariate_vocab.end());
    for (const auto& c : conditions) {
        for (const auto& p : c.perturbations)
            if (!perts.count(p)) throw VocabularyError("unknown perturbation '" + p + "'");
        if (!covs.count(c.covariate))
            throw VocabularyError("unknown covariate '" + c.covariate + "'");
    }
    for (double v : cells)
        if (!(v >= 0.0)) throw DataError("negative or non-finite expression value");

    // Every perturbed val/test condition needs same-covariate controls somewhere.
    std::set<std::string> covs_with_controls;
    for (const auto& c : conditions)
        if (c.is_control()) covs_with_controls.insert(c.covariate);
    for (std::size_t i = 0; i < n; ++i) {
        if (split[i] != Split::Train && !conditions[i].is_control() &&
            !covs_with_controls.count(conditions[i].covariate))
            throw DataError("condition '" + conditions[i].key() +
                            "' in val/test has no matching control cells");
    }
}

std::vector<std::size_t> PerturbDataset::rows_of_split(Split s) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < n_cells(); ++i)
        if (split[i] == s) out.push_back(i);
    return out;
}

std::vector<std::size_t> PerturbDataset::control_rows(const std::string& covariate) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < n_cells(); ++i)
        if (conditions[i].is_control() && conditions[i].covariate == covariate) out.push_back(i);
    return out;
}

std::vector<Condition> PerturbDataset::distinct_conditions(Split s) const {
    std::set<Condition> uniq;
    for (std::size_t i = 0; i < n_cells(); ++i)
        if (split[i] == s) uniq.insert(conditions[i]);
    return {uniq.begin(), uniq.end()};
}

std::vector<std::size_t> PerturbDataset::rows_of_condition(const Condition& c, Split s) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < n_cells(); ++i)
        if (split[i] == s && conditions[i] == c) out.push_back(i);
    return out;
}

std::vector<double> log1p_normalize(const std::vector<double>& counts, std::size_t n,
                                    std::size_t m, double target_sum) {
    if (counts.size() != n * m) throw DimensionError("log1p_normalize: shape mismatch");
    std::vector<double> out(counts.size());
    for (std::size_t i = 0; i < n; ++i) {
        double total = 0.0;
        for (std::size_t j = 0; j < m; ++j) total += counts[i * m + j];
        if (!(total > 0.0))
            throw DataError("log1p_normalize: row " + std::to_string(i) + " has zero total count");
        const double s = target_sum / total;
        for (std::size_t j = 0; j < m; ++j) out[i * m + j] = std::log1p(counts[i * m + j] * s);
    }
    return out;
}

Pseudobulk pseudobulk_of_rows(const PerturbDataset& ds, const Condition& c,
                              const std::vector<std::size_t>& rows) {
    if (rows.empty()) throw DataError("pseudobulk of zero cells for '" + c.key() + "'");
    const std::size_t m = ds.n_genes();
    Pseudobulk pb;
    pb.condition = c;
    pb.cell_count = rows.size();
    pb.mean_expression.assign(m, 0.0);
    for (std::size_t r : rows) {
        const double* row = ds.row(r);
        for (std::size_t j = 0; j < m; ++j) pb.mean_expression[j] += row[j];
    }
    for (auto& v : pb.mean_expression) v /= static_cast<double>(rows.size());
    return pb;
}

std::vector<Pseudobulk> pseudobulk(const PerturbDataset& ds, Split split) {
    std::map<Condition, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < ds.n_cells(); ++i)
        if (ds.split[i] == split) groups[ds.conditions[i]].push_back(i);
    if (groups.empty())
        throw DataError("pseudobulk: split '" + split_name(split) + "' is empty");
    std::vector<Pseudobulk> out;
    out.reserve(groups.size());
    for (const auto& [cond, rows] : groups) out.push_back(pseudobulk_of_rows(ds, cond, rows));
    return out;
}

std::vector<double> log_fold_change(const Pseudobulk& perturbed, const Pseudobulk& control) {
    if (perturbed.mean_expression.size() != control.mean_expression.size())
        throw DimensionError("log_fold_change: gene counts differ");
    if (perturbed.condition.covariate != control.condition.covariate)
        throw DataError("log_fold_change: covariate mismatch, '" +
                        perturbed.condition.covariate + "' vs '" + control.condition.covariate +
                        "'");
    std::vector<double> out(perturbed.mean_expression.size());
    for (std::size_t j = 0; j < out.size(); ++j)
        out[j] = perturbed.mean_expression[j] - control.mean_expression[j];
    return out;
}

void save_dataset(const std::filesystem::path& dir, const PerturbDataset& ds) {
    std::filesystem::create_directories(dir);

    // Deduplicate conditions; store per-cell indices into the unique list.
    std::map<Condition, std::size_t> cond_index;
    json cond_list = json::array();
    std::map<std::string, std::size_t> pert_index, cov_index;
    for (std::size_t i = 0; i < ds.perturbation_vocab.size(); ++i)
        pert_index[ds.perturbation_vocab[i]] = i;
    for (std::size_t i = 0; i < ds.covariate_vocab.size(); ++i)
        cov_index[ds.covariate_vocab[i]] = i;

    std::vector<std::size_t> cell_condition(ds.n_cells());
    for (std::size_t i = 0; i < ds.n_cells(); ++i) {
        const auto& c = ds.conditions[i];
        auto it = cond_index.find(c);
        if (it == cond_index.end()) {
            json jc;
            jc["perts"] = json::array();
            for (const auto& p : c.perturbations) jc["perts"].push_back(pert_index.at(p));
            jc["cov"] = cov_index.at(c.covariate);
            it = cond_index.emplace(c, cond_list.size()).first;
            cond_list.push_back(jc);
        }
        cell_condition[i] = it->second;
    }

    json meta;
    meta["format"] = "pf-dataset-v1";
    meta["genes"] = ds.genes;
    meta["perturbations"] = ds.perturbation_vocab;
    meta["covariates"] = ds.covariate_vocab;
    meta["conditions"] = cond_list;
    meta["cell_condition"] = cell_condition;
    json splits = json::array();
    for (auto s : ds.split) splits.push_back(split_name(s));
    meta["split"] = splits;
    meta["normalization"] = ds.normalization;
    meta["n_cells"] = ds.n_cells();
    meta["n_genes"] = ds.n_genes();

    write_f64_blob(dir / "cells.f64", ds.cells);
    write_text_atomic(dir / "meta.json", meta.dump(2) + "\n");
}

PerturbDataset load_dataset(const std::filesystem::path& dir) {
    json meta;
    try {
        meta = json::parse(read_text(dir / "meta.json"));
    } catch (const json::parse_error& e) {
        throw IoError("dataset meta unreadable: " + std::string(e.what()));
    }
    if (meta.value("format", "") != "pf-dataset-v1")
        throw IoError("unrecognized dataset format in " + dir.string());

    PerturbDataset ds;
    ds.genes = meta.at("genes").get<std::vector<std::string>>();
    ds.perturbation_vocab = meta.at("perturbations").get<std::vector<std::string>>();
    ds.covariate_vocab = meta.at("covariates").get<std::vector<std::string>>();
    ds.normalization = meta.value("normalization", json::object());

    std::vector<Condition> cond_list;
    for (const auto& jc : meta.at("conditions")) {
        std::vector<std::string> perts;
        for (const auto& pi : jc.at("perts"))
            perts.push_back(ds.perturbation_vocab.at(pi.get<std::size_t>()));
        cond_list.emplace_back(std::move(perts),
                               ds.covariate_vocab.at(jc.at("cov").get<std::size_t>()));
    }
    for (const auto& ci : meta.at("cell_condition"))
        ds.conditions.push_back(cond_list.at(ci.get<std::size_t>()));
    for (const auto& s : meta.at("split"))
        ds.split.push_back(split_from_name(s.get<std::string>()));

    ds.cells = read_f64_blob(dir / "cells.f64");
    ds.validate();
    return ds;
}

void write_pseudobulk_csv(const std::filesystem::path& path,
                          const std::vector<std::string>& genes,
                          const std::vector<Pseudobulk>& table) {
    std::ostringstream os;
    os << "condition,cell_count";
    for (const auto& g : genes) os << "," << g;
    os << "\n";
    for (const auto& pb : table) {
        os << pb.condition.key() << "," << pb.cell_count;
        for (double v : pb.mean_expression) os << "," << format_double(v);
        os << "\n";
    }
    write_text_atomic(path, os.str());
}

}  // namespace pf
