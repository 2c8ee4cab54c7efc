#pragma once

#include <map>
#include <string>
#include <vector>

#include "pf/tensor.hpp"

namespace pf {

// Named trainable tensors. std::map keeps iteration lexicographic by name,
// which fixes optimizer update order and checkpoint layout across runs.
class ParameterSet {
public:
    Tensor& add(const std::string& name, Tensor t);
    Tensor& at(const std::string& name);
    const Tensor& at(const std::string& name) const;
    bool contains(const std::string& name) const { return params_.count(name) > 0; }

    void zero_grad();
    std::size_t total_size() const;
    std::vector<std::string> names() const;

    auto begin() { return params_.begin(); }
    auto end() { return params_.end(); }
    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }
    std::size_t count() const { return params_.size(); }

    // Merges `other` under `prefix + "."` (used to assemble model params).
    void adopt(const std::string& prefix, ParameterSet& other);

private:
    std::map<std::string, Tensor> params_;
};

}  // namespace pf
