#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "saf/tensor.hpp"

namespace saf {

/// Named, insertion-ordered collection of trainable tensors.
///
/// Names are unique within a set.  Iteration order is insertion order,
/// which fixes the serialization layout and the hash.
class ParameterSet {
public:
    using Item = std::pair<std::string, Tensor>;

    Tensor& add(std::string name, Tensor value);
    Tensor& at(std::string_view name);
    const Tensor& at(std::string_view name) const;
    bool contains(std::string_view name) const;

    std::size_t size() const { return items_.size(); }
    bool empty() const { return items_.empty(); }
    /// Total number of scalar values across all tensors.
    std::size_t value_count() const;

    std::vector<Item>::iterator begin() { return items_.begin(); }
    std::vector<Item>::iterator end() { return items_.end(); }
    std::vector<Item>::const_iterator begin() const { return items_.begin(); }
    std::vector<Item>::const_iterator end() const { return items_.end(); }

    /// Deep copy with value-independent storage.  Gradients are not copied.
    ParameterSet clone() const;

    void clear_grads();

    /// FNV-1a over names, shapes and raw value bytes, in insertion order.
    std::uint64_t value_hash() const;

private:
    std::vector<Item> items_;
};

/// In-place plain gradient descent: p -= rate * grad for every tensor,
/// then clears the gradients.  Missing gradient raises ContractError
/// naming the parameter; non-finite result raises NumericError.
void sgd_step(ParameterSet& params, double rate);

} // namespace saf
