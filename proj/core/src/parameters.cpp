#include "saf/parameters.hpp"

#include <bit>
#include <cmath>

namespace saf {

namespace {

void hash_bytes(std::uint64_t& h, const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001B3ull;  // FNV-1a prime
    }
}

} // namespace

Tensor& ParameterSet::add(std::string name, Tensor value) {
    if (contains(name)) throw ContractError("parameter set: duplicate name \"" + name + "\"");
    items_.emplace_back(std::move(name), std::move(value));
    return items_.back().second;
}

Tensor& ParameterSet::at(std::string_view name) {
    for (Item& item : items_)
        if (item.first == name) return item.second;
    throw ContractError("parameter set: no parameter named \"" + std::string(name) + "\"");
}

const Tensor& ParameterSet::at(std::string_view name) const {
    for (const Item& item : items_)
        if (item.first == name) return item.second;
    throw ContractError("parameter set: no parameter named \"" + std::string(name) + "\"");
}

bool ParameterSet::contains(std::string_view name) const {
    for (const Item& item : items_)
        if (item.first == name) return true;
    return false;
}

std::size_t ParameterSet::value_count() const {
    std::size_t n = 0;
    for (const Item& item : items_) n += item.second.size();
    return n;
}

ParameterSet ParameterSet::clone() const {
    ParameterSet copy;
    copy.items_.reserve(items_.size());
    for (const Item& item : items_) {
        Tensor t(item.second.shape, item.second.values);
        copy.items_.emplace_back(item.first, std::move(t));
    }
    return copy;
}

void ParameterSet::clear_grads() {
    for (Item& item : items_) item.second.grad.clear();
}

std::uint64_t ParameterSet::value_hash() const {
    std::uint64_t h = 0xCBF29CE484222325ull;  // FNV-1a offset basis
    for (const Item& item : items_) {
        hash_bytes(h, item.first.data(), item.first.size());
        for (std::size_t d : item.second.shape) {
            std::uint64_t dim = d;
            hash_bytes(h, &dim, sizeof dim);
        }
        for (double v : item.second.values) {
            std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
            hash_bytes(h, &bits, sizeof bits);
        }
    }
    return h;
}

void sgd_step(ParameterSet& params, double rate) {
    if (rate < 0.0 || !std::isfinite(rate))
        throw ContractError("sgd_step: rate must be finite and non-negative");
    for (auto& [name, tensor] : params) {
        if (tensor.grad.size() != tensor.values.size())
            throw ContractError("sgd_step: missing gradient for parameter \"" + name + "\"");
        for (std::size_t i = 0; i < tensor.values.size(); ++i) {
            tensor.values[i] -= rate * tensor.grad[i];
            if (!std::isfinite(tensor.values[i]))
                throw NumericError("sgd_step: non-finite value in parameter \"" + name + "\"");
        }
    }
    params.clear_grads();
}

} // namespace saf
