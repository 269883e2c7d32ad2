#pragma once

#include <functional>
#include <string>
#include <vector>

#include "saf/parameters.hpp"
#include "saf/tensor.hpp"

namespace saf {

/// Builds a scalar loss on the given tape from the given parameters.
/// The function is responsible for watching whichever tensors should be
/// differentiated and must be deterministic.
using LossBuilder = std::function<Tensor(Tape&, ParameterSet&)>;

struct GradCheckEntry {
    std::string parameter;
    std::size_t index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    double rel_error = 0.0;
};

struct GradCheckReport {
    double max_rel_error = 0.0;
    GradCheckEntry worst;
    std::size_t checked = 0;

    bool passed(double tol) const { return max_rel_error <= tol; }
};

/// Compares analytic gradients against central finite differences.
///
/// Relative error per element is |a - n| / max(|a|, |n|); a difference
/// below an absolute floor of 1e-8 counts as exact, since central
/// differences cannot resolve derivatives below the rounding noise of the
/// loss evaluation.  `step` must lie in (0, 1e-3].
GradCheckReport grad_check(const LossBuilder& f, const ParameterSet& params, double step = 1e-6);

} // namespace saf
