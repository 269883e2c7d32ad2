#include "saf/grad_check.hpp"

#include <cmath>

namespace saf {

namespace {

// Central differences cannot resolve a derivative below roughly
// eps * |loss| / step (~1e-9 for a unit-scale loss at the default step),
// so differences under this floor count as exact.  A genuinely wrong
// gradient still fails: it is off by the magnitude of the true value,
// far above the floor for any element that matters.
constexpr double kAbsoluteFloor = 1e-8;

double evaluate(const LossBuilder& f, ParameterSet& params) {
    Tape tape;
    Tensor loss = f(tape, params);
    if (loss.size() != 1)
        throw ContractError("grad_check: loss builder must return a scalar, got shape " +
                            shape_string(loss.shape));
    return loss.values[0];
}

} // namespace

GradCheckReport grad_check(const LossBuilder& f, const ParameterSet& params, double step) {
    if (!(step > 0.0) || step > 1e-3)
        throw ContractError("grad_check: step must lie in (0, 1e-3]");

    // Analytic pass.
    ParameterSet analytic = params.clone();
    {
        Tape tape;
        Tensor loss = f(tape, analytic);
        if (loss.size() != 1)
            throw ContractError("grad_check: loss builder must return a scalar, got shape " +
                                shape_string(loss.shape));
        tape.backward(loss);
    }

    GradCheckReport report;
    ParameterSet probe = params.clone();
    for (auto& [name, tensor] : probe) {
        const Tensor& grads = analytic.at(name);
        for (std::size_t i = 0; i < tensor.values.size(); ++i) {
            double saved = tensor.values[i];
            tensor.values[i] = saved + step;
            double up = evaluate(f, probe);
            tensor.values[i] = saved - step;
            double down = evaluate(f, probe);
            tensor.values[i] = saved;

            double numeric = (up - down) / (2.0 * step);
            double a = grads.grad.empty() ? 0.0 : grads.grad[i];
            double diff = std::fabs(a - numeric);
            double denom = std::max(std::fabs(a), std::fabs(numeric));
            double rel = diff < kAbsoluteFloor ? 0.0 : diff / denom;

            ++report.checked;
            if (rel >= report.max_rel_error) {
                report.max_rel_error = rel;
                report.worst = {name, i, a, numeric, rel};
            }
        }
    }
    return report;
}

} // namespace saf
