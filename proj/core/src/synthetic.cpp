#include "saf/synthetic.hpp"

#include <cmath>

#include "saf/error.hpp"
#include "saf/rng.hpp"

namespace saf {

namespace {
constexpr std::uint64_t kNoiseStream = 0xA;
constexpr std::uint64_t kTransitionStream = 0xB;
} // namespace

const char* ar_variant_name(ArVariant variant) {
    switch (variant) {
        case ArVariant::AR1: return "ar1";
        case ArVariant::AR2: return "ar2";
        case ArVariant::AR3: return "ar3";
        case ArVariant::AR4: return "ar4";
    }
    throw ConfigError("unknown AR variant value");
}

ArVariant ar_variant_from_name(const std::string& name) {
    if (name == "ar1") return ArVariant::AR1;
    if (name == "ar2") return ArVariant::AR2;
    if (name == "ar3") return ArVariant::AR3;
    if (name == "ar4") return ArVariant::AR4;
    throw ConfigError("unknown AR variant '" + name + "' (expected ar1|ar2|ar3|ar4)");
}

void ArProcessSpec::validate() const {
    if (duration < 2) throw ConfigError("AR duration must be at least 2");
    if (!(noise_std >= 0) || !std::isfinite(noise_std))
        throw ConfigError("AR noise std must be finite and non-negative");
    if (drift_scale == 0) throw ConfigError("AR drift scale must be non-zero");
    if (!(hazard_base >= 0 && hazard_base <= 1))
        throw ConfigError("AR hazard base must lie in [0, 1]");
    if (flip_begin > flip_end) throw ConfigError("AR flip interval is reversed");
}

double ar3_transition_prob(std::size_t dwell, double base) {
    return 1.0 - std::pow(base, static_cast<double>(dwell));
}

std::vector<double> ar_coefficients(const ArProcessSpec& spec) {
    spec.validate();
    std::vector<double> alpha(spec.duration);
    switch (spec.variant) {
        case ArVariant::AR1:
            for (std::size_t t = 0; t < spec.duration; ++t)
                alpha[t] = (t >= spec.flip_begin && t <= spec.flip_end) ? spec.flip_value
                                                                        : spec.base_value;
            break;
        case ArVariant::AR2:
            for (std::size_t t = 0; t < spec.duration; ++t)
                alpha[t] = 1.0 - static_cast<double>(t) / spec.drift_scale;
            break;
        case ArVariant::AR3: {
            CounterRng transitions(CounterRng::mix(spec.seed, kTransitionStream));
            double state = spec.state_a;
            std::size_t dwell = 0;
            alpha[0] = state;
            for (std::size_t t = 1; t < spec.duration; ++t) {
                alpha[t] = state;
                ++dwell;
                if (transitions.uniform() < ar3_transition_prob(dwell, spec.hazard_base)) {
                    state = (state == spec.state_a) ? spec.state_b : spec.state_a;
                    dwell = 0;
                }
            }
            break;
        }
        case ArVariant::AR4:
            for (std::size_t t = 0; t < spec.duration; ++t) alpha[t] = spec.stationary_value;
            break;
    }
    return alpha;
}

std::vector<double> generate_ar(const ArProcessSpec& spec) {
    std::vector<double> alpha = ar_coefficients(spec);
    CounterRng noise(CounterRng::mix(spec.seed, kNoiseStream));
    std::vector<double> y(spec.duration);
    y[0] = spec.initial_value;
    for (std::size_t t = 1; t < spec.duration; ++t)
        y[t] = alpha[t] * y[t - 1] - spec.noise_std * noise.normal();
    return y;
}

PanelDataset ar_panel(const ArProcessSpec& spec) {
    std::vector<double> series = generate_ar(spec);
    const std::string name = ar_variant_name(spec.variant);

    PanelEntity entity;
    entity.id = name;
    entity.timestamps.resize(spec.duration);
    for (std::size_t t = 0; t < spec.duration; ++t)
        entity.timestamps[t] = static_cast<std::int64_t>(t);
    entity.values = Tensor({spec.duration, 1}, std::move(series));

    PanelDataset data;
    data.feature_names = {name};
    data.target_column = 0;
    data.frequency = "steps";
    data.entities.push_back(std::move(entity));
    return data;
}

} // namespace saf
