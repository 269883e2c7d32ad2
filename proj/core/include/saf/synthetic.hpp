#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "saf/panel.hpp"

namespace saf {

/// The four benchmark autoregressive processes.  All share the recursion
/// y[t] = alpha[t] * y[t-1] - eps_t with Gaussian noise; they differ only
/// in the coefficient schedule alpha[t]:
///   AR1  abrupt change: -0.9 inside a fixed interval, 0.9 outside
///   AR2  smooth drift:  1 - t/1500
///   AR3  random regime switching between 0.9 and -0.5 with a dwell-time
///        hazard (the longer a regime lasts, the likelier it flips)
///   AR4  stationary:    -0.5 throughout
enum class ArVariant : std::uint8_t { AR1 = 1, AR2, AR3, AR4 };

const char* ar_variant_name(ArVariant variant);
ArVariant ar_variant_from_name(const std::string& name);

/// Generator settings.  Defaults reproduce the published benchmark
/// processes; the schedule fields are exposed so tests can force edge
/// cases (noise-free recursions, rapid regime flips).
struct ArProcessSpec {
    ArVariant variant = ArVariant::AR4;
    std::size_t duration = 1000;
    double noise_std = 0.03;
    std::uint64_t seed = 0;
    double initial_value = 0.0;  // y[0]

    // AR1: coefficient is flip_value for t in [flip_begin, flip_end]
    // (inclusive) and base_value elsewhere
    std::size_t flip_begin = 1000;
    std::size_t flip_end = 2000;
    double base_value = 0.9;
    double flip_value = -0.9;

    // AR2: alpha[t] = 1 - t / drift_scale
    double drift_scale = 1500.0;

    // AR3: regimes {state_a, state_b}, starting in state_a with dwell 0;
    // after dwelling tau steps the next step leaves the regime with
    // probability 1 - hazard_base^tau
    double hazard_base = 0.99995;
    double state_a = 0.9;
    double state_b = -0.5;

    // AR4: constant coefficient
    double stationary_value = -0.5;

    /// duration >= 2, noise_std >= 0, drift_scale != 0, hazard_base in
    /// [0, 1], flip_begin <= flip_end.  Throws ConfigError.
    void validate() const;
};

/// Probability that a regime dwelling for `dwell` steps flips on the next
/// step: 1 - base^dwell.  Zero at dwell 0 and increasing in dwell.
double ar3_transition_prob(std::size_t dwell, double base = 0.99995);

/// The full coefficient path alpha[0..T-1].  alpha[0] is filled but never
/// applied (y[0] is the initial value).  AR1/AR2/AR4 are deterministic
/// lookups; AR3 samples its regime path from a dedicated stream, so the
/// noise draws stay aligned across variants at equal seeds.
///
/// AR3 stepping order, fixed for reproducibility: alpha[t] uses the
/// current regime, then the dwell counter advances, then one uniform draw
/// decides whether the NEXT step flips.  alpha[1] therefore always shows
/// the initial regime.
std::vector<double> ar_coefficients(const ArProcessSpec& spec);

/// y[0] = initial_value, y[t] = alpha[t] * y[t-1] - eps_t, with
/// eps ~ N(0, noise_std^2) drawn from stream mix(seed, 0xA) and AR3 regime
/// draws from stream mix(seed, 0xB).  Bit-deterministic for a fixed seed.
std::vector<double> generate_ar(const ArProcessSpec& spec);

/// Wraps a generated series as a single-entity panel: entity id and the
/// sole feature named after the variant, integer timestamps 0..T-1, no
/// static features.  The series is both the covariate and the target.
PanelDataset ar_panel(const ArProcessSpec& spec);

} // namespace saf
