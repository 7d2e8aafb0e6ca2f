// errors.hpp — error taxonomy for the toolkit
//
// ConfigError covers validation of user-supplied files and parameters.
// Everything else signals a data- or physics-dependent computation failure;
// the CLI maps the former to exit 1 and the latter to exit 2.

#pragma once

#include <stdexcept>
#include <string>

namespace omcool {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Invalid configuration, schema violation, malformed input file.
struct ConfigError : Error {
    using Error::Error;
};

// Drive puts the oscillator outside the cooling regime (Γ_eff or Γ_opt ≤ 0).
struct InstabilityError : Error {
    using Error::Error;
};

// Minimizer hit the iteration cap without meeting the convergence criteria.
struct NoConvergenceError : Error {
    using Error::Error;
};

// No bin exceeds background median + 5× background MAD.
struct PeakNotFoundError : Error {
    using Error::Error;
};

// Double-peak fit converged with |ω₁−ω₂| < Γ_eff.
struct OverlappingSidebandsError : Error {
    using Error::Error;
};

// Sideband asymmetry implies A₂/Γ_b ≤ A₁/Γ_c; reported, never clamped.
struct NegativeOccupancyError : Error {
    using Error::Error;
};

// Calibrations from different fiber-coupling sessions cannot be pooled.
struct MixedConfigurationsError : Error {
    using Error::Error;
};

// Anchor point implies non-positive intrinsic mechanical damping.
struct AnchorInconsistentError : Error {
    using Error::Error;
};

// Regression design cannot separate the requested coefficients.
struct DegenerateRegressionError : Error {
    using Error::Error;
};

} // namespace omcool
