// thermometry.hpp — phonon-occupancy estimation from fitted sideband
// parameters: self-calibrated sideband asymmetry, single-tone thermometry
// with a pooled calibration coefficient, and cryostat-anchored mechanical
// noise thermometry. Includes error propagation with the ±10 MHz detuning
// systematic.

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "omcool/fitting.hpp"
#include "omcool/model.hpp"

namespace omcool::thermo {

// Systematic uncertainty of the cooling-tone detuning from the coherent
// response fit.
inline constexpr double detuning_sigma = hz_to_rad(10e6);

struct Calibration {
    enum class Method { AncillaryQuantum, NoiseAnchored };
    double c_cal = 0.0;       // C_cal = A₂/Γ_b − A₁/Γ_c  (≈ η)
    double c_cal_sigma = 0.0;
    std::vector<std::string> source_runs;
    std::string session_tag;
    Method method = Method::AncillaryQuantum;
};

struct OccupancyEstimate {
    double n_f = 0.0;
    double sigma_lo = 0.0, sigma_hi = 0.0; // asymmetric 1σ bounds
    std::string method;                    // asymmetry | calibrated | noise-anchored
    // inputs snapshot
    double area = 0.0;     // A_s (or A₁), rad/s
    double gamma_s = 0.0;  // Γ_c of the run's drive, rad/s
    double delta_c = 0.0;  // rad/s
    double delta_c_sigma = detuning_sigma;
    std::string run_id;
};

struct AsymmetryResult {
    OccupancyEstimate occupancy;
    Calibration calibration;
};

// Two-tone route: n̄_f = (A₁/Γ_c)/(A₂/Γ_b − A₁/Γ_c), C_cal = A₂/Γ_b − A₁/Γ_c,
// with Γ_b, Γ_c computed from the run's drive. Throws NegativeOccupancyError
// when the asymmetry is unphysical (A₂/Γ_b ≤ A₁/Γ_c).
AsymmetryResult occupancy_from_asymmetry(const fit::LorentzianFitResult& fit,
                                         const model::SystemParams& params,
                                         const model::DriveConfig& drive,
                                         const std::string& run_id = {},
                                         const std::string& session_tag = {});

// Mean of ≥ 2 calibrations from the same coupling session; the quoted sigma
// is the standard error of the mean. Throws MixedConfigurationsError when the
// session tags differ.
Calibration pool_calibration(const std::vector<Calibration>& calibrations);

// Single-tone route: n̄_f = A_s/(Γ_s C_cal).
OccupancyEstimate occupancy_from_calibration(const fit::LorentzianFitResult& fit,
                                             const model::SystemParams& params,
                                             const model::DriveConfig& drive,
                                             const Calibration& cal,
                                             const std::string& run_id = {});

// Anchor data for mechanical noise thermometry. gamma_m is an explicit input
// (the anchor-point value, e.g. from infer_gamma_m at the anchor run).
struct NoiseAnchor {
    double area_0 = 0.0;      // A_s⁰, rad/s
    double gamma_s_0 = 0.0;   // Γ_s⁰ (cooling-tone scattering rate at anchor)
    double temperature = 0.0; // K
    double gamma_m = 0.0;     // rad/s
};

// n̄_f = (A_s/Γ_s)/(A_s⁰/Γ_s⁰) · (k_B T/ħΩ_m) · Γ_m/(Γ_s⁰+Γ_m).
OccupancyEstimate occupancy_noise_anchored(const fit::LorentzianFitResult& fit,
                                           const model::SystemParams& params,
                                           const model::DriveConfig& drive,
                                           const NoiseAnchor& anchor,
                                           const std::string& run_id = {});

// Builds the anchor from the fit at the anchor point itself; throws
// AnchorInconsistentError when Γ_eff⁰ − Γ_s⁰ ≤ 0.
NoiseAnchor anchor_from_fit(const fit::LorentzianFitResult& fit,
                            const model::SystemParams& params,
                            const model::DriveConfig& drive, double temperature_k);

struct RateEstimate {
    double value = 0.0;
    double sigma = 0.0;
    bool nonphysical = false; // value ≤ 0; reported, not clamped
};

// Γ_m = Γ_eff − Γ_c with Γ_c as given (or computed from the drive).
RateEstimate infer_gamma_m(const fit::LorentzianFitResult& fit, double gamma_c);
RateEstimate infer_gamma_m(const fit::LorentzianFitResult& fit,
                           const model::SystemParams& params,
                           const model::DriveConfig& drive);

} // namespace omcool::thermo
