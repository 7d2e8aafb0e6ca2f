// model.hpp — closed-form theory of the linearized two-tone optomechanical
// system: susceptibilities, scattering rates, optical spring, occupancies and
// the exact radiation-pressure-dressed mechanical response.
//
// All quantities are angular (rad/s). All functions are pure and safe to call
// concurrently.

#pragma once

#include <complex>

#include "omcool/errors.hpp"
#include "omcool/units.hpp"

namespace omcool::model {

enum class OccupancyConvention {
    RayleighJeans, // n̄_th = k_B T / ħΩ_m (default, high-temperature form)
    Bose           // n̄_th = 1 / (exp(ħΩ_m/k_B T) − 1)
};

double thermal_occupancy(double omega_m, double temperature_k,
                         OccupancyConvention convention);

// Static device parameters. Invariants: kappa = kappa_ex + kappa_0,
// gamma_m = gamma_int + gamma_gas, n_th consistent with temperature.
struct SystemParams {
    double kappa = 0.0;     // total optical linewidth
    double kappa_ex = 0.0;  // external coupling
    double kappa_0 = 0.0;   // intrinsic optical loss
    double omega_m = 0.0;   // mechanical frequency
    double gamma_int = 0.0; // intrinsic mechanical damping
    double gamma_gas = 0.0; // buffer-gas damping
    double gamma_m = 0.0;   // total mechanical damping
    double g0 = 0.0;        // vacuum optomechanical coupling
    double temperature = 0.0; // bath temperature, K
    double n_th = 0.0;        // bath phonon occupancy
    double x_zpf = 0.0;       // zero-point amplitude, m (S_xx normalization only)
    double alpha_opt = 1.0;   // optical noise quanta α
    double beta_mech = 1.0;   // mechanical zero-point quanta β
    OccupancyConvention convention = OccupancyConvention::RayleighJeans;

    // Vacuum cooperativity C₀ = 4g₀²/(κΓ_m).
    double vacuum_cooperativity() const { return 4.0 * g0 * g0 / (kappa * gamma_m); }

    void validate() const; // throws ConfigError
};

// Convenience constructor enforcing the derived-field invariants.
SystemParams make_system_params(double kappa_ex, double kappa_0, double omega_m,
                                double gamma_int, double gamma_gas, double g0,
                                double temperature_k,
                                OccupancyConvention convention =
                                    OccupancyConvention::RayleighJeans);

// Two-tone pump configuration. The tones sit at Δ ± (Ω_m + δ) relative to the
// cavity, i.e. the pair mean is detuned by Δ and the pair is separated by
// 2(Ω_m + δ). The LO sits at Δ + Δ_LO.
struct DriveConfig {
    double n_c = 0.0;       // cooling-tone intracavity photons
    double n_b = 0.0;       // blue-probe intracavity photons (0 = single tone)
    double delta_mean = 0.0; // Δ
    double delta = 0.0;      // δ
    double delta_lo = 0.0;   // Δ_LO

    void validate() const; // photon numbers ≥ 0
};

// Δ_c = Δ − Ω_m − δ (cooling tone below resonance when Δ_c < 0).
double cooling_tone_detuning(const SystemParams& p, const DriveConfig& d);
// Exact inverse of the above: sets delta_mean so the cooling tone sits at Δ_c.
DriveConfig with_cooling_tone_detuning(const SystemParams& p, DriveConfig d,
                                       double delta_c);

// A susceptibility evaluation; `finite` is false for degenerate inputs
// (zero damping exactly at resonance) instead of returning raw infinity.
struct ComplexResponse {
    std::complex<double> value{0.0, 0.0};
    bool finite = true;
};

// χ_c(ω) = 1/(κ/2 − i(ω+Δ))
ComplexResponse chi_c(const SystemParams& p, const DriveConfig& d, double omega);
// χ_m(ω) = 1/(Γ_m/2 − i(ω+δ))
ComplexResponse chi_m(const SystemParams& p, const DriveConfig& d, double omega);

// Γ_{b(c)} = n̄_{b(c)} g₀² κ/(κ²/4 + (Δ±δ)²); Γ_b takes (Δ+δ), Γ_c takes (Δ−δ).
struct ScatteringRates {
    double gamma_b = 0.0;
    double gamma_c = 0.0;
    double gamma_opt() const { return gamma_c - gamma_b; }
};
ScatteringRates scattering_rates(const SystemParams& p, const DriveConfig& d);

// Off-resonant Raman rates: Γ^AS_b with (Δ+δ+2Ω_m), Γ^S_c with (Δ−δ−2Ω_m).
struct RamanRates {
    double gamma_as_b = 0.0;
    double gamma_s_c = 0.0;
};
RamanRates raman_rates(const SystemParams& p, const DriveConfig& d);

// Optical spring δΩ_m; Ω_eff = Ω_m + δΩ_m. Valid in the weak-coupling regime.
double spring_shift(const SystemParams& p, const DriveConfig& d);

// n̄_f = (Γ_m n̄_th + Γ_b)/Γ_eff. Throws InstabilityError if Γ_eff ≤ 0.
double final_occupancy(const SystemParams& p, const DriveConfig& d);

// Rate-level detailed-balance backaction limit: n̄_min = (Γ^S_c + Γ_b)/Γ_opt
// with the exact net damping Γ_opt = Γ^AS_b + Γ_c − Γ_b − Γ^S_c, so that
// (n̄_min+1)/n̄_min = (Γ^AS_b+Γ_c)/(Γ_b+Γ^S_c) holds identically.
double min_occupancy_from_rates(double gamma_b, double gamma_c,
                                double gamma_as_b, double gamma_s_c);
double min_occupancy(const SystemParams& p, const DriveConfig& d);

// Zero-point fluctuation of the dressed mode: β̃ = (α(Γ_c−Γ_b) + Γ_m β)/Γ_eff.
double dressed_zpf(const SystemParams& p, const DriveConfig& d);

// Optical-absorption heating, linear and quadratic in n̄_c.
struct HeatingModel {
    double alpha1 = 0.0; // per photon
    double alpha2 = 0.0; // per photon²
    double alpha1_sigma = 0.0;
    double alpha2_sigma = 0.0;

    // Increase of the effective bath occupancy at photon number n̄_c.
    double bath_increase(double n_c) const {
        return alpha1 * n_c + alpha2 * n_c * n_c;
    }
};

// n̄_f = ((n̄_th + α₁n̄_c + α₂n̄_c²)Γ_m + Γ_b)/Γ_eff; reduces to final_occupancy
// when α₁ = α₂ = 0.
double occupancy_with_heating(const SystemParams& p, const DriveConfig& d,
                              const HeatingModel& heating);

// Everything the drive dresses, in one record.
struct DressedState {
    double gamma_b = 0.0;
    double gamma_c = 0.0;
    double gamma_opt = 0.0;  // Γ_c − Γ_b (resolved-sideband form)
    double gamma_eff = 0.0;  // Γ_m + Γ_opt
    double spring_shift = 0.0;
    double omega_eff = 0.0;
    double n_f = 0.0;           // NaN when gamma_eff ≤ 0
    double n_min = 0.0;         // NaN when net Raman damping ≤ 0
    double beta_dressed = 0.0;  // NaN when gamma_eff ≤ 0
    double gamma_as_b = 0.0;
    double gamma_s_c = 0.0;
    bool stable = false;        // gamma_eff > 0
    bool net_cooling = false;   // gamma_opt > 0
    bool weak_coupling = false; // gamma_opt/kappa ≤ 0.01 (Eq. validity flag)
};
DressedState dressed_state(const SystemParams& p, const DriveConfig& d);

// Exact Fourier-domain solution of the linearized two-tone dynamics.
// chi_meff(ω) = ({χ*_m}⁻¹(−ω) − iΣ*(−ω)) / N(ω); the intermediate objects are
// exposed for verification against the Lorentzian approximation.
struct TwoToneResponse {
    std::complex<double> chi_meff{};
    std::complex<double> drive_matrix[2][2]{}; // M(ω)
    std::complex<double> denominator{};        // N(ω)
    std::complex<double> cross_coupling{};     // Π(ω)
    std::complex<double> self_energy{};        // Σ(ω)
    double g_squared = 0.0;                    // G² = g_c² − g_b²
    bool finite = true;                        // false when |N(ω)| underflows
};
TwoToneResponse exact_effective_susceptibility(const SystemParams& p,
                                               const DriveConfig& d,
                                               double omega);

} // namespace omcool::model
