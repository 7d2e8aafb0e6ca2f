#include "omcool/model.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace omcool::model {

namespace {

constexpr double nan_value = std::numeric_limits<double>::quiet_NaN();

// Relative tolerance for the additive parameter invariants.
constexpr double invariant_rtol = 1e-9;

bool close_rel(double a, double b, double rtol) {
    const double scale = std::max(std::abs(a), std::abs(b));
    return std::abs(a - b) <= rtol * std::max(scale, 1e-300);
}

// κ/(κ²/4 + x²) scattering denominator, shared by Eq.-style rates.
double sideband_lorentzian(double kappa, double x) {
    return kappa / (kappa * kappa / 4.0 + x * x);
}

} // namespace

double thermal_occupancy(double omega_m, double temperature_k,
                         OccupancyConvention convention) {
    if (omega_m <= 0.0) throw ConfigError("thermal_occupancy: omega_m must be > 0");
    if (temperature_k < 0.0) throw ConfigError("thermal_occupancy: negative temperature");
    if (temperature_k == 0.0) return 0.0;
    const double x = hbar * omega_m / (k_boltzmann * temperature_k);
    switch (convention) {
    case OccupancyConvention::RayleighJeans:
        return 1.0 / x;
    case OccupancyConvention::Bose:
        return 1.0 / std::expm1(x);
    }
    return 0.0;
}

void SystemParams::validate() const {
    if (kappa <= 0.0 || kappa_ex < 0.0 || kappa_0 < 0.0)
        throw ConfigError("SystemParams: optical rates must be non-negative with kappa > 0");
    if (!close_rel(kappa, kappa_ex + kappa_0, invariant_rtol))
        throw ConfigError("SystemParams: kappa != kappa_ex + kappa_0");
    if (omega_m <= 0.0) throw ConfigError("SystemParams: omega_m must be > 0");
    if (gamma_int < 0.0 || gamma_gas < 0.0 || gamma_m < 0.0)
        throw ConfigError("SystemParams: mechanical rates must be non-negative");
    if (!close_rel(gamma_m, gamma_int + gamma_gas, invariant_rtol))
        throw ConfigError("SystemParams: gamma_m != gamma_int + gamma_gas");
    if (g0 < 0.0) throw ConfigError("SystemParams: g0 must be non-negative");
    if (temperature < 0.0) throw ConfigError("SystemParams: negative temperature");
    const double expected = thermal_occupancy(omega_m, temperature, convention);
    if (!close_rel(n_th, expected, 1e-6))
        throw ConfigError("SystemParams: n_th inconsistent with temperature under the chosen convention");
    if (alpha_opt < 0.0 || beta_mech < 0.0)
        throw ConfigError("SystemParams: noise quanta must be non-negative");
}

SystemParams make_system_params(double kappa_ex, double kappa_0, double omega_m,
                                double gamma_int, double gamma_gas, double g0,
                                double temperature_k,
                                OccupancyConvention convention) {
    SystemParams p;
    p.kappa_ex = kappa_ex;
    p.kappa_0 = kappa_0;
    p.kappa = kappa_ex + kappa_0;
    p.omega_m = omega_m;
    p.gamma_int = gamma_int;
    p.gamma_gas = gamma_gas;
    p.gamma_m = gamma_int + gamma_gas;
    p.g0 = g0;
    p.temperature = temperature_k;
    p.convention = convention;
    p.n_th = thermal_occupancy(omega_m, temperature_k, convention);
    p.validate();
    return p;
}

void DriveConfig::validate() const {
    if (n_c < 0.0 || n_b < 0.0)
        throw ConfigError("DriveConfig: photon numbers must be non-negative");
}

double cooling_tone_detuning(const SystemParams& p, const DriveConfig& d) {
    return d.delta_mean - p.omega_m - d.delta;
}

DriveConfig with_cooling_tone_detuning(const SystemParams& p, DriveConfig d,
                                       double delta_c) {
    d.delta_mean = delta_c + p.omega_m + d.delta;
    return d;
}

ComplexResponse chi_c(const SystemParams& p, const DriveConfig& d, double omega) {
    const std::complex<double> inv(p.kappa / 2.0, -(omega + d.delta_mean));
    if (inv == std::complex<double>(0.0, 0.0)) return {{}, false};
    return {1.0 / inv, true};
}

ComplexResponse chi_m(const SystemParams& p, const DriveConfig& d, double omega) {
    const std::complex<double> inv(p.gamma_m / 2.0, -(omega + d.delta));
    if (inv == std::complex<double>(0.0, 0.0)) return {{}, false};
    return {1.0 / inv, true};
}

ScatteringRates scattering_rates(const SystemParams& p, const DriveConfig& d) {
    const double g0sq = p.g0 * p.g0;
    ScatteringRates r;
    r.gamma_b = d.n_b * g0sq * sideband_lorentzian(p.kappa, d.delta_mean + d.delta);
    r.gamma_c = d.n_c * g0sq * sideband_lorentzian(p.kappa, d.delta_mean - d.delta);
    return r;
}

RamanRates raman_rates(const SystemParams& p, const DriveConfig& d) {
    const double g0sq = p.g0 * p.g0;
    RamanRates r;
    r.gamma_as_b = d.n_b * g0sq *
                   sideband_lorentzian(p.kappa, d.delta_mean + d.delta + 2.0 * p.omega_m);
    r.gamma_s_c = d.n_c * g0sq *
                  sideband_lorentzian(p.kappa, d.delta_mean - d.delta - 2.0 * p.omega_m);
    return r;
}

double spring_shift(const SystemParams& p, const DriveConfig& d) {
    const double g0sq = p.g0 * p.g0;
    const double xb = d.delta_mean + d.delta;
    const double xc = d.delta_mean - d.delta;
    return g0sq * (d.n_b * xb / (p.kappa * p.kappa / 4.0 + xb * xb) +
                   d.n_c * xc / (p.kappa * p.kappa / 4.0 + xc * xc));
}

double final_occupancy(const SystemParams& p, const DriveConfig& d) {
    const ScatteringRates r = scattering_rates(p, d);
    const double gamma_eff = p.gamma_m + r.gamma_opt();
    if (gamma_eff <= 0.0)
        throw InstabilityError("final_occupancy: gamma_eff <= 0 (non-cooling configuration)");
    return (p.gamma_m * p.n_th + r.gamma_b) / gamma_eff;
}

double min_occupancy_from_rates(double gamma_b, double gamma_c,
                                double gamma_as_b, double gamma_s_c) {
    const double net = gamma_as_b + gamma_c - gamma_b - gamma_s_c;
    const double heating = gamma_s_c + gamma_b;
    if (heating == 0.0 && net > 0.0) return 0.0;
    if (net <= 0.0)
        throw InstabilityError("min_occupancy: net optomechanical damping <= 0");
    return heating / net;
}

double min_occupancy(const SystemParams& p, const DriveConfig& d) {
    const ScatteringRates s = scattering_rates(p, d);
    const RamanRates r = raman_rates(p, d);
    return min_occupancy_from_rates(s.gamma_b, s.gamma_c, r.gamma_as_b, r.gamma_s_c);
}

double dressed_zpf(const SystemParams& p, const DriveConfig& d) {
    const ScatteringRates r = scattering_rates(p, d);
    const double gamma_eff = p.gamma_m + r.gamma_opt();
    if (gamma_eff <= 0.0)
        throw InstabilityError("dressed_zpf: gamma_eff <= 0");
    return (p.alpha_opt * r.gamma_opt() + p.gamma_m * p.beta_mech) / gamma_eff;
}

double occupancy_with_heating(const SystemParams& p, const DriveConfig& d,
                              const HeatingModel& heating) {
    const ScatteringRates r = scattering_rates(p, d);
    const double gamma_eff = p.gamma_m + r.gamma_opt();
    if (gamma_eff <= 0.0)
        throw InstabilityError("occupancy_with_heating: gamma_eff <= 0");
    const double n_bath = p.n_th + heating.bath_increase(d.n_c);
    return (n_bath * p.gamma_m + r.gamma_b) / gamma_eff;
}

DressedState dressed_state(const SystemParams& p, const DriveConfig& d) {
    const ScatteringRates s = scattering_rates(p, d);
    const RamanRates rr = raman_rates(p, d);
    DressedState st;
    st.gamma_b = s.gamma_b;
    st.gamma_c = s.gamma_c;
    st.gamma_opt = s.gamma_opt();
    st.gamma_eff = p.gamma_m + st.gamma_opt;
    st.spring_shift = spring_shift(p, d);
    st.omega_eff = p.omega_m + st.spring_shift;
    st.gamma_as_b = rr.gamma_as_b;
    st.gamma_s_c = rr.gamma_s_c;
    st.stable = st.gamma_eff > 0.0;
    st.net_cooling = st.gamma_opt > 0.0;
    st.weak_coupling = std::abs(st.gamma_opt) / p.kappa <= 0.01;
    if (st.stable) {
        st.n_f = (p.gamma_m * p.n_th + s.gamma_b) / st.gamma_eff;
        st.beta_dressed = (p.alpha_opt * st.gamma_opt + p.gamma_m * p.beta_mech) / st.gamma_eff;
    } else {
        st.n_f = nan_value;
        st.beta_dressed = nan_value;
    }
    const double net_raman = rr.gamma_as_b + s.gamma_c - s.gamma_b - rr.gamma_s_c;
    if (net_raman > 0.0) {
        st.n_min = (rr.gamma_s_c + s.gamma_b) / net_raman;
    } else {
        st.n_min = nan_value;
    }
    return st;
}

TwoToneResponse exact_effective_susceptibility(const SystemParams& p,
                                               const DriveConfig& d,
                                               double omega) {
    using cd = std::complex<double>;
    const double g_c = p.g0 * std::sqrt(d.n_c);
    const double g_b = p.g0 * std::sqrt(d.n_b);

    const cd chic = chi_c(p, d, omega).value;                 // χ_c(ω)
    const cd chic_star_neg = std::conj(chi_c(p, d, -omega).value); // χ*_c(−ω)
    const cd chim_inv(p.gamma_m / 2.0, -(omega + d.delta));   // χ_m⁻¹(ω)
    const cd chim_star_inv_neg(p.gamma_m / 2.0, -(omega - d.delta)); // {χ*_m}⁻¹(−ω)

    const cd i(0.0, 1.0);
    const cd sigma = -i * (g_c * g_c * chic - g_b * g_b * chic_star_neg); // Σ(ω)
    // Σ*(−ω) built from the same cavity responses: χ_c(−ω) and χ*_c(ω).
    const cd chic_neg = chi_c(p, d, -omega).value;
    const cd sigma_star_neg =
        std::conj(-i * (g_c * g_c * chic_neg - g_b * g_b * std::conj(chic)));
    const cd pi_term = -i * g_c * g_b * (chic - chic_star_neg); // Π(ω)
    const double g2 = g_c * g_c - g_b * g_b;

    TwoToneResponse out;
    out.self_energy = sigma;
    out.cross_coupling = pi_term;
    out.g_squared = g2;

    out.denominator = chim_inv * chim_star_inv_neg
                    + i * chim_star_inv_neg * sigma
                    - i * chim_inv * sigma_star_neg
                    + g2 * g2 * chic * chic_star_neg;

    out.drive_matrix[0][0] = chic * g_c * (chim_star_inv_neg + g2 * chic_star_neg);
    out.drive_matrix[0][1] = chic_star_neg * g_b * (chim_star_inv_neg + g2 * chic);
    out.drive_matrix[1][0] = chic * g_b * (chim_inv + g2 * chic_star_neg);
    out.drive_matrix[1][1] = chic_star_neg * g_c * (chim_inv + g2 * chic);

    const double n_mag = std::abs(out.denominator);
    if (!(n_mag > std::numeric_limits<double>::min())) {
        out.finite = false;
        out.chi_meff = cd(nan_value, nan_value);
        return out;
    }
    out.chi_meff = (chim_star_inv_neg - i * sigma_star_neg) / out.denominator;
    return out;
}

} // namespace omcool::model
