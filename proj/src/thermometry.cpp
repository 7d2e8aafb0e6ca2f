#include "omcool/thermometry.hpp"

#include <algorithm>
#include <cmath>

namespace omcool::thermo {

namespace {

int param_index(const fit::LorentzianFitResult& fit, const std::string& name) {
    for (std::size_t i = 0; i < fit.parameter_names.size(); ++i)
        if (fit.parameter_names[i] == name) return static_cast<int>(i);
    throw std::invalid_argument("fit result lacks parameter " + name);
}

double cov_of(const fit::LorentzianFitResult& fit, const std::string& a,
              const std::string& b) {
    const int ia = param_index(fit, a);
    const int ib = param_index(fit, b);
    const int n = static_cast<int>(fit.parameter_names.size());
    return fit.covariance[static_cast<std::size_t>(ia * n + ib)];
}

// Asymmetric bounds from the two one-sided detuning shifts plus a symmetric
// statistical sigma, combined in quadrature.
void combine_detuning(double sigma_stat, double shift_plus, double shift_minus,
                      double& sigma_lo, double& sigma_hi) {
    const double up = std::max({0.0, shift_plus, shift_minus});
    const double down = std::max({0.0, -shift_plus, -shift_minus});
    sigma_hi = std::hypot(sigma_stat, up);
    sigma_lo = std::hypot(sigma_stat, down);
}

} // namespace

AsymmetryResult occupancy_from_asymmetry(const fit::LorentzianFitResult& fit,
                                         const model::SystemParams& params,
                                         const model::DriveConfig& drive,
                                         const std::string& run_id,
                                         const std::string& session_tag) {
    if (fit.mode != fit::PeakMode::Double)
        throw ConfigError("occupancy_from_asymmetry: requires a double-Lorentzian fit");
    const model::ScatteringRates rates = scattering_rates(params, drive);
    if (!(rates.gamma_b > 0.0) || !(rates.gamma_c > 0.0))
        throw ConfigError("occupancy_from_asymmetry: drive must have both tones on");

    const double u = fit.area_1 / rates.gamma_c; // ηn̄_f
    const double v = fit.area_2 / rates.gamma_b; // η(n̄_f+1)
    const double c_cal = v - u;
    if (c_cal <= 0.0)
        throw NegativeOccupancyError(
            "occupancy_from_asymmetry: A2/Gamma_b <= A1/Gamma_c (unphysical asymmetry)");
    const double n_f = u / c_cal;

    // Statistical part from the fit covariance of (A₁, A₂).
    const double dn_du = v / (c_cal * c_cal);
    const double dn_dv = -u / (c_cal * c_cal);
    const double dn_da1 = dn_du / rates.gamma_c;
    const double dn_da2 = dn_dv / rates.gamma_b;
    const double var_a1 = cov_of(fit, "area1", "area1");
    const double var_a2 = cov_of(fit, "area2", "area2");
    const double cov_a12 = cov_of(fit, "area1", "area2");
    const double var_n = dn_da1 * dn_da1 * var_a1 + dn_da2 * dn_da2 * var_a2 +
                         2.0 * dn_da1 * dn_da2 * cov_a12;
    const double sigma_n_stat = var_n > 0.0 ? std::sqrt(var_n) : 0.0;

    const double dc_da1 = -1.0 / rates.gamma_c;
    const double dc_da2 = 1.0 / rates.gamma_b;
    const double var_c = dc_da1 * dc_da1 * var_a1 + dc_da2 * dc_da2 * var_a2 +
                         2.0 * dc_da1 * dc_da2 * cov_a12;
    const double sigma_c_stat = var_c > 0.0 ? std::sqrt(var_c) : 0.0;

    // ±10 MHz detuning sensitivity by finite differences on the rates.
    double shift_n[2] = {0.0, 0.0};
    double shift_c[2] = {0.0, 0.0};
    for (int side = 0; side < 2; ++side) {
        model::DriveConfig d = drive;
        d.delta_mean += (side == 0 ? detuning_sigma : -detuning_sigma);
        const model::ScatteringRates r = scattering_rates(params, d);
        const double us = fit.area_1 / r.gamma_c;
        const double vs = fit.area_2 / r.gamma_b;
        shift_c[side] = (vs - us) - c_cal;
        shift_n[side] = (vs - us) > 0.0 ? us / (vs - us) - n_f : 0.0;
    }

    AsymmetryResult out;
    out.occupancy.n_f = n_f;
    combine_detuning(sigma_n_stat, shift_n[0], shift_n[1], out.occupancy.sigma_lo,
                     out.occupancy.sigma_hi);
    out.occupancy.method = "asymmetry";
    out.occupancy.area = fit.area_1;
    out.occupancy.gamma_s = rates.gamma_c;
    out.occupancy.delta_c = cooling_tone_detuning(params, drive);
    out.occupancy.run_id = run_id;

    out.calibration.c_cal = c_cal;
    const double shift_c_max = std::max(std::abs(shift_c[0]), std::abs(shift_c[1]));
    out.calibration.c_cal_sigma = std::hypot(sigma_c_stat, shift_c_max);
    if (!run_id.empty()) out.calibration.source_runs.push_back(run_id);
    out.calibration.session_tag = session_tag;
    out.calibration.method = Calibration::Method::AncillaryQuantum;
    return out;
}

Calibration pool_calibration(const std::vector<Calibration>& calibrations) {
    if (calibrations.size() < 2)
        throw std::invalid_argument("pool_calibration: needs at least two calibrations");
    const std::string& tag = calibrations.front().session_tag;
    for (const Calibration& c : calibrations) {
        if (c.session_tag != tag)
            throw MixedConfigurationsError(
                "pool_calibration: calibrations from different coupling sessions");
        if (!(c.c_cal > 0.0))
            throw ConfigError("pool_calibration: non-positive calibration coefficient");
    }
    const auto n = static_cast<double>(calibrations.size());
    double mean = 0.0;
    for (const Calibration& c : calibrations) mean += c.c_cal;
    mean /= n;
    double ss = 0.0;
    for (const Calibration& c : calibrations)
        ss += (c.c_cal - mean) * (c.c_cal - mean);
    const double sample_std = std::sqrt(ss / (n - 1.0));

    Calibration out;
    out.c_cal = mean;
    out.c_cal_sigma = sample_std / std::sqrt(n);
    out.session_tag = tag;
    out.method = Calibration::Method::AncillaryQuantum;
    for (const Calibration& c : calibrations)
        out.source_runs.insert(out.source_runs.end(), c.source_runs.begin(),
                               c.source_runs.end());
    return out;
}

OccupancyEstimate occupancy_from_calibration(const fit::LorentzianFitResult& fit,
                                             const model::SystemParams& params,
                                             const model::DriveConfig& drive,
                                             const Calibration& cal,
                                             const std::string& run_id) {
    if (fit.mode != fit::PeakMode::Single)
        throw ConfigError("occupancy_from_calibration: requires a single-tone fit");
    if (cal.method != Calibration::Method::AncillaryQuantum)
        throw ConfigError("occupancy_from_calibration: calibration must be ancillary-quantum");
    if (!(cal.c_cal > 0.0))
        throw ConfigError("occupancy_from_calibration: invalid calibration coefficient");

    const model::ScatteringRates rates = scattering_rates(params, drive);
    if (!(rates.gamma_c > 0.0))
        throw ConfigError("occupancy_from_calibration: cooling tone off");
    const double gamma_s = rates.gamma_c;
    const double n_f = fit.area_1 / (gamma_s * cal.c_cal);

    const double sigma_area = fit.sigma_of("area1");
    const double from_fit = sigma_area / (gamma_s * cal.c_cal);
    const double from_cal = n_f * cal.c_cal_sigma / cal.c_cal;
    const double sigma_stat = std::hypot(from_fit, from_cal);

    double shift[2] = {0.0, 0.0};
    for (int side = 0; side < 2; ++side) {
        model::DriveConfig d = drive;
        d.delta_mean += (side == 0 ? detuning_sigma : -detuning_sigma);
        const double g = scattering_rates(params, d).gamma_c;
        shift[side] = fit.area_1 / (g * cal.c_cal) - n_f;
    }

    OccupancyEstimate out;
    out.n_f = n_f;
    combine_detuning(sigma_stat, shift[0], shift[1], out.sigma_lo, out.sigma_hi);
    out.method = "calibrated";
    out.area = fit.area_1;
    out.gamma_s = gamma_s;
    out.delta_c = cooling_tone_detuning(params, drive);
    out.run_id = run_id;
    return out;
}

OccupancyEstimate occupancy_noise_anchored(const fit::LorentzianFitResult& fit,
                                           const model::SystemParams& params,
                                           const model::DriveConfig& drive,
                                           const NoiseAnchor& anchor,
                                           const std::string& run_id) {
    if (fit.mode != fit::PeakMode::Single)
        throw ConfigError("occupancy_noise_anchored: requires a single-tone fit");
    if (!(anchor.gamma_m > 0.0))
        throw AnchorInconsistentError(
            "occupancy_noise_anchored: anchor implies non-positive gamma_m");
    if (!(anchor.area_0 > 0.0) || !(anchor.gamma_s_0 > 0.0))
        throw ConfigError("occupancy_noise_anchored: invalid anchor areas/rates");

    const model::ScatteringRates rates = scattering_rates(params, drive);
    if (!(rates.gamma_c > 0.0))
        throw ConfigError("occupancy_noise_anchored: cooling tone off");
    const double n_th = model::thermal_occupancy(params.omega_m, anchor.temperature,
                                                 params.convention);
    // back-out of the anchor point's own optomechanical damping
    const double anchor_factor = anchor.gamma_m / (anchor.gamma_s_0 + anchor.gamma_m);
    auto estimate = [&](double gamma_s) {
        return (fit.area_1 / gamma_s) / (anchor.area_0 / anchor.gamma_s_0) * n_th *
               anchor_factor;
    };
    const double n_f = estimate(rates.gamma_c);

    const double sigma_stat = fit.sigma_of("area1") / fit.area_1 * n_f;
    double shift[2] = {0.0, 0.0};
    for (int side = 0; side < 2; ++side) {
        model::DriveConfig d = drive;
        d.delta_mean += (side == 0 ? detuning_sigma : -detuning_sigma);
        shift[side] = estimate(scattering_rates(params, d).gamma_c) - n_f;
    }

    OccupancyEstimate out;
    out.n_f = n_f;
    combine_detuning(sigma_stat, shift[0], shift[1], out.sigma_lo, out.sigma_hi);
    out.method = "noise-anchored";
    out.area = fit.area_1;
    out.gamma_s = rates.gamma_c;
    out.delta_c = cooling_tone_detuning(params, drive);
    out.run_id = run_id;
    return out;
}

NoiseAnchor anchor_from_fit(const fit::LorentzianFitResult& fit,
                            const model::SystemParams& params,
                            const model::DriveConfig& drive, double temperature_k) {
    const model::ScatteringRates rates = scattering_rates(params, drive);
    const double inferred = fit.gamma_eff - rates.gamma_c;
    if (inferred <= 0.0)
        throw AnchorInconsistentError(
            "anchor_from_fit: inferred gamma_m = gamma_eff - gamma_s <= 0");
    NoiseAnchor a;
    a.area_0 = fit.area_1;
    a.gamma_s_0 = rates.gamma_c;
    a.temperature = temperature_k;
    a.gamma_m = inferred;
    return a;
}

RateEstimate infer_gamma_m(const fit::LorentzianFitResult& fit, double gamma_c) {
    RateEstimate r;
    r.value = fit.gamma_eff - gamma_c;
    r.sigma = fit.sigma_of("gamma_eff");
    r.nonphysical = !(r.value > 0.0);
    return r;
}

RateEstimate infer_gamma_m(const fit::LorentzianFitResult& fit,
                           const model::SystemParams& params,
                           const model::DriveConfig& drive) {
    return infer_gamma_m(fit, scattering_rates(params, drive).gamma_c);
}

} // namespace omcool::thermo
