#include "omcool/sweeps.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace omcool::sweep {

namespace {

constexpr double nan_value = std::numeric_limits<double>::quiet_NaN();
constexpr double condition_threshold = 1e8;

struct WeightedDesign {
    // columns of the weighted design matrix [√w·n_c, √w·n_c²] and target √w·y
    std::vector<double> u, v, y;
};

// 2-norm condition number of the column-normalized two-column design.
double design_condition(const WeightedDesign& d) {
    double uu = 0.0, vv = 0.0, uv = 0.0;
    for (std::size_t i = 0; i < d.u.size(); ++i) {
        uu += d.u[i] * d.u[i];
        vv += d.v[i] * d.v[i];
        uv += d.u[i] * d.v[i];
    }
    if (!(uu > 0.0) || !(vv > 0.0)) return std::numeric_limits<double>::infinity();
    const double rho = std::abs(uv) / std::sqrt(uu * vv);
    if (rho >= 1.0) return std::numeric_limits<double>::infinity();
    return std::sqrt((1.0 + rho) / (1.0 - rho));
}

struct LinearFit1 {
    double coeff = 0.0;
    double sigma = 0.0;
};

LinearFit1 solve_single(const std::vector<double>& x, const std::vector<double>& y) {
    double xx = 0.0, xy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        xx += x[i] * x[i];
        xy += x[i] * y[i];
    }
    LinearFit1 f;
    f.coeff = xy / xx;
    double ss = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double r = y[i] - f.coeff * x[i];
        ss += r * r;
    }
    const double dof = static_cast<double>(x.size()) - 1.0;
    f.sigma = dof > 0.0 ? std::sqrt(ss / dof / xx) : 0.0;
    return f;
}

} // namespace

TheoryTable theory_curves(const model::SystemParams& params,
                          const model::DriveConfig& base, SweptVariable variable,
                          const std::vector<double>& grid,
                          const std::optional<model::HeatingModel>& heating) {
    TheoryTable table;
    table.variable = variable;
    table.rows.reserve(grid.size());
    for (double x : grid) {
        model::DriveConfig d = base;
        if (variable == SweptVariable::CoolingPhotons)
            d.n_c = x;
        else
            d = with_cooling_tone_detuning(params, d, x);
        const model::ScatteringRates r = scattering_rates(params, d);
        TheoryPoint pt;
        pt.x = x;
        pt.gamma_eff = params.gamma_m + r.gamma_opt();
        pt.spring_shift = spring_shift(params, d);
        if (pt.gamma_eff > 0.0) {
            pt.n_f = heating ? occupancy_with_heating(params, d, *heating)
                             : final_occupancy(params, d);
        } else {
            pt.n_f = nan_value;
        }
        table.rows.push_back(pt);
    }
    return table;
}

const thermo::OccupancyEstimate* SweepRunRecord::best_occupancy() const {
    if (occ_calibrated) return &*occ_calibrated;
    if (occ_anchored) return &*occ_anchored;
    if (occ_asymmetry) return &*occ_asymmetry;
    return nullptr;
}

model::HeatingModel fit_heating(const std::vector<SweepRunRecord>& runs,
                                const model::SystemParams& params) {
    std::vector<double> n_c_values, y_values, sigmas;
    for (const SweepRunRecord& run : runs) {
        const thermo::OccupancyEstimate* occ = run.best_occupancy();
        if (!occ || run.two_tone()) continue;
        const double gamma_eff = run.fit.gamma_eff;
        n_c_values.push_back(run.drive.n_c);
        y_values.push_back(occ->n_f * gamma_eff / params.gamma_m - params.n_th);
        sigmas.push_back(0.5 * (occ->sigma_lo + occ->sigma_hi) * gamma_eff /
                         params.gamma_m);
    }
    if (y_values.size() < 4)
        throw std::invalid_argument("fit_heating: needs at least 4 single-tone runs");
    const auto [lo, hi] = std::minmax_element(n_c_values.begin(), n_c_values.end());
    if (!(*lo > 0.0) || *hi / *lo < 3.0)
        throw std::invalid_argument("fit_heating: runs must span a factor >= 3 in n_c");

    // Weighted design; fall back to uniform weights when any sigma is zero.
    const bool all_positive =
        std::all_of(sigmas.begin(), sigmas.end(), [](double s) { return s > 0.0; });
    WeightedDesign wd;
    wd.u.resize(y_values.size());
    wd.v.resize(y_values.size());
    wd.y.resize(y_values.size());
    for (std::size_t i = 0; i < y_values.size(); ++i) {
        const double sw = all_positive ? 1.0 / sigmas[i] : 1.0;
        wd.u[i] = sw * n_c_values[i];
        wd.v[i] = sw * n_c_values[i] * n_c_values[i];
        wd.y[i] = sw * y_values[i];
    }

    if (design_condition(wd) > condition_threshold)
        throw DegenerateRegressionError(
            "fit_heating: n_c span cannot separate alpha1 from alpha2");

    // Unconstrained 2x2 weighted normal equations.
    double uu = 0.0, vv = 0.0, uv = 0.0, uy = 0.0, vy = 0.0;
    for (std::size_t i = 0; i < wd.y.size(); ++i) {
        uu += wd.u[i] * wd.u[i];
        vv += wd.v[i] * wd.v[i];
        uv += wd.u[i] * wd.v[i];
        uy += wd.u[i] * wd.y[i];
        vy += wd.v[i] * wd.y[i];
    }
    const double det = uu * vv - uv * uv;
    double a1 = (uy * vv - vy * uv) / det;
    double a2 = (vy * uu - uy * uv) / det;

    // Unconstrained covariance, scaled by residual variance.
    double ss = 0.0;
    for (std::size_t i = 0; i < wd.y.size(); ++i) {
        const double r = wd.y[i] - a1 * wd.u[i] - a2 * wd.v[i];
        ss += r * r;
    }
    const double dof = static_cast<double>(wd.y.size()) - 2.0;
    const double s2 = dof > 0.0 ? ss / dof : 0.0;
    const double sigma_a1_unc = std::sqrt(std::max(0.0, vv / det * s2));
    const double sigma_a2_unc = std::sqrt(std::max(0.0, uu / det * s2));

    model::HeatingModel h;
    if (a1 >= 0.0 && a2 >= 0.0) {
        h.alpha1 = a1;
        h.alpha2 = a2;
        h.alpha1_sigma = sigma_a1_unc;
        h.alpha2_sigma = sigma_a2_unc;
        return h;
    }

    // Projection: clip the negative coefficient at zero and refit the other.
    if (a1 < 0.0 && a2 < 0.0) {
        h.alpha1_sigma = sigma_a1_unc;
        h.alpha2_sigma = sigma_a2_unc;
        return h; // both zero
    }
    if (a1 < 0.0) {
        const LinearFit1 f = solve_single(wd.v, wd.y);
        h.alpha2 = std::max(0.0, f.coeff);
        h.alpha2_sigma = f.sigma;
        h.alpha1_sigma = sigma_a1_unc; // data-allowed range of the clipped term
    } else {
        const LinearFit1 f = solve_single(wd.u, wd.y);
        h.alpha1 = std::max(0.0, f.coeff);
        h.alpha1_sigma = f.sigma;
        h.alpha2_sigma = sigma_a2_unc;
    }
    return h;
}

double snr_theory(const model::SystemParams& params, double n_c, double delta_c,
                  const model::HeatingModel& heating, double eta) {
    const double half_kappa = params.kappa / 2.0;
    const double lorentz = half_kappa * half_kappa /
                           (half_kappa * half_kappa +
                            (delta_c + params.omega_m) * (delta_c + params.omega_m));
    const double u = n_c * params.vacuum_cooperativity() * lorentz;
    const double n_bath = params.n_th + heating.bath_increase(n_c);
    const double denom = (u + 1.0) * (u + 1.0);
    return 4.0 * n_bath * eta * u / denom;
}

SnrModel fit_snr(const std::vector<SweepRunRecord>& runs,
                 const model::SystemParams& params,
                 const std::optional<model::HeatingModel>& heating) {
    const model::HeatingModel h = heating.value_or(model::HeatingModel{});
    std::vector<double> m, s;
    for (const SweepRunRecord& run : runs) {
        if (run.two_tone()) continue;
        const double delta_c = cooling_tone_detuning(params, run.drive);
        m.push_back(snr_theory(params, run.drive.n_c, delta_c, h, 1.0));
        s.push_back(run.snr);
    }
    if (m.size() < 2)
        throw std::invalid_argument("fit_snr: needs at least 2 single-tone runs");

    double mm = 0.0, ms = 0.0;
    for (std::size_t i = 0; i < m.size(); ++i) {
        mm += m[i] * m[i];
        ms += m[i] * s[i];
    }
    if (!(mm > 0.0))
        throw DegenerateRegressionError("fit_snr: model predicts zero SNR everywhere");
    const double eta = ms / mm;
    if (!(eta > 0.0))
        throw DegenerateRegressionError("fit_snr: measured SNR consistent with zero");

    double ss = 0.0;
    for (std::size_t i = 0; i < m.size(); ++i) {
        const double r = s[i] - eta * m[i];
        ss += r * r;
    }
    const double dof = static_cast<double>(m.size()) - 1.0;

    SnrModel out;
    out.eta = eta;
    out.eta_sigma = dof > 0.0 ? std::sqrt(ss / dof / mm) : 0.0;
    out.heating = h;
    out.c0 = params.vacuum_cooperativity();
    return out;
}

namespace {

// Drive metadata stored with a spectrum must agree with the sweep config.
void check_drive_consistency(const model::DriveConfig& config_drive,
                             const spectra::Spectrum& s) {
    const model::DriveConfig& meta = s.meta.drive;
    if (meta.delta_lo == 0.0 && meta.delta == 0.0) return; // no snapshot stored
    auto mismatch = [](double a, double b) {
        return std::abs(a - b) > 1e-6 * std::max({std::abs(a), std::abs(b), 1.0});
    };
    if (mismatch(meta.delta_lo, config_drive.delta_lo) ||
        mismatch(meta.delta, config_drive.delta))
        throw ConfigError("spectrum drive snapshot (delta, delta_lo) disagrees with sweep config");
}

} // namespace

SweepResult run_sweep(const SweepConfig& config) {
    SweepResult result;
    std::vector<SweepRunConfig> ordered = config.runs;
    std::sort(ordered.begin(), ordered.end(),
              [](const SweepRunConfig& a, const SweepRunConfig& b) { return a.id < b.id; });

    for (const SweepRunConfig& rc : ordered) {
        try {
            SweepRunRecord rec;
            rec.id = rc.id;
            rec.drive = rc.drive;
            rec.input_power_w = rc.input_power_w;
            rec.reflected_power_w = rc.reflected_power_w;
            rec.session_tag = rc.session_tag.empty() ? config.session_tag : rc.session_tag;

            const spectra::Spectrum spectrum = spectra::read_csv(rc.spectrum);
            check_drive_consistency(rec.drive, spectrum);

            if (rc.coherent_response) {
                const fit::CoherentTrace trace = fit::read_trace_csv(*rc.coherent_response);
                fit::CoherentInit init;
                init.kappa = config.params.kappa;
                init.kappa_ex = config.params.kappa_ex;
                init.delta_c = cooling_tone_detuning(config.params, rec.drive);
                init.coupling_rate = config.params.g0 * std::sqrt(rec.drive.n_c);
                init.omega_m = config.params.omega_m;
                init.gamma_m = config.params.gamma_m;
                rec.response_fit = fit::fit_coherent_response(trace, init, config.fit_options);
                rec.drive = with_cooling_tone_detuning(config.params, rec.drive,
                                                       rec.response_fit->delta_c);
            }

            const fit::PeakMode mode =
                rec.two_tone() ? fit::PeakMode::Double : fit::PeakMode::Single;
            rec.fit = fit::fit_lorentzians(spectrum, mode, {}, config.fit_options);
            rec.snr = rec.fit.peak_height_1();

            if (rec.two_tone()) {
                thermo::AsymmetryResult asym = thermo::occupancy_from_asymmetry(
                    rec.fit, config.params, rec.drive, rec.id, rec.session_tag);
                rec.occ_asymmetry = asym.occupancy;
                rec.calibration = asym.calibration;
            }
            result.runs.push_back(std::move(rec));
        } catch (const std::exception& e) {
            result.failures.push_back({rc.id, e.what()});
        }
    }

    // Pool the two-tone calibrations.
    std::vector<thermo::Calibration> cals;
    for (const SweepRunRecord& r : result.runs)
        if (r.calibration) cals.push_back(*r.calibration);
    if (cals.size() >= 2) {
        result.pooled_calibration = thermo::pool_calibration(cals);
    } else if (cals.size() == 1) {
        result.pooled_calibration = cals.front();
    }

    // Anchor for the mechanical noise thermometry.
    std::optional<thermo::NoiseAnchor> anchor;
    if (config.anchor) {
        const auto it = std::find_if(result.runs.begin(), result.runs.end(),
                                     [&](const SweepRunRecord& r) {
                                         return r.id == config.anchor->run_id;
                                     });
        if (it == result.runs.end() || it->two_tone()) {
            result.failures.push_back(
                {config.anchor->run_id, "anchor run missing, failed, or not single-tone"});
        } else {
            try {
                thermo::NoiseAnchor a = thermo::anchor_from_fit(
                    it->fit, config.params, it->drive, config.anchor->temperature_k);
                if (config.anchor->gamma_m) a.gamma_m = *config.anchor->gamma_m;
                anchor = a;
            } catch (const std::exception& e) {
                result.failures.push_back({config.anchor->run_id, e.what()});
            }
        }
    }

    for (SweepRunRecord& rec : result.runs) {
        if (rec.two_tone()) continue;
        if (result.pooled_calibration) {
            try {
                rec.occ_calibrated = thermo::occupancy_from_calibration(
                    rec.fit, config.params, rec.drive, *result.pooled_calibration, rec.id);
            } catch (const std::exception& e) {
                result.failures.push_back({rec.id, e.what()});
            }
        }
        if (anchor) {
            try {
                rec.occ_anchored = thermo::occupancy_noise_anchored(
                    rec.fit, config.params, rec.drive, *anchor, rec.id);
            } catch (const std::exception& e) {
                result.failures.push_back({rec.id, e.what()});
            }
        }
    }

    if (config.regress_heating) {
        try {
            result.heating = fit_heating(result.runs, config.params);
        } catch (const std::exception& e) {
            result.heating_error = e.what();
        }
    }
    if (config.regress_snr) {
        try {
            result.snr = fit_snr(result.runs, config.params,
                                 result.heating ? std::optional<model::HeatingModel>(
                                                      *result.heating)
                                                : std::nullopt);
        } catch (const std::exception& e) {
            result.snr_error = e.what();
        }
    }

    // Theory table across the swept range.
    if (!result.runs.empty() && config.theory_points >= 2) {
        std::vector<double> xs;
        for (const SweepRunRecord& r : result.runs) {
            xs.push_back(config.mode == SweptVariable::CoolingPhotons
                             ? r.drive.n_c
                             : cooling_tone_detuning(config.params, r.drive));
        }
        const auto [lo, hi] = std::minmax_element(xs.begin(), xs.end());
        if (*hi > *lo) {
            std::vector<double> grid(config.theory_points);
            const double step = (*hi - *lo) / static_cast<double>(config.theory_points - 1);
            for (std::size_t i = 0; i < grid.size(); ++i)
                grid[i] = *lo + step * static_cast<double>(i);
            model::DriveConfig base =
                result.runs.front().drive; // deterministic: lowest run id
            result.theory =
                theory_curves(config.params, base, config.mode, grid,
                              result.heating ? std::optional<model::HeatingModel>(
                                                   *result.heating)
                                             : std::nullopt);
        }
    }
    return result;
}

} // namespace omcool::sweep
