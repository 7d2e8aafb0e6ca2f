// sweeps.hpp — power-sweep and detuning-sweep orchestration: per-run
// fit + thermometry pipeline, pooled calibration, heating-model regression
// and detection-efficiency (SNR) regression.

#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "omcool/fitting.hpp"
#include "omcool/model.hpp"
#include "omcool/thermometry.hpp"

namespace omcool::sweep {

enum class SweptVariable { CoolingPhotons, CoolingDetuning };

struct TheoryPoint {
    double x = 0.0;            // n̄_c (dimensionless) or Δ_c (rad/s)
    double gamma_eff = 0.0;    // rad/s
    double spring_shift = 0.0; // rad/s
    double n_f = 0.0;          // NaN where the configuration is non-cooling
};

struct TheoryTable {
    SweptVariable variable = SweptVariable::CoolingPhotons;
    std::vector<TheoryPoint> rows;
};

// Evaluates the closed-form model over the grid; all other drive fields are
// taken from `base`. With a heating model, n_f includes the excess bath.
TheoryTable theory_curves(const model::SystemParams& params,
                          const model::DriveConfig& base, SweptVariable variable,
                          const std::vector<double>& grid,
                          const std::optional<model::HeatingModel>& heating = {});

struct SweepRunRecord {
    std::string id;
    model::DriveConfig drive{};
    fit::LorentzianFitResult fit{};
    std::optional<fit::CoherentResponseFit> response_fit;
    std::optional<thermo::OccupancyEstimate> occ_asymmetry; // two-tone runs
    std::optional<thermo::Calibration> calibration;         // two-tone runs
    std::optional<thermo::OccupancyEstimate> occ_calibrated; // single-tone runs
    std::optional<thermo::OccupancyEstimate> occ_anchored;   // single-tone runs
    double input_power_w = 0.0;
    double reflected_power_w = 0.0;
    double snr = 0.0; // fitted peak height above the fitted background
    std::string session_tag;

    bool two_tone() const { return drive.n_b > 0.0; }
    // Calibrated estimate when available, then anchored, then asymmetry.
    const thermo::OccupancyEstimate* best_occupancy() const;
};

// Weighted least squares of n̂_f·Γ_eff/Γ_m − n̄_th against α₁n̄_c + α₂n̄_c²
// with nonnegativity imposed by projection. Requires ≥ 4 usable runs spanning
// a factor ≥ 3 in n̄_c; throws DegenerateRegressionError when the design
// cannot separate the two coefficients (condition number > 1e8).
model::HeatingModel fit_heating(const std::vector<SweepRunRecord>& runs,
                                const model::SystemParams& params);

struct SnrModel {
    double eta = 0.0;
    double eta_sigma = 0.0;
    model::HeatingModel heating{};
    double c0 = 0.0; // vacuum cooperativity used in the model
};

// SNR = 4(n̄_th + α₁n̄_c + α₂n̄_c²) η u/(1+u)², u = n̄_c C₀ (κ/2)²/((κ/2)²+(Δ_c+Ω_m)²).
double snr_theory(const model::SystemParams& params, double n_c, double delta_c,
                  const model::HeatingModel& heating, double eta);

// Least squares over η against the measured peak heights; reuses `heating`
// when given (otherwise no excess heating is assumed).
SnrModel fit_snr(const std::vector<SweepRunRecord>& runs,
                 const model::SystemParams& params,
                 const std::optional<model::HeatingModel>& heating = {});

struct SweepRunConfig {
    std::string id;
    std::filesystem::path spectrum;
    std::optional<std::filesystem::path> coherent_response;
    model::DriveConfig drive{};
    double input_power_w = 0.0;
    double reflected_power_w = 0.0;
    std::string session_tag;
};

struct AnchorSpec {
    std::string run_id;
    double temperature_k = 0.0;
    std::optional<double> gamma_m; // rad/s; inferred from the anchor fit if absent
};

struct SweepConfig {
    model::SystemParams params{};
    std::string session_tag;
    SweptVariable mode = SweptVariable::CoolingPhotons;
    std::vector<SweepRunConfig> runs;
    std::optional<AnchorSpec> anchor;
    bool regress_heating = true;
    bool regress_snr = true;
    fit::FitOptions fit_options{};
    std::size_t theory_points = 201;
};

struct RunFailure {
    std::string id;
    std::string error;
};

struct SweepResult {
    std::vector<SweepRunRecord> runs; // in run-id order
    std::vector<RunFailure> failures;
    std::optional<thermo::Calibration> pooled_calibration;
    std::optional<model::HeatingModel> heating;
    std::optional<SnrModel> snr;
    std::optional<std::string> heating_error;
    std::optional<std::string> snr_error;
    TheoryTable theory{};
};

// Full pipeline: per-run coherent-response fit → spectrum fit → thermometry,
// then pooling and the global regressions. Per-run failures are isolated; the
// sweep continues and reports them.
SweepResult run_sweep(const SweepConfig& config);

} // namespace omcool::sweep
