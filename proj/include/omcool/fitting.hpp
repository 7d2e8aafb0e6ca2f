// fitting.hpp — Lorentzian sideband fits of heterodyne noise spectra and the
// coherent cavity response (OMIT) fit used to extract κ and Δ_c.
//
// The sideband fit implements S(ω) = c + Γ_eff A₁/(Γ_eff²/4 + (ω−ω₁)²)
// + Γ_eff A₂/(Γ_eff²/4 + (ω−ω₂)²) with one shared width. The fit is carried
// out on a median- and span-normalized copy of the data, which makes the
// estimator exactly equivariant under PSD rescaling and grid shifts.
//
// The coherent-response lineshape is the standard weak-probe reflection of a
// single-pump one-port cavity,
//   r(Ω) = 1 − κ_ex / (κ/2 − i(Ω+Δ_c) + g²/(Γ_m/2 − i(Ω−Ω_m))),
// fitted in magnitude squared with an overall scale.

#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "omcool/lm.hpp"
#include "omcool/spectra.hpp"

namespace omcool::fit {

enum class PeakMode { Single, Double };

struct FitOptions {
    double grad_tol = 1e-8;
    double step_tol = 1e-10;
    int max_iterations = 200;
    // Weight residuals by √averages from the spectrum metadata. With uniform
    // per-bin variance this only rescales the cost; covariance is scaled by
    // the residual variance either way.
    bool scale_weights_by_averages = false;
    // Double mode with the blue-probe area pinned to zero (its center is
    // frozen too; a zero-area Lorentzian has no center information).
    bool fix_area2_zero = false;
};

struct LorentzianInit {
    std::optional<double> background;
    std::optional<double> area_1, center_1; // rad/s
    std::optional<double> area_2, center_2;
    std::optional<double> gamma_eff;
};

struct LorentzianFitResult {
    PeakMode mode = PeakMode::Single;
    double background = 0.0; // c
    double area_1 = 0.0;     // A₁, cooling-tone sideband (lower center), rad/s
    double center_1 = 0.0;   // ω₁, rad/s
    double area_2 = 0.0;     // A₂, blue-probe sideband (Double mode)
    double center_2 = 0.0;   // ω₂
    double gamma_eff = 0.0;  // shared linewidth, rad/s

    std::vector<std::string> parameter_names; // fit order
    std::vector<double> values;
    std::vector<double> sigmas;
    std::vector<double> covariance; // row-major over all parameters
    double residual_norm = 0.0;     // √(Σ residual²)
    int iterations = 0;

    double sigma_of(const std::string& name) const;
    // Fitted peak height above the background, 4A/Γ_eff.
    double peak_height_1() const { return 4.0 * area_1 / gamma_eff; }
};

LorentzianFitResult fit_lorentzians(const spectra::Spectrum& spectrum, PeakMode mode,
                                    const std::optional<LorentzianInit>& init = {},
                                    const FitOptions& options = {});

// Coherent cavity response trace: |r|² versus probe offset from the pump.
struct CoherentTrace {
    std::vector<double> freq_hz;
    std::vector<double> response;
};

struct CoherentInit {
    double scale = 1.0;
    double kappa = 0.0;         // rad/s
    double kappa_ex = 0.0;
    double delta_c = 0.0;       // rad/s, sign taken as given
    double coupling_rate = 0.0; // g = g₀√n̄_c
    double omega_m = 0.0;
    double gamma_m = 0.0;       // held fixed during the fit
};

struct CoherentResponseFit {
    double kappa = 0.0, kappa_sigma = 0.0;
    double kappa_ex = 0.0, kappa_ex_sigma = 0.0;
    double delta_c = 0.0, delta_c_sigma = 0.0; // sigma floored at 2π × 10 MHz
    double coupling_rate = 0.0, coupling_rate_sigma = 0.0;
    double omega_m = 0.0, omega_m_sigma = 0.0;
    double scale = 0.0, scale_sigma = 0.0;
    double residual_norm = 0.0;
    int iterations = 0;
    bool ambiguous_sign = false; // trace fits ±Δ_c equally well; sign not guessed
};

CoherentResponseFit fit_coherent_response(const CoherentTrace& trace,
                                          const CoherentInit& init,
                                          const FitOptions& options = {});

// The adopted reflection model, |r(Ω)|², for synthesis and testing.
std::vector<double> omit_reflection_psd(double kappa, double kappa_ex, double delta_c,
                                        double coupling_rate, double omega_m,
                                        double gamma_m,
                                        const std::vector<double>& freq_hz);

// Trace serialization: CSV with header `freq_hz,response`, same dialect as
// spectrum files.
void write_trace_csv(const CoherentTrace& trace, const std::filesystem::path& file);
CoherentTrace read_trace_csv(const std::filesystem::path& file);

} // namespace omcool::fit
