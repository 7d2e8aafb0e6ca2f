// spectra.hpp — analytic heterodyne and displacement spectra, noisy-spectrum
// synthesis, and the CSV + JSON-sidecar serialization of spectra.
//
// Spectrum grids are in ordinary frequency (Hz); PSD values are normalized to
// the shot-noise floor (dimensionless) for heterodyne spectra and to x_zpf²
// for displacement spectra.

#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "omcool/model.hpp"

namespace omcool::spectra {

struct AcquisitionMeta {
    double rbw_hz = 0.0;        // resolution bandwidth (grid spacing)
    std::int64_t averages = 1;  // number of averaged periodograms
    double delta_lo_hz = 0.0;   // LO offset from the tone-pair mean
    model::DriveConfig drive{}; // drive snapshot (angular units)
    bool shot_reference = false;
};

struct Spectrum {
    std::vector<double> freq_hz; // strictly increasing, uniform
    std::vector<double> psd;
    AcquisitionMeta meta{};

    std::size_t size() const { return freq_hz.size(); }
    double bin_width_hz() const;
    void validate() const; // uniformity to 1e-9 relative, psd ≥ 0
};

std::vector<double> uniform_grid(double f_lo_hz, double f_hi_hz, std::size_t points);

// Shot-noise-normalized heterodyne PSD, S_I(Ω) with sidebands at Δ_LO ± δ.
// Requires 0 ≤ eta ≤ 1 and the ordering 0 < −δ < Δ_LO; rejects grids that do
// not cover both sideband centers ± 5Γ_eff.
Spectrum heterodyne_psd(const model::SystemParams& p, const model::DriveConfig& d,
                        double n_f, double eta, std::vector<double> grid_hz);

// Two-sided displacement PSD in units of x_zpf², lobes at ±Ω_eff.
Spectrum displacement_psd(const model::SystemParams& p, const model::DriveConfig& d,
                          std::vector<double> grid_hz);

// Draws each bin around the analytic value with relative standard deviation
// 1/√averages (Gaussian model of an averaged periodogram). Deterministic for
// a fixed seed, independent of platform.
Spectrum synthesize(const Spectrum& analytic, std::int64_t averages, std::uint64_t seed);

// Flat shot-noise reference of the same statistics (mean 1 per bin).
Spectrum shot_reference(std::vector<double> grid_hz, std::int64_t averages,
                        std::uint64_t seed);

// Linear rise of the normalized noise floor with reflected optical power.
struct NoiseFloorModel {
    double intercept = 1.0;   // shot-noise level
    double slope_per_w = 0.0; // floor increase per watt reflected
};
Spectrum apply_noise_floor(Spectrum s, const NoiseFloorModel& model,
                           double reflected_power_w);

// Bin-wise division by a shot-noise reference (detector-gain ripple removal).
Spectrum normalize_to_reference(const Spectrum& measurement, const Spectrum& reference);

// CSV with header `freq_hz,psd_sn`, 17 significant digits, LF endings, plus a
// `<file>.meta.json` sidecar. Round-trips bit-exactly.
void write_csv(const Spectrum& s, const std::filesystem::path& file);
Spectrum read_csv(const std::filesystem::path& file);
std::filesystem::path sidecar_path(const std::filesystem::path& csv_file);

} // namespace omcool::spectra
