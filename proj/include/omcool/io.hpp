// io.hpp — configuration files, JSON serialization of results, report
// rendering and atomic file writes.
//
// All config and output values are in external units (Hz, K, W); conversion
// to the internal angular convention happens exactly once, here. Config
// schemas are strict: unknown keys are rejected.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include "omcool/fitting.hpp"
#include "omcool/model.hpp"
#include "omcool/spectra.hpp"
#include "omcool/sweeps.hpp"
#include "omcool/thermometry.hpp"

namespace omcool::io {

struct GridSpec {
    double f_lo_hz = 0.0;
    double f_hi_hz = 0.0;
    std::size_t points = 0;
};

struct SynthSettings {
    std::optional<GridSpec> grid; // auto-derived from the drive when absent
    std::int64_t averages = 1;
    double eta = 1.0;
    std::optional<model::HeatingModel> heating;
    std::optional<double> n_f; // override; defaults to the model occupancy
    std::optional<spectra::NoiseFloorModel> noise_floor;
    double reflected_power_w = 0.0;
    bool shot_reference = false;
};

struct SweepGridSpec {
    sweep::SweptVariable variable = sweep::SweptVariable::CoolingDetuning;
    double from = 0.0; // Hz for detuning, photon number for power
    double to = 0.0;
    std::size_t points = 0;
};

struct RunConfig {
    model::SystemParams params{};
    std::optional<model::DriveConfig> drive;
    std::optional<SynthSettings> synth;
    std::optional<SweepGridSpec> sweep_grid;
    std::filesystem::path output_dir = ".";
    std::uint64_t seed = 1;
    fit::FitOptions fit_options{};
};

RunConfig load_run_config(const std::filesystem::path& file);
sweep::SweepConfig load_sweep_config(const std::filesystem::path& file);

// Builds a grid covering both sideband centers ± `halfwidths`·Γ_eff.
GridSpec auto_grid(const model::SystemParams& p, const model::DriveConfig& d,
                   double halfwidths = 10.0, std::size_t points = 4001);

// JSON forms of the result types (frequencies in Hz).
nlohmann::json to_json(const fit::LorentzianFitResult& fit);
fit::LorentzianFitResult fit_from_json(const nlohmann::json& j);
nlohmann::json to_json(const fit::CoherentResponseFit& fit);
nlohmann::json to_json(const thermo::OccupancyEstimate& est);
nlohmann::json to_json(const thermo::Calibration& cal);
thermo::Calibration calibration_from_json(const nlohmann::json& j);
thermo::NoiseAnchor anchor_from_json(const nlohmann::json& j);
nlohmann::json to_json(const model::HeatingModel& h);
nlohmann::json to_json(const sweep::SnrModel& m);
nlohmann::json to_json(const model::DressedState& st);
nlohmann::json to_json(const sweep::SweepRunRecord& rec);
nlohmann::json to_json(const sweep::TheoryTable& table);
nlohmann::json to_json(const sweep::SweepResult& result);

// Plot-ready CSV views.
std::string theory_table_csv(const sweep::TheoryTable& table);
std::string theory_csv_from_summary(const nlohmann::json& summary);
std::string runs_csv_from_summary(const nlohmann::json& summary);
// Run ledger: one JSON object per line, in run-id order.
std::string sweep_ledger_jsonl(const sweep::SweepResult& result);
// Human-readable rendering of a serialized sweep summary.
std::string render_report_text(const nlohmann::json& summary);

// Write-temp-then-rename so interrupted runs never leave truncated files.
void write_text_atomic(const std::filesystem::path& file, const std::string& content);

} // namespace omcool::io
