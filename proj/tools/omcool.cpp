// omcool — command-line surface of the sideband-cooling analysis toolkit.
//
// Subcommands: model, synth, fit, thermo, sweep, report. Every path is a thin
// adapter over the library; outputs are identical to direct API calls. Exit
// codes: 0 success, 1 usage/validation error, 2 computation failure.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "omcool/io.hpp"

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct CliError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void emit(const std::string& text, const std::string& out_file) {
    if (out_file.empty()) {
        std::cout << text;
        if (text.empty() || text.back() != '\n') std::cout << '\n';
    } else {
        omcool::io::write_text_atomic(out_file,
                                      text.empty() || text.back() == '\n' ? text
                                                                          : text + "\n");
    }
}

omcool::io::RunConfig load_config_or_die(const std::string& path) {
    if (path.empty()) throw CliError("--config is required for this subcommand");
    return omcool::io::load_run_config(path);
}

json load_json(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CliError("cannot open " + path);
    return json::parse(in);
}

int run_model(const std::string& config_path, const std::string& sweep_var,
              const std::string& out_file) {
    const omcool::io::RunConfig cfg = load_config_or_die(config_path);
    if (!cfg.drive) throw CliError("config lacks a 'drive' block");

    if (sweep_var.empty()) {
        const omcool::model::DressedState st =
            omcool::model::dressed_state(cfg.params, *cfg.drive);
        emit(omcool::io::to_json(st).dump(2), out_file);
        return 0;
    }

    if (!cfg.sweep_grid)
        throw CliError("config lacks a 'sweep_grid' block for --sweep");
    const omcool::io::SweepGridSpec& g = *cfg.sweep_grid;
    if (!sweep_var.empty()) {
        const bool want_power = sweep_var == "power";
        const bool have_power =
            g.variable == omcool::sweep::SweptVariable::CoolingPhotons;
        if (want_power != have_power)
            throw CliError("--sweep disagrees with the config's sweep_grid variable");
    }
    std::vector<double> grid(g.points);
    const bool detuning = g.variable == omcool::sweep::SweptVariable::CoolingDetuning;
    const double from = detuning ? omcool::hz_to_rad(g.from) : g.from;
    const double to = detuning ? omcool::hz_to_rad(g.to) : g.to;
    const double step = (to - from) / static_cast<double>(g.points - 1);
    for (std::size_t i = 0; i < grid.size(); ++i)
        grid[i] = from + step * static_cast<double>(i);

    std::optional<omcool::model::HeatingModel> heating;
    if (cfg.synth && cfg.synth->heating) heating = cfg.synth->heating;
    const omcool::sweep::TheoryTable table =
        omcool::sweep::theory_curves(cfg.params, *cfg.drive, g.variable, grid, heating);
    emit(omcool::io::theory_table_csv(table), out_file);
    return 0;
}

int run_synth(const std::string& config_path, std::optional<std::uint64_t> seed_flag,
              const std::string& out_file) {
    const omcool::io::RunConfig cfg = load_config_or_die(config_path);
    if (!cfg.drive) throw CliError("config lacks a 'drive' block");
    if (!cfg.synth) throw CliError("config lacks a 'synth' block");
    const omcool::io::SynthSettings& sy = *cfg.synth;
    const std::uint64_t seed = seed_flag.value_or(cfg.seed);

    const omcool::io::GridSpec gs =
        sy.grid ? *sy.grid : omcool::io::auto_grid(cfg.params, *cfg.drive);
    std::vector<double> grid =
        omcool::spectra::uniform_grid(gs.f_lo_hz, gs.f_hi_hz, gs.points);

    omcool::spectra::Spectrum result;
    if (sy.shot_reference) {
        result = omcool::spectra::shot_reference(std::move(grid), sy.averages, seed);
    } else {
        const double n_f =
            sy.n_f ? *sy.n_f
                   : (sy.heating
                          ? omcool::model::occupancy_with_heating(cfg.params, *cfg.drive,
                                                                  *sy.heating)
                          : omcool::model::final_occupancy(cfg.params, *cfg.drive));
        omcool::spectra::Spectrum analytic = omcool::spectra::heterodyne_psd(
            cfg.params, *cfg.drive, n_f, sy.eta, std::move(grid));
        if (sy.noise_floor)
            analytic = omcool::spectra::apply_noise_floor(analytic, *sy.noise_floor,
                                                          sy.reflected_power_w);
        result = omcool::spectra::synthesize(analytic, sy.averages, seed);
    }
    const fs::path path = out_file.empty() ? cfg.output_dir / "spectrum.csv"
                                           : fs::path(out_file);
    omcool::spectra::write_csv(result, path);
    std::cout << path.string() << '\n';
    return 0;
}

int run_fit(const std::string& spectrum_path, const std::string& response_path,
            const std::string& mode, const std::string& config_path,
            const std::string& out_file) {
    if (spectrum_path.empty() == response_path.empty())
        throw CliError("give exactly one of --spectrum or --response");

    omcool::fit::FitOptions options;
    std::optional<omcool::io::RunConfig> cfg;
    if (!config_path.empty()) {
        cfg = omcool::io::load_run_config(config_path);
        options = cfg->fit_options;
    }

    if (!spectrum_path.empty()) {
        const omcool::spectra::Spectrum s = omcool::spectra::read_csv(spectrum_path);
        omcool::fit::PeakMode pm;
        if (mode == "single")
            pm = omcool::fit::PeakMode::Single;
        else if (mode == "double")
            pm = omcool::fit::PeakMode::Double;
        else
            throw CliError("--mode must be 'single' or 'double'");
        const omcool::fit::LorentzianFitResult fit =
            omcool::fit::fit_lorentzians(s, pm, {}, options);
        emit(omcool::io::to_json(fit).dump(2), out_file);
        return 0;
    }

    if (!cfg || !cfg->drive)
        throw CliError("--response requires --config with a drive block");
    const omcool::fit::CoherentTrace trace = omcool::fit::read_trace_csv(response_path);
    omcool::fit::CoherentInit init;
    init.kappa = cfg->params.kappa;
    init.kappa_ex = cfg->params.kappa_ex;
    init.delta_c = cooling_tone_detuning(cfg->params, *cfg->drive);
    init.coupling_rate = cfg->params.g0 * std::sqrt(cfg->drive->n_c);
    init.omega_m = cfg->params.omega_m;
    init.gamma_m = cfg->params.gamma_m;
    const omcool::fit::CoherentResponseFit fit =
        omcool::fit::fit_coherent_response(trace, init, options);
    emit(omcool::io::to_json(fit).dump(2), out_file);
    return 0;
}

int run_thermo(const std::string& fit_path, const std::string& config_path,
               bool asymmetry, const std::string& calibration_path,
               const std::string& anchor_path, const std::string& run_id,
               const std::string& out_file) {
    const int selected = (asymmetry ? 1 : 0) + (calibration_path.empty() ? 0 : 1) +
                         (anchor_path.empty() ? 0 : 1);
    if (selected != 1)
        throw CliError("choose exactly one of --asymmetry, --calibration, --anchor");
    const omcool::io::RunConfig cfg = load_config_or_die(config_path);
    if (!cfg.drive) throw CliError("config lacks a 'drive' block");
    const omcool::fit::LorentzianFitResult fit =
        omcool::io::fit_from_json(load_json(fit_path));

    if (asymmetry) {
        const omcool::thermo::AsymmetryResult res = omcool::thermo::occupancy_from_asymmetry(
            fit, cfg.params, *cfg.drive, run_id);
        const json out = {{"occupancy", omcool::io::to_json(res.occupancy)},
                          {"calibration", omcool::io::to_json(res.calibration)}};
        emit(out.dump(2), out_file);
        return 0;
    }
    if (!calibration_path.empty()) {
        const omcool::thermo::Calibration cal =
            omcool::io::calibration_from_json(load_json(calibration_path));
        const omcool::thermo::OccupancyEstimate est =
            omcool::thermo::occupancy_from_calibration(fit, cfg.params, *cfg.drive, cal,
                                                       run_id);
        emit(omcool::io::to_json(est).dump(2), out_file);
        return 0;
    }
    const omcool::thermo::NoiseAnchor anchor =
        omcool::io::anchor_from_json(load_json(anchor_path));
    const omcool::thermo::OccupancyEstimate est =
        omcool::thermo::occupancy_noise_anchored(fit, cfg.params, *cfg.drive, anchor,
                                                 run_id);
    emit(omcool::io::to_json(est).dump(2), out_file);
    return 0;
}

int run_sweep_cmd(const std::string& config_path, const std::string& out_dir) {
    if (config_path.empty()) throw CliError("--config is required");
    const omcool::sweep::SweepConfig cfg = omcool::io::load_sweep_config(config_path);
    const omcool::sweep::SweepResult result = omcool::sweep::run_sweep(cfg);
    const json summary = omcool::io::to_json(result);

    const fs::path dir = out_dir.empty() ? fs::path(".") : fs::path(out_dir);
    omcool::io::write_text_atomic(dir / "summary.json", summary.dump(2) + "\n");
    omcool::io::write_text_atomic(dir / "ledger.jsonl",
                                  omcool::io::sweep_ledger_jsonl(result));
    omcool::io::write_text_atomic(dir / "runs.csv",
                                  omcool::io::runs_csv_from_summary(summary));
    if (!result.theory.rows.empty())
        omcool::io::write_text_atomic(dir / "theory.csv",
                                      omcool::io::theory_csv_from_summary(summary));
    std::cout << result.runs.size() << " runs ok, " << result.failures.size()
              << " failed; summary written to " << (dir / "summary.json").string()
              << '\n';
    // partial failures are reported in the summary; a sweep with zero usable
    // runs is a computation failure
    if (result.runs.empty() && !result.failures.empty()) return 2;
    return 0;
}

int run_report(const std::string& summary_path, const std::string& out_dir) {
    if (summary_path.empty()) throw CliError("--summary is required");
    const json summary = load_json(summary_path);
    const std::string text = omcool::io::render_report_text(summary);
    if (out_dir.empty()) {
        std::cout << text;
        return 0;
    }
    const fs::path dir(out_dir);
    omcool::io::write_text_atomic(dir / "report.txt", text);
    omcool::io::write_text_atomic(dir / "runs.csv",
                                  omcool::io::runs_csv_from_summary(summary));
    if (summary.contains("theory") && !summary.at("theory").at("n_f").empty())
        omcool::io::write_text_atomic(dir / "theory.csv",
                                      omcool::io::theory_csv_from_summary(summary));
    std::cout << (dir / "report.txt").string() << '\n';
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"two-tone sideband-cooling spectrum toolkit"};
    app.require_subcommand(1);
    bool json_errors = false;
    app.add_flag("--json-errors", json_errors, "report errors as machine-readable JSON");

    std::string config_path, out_file, out_dir, sweep_var, mode = "single";
    std::string spectrum_path, response_path, fit_path, calibration_path, anchor_path;
    std::string summary_path, run_id;
    bool asymmetry = false;
    std::optional<std::uint64_t> seed_flag;

    CLI::App* cmd_model = app.add_subcommand("model", "evaluate the closed-form model");
    cmd_model->add_option("--config", config_path, "run config JSON")->required();
    cmd_model->add_option("--sweep", sweep_var, "swept variable: power|detuning");
    cmd_model->add_option("--out", out_file, "output file (default: stdout)");

    CLI::App* cmd_synth = app.add_subcommand("synth", "emit a synthetic spectrum");
    cmd_synth->add_option("--config", config_path, "run config JSON")->required();
    std::uint64_t seed_value = 0;
    CLI::Option* seed_opt = cmd_synth->add_option("--seed", seed_value, "RNG seed");
    cmd_synth->add_option("--out", out_file, "output CSV path");

    CLI::App* cmd_fit = app.add_subcommand("fit", "fit a spectrum or coherent response");
    cmd_fit->add_option("--spectrum", spectrum_path, "spectrum CSV");
    cmd_fit->add_option("--response", response_path, "coherent response CSV");
    cmd_fit->add_option("--mode", mode, "single|double (spectrum fits)");
    cmd_fit->add_option("--config", config_path, "run config JSON");
    cmd_fit->add_option("--out", out_file, "output JSON (default: stdout)");

    CLI::App* cmd_thermo = app.add_subcommand("thermo", "occupancy from a fit result");
    cmd_thermo->add_option("--fit", fit_path, "fit result JSON")->required();
    cmd_thermo->add_option("--config", config_path, "run config JSON")->required();
    cmd_thermo->add_flag("--asymmetry", asymmetry, "two-tone sideband asymmetry");
    cmd_thermo->add_option("--calibration", calibration_path, "calibration JSON");
    cmd_thermo->add_option("--anchor", anchor_path, "noise anchor JSON");
    cmd_thermo->add_option("--run-id", run_id, "run identifier for the record");
    cmd_thermo->add_option("--out", out_file, "output JSON (default: stdout)");

    CLI::App* cmd_sweep = app.add_subcommand("sweep", "full pipeline over a sweep config");
    cmd_sweep->add_option("--config", config_path, "sweep config JSON")->required();
    cmd_sweep->add_option("--out-dir", out_dir, "output directory")->required();

    CLI::App* cmd_report = app.add_subcommand("report", "render a sweep summary");
    cmd_report->add_option("--summary", summary_path, "summary JSON")->required();
    cmd_report->add_option("--out-dir", out_dir, "output directory (default: stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    auto fail = [&](const char* type, const std::string& message, int code) {
        if (json_errors) {
            std::cout << json{{"error", {{"type", type}, {"message", message}}}}.dump()
                      << '\n';
        } else {
            std::cerr << "error: " << message << '\n';
        }
        return code;
    };

    try {
        if (seed_opt->count() > 0) seed_flag = seed_value;
        if (cmd_model->parsed()) return run_model(config_path, sweep_var, out_file);
        if (cmd_synth->parsed()) return run_synth(config_path, seed_flag, out_file);
        if (cmd_fit->parsed())
            return run_fit(spectrum_path, response_path, mode, config_path, out_file);
        if (cmd_thermo->parsed())
            return run_thermo(fit_path, config_path, asymmetry, calibration_path,
                              anchor_path, run_id, out_file);
        if (cmd_sweep->parsed()) return run_sweep_cmd(config_path, out_dir);
        if (cmd_report->parsed()) return run_report(summary_path, out_dir);
    } catch (const CliError& e) {
        return fail("usage", e.what(), 1);
    } catch (const omcool::ConfigError& e) {
        return fail("config", e.what(), 1);
    } catch (const std::invalid_argument& e) {
        return fail("validation", e.what(), 1);
    } catch (const omcool::Error& e) {
        return fail("computation", e.what(), 2);
    } catch (const json::exception& e) {
        return fail("config", e.what(), 1);
    } catch (const std::exception& e) {
        return fail("computation", e.what(), 2);
    }
    return 0;
}
