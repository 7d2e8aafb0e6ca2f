#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "omcool/io.hpp"
#include "support.hpp"

using namespace omcool;
using nlohmann::json;
using support::device_params;
using support::rel_err;

namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
    const auto dir = fs::temp_directory_path() / "omcool_io_test";
    fs::create_directories(dir);
    return dir;
}

fs::path write_json(const json& j, const std::string& name) {
    const auto path = temp_dir() / name;
    std::ofstream out(path, std::ios::trunc);
    out << j.dump(2);
    return path;
}

json demo_config() {
    return {{"system",
             {{"kappa_hz", 255e6},
              {"kappa_ex_hz", 71e6},
              {"omega_m_hz", 5.17e9},
              {"gamma_int_hz", 65e3},
              {"gamma_gas_hz", 50e3},
              {"g0_hz", 1.08e6},
              {"temperature_k", 2.0}}},
            {"drive",
             {{"n_c", 40.0},
              {"n_b", 6.7},
              {"delta_c_hz", -5.17e9},
              {"delta_hz", -2e6},
              {"delta_lo_hz", 10e6}}},
            {"seed", 7}};
}

// Runs the CLI binary named by OMCOOL_CLI, capturing stdout; returns the exit
// code.
struct CliResult {
    int exit_code = -1;
    std::string output;
};

CliResult run_cli(const std::string& args) {
    const char* cli = std::getenv("OMCOOL_CLI");
    REQUIRE(cli != nullptr);
    const auto out_file = temp_dir() / "cli_stdout.txt";
    const std::string cmd =
        std::string(cli) + " " + args + " > " + out_file.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    CliResult r;
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    std::ifstream in(out_file);
    std::stringstream ss;
    ss << in.rdbuf();
    r.output = ss.str();
    return r;
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace

TEST_CASE("run config parsing") {
    SUBCASE("a valid config parses with derived fields filled") {
        const auto cfg = io::load_run_config(write_json(demo_config(), "good.json"));
        CHECK(rel_err(cfg.params.kappa, hz_to_rad(255e6)) < 1e-12);
        CHECK(rel_err(cfg.params.kappa_0, hz_to_rad(184e6)) < 1e-12);
        CHECK(rel_err(cfg.params.gamma_m, hz_to_rad(115e3)) < 1e-12);
        CHECK(cfg.params.n_th == doctest::Approx(8.06).epsilon(1e-2));
        REQUIRE(cfg.drive.has_value());
        CHECK(rel_err(cooling_tone_detuning(cfg.params, *cfg.drive),
                      hz_to_rad(-5.17e9)) < 1e-12);
        CHECK(cfg.seed == 7);
    }
    SUBCASE("unknown keys are rejected everywhere") {
        json bad = demo_config();
        bad["system"]["kappa_mhz"] = 255.0;
        CHECK_THROWS_AS(io::load_run_config(write_json(bad, "bad1.json")), ConfigError);
        json bad2 = demo_config();
        bad2["surprise"] = 1;
        CHECK_THROWS_AS(io::load_run_config(write_json(bad2, "bad2.json")), ConfigError);
    }
    SUBCASE("inconsistent kappa decomposition is rejected") {
        json bad = demo_config();
        bad["system"]["kappa_0_hz"] = 200e6; // 71 + 200 != 255
        CHECK_THROWS_AS(io::load_run_config(write_json(bad, "bad3.json")), ConfigError);
    }
    SUBCASE("both detuning spellings cannot be mixed") {
        json bad = demo_config();
        bad["drive"]["delta_mean_hz"] = 1e6;
        CHECK_THROWS_AS(io::load_run_config(write_json(bad, "bad4.json")), ConfigError);
    }
    SUBCASE("bose convention changes the bath occupancy") {
        json cfg_json = demo_config();
        cfg_json["system"]["occupancy_convention"] = "bose";
        const auto cfg = io::load_run_config(write_json(cfg_json, "bose.json"));
        CHECK(cfg.params.n_th < 8.0);
        CHECK(cfg.params.convention == model::OccupancyConvention::Bose);
    }
}

TEST_CASE("fit result JSON round-trip") {
    const model::SystemParams p = device_params();
    model::DriveConfig d;
    d.n_c = 50.0;
    d.n_b = 10.0;
    d.delta = hz_to_rad(-3e6);
    d.delta_lo = hz_to_rad(12e6);
    d = with_cooling_tone_detuning(p, d, -p.omega_m);

    const auto rates = scattering_rates(p, d);
    const double gamma_eff = p.gamma_m + rates.gamma_opt();
    const double margin = 8.0 * rad_to_hz(gamma_eff);
    auto spectrum = spectra::heterodyne_psd(
        p, d, 0.5, 0.3,
        spectra::uniform_grid(rad_to_hz(d.delta_lo + d.delta) - margin,
                              rad_to_hz(d.delta_lo - d.delta) + margin, 3001));
    const auto fit = fit::fit_lorentzians(spectrum, fit::PeakMode::Double);

    const json j = io::to_json(fit);
    const auto back = io::fit_from_json(j);
    CHECK(back.mode == fit.mode);
    CHECK(rel_err(back.area_1, fit.area_1) < 1e-14);
    CHECK(rel_err(back.center_2, fit.center_2) < 1e-14);
    CHECK(rel_err(back.gamma_eff, fit.gamma_eff) < 1e-14);
    for (std::size_t i = 0; i < fit.covariance.size(); ++i)
        if (fit.covariance[i] != 0.0)
            CHECK(rel_err(back.covariance[i], fit.covariance[i]) < 1e-12);

    SUBCASE("thermometry through the JSON path matches the direct path") {
        const auto direct = thermo::occupancy_from_asymmetry(fit, p, d);
        const auto via_json = thermo::occupancy_from_asymmetry(back, p, d);
        CHECK(rel_err(via_json.occupancy.n_f, direct.occupancy.n_f) < 1e-12);
        CHECK(rel_err(via_json.calibration.c_cal, direct.calibration.c_cal) < 1e-12);
    }
}

TEST_CASE("calibration and anchor JSON") {
    thermo::Calibration cal;
    cal.c_cal = 0.31;
    cal.c_cal_sigma = 0.02;
    cal.source_runs = {"a", "b"};
    cal.session_tag = "S";
    const auto back = io::calibration_from_json(io::to_json(cal));
    CHECK(back.c_cal == cal.c_cal);
    CHECK(back.c_cal_sigma == cal.c_cal_sigma);
    CHECK(back.source_runs == cal.source_runs);
    CHECK(back.session_tag == "S");

    const json aj = {{"area_hz", 2.5e5},
                     {"gamma_s0_hz", 93e3},
                     {"temperature_k", 2.0},
                     {"gamma_m_hz", 360e3}};
    const auto anchor = io::anchor_from_json(aj);
    CHECK(rel_err(anchor.gamma_s_0, hz_to_rad(93e3)) < 1e-14);
    CHECK(rel_err(anchor.gamma_m, hz_to_rad(360e3)) < 1e-14);
}

TEST_CASE("atomic writes") {
    const auto path = temp_dir() / "atomic.txt";
    io::write_text_atomic(path, "payload\n");
    CHECK(read_file(path) == "payload\n");
    CHECK_FALSE(fs::exists(path.string() + ".tmp"));
    io::write_text_atomic(path, "second\n");
    CHECK(read_file(path) == "second\n");
}

TEST_CASE("auto grid covers both sidebands") {
    const model::SystemParams p = device_params();
    model::DriveConfig d;
    d.n_c = 40.0;
    d.n_b = 8.0;
    d.delta = hz_to_rad(-2e6);
    d.delta_lo = hz_to_rad(10e6);
    d = with_cooling_tone_detuning(p, d, -p.omega_m);
    const auto g = io::auto_grid(p, d, 10.0, 1001);
    auto spectrum = spectra::heterodyne_psd(
        p, d, 0.4, 0.3, spectra::uniform_grid(g.f_lo_hz, g.f_hi_hz, g.points));
    CHECK(spectrum.size() == 1001);
}

TEST_CASE("command-line interface") {
    const char* demo_env = std::getenv("OMCOOL_DEMO_CONFIG");
    REQUIRE(demo_env != nullptr);
    const std::string demo = demo_env;
    const auto dir = temp_dir();

    SUBCASE("model subcommand emits the dressed state as JSON") {
        const auto r = run_cli("model --config " + demo);
        CHECK(r.exit_code == 0);
        const json j = json::parse(r.output);
        CHECK(j.contains("gamma_eff_hz"));
        CHECK(j.at("stable").get<bool>());
        // same numbers as the direct API call
        const auto cfg = io::load_run_config(demo);
        const auto st = model::dressed_state(cfg.params, *cfg.drive);
        CHECK(j.at("n_f").get<double>() == io::to_json(st).at("n_f").get<double>());
    }
    SUBCASE("model --sweep detuning writes the theory CSV") {
        const auto out = dir / "theory_cli.csv";
        const auto r = run_cli("model --config " + demo + " --sweep detuning --out " +
                               out.string());
        CHECK(r.exit_code == 0);
        std::ifstream in(out);
        std::string header;
        std::getline(in, header);
        CHECK(header == "delta_c_hz,gamma_eff_hz,spring_hz,n_f");
        int rows = 0;
        for (std::string line; std::getline(in, line);)
            if (!line.empty()) ++rows;
        CHECK(rows == 181);
    }
    SUBCASE("synth is deterministic for a fixed seed") {
        const auto out1 = dir / "synth1.csv";
        const auto out2 = dir / "synth2.csv";
        CHECK(run_cli("synth --config " + demo + " --seed 7 --out " + out1.string())
                  .exit_code == 0);
        CHECK(run_cli("synth --config " + demo + " --seed 7 --out " + out2.string())
                  .exit_code == 0);
        const std::string a = read_file(out1);
        CHECK(a == read_file(out2));
        CHECK(a.substr(0, 15) == "freq_hz,psd_sn\n");
        CHECK(read_file(spectra::sidecar_path(out1)) ==
              read_file(spectra::sidecar_path(out2)));

        SUBCASE("a different seed changes the data") {
            const auto out3 = dir / "synth3.csv";
            CHECK(run_cli("synth --config " + demo + " --seed 8 --out " +
                          out3.string())
                      .exit_code == 0);
            CHECK(read_file(out3) != a);
        }
    }
    SUBCASE("fit subcommand output is byte-identical to the API") {
        const auto spec_file = dir / "for_fit.csv";
        REQUIRE(run_cli("synth --config " + demo + " --seed 21 --out " +
                        spec_file.string())
                    .exit_code == 0);
        const auto fit_file = dir / "fit.json";
        const auto r = run_cli("fit --spectrum " + spec_file.string() +
                               " --mode double --out " + fit_file.string());
        CHECK(r.exit_code == 0);

        const auto spectrum = spectra::read_csv(spec_file);
        const auto api_fit = fit::fit_lorentzians(spectrum, fit::PeakMode::Double);
        const std::string expected = io::to_json(api_fit).dump(2) + "\n";
        CHECK(read_file(fit_file) == expected);

        SUBCASE("thermo --asymmetry completes the chain") {
            const auto est_file = dir / "est.json";
            const auto t = run_cli("thermo --fit " + fit_file.string() + " --config " +
                                   demo + " --asymmetry --out " + est_file.string());
            CHECK(t.exit_code == 0);
            const json est = json::parse(read_file(est_file));
            CHECK(est.at("occupancy").at("n_f").get<double>() > 0.0);
            CHECK(est.at("calibration").at("c_cal").get<double>() ==
                  doctest::Approx(0.064).epsilon(0.2));
        }
    }
    SUBCASE("usage and computation errors map to exit codes 1 and 2") {
        CHECK(run_cli("fit --mode double").exit_code == 1);
        CHECK(run_cli("model --config /nonexistent.json").exit_code == 1);

        // flat spectrum: a computation failure, reported as JSON on request
        spectra::Spectrum flat;
        flat.freq_hz = spectra::uniform_grid(0.0, 1e6, 101);
        flat.psd.assign(101, 1.0);
        const auto flat_file = dir / "flat.csv";
        spectra::write_csv(flat, flat_file);
        const auto r = run_cli("--json-errors fit --spectrum " + flat_file.string() +
                               " --mode single");
        CHECK(r.exit_code == 2);
        const json err = json::parse(r.output);
        CHECK(err.at("error").at("type").get<std::string>() == "computation");
    }
    SUBCASE("config validation failures exit with code 1") {
        json bad = demo_config();
        bad["drive"]["n_c"] = -5.0;
        const auto bad_file = write_json(bad, "bad_cli.json");
        const auto r = run_cli("model --config " + bad_file.string());
        CHECK(r.exit_code == 1);
    }
}
