#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "omcool/io.hpp"
#include "omcool/sweeps.hpp"
#include "support.hpp"

using namespace omcool;
using support::device_params;
using support::rel_err;

namespace {

fit::LorentzianFitResult synthetic_single_fit(double area, double gamma_eff,
                                              double sigma_area = 0.0,
                                              double sigma_gamma = 0.0) {
    fit::LorentzianFitResult f;
    f.mode = fit::PeakMode::Single;
    f.parameter_names = {"background", "area1", "center1", "gamma_eff"};
    f.background = 1.0;
    f.area_1 = area;
    f.center_1 = hz_to_rad(100e6);
    f.gamma_eff = gamma_eff;
    f.values = {1.0, area, f.center_1, gamma_eff};
    f.sigmas = {0.0, sigma_area, 0.0, sigma_gamma};
    f.covariance.assign(16, 0.0);
    f.covariance[5] = sigma_area * sigma_area;
    f.covariance[15] = sigma_gamma * sigma_gamma;
    return f;
}

// A single-tone record carrying a calibrated occupancy estimate, as the
// regression stages consume them.
sweep::SweepRunRecord heating_run(const model::SystemParams& p, double n_c,
                                  const model::HeatingModel& h, double rel_sigma,
                                  const std::string& id) {
    model::DriveConfig d;
    d.n_c = n_c;
    d.delta = hz_to_rad(-20e6);
    d.delta_lo = hz_to_rad(120e6);
    d = with_cooling_tone_detuning(p, d, -p.omega_m);

    const auto rates = scattering_rates(p, d);
    const double gamma_eff = p.gamma_m + rates.gamma_opt();
    const double n_f = model::occupancy_with_heating(p, d, h);

    sweep::SweepRunRecord rec;
    rec.id = id;
    rec.drive = d;
    rec.fit = synthetic_single_fit(0.3 * rates.gamma_c * n_f, gamma_eff);
    thermo::OccupancyEstimate est;
    est.n_f = n_f;
    est.sigma_lo = est.sigma_hi = rel_sigma * n_f;
    est.method = "calibrated";
    est.gamma_s = rates.gamma_c;
    est.delta_c = cooling_tone_detuning(p, d);
    rec.occ_calibrated = est;
    rec.snr = rec.fit.peak_height_1();
    return rec;
}

} // namespace

TEST_CASE("theory curves match pointwise model calls") {
    const model::SystemParams p = device_params();
    model::DriveConfig base;
    base.n_c = 100.0;
    base.delta = hz_to_rad(-3e6);
    base.delta_lo = hz_to_rad(12e6);
    base = with_cooling_tone_detuning(p, base, -p.omega_m);

    SUBCASE("power sweep") {
        std::vector<double> grid;
        for (double x = 5.0; x <= 800.0; x *= 2.0) grid.push_back(x);
        const auto table =
            sweep::theory_curves(p, base, sweep::SweptVariable::CoolingPhotons, grid);
        REQUIRE(table.rows.size() == grid.size());
        support::Rng rng(3);
        for (int k = 0; k < 5; ++k) {
            const auto i =
                static_cast<std::size_t>(rng.uniform(0.0, 0.999) * grid.size());
            model::DriveConfig d = base;
            d.n_c = grid[i];
            const auto rates = scattering_rates(p, d);
            CHECK(rel_err(table.rows[i].gamma_eff, p.gamma_m + rates.gamma_opt()) <
                  1e-14);
            CHECK(rel_err(table.rows[i].n_f, model::final_occupancy(p, d)) < 1e-14);
            CHECK(table.rows[i].spring_shift == model::spring_shift(p, d));
        }
        SUBCASE("strong-cooling linewidth follows gamma_m + 4 g0^2 n_c / kappa") {
            model::DriveConfig d = base;
            d.n_c = 776.0;
            const auto one = sweep::theory_curves(
                p, d, sweep::SweptVariable::CoolingPhotons, {776.0});
            const double oracle = p.gamma_m + 4.0 * p.g0 * p.g0 * 776.0 / p.kappa;
            CHECK(rel_err(one.rows[0].gamma_eff, oracle) < 1e-12);
        }
    }
    SUBCASE("detuning sweep crosses zero spring at the red sideband") {
        std::vector<double> grid;
        for (double f = -7.5e9; f <= -3.0e9; f += 0.1e9) grid.push_back(hz_to_rad(f));
        const auto table =
            sweep::theory_curves(p, base, sweep::SweptVariable::CoolingDetuning, grid);
        double best_x = 0.0, best_nf = 1e9;
        for (std::size_t i = 1; i < table.rows.size(); ++i) {
            CHECK((table.rows[i - 1].spring_shift < 0.0) ==
                  (table.rows[i - 1].x < -p.omega_m));
            if (table.rows[i].n_f < best_nf) {
                best_nf = table.rows[i].n_f;
                best_x = table.rows[i].x;
            }
        }
        // minimum occupancy lands on the red mechanical sideband
        CHECK(std::abs(best_x + p.omega_m) <= hz_to_rad(0.1e9));
    }
}

TEST_CASE("heating regression") {
    const model::SystemParams p = device_params();

    SUBCASE("recovers a quadratic heating law") {
        // 0.2% occupancy scatter: the quadratic term is a fraction of a
        // phonon against an 8-phonon bath, so the regression needs tight
        // estimates to pin alpha2 to 10%
        model::HeatingModel truth;
        truth.alpha2 = 1.2e-6;
        std::vector<sweep::SweepRunRecord> runs;
        support::Rng rng(23);
        int i = 0;
        for (double n_c : {60.0, 120.0, 240.0, 420.0, 640.0, 800.0}) {
            auto rec = heating_run(p, n_c, truth, 0.002, "h" + std::to_string(i++));
            rec.occ_calibrated->n_f *= 1.0 + 0.002 * rng.uniform(-1.0, 1.0);
            runs.push_back(rec);
        }
        const auto fit = sweep::fit_heating(runs, p);
        CHECK(rel_err(fit.alpha2, truth.alpha2) < 0.10);
        CHECK(fit.alpha1 <= 2.0 * fit.alpha1_sigma);
    }
    SUBCASE("exact theory data yields zero coefficients") {
        std::vector<sweep::SweepRunRecord> runs;
        int i = 0;
        for (double n_c : {50.0, 100.0, 200.0, 400.0})
            runs.push_back(heating_run(p, n_c, {}, 0.0, "z" + std::to_string(i++)));
        const auto fit = sweep::fit_heating(runs, p);
        CHECK(std::abs(fit.alpha1) < 1e-12);
        CHECK(std::abs(fit.alpha2) < 1e-14);
    }
    SUBCASE("pure linear heating keeps the roles straight") {
        model::HeatingModel truth;
        truth.alpha1 = 1e-3;
        std::vector<sweep::SweepRunRecord> runs;
        int i = 0;
        for (double n_c : {50.0, 120.0, 300.0, 700.0})
            runs.push_back(heating_run(p, n_c, truth, 0.0, "l" + std::to_string(i++)));
        const auto fit = sweep::fit_heating(runs, p);
        CHECK(rel_err(fit.alpha1, truth.alpha1) < 1e-6);
        CHECK(fit.alpha2 < 1e-12);
    }
    SUBCASE("preconditions: run count and span") {
        std::vector<sweep::SweepRunRecord> runs;
        for (int i = 0; i < 3; ++i)
            runs.push_back(heating_run(p, 100.0 + i, {}, 0.0, "p" + std::to_string(i)));
        CHECK_THROWS_AS(sweep::fit_heating(runs, p), std::invalid_argument);
        runs.push_back(heating_run(p, 103.0, {}, 0.0, "p3"));
        CHECK_THROWS_AS(sweep::fit_heating(runs, p), std::invalid_argument); // span < 3
    }
    SUBCASE("a single dominant weight degenerates the design") {
        std::vector<sweep::SweepRunRecord> runs;
        int i = 0;
        for (double n_c : {50.0, 120.0, 300.0, 700.0}) {
            auto rec = heating_run(p, n_c, {}, 1.0, "d" + std::to_string(i));
            rec.occ_calibrated->sigma_lo = rec.occ_calibrated->sigma_hi =
                (i == 0 ? 1e-12 : 1e6) * rec.occ_calibrated->n_f;
            runs.push_back(rec);
            ++i;
        }
        CHECK_THROWS_AS(sweep::fit_heating(runs, p), DegenerateRegressionError);
    }
}

TEST_CASE("snr model and regression") {
    const model::SystemParams p = device_params();
    model::HeatingModel h;
    h.alpha2 = 1.2e-6;

    SUBCASE("saturates to 4 eta n_f on the sideband at high cooperativity") {
        const double eta = 0.064;
        const double n_c = 2000.0 / p.vacuum_cooperativity(); // u = 2000
        model::DriveConfig d;
        d.n_c = n_c;
        d.delta = hz_to_rad(-20e6);
        d = with_cooling_tone_detuning(p, d, -p.omega_m);
        const double n_f = model::occupancy_with_heating(p, d, h);
        const double snr = sweep::snr_theory(p, n_c, -p.omega_m, h, eta);
        CHECK(rel_err(snr, 4.0 * eta * n_f) < 0.01);
    }
    SUBCASE("recovers the detection efficiency from a detuning sweep") {
        const double eta = 0.064;
        std::vector<sweep::SweepRunRecord> runs;
        support::Rng rng(31);
        // fixed input power: the intracavity photon number follows the cavity
        // Lorentzian across the sweep
        const double n_res = 40000.0;
        int i = 0;
        for (double f = -7.0e9; f <= -3.4e9; f += 0.3e9) {
            const double delta_c = hz_to_rad(f);
            const double buildup = (p.kappa * p.kappa / 4.0) /
                                   (p.kappa * p.kappa / 4.0 + delta_c * delta_c);
            const double n_c = n_res * buildup;
            model::DriveConfig d;
            d.n_c = n_c;
            d.delta = hz_to_rad(-20e6);
            d.delta_lo = hz_to_rad(120e6);
            d = with_cooling_tone_detuning(p, d, delta_c);

            sweep::SweepRunRecord rec;
            rec.id = "s" + std::to_string(i++);
            rec.drive = d;
            const auto rates = scattering_rates(p, d);
            rec.fit = synthetic_single_fit(1.0, p.gamma_m + rates.gamma_opt());
            rec.snr = sweep::snr_theory(p, n_c, delta_c, h, eta) *
                      (1.0 + 0.02 * rng.uniform(-1.0, 1.0));
            runs.push_back(rec);
        }
        const auto fit = sweep::fit_snr(runs, p, h);
        CHECK(rel_err(fit.eta, eta) < 0.05);
        CHECK(fit.c0 == p.vacuum_cooperativity());
    }
    SUBCASE("all-zero SNR data is degenerate") {
        std::vector<sweep::SweepRunRecord> runs;
        for (int i = 0; i < 4; ++i) {
            model::DriveConfig d;
            d.n_c = 100.0 * (i + 1);
            d = with_cooling_tone_detuning(p, d, -p.omega_m);
            sweep::SweepRunRecord rec;
            rec.id = "z" + std::to_string(i);
            rec.drive = d;
            rec.fit = synthetic_single_fit(1.0, hz_to_rad(1e6));
            rec.snr = 0.0;
            runs.push_back(rec);
        }
        CHECK_THROWS_AS(sweep::fit_snr(runs, p, {}), DegenerateRegressionError);
    }
}

TEST_CASE("full synthetic power sweep") {
    namespace fs = std::filesystem;
    const auto t0 = std::chrono::steady_clock::now();
    const model::SystemParams p = device_params();
    const fs::path dir = fs::temp_directory_path() / "omcool_sweep_test";
    fs::remove_all(dir);
    fs::create_directories(dir);

    // strong quadratic heating so the regression stage has a clear signal at
    // this noise level; the paper-scale coefficient is exercised elsewhere
    model::HeatingModel heating;
    heating.alpha2 = 1e-5;
    const double eta = 0.3;

    // build the sweep: 4 two-tone calibration runs + 8 single-tone runs
    sweep::SweepConfig cfg;
    cfg.params = p;
    cfg.session_tag = "S1";
    cfg.mode = sweep::SweptVariable::CoolingPhotons;

    const std::vector<double> two_tone_nc = {30.0, 60.0, 120.0, 240.0};
    const std::vector<double> single_nc = {5.0, 10.0, 20.0, 50.0, 100.0, 200.0, 400.0, 800.0};
    int idx = 0;
    auto add_run = [&](double n_c, double n_b) {
        model::DriveConfig d;
        d.n_c = n_c;
        d.n_b = n_b;
        d.delta = hz_to_rad(-20e6);
        d.delta_lo = hz_to_rad(120e6);
        d = with_cooling_tone_detuning(p, d, -p.omega_m);

        const double n_f = model::occupancy_with_heating(p, d, heating);
        const auto grid_spec = io::auto_grid(p, d, 10.0, 4001);
        auto analytic = spectra::heterodyne_psd(
            p, d, n_f, eta,
            spectra::uniform_grid(grid_spec.f_lo_hz, grid_spec.f_hi_hz,
                                  grid_spec.points));
        auto noisy =
            spectra::synthesize(analytic, 20000, static_cast<std::uint64_t>(9000 + idx));

        char name[32];
        std::snprintf(name, sizeof(name), "run%02d.csv", idx);
        spectra::write_csv(noisy, dir / name);

        sweep::SweepRunConfig rc;
        std::snprintf(name, sizeof(name), "r%02d", idx);
        rc.id = name;
        std::snprintf(name, sizeof(name), "run%02d.csv", idx);
        rc.spectrum = dir / name;
        rc.drive = d;
        cfg.runs.push_back(rc);
        ++idx;
    };
    for (double n_c : two_tone_nc) add_run(n_c, n_c / 6.0);
    for (double n_c : single_nc) add_run(n_c, 0.0);

    sweep::AnchorSpec anchor;
    anchor.run_id = "r04"; // n_c = 5 single-tone run
    anchor.temperature_k = p.temperature;
    anchor.gamma_m = p.gamma_m;
    cfg.anchor = anchor;

    const auto result = sweep::run_sweep(cfg);

    SUBCASE("all runs succeed and the occupancy decreases monotonically") {
        REQUIRE(result.failures.empty());
        REQUIRE(result.runs.size() == 12);
        REQUIRE(result.pooled_calibration.has_value());
        CHECK(rel_err(result.pooled_calibration->c_cal, eta) < 0.05);

        double previous = 1e9;
        int singles = 0;
        for (double n_c : single_nc) {
            for (const auto& rec : result.runs) {
                if (rec.two_tone() || rec.drive.n_c != n_c) continue;
                REQUIRE(rec.occ_calibrated.has_value());
                REQUIRE(rec.occ_anchored.has_value());
                CHECK(rec.occ_calibrated->n_f < previous);
                previous = rec.occ_calibrated->n_f;
                ++singles;
            }
        }
        CHECK(singles == 8);
    }
    SUBCASE("the two thermometries agree within combined error bars") {
        for (const auto& rec : result.runs) {
            if (rec.two_tone()) continue;
            REQUIRE(rec.occ_calibrated.has_value());
            REQUIRE(rec.occ_anchored.has_value());
            const double a = rec.occ_calibrated->n_f;
            const double b = rec.occ_anchored->n_f;
            const double sa = 0.5 * (rec.occ_calibrated->sigma_lo +
                                     rec.occ_calibrated->sigma_hi);
            const double sb =
                0.5 * (rec.occ_anchored->sigma_lo + rec.occ_anchored->sigma_hi);
            CHECK(std::abs(a - b) <= sa + sb);
        }
    }
    SUBCASE("heating and efficiency regressions recover the inputs") {
        REQUIRE(result.heating.has_value());
        CHECK(rel_err(result.heating->alpha2, heating.alpha2) < 0.15);
        REQUIRE(result.snr.has_value());
        CHECK(rel_err(result.snr->eta, eta) < 0.05);
    }
    SUBCASE("rerunning produces byte-identical ledgers and summaries") {
        const auto again = sweep::run_sweep(cfg);
        CHECK(io::sweep_ledger_jsonl(again) == io::sweep_ledger_jsonl(result));
        CHECK(io::to_json(again).dump(2) == io::to_json(result).dump(2));
    }
    SUBCASE("a corrupted spectrum is isolated as a single failure") {
        sweep::SweepConfig broken = cfg;
        {
            std::ofstream bad(dir / "run03.csv", std::ios::trunc);
            bad << "freq_hz,psd_sn\n1.0,garbage\n";
        }
        const auto partial = sweep::run_sweep(broken);
        CHECK(partial.runs.size() == 11);
        REQUIRE(partial.failures.size() == 1);
        CHECK(partial.failures[0].id == "r03");
    }
    SUBCASE("an empty run list produces an empty ledger and no regressions") {
        sweep::SweepConfig empty = cfg;
        empty.runs.clear();
        empty.anchor.reset();
        const auto none = sweep::run_sweep(empty);
        CHECK(none.runs.empty());
        CHECK(io::sweep_ledger_jsonl(none).empty());
        CHECK_FALSE(none.pooled_calibration.has_value());
        CHECK_FALSE(none.heating.has_value());
    }

    const auto elapsed = std::chrono::duration<double>(
                             std::chrono::steady_clock::now() - t0)
                             .count();
    CHECK(elapsed < 10.0);
}
