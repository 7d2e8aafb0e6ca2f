#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>

#include "omcool/spectra.hpp"
#include "support.hpp"

using namespace omcool;
using support::device_params;
using support::rel_err;

namespace {

// Two-tone drive with well-separated sidebands at delta_lo ± |delta|.
model::DriveConfig two_tone_drive(const model::SystemParams& p, double n_c, double n_b,
                                  double delta_hz = -3e6, double delta_lo_hz = 10e6) {
    model::DriveConfig d;
    d.n_c = n_c;
    d.n_b = n_b;
    d.delta = hz_to_rad(delta_hz);
    d.delta_lo = hz_to_rad(delta_lo_hz);
    d = with_cooling_tone_detuning(p, d, -p.omega_m);
    return d;
}

std::filesystem::path temp_dir() {
    const auto dir = std::filesystem::temp_directory_path() / "omcool_spectra_test";
    std::filesystem::create_directories(dir);
    return dir;
}

} // namespace

TEST_CASE("heterodyne spectrum shape") {
    const model::SystemParams p = device_params();

    SUBCASE("single tone gives one Lorentzian at delta_lo + delta of the right area") {
        const model::DriveConfig d = two_tone_drive(p, 60.0, 0.0);
        const auto s = model::scattering_rates(p, d);
        const double gamma_eff = p.gamma_m + s.gamma_opt();
        const double n_f = 0.4, eta = 0.3;

        // wide grid so the tail-corrected quadrature is accurate
        const double center = rad_to_hz(d.delta_lo + d.delta);
        const double half_span = 600.0 * rad_to_hz(gamma_eff);
        auto spec = spectra::heterodyne_psd(
            p, d, n_f, eta,
            spectra::uniform_grid(center - half_span, center + half_span, 400001));

        const double peak = 1.0 + eta * 4.0 * s.gamma_c * n_f / gamma_eff;
        double max_v = 0.0;
        std::size_t max_i = 0;
        for (std::size_t i = 0; i < spec.size(); ++i)
            if (spec.psd[i] > max_v) {
                max_v = spec.psd[i];
                max_i = i;
            }
        CHECK(rel_err(max_v, peak) < 1e-6);
        CHECK(std::abs(spec.freq_hz[max_i] - center) <= spec.bin_width_hz());

        std::vector<double> excess = spec.psd;
        for (double& v : excess) v -= 1.0;
        const double area = support::integrate_with_tails(spec.freq_hz, excess);
        CHECK(rel_err(area, eta * s.gamma_c * n_f) < 1e-3);
    }
    SUBCASE("sideband area ratio is the thermometry asymmetry") {
        // sidebands separated by ~300 half-widths so the midpoint split leaks
        // well below the tolerance
        const model::DriveConfig d = two_tone_drive(p, 10.0, 2.0, -40e6, 250e6);
        const auto s = model::scattering_rates(p, d);
        const double n_f = 0.7, eta = 0.25;
        const double gamma_eff = p.gamma_m + s.gamma_opt();

        const double mid = rad_to_hz(d.delta_lo);
        const double half_span =
            std::abs(rad_to_hz(d.delta)) + 400.0 * rad_to_hz(gamma_eff);
        auto spec = spectra::heterodyne_psd(
            p, d, n_f, eta,
            spectra::uniform_grid(mid - half_span, mid + half_span, 800001));

        // split at the LO offset: red (cooling) sideband below, blue above
        std::vector<double> fr, vr, fb, vb;
        for (std::size_t i = 0; i < spec.size(); ++i) {
            if (spec.freq_hz[i] < mid) {
                fr.push_back(spec.freq_hz[i]);
                vr.push_back(spec.psd[i] - 1.0);
            } else {
                fb.push_back(spec.freq_hz[i]);
                vb.push_back(spec.psd[i] - 1.0);
            }
        }
        const double area_red = support::trapezoid(fr, vr);
        const double area_blue = support::trapezoid(fb, vb);
        const double expected = n_f * s.gamma_c / ((n_f + 1.0) * s.gamma_b);
        CHECK(rel_err(area_red / area_blue, expected) < 1e-2);

        SUBCASE("the ratio is independent of eta and of a floor offset") {
            auto ratio_of = [&](const spectra::Spectrum& sp) {
                double red = 0.0, blue = 0.0;
                // background from the median, as the analysis pipeline does
                std::vector<double> sorted = sp.psd;
                std::sort(sorted.begin(), sorted.end());
                const double floor = sorted[sorted.size() / 2];
                for (std::size_t i = 0; i < sp.size(); ++i) {
                    const double v = sp.psd[i] - floor;
                    (sp.freq_hz[i] < mid ? red : blue) += v;
                }
                return red / blue;
            };
            auto dim = spectra::heterodyne_psd(
                p, d, n_f, 0.04,
                spectra::uniform_grid(mid - half_span, mid + half_span, 800001));
            spectra::NoiseFloorModel floor_model{1.0, 50.0};
            auto lifted = spectra::apply_noise_floor(dim, floor_model, 2e-3);
            CHECK(rel_err(ratio_of(lifted), ratio_of(spec)) < 1e-9);
        }
    }
    SUBCASE("zero detection efficiency flattens the spectrum") {
        const model::DriveConfig d = two_tone_drive(p, 60.0, 12.0);
        auto spec = spectra::heterodyne_psd(p, d, 0.5, 0.0,
                                            spectra::uniform_grid(2e6, 18e6, 2001));
        for (double v : spec.psd) CHECK(v == 1.0);
    }
    SUBCASE("grid must cover both sidebands") {
        const model::DriveConfig d = two_tone_drive(p, 60.0, 12.0);
        CHECK_THROWS_AS(spectra::heterodyne_psd(p, d, 0.5, 0.3,
                                                spectra::uniform_grid(6e6, 9e6, 501)),
                        ConfigError);
    }
    SUBCASE("ordering constraint is enforced") {
        model::DriveConfig d = two_tone_drive(p, 60.0, 12.0);
        d.delta = -d.delta; // delta > 0 violates 0 < -delta < delta_lo
        CHECK_THROWS_AS(spectra::heterodyne_psd(p, d, 0.5, 0.3,
                                                spectra::uniform_grid(2e6, 18e6, 2001)),
                        ConfigError);
    }
}

TEST_CASE("displacement spectrum") {
    const model::SystemParams p = device_params();

    SUBCASE("both lobes integrate to 2 n_f + beta") {
        const model::DriveConfig d = two_tone_drive(p, 80.0, 10.0);
        const auto st = model::dressed_state(p, d);
        const double expected = 2.0 * st.n_f + st.beta_dressed;

        double total = 0.0;
        for (double sign : {-1.0, 1.0}) {
            const double center = sign * rad_to_hz(st.omega_eff);
            const double half_span = 50.0 * rad_to_hz(st.gamma_eff);
            auto lobe = spectra::displacement_psd(
                p, d,
                spectra::uniform_grid(center - half_span, center + half_span, 40001));
            total += support::integrate_with_tails(lobe.freq_hz, lobe.psd);
        }
        CHECK(std::abs(total - expected) / expected < 1e-3);
    }
    SUBCASE("bare oscillator lobe weights differ by exactly gamma_m") {
        model::DriveConfig off;
        off.delta = hz_to_rad(-1e6);
        const double f_m = rad_to_hz(p.omega_m);
        auto pos = spectra::displacement_psd(
            p, off, spectra::uniform_grid(f_m - 5e6, f_m + 5e6, 20001));
        auto neg = spectra::displacement_psd(
            p, off, spectra::uniform_grid(-f_m - 5e6, -f_m + 5e6, 20001));
        const double peak_pos = *std::max_element(pos.psd.begin(), pos.psd.end());
        const double peak_neg = *std::max_element(neg.psd.begin(), neg.psd.end());
        const double w_pos = peak_pos * p.gamma_m * p.gamma_m / 4.0;
        const double w_neg = peak_neg * p.gamma_m * p.gamma_m / 4.0;
        CHECK(rel_err(w_pos - w_neg, p.gamma_m) < 1e-4);
        CHECK(rel_err(w_pos, p.gamma_m * (p.n_th + 1.0)) < 1e-4);
    }
    SUBCASE("zero-temperature bare oscillator has only the positive lobe") {
        model::SystemParams cold = p;
        cold.temperature = 0.0;
        cold.n_th = 0.0;
        model::DriveConfig off;
        off.delta = hz_to_rad(-1e6);
        const double f_m = rad_to_hz(p.omega_m);
        auto pos = spectra::displacement_psd(
            cold, off, spectra::uniform_grid(f_m - 1e6, f_m + 1e6, 101));
        auto neg = spectra::displacement_psd(
            cold, off, spectra::uniform_grid(-f_m - 1e6, -f_m + 1e6, 101));
        const double peak_pos = *std::max_element(pos.psd.begin(), pos.psd.end());
        const double peak_neg = *std::max_element(neg.psd.begin(), neg.psd.end());
        CHECK(peak_neg / peak_pos < 1e-5);
    }
}

TEST_CASE("synthesis statistics") {
    auto grid = spectra::uniform_grid(0.0, 1e6, 2001);
    spectra::Spectrum flat;
    flat.freq_hz = grid;
    flat.psd.assign(grid.size(), 1.0);

    SUBCASE("deterministic under a fixed seed") {
        auto a = spectra::synthesize(flat, 100, 42);
        auto b = spectra::synthesize(flat, 100, 42);
        CHECK(a.psd == b.psd);
        auto c = spectra::synthesize(flat, 100, 43);
        CHECK(a.psd != c.psd);
    }
    SUBCASE("large averages converge to the analytic values") {
        auto s = spectra::synthesize(flat, 100000000, 7);
        for (double v : s.psd) CHECK(std::abs(v - 1.0) < 1e-3);
    }
    SUBCASE("relative scatter is 1/sqrt(averages)") {
        auto s = spectra::synthesize(flat, 100, 11);
        double mean = 0.0;
        for (double v : s.psd) mean += v;
        mean /= static_cast<double>(s.size());
        double var = 0.0;
        for (double v : s.psd) var += (v - mean) * (v - mean);
        var /= static_cast<double>(s.size() - 1);
        const double std_dev = std::sqrt(var);
        CHECK(std_dev > 0.085);
        CHECK(std_dev < 0.115);
    }
    SUBCASE("mean-unbiased: the average of many syntheses recovers the input") {
        const model::SystemParams p = device_params();
        const model::DriveConfig d = two_tone_drive(p, 60.0, 12.0);
        auto analytic = spectra::heterodyne_psd(p, d, 0.5, 0.3,
                                                spectra::uniform_grid(2e6, 18e6, 200));
        const int reps = 1000;
        const std::int64_t averages = 400;
        std::vector<double> mean(analytic.size(), 0.0);
        for (int k = 0; k < reps; ++k) {
            auto s = spectra::synthesize(analytic, averages,
                                         static_cast<std::uint64_t>(1000 + k));
            for (std::size_t i = 0; i < s.size(); ++i) mean[i] += s.psd[i];
        }
        int within = 0;
        for (std::size_t i = 0; i < mean.size(); ++i) {
            mean[i] /= reps;
            const double sigma_mean =
                analytic.psd[i] / std::sqrt(static_cast<double>(averages)) /
                std::sqrt(static_cast<double>(reps));
            if (std::abs(mean[i] - analytic.psd[i]) < 3.0 * sigma_mean) ++within;
        }
        // 3 sigma holds for ~99.7% of bins; allow binomial slack
        CHECK(within >= 197);
    }
    SUBCASE("shot reference validates its own statistical model") {
        auto ref = spectra::shot_reference(grid, 400, 3);
        CHECK(ref.meta.shot_reference);
        double mean = 0.0;
        for (double v : ref.psd) mean += v;
        mean /= static_cast<double>(ref.size());
        const double tol =
            3.0 / std::sqrt(400.0) / std::sqrt(static_cast<double>(ref.size()));
        CHECK(std::abs(mean - 1.0) < tol);
    }
    SUBCASE("normalization to a reference divides out gain ripple") {
        spectra::Spectrum rippled = flat;
        for (std::size_t i = 0; i < rippled.size(); ++i)
            rippled.psd[i] = 2.0 + std::sin(1e-5 * rippled.freq_hz[i]);
        auto meas = rippled;
        for (std::size_t i = 0; i < meas.size(); ++i) meas.psd[i] *= 1.7;
        auto normalized = spectra::normalize_to_reference(meas, rippled);
        for (double v : normalized.psd) CHECK(rel_err(v, 1.7) < 1e-12);
    }
}

TEST_CASE("noise floor model") {
    auto grid = spectra::uniform_grid(0.0, 1e6, 101);
    spectra::Spectrum flat;
    flat.freq_hz = grid;
    flat.psd.assign(grid.size(), 1.0);
    spectra::NoiseFloorModel m{1.0, 250.0};

    SUBCASE("zero slope is the identity") {
        auto s = spectra::apply_noise_floor(flat, {1.0, 0.0}, 5e-3);
        CHECK(s.psd == flat.psd);
    }
    SUBCASE("offset is linear in reflected power") {
        auto s1 = spectra::apply_noise_floor(flat, m, 2e-3);
        auto s2 = spectra::apply_noise_floor(flat, m, 4e-3);
        CHECK(rel_err(s2.psd[0] - 1.0, 2.0 * (s1.psd[0] - 1.0)) < 1e-12);
    }
    SUBCASE("slope recovered from synthetic floors at five powers") {
        // straight-line regression oracle on the median floor levels
        std::vector<double> powers = {1e-3, 2e-3, 4e-3, 6e-3, 8e-3};
        std::vector<double> floors;
        for (std::size_t k = 0; k < powers.size(); ++k) {
            auto s = spectra::synthesize(spectra::apply_noise_floor(flat, m, powers[k]),
                                         40000, 100 + k);
            std::vector<double> v = s.psd;
            std::nth_element(v.begin(), v.begin() + v.size() / 2, v.end());
            floors.push_back(v[v.size() / 2]);
        }
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        const auto n = static_cast<double>(powers.size());
        for (std::size_t i = 0; i < powers.size(); ++i) {
            sx += powers[i];
            sy += floors[i];
            sxx += powers[i] * powers[i];
            sxy += powers[i] * floors[i];
        }
        const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        CHECK(rel_err(slope, m.slope_per_w) < 0.02);
    }
}

TEST_CASE("spectrum serialization round-trips bit-exactly") {
    const model::SystemParams p = device_params();
    const model::DriveConfig d = two_tone_drive(p, 60.0, 12.0);
    auto analytic = spectra::heterodyne_psd(p, d, 0.5, 0.3,
                                            spectra::uniform_grid(2e6, 18e6, 1501));
    auto s = spectra::synthesize(analytic, 250, 99);

    const auto dir = temp_dir();
    const auto file = dir / "roundtrip.csv";
    spectra::write_csv(s, file);
    auto loaded = spectra::read_csv(file);

    REQUIRE(loaded.size() == s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        CHECK(loaded.freq_hz[i] == s.freq_hz[i]);
        CHECK(loaded.psd[i] == s.psd[i]);
    }
    CHECK(loaded.meta.averages == 250);
    CHECK(loaded.meta.drive.n_c == d.n_c);
    CHECK(loaded.meta.delta_lo_hz == rad_to_hz(d.delta_lo));

    SUBCASE("writes are atomic: no temp files left behind") {
        CHECK_FALSE(std::filesystem::exists(file.string() + ".tmp"));
    }
    SUBCASE("malformed rows are rejected") {
        const auto bad = dir / "bad.csv";
        std::FILE* f = std::fopen(bad.string().c_str(), "wb");
        std::fputs("freq_hz,psd_sn\n1.0,not_a_number\n", f);
        std::fclose(f);
        CHECK_THROWS_AS(spectra::read_csv(bad), ConfigError);
    }
    SUBCASE("non-uniform grids are rejected") {
        spectra::Spectrum bad = s;
        bad.freq_hz[3] += 0.5 * bad.bin_width_hz();
        CHECK_THROWS_AS(bad.validate(), ConfigError);
    }
}
