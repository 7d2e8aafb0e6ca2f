#include "omcool/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

namespace omcool::io {

using nlohmann::json;

namespace {

json load_json_file(const std::filesystem::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw ConfigError("cannot open " + file.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(file.string() + ": " + e.what());
    }
}

void require_object(const json& j, const std::string& context) {
    if (!j.is_object()) throw ConfigError(context + ": expected a JSON object");
}

// Strict schema: every present key must be in the allowed set.
void check_keys(const json& j, const std::string& context,
                std::initializer_list<const char*> allowed) {
    require_object(j, context);
    for (const auto& item : j.items()) {
        bool ok = false;
        for (const char* k : allowed)
            if (item.key() == k) { ok = true; break; }
        if (!ok)
            throw ConfigError(context + ": unknown key '" + item.key() + "'");
    }
}

double get_num(const json& j, const std::string& context, const char* key) {
    if (!j.contains(key))
        throw ConfigError(context + ": missing required key '" + std::string(key) + "'");
    if (!j.at(key).is_number())
        throw ConfigError(context + ": key '" + std::string(key) + "' must be a number");
    return j.at(key).get<double>();
}

std::optional<double> opt_num(const json& j, const std::string& context, const char* key) {
    if (!j.contains(key)) return std::nullopt;
    if (!j.at(key).is_number())
        throw ConfigError(context + ": key '" + std::string(key) + "' must be a number");
    return j.at(key).get<double>();
}

model::SystemParams parse_system(const json& j) {
    const std::string ctx = "system";
    check_keys(j, ctx,
               {"kappa_hz", "kappa_ex_hz", "kappa_0_hz", "omega_m_hz", "gamma_int_hz",
                "gamma_gas_hz", "gamma_m_hz", "g0_hz", "temperature_k", "x_zpf_m",
                "alpha_opt", "beta_mech", "occupancy_convention"});

    const double kappa_ex = hz_to_rad(get_num(j, ctx, "kappa_ex_hz"));
    const auto kappa_total = opt_num(j, ctx, "kappa_hz");
    const auto kappa_0 = opt_num(j, ctx, "kappa_0_hz");
    if (!kappa_total && !kappa_0)
        throw ConfigError(ctx + ": provide kappa_hz or kappa_0_hz alongside kappa_ex_hz");
    const double k0 = kappa_0 ? hz_to_rad(*kappa_0) : hz_to_rad(*kappa_total) - kappa_ex;

    const auto g_int = opt_num(j, ctx, "gamma_int_hz");
    const auto g_gas = opt_num(j, ctx, "gamma_gas_hz");
    const auto g_tot = opt_num(j, ctx, "gamma_m_hz");
    double gamma_int = 0.0, gamma_gas = 0.0;
    if (g_int) {
        gamma_int = hz_to_rad(*g_int);
        gamma_gas = g_gas ? hz_to_rad(*g_gas)
                          : (g_tot ? hz_to_rad(*g_tot) - gamma_int : 0.0);
    } else if (g_tot) {
        gamma_int = hz_to_rad(*g_tot);
        gamma_gas = 0.0;
    } else {
        throw ConfigError(ctx + ": provide gamma_int_hz (and gamma_gas_hz) or gamma_m_hz");
    }

    model::OccupancyConvention convention = model::OccupancyConvention::RayleighJeans;
    if (j.contains("occupancy_convention")) {
        const std::string c = j.at("occupancy_convention").get<std::string>();
        if (c == "rayleigh-jeans")
            convention = model::OccupancyConvention::RayleighJeans;
        else if (c == "bose")
            convention = model::OccupancyConvention::Bose;
        else
            throw ConfigError(ctx + ": occupancy_convention must be 'rayleigh-jeans' or 'bose'");
    }

    model::SystemParams p = model::make_system_params(
        kappa_ex, k0, hz_to_rad(get_num(j, ctx, "omega_m_hz")), gamma_int, gamma_gas,
        hz_to_rad(get_num(j, ctx, "g0_hz")), get_num(j, ctx, "temperature_k"), convention);
    if (kappa_total && std::abs(p.kappa - hz_to_rad(*kappa_total)) >
                           1e-9 * std::max(p.kappa, 1.0))
        throw ConfigError(ctx + ": kappa_hz inconsistent with kappa_ex_hz + kappa_0_hz");
    if (auto x = opt_num(j, ctx, "x_zpf_m")) p.x_zpf = *x;
    if (auto a = opt_num(j, ctx, "alpha_opt")) p.alpha_opt = *a;
    if (auto b = opt_num(j, ctx, "beta_mech")) p.beta_mech = *b;
    p.validate();
    return p;
}

model::DriveConfig parse_drive(const json& j, const model::SystemParams& params) {
    const std::string ctx = "drive";
    check_keys(j, ctx, {"n_c", "n_b", "delta_c_hz", "delta_mean_hz", "delta_hz",
                        "delta_lo_hz"});
    model::DriveConfig d;
    d.n_c = get_num(j, ctx, "n_c");
    d.n_b = opt_num(j, ctx, "n_b").value_or(0.0);
    d.delta = hz_to_rad(opt_num(j, ctx, "delta_hz").value_or(0.0));
    d.delta_lo = hz_to_rad(opt_num(j, ctx, "delta_lo_hz").value_or(0.0));
    const auto delta_c = opt_num(j, ctx, "delta_c_hz");
    const auto delta_mean = opt_num(j, ctx, "delta_mean_hz");
    if (delta_c && delta_mean)
        throw ConfigError(ctx + ": give delta_c_hz or delta_mean_hz, not both");
    if (delta_c)
        d = with_cooling_tone_detuning(params, d, hz_to_rad(*delta_c));
    else if (delta_mean)
        d.delta_mean = hz_to_rad(*delta_mean);
    else
        throw ConfigError(ctx + ": missing delta_c_hz or delta_mean_hz");
    d.validate();
    return d;
}

model::HeatingModel parse_heating(const json& j) {
    check_keys(j, "heating", {"alpha1", "alpha2"});
    model::HeatingModel h;
    h.alpha1 = opt_num(j, "heating", "alpha1").value_or(0.0);
    h.alpha2 = opt_num(j, "heating", "alpha2").value_or(0.0);
    if (h.alpha1 < 0.0 || h.alpha2 < 0.0)
        throw ConfigError("heating: coefficients must be non-negative");
    return h;
}

fit::FitOptions parse_tolerances(const json& j) {
    check_keys(j, "tolerances", {"grad_tol", "step_tol", "max_iterations"});
    fit::FitOptions o;
    if (auto g = opt_num(j, "tolerances", "grad_tol")) o.grad_tol = *g;
    if (auto s = opt_num(j, "tolerances", "step_tol")) o.step_tol = *s;
    if (j.contains("max_iterations"))
        o.max_iterations = j.at("max_iterations").get<int>();
    return o;
}

GridSpec parse_grid(const json& j) {
    check_keys(j, "grid", {"f_lo_hz", "f_hi_hz", "points"});
    GridSpec g;
    g.f_lo_hz = get_num(j, "grid", "f_lo_hz");
    g.f_hi_hz = get_num(j, "grid", "f_hi_hz");
    g.points = j.at("points").get<std::size_t>();
    if (g.points < 2 || !(g.f_hi_hz > g.f_lo_hz))
        throw ConfigError("grid: need points >= 2 and f_hi_hz > f_lo_hz");
    return g;
}

SynthSettings parse_synth(const json& j) {
    const std::string ctx = "synth";
    check_keys(j, ctx, {"grid", "averages", "eta", "heating", "n_f", "noise_floor",
                        "reflected_power_w", "shot_reference"});
    SynthSettings s;
    if (j.contains("grid")) s.grid = parse_grid(j.at("grid"));
    if (j.contains("averages")) s.averages = j.at("averages").get<std::int64_t>();
    if (s.averages < 1) throw ConfigError(ctx + ": averages must be >= 1");
    s.eta = opt_num(j, ctx, "eta").value_or(1.0);
    if (j.contains("heating")) s.heating = parse_heating(j.at("heating"));
    s.n_f = opt_num(j, ctx, "n_f");
    if (j.contains("noise_floor")) {
        const json& nf = j.at("noise_floor");
        check_keys(nf, "noise_floor", {"intercept", "slope_per_w"});
        spectra::NoiseFloorModel m;
        m.intercept = opt_num(nf, "noise_floor", "intercept").value_or(1.0);
        m.slope_per_w = opt_num(nf, "noise_floor", "slope_per_w").value_or(0.0);
        s.noise_floor = m;
    }
    s.reflected_power_w = opt_num(j, ctx, "reflected_power_w").value_or(0.0);
    if (j.contains("shot_reference")) s.shot_reference = j.at("shot_reference").get<bool>();
    return s;
}

SweepGridSpec parse_sweep_grid(const json& j) {
    const std::string ctx = "sweep_grid";
    check_keys(j, ctx, {"variable", "from_hz", "to_hz", "from", "to", "points"});
    SweepGridSpec g;
    const std::string variable = j.at("variable").get<std::string>();
    if (variable == "detuning") {
        g.variable = sweep::SweptVariable::CoolingDetuning;
        g.from = get_num(j, ctx, "from_hz");
        g.to = get_num(j, ctx, "to_hz");
    } else if (variable == "power") {
        g.variable = sweep::SweptVariable::CoolingPhotons;
        g.from = get_num(j, ctx, "from");
        g.to = get_num(j, ctx, "to");
    } else {
        throw ConfigError(ctx + ": variable must be 'detuning' or 'power'");
    }
    g.points = j.at("points").get<std::size_t>();
    if (g.points < 2) throw ConfigError(ctx + ": points must be >= 2");
    return g;
}

} // namespace

RunConfig load_run_config(const std::filesystem::path& file) {
    const json j = load_json_file(file);
    check_keys(j, file.string(),
               {"system", "drive", "synth", "sweep_grid", "paths", "seed", "tolerances"});
    if (!j.contains("system")) throw ConfigError(file.string() + ": missing 'system'");

    RunConfig cfg;
    cfg.params = parse_system(j.at("system"));
    if (j.contains("drive")) cfg.drive = parse_drive(j.at("drive"), cfg.params);
    if (j.contains("synth")) cfg.synth = parse_synth(j.at("synth"));
    if (j.contains("sweep_grid")) cfg.sweep_grid = parse_sweep_grid(j.at("sweep_grid"));
    if (j.contains("paths")) {
        const json& p = j.at("paths");
        check_keys(p, "paths", {"output_dir"});
        if (p.contains("output_dir"))
            cfg.output_dir = p.at("output_dir").get<std::string>();
    }
    if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("tolerances")) cfg.fit_options = parse_tolerances(j.at("tolerances"));
    return cfg;
}

GridSpec auto_grid(const model::SystemParams& p, const model::DriveConfig& d,
                   double halfwidths, std::size_t points) {
    const model::ScatteringRates r = scattering_rates(p, d);
    const double gamma_eff = p.gamma_m + r.gamma_opt();
    if (gamma_eff <= 0.0) throw InstabilityError("auto_grid: gamma_eff <= 0");
    const double c1 = rad_to_hz(d.delta_lo + d.delta);
    const double c2 = rad_to_hz(d.delta_lo - d.delta);
    const double margin = halfwidths * rad_to_hz(gamma_eff);
    GridSpec g;
    g.f_lo_hz = std::min(c1, c2) - margin;
    g.f_hi_hz = std::max(c1, c2) + margin;
    g.points = points;
    return g;
}

sweep::SweepConfig load_sweep_config(const std::filesystem::path& file) {
    const json j = load_json_file(file);
    const std::string ctx = file.string();
    check_keys(j, ctx,
               {"session_tag", "mode", "system", "defaults", "runs", "anchor",
                "regress_heating", "regress_snr", "tolerances", "theory_points"});

    sweep::SweepConfig cfg;
    cfg.params = parse_system(j.at("system"));
    if (j.contains("session_tag")) cfg.session_tag = j.at("session_tag").get<std::string>();
    const std::string mode = j.value("mode", std::string("power"));
    if (mode == "power")
        cfg.mode = sweep::SweptVariable::CoolingPhotons;
    else if (mode == "detuning")
        cfg.mode = sweep::SweptVariable::CoolingDetuning;
    else
        throw ConfigError(ctx + ": mode must be 'power' or 'detuning'");
    if (j.contains("regress_heating")) cfg.regress_heating = j.at("regress_heating").get<bool>();
    if (j.contains("regress_snr")) cfg.regress_snr = j.at("regress_snr").get<bool>();
    if (j.contains("tolerances")) cfg.fit_options = parse_tolerances(j.at("tolerances"));
    if (j.contains("theory_points"))
        cfg.theory_points = j.at("theory_points").get<std::size_t>();

    json defaults = json::object();
    if (j.contains("defaults")) {
        defaults = j.at("defaults");
        check_keys(defaults, "defaults",
                   {"delta_hz", "delta_lo_hz", "n_b", "photons_per_watt"});
    }

    if (!j.contains("runs") || !j.at("runs").is_array())
        throw ConfigError(ctx + ": missing 'runs' array");
    const std::filesystem::path base = file.parent_path();

    std::set<std::string> seen_ids;
    for (const json& rj : j.at("runs")) {
        const std::string rctx = ctx + " run";
        check_keys(rj, rctx,
                   {"id", "spectrum", "coherent_response", "n_c", "n_b",
                    "cooling_power_w", "blue_power_w", "photons_per_watt", "delta_c_hz",
                    "delta_mean_hz", "delta_hz", "delta_lo_hz", "input_power_w",
                    "reflected_power_w", "session_tag"});
        sweep::SweepRunConfig rc;
        rc.id = rj.at("id").get<std::string>();
        if (!seen_ids.insert(rc.id).second)
            throw ConfigError(ctx + ": duplicate run id '" + rc.id + "'");
        rc.spectrum = base / rj.at("spectrum").get<std::string>();
        if (rj.contains("coherent_response"))
            rc.coherent_response = base / rj.at("coherent_response").get<std::string>();

        model::DriveConfig d;
        auto pick = [&](const char* key) -> std::optional<double> {
            if (auto v = opt_num(rj, rctx, key)) return v;
            if (defaults.contains(key)) return defaults.at(key).get<double>();
            return std::nullopt;
        };
        d.delta = hz_to_rad(pick("delta_hz").value_or(0.0));
        d.delta_lo = hz_to_rad(pick("delta_lo_hz").value_or(0.0));

        const auto delta_c = opt_num(rj, rctx, "delta_c_hz");
        const auto delta_mean = opt_num(rj, rctx, "delta_mean_hz");
        if (delta_c)
            d = with_cooling_tone_detuning(cfg.params, d, hz_to_rad(*delta_c));
        else if (delta_mean)
            d.delta_mean = hz_to_rad(*delta_mean);
        else
            throw ConfigError(rctx + " '" + rc.id + "': missing delta_c_hz or delta_mean_hz");

        // Photon numbers: direct, or power × resonant conversion scaled by the
        // cavity Lorentzian at the tone's detuning. The conversion factor is a
        // measured chain property and is never guessed.
        auto buildup = [&](double tone_detuning) {
            const double hk = cfg.params.kappa / 2.0;
            return hk * hk / (hk * hk + tone_detuning * tone_detuning);
        };
        if (auto nc = opt_num(rj, rctx, "n_c")) {
            d.n_c = *nc;
        } else if (auto pw = opt_num(rj, rctx, "cooling_power_w")) {
            const auto ppw = pick("photons_per_watt");
            if (!ppw)
                throw ConfigError(rctx + " '" + rc.id + "': cooling_power_w needs photons_per_watt");
            d.n_c = *pw * *ppw * buildup(cooling_tone_detuning(cfg.params, d));
        } else {
            throw ConfigError(rctx + " '" + rc.id + "': missing n_c or cooling_power_w");
        }
        if (auto nb = opt_num(rj, rctx, "n_b")) {
            d.n_b = *nb;
        } else if (auto pw = opt_num(rj, rctx, "blue_power_w")) {
            const auto ppw = pick("photons_per_watt");
            if (!ppw)
                throw ConfigError(rctx + " '" + rc.id + "': blue_power_w needs photons_per_watt");
            const double blue_detuning = d.delta_mean + cfg.params.omega_m + d.delta;
            d.n_b = *pw * *ppw * buildup(blue_detuning);
        } else if (defaults.contains("n_b")) {
            d.n_b = defaults.at("n_b").get<double>();
        }
        d.validate();
        rc.drive = d;
        rc.input_power_w = opt_num(rj, rctx, "input_power_w").value_or(0.0);
        rc.reflected_power_w = opt_num(rj, rctx, "reflected_power_w").value_or(0.0);
        rc.session_tag = rj.value("session_tag", std::string());
        cfg.runs.push_back(std::move(rc));
    }

    if (j.contains("anchor")) {
        const json& a = j.at("anchor");
        check_keys(a, "anchor", {"run_id", "temperature_k", "gamma_m_hz"});
        sweep::AnchorSpec spec;
        spec.run_id = a.at("run_id").get<std::string>();
        spec.temperature_k = get_num(a, "anchor", "temperature_k");
        if (auto g = opt_num(a, "anchor", "gamma_m_hz")) spec.gamma_m = hz_to_rad(*g);
        cfg.anchor = spec;
    }
    return cfg;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

namespace {

json drive_json(const model::DriveConfig& d) {
    return {{"n_c", d.n_c},
            {"n_b", d.n_b},
            {"delta_mean_hz", rad_to_hz(d.delta_mean)},
            {"delta_hz", rad_to_hz(d.delta)},
            {"delta_lo_hz", rad_to_hz(d.delta_lo)}};
}

// "background" stays dimensionless; every other fit parameter is a rate.
std::string external_name(const std::string& internal) {
    if (internal == "background") return internal;
    return internal + "_hz";
}

double external_scale(const std::string& internal) {
    return internal == "background" ? 1.0 : 1.0 / two_pi;
}

} // namespace

json to_json(const fit::LorentzianFitResult& f) {
    const std::size_t n = f.parameter_names.size();
    json params = json::object();
    json sigmas = json::object();
    json names = json::array();
    json matrix = json::array();
    for (std::size_t i = 0; i < n; ++i) {
        const std::string name = external_name(f.parameter_names[i]);
        const double s = external_scale(f.parameter_names[i]);
        params[name] = f.values[i] * s;
        sigmas[name] = f.sigmas[i] * s;
        names.push_back(name);
        for (std::size_t k = 0; k < n; ++k) {
            matrix.push_back(f.covariance[i * n + k] * s *
                             external_scale(f.parameter_names[k]));
        }
    }
    return {{"mode", f.mode == fit::PeakMode::Double ? "double" : "single"},
            {"parameters", params},
            {"sigmas", sigmas},
            {"covariance", {{"names", names}, {"matrix", matrix}}},
            {"residual_norm", f.residual_norm},
            {"iterations", f.iterations},
            {"converged", true}};
}

fit::LorentzianFitResult fit_from_json(const json& j) {
    fit::LorentzianFitResult f;
    const std::string mode = j.at("mode").get<std::string>();
    f.mode = mode == "double" ? fit::PeakMode::Double : fit::PeakMode::Single;
    f.parameter_names =
        f.mode == fit::PeakMode::Double
            ? std::vector<std::string>{"background", "area1", "center1",
                                       "area2",      "center2", "gamma_eff"}
            : std::vector<std::string>{"background", "area1", "center1", "gamma_eff"};
    const std::size_t n = f.parameter_names.size();
    f.values.resize(n);
    f.sigmas.resize(n);
    f.covariance.assign(n * n, 0.0);
    const json& params = j.at("parameters");
    const json& sigmas = j.at("sigmas");
    for (std::size_t i = 0; i < n; ++i) {
        const std::string name = external_name(f.parameter_names[i]);
        const double s = external_scale(f.parameter_names[i]);
        f.values[i] = params.at(name).get<double>() / s;
        f.sigmas[i] = sigmas.at(name).get<double>() / s;
    }
    if (j.contains("covariance")) {
        const json& matrix = j.at("covariance").at("matrix");
        if (matrix.size() != n * n)
            throw ConfigError("fit_from_json: covariance size mismatch");
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t k = 0; k < n; ++k)
                f.covariance[i * n + k] =
                    matrix[i * n + k].get<double>() /
                    (external_scale(f.parameter_names[i]) *
                     external_scale(f.parameter_names[k]));
    }
    f.residual_norm = j.value("residual_norm", 0.0);
    f.iterations = j.value("iterations", 0);
    f.background = f.values[0];
    f.area_1 = f.values[1];
    f.center_1 = f.values[2];
    if (f.mode == fit::PeakMode::Double) {
        f.area_2 = f.values[3];
        f.center_2 = f.values[4];
        f.gamma_eff = f.values[5];
    } else {
        f.gamma_eff = f.values[3];
    }
    return f;
}

json to_json(const fit::CoherentResponseFit& f) {
    return {{"kappa_hz", rad_to_hz(f.kappa)},
            {"kappa_sigma_hz", rad_to_hz(f.kappa_sigma)},
            {"kappa_ex_hz", rad_to_hz(f.kappa_ex)},
            {"kappa_ex_sigma_hz", rad_to_hz(f.kappa_ex_sigma)},
            {"delta_c_hz", rad_to_hz(f.delta_c)},
            {"delta_c_sigma_hz", rad_to_hz(f.delta_c_sigma)},
            {"coupling_rate_hz", rad_to_hz(f.coupling_rate)},
            {"coupling_rate_sigma_hz", rad_to_hz(f.coupling_rate_sigma)},
            {"omega_m_hz", rad_to_hz(f.omega_m)},
            {"omega_m_sigma_hz", rad_to_hz(f.omega_m_sigma)},
            {"scale", f.scale},
            {"scale_sigma", f.scale_sigma},
            {"residual_norm", f.residual_norm},
            {"iterations", f.iterations},
            {"ambiguous_sign", f.ambiguous_sign}};
}

json to_json(const thermo::OccupancyEstimate& est) {
    return {{"n_f", est.n_f},
            {"sigma_lo", est.sigma_lo},
            {"sigma_hi", est.sigma_hi},
            {"method", est.method},
            {"run_id", est.run_id},
            {"inputs",
             {{"area_hz", rad_to_hz(est.area)},
              {"gamma_s_hz", rad_to_hz(est.gamma_s)},
              {"delta_c_hz", rad_to_hz(est.delta_c)},
              {"delta_c_sigma_hz", rad_to_hz(est.delta_c_sigma)}}}};
}

json to_json(const thermo::Calibration& cal) {
    return {{"c_cal", cal.c_cal},
            {"c_cal_sigma", cal.c_cal_sigma},
            {"method", cal.method == thermo::Calibration::Method::AncillaryQuantum
                           ? "ancillary-quantum"
                           : "noise-anchored"},
            {"source_runs", cal.source_runs},
            {"session_tag", cal.session_tag}};
}

thermo::Calibration calibration_from_json(const json& j) {
    thermo::Calibration cal;
    cal.c_cal = j.at("c_cal").get<double>();
    cal.c_cal_sigma = j.value("c_cal_sigma", 0.0);
    const std::string method = j.value("method", std::string("ancillary-quantum"));
    cal.method = method == "noise-anchored"
                     ? thermo::Calibration::Method::NoiseAnchored
                     : thermo::Calibration::Method::AncillaryQuantum;
    if (j.contains("source_runs"))
        cal.source_runs = j.at("source_runs").get<std::vector<std::string>>();
    cal.session_tag = j.value("session_tag", std::string());
    return cal;
}

thermo::NoiseAnchor anchor_from_json(const json& j) {
    check_keys(j, "anchor", {"area_hz", "gamma_s0_hz", "temperature_k", "gamma_m_hz"});
    thermo::NoiseAnchor a;
    a.area_0 = hz_to_rad(get_num(j, "anchor", "area_hz"));
    a.gamma_s_0 = hz_to_rad(get_num(j, "anchor", "gamma_s0_hz"));
    a.temperature = get_num(j, "anchor", "temperature_k");
    a.gamma_m = hz_to_rad(get_num(j, "anchor", "gamma_m_hz"));
    return a;
}

json to_json(const model::HeatingModel& h) {
    return {{"alpha1", h.alpha1},
            {"alpha1_sigma", h.alpha1_sigma},
            {"alpha2", h.alpha2},
            {"alpha2_sigma", h.alpha2_sigma}};
}

json to_json(const sweep::SnrModel& m) {
    return {{"eta", m.eta},
            {"eta_sigma", m.eta_sigma},
            {"c0", m.c0},
            {"heating", to_json(m.heating)}};
}

json to_json(const model::DressedState& st) {
    return {{"gamma_b_hz", rad_to_hz(st.gamma_b)},
            {"gamma_c_hz", rad_to_hz(st.gamma_c)},
            {"gamma_opt_hz", rad_to_hz(st.gamma_opt)},
            {"gamma_eff_hz", rad_to_hz(st.gamma_eff)},
            {"spring_shift_hz", rad_to_hz(st.spring_shift)},
            {"omega_eff_hz", rad_to_hz(st.omega_eff)},
            {"n_f", st.n_f},
            {"n_min", st.n_min},
            {"beta_dressed", st.beta_dressed},
            {"gamma_as_b_hz", rad_to_hz(st.gamma_as_b)},
            {"gamma_s_c_hz", rad_to_hz(st.gamma_s_c)},
            {"stable", st.stable},
            {"net_cooling", st.net_cooling},
            {"weak_coupling", st.weak_coupling}};
}

json to_json(const sweep::SweepRunRecord& rec) {
    json j = {{"id", rec.id},
              {"session_tag", rec.session_tag},
              {"drive", drive_json(rec.drive)},
              {"fit", to_json(rec.fit)},
              {"input_power_w", rec.input_power_w},
              {"reflected_power_w", rec.reflected_power_w},
              {"snr", rec.snr}};
    if (rec.response_fit) j["response_fit"] = to_json(*rec.response_fit);
    if (rec.occ_asymmetry) j["occupancy_asymmetry"] = to_json(*rec.occ_asymmetry);
    if (rec.calibration) j["calibration"] = to_json(*rec.calibration);
    if (rec.occ_calibrated) j["occupancy_calibrated"] = to_json(*rec.occ_calibrated);
    if (rec.occ_anchored) j["occupancy_anchored"] = to_json(*rec.occ_anchored);
    return j;
}

json to_json(const sweep::TheoryTable& table) {
    json xs = json::array(), gammas = json::array(), springs = json::array(),
         nfs = json::array();
    const bool power = table.variable == sweep::SweptVariable::CoolingPhotons;
    for (const sweep::TheoryPoint& pt : table.rows) {
        xs.push_back(power ? pt.x : rad_to_hz(pt.x));
        gammas.push_back(rad_to_hz(pt.gamma_eff));
        springs.push_back(rad_to_hz(pt.spring_shift));
        nfs.push_back(pt.n_f);
    }
    return {{"variable", power ? "n_c" : "delta_c_hz"},
            {power ? "n_c" : "delta_c_hz", xs},
            {"gamma_eff_hz", gammas},
            {"spring_hz", springs},
            {"n_f", nfs}};
}

json to_json(const sweep::SweepResult& result) {
    json runs = json::array();
    for (const sweep::SweepRunRecord& r : result.runs) runs.push_back(to_json(r));
    json failures = json::array();
    for (const sweep::RunFailure& f : result.failures)
        failures.push_back({{"id", f.id}, {"error", f.error}});
    json j = {{"runs", runs}, {"failures", failures}, {"theory", to_json(result.theory)}};
    if (result.pooled_calibration)
        j["pooled_calibration"] = to_json(*result.pooled_calibration);
    if (result.heating) j["heating"] = to_json(*result.heating);
    if (result.snr) j["snr"] = to_json(*result.snr);
    if (result.heating_error) j["heating_error"] = *result.heating_error;
    if (result.snr_error) j["snr_error"] = *result.snr_error;
    return j;
}

// ---------------------------------------------------------------------------
// CSV / report rendering
// ---------------------------------------------------------------------------

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

} // namespace

std::string theory_table_csv(const sweep::TheoryTable& table) {
    const bool power = table.variable == sweep::SweptVariable::CoolingPhotons;
    std::ostringstream out;
    out << (power ? "n_c" : "delta_c_hz") << ",gamma_eff_hz,spring_hz,n_f\n";
    for (const sweep::TheoryPoint& pt : table.rows) {
        out << fmt(power ? pt.x : rad_to_hz(pt.x)) << ','
            << fmt(rad_to_hz(pt.gamma_eff)) << ',' << fmt(rad_to_hz(pt.spring_shift))
            << ',' << fmt(pt.n_f) << '\n';
    }
    return out.str();
}

std::string theory_csv_from_summary(const json& summary) {
    const json& t = summary.at("theory");
    const std::string xname = t.at("variable").get<std::string>();
    std::ostringstream out;
    out << xname << ",gamma_eff_hz,spring_hz,n_f\n";
    const auto& xs = t.at(xname);
    const auto& gammas = t.at("gamma_eff_hz");
    const auto& springs = t.at("spring_hz");
    const auto& nfs = t.at("n_f");
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double n_f = nfs[i].is_null() ? nan : nfs[i].get<double>();
        out << fmt(xs[i].get<double>()) << ',' << fmt(gammas[i].get<double>()) << ','
            << fmt(springs[i].get<double>()) << ',' << fmt(n_f) << '\n';
    }
    return out.str();
}

std::string runs_csv_from_summary(const json& summary) {
    std::ostringstream out;
    out << "id,n_c,n_b,delta_c_hz,gamma_eff_hz,area1_hz,snr,"
           "n_f_asymmetry,sigma_asymmetry,n_f_calibrated,sigma_calibrated,"
           "n_f_anchored,sigma_anchored\n";
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (const json& r : summary.at("runs")) {
        double delta_c = nan;
        auto occ_cols = [&](const char* key) {
            if (!r.contains(key)) return std::string(",nan,nan");
            const json& occ = r.at(key);
            delta_c = occ.at("inputs").at("delta_c_hz").get<double>();
            const double sigma = 0.5 * (occ.at("sigma_lo").get<double>() +
                                        occ.at("sigma_hi").get<double>());
            return "," + fmt(occ.at("n_f").get<double>()) + "," + fmt(sigma);
        };
        // evaluate occupancy columns first so delta_c is filled from any of them
        const std::string asym = occ_cols("occupancy_asymmetry");
        const std::string calib = occ_cols("occupancy_calibrated");
        const std::string anch = occ_cols("occupancy_anchored");
        out << r.at("id").get<std::string>() << ','
            << fmt(r.at("drive").at("n_c").get<double>()) << ','
            << fmt(r.at("drive").at("n_b").get<double>()) << ',' << fmt(delta_c) << ','
            << fmt(r.at("fit").at("parameters").at("gamma_eff_hz").get<double>()) << ','
            << fmt(r.at("fit").at("parameters").at("area1_hz").get<double>()) << ','
            << fmt(r.at("snr").get<double>()) << asym << calib << anch << '\n';
    }
    return out.str();
}

std::string sweep_ledger_jsonl(const sweep::SweepResult& result) {
    std::ostringstream out;
    for (const sweep::SweepRunRecord& r : result.runs) out << to_json(r).dump() << '\n';
    for (const sweep::RunFailure& f : result.failures)
        out << json({{"id", f.id}, {"error", f.error}}).dump() << '\n';
    return out.str();
}

std::string render_report_text(const json& summary) {
    std::ostringstream out;
    const auto& runs = summary.at("runs");
    const auto& failures = summary.at("failures");
    out << "sweep summary\n";
    out << "  runs: " << runs.size() << " ok, " << failures.size() << " failed\n";
    if (summary.contains("pooled_calibration")) {
        const auto& c = summary.at("pooled_calibration");
        out << "  pooled calibration: C_cal = " << c.at("c_cal").get<double>() << " +- "
            << c.at("c_cal_sigma").get<double>() << " ("
            << c.at("source_runs").size() << " runs)\n";
    }
    if (summary.contains("heating")) {
        const auto& h = summary.at("heating");
        out << "  heating: alpha1 = " << h.at("alpha1").get<double>() << " +- "
            << h.at("alpha1_sigma").get<double>()
            << ", alpha2 = " << h.at("alpha2").get<double>() << " +- "
            << h.at("alpha2_sigma").get<double>() << "\n";
    }
    if (summary.contains("heating_error"))
        out << "  heating fit failed: " << summary.at("heating_error").get<std::string>()
            << "\n";
    if (summary.contains("snr")) {
        const auto& s = summary.at("snr");
        out << "  detection efficiency: eta = " << s.at("eta").get<double>() << " +- "
            << s.at("eta_sigma").get<double>() << "\n";
    }
    if (summary.contains("snr_error"))
        out << "  SNR fit failed: " << summary.at("snr_error").get<std::string>() << "\n";
    out << "\n  id          n_c        gamma_eff_hz   n_f (best)\n";
    for (const auto& r : runs) {
        double n_f = std::numeric_limits<double>::quiet_NaN();
        for (const char* key :
             {"occupancy_calibrated", "occupancy_anchored", "occupancy_asymmetry"}) {
            if (r.contains(key)) {
                n_f = r.at(key).at("n_f").get<double>();
                break;
            }
        }
        char line[160];
        std::snprintf(line, sizeof(line), "  %-10s  %-9.4g  %-13.6g  %.4g\n",
                      r.at("id").get<std::string>().c_str(),
                      r.at("drive").at("n_c").get<double>(),
                      r.at("fit").at("parameters").at("gamma_eff_hz").get<double>(), n_f);
        out << line;
    }
    for (const auto& f : failures)
        out << "  FAILED " << f.at("id").get<std::string>() << ": "
            << f.at("error").get<std::string>() << "\n";
    return out.str();
}

void write_text_atomic(const std::filesystem::path& file, const std::string& content) {
    const std::filesystem::path parent = file.parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
    std::filesystem::path tmp = file;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw ConfigError("write_text_atomic: cannot open " + tmp.string());
        out << content;
        out.flush();
        if (!out) throw ConfigError("write_text_atomic: write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, file);
}

} // namespace omcool::io
