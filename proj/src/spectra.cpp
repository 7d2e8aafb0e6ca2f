#include "omcool/spectra.hpp"

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include <json.hpp>

namespace omcool::spectra {

namespace {

// One standard normal deviate per call; Box–Muller on raw mt19937_64 output
// so the stream does not depend on the standard library's distribution
// implementation.
class NormalSource {
  public:
    explicit NormalSource(std::uint64_t seed) : rng_(seed) {}

    double operator()() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        spare_ = r * std::sin(two_pi * u2);
        have_spare_ = true;
        return r * std::cos(two_pi * u2);
    }

  private:
    double uniform() {
        // 53-bit mantissa in [0, 1)
        return static_cast<double>(rng_() >> 11) * 0x1.0p-53;
    }

    std::mt19937_64 rng_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

double lorentzian(double weight, double gamma, double detuning) {
    return weight / (gamma * gamma / 4.0 + detuning * detuning);
}

} // namespace

double Spectrum::bin_width_hz() const {
    if (freq_hz.size() < 2) return 0.0;
    return (freq_hz.back() - freq_hz.front()) / static_cast<double>(freq_hz.size() - 1);
}

void Spectrum::validate() const {
    if (freq_hz.size() != psd.size())
        throw ConfigError("Spectrum: frequency and PSD lengths differ");
    if (freq_hz.size() < 2) throw ConfigError("Spectrum: needs at least two bins");
    const double step = bin_width_hz();
    if (!(step > 0.0)) throw ConfigError("Spectrum: grid must be strictly increasing");
    for (std::size_t i = 1; i < freq_hz.size(); ++i) {
        const double d = freq_hz[i] - freq_hz[i - 1];
        if (std::abs(d - step) > 1e-9 * std::max(std::abs(step), std::abs(freq_hz[i])))
            throw ConfigError("Spectrum: grid not uniform to 1e-9 relative");
    }
    for (double v : psd)
        if (!(v >= 0.0)) throw ConfigError("Spectrum: PSD values must be non-negative");
}

std::vector<double> uniform_grid(double f_lo_hz, double f_hi_hz, std::size_t points) {
    if (points < 2 || !(f_hi_hz > f_lo_hz))
        throw ConfigError("uniform_grid: need points >= 2 and f_hi > f_lo");
    std::vector<double> g(points);
    const double step = (f_hi_hz - f_lo_hz) / static_cast<double>(points - 1);
    for (std::size_t i = 0; i < points; ++i)
        g[i] = f_lo_hz + step * static_cast<double>(i);
    return g;
}

Spectrum heterodyne_psd(const model::SystemParams& p, const model::DriveConfig& d,
                        double n_f, double eta, std::vector<double> grid_hz) {
    d.validate();
    if (!(eta >= 0.0 && eta <= 1.0))
        throw ConfigError("heterodyne_psd: eta must be in [0, 1]");
    if (!(n_f >= 0.0)) throw ConfigError("heterodyne_psd: n_f must be non-negative");
    if (!(d.delta < 0.0 && -d.delta < d.delta_lo))
        throw ConfigError("heterodyne_psd: requires ordering 0 < -delta < delta_lo");
    if (grid_hz.size() < 2) throw ConfigError("heterodyne_psd: grid too small");

    const model::ScatteringRates r = scattering_rates(p, d);
    const double gamma_eff = p.gamma_m + r.gamma_opt();
    if (gamma_eff <= 0.0)
        throw InstabilityError("heterodyne_psd: gamma_eff <= 0");

    const double center_blue = rad_to_hz(d.delta_lo - d.delta);  // Stokes, blue probe
    const double center_cool = rad_to_hz(d.delta_lo + d.delta);  // anti-Stokes, cooling tone
    const double margin = 5.0 * rad_to_hz(gamma_eff);
    const double lo = grid_hz.front();
    const double hi = grid_hz.back();
    for (double c : {center_cool, center_blue}) {
        if (c - margin < lo || c + margin > hi)
            throw ConfigError("heterodyne_psd: grid must cover both sideband centers +- 5 gamma_eff");
    }

    Spectrum s;
    s.psd.resize(grid_hz.size());
    for (std::size_t i = 0; i < grid_hz.size(); ++i) {
        const double w = hz_to_rad(grid_hz[i]);
        const double stokes = lorentzian((n_f + 1.0) * r.gamma_b, gamma_eff,
                                         w + d.delta - d.delta_lo);
        const double anti_stokes = lorentzian(n_f * r.gamma_c, gamma_eff,
                                              w - d.delta - d.delta_lo);
        s.psd[i] = 1.0 + eta * gamma_eff * (stokes + anti_stokes);
    }
    s.freq_hz = std::move(grid_hz);
    s.meta.rbw_hz = s.bin_width_hz();
    s.meta.delta_lo_hz = rad_to_hz(d.delta_lo);
    s.meta.drive = d;
    s.validate();
    return s;
}

Spectrum displacement_psd(const model::SystemParams& p, const model::DriveConfig& d,
                          std::vector<double> grid_hz) {
    d.validate();
    if (grid_hz.size() < 2) throw ConfigError("displacement_psd: grid too small");
    const model::ScatteringRates r = scattering_rates(p, d);
    const double gamma_eff = p.gamma_m + r.gamma_opt();
    if (gamma_eff <= 0.0)
        throw InstabilityError("displacement_psd: gamma_eff <= 0");
    const double omega_eff = p.omega_m + spring_shift(p, d);

    const double w_pos = p.gamma_m * (p.n_th + 1.0) + r.gamma_c;
    const double w_neg = p.gamma_m * p.n_th + r.gamma_b;

    Spectrum s;
    s.psd.resize(grid_hz.size());
    for (std::size_t i = 0; i < grid_hz.size(); ++i) {
        const double w = hz_to_rad(grid_hz[i]);
        s.psd[i] = lorentzian(w_pos, gamma_eff, w - omega_eff) +
                   lorentzian(w_neg, gamma_eff, w + omega_eff);
    }
    s.freq_hz = std::move(grid_hz);
    s.meta.rbw_hz = s.bin_width_hz();
    s.meta.drive = d;
    s.validate();
    return s;
}

Spectrum synthesize(const Spectrum& analytic, std::int64_t averages, std::uint64_t seed) {
    if (averages < 1) throw ConfigError("synthesize: averages must be >= 1");
    analytic.validate();
    Spectrum out = analytic;
    NormalSource normal(seed);
    const double rel_sigma = 1.0 / std::sqrt(static_cast<double>(averages));
    for (double& v : out.psd) {
        v = std::max(0.0, v * (1.0 + rel_sigma * normal()));
    }
    out.meta.averages = averages;
    return out;
}

Spectrum shot_reference(std::vector<double> grid_hz, std::int64_t averages,
                        std::uint64_t seed) {
    Spectrum flat;
    flat.psd.assign(grid_hz.size(), 1.0);
    flat.freq_hz = std::move(grid_hz);
    flat.meta.shot_reference = true;
    Spectrum out = synthesize(flat, averages, seed);
    out.meta.rbw_hz = out.bin_width_hz();
    return out;
}

Spectrum apply_noise_floor(Spectrum s, const NoiseFloorModel& model,
                           double reflected_power_w) {
    if (reflected_power_w < 0.0)
        throw ConfigError("apply_noise_floor: negative reflected power");
    if (!(model.intercept > 0.0) || model.slope_per_w < 0.0)
        throw ConfigError("apply_noise_floor: invalid noise floor model");
    const double offset = model.slope_per_w * reflected_power_w;
    for (double& v : s.psd) v += offset;
    return s;
}

Spectrum normalize_to_reference(const Spectrum& measurement, const Spectrum& reference) {
    if (measurement.size() != reference.size())
        throw ConfigError("normalize_to_reference: size mismatch");
    Spectrum out = measurement;
    for (std::size_t i = 0; i < out.psd.size(); ++i) {
        if (!(reference.psd[i] > 0.0))
            throw ConfigError("normalize_to_reference: reference has a non-positive bin");
        out.psd[i] /= reference.psd[i];
    }
    return out;
}

std::filesystem::path sidecar_path(const std::filesystem::path& csv_file) {
    std::filesystem::path p = csv_file;
    p += ".meta.json";
    return p;
}

namespace {

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

nlohmann::json drive_to_json(const model::DriveConfig& d) {
    return {{"n_c", d.n_c},
            {"n_b", d.n_b},
            {"delta_mean_hz", rad_to_hz(d.delta_mean)},
            {"delta_hz", rad_to_hz(d.delta)},
            {"delta_lo_hz", rad_to_hz(d.delta_lo)}};
}

model::DriveConfig drive_from_json(const nlohmann::json& j) {
    model::DriveConfig d;
    d.n_c = j.at("n_c").get<double>();
    d.n_b = j.at("n_b").get<double>();
    d.delta_mean = hz_to_rad(j.at("delta_mean_hz").get<double>());
    d.delta = hz_to_rad(j.at("delta_hz").get<double>());
    d.delta_lo = hz_to_rad(j.at("delta_lo_hz").get<double>());
    return d;
}

double parse_double(const std::string& text) {
    double v = 0.0;
    const char* first = text.data();
    const char* last = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last)
        throw ConfigError("spectrum CSV: malformed number '" + text + "'");
    return v;
}

// write-temp-then-rename so interrupted runs never leave truncated files
void write_file_atomic(const std::filesystem::path& file, const std::string& content) {
    std::filesystem::path tmp = file;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw ConfigError("write_csv: cannot open " + tmp.string());
        out << content;
        out.flush();
        if (!out) throw ConfigError("write_csv: write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, file);
}

} // namespace

void write_csv(const Spectrum& s, const std::filesystem::path& file) {
    s.validate();
    std::ostringstream body;
    body << "freq_hz,psd_sn\n";
    for (std::size_t i = 0; i < s.size(); ++i)
        body << format_double(s.freq_hz[i]) << ',' << format_double(s.psd[i]) << '\n';
    write_file_atomic(file, body.str());
    nlohmann::json meta = {{"rbw_hz", s.meta.rbw_hz},
                           {"averages", s.meta.averages},
                           {"delta_lo_hz", s.meta.delta_lo_hz},
                           {"drive", drive_to_json(s.meta.drive)},
                           {"shot_reference", s.meta.shot_reference}};
    write_file_atomic(sidecar_path(file), meta.dump(2) + "\n");
}

Spectrum read_csv(const std::filesystem::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw ConfigError("read_csv: cannot open " + file.string());
    std::string line;
    if (!std::getline(in, line)) throw ConfigError("read_csv: empty file " + file.string());
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "freq_hz,psd_sn")
        throw ConfigError("read_csv: expected header 'freq_hz,psd_sn' in " + file.string());

    Spectrum s;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos)
            throw ConfigError("read_csv: malformed row '" + line + "'");
        s.freq_hz.push_back(parse_double(line.substr(0, comma)));
        s.psd.push_back(parse_double(line.substr(comma + 1)));
    }

    const auto sidecar = sidecar_path(file);
    if (std::filesystem::exists(sidecar)) {
        std::ifstream meta_in(sidecar, std::ios::binary);
        nlohmann::json meta = nlohmann::json::parse(meta_in);
        s.meta.rbw_hz = meta.value("rbw_hz", 0.0);
        s.meta.averages = meta.value("averages", std::int64_t{1});
        s.meta.delta_lo_hz = meta.value("delta_lo_hz", 0.0);
        s.meta.shot_reference = meta.value("shot_reference", false);
        if (meta.contains("drive")) s.meta.drive = drive_from_json(meta.at("drive"));
    } else {
        s.meta.rbw_hz = s.bin_width_hz();
    }
    s.validate();
    return s;
}

} // namespace omcool::spectra
