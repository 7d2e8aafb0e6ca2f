#include "omcool/fitting.hpp"

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <cmath>
#include <complex>
#include <cstdio>
#include <fstream>
#include <numeric>

namespace omcool::fit {

namespace {

double median_of(std::vector<double> v) {
    const std::size_t n = v.size();
    auto mid = v.begin() + static_cast<std::ptrdiff_t>(n / 2);
    std::nth_element(v.begin(), mid, v.end());
    double m = *mid;
    if (n % 2 == 0) {
        auto lower = std::max_element(v.begin(), mid);
        m = 0.5 * (m + *lower);
    }
    return m;
}

struct PeakCandidate {
    std::size_t index = 0;
    double height = 0.0; // above the background
};

// Strict local maxima of the median-subtracted data, tallest first.
std::vector<PeakCandidate> local_maxima(const std::vector<double>& excess) {
    std::vector<PeakCandidate> peaks;
    for (std::size_t i = 1; i + 1 < excess.size(); ++i) {
        if (excess[i] > excess[i - 1] && excess[i] >= excess[i + 1])
            peaks.push_back({i, excess[i]});
    }
    std::sort(peaks.begin(), peaks.end(),
              [](const PeakCandidate& a, const PeakCandidate& b) {
                  return a.height > b.height;
              });
    return peaks;
}

std::vector<double> moving_average(const std::vector<double>& v, std::size_t window) {
    if (window < 2) return v;
    const std::size_t half = window / 2;
    std::vector<double> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        const std::size_t lo = i >= half ? i - half : 0;
        const std::size_t hi = std::min(v.size() - 1, i + half);
        double sum = 0.0;
        for (std::size_t k = lo; k <= hi; ++k) sum += v[k];
        out[i] = sum / static_cast<double>(hi - lo + 1);
    }
    return out;
}

// Full width of the peak at half its prominence, in bins.
double half_prominence_width_bins(const std::vector<double>& excess, std::size_t peak) {
    const double level = 0.5 * excess[peak];
    std::size_t left = peak;
    while (left > 0 && excess[left] > level) --left;
    std::size_t right = peak;
    while (right + 1 < excess.size() && excess[right] > level) ++right;
    return std::max<double>(static_cast<double>(right - left), 1.0);
}

struct ScaledProblem {
    std::vector<double> x;   // (ω − ω_ref)/span
    std::vector<double> y;   // psd/median
    double median = 0.0;
    double omega_ref = 0.0;  // rad/s
    double span = 0.0;       // rad/s
};

ScaledProblem scale_spectrum(const spectra::Spectrum& s) {
    ScaledProblem sp;
    const std::size_t n = s.size();
    sp.median = median_of(s.psd);
    if (!(sp.median > 0.0)) sp.median = 1.0;
    const double w_lo = hz_to_rad(s.freq_hz.front());
    const double w_hi = hz_to_rad(s.freq_hz.back());
    sp.omega_ref = 0.5 * (w_lo + w_hi);
    sp.span = 0.5 * (w_hi - w_lo);
    sp.x.resize(n);
    sp.y.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        sp.x[i] = (hz_to_rad(s.freq_hz[i]) - sp.omega_ref) / sp.span;
        sp.y[i] = s.psd[i] / sp.median;
    }
    return sp;
}

// Parameter layout: Single [c, A1, w1, g]; Double [c, A1, w1, A2, w2, g].
struct Layout {
    int n_params;
    int i_c = 0, i_a1 = 1, i_w1 = 2, i_a2 = 3, i_w2 = 4;
    int i_g;
    explicit Layout(PeakMode mode)
        : n_params(mode == PeakMode::Double ? 6 : 4),
          i_g(mode == PeakMode::Double ? 5 : 3) {}
};

double lorentz_term(double a, double w0, double g, double x) {
    const double d = x - w0;
    return g * a / (g * g / 4.0 + d * d);
}

} // namespace

double LorentzianFitResult::sigma_of(const std::string& name) const {
    for (std::size_t i = 0; i < parameter_names.size(); ++i)
        if (parameter_names[i] == name) return sigmas[i];
    throw std::invalid_argument("LorentzianFitResult: unknown parameter " + name);
}

LorentzianFitResult fit_lorentzians(const spectra::Spectrum& spectrum, PeakMode mode,
                                    const std::optional<LorentzianInit>& init,
                                    const FitOptions& options) {
    spectrum.validate();
    const std::size_t n = spectrum.size();
    const Layout lay(mode);
    if (n < static_cast<std::size_t>(lay.n_params) + 2)
        throw ConfigError("fit_lorentzians: spectrum too short for the model");

    ScaledProblem sp = scale_spectrum(spectrum);

    // Peak detection on the normalized data.
    std::vector<double> excess(n);
    for (std::size_t i = 0; i < n; ++i) excess[i] = sp.y[i] - 1.0;
    std::vector<double> abs_dev(n);
    for (std::size_t i = 0; i < n; ++i) abs_dev[i] = std::abs(excess[i]);
    const double mad = median_of(abs_dev);
    const double threshold = 5.0 * mad;
    const bool any_above =
        std::any_of(excess.begin(), excess.end(),
                    [&](double e) { return e > threshold && e > 0.0; });
    if (!any_above)
        throw PeakNotFoundError(
            "fit_lorentzians: no bin exceeds background median + 5 MAD");

    const std::vector<PeakCandidate> raw_peaks = local_maxima(excess);
    if (raw_peaks.empty())
        throw PeakNotFoundError("fit_lorentzians: no local maximum found");

    // Candidate detection runs on a lightly smoothed curve so that noise
    // ripple on a wide peak's shoulder does not masquerade as a sideband. The
    // window is scaled from the raw width estimate and vanishes for narrow
    // peaks.
    const double raw_width = half_prominence_width_bins(excess, raw_peaks.front().index);
    std::size_t window = static_cast<std::size_t>(std::max(3.0, raw_width / 8.0));
    window = std::min(window, n / 10 + 1);
    const std::vector<double> smooth = moving_average(excess, window);

    const std::vector<PeakCandidate> peaks = local_maxima(smooth);
    if (peaks.empty())
        throw PeakNotFoundError("fit_lorentzians: no local maximum found");

    const double bin_w = 2.0 / static_cast<double>(n - 1); // grid step in scaled x
    const PeakCandidate tallest = peaks.front();
    const double width_bins = half_prominence_width_bins(smooth, tallest.index);
    // Second candidate: the largest remaining local maximum separated by more
    // than 5 bins and clear of the tallest peak's own core.
    const double min_separation = std::max(5.0, width_bins);
    PeakCandidate second{n / 2, 0.0};
    bool have_second = false;
    for (std::size_t i = 1; i < peaks.size(); ++i) {
        const auto gap = std::llabs(static_cast<long long>(peaks[i].index) -
                                    static_cast<long long>(tallest.index));
        if (static_cast<double>(gap) > min_separation) {
            second = peaks[i];
            have_second = true;
            break;
        }
    }

    const double gamma0 = width_bins * bin_w;

    std::vector<double> p(static_cast<std::size_t>(lay.n_params), 0.0);
    p[lay.i_c] = 1.0;
    p[lay.i_g] = gamma0;
    p[lay.i_a1] = tallest.height * gamma0 / 4.0;
    p[lay.i_w1] = sp.x[tallest.index];
    if (mode == PeakMode::Double) {
        if (options.fix_area2_zero) {
            p[lay.i_a2] = 0.0;
            p[lay.i_w2] = have_second ? sp.x[second.index] : -p[lay.i_w1];
        } else if (have_second) {
            p[lay.i_a2] = std::max(second.height, tallest.height * 1e-3) * gamma0 / 4.0;
            p[lay.i_w2] = sp.x[second.index];
        } else {
            // No second maximum; start it mirrored across the grid center.
            p[lay.i_a2] = tallest.height * 1e-3 * gamma0 / 4.0;
            p[lay.i_w2] = -p[lay.i_w1];
        }
    }

    // Explicit initial guesses override the automatic ones (given in physical
    // units; converted to the scaled frame).
    if (init) {
        auto to_x = [&](double w) { return (w - sp.omega_ref) / sp.span; };
        auto to_a = [&](double a) { return a / (sp.median * sp.span); };
        if (init->background) p[lay.i_c] = *init->background / sp.median;
        if (init->area_1) p[lay.i_a1] = to_a(*init->area_1);
        if (init->center_1) p[lay.i_w1] = to_x(*init->center_1);
        if (init->gamma_eff) p[lay.i_g] = *init->gamma_eff / sp.span;
        if (mode == PeakMode::Double) {
            if (init->area_2) p[lay.i_a2] = to_a(*init->area_2);
            if (init->center_2) p[lay.i_w2] = to_x(*init->center_2);
        }
    }

    const double weight =
        options.scale_weights_by_averages
            ? std::sqrt(std::max<double>(1.0, static_cast<double>(spectrum.meta.averages)))
            : 1.0;

    auto model_at = [&](const std::vector<double>& q, double x) {
        double v = q[lay.i_c] + lorentz_term(q[lay.i_a1], q[lay.i_w1], q[lay.i_g], x);
        if (mode == PeakMode::Double)
            v += lorentz_term(q[lay.i_a2], q[lay.i_w2], q[lay.i_g], x);
        return v;
    };

    lsq::ResidualFn residuals = [&](const std::vector<double>& q, Eigen::VectorXd& r) {
        r.resize(static_cast<Eigen::Index>(n));
        for (std::size_t i = 0; i < n; ++i)
            r(static_cast<Eigen::Index>(i)) = weight * (model_at(q, sp.x[i]) - sp.y[i]);
    };

    lsq::JacobianFn jacobian = [&](const std::vector<double>& q, Eigen::MatrixXd& J) {
        J.setZero(static_cast<Eigen::Index>(n), lay.n_params);
        const double g = q[lay.i_g];
        for (std::size_t i = 0; i < n; ++i) {
            const auto row = static_cast<Eigen::Index>(i);
            J(row, lay.i_c) = weight;
            double dg = 0.0;
            auto accumulate = [&](int ia, int iw) {
                const double d = sp.x[i] - q[iw];
                const double den = g * g / 4.0 + d * d;
                J(row, ia) = weight * g / den;
                J(row, iw) = weight * 2.0 * g * q[ia] * d / (den * den);
                dg += q[ia] * (den - g * g / 2.0) / (den * den);
            };
            accumulate(lay.i_a1, lay.i_w1);
            if (mode == PeakMode::Double) accumulate(lay.i_a2, lay.i_w2);
            J(row, lay.i_g) = weight * dg;
        }
    };

    std::vector<bool> mask(static_cast<std::size_t>(lay.n_params), true);
    if (mode == PeakMode::Double && options.fix_area2_zero) {
        mask[static_cast<std::size_t>(lay.i_a2)] = false;
        mask[static_cast<std::size_t>(lay.i_w2)] = false;
        p[lay.i_a2] = 0.0;
    }

    lsq::Options lm_opts;
    lm_opts.grad_tol = options.grad_tol;
    lm_opts.step_tol = options.step_tol;
    lm_opts.max_iterations = options.max_iterations;
    lsq::Result sol = lsq::minimize(residuals, jacobian, n, p, mask, lm_opts);
    // A final iterate with merged centers is diagnosed as overlap whether or
    // not the minimizer met its tolerances; such data cannot be fit with two
    // separated sidebands.
    if (mode == PeakMode::Double && !options.fix_area2_zero &&
        std::abs(sol.params[static_cast<std::size_t>(lay.i_w1)] -
                 sol.params[static_cast<std::size_t>(lay.i_w2)]) <
            std::abs(sol.params[static_cast<std::size_t>(lay.i_g)]))
        throw OverlappingSidebandsError(
            "fit_lorentzians: sideband separation below gamma_eff at convergence");
    if (!sol.converged)
        throw NoConvergenceError("fit_lorentzians: no convergence within iteration cap");

    // Map back to physical units. Scale factors per parameter column.
    std::vector<double> scale(static_cast<std::size_t>(lay.n_params), 1.0);
    scale[lay.i_c] = sp.median;
    scale[lay.i_a1] = sp.median * sp.span;
    scale[lay.i_w1] = sp.span;
    scale[lay.i_g] = sp.span;
    if (mode == PeakMode::Double) {
        scale[lay.i_a2] = sp.median * sp.span;
        scale[lay.i_w2] = sp.span;
    }

    LorentzianFitResult out;
    out.mode = mode;
    out.iterations = sol.iterations;
    out.residual_norm = std::sqrt(2.0 * sol.cost) * sp.median / weight;

    std::vector<double> values(static_cast<std::size_t>(lay.n_params));
    std::vector<double> sigmas(static_cast<std::size_t>(lay.n_params));
    for (int j = 0; j < lay.n_params; ++j) {
        const auto ju = static_cast<std::size_t>(j);
        values[ju] = sol.params[ju] * scale[ju];
        sigmas[ju] = sol.sigmas[ju] * scale[ju];
    }
    // Center offsets are relative to the grid midpoint; add it back.
    values[static_cast<std::size_t>(lay.i_w1)] += sp.omega_ref;
    if (mode == PeakMode::Double)
        values[static_cast<std::size_t>(lay.i_w2)] += sp.omega_ref;

    // Full covariance in physical units (zero rows/columns for frozen params).
    std::vector<double> cov(static_cast<std::size_t>(lay.n_params * lay.n_params), 0.0);
    {
        std::vector<int> free_cols;
        for (int j = 0; j < lay.n_params; ++j)
            if (mask[static_cast<std::size_t>(j)]) free_cols.push_back(j);
        for (std::size_t a = 0; a < free_cols.size(); ++a)
            for (std::size_t b = 0; b < free_cols.size(); ++b) {
                const int ja = free_cols[a];
                const int jb = free_cols[b];
                cov[static_cast<std::size_t>(ja * lay.n_params + jb)] =
                    sol.covariance(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) *
                    scale[static_cast<std::size_t>(ja)] * scale[static_cast<std::size_t>(jb)];
            }
    }

    auto assign = [&](int ic, int ia1, int iw1, int ia2, int iw2, int ig) {
        out.background = values[static_cast<std::size_t>(ic)];
        out.area_1 = values[static_cast<std::size_t>(ia1)];
        out.center_1 = values[static_cast<std::size_t>(iw1)];
        out.gamma_eff = values[static_cast<std::size_t>(ig)];
        if (mode == PeakMode::Double) {
            out.area_2 = values[static_cast<std::size_t>(ia2)];
            out.center_2 = values[static_cast<std::size_t>(iw2)];
        }
    };

    // The width can converge to either sign (the model is even in Γ).
    values[static_cast<std::size_t>(lay.i_g)] =
        std::abs(values[static_cast<std::size_t>(lay.i_g)]);

    bool swapped = false;
    if (mode == PeakMode::Double && !options.fix_area2_zero &&
        values[static_cast<std::size_t>(lay.i_w1)] > values[static_cast<std::size_t>(lay.i_w2)]) {
        // Sideband identity is assigned by center frequency: the cooling-tone
        // sideband is the lower one.
        std::swap(values[static_cast<std::size_t>(lay.i_a1)],
                  values[static_cast<std::size_t>(lay.i_a2)]);
        std::swap(values[static_cast<std::size_t>(lay.i_w1)],
                  values[static_cast<std::size_t>(lay.i_w2)]);
        std::swap(sigmas[static_cast<std::size_t>(lay.i_a1)],
                  sigmas[static_cast<std::size_t>(lay.i_a2)]);
        std::swap(sigmas[static_cast<std::size_t>(lay.i_w1)],
                  sigmas[static_cast<std::size_t>(lay.i_w2)]);
        swapped = true;
    }
    if (swapped) {
        auto permute = [&](int j) {
            if (j == lay.i_a1) return lay.i_a2;
            if (j == lay.i_a2) return lay.i_a1;
            if (j == lay.i_w1) return lay.i_w2;
            if (j == lay.i_w2) return lay.i_w1;
            return j;
        };
        std::vector<double> cov2(cov.size());
        for (int a = 0; a < lay.n_params; ++a)
            for (int b = 0; b < lay.n_params; ++b)
                cov2[static_cast<std::size_t>(a * lay.n_params + b)] =
                    cov[static_cast<std::size_t>(permute(a) * lay.n_params + permute(b))];
        cov = std::move(cov2);
    }

    assign(lay.i_c, lay.i_a1, lay.i_w1, lay.i_a2, lay.i_w2, lay.i_g);
    out.values = std::move(values);
    out.sigmas = std::move(sigmas);
    out.covariance = std::move(cov);
    out.parameter_names = mode == PeakMode::Double
        ? std::vector<std::string>{"background", "area1", "center1", "area2", "center2", "gamma_eff"}
        : std::vector<std::string>{"background", "area1", "center1", "gamma_eff"};

    if (!(out.gamma_eff > 0.0))
        throw NoConvergenceError("fit_lorentzians: converged to non-positive width");
    return out;
}

std::vector<double> omit_reflection_psd(double kappa, double kappa_ex, double delta_c,
                                        double coupling_rate, double omega_m,
                                        double gamma_m,
                                        const std::vector<double>& freq_hz) {
    std::vector<double> out(freq_hz.size());
    const double g2 = coupling_rate * coupling_rate;
    for (std::size_t i = 0; i < freq_hz.size(); ++i) {
        const double w = hz_to_rad(freq_hz[i]);
        const std::complex<double> mech(gamma_m / 2.0, -(w - omega_m));
        const std::complex<double> den =
            std::complex<double>(kappa / 2.0, -(w + delta_c)) + g2 / mech;
        const std::complex<double> r = 1.0 - kappa_ex / den;
        out[i] = std::norm(r);
    }
    return out;
}

namespace {

lsq::Result fit_coherent_once(const CoherentTrace& trace, const CoherentInit& init,
                              double delta_c_init, const FitOptions& options) {
    const std::size_t n = trace.freq_hz.size();
    // Parameters: [scale, kappa, kappa_ex, delta_c, coupling_rate, omega_m]
    std::vector<double> p = {init.scale, init.kappa, init.kappa_ex,
                             delta_c_init, init.coupling_rate, init.omega_m};
    lsq::ResidualFn residuals = [&](const std::vector<double>& q, Eigen::VectorXd& r) {
        const std::vector<double> model = omit_reflection_psd(
            q[1], q[2], q[3], q[4], q[5], init.gamma_m, trace.freq_hz);
        r.resize(static_cast<Eigen::Index>(n));
        for (std::size_t i = 0; i < n; ++i)
            r(static_cast<Eigen::Index>(i)) = q[0] * model[i] - trace.response[i];
    };
    lsq::Options lm_opts;
    lm_opts.grad_tol = options.grad_tol;
    lm_opts.step_tol = options.step_tol;
    lm_opts.max_iterations = options.max_iterations;
    return lsq::minimize(residuals, nullptr, n, p, std::vector<bool>(6, true), lm_opts);
}

} // namespace

CoherentResponseFit fit_coherent_response(const CoherentTrace& trace,
                                          const CoherentInit& init,
                                          const FitOptions& options) {
    if (trace.freq_hz.size() != trace.response.size() || trace.freq_hz.size() < 8)
        throw ConfigError("fit_coherent_response: trace too short or inconsistent");
    if (!(init.kappa > 0.0) || !(init.gamma_m > 0.0))
        throw ConfigError("fit_coherent_response: init requires kappa > 0 and gamma_m > 0");

    lsq::Result sol = fit_coherent_once(trace, init, init.delta_c, options);
    if (!sol.converged)
        throw NoConvergenceError("fit_coherent_response: no convergence within iteration cap");

    CoherentResponseFit out;
    out.scale = sol.params[0];
    out.scale_sigma = sol.sigmas[0];
    out.kappa = std::abs(sol.params[1]);
    out.kappa_sigma = sol.sigmas[1];
    out.kappa_ex = std::abs(sol.params[2]);
    out.kappa_ex_sigma = sol.sigmas[2];
    out.delta_c = sol.params[3];
    out.coupling_rate = std::abs(sol.params[4]);
    out.coupling_rate_sigma = sol.sigmas[4];
    out.omega_m = sol.params[5];
    out.omega_m_sigma = sol.sigmas[5];
    out.iterations = sol.iterations;
    out.residual_norm = std::sqrt(2.0 * sol.cost);

    // Systematic detuning uncertainty floor of ±2π × 10 MHz.
    const double sigma_floor = hz_to_rad(10e6);
    out.delta_c_sigma = std::max(sol.sigmas[3], sigma_floor);

    // Check whether the mirrored detuning hypothesis describes the trace just
    // as well; if so the sign cannot be inferred from this trace.
    if (init.delta_c != 0.0) {
        lsq::Result mirrored = fit_coherent_once(trace, init, -init.delta_c, options);
        if (mirrored.converged) {
            const double scale_cost = std::max({sol.cost, mirrored.cost, 1e-300});
            if (std::abs(mirrored.cost - sol.cost) <= 1e-2 * scale_cost &&
                mirrored.params[3] * sol.params[3] < 0.0)
                out.ambiguous_sign = true;
        }
    }
    return out;
}

namespace {

double parse_csv_double(const std::string& text) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || ptr != text.data() + text.size())
        throw ConfigError("trace CSV: malformed number '" + text + "'");
    return v;
}

} // namespace

void write_trace_csv(const CoherentTrace& trace, const std::filesystem::path& file) {
    if (trace.freq_hz.size() != trace.response.size())
        throw ConfigError("write_trace_csv: inconsistent trace");
    std::ofstream out(file, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("write_trace_csv: cannot open " + file.string());
    out << "freq_hz,response\n";
    char buf[96];
    for (std::size_t i = 0; i < trace.freq_hz.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.17g,%.17g\n", trace.freq_hz[i],
                      trace.response[i]);
        out << buf;
    }
}

CoherentTrace read_trace_csv(const std::filesystem::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw ConfigError("read_trace_csv: cannot open " + file.string());
    std::string line;
    if (!std::getline(in, line))
        throw ConfigError("read_trace_csv: empty file " + file.string());
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "freq_hz,response")
        throw ConfigError("read_trace_csv: expected header 'freq_hz,response'");
    CoherentTrace t;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos)
            throw ConfigError("read_trace_csv: malformed row '" + line + "'");
        t.freq_hz.push_back(parse_csv_double(line.substr(0, comma)));
        t.response.push_back(parse_csv_double(line.substr(comma + 1)));
    }
    return t;
}

} // namespace omcool::fit
