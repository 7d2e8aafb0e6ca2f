// support.hpp — shared fixtures and independent numeric oracles for the tests
#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "omcool/model.hpp"

namespace support {

// The demo device: kappa/2pi = 255 MHz (71 ext + 184 intrinsic), Omega_m/2pi
// = 5.17 GHz, Gamma_int/2pi = 65 kHz + 50 kHz gas, g0/2pi = 1.08 MHz, 2.0 K.
inline omcool::model::SystemParams device_params() {
    using namespace omcool;
    return model::make_system_params(hz_to_rad(71e6), hz_to_rad(184e6),
                                     hz_to_rad(5.17e9), hz_to_rad(65e3),
                                     hz_to_rad(50e3), hz_to_rad(1.08e6), 2.0);
}

// Single cooling tone parked exactly on the red sideband.
inline omcool::model::DriveConfig single_tone(double n_c, double delta_hz = 0.0,
                                              double delta_lo_hz = 0.0) {
    omcool::model::DriveConfig d;
    d.n_c = n_c;
    d.delta = omcool::hz_to_rad(delta_hz);
    d.delta_mean = d.delta; // Delta - delta = 0
    d.delta_lo = omcool::hz_to_rad(delta_lo_hz);
    return d;
}

class Rng {
  public:
    explicit Rng(std::uint64_t seed) : rng_(seed) {}
    double uniform(double lo, double hi) {
        return lo + (hi - lo) * std::uniform_real_distribution<double>(0.0, 1.0)(rng_);
    }
    double log_uniform(double lo, double hi) {
        return std::exp(uniform(std::log(lo), std::log(hi)));
    }
  private:
    std::mt19937_64 rng_;
};

inline double trapezoid(const std::vector<double>& x, const std::vector<double>& y) {
    double s = 0.0;
    for (std::size_t i = 1; i < x.size(); ++i)
        s += 0.5 * (y[i] + y[i - 1]) * (x[i] - x[i - 1]);
    return s;
}

// Lorentzian-tail-aware integral: trapezoid over the full span combined with
// the half-span value by Richardson extrapolation in 1/X (tails fall as 1/X).
inline double integrate_with_tails(const std::vector<double>& x,
                                   const std::vector<double>& y) {
    const double full = trapezoid(x, y);
    const double mid = 0.5 * (x.front() + x.back());
    const double quarter = 0.25 * (x.back() - x.front());
    std::vector<double> xi, yi;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (x[i] >= mid - quarter && x[i] <= mid + quarter) {
            xi.push_back(x[i]);
            yi.push_back(y[i]);
        }
    }
    const double half = trapezoid(xi, yi);
    return 2.0 * full - half;
}

inline double rel_err(double a, double b) {
    return std::abs(a - b) / std::max(std::abs(b), 1e-300);
}

} // namespace support
