// Copyright 2026 The aplclock Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef APLCLOCK_OSCILLATOR_HPP
#define APLCLOCK_OSCILLATOR_HPP

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <vector>

#include "aplclock/errors.hpp"
#include "aplclock/random.hpp"

namespace aplclock {

/// One-sided fractional-frequency PSD S_y(f) = h0 + h_minus1 / f + h_minus2 / f^2.
struct NoiseSpec {
    double h0 = 0.0;
    double h_minus1 = 0.0;
    double h_minus2 = 0.0;

    void validate() const {
        if (!(h0 >= 0.0) || !(h_minus1 >= 0.0) || !(h_minus2 >= 0.0)) {
            throw InvalidArgument("noise levels must be non-negative");
        }
    }

    bool is_zero() const {
        return h0 == 0.0 && h_minus1 == 0.0 && h_minus2 == 0.0;
    }

    /// Hydrogen-maser-like reference: sigma_y(1 s) ~ 1e-13, flicker floor ~ 1e-15.
    /// Keeps the 0.1 s phase error of a 12.6 GHz carrier well under 0.02 rad.
    static NoiseSpec maser() {
        return {2e-26, 7e-31, 0.0};
    }

    /// A free-running synthesizer whose 0.1 s phase error (~0.2 rad) rivals the readout noise.
    static NoiseSpec noisy_lo() {
        return {1e-22, 1e-24, 1e-26};
    }
};

/// Flicker FM as a sum of octave-spaced first-order relaxators.
///
/// A relaxator with corner f_k and variance s^2 has the Lorentzian PSD
/// (2 s^2 / (pi f_k)) / (1 + (f / f_k)^2). With one relaxator per octave and
/// s^2 = h ln 2 the sum approaches h / f between the outer corners.
class FlickerBank {
   public:
    FlickerBank() = default;

    FlickerBank(double h_minus1, double f_lo, double f_hi, RngStream &rng) : level_(h_minus1) {
        if (h_minus1 <= 0.0) {
            return;
        }
        const double var = h_minus1 * std::numbers::ln2;
        for (double f = f_lo; f <= f_hi * (1.0 + 1e-12); f *= 2.0) {
            corners_.push_back(f);
            states_.push_back(rng.normal(0.0, std::sqrt(var)));
        }
    }

    /// Advances every relaxator by dt and returns the sum of those whose corner
    /// is resolvable at this step (f_k <= 1 / (2 dt)); faster ones average out.
    double step(double dt, RngStream &rng) {
        const double var = level_ * std::numbers::ln2;
        const double nyquist = 0.5 / dt;
        double y = 0.0;
        for (std::size_t k = 0; k < corners_.size(); ++k) {
            const double rho = std::exp(-2.0 * std::numbers::pi * corners_[k] * dt);
            states_[k] = rho * states_[k] + std::sqrt(var * (1.0 - rho * rho)) * rng.normal();
            if (corners_[k] <= nyquist * (1.0 + 1e-12)) {
                y += states_[k];
            }
        }
        return y;
    }

    /// Continuous-time PSD of the bank, for checking the 1/f approximation.
    double psd(double f) const {
        const double var = level_ * std::numbers::ln2;
        double s = 0.0;
        for (double fk : corners_) {
            s += (2.0 * var / (std::numbers::pi * fk)) / (1.0 + (f / fk) * (f / fk));
        }
        return s;
    }

    const std::vector<double> &corners() const {
        return corners_;
    }

   private:
    double level_ = 0.0;
    std::vector<double> corners_;
    std::vector<double> states_;
};

/// Synthesizes n samples of y at spacing dt.
///
/// White FM is iid with variance h0 / (2 dt); random-walk FM accumulates
/// increments of variance 2 pi^2 h_minus2 dt; flicker FM uses a FlickerBank
/// spanning from a quarter of the lowest resolvable frequency to Nyquist.
inline std::vector<double> generate_y_series(const NoiseSpec &spec, double dt, std::size_t n, std::uint64_t seed) {
    spec.validate();
    if (!(dt > 0.0)) {
        throw InvalidArgument("dt must be positive");
    }
    if (n == 0) {
        throw InvalidArgument("series length must be at least 1");
    }
    std::vector<double> y(n, 0.0);
    if (spec.is_zero()) {
        return y;
    }
    auto white_rng = RngStream::named(seed, "lo.white");
    auto walk_rng = RngStream::named(seed, "lo.random_walk");
    auto flicker_rng = RngStream::named(seed, "lo.flicker");

    const double white_sd = std::sqrt(spec.h0 / (2.0 * dt));
    const double walk_sd = std::sqrt(2.0 * std::numbers::pi * std::numbers::pi * spec.h_minus2 * dt);
    FlickerBank flicker(spec.h_minus1, 0.25 / (static_cast<double>(n) * dt), 0.5 / dt, flicker_rng);

    double walk = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double v = 0.0;
        if (spec.h0 > 0.0) {
            v += white_rng.normal(0.0, white_sd);
        }
        if (spec.h_minus2 > 0.0) {
            walk += walk_rng.normal(0.0, walk_sd);
            v += walk;
        }
        if (spec.h_minus1 > 0.0) {
            v += flicker.step(dt, flicker_rng);
        }
        y[i] = v;
    }
    return y;
}

/// Microwave local oscillator referenced against the atomic transition.
///
/// advance(dt) returns the phase the atoms accumulate relative to the LO over
/// dt: 2 pi (delta_f0 + y f0) dt, with y drawn from the noise spec at
/// resolution dt.
class LocalOscillator {
   public:
    static constexpr double default_f0 = 12.6e9;

    LocalOscillator(double f0, double delta_f0, NoiseSpec spec, RngStream rng, double flicker_f_lo = 1e-5,
                    double flicker_f_hi = 1e3)
        : f0_(f0), delta_f0_(delta_f0), spec_(spec), rng_(rng) {
        spec_.validate();
        if (!(f0 > 0.0)) {
            throw InvalidArgument("carrier frequency must be positive");
        }
        flicker_ = FlickerBank(spec_.h_minus1, flicker_f_lo, flicker_f_hi, rng_);
    }

    static LocalOscillator noiseless(double delta_f0 = 0.0, double f0 = default_f0) {
        return LocalOscillator(f0, delta_f0, NoiseSpec{}, RngStream{});
    }

    double advance(double dt) {
        if (!(dt > 0.0)) {
            throw InvalidArgument("dt must be positive");
        }
        double y = 0.0;
        if (spec_.h0 > 0.0) {
            y += rng_.normal(0.0, std::sqrt(spec_.h0 / (2.0 * dt)));
        }
        if (spec_.h_minus2 > 0.0) {
            walk_ += rng_.normal(0.0, std::sqrt(2.0 * std::numbers::pi * std::numbers::pi * spec_.h_minus2 * dt));
            y += walk_;
        }
        if (spec_.h_minus1 > 0.0) {
            y += flicker_.step(dt, rng_);
        }
        const double increment = 2.0 * std::numbers::pi * (delta_f0_ + y * f0_) * dt;
        accumulated_phase_ += increment;
        elapsed_ += dt;
        return increment;
    }

    double deterministic_increment(double dt) const {
        return 2.0 * std::numbers::pi * delta_f0_ * dt;
    }

    double f0() const {
        return f0_;
    }
    double delta_f0() const {
        return delta_f0_;
    }
    const NoiseSpec &spec() const {
        return spec_;
    }
    double accumulated_phase() const {
        return accumulated_phase_;
    }
    double elapsed() const {
        return elapsed_;
    }

   private:
    double f0_;
    double delta_f0_;
    NoiseSpec spec_;
    RngStream rng_;
    FlickerBank flicker_;
    double walk_ = 0.0;
    double accumulated_phase_ = 0.0;
    double elapsed_ = 0.0;
};

}  // namespace aplclock

#endif
