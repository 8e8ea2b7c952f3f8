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

#ifndef APLCLOCK_STABILITY_HPP
#define APLCLOCK_STABILITY_HPP

#include <boost/math/distributions/chi_squared.hpp>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "aplclock/errors.hpp"

namespace aplclock {

/// Uniformly spaced fractional-frequency samples y_k = df_k / f0.
struct FractionalFrequencySeries {
    std::vector<double> y;
    double tau0 = 1.0;
};

enum class AllanMode { non_overlapping, overlapping };

struct AllanPoint {
    double tau = 0.0;
    double adev = 0.0;
    std::size_t n_pairs = 0;
    // 95 % chi-squared interval on the equivalent degrees of freedom.
    double adev_lo = 0.0;
    double adev_hi = 0.0;
};

namespace detail {

inline std::size_t averaging_factor(double tau, double tau0) {
    if (!(tau > 0.0)) {
        throw InvalidArgument("tau must be positive");
    }
    const double ratio = tau / tau0;
    const double m = std::round(ratio);
    if (m < 1.0 || std::abs(ratio - m) > 1e-6 * m) {
        throw InvalidArgument("tau " + std::to_string(tau) + " s is not an integer multiple of tau0");
    }
    return static_cast<std::size_t>(m);
}

/// Equivalent degrees of freedom. Disjoint pairs count once each; for the
/// overlapping estimator the white-FM approximation
///   edf = (3 (N - 1) / (2 m) - 2 (N - 2) / N) * 4 m^2 / (4 m^2 + 5)
/// accounts for the correlation between shifted pairs.
inline double equivalent_dof(AllanMode mode, std::size_t n_samples, std::size_t m, std::size_t n_pairs) {
    if (mode == AllanMode::non_overlapping || m == 1) {
        return static_cast<double>(n_pairs);
    }
    const double n = static_cast<double>(n_samples), md = static_cast<double>(m);
    const double edf = (3.0 * (n - 1.0) / (2.0 * md) - 2.0 * (n - 2.0) / n) * 4.0 * md * md / (4.0 * md * md + 5.0);
    return std::clamp(edf, 1.0, static_cast<double>(n_pairs));
}

/// 95 % chi-square interval on adev.
inline void confidence_interval(AllanPoint &p, double edf) {
    if (p.n_pairs == 0) {
        return;
    }
    const boost::math::chi_squared_distribution<double> chi2(edf);
    const double var = p.adev * p.adev;
    p.adev_lo = std::sqrt(edf * var / boost::math::quantile(chi2, 0.975));
    p.adev_hi = std::sqrt(edf * var / boost::math::quantile(chi2, 0.025));
}

}  // namespace detail

/// Two-sample (Allan) deviation
///
///   sigma_y^2(tau) = < (ybar_{k+1} - ybar_k)^2 > / 2
///
/// over bins of m = tau / tau0 samples. Non-overlapping mode uses disjoint
/// adjacent bins; overlapping mode slides the bin pair by one sample.
inline std::vector<AllanPoint> allan_deviation(const FractionalFrequencySeries &series, std::span<const double> taus,
                                               AllanMode mode = AllanMode::overlapping) {
    const auto &y = series.y;
    if (!(series.tau0 > 0.0)) {
        throw InvalidArgument("tau0 must be positive");
    }
    const double max_tau = static_cast<double>(y.size() / 2) * series.tau0;
    if (y.size() < 2) {
        throw InsufficientDataError("Allan deviation needs at least two samples", max_tau);
    }

    // prefix sums make every bin average O(1); removing y[0] first keeps a
    // constant series exactly zero and limits cancellation
    std::vector<double> prefix(y.size() + 1, 0.0);
    for (std::size_t i = 0; i < y.size(); ++i) {
        prefix[i + 1] = prefix[i] + (y[i] - y[0]);
    }
    auto bin_sum = [&](std::size_t start, std::size_t m) { return prefix[start + m] - prefix[start]; };

    std::vector<AllanPoint> out;
    out.reserve(taus.size());
    for (double tau : taus) {
        const std::size_t m = detail::averaging_factor(tau, series.tau0);
        if (2 * m > y.size()) {
            throw InsufficientDataError("series too short for tau = " + std::to_string(tau) + " s", max_tau);
        }
        AllanPoint p;
        p.tau = static_cast<double>(m) * series.tau0;
        const double md = static_cast<double>(m);
        double acc = 0.0;
        if (mode == AllanMode::non_overlapping) {
            const std::size_t bins = y.size() / m;
            for (std::size_t k = 0; k + 1 < bins; ++k) {
                const double d = (bin_sum((k + 1) * m, m) - bin_sum(k * m, m)) / md;
                acc += d * d;
            }
            p.n_pairs = bins - 1;
        } else {
            const std::size_t n_pairs = y.size() - 2 * m + 1;
            for (std::size_t j = 0; j < n_pairs; ++j) {
                const double d = (bin_sum(j + m, m) - bin_sum(j, m)) / md;
                acc += d * d;
            }
            p.n_pairs = n_pairs;
        }
        p.adev = std::sqrt(acc / (2.0 * static_cast<double>(p.n_pairs)));
        detail::confidence_interval(p, detail::equivalent_dof(mode, y.size(), m, p.n_pairs));
        out.push_back(p);
    }
    return out;
}

/// tau0 * {1, 2, 4, ...} up to the largest usable averaging time.
inline std::vector<double> octave_taus(const FractionalFrequencySeries &series) {
    std::vector<double> taus;
    for (std::size_t m = 1; 2 * m <= series.y.size(); m *= 2) {
        taus.push_back(static_cast<double>(m) * series.tau0);
    }
    return taus;
}

struct StabilityParams {
    double K = 1.0;
    double Q = 0.0;
    double snr = 0.0;
    double cycle_time = 0.0;  // T_c, seconds
    double f0 = 12.6e9;
    double n_cp = 1.0;
    double n_atom = 0.0;

    void validate() const {
        if (!(K > 0.0) || !(Q > 0.0) || !(snr > 0.0) || !(cycle_time > 0.0) || !(f0 > 0.0) || !(n_cp >= 1.0)) {
            throw InvalidArgument("stability parameters must be positive (n_cp >= 1)");
        }
    }
};

/// Line quality factor f0 / linewidth with a Ramsey linewidth 1 / (2 T_FP).
inline double quality_factor(double f0, double t_fp) {
    return 2.0 * f0 * t_fp;
}

/// (1 / (K Q SNR)) sqrt(T_c / tau): independent measurements averaging as tau^-1/2.
inline double limit_technical(const StabilityParams &p, double tau) {
    p.validate();
    if (!(tau >= p.cycle_time * (1.0 - 1e-12))) {
        throw InvalidArgument("tau must be at least one cycle");
    }
    return std::sqrt(p.cycle_time / tau) / (p.K * p.Q * p.snr);
}

/// 1 / (K f0 SNR tau): a phase comparison that stays coherent for all of tau.
inline double limit_apl(const StabilityParams &p, double tau) {
    p.validate();
    if (!(tau > 0.0)) {
        throw InvalidArgument("tau must be positive");
    }
    return 1.0 / (p.K * p.f0 * p.snr * tau);
}

inline double qpn_snr(double n_atom) {
    if (!(n_atom >= 1.0)) {
        throw InvalidArgument("need at least one atom");
    }
    return std::sqrt(n_atom);
}

/// Largest number of consecutive partial projections before the projected
/// ions, (SNR)^2 per measurement, exhaust the N_atom ensemble.
inline double max_n_cp(double n_atom, double snr) {
    if (!(snr > 0.0) || !(n_atom >= 1.0)) {
        throw InvalidArgument("need n_atom >= 1 and snr > 0");
    }
    return std::floor(n_atom / (snr * snr) + 1e-9);
}

struct LimitValue {
    double value = 0.0;
    bool bound_violated = false;
    std::string warning;
};

/// (1 / (sqrt(n_cp) K Q SNR)) sqrt(T_c / tau): n_cp coherent partial projections per block.
/// When n_atom is set, n_cp above floor(n_atom / SNR^2) is flagged.
inline LimitValue limit_apl_repetition(const StabilityParams &p, double tau) {
    p.validate();
    if (!(tau >= p.n_cp * p.cycle_time * (1.0 - 1e-12))) {
        throw InvalidArgument("tau must span at least one block of n_cp cycles");
    }
    LimitValue out;
    out.value = std::sqrt(p.cycle_time / tau) / (std::sqrt(p.n_cp) * p.K * p.Q * p.snr);
    if (p.n_atom >= 1.0) {
        const double bound = max_n_cp(p.n_atom, p.snr);
        if (p.n_cp > bound * (1.0 + 1e-12)) {
            out.bound_violated = true;
            out.warning = "n_cp = " + std::to_string(p.n_cp) + " exceeds the projection bound N_atom/SNR^2 = " +
                          std::to_string(bound);
        }
    }
    return out;
}

/// Technical-limit line evaluated with the projection-noise SNR sqrt(N_atom).
inline double limit_qpn(const StabilityParams &p, double tau) {
    StabilityParams q = p;
    q.snr = qpn_snr(p.n_atom);
    return limit_technical(q, tau);
}

}  // namespace aplclock

#endif
