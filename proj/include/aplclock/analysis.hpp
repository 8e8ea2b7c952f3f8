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

#ifndef APLCLOCK_ANALYSIS_HPP
#define APLCLOCK_ANALYSIS_HPP

// Reductions of cycle records into the statistics compared between the
// standard and phase-locked modes.

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "aplclock/errors.hpp"
#include "aplclock/numeric.hpp"
#include "aplclock/sequences.hpp"
#include "aplclock/stability.hpp"

namespace aplclock {

struct SdByN {
    std::size_t n = 0;
    double tau = 0.0;  // n * T_FP
    double sd_delta_f_hz = 0.0;
    std::size_t count = 0;
};

/// Spread of the frequency estimate at each position n within a block.
inline std::vector<SdByN> sd_by_n(std::span<const CycleRecord> records, std::size_t n_cp, double t_fp) {
    std::vector<std::vector<double>> by_n(n_cp);
    for (const auto &r : records) {
        if (r.n >= 1 && r.n <= n_cp) {
            by_n[r.n - 1].push_back(r.delta_f_hz);
        }
    }
    std::vector<SdByN> out;
    for (std::size_t i = 0; i < n_cp; ++i) {
        if (by_n[i].size() < 2) {
            throw InvalidArgument("need at least two blocks per n");
        }
        out.push_back({i + 1, static_cast<double>(i + 1) * t_fp, sample_sd(by_n[i]), by_n[i].size()});
    }
    return out;
}

/// y = delta_f / f0 of the last measurement of each block (n == n_last).
inline FractionalFrequencySeries final_measurement_series(std::span<const CycleRecord> records, std::size_t n_last,
                                                          double f0, double tau0) {
    FractionalFrequencySeries s;
    s.tau0 = tau0;
    for (const auto &r : records) {
        if (r.n == n_last) {
            s.y.push_back(r.delta_f_hz / f0);
        }
    }
    return s;
}

/// Log-log slope of sd(delta_f) against n.
inline LineFit sd_scaling(std::span<const SdByN> sds) {
    std::vector<double> x, y;
    for (const auto &s : sds) {
        x.push_back(std::log(s.tau));
        y.push_back(std::log(s.sd_delta_f_hz));
    }
    return fit_line(x, y);
}

/// Log-log slope of adev against tau.
inline LineFit allan_slope(std::span<const AllanPoint> points) {
    std::vector<double> x, y;
    for (const auto &p : points) {
        x.push_back(std::log(p.tau));
        y.push_back(std::log(p.adev));
    }
    return fit_line(x, y);
}

/// c in adev = c tau^-1/2, as the mean of log(adev sqrt(tau)). With the
/// record length given, each point is weighted by its number of bins
/// (duration / tau), i.e. by the inverse variance of a white-noise estimate.
inline double white_coefficient(std::span<const AllanPoint> points, double duration = 0.0) {
    if (points.empty()) {
        throw InvalidArgument("no Allan points");
    }
    double acc = 0.0, weights = 0.0;
    for (const auto &p : points) {
        const double w = duration > 0.0 ? duration / p.tau : 1.0;
        acc += w * std::log(p.adev * std::sqrt(p.tau));
        weights += w;
    }
    return std::exp(acc / weights);
}

/// tau0 * {1, ..., m_max}, capped so each point keeps at least min_bins bins.
inline std::vector<double> linear_taus(std::size_t n_samples, double tau0, std::size_t m_max, std::size_t min_bins = 10) {
    std::vector<double> taus;
    for (std::size_t m = 1; m <= m_max && m * min_bins <= n_samples; ++m) {
        taus.push_back(static_cast<double>(m) * tau0);
    }
    return taus;
}

}  // namespace aplclock

#endif
