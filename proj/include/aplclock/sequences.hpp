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

#ifndef APLCLOCK_SEQUENCES_HPP
#define APLCLOCK_SEQUENCES_HPP

// Measurement protocols on the ion ensemble: standard Ramsey, the
// continuous-phase (atomic phase lock) sequence built on partial
// projections, and Rabi flopping with and without re-initialization.

#include <Eigen/Dense>
#include <boost/math/distributions/students_t.hpp>
#include <boost/math/tools/minima.hpp>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <vector>

#include "aplclock/diffusion.hpp"
#include "aplclock/ensemble.hpp"
#include "aplclock/errors.hpp"
#include "aplclock/oscillator.hpp"

namespace aplclock {

inline constexpr double half_pi = 0.5 * std::numbers::pi;

struct RamseyConfig {
    double t_fp = 0.1;            // free precession per cycle, s
    double pi2_duration = 7.5e-4;  // s
    std::size_t n_cp = 3;         // partial projections per phase-locked block
    DetectionConfig detection;
    std::size_t n_cycles = 300;
    double dead_time = 0.0;  // s, appended to every cycle
    /// Ion transport; required when detection.mode is beam_overlap.
    std::optional<DiffusionConfig> transport;

    void validate() const {
        if (!(t_fp > 0.0)) {
            throw InvalidArgument("free precession time must be positive");
        }
        if (n_cp < 1) {
            throw InvalidArgument("n_cp must be at least 1");
        }
        if (!(pi2_duration >= 0.0) || !(dead_time >= 0.0)) {
            throw InvalidArgument("durations must be non-negative");
        }
        detection.validate();
        if (detection.mode == DetectionMode::beam_overlap) {
            if (!transport) {
                throw InvalidArgument("beam_overlap detection needs a transport (diffusion) config");
            }
            transport->validate();
        }
    }

    /// pi/2 + T_FP + pi/2 readout + dead time.
    double standard_cycle_time() const {
        return t_fp + 2.0 * pi2_duration + dead_time;
    }

    /// Opening pi/2, then per cycle T_FP + pi/2 readout + 3pi/2 revert + dead time.
    double apl_block_time() const {
        return pi2_duration + static_cast<double>(n_cp) * (t_fp + 4.0 * pi2_duration + dead_time);
    }
};

struct CycleRecord {
    std::size_t block_id = 0;
    std::size_t n = 1;  // position within the phase-locked block, 1-based
    double timestamp = 0.0;
    MeasurementResult measurement;
    double phi_n = 0.0;       // estimated accumulated phase, rad
    double delta_f_hz = 0.0;  // phi_n / (2 pi n T_FP)
    /// Diagnostics: true accumulated atom-LO phase and the fraction of ions
    /// already projected when this measurement started.
    double true_phase = 0.0;
    double projected_before = 0.0;
    bool saturated = false;
};

/// Inverts the 90 degree readout: P = (1 + sin phi) / 2 on the principal branch.
inline double estimate_phase(double estimate) {
    const double p = std::clamp(estimate, 0.0, 1.0);
    return std::asin(2.0 * p - 1.0);
}

inline double estimate_phase(const MeasurementResult &m) {
    return estimate_phase(m.estimate);
}

/// LO frequency error from the phase accumulated over n free precessions, in Hz.
inline double estimate_frequency(double phi_n, std::size_t n, double t_fp) {
    if (n < 1 || !(t_fp > 0.0)) {
        throw InvalidArgument("need n >= 1 and T_FP > 0");
    }
    return phi_n / (2.0 * std::numbers::pi * static_cast<double>(n) * t_fp);
}

/// Same estimate as an angular rate phi_n / (n T_FP), rad/s.
inline double estimate_angular_frequency(double phi_n, std::size_t n, double t_fp) {
    if (n < 1 || !(t_fp > 0.0)) {
        throw InvalidArgument("need n >= 1 and T_FP > 0");
    }
    return phi_n / (static_cast<double>(n) * t_fp);
}

inline constexpr double saturation_margin = 0.45;

namespace detail {

/// Moves ions for `duration` in beam_overlap mode; positions are irrelevant otherwise.
inline void drift(EnsembleState &ens, const std::optional<DiffusionConfig> &transport, const DetectionConfig &det,
                  double duration) {
    if (det.mode != DetectionMode::beam_overlap || !transport || duration <= 0.0) {
        return;
    }
    const double sd = std::sqrt(2.0 * transport->diffusion_coefficient() * duration);
    if (sd == 0.0) {
        return;
    }
    for (auto &ion : ens.ions) {
        ion.z_pos = reflect_into_cloud(ion.z_pos + ens.rng.normal(0.0, sd), ens.cloud_length);
    }
}

inline MeasurementResult measure(EnsembleState &ens, const DetectionConfig &det,
                                 const std::optional<DiffusionConfig> &transport) {
    if (det.mode == DetectionMode::fixed_fraction) {
        return partial_projection(ens, det);
    }
    if (!transport) {
        throw InvalidArgument("beam_overlap detection needs a transport (diffusion) config");
    }
    DiffusionConfig cfg = *transport;
    cfg.cloud_length = ens.cloud_length;
    std::vector<double> z(ens.size());
    for (std::size_t i = 0; i < z.size(); ++i) {
        z[i] = ens.ions[i].z_pos;
    }
    const auto struck = walk_and_mark(z, cfg, det.measurement_duration, ens.rng);
    for (std::size_t i = 0; i < z.size(); ++i) {
        ens.ions[i].z_pos = z[i];
    }
    return partial_projection(ens, det, std::span<const std::size_t>(struck));
}

inline void fill_estimates(CycleRecord &r, double t_fp) {
    r.phi_n = estimate_phase(r.measurement);
    r.delta_f_hz = estimate_frequency(r.phi_n, r.n, t_fp);
    r.saturated = std::abs(r.measurement.estimate - 0.5) > saturation_margin;
}

}  // namespace detail

/// One phase-locked block:
///   initialize; pi/2 at 0 deg; then n_cp times
///   { free precession T_FP; pi/2 at 90 deg; partial projection; 3pi/2 at 90 deg }.
/// The 3pi/2 pulse undoes the readout pulse on every unprojected ion, so the
/// n-th measurement sees the phase accumulated over all n precessions.
inline std::vector<CycleRecord> run_apl_block(EnsembleState &ens, LocalOscillator &lo, const RamseyConfig &cfg,
                                              std::size_t block_id = 0, double t_start = 0.0) {
    cfg.validate();
    std::vector<CycleRecord> records;
    records.reserve(cfg.n_cp);

    reinitialize(ens);
    double t = t_start;
    rotate(ens, 0.0, half_pi);
    t += cfg.pi2_duration;
    double true_phase = 0.0;
    for (std::size_t n = 1; n <= cfg.n_cp; ++n) {
        const double dphi = lo.advance(cfg.t_fp);
        free_precession(ens, dphi);
        true_phase += dphi;
        t += cfg.t_fp;
        // ions wander between probes: pulses + T_FP since the previous window
        detail::drift(ens, cfg.transport, cfg.detection,
                      cfg.t_fp + (n == 1 ? 2.0 * cfg.pi2_duration : 4.0 * cfg.pi2_duration + cfg.dead_time));

        rotate(ens, half_pi, half_pi);
        t += cfg.pi2_duration;

        CycleRecord r;
        r.block_id = block_id;
        r.n = n;
        r.timestamp = t;
        r.true_phase = true_phase;
        r.projected_before = ever_projected_fraction(ens);
        r.measurement = detail::measure(ens, cfg.detection, cfg.transport);
        detail::fill_estimates(r, cfg.t_fp);
        records.push_back(std::move(r));

        rotate(ens, half_pi, 3.0 * half_pi);
        t += 3.0 * cfg.pi2_duration + cfg.dead_time;
    }
    return records;
}

/// n_cycles / n_cp consecutive blocks on one ensemble and LO.
inline std::vector<CycleRecord> run_apl(EnsembleState &ens, LocalOscillator &lo, const RamseyConfig &cfg) {
    cfg.validate();
    const std::size_t n_blocks = cfg.n_cycles / cfg.n_cp;
    std::vector<CycleRecord> records;
    records.reserve(n_blocks * cfg.n_cp);
    for (std::size_t b = 0; b < n_blocks; ++b) {
        auto block = run_apl_block(ens, lo, cfg, b, static_cast<double>(b) * cfg.apl_block_time());
        records.insert(records.end(), std::make_move_iterator(block.begin()), std::make_move_iterator(block.end()));
    }
    return records;
}

/// Conventional Ramsey: every cycle re-initializes, so each record is an n = 1 estimate.
inline std::vector<CycleRecord> run_standard_ramsey(EnsembleState &ens, LocalOscillator &lo, const RamseyConfig &cfg) {
    cfg.validate();
    std::vector<CycleRecord> records;
    records.reserve(cfg.n_cycles);
    const double period = cfg.standard_cycle_time();
    for (std::size_t c = 0; c < cfg.n_cycles; ++c) {
        reinitialize(ens);
        rotate(ens, 0.0, half_pi);
        const double dphi = lo.advance(cfg.t_fp);
        free_precession(ens, dphi);
        detail::drift(ens, cfg.transport, cfg.detection, period);
        rotate(ens, half_pi, half_pi);

        CycleRecord r;
        r.block_id = c;
        r.n = 1;
        r.timestamp = static_cast<double>(c) * period + cfg.t_fp + 2.0 * cfg.pi2_duration;
        r.true_phase = dphi;
        r.projected_before = 0.0;
        r.measurement = detail::measure(ens, cfg.detection, cfg.transport);
        detail::fill_estimates(r, cfg.t_fp);
        records.push_back(std::move(r));
    }
    return records;
}

struct RabiConfig {
    double rotation_step = std::numbers::pi / 6.0;
    std::size_t n_steps = 12;
    bool reinitialize = true;
    DetectionConfig detection;
    std::optional<DiffusionConfig> transport;
    /// Free evolution between PPM probes, s. Zero means back-to-back pulses.
    double dwell = 0.0;
};

struct RabiRecord {
    std::size_t step = 0;
    double cumulative_angle = 0.0;
    MeasurementResult measurement;
    double projected_before = 0.0;
};

/// Rabi flopping probed at cumulative angles k * rotation_step, k = 0..n_steps.
/// With reinitialize the ensemble is reset and driven by the full angle before
/// each probe; otherwise one more step is added to the partially projected
/// ensemble between probes.
inline std::vector<RabiRecord> run_rabi_ppm(EnsembleState &ens, LocalOscillator &lo, const RabiConfig &cfg) {
    if (!(cfg.rotation_step > 0.0)) {
        throw InvalidArgument("rotation step must be positive");
    }
    cfg.detection.validate();
    std::vector<RabiRecord> records;
    records.reserve(cfg.n_steps + 1);
    reinitialize(ens);
    for (std::size_t k = 0; k <= cfg.n_steps; ++k) {
        const double angle = static_cast<double>(k) * cfg.rotation_step;
        if (cfg.reinitialize) {
            reinitialize(ens);
            if (k > 0) {
                rotate(ens, 0.0, angle);
            }
        } else if (k > 0) {
            if (cfg.dwell > 0.0) {
                free_precession(ens, lo.advance(cfg.dwell));
                detail::drift(ens, cfg.transport, cfg.detection, cfg.dwell);
            }
            rotate(ens, 0.0, cfg.rotation_step);
        }
        RabiRecord r;
        r.step = k;
        r.cumulative_angle = angle;
        r.projected_before = ever_projected_fraction(ens);
        r.measurement = detail::measure(ens, cfg.detection, cfg.transport);
        records.push_back(std::move(r));
    }
    return records;
}

/// Ideal Rabi population after a rotation `angle` from the ground state.
inline double ideal_rabi_population(double angle) {
    return 0.5 * (1.0 - std::cos(angle));
}

struct SinusoidFit {
    double offset = 0.0;
    double amplitude = 0.0;
    double phase = 0.0;  // P(k) = offset + amplitude cos(k step + phase)
    double step = 0.0;
    double residual_rms = 0.0;

    double operator()(double k) const {
        return offset + amplitude * std::cos(k * step + phase);
    }
};

/// Least-squares sinusoid at the known Rabi step, sampled at k = 0, 1, ...
inline SinusoidFit fit_rabi_sinusoid(std::span<const double> population, double step) {
    if (population.size() < 3) {
        throw InvalidArgument("sinusoid fit needs at least three points");
    }
    const auto n = static_cast<Eigen::Index>(population.size());
    Eigen::MatrixXd a(n, 3);
    Eigen::VectorXd b(n);
    for (Eigen::Index k = 0; k < n; ++k) {
        const double arg = static_cast<double>(k) * step;
        a(k, 0) = 1.0;
        a(k, 1) = std::cos(arg);
        a(k, 2) = std::sin(arg);
        b(k) = population[static_cast<std::size_t>(k)];
    }
    const Eigen::Vector3d c = a.colPivHouseholderQr().solve(b);
    SinusoidFit fit;
    fit.offset = c(0);
    fit.amplitude = std::hypot(c(1), c(2));
    fit.phase = std::atan2(-c(2), c(1));
    fit.step = step;
    fit.residual_rms = std::sqrt((a * c - b).squaredNorm() / static_cast<double>(n));
    return fit;
}

// ---------------------------------------------------------------------------
// Decoherence from repeated partial projection

struct DecoherenceModel {
    double p = 0.0;          // fraction of the ensemble projected per measurement
    double amplitude = 1.0;  // scale of the observed deviation
};

/// Fraction of ions already projected before the n-th measurement: 1 - (1 - p)^(n - 1).
inline double predicted_projected_fraction(const DecoherenceModel &model, std::size_t n) {
    if (n < 1) {
        throw InvalidArgument("measurement index is 1-based");
    }
    if (!(model.p >= 0.0 && model.p <= 1.0)) {
        throw InvalidArgument("p must lie in [0, 1]");
    }
    return 1.0 - std::pow(1.0 - model.p, static_cast<double>(n - 1));
}

struct DecoherenceFit {
    DecoherenceModel model;
    double residual_norm = 0.0;
    double p_stderr = 0.0;
    double amplitude_stderr = 0.0;
    double p_ci_lo = 0.0;  // 95 %, Student t on n - 2 degrees of freedom
    double p_ci_hi = 0.0;
};

namespace detail {

inline double decay_shape(double p, std::size_t n) {
    return 1.0 - std::pow(1.0 - p, static_cast<double>(n - 1));
}

inline double decay_shape_dp(double p, std::size_t n) {
    if (n < 2) {
        return 0.0;
    }
    return static_cast<double>(n - 1) * std::pow(1.0 - p, static_cast<double>(n - 2));
}

/// Residual sum of squares with the amplitude solved in closed form.
inline double profiled_rss(std::span<const double> y, double p, double *amplitude = nullptr) {
    double syg = 0.0, sgg = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double g = decay_shape(p, i + 1);
        syg += y[i] * g;
        sgg += g * g;
        syy += y[i] * y[i];
    }
    const double a = sgg > 0.0 ? syg / sgg : 0.0;
    if (amplitude) {
        *amplitude = a;
    }
    return std::max(0.0, syy - a * syg);
}

inline double full_rss(std::span<const double> y, double a, double p) {
    double rss = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double r = y[i] - a * decay_shape(p, i + 1);
        rss += r * r;
    }
    return rss;
}

}  // namespace detail

/// Least-squares fit of amplitude * [1 - (1 - p)^(n - 1)] to series[n - 1], n = 1, 2, ...
///
/// The amplitude is profiled out, p is located by a grid scan refined with
/// Brent's method, and both are polished by Gauss-Newton, whose Jacobian
/// also provides the standard errors.
inline DecoherenceFit fit_decoherence(std::span<const double> series) {
    if (series.size() < 3) {
        throw InvalidArgument("decoherence fit needs at least three points");
    }
    for (double v : series) {
        if (!std::isfinite(v)) {
            throw FitFailure("decoherence series contains non-finite values");
        }
    }
    DecoherenceFit fit;
    const bool all_zero = std::all_of(series.begin(), series.end(), [](double v) { return v == 0.0; });
    if (all_zero) {
        fit.model = {0.0, 0.0};
        return fit;
    }

    constexpr int grid = 1000;
    int best = 0;
    double best_rss = std::numeric_limits<double>::infinity();
    for (int i = 0; i <= grid; ++i) {
        const double rss = detail::profiled_rss(series, static_cast<double>(i) / grid);
        if (rss < best_rss) {
            best_rss = rss;
            best = i;
        }
    }
    const double lo = std::max(0, best - 1) / static_cast<double>(grid);
    const double hi = std::min(grid, best + 1) / static_cast<double>(grid);
    std::uintmax_t max_iter = 200;
    const auto [p_brent, rss_brent] = boost::math::tools::brent_find_minima(
        [&](double p) { return detail::profiled_rss(series, p); }, lo, hi, std::numeric_limits<double>::digits,
        max_iter);
    if (!std::isfinite(p_brent) || !std::isfinite(rss_brent) || max_iter >= 200) {
        throw FitFailure("decoherence fit did not converge (p = " + std::to_string(p_brent) + ")");
    }

    double a = 0.0;
    double p = p_brent;
    detail::profiled_rss(series, p, &a);
    double rss = detail::full_rss(series, a, p);

    const auto n_pts = static_cast<Eigen::Index>(series.size());
    auto jacobian = [&](double a_, double p_) {
        Eigen::MatrixXd j(n_pts, 2);
        for (Eigen::Index i = 0; i < n_pts; ++i) {
            const auto n = static_cast<std::size_t>(i) + 1;
            j(i, 0) = detail::decay_shape(p_, n);
            j(i, 1) = a_ * detail::decay_shape_dp(p_, n);
        }
        return j;
    };

    for (int it = 0; it < 50; ++it) {
        const Eigen::MatrixXd j = jacobian(a, p);
        Eigen::VectorXd r(n_pts);
        for (Eigen::Index i = 0; i < n_pts; ++i) {
            r(i) = series[static_cast<std::size_t>(i)] - a * detail::decay_shape(p, static_cast<std::size_t>(i) + 1);
        }
        const Eigen::Vector2d step = j.colPivHouseholderQr().solve(r);
        if (!step.allFinite()) {
            break;
        }
        const double a_new = a + step(0);
        const double p_new = std::clamp(p + step(1), 0.0, 1.0);
        const double rss_new = detail::full_rss(series, a_new, p_new);
        if (!(rss_new < rss)) {
            break;
        }
        a = a_new;
        p = p_new;
        rss = rss_new;
    }

    fit.model = {p, a};
    fit.residual_norm = std::sqrt(rss);
    fit.p_ci_lo = fit.p_ci_hi = p;

    const Eigen::MatrixXd j = jacobian(a, p);
    const Eigen::Matrix2d jtj = j.transpose() * j;
    const double dof = static_cast<double>(series.size()) - 2.0;
    if (dof > 0.0 && std::abs(jtj.determinant()) > 0.0) {
        const Eigen::Matrix2d cov = (rss / dof) * jtj.inverse();
        fit.amplitude_stderr = std::sqrt(std::max(0.0, cov(0, 0)));
        fit.p_stderr = std::sqrt(std::max(0.0, cov(1, 1)));
        const double t = boost::math::quantile(boost::math::students_t_distribution<double>(dof), 0.975);
        fit.p_ci_lo = p - t * fit.p_stderr;
        fit.p_ci_hi = p + t * fit.p_stderr;
    } else {
        fit.p_stderr = fit.amplitude_stderr = std::numeric_limits<double>::quiet_NaN();
    }
    return fit;
}

/// Fit of the mean over independent trials, each a series indexed n = 1, 2, ...
///
/// Points within one trial are cumulative and strongly correlated, so the
/// standard errors come from a delete-one jackknife over trials instead of
/// the residuals of the mean series.
inline DecoherenceFit fit_decoherence_trials(std::span<const std::vector<double>> trials) {
    if (trials.size() < 2) {
        throw InvalidArgument("jackknife needs at least two trials");
    }
    const std::size_t len = trials.front().size();
    for (const auto &t : trials) {
        if (t.size() != len) {
            throw InvalidArgument("trials must have equal length");
        }
    }
    auto mean_without = [&](std::size_t skip) {
        std::vector<double> m(len, 0.0);
        double count = 0.0;
        for (std::size_t i = 0; i < trials.size(); ++i) {
            if (i == skip) {
                continue;
            }
            for (std::size_t k = 0; k < len; ++k) {
                m[k] += trials[i][k];
            }
            count += 1.0;
        }
        for (double &v : m) {
            v /= count;
        }
        return m;
    };
    DecoherenceFit fit = fit_decoherence(mean_without(trials.size()));

    const auto n = static_cast<double>(trials.size());
    std::vector<double> p(trials.size()), a(trials.size());
    for (std::size_t i = 0; i < trials.size(); ++i) {
        const auto f = fit_decoherence(mean_without(i));
        p[i] = f.model.p;
        a[i] = f.model.amplitude;
    }
    auto jackknife_se = [n](const std::vector<double> &v) {
        double m = 0.0, ss = 0.0;
        for (double x : v) {
            m += x;
        }
        m /= n;
        for (double x : v) {
            ss += (x - m) * (x - m);
        }
        return std::sqrt((n - 1.0) / n * ss);
    };
    fit.p_stderr = jackknife_se(p);
    fit.amplitude_stderr = jackknife_se(a);
    const double t = boost::math::quantile(boost::math::students_t_distribution<double>(n - 1.0), 0.975);
    fit.p_ci_lo = fit.model.p - t * fit.p_stderr;
    fit.p_ci_hi = fit.model.p + t * fit.p_stderr;
    return fit;
}

}  // namespace aplclock

#endif
