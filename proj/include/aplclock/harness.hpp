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

#ifndef APLCLOCK_HARNESS_HPP
#define APLCLOCK_HARNESS_HPP

// Experiment orchestration behind the command-line tool. Every command turns
// a RunConfig into a set of in-memory output files, so nothing is written
// unless the whole run succeeds and identical (config, seed) pairs give
// byte-identical files regardless of thread count.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <string>
#include <vector>

#include "aplclock/analysis.hpp"
#include "aplclock/config.hpp"
#include "aplclock/diffusion.hpp"
#include "aplclock/ensemble.hpp"
#include "aplclock/numeric.hpp"
#include "aplclock/oscillator.hpp"
#include "aplclock/parallel.hpp"
#include "aplclock/sequences.hpp"
#include "aplclock/stability.hpp"

namespace aplclock {

struct OutputFile {
    std::string name;
    std::string content;
};

struct CommandResult {
    std::string command;
    std::vector<OutputFile> files;
    std::vector<std::string> warnings;

    const OutputFile *find(const std::string &name) const {
        for (const auto &f : files) {
            if (f.name == name) {
                return &f;
            }
        }
        return nullptr;
    }
};

/// CSV text with a provenance comment line and a fixed column order.
class CsvBuilder {
   public:
    CsvBuilder(const std::string &command, const RunConfig &cfg, std::vector<std::string> columns) {
        out_ << "# aplclock " << command << " config_hash=" << cfg.hash_hex() << " seed=" << cfg.integer("run.seed")
             << "\n";
        for (std::size_t i = 0; i < columns.size(); ++i) {
            out_ << (i ? "," : "") << columns[i];
        }
        out_ << "\n";
    }

    template <typename... Ts>
    CsvBuilder &row(const Ts &...values) {
        bool first = true;
        ((out_ << (first ? "" : ",") << cell(values), first = false), ...);
        out_ << "\n";
        return *this;
    }

    std::string str() const {
        return out_.str();
    }

    static std::string cell(double v) {
        if (std::isnan(v)) {
            return "";
        }
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.12g", v);
        return buf;
    }
    static std::string cell(std::size_t v) {
        return std::to_string(v);
    }
    static std::string cell(int v) {
        return std::to_string(v);
    }
    static std::string cell(const std::string &v) {
        return v;
    }
    static std::string cell(const char *v) {
        return v;
    }

   private:
    std::ostringstream out_;
};

// ---------------------------------------------------------------------------
// Config -> domain objects

inline DetectionConfig detection_from(const RunConfig &cfg) {
    DetectionConfig det;
    const auto &mode = cfg.text("det.mode");
    if (mode == "fixed_fraction") {
        det.mode = DetectionMode::fixed_fraction;
    } else if (mode == "beam_overlap") {
        det.mode = DetectionMode::beam_overlap;
    } else {
        throw ConfigError("det.mode must be fixed_fraction or beam_overlap, got '" + mode + "'");
    }
    det.sampling_fraction = cfg.real("det.p");
    det.technical_noise_sigma = cfg.real("det.sigma_tech");
    det.measurement_duration = cfg.real("det.duration_s");
    try {
        det.validate();
    } catch (const InvalidArgument &e) {
        throw ConfigError(e.what());
    }
    return det;
}

inline DiffusionConfig diffusion_from(const RunConfig &cfg) {
    DiffusionConfig d;
    d.temperature = cfg.real("diff.temperature_k");
    d.mobility = cfg.real("diff.mobility");
    d.diffusion_override = cfg.optional_real("diff.d_override");
    d.dt = cfg.real("diff.dt_s");
    d.cloud_length = cfg.real("ensemble.cloud_length_m");
    d.beam = {cfg.real("diff.beam_lo_m"), cfg.real("diff.beam_hi_m")};
    try {
        d.validate();
    } catch (const InvalidArgument &e) {
        throw ConfigError(e.what());
    }
    return d;
}

inline NoiseSpec noise_from(const RunConfig &cfg) {
    NoiseSpec spec;
    const auto &preset = cfg.text("lo.preset");
    if (preset == "maser") {
        spec = NoiseSpec::maser();
    } else if (preset == "noisy") {
        spec = NoiseSpec::noisy_lo();
    } else if (preset != "none") {
        throw ConfigError("lo.preset must be maser, noisy or none, got '" + preset + "'");
    }
    if (auto v = cfg.optional_real("lo.h0")) {
        spec.h0 = *v;
    }
    if (auto v = cfg.optional_real("lo.h_minus1")) {
        spec.h_minus1 = *v;
    }
    if (auto v = cfg.optional_real("lo.h_minus2")) {
        spec.h_minus2 = *v;
    }
    try {
        spec.validate();
    } catch (const InvalidArgument &e) {
        throw ConfigError(e.what());
    }
    return spec;
}

inline RamseyConfig ramsey_from(const RunConfig &cfg) {
    RamseyConfig r;
    r.t_fp = cfg.real("ramsey.t_fp_s");
    r.pi2_duration = cfg.real("ramsey.pi2_duration_s");
    r.n_cp = cfg.count("ramsey.n_cp");
    r.n_cycles = cfg.count("ramsey.n_cycles");
    r.dead_time = cfg.real("ramsey.dead_time_s");
    r.detection = detection_from(cfg);
    if (r.detection.mode == DetectionMode::beam_overlap) {
        r.transport = diffusion_from(cfg);
    }
    try {
        r.validate();
    } catch (const InvalidArgument &e) {
        throw ConfigError(e.what());
    }
    return r;
}

inline std::uint64_t seed_of(const RunConfig &cfg) {
    return static_cast<std::uint64_t>(cfg.integer("run.seed"));
}

inline EnsembleState ensemble_for(const RunConfig &cfg, std::string_view purpose, std::uint64_t index) {
    const auto n = cfg.count("ensemble.n_ions");
    if (n == 0) {
        throw ConfigError("ensemble.n_ions must be at least 1");
    }
    return initialize_ensemble(n, cfg.real("ensemble.cloud_length_m"), derive_seed(seed_of(cfg), purpose, index));
}

inline LocalOscillator oscillator_for(const RunConfig &cfg, std::string_view purpose, std::uint64_t index) {
    return LocalOscillator(cfg.real("lo.f0_hz"), cfg.real("lo.delta_f0_hz"), noise_from(cfg),
                           RngStream(derive_seed(seed_of(cfg), purpose, index)));
}

inline std::size_t threads_of(const RunConfig &cfg) {
    return cfg.count("run.threads");
}

inline std::size_t trials_or(const RunConfig &cfg, std::size_t fallback) {
    const auto n = cfg.count("run.n_trials");
    return n > 0 ? n : fallback;
}

// ---------------------------------------------------------------------------
// rabi

struct RabiSummary {
    std::vector<double> standard_mean, standard_sd, ppm_mean, ppm_sd, ppm_projected;
    SinusoidFit fit;
};

inline RabiSummary simulate_rabi(const RunConfig &cfg, std::size_t repeats_standard, std::size_t repeats_ppm) {
    if (repeats_standard < 2 || repeats_ppm < 2) {
        throw ConfigError("Rabi runs need at least two repeats per mode");
    }
    RabiConfig base;
    base.rotation_step = cfg.real("rabi.rotation_step_rad");
    base.n_steps = cfg.count("rabi.n_steps");
    base.detection = detection_from(cfg);
    if (base.detection.mode == DetectionMode::beam_overlap) {
        base.transport = diffusion_from(cfg);
    }
    if (!(base.rotation_step > 0.0)) {
        throw ConfigError("rabi.rotation_step_rad must be positive");
    }

    auto run = [&](bool reinit, std::size_t repeats, const char *purpose) {
        RabiConfig rc = base;
        rc.reinitialize = reinit;
        if (reinit) {
            // conventional Rabi reads the whole cloud
            rc.detection = DetectionConfig::full_projection(base.detection.technical_noise_sigma);
            rc.transport.reset();
        }
        return parallel_map(
            repeats,
            [&](std::size_t i) {
                auto ens = ensemble_for(cfg, purpose, i);
                auto lo = oscillator_for(cfg, std::string(purpose) + ".lo", i);
                return run_rabi_ppm(ens, lo, rc);
            },
            threads_of(cfg));
    };
    const auto standard = run(true, repeats_standard, "rabi.standard");
    const auto ppm = run(false, repeats_ppm, "rabi.ppm");

    RabiSummary s;
    auto reduce = [](const auto &runs, std::vector<double> &m, std::vector<double> &sd, std::vector<double> *proj) {
        const std::size_t n_points = runs.front().size();
        for (std::size_t k = 0; k < n_points; ++k) {
            std::vector<double> v, pr;
            for (const auto &r : runs) {
                v.push_back(r[k].measurement.estimate);
                pr.push_back(r[k].projected_before);
            }
            m.push_back(mean(v));
            sd.push_back(sample_sd(v));
            if (proj) {
                proj->push_back(mean(pr));
            }
        }
    };
    reduce(standard, s.standard_mean, s.standard_sd, nullptr);
    reduce(ppm, s.ppm_mean, s.ppm_sd, &s.ppm_projected);
    s.fit = fit_rabi_sinusoid(s.standard_mean, base.rotation_step);
    return s;
}

inline CommandResult cmd_rabi(const RunConfig &cfg) {
    const auto n_trials = cfg.count("run.n_trials");
    const auto rs = n_trials ? n_trials : cfg.count("rabi.repeats_standard");
    const auto rp = n_trials ? n_trials : cfg.count("rabi.repeats_ppm");
    const auto s = simulate_rabi(cfg, rs, rp);
    const double step = cfg.real("rabi.rotation_step_rad");
    const double p = cfg.real("det.p");

    CommandResult out{"rabi", {}, {}};
    CsvBuilder table("rabi", cfg, {"step", "angle_rad", "mean", "sd", "mode"});
    for (std::size_t k = 0; k < s.standard_mean.size(); ++k) {
        table.row(k, static_cast<double>(k) * step, s.standard_mean[k], s.standard_sd[k], "standard");
    }
    for (std::size_t k = 0; k < s.ppm_mean.size(); ++k) {
        table.row(k, static_cast<double>(k) * step, s.ppm_mean[k], s.ppm_sd[k], "ppm");
    }
    out.files.push_back({"rabi.csv", table.str()});

    CsvBuilder fit("rabi", cfg, {"parameter", "value"});
    fit.row("offset", s.fit.offset)
        .row("amplitude", s.fit.amplitude)
        .row("phase_rad", s.fit.phase)
        .row("step_rad", s.fit.step)
        .row("residual_rms", s.fit.residual_rms);
    out.files.push_back({"rabi_fit.csv", fit.str()});

    CsvBuilder dev("rabi", cfg, {"step", "deviation", "sd", "beyond_1sigma", "projected_before", "predicted_projected"});
    for (std::size_t k = 0; k < s.ppm_mean.size(); ++k) {
        const double d = s.ppm_mean[k] - s.fit(static_cast<double>(k));
        const double predicted = predicted_projected_fraction({p, 1.0}, k + 1);
        dev.row(k, d, s.ppm_sd[k], std::abs(d) > s.ppm_sd[k] ? 1 : 0, s.ppm_projected[k], predicted);
    }
    out.files.push_back({"rabi_ppm_deviation.csv", dev.str()});
    return out;
}

// ---------------------------------------------------------------------------
// apl: decoherence under repeated partial projection, and the stability comparison

struct DecoherenceRun {
    std::vector<double> mean_estimate, sd_estimate, mean_phi, sd_phi, mean_projected;
    DecoherenceFit fit;
};

inline DecoherenceRun simulate_decoherence(const RunConfig &cfg, std::size_t cycles, std::size_t samples) {
    if (cycles < 3 || samples < 2) {
        throw ConfigError("decoherence run needs >= 3 cycles and >= 2 samples");
    }
    auto rc = ramsey_from(cfg);
    rc.n_cp = cycles;
    const auto runs = parallel_map(
        samples,
        [&](std::size_t i) {
            auto ens = ensemble_for(cfg, "apl.decoherence", i);
            auto lo = oscillator_for(cfg, "apl.decoherence.lo", i);
            return run_apl_block(ens, lo, rc, i);
        },
        threads_of(cfg));
    DecoherenceRun d;
    std::vector<std::vector<double>> projected;
    for (const auto &r : runs) {
        auto &series = projected.emplace_back();
        for (const auto &c : r) {
            series.push_back(c.projected_before);
        }
    }
    for (std::size_t k = 0; k < cycles; ++k) {
        std::vector<double> est, phi, proj;
        for (const auto &r : runs) {
            est.push_back(r[k].measurement.estimate);
            phi.push_back(r[k].phi_n);
            proj.push_back(r[k].projected_before);
        }
        d.mean_estimate.push_back(mean(est));
        d.sd_estimate.push_back(sample_sd(est));
        d.mean_phi.push_back(mean(phi));
        d.sd_phi.push_back(sample_sd(phi));
        d.mean_projected.push_back(mean(proj));
    }
    d.fit = fit_decoherence_trials(projected);
    return d;
}

struct StabilityComparison {
    std::vector<CycleRecord> standard, apl;
    std::vector<SdByN> sd_by_n;
    FractionalFrequencySeries standard_y, apl_y;
    std::vector<AllanPoint> standard_allan, apl_allan;
    LineFit apl_scaling;     // log sd(delta_f_n) vs log(n T_FP)
    LineFit standard_slope;  // log adev vs log tau over one decade
    double allan_ratio = 0.0;  // standard / APL, long-term white coefficients
    double phase_snr = 0.0;    // 1 / sd(phi) of the standard mode
    std::size_t saturated = 0;
};

/// Standard Ramsey (n_blocks * n_cp cycles) and phase-locked blocks
/// (n_blocks) driven by LO streams with the same seed, so both modes see the
/// same oscillator noise realization cycle by cycle.
inline StabilityComparison compare_stability(const RunConfig &cfg, std::size_t n_blocks, AllanMode mode) {
    auto rc = ramsey_from(cfg);
    if (n_blocks < 20) {
        throw ConfigError("stability comparison needs at least 20 blocks");
    }
    StabilityComparison c;
    auto results = parallel_map(
        2,
        [&](std::size_t which) {
            auto ens = ensemble_for(cfg, which == 0 ? "apl.standard" : "apl.locked", 0);
            auto lo = oscillator_for(cfg, "apl.lo", 0);
            RamseyConfig r = rc;
            r.n_cycles = n_blocks * rc.n_cp;
            return which == 0 ? run_standard_ramsey(ens, lo, r) : run_apl(ens, lo, r);
        },
        threads_of(cfg));
    c.standard = std::move(results[0]);
    c.apl = std::move(results[1]);
    for (const auto *set : {&c.standard, &c.apl}) {
        for (const auto &r : *set) {
            c.saturated += r.saturated;
        }
    }

    const double f0 = cfg.real("lo.f0_hz");
    c.sd_by_n = sd_by_n(c.apl, rc.n_cp, rc.t_fp);
    if (rc.n_cp >= 2) {
        c.apl_scaling = sd_scaling(c.sd_by_n);
    }

    c.standard_y = final_measurement_series(c.standard, 1, f0, rc.standard_cycle_time());
    c.apl_y = final_measurement_series(c.apl, rc.n_cp, f0, rc.apl_block_time());
    c.standard_allan = allan_deviation(c.standard_y, octave_taus(c.standard_y), mode);
    c.apl_allan = allan_deviation(c.apl_y, octave_taus(c.apl_y), mode);

    const auto decade = linear_taus(c.standard_y.y.size(), c.standard_y.tau0, 10);
    c.standard_slope = allan_slope(allan_deviation(c.standard_y, decade, mode));

    // long term: tau >= one block, at least 10 bins
    auto long_term = [](const FractionalFrequencySeries &s, double tau_min) {
        std::vector<double> taus;
        for (double t : octave_taus(s)) {
            if (t >= tau_min * (1.0 - 1e-9) && t * 10.0 <= static_cast<double>(s.y.size()) * s.tau0) {
                taus.push_back(t);
            }
        }
        return taus;
    };
    const double block = rc.apl_block_time();
    const auto std_lt = allan_deviation(c.standard_y, long_term(c.standard_y, block), mode);
    const auto apl_lt = allan_deviation(c.apl_y, long_term(c.apl_y, block), mode);
    c.allan_ratio = white_coefficient(std_lt, static_cast<double>(c.standard_y.y.size()) * c.standard_y.tau0) /
                    white_coefficient(apl_lt, static_cast<double>(c.apl_y.y.size()) * c.apl_y.tau0);

    std::vector<double> phi;
    for (const auto &r : c.standard) {
        phi.push_back(r.phi_n);
    }
    c.phase_snr = 1.0 / sample_sd(phi);
    return c;
}

inline AllanMode allan_mode_from(const RunConfig &cfg) {
    const auto &m = cfg.text("allan.mode");
    if (m == "overlapping") {
        return AllanMode::overlapping;
    }
    if (m == "non_overlapping") {
        return AllanMode::non_overlapping;
    }
    throw ConfigError("allan.mode must be overlapping or non_overlapping, got '" + m + "'");
}

inline std::string allan_csv(const std::string &command, const RunConfig &cfg, const std::vector<AllanPoint> &points) {
    CsvBuilder t(command, cfg, {"tau_s", "adev", "n_pairs"});
    for (const auto &p : points) {
        t.row(p.tau, p.adev, p.n_pairs);
    }
    return t.str();
}

inline StabilityParams stability_params_from(const RunConfig &cfg, double measured_snr, double cycle_time) {
    StabilityParams sp;
    sp.K = cfg.real("stab.K");
    sp.f0 = cfg.real("lo.f0_hz");
    sp.Q = cfg.optional_real("stab.Q").value_or(quality_factor(sp.f0, cfg.real("ramsey.t_fp_s")));
    sp.snr = cfg.optional_real("stab.snr").value_or(measured_snr);
    sp.cycle_time = cycle_time;
    sp.n_cp = static_cast<double>(cfg.count("ramsey.n_cp"));
    sp.n_atom = cfg.optional_real("stab.n_atom").value_or(static_cast<double>(cfg.count("ensemble.n_ions")));
    try {
        sp.validate();
    } catch (const InvalidArgument &e) {
        throw ConfigError(e.what());
    }
    return sp;
}

inline std::string limits_csv(const std::string &command, const RunConfig &cfg, const StabilityParams &sp,
                              const std::vector<double> &taus, std::vector<std::string> *warnings) {
    CsvBuilder t(command, cfg, {"tau_s", "technical", "apl", "apl_repetition", "qpn"});
    bool warned = false;
    for (double tau : taus) {
        if (tau < sp.cycle_time * (1.0 - 1e-9)) {
            continue;
        }
        double rep = std::nan("");
        if (tau >= sp.n_cp * sp.cycle_time * (1.0 - 1e-9)) {
            const auto lv = limit_apl_repetition(sp, tau);
            rep = lv.value;
            if (lv.bound_violated && !warned && warnings) {
                warnings->push_back(lv.warning);
                warned = true;
            }
        }
        const double qpn = sp.n_atom >= 1.0 ? limit_qpn(sp, tau) : std::nan("");
        t.row(tau, limit_technical(sp, tau), limit_apl(sp, tau), rep, qpn);
    }
    return t.str();
}

inline void append_decoherence(CommandResult &out, const std::string &command, const RunConfig &cfg) {
    const auto d = simulate_decoherence(cfg, cfg.count("apl.ppm_cycles"), cfg.count("apl.samples"));
    CsvBuilder t(command, cfg,
                 {"n", "mean_estimate", "sd_estimate", "mean_phi_rad", "sd_phi_rad", "mean_projected", "fit_projected"});
    for (std::size_t k = 0; k < d.mean_estimate.size(); ++k) {
        t.row(k + 1, d.mean_estimate[k], d.sd_estimate[k], d.mean_phi[k], d.sd_phi[k], d.mean_projected[k],
              d.fit.model.amplitude * predicted_projected_fraction({d.fit.model.p, 1.0}, k + 1));
    }
    out.files.push_back({"decoherence.csv", t.str()});
    CsvBuilder f(command, cfg, {"parameter", "value"});
    f.row("p", d.fit.model.p)
        .row("amplitude", d.fit.model.amplitude)
        .row("residual_norm", d.fit.residual_norm)
        .row("p_stderr", d.fit.p_stderr)
        .row("p_ci95_lo", d.fit.p_ci_lo)
        .row("p_ci95_hi", d.fit.p_ci_hi);
    out.files.push_back({"decoherence_fit.csv", f.str()});
}

inline std::string cycles_csv(const std::string &command, const RunConfig &cfg, const std::vector<CycleRecord> &records) {
    CsvBuilder t(command, cfg, {"block_id", "n", "timestamp_s", "estimate", "phi_rad", "delta_f_hz"});
    for (const auto &r : records) {
        t.row(r.block_id, r.n, r.timestamp, r.measurement.estimate, r.phi_n, r.delta_f_hz);
    }
    return t.str();
}

inline void append_stability(CommandResult &out, const std::string &command, const RunConfig &cfg) {
    const auto rc = ramsey_from(cfg);
    const auto n_blocks = trials_or(cfg, rc.n_cycles / rc.n_cp);
    const auto c = compare_stability(cfg, n_blocks, allan_mode_from(cfg));
    const double f0 = cfg.real("lo.f0_hz");

    out.files.push_back({"standard_cycles.csv", cycles_csv(command, cfg, c.standard)});
    out.files.push_back({"apl_cycles.csv", cycles_csv(command, cfg, c.apl)});

    CsvBuilder sd(command, cfg, {"n", "tau_s", "sd_delta_f_hz", "sd_y", "count"});
    for (const auto &s : c.sd_by_n) {
        sd.row(s.n, s.tau, s.sd_delta_f_hz, s.sd_delta_f_hz / f0, s.count);
    }
    out.files.push_back({"apl_sd_by_n.csv", sd.str()});
    out.files.push_back({"allan_standard.csv", allan_csv(command, cfg, c.standard_allan)});
    out.files.push_back({"allan_apl.csv", allan_csv(command, cfg, c.apl_allan)});

    const auto sp = stability_params_from(cfg, c.phase_snr, rc.standard_cycle_time());
    std::vector<double> taus;
    for (const auto &p : c.standard_allan) {
        taus.push_back(p.tau);
    }
    out.files.push_back({"limits.csv", limits_csv(command, cfg, sp, taus, &out.warnings)});

    CsvBuilder sum(command, cfg, {"metric", "value"});
    sum.row("n_blocks", n_blocks);
    for (std::size_t i = 1; i < c.sd_by_n.size(); ++i) {
        sum.row("sd_ratio_n" + std::to_string(i + 1), c.sd_by_n[i].sd_delta_f_hz / c.sd_by_n[0].sd_delta_f_hz);
    }
    sum.row("apl_sd_slope", c.apl_scaling.slope)
        .row("standard_allan_slope", c.standard_slope.slope)
        .row("allan_ratio_standard_over_apl", c.allan_ratio)
        .row("expected_ratio_sqrt_n_cp", std::sqrt(static_cast<double>(rc.n_cp)))
        .row("phase_snr", c.phase_snr)
        .row("saturated_cycles", c.saturated);
    out.files.push_back({"summary.csv", sum.str()});
    if (c.saturated > 0) {
        out.warnings.push_back(std::to_string(c.saturated) +
                               " cycles read a population beyond 0.5 +/- 0.45; phase estimates there are clipped");
    }
}

inline CommandResult cmd_apl(const RunConfig &cfg) {
    CommandResult out{"apl", {}, {}};
    append_decoherence(out, "apl", cfg);
    append_stability(out, "apl", cfg);
    return out;
}

// ---------------------------------------------------------------------------
// diffusion

inline CommandResult cmd_diffusion(const RunConfig &cfg) {
    const auto d = diffusion_from(cfg);
    const double diffusion = d.diffusion_coefficient();
    const auto walkers = trials_or(cfg, cfg.count("diff.n_walkers"));
    if (walkers == 0) {
        throw ConfigError("diff.n_walkers must be at least 1");
    }
    const auto seed = seed_of(cfg);
    CommandResult out{"diffusion", {}, {}};

    constexpr std::size_t rows = 50, stride = 10;
    const double t_max = cfg.real("diff.msd_t_max_s");
    if (!(t_max > 0.0)) {
        throw ConfigError("diff.msd_t_max_s must be positive");
    }
    const double h = t_max / static_cast<double>(rows * stride);
    const auto free = mean_squared_displacement(diffusion, h, rows * stride, stride, walkers, std::nullopt,
                                                derive_seed(seed, "diffusion.msd"));
    const auto boxed = mean_squared_displacement(diffusion, h, rows * stride, stride, walkers, d.cloud_length,
                                                 derive_seed(seed, "diffusion.msd"));
    CsvBuilder msd("diffusion", cfg, {"t_s", "msd_free_m2", "msd_reflecting_m2", "two_d_t_m2"});
    for (std::size_t i = 0; i < free.size(); ++i) {
        msd.row(free[i].t, free[i].msd, boxed[i].msd, 2.0 * diffusion * free[i].t);
    }
    out.files.push_back({"msd.csv", msd.str()});

    CsvBuilder dt("diffusion", cfg, {"temperature_k", "d_m2_s"});
    for (int i = 0; i <= 12; ++i) {
        const double t = 0.01 * std::pow(200.0, i / 12.0);  // 10 mK .. 2 K
        dt.row(t, diffusion_constant(t, d.mobility));
    }
    out.files.push_back({"d_vs_t.csv", dt.str()});

    const double max_duration = cfg.real("diff.max_duration_s");
    if (!(max_duration >= 0.0)) {
        throw ConfigError("diff.max_duration_s must be non-negative");
    }
    constexpr int struck_rows = 10;
    const auto fractions = parallel_map(
        struck_rows + 1,
        [&](std::size_t i) {
            const double duration = max_duration * static_cast<double>(i) / struck_rows;
            return fraction_struck(d, duration, walkers, derive_seed(seed, "diffusion.struck")).fraction;
        },
        threads_of(cfg));
    CsvBuilder st("diffusion", cfg, {"duration_s", "fraction_struck"});
    for (std::size_t i = 0; i < fractions.size(); ++i) {
        st.row(max_duration * static_cast<double>(i) / struck_rows, fractions[i]);
    }
    out.files.push_back({"struck.csv", st.str()});
    return out;
}

// ---------------------------------------------------------------------------
// allan

/// Reads "t, y" rows. Blank lines and '#' comments are skipped; a first
/// non-numeric row is taken as a header. Spacing must be uniform.
inline FractionalFrequencySeries read_series_csv(std::istream &in) {
    std::vector<double> t, y;
    std::string line;
    std::size_t line_no = 0;
    bool header_allowed = true;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.find_first_not_of(" \t") == std::string::npos || line[line.find_first_not_of(" \t")] == '#') {
            continue;
        }
        const auto comma = line.find(',');
        if (comma == std::string::npos) {
            throw ParseError("expected two comma-separated columns 't,y'", line_no);
        }
        auto parse = [&](std::string field, double &v) {
            const auto b = field.find_first_not_of(" \t");
            const auto e = field.find_last_not_of(" \t");
            if (b == std::string::npos) {
                return false;
            }
            field = field.substr(b, e - b + 1);
            auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
            return ec == std::errc{} && ptr == field.data() + field.size() && std::isfinite(v);
        };
        double tv = 0.0, yv = 0.0;
        const bool ok = parse(line.substr(0, comma), tv) && parse(line.substr(comma + 1), yv);
        if (!ok) {
            if (header_allowed) {
                header_allowed = false;
                continue;
            }
            throw ParseError("cannot parse numbers from '" + line + "'", line_no);
        }
        header_allowed = false;
        if (!t.empty()) {
            const double spacing = t.size() >= 2 ? t[1] - t[0] : tv - t.back();
            if (!(tv - t.back() > 0.0) || std::abs((tv - t.back()) - spacing) > 1e-6 * std::abs(spacing)) {
                throw ParseError("time stamps must increase with uniform spacing", line_no);
            }
        }
        t.push_back(tv);
        y.push_back(yv);
    }
    if (y.size() < 2) {
        throw ParseError("need at least two samples", line_no);
    }
    return {std::move(y), (t.back() - t.front()) / static_cast<double>(t.size() - 1)};
}

inline CommandResult cmd_allan(const std::string &input, const RunConfig &cfg) {
    std::ifstream f(input);
    if (!f) {
        throw std::runtime_error("cannot open input series " + input);
    }
    const auto series = read_series_csv(f);
    const auto points = allan_deviation(series, octave_taus(series), allan_mode_from(cfg));
    CommandResult out{"allan", {}, {}};
    out.files.push_back({"allan.csv", allan_csv("allan", cfg, points)});
    if (cfg.optional_real("stab.snr")) {
        const auto sp = stability_params_from(cfg, 0.0, series.tau0);
        std::vector<double> taus;
        for (const auto &p : points) {
            taus.push_back(p.tau);
        }
        out.files.push_back({"limits.csv", limits_csv("allan", cfg, sp, taus, &out.warnings)});
    }
    return out;
}

// ---------------------------------------------------------------------------
// reproduce

inline CommandResult cmd_reproduce(const std::string &figure, const RunConfig &cfg) {
    if (figure == "fig4") {
        auto r = cmd_rabi(cfg);
        r.command = "reproduce-fig4";
        return r;
    }
    if (figure == "fig5") {
        CommandResult out{"reproduce-fig5", {}, {}};
        append_decoherence(out, "reproduce-fig5", cfg);
        return out;
    }
    if (figure == "fig6") {
        CommandResult out{"reproduce-fig6", {}, {}};
        append_stability(out, "reproduce-fig6", cfg);
        return out;
    }
    throw ConfigError("unknown figure '" + figure + "' (expected fig4, fig5 or fig6)");
}

// ---------------------------------------------------------------------------
// output

inline std::string metadata_json(const CommandResult &result, const RunConfig &cfg) {
    nlohmann::json j;
    j["command"] = result.command;
    j["seed"] = cfg.integer("run.seed");
    j["config_hash"] = cfg.hash_hex();
    j["config"] = cfg.values();
    j["files"] = nlohmann::json::array();
    for (const auto &f : result.files) {
        j["files"].push_back(f.name);
    }
    j["warnings"] = result.warnings;
    return j.dump(2) + "\n";
}

/// Writes every output plus run.json into `dir`.
inline void write_outputs(const std::filesystem::path &dir, const CommandResult &result, const RunConfig &cfg) {
    std::filesystem::create_directories(dir);
    auto write = [&](const std::string &name, const std::string &content) {
        std::ofstream f(dir / name, std::ios::binary);
        if (!f) {
            throw std::runtime_error("cannot write " + (dir / name).string());
        }
        f << content;
    };
    for (const auto &file : result.files) {
        write(file.name, file.content);
    }
    write("run.json", metadata_json(result, cfg));
}

}  // namespace aplclock

#endif
