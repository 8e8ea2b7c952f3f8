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

#ifndef APLCLOCK_DIFFUSION_HPP
#define APLCLOCK_DIFFUSION_HPP

// Overdamped 1D Brownian transport of ions along the trap axis, and the
// resulting overlap of ion trajectories with the detection beam.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "aplclock/errors.hpp"
#include "aplclock/random.hpp"

namespace aplclock {

inline constexpr double boltzmann_constant = 1.380649e-23;  // J/K

/// Half-width of the default (centered) detection interval. Calibrated so
/// that D = 3.5e-6 m^2/s over a 1 ms window with 10 us sub-steps strikes
/// 17 % of a uniformly spread 3 mm cloud. The beam waist (~200 um at a
/// diagonal crossing) motivates the order of magnitude only.
inline constexpr double default_beam_half_width = 1.93e-4;

struct BeamInterval {
    double lo = -default_beam_half_width;
    double hi = default_beam_half_width;

    bool contains(double z) const {
        return z >= lo && z <= hi;
    }
    double width() const {
        return hi - lo;
    }
};

struct DiffusionConfig {
    double temperature = 0.05;                       // K
    double mobility = 8.62e18;                       // m^2 s^-1 J^-1
    std::optional<double> diffusion_override = 3.5e-6;  // m^2/s
    double dt = 1e-5;                                // s, sub-step during a measurement
    double cloud_length = 3e-3;                      // m
    BeamInterval beam;

    double diffusion_coefficient() const;

    void validate() const {
        if (!(temperature >= 0.0)) {
            throw InvalidArgument("temperature must be non-negative");
        }
        if (!(mobility > 0.0)) {
            throw InvalidArgument("mobility must be positive");
        }
        if (diffusion_override && !(*diffusion_override >= 0.0)) {
            throw InvalidArgument("diffusion override must be non-negative");
        }
        if (!(dt > 0.0)) {
            throw InvalidArgument("diffusion dt must be positive");
        }
        if (!(cloud_length > 0.0)) {
            throw InvalidArgument("cloud length must be positive");
        }
        const double half = 0.5 * cloud_length;
        if (!(beam.lo <= beam.hi) || beam.lo < -half || beam.hi > half) {
            throw InvalidArgument("beam interval must lie inside the cloud");
        }
    }
};

/// Einstein relation D = mu k_B T.
inline double diffusion_constant(double temperature, double mobility) {
    if (!(temperature >= 0.0)) {
        throw InvalidArgument("temperature must be non-negative");
    }
    return mobility * boltzmann_constant * temperature;
}

inline double DiffusionConfig::diffusion_coefficient() const {
    return diffusion_override ? *diffusion_override : diffusion_constant(temperature, mobility);
}

/// Folds a free displacement back into [-L/2, L/2] (method of images), which
/// is exact for reflected Brownian motion regardless of step size.
inline double reflect_into_cloud(double z, double cloud_length) {
    const double half = 0.5 * cloud_length;
    double u = std::fmod(z + half, 2.0 * cloud_length);
    if (u < 0.0) {
        u += 2.0 * cloud_length;
    }
    if (u > cloud_length) {
        u = 2.0 * cloud_length - u;
    }
    return std::clamp(u - half, -half, half);
}

/// Gaussian displacement of variance 2 D dt for every walker; reflects at the
/// cloud ends unless `cloud_length` is empty (free space).
inline void step_brownian(std::span<double> positions, double diffusion, double dt, RngStream &rng,
                          std::optional<double> cloud_length = std::nullopt) {
    if (!(diffusion >= 0.0)) {
        throw InvalidArgument("diffusion constant must be non-negative");
    }
    if (diffusion == 0.0) {
        return;
    }
    const double sd = std::sqrt(2.0 * diffusion * dt);
    for (double &z : positions) {
        z += rng.normal(0.0, sd);
        if (cloud_length) {
            z = reflect_into_cloud(z, *cloud_length);
        }
    }
}

/// Walks `positions` for `duration` with sub-steps of at most min(cfg.dt,
/// duration / 100) and returns the indices of walkers that were inside the
/// beam interval at the start or after any sub-step.
inline std::vector<std::size_t> walk_and_mark(std::span<double> positions, const DiffusionConfig &cfg, double duration,
                                              RngStream &rng) {
    cfg.validate();
    if (!(duration >= 0.0)) {
        throw InvalidArgument("duration must be non-negative");
    }
    std::vector<char> struck(positions.size(), 0);
    for (std::size_t i = 0; i < positions.size(); ++i) {
        struck[i] = cfg.beam.contains(positions[i]);
    }
    const double diffusion = cfg.diffusion_coefficient();
    if (duration > 0.0) {
        const auto n_steps =
            static_cast<std::size_t>(std::ceil(duration / std::min(cfg.dt, duration / 100.0) - 1e-9));
        const double h = duration / static_cast<double>(n_steps);
        const double sd = std::sqrt(2.0 * diffusion * h);
        for (std::size_t s = 0; s < n_steps; ++s) {
            for (std::size_t i = 0; i < positions.size(); ++i) {
                if (sd > 0.0) {
                    positions[i] = reflect_into_cloud(positions[i] + rng.normal(0.0, sd), cfg.cloud_length);
                }
                struck[i] |= cfg.beam.contains(positions[i]);
            }
        }
    }
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < struck.size(); ++i) {
        if (struck[i]) {
            out.push_back(i);
        }
    }
    return out;
}

struct StruckResult {
    double fraction = 0.0;
    std::vector<std::size_t> struck;
};

inline StruckResult fraction_struck(const DiffusionConfig &cfg, double duration, std::size_t n_ions,
                                    std::uint64_t seed) {
    cfg.validate();
    if (n_ions == 0) {
        throw InvalidArgument("need at least one walker");
    }
    auto rng = RngStream::named(seed, "diffusion.walkers");
    const double half = 0.5 * cfg.cloud_length;
    std::vector<double> z(n_ions);
    for (double &v : z) {
        v = rng.uniform(-half, half);
    }
    StruckResult r;
    r.struck = walk_and_mark(z, cfg, duration, rng);
    r.fraction = static_cast<double>(r.struck.size()) / static_cast<double>(n_ions);
    return r;
}

struct MsdPoint {
    double t = 0.0;
    double msd = 0.0;
};

/// Mean-squared axial displacement <(z - z0)^2> of uniformly started walkers,
/// sampled every `record_every` steps of size dt.
inline std::vector<MsdPoint> mean_squared_displacement(double diffusion, double dt, std::size_t n_steps,
                                                       std::size_t record_every, std::size_t n_walkers,
                                                       std::optional<double> cloud_length, std::uint64_t seed) {
    if (!(dt > 0.0) || n_walkers == 0 || record_every == 0) {
        throw InvalidArgument("msd needs dt > 0, walkers and a positive record stride");
    }
    auto rng = RngStream::named(seed, "diffusion.msd");
    const double half = 0.5 * cloud_length.value_or(3e-3);
    std::vector<double> z0(n_walkers);
    for (double &v : z0) {
        v = rng.uniform(-half, half);
    }
    std::vector<double> z = z0;
    std::vector<MsdPoint> out;
    for (std::size_t s = 1; s <= n_steps; ++s) {
        step_brownian(z, diffusion, dt, rng, cloud_length);
        if (s % record_every == 0) {
            double acc = 0.0;
            for (std::size_t i = 0; i < n_walkers; ++i) {
                acc += (z[i] - z0[i]) * (z[i] - z0[i]);
            }
            out.push_back({static_cast<double>(s) * dt, acc / static_cast<double>(n_walkers)});
        }
    }
    return out;
}

}  // namespace aplclock

#endif
