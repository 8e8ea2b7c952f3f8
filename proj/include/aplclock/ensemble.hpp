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

#ifndef APLCLOCK_ENSEMBLE_HPP
#define APLCLOCK_ENSEMBLE_HPP

// Semiclassical ion ensemble: one pure-state Bloch vector per ion.
//
// Conventions:
//   - z = +1 is the excited clock state, z = -1 the ground state.
//   - rotate(phase, angle) turns every vector by `angle` about the equatorial
//     axis (cos phase, sin phase, 0), right-hand rule. This is the Bloch image
//     of exp(-i angle (cos phase sx + sin phase sy) / 2) with |e> = (1, 0).
//   - free_precession(dphi) turns every vector by dphi about +z.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <optional>
#include <span>
#include <vector>

#include "aplclock/errors.hpp"
#include "aplclock/random.hpp"

namespace aplclock {

struct BlochVector {
    double x = 0.0;
    double y = 0.0;
    double z = -1.0;

    double norm() const {
        return std::sqrt(x * x + y * y + z * z);
    }

    double excited_probability() const {
        return 0.5 * (1.0 + z);
    }
};

struct IonRecord {
    BlochVector bloch;
    double z_pos = 0.0;  // axial position, meters
    bool ever_projected = false;
};

struct EnsembleState {
    std::vector<IonRecord> ions;
    double cloud_length = 3e-3;
    RngStream rng;

    std::size_t size() const {
        return ions.size();
    }
};

enum class DetectionMode { fixed_fraction, beam_overlap };

struct DetectionConfig {
    DetectionMode mode = DetectionMode::fixed_fraction;
    double sampling_fraction = 0.18;
    double technical_noise_sigma = 0.1;
    double measurement_duration = 1e-3;

    void validate() const {
        if (!(sampling_fraction >= 0.0 && sampling_fraction <= 1.0)) {
            throw InvalidArgument("sampling fraction must lie in [0, 1]");
        }
        if (!(technical_noise_sigma >= 0.0)) {
            throw InvalidArgument("technical noise sigma must be non-negative");
        }
        if (!(measurement_duration >= 0.0)) {
            throw InvalidArgument("measurement duration must be non-negative");
        }
    }

    static DetectionConfig full_projection(double technical_noise_sigma = 0.0) {
        return {DetectionMode::fixed_fraction, 1.0, technical_noise_sigma, 1e-3};
    }
};

struct MeasurementResult {
    /// Excited fraction among sampled ions plus technical noise; may leave [0, 1].
    double estimate = 0.0;
    std::size_t n_sampled = 0;
    /// Mean excited probability of the sampled ions before collapse.
    double true_fraction = 0.0;
    std::vector<std::size_t> sampled_indices;

    double clamped_estimate() const {
        return std::clamp(estimate, 0.0, 1.0);
    }
};

inline EnsembleState initialize_ensemble(std::size_t n, double cloud_length, std::uint64_t seed) {
    if (n == 0) {
        throw InvalidArgument("ensemble needs at least one ion");
    }
    if (!(cloud_length > 0.0) || !std::isfinite(cloud_length)) {
        throw InvalidArgument("cloud length must be positive");
    }
    EnsembleState state{{}, cloud_length, RngStream::named(seed, "ensemble")};
    auto positions = RngStream::named(seed, "ensemble.positions");
    state.ions.resize(n);
    const double half = 0.5 * cloud_length;
    for (auto &ion : state.ions) {
        ion.z_pos = positions.uniform(-half, half);
    }
    return state;
}

/// Optical pumping back to the ground state. Positions are kept.
inline void reinitialize(EnsembleState &state) {
    for (auto &ion : state.ions) {
        ion.bloch = BlochVector{};
        ion.ever_projected = false;
    }
}

using Matrix3 = std::array<std::array<double, 3>, 3>;

inline Matrix3 rotation_matrix(const std::array<double, 3> &axis, double angle) {
    const double a = std::remainder(angle, 2.0 * std::numbers::pi);
    const double c = std::cos(a);
    const double s = std::sin(a);
    const double t = 1.0 - c;
    const auto [x, y, z] = axis;
    return {{{c + x * x * t, x * y * t - z * s, x * z * t + y * s},
             {y * x * t + z * s, c + y * y * t, y * z * t - x * s},
             {z * x * t - y * s, z * y * t + x * s, c + z * z * t}}};
}

inline BlochVector rotate_vector(const Matrix3 &m, const BlochVector &v) {
    return {m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
            m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
            m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z};
}

inline void rotate(EnsembleState &state, double microwave_phase, double angle) {
    const double phase = std::remainder(microwave_phase, 2.0 * std::numbers::pi);
    const auto m = rotation_matrix({std::cos(phase), std::sin(phase), 0.0}, angle);
    for (auto &ion : state.ions) {
        ion.bloch = rotate_vector(m, ion.bloch);
    }
}

inline void free_precession(EnsembleState &state, double phase_increment) {
    const double a = std::remainder(phase_increment, 2.0 * std::numbers::pi);
    const double c = std::cos(a);
    const double s = std::sin(a);
    for (auto &ion : state.ions) {
        const double x = ion.bloch.x;
        const double y = ion.bloch.y;
        ion.bloch.x = c * x - s * y;
        ion.bloch.y = s * x + c * y;
    }
}

inline double excited_population(const EnsembleState &state) {
    if (state.ions.empty()) {
        return 0.0;
    }
    double sum = 0.0;
    for (const auto &ion : state.ions) {
        sum += ion.bloch.excited_probability();
    }
    return sum / static_cast<double>(state.ions.size());
}

inline double ever_projected_fraction(const EnsembleState &state) {
    if (state.ions.empty()) {
        return 0.0;
    }
    auto n = std::count_if(state.ions.begin(), state.ions.end(), [](const IonRecord &r) { return r.ever_projected; });
    return static_cast<double>(n) / static_cast<double>(state.ions.size());
}

/// Projects a subset of the ensemble onto the clock basis and reads it out.
///
/// Without an explicit `sampled` list each ion is picked independently with
/// probability `det.sampling_fraction`; in beam_overlap mode the caller must
/// supply the struck set (see diffusion::walk_and_mark).
inline MeasurementResult partial_projection(EnsembleState &state, const DetectionConfig &det,
                                            std::optional<std::span<const std::size_t>> sampled = std::nullopt) {
    det.validate();
    MeasurementResult result;
    if (sampled) {
        result.sampled_indices.assign(sampled->begin(), sampled->end());
        for (auto i : result.sampled_indices) {
            if (i >= state.ions.size()) {
                throw InvalidArgument("sampled index out of range");
            }
        }
    } else {
        if (det.mode == DetectionMode::beam_overlap) {
            throw InvalidArgument("beam_overlap detection needs the struck index set");
        }
        std::bernoulli_distribution pick(det.sampling_fraction);
        for (std::size_t i = 0; i < state.ions.size(); ++i) {
            if (pick(state.rng.engine())) {
                result.sampled_indices.push_back(i);
            }
        }
    }
    if (result.sampled_indices.empty()) {
        throw EmptySampleError();
    }

    std::size_t excited = 0;
    double expected = 0.0;
    for (auto i : result.sampled_indices) {
        auto &ion = state.ions[i];
        const double p_up = std::clamp(ion.bloch.excited_probability(), 0.0, 1.0);
        expected += p_up;
        const bool up = state.rng.uniform() < p_up;
        ion.bloch = BlochVector{0.0, 0.0, up ? 1.0 : -1.0};
        ion.ever_projected = true;
        excited += up;
    }
    result.n_sampled = result.sampled_indices.size();
    const auto n = static_cast<double>(result.n_sampled);
    result.true_fraction = expected / n;
    result.estimate = static_cast<double>(excited) / n;
    if (det.technical_noise_sigma > 0.0) {
        result.estimate += state.rng.normal(0.0, det.technical_noise_sigma);
    }
    return result;
}

}  // namespace aplclock

#endif
