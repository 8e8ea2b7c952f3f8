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

#include "aplclock/ensemble.hpp"

#include <array>
#include <cmath>
#include <complex>
#include <numbers>

#include "gtest/gtest.h"

using namespace aplclock;

namespace {

constexpr double pi = std::numbers::pi;

// Independent route: apply exp(-i angle (cos phase sx + sin phase sy) / 2) to
// a spinor with |e> = (1, 0) and read the Bloch vector back as <sigma>.
BlochVector unitary_oracle(const BlochVector &v, double phase, double angle) {
    using C = std::complex<double>;
    const double theta = std::acos(std::clamp(v.z, -1.0, 1.0));
    const double azimuth = std::atan2(v.y, v.x);
    std::array<C, 2> psi{C(std::cos(theta / 2), 0.0), std::polar(std::sin(theta / 2), azimuth)};
    const C i(0.0, 1.0);
    const double c = std::cos(angle / 2), s = std::sin(angle / 2);
    const C off = -i * s * std::polar(1.0, -phase);  // (0,1) entry of n.sigma scaled
    const C off_conj = -i * s * std::polar(1.0, phase);
    std::array<C, 2> out{c * psi[0] + off * psi[1], off_conj * psi[0] + c * psi[1]};
    const C rho01 = out[0] * std::conj(out[1]);
    return {2.0 * rho01.real(), -2.0 * rho01.imag(), std::norm(out[0]) - std::norm(out[1])};
}

EnsembleState single_ion(BlochVector v) {
    auto s = initialize_ensemble(1, 3e-3, 1);
    s.ions[0].bloch = v;
    return s;
}

BlochVector random_unit(RngStream &rng) {
    const double z = rng.uniform(-1.0, 1.0);
    const double a = rng.uniform(0.0, 2.0 * pi);
    const double r = std::sqrt(1.0 - z * z);
    return {r * std::cos(a), r * std::sin(a), z};
}

void expect_near(const BlochVector &a, const BlochVector &b, double tol) {
    EXPECT_NEAR(a.x, b.x, tol);
    EXPECT_NEAR(a.y, b.y, tol);
    EXPECT_NEAR(a.z, b.z, tol);
}

}  // namespace

TEST(Ensemble, initializes_to_ground_state) {
    const auto s = initialize_ensemble(3, 3e-3, 99);
    ASSERT_EQ(s.size(), 3u);
    for (const auto &ion : s.ions) {
        EXPECT_EQ(ion.bloch.x, 0.0);
        EXPECT_EQ(ion.bloch.y, 0.0);
        EXPECT_EQ(ion.bloch.z, -1.0);
        EXPECT_FALSE(ion.ever_projected);
    }
}

TEST(Ensemble, positions_fill_the_cloud_uniformly) {
    const double length = 3e-3;
    const auto s = initialize_ensemble(2000, length, 5);
    double sum = 0.0;
    for (const auto &ion : s.ions) {
        EXPECT_LE(std::abs(ion.z_pos), 1.5e-3);
        sum += ion.z_pos;
    }
    // sd of the mean of 2000 uniforms on [-L/2, L/2] is L / sqrt(12 * 2000)
    EXPECT_LT(std::abs(sum / 2000.0), 4.0 * length / std::sqrt(12.0 * 2000.0));
}

TEST(Ensemble, same_seed_same_positions) {
    const auto a = initialize_ensemble(500, 3e-3, 42);
    const auto b = initialize_ensemble(500, 3e-3, 42);
    const auto c = initialize_ensemble(500, 3e-3, 43);
    bool differs = false;
    for (std::size_t i = 0; i < 500; ++i) {
        EXPECT_EQ(a.ions[i].z_pos, b.ions[i].z_pos);
        differs |= a.ions[i].z_pos != c.ions[i].z_pos;
    }
    EXPECT_TRUE(differs);
}

TEST(Ensemble, rejects_bad_arguments) {
    EXPECT_THROW(initialize_ensemble(0, 3e-3, 1), InvalidArgument);
    EXPECT_THROW(initialize_ensemble(10, 0.0, 1), InvalidArgument);
    EXPECT_THROW(initialize_ensemble(10, -1.0, 1), InvalidArgument);
}

TEST(Ensemble, pi_pulse_inverts) {
    auto s = single_ion({});
    rotate(s, 0.0, pi);
    EXPECT_NEAR(s.ions[0].bloch.z, 1.0, 1e-15);
}

TEST(Ensemble, full_turn_is_identity) {
    RngStream rng(3);
    for (int trial = 0; trial < 100; ++trial) {
        const auto v = random_unit(rng);
        auto s = single_ion(v);
        rotate(s, rng.uniform(-10.0, 10.0), 2.0 * pi);
        expect_near(s.ions[0].bloch, v, 1e-12);
    }
}

TEST(Ensemble, half_pi_pulse_matches_unitary) {
    auto s = single_ion({});
    rotate(s, 0.0, pi / 2);
    expect_near(s.ions[0].bloch, {0.0, 1.0, 0.0}, 1e-15);
    expect_near(unitary_oracle({0.0, 0.0, -1.0}, 0.0, pi / 2), {0.0, 1.0, 0.0}, 1e-15);
}

TEST(Ensemble, rotations_match_unitary_for_random_inputs) {
    RngStream rng(11);
    for (int trial = 0; trial < 500; ++trial) {
        const auto v = random_unit(rng);
        const double phase = rng.uniform(-pi, pi);
        const double angle = rng.uniform(-4 * pi, 4 * pi);
        auto s = single_ion(v);
        rotate(s, phase, angle);
        expect_near(s.ions[0].bloch, unitary_oracle(v, phase, angle), 1e-12);
    }
}

TEST(Ensemble, free_precession_quarter_turn) {
    auto s = single_ion({0.0, 1.0, 0.0});
    free_precession(s, pi / 2);
    expect_near(s.ions[0].bloch, {-1.0, 0.0, 0.0}, 1e-15);
}

TEST(Ensemble, free_precession_matches_z_rotation_matrix) {
    RngStream rng(12);
    for (int trial = 0; trial < 200; ++trial) {
        const auto v = random_unit(rng);
        const double a = rng.uniform(-20.0, 20.0);
        auto s = single_ion(v);
        free_precession(s, a);
        // R_z(a) = [[cos, -sin, 0], [sin, cos, 0], [0, 0, 1]]
        const BlochVector expected{std::cos(a) * v.x - std::sin(a) * v.y, std::sin(a) * v.x + std::cos(a) * v.y, v.z};
        expect_near(s.ions[0].bloch, expected, 1e-12);
        EXPECT_EQ(s.ions[0].bloch.z, v.z);
    }
    auto zero = single_ion({0.6, 0.0, 0.8});
    free_precession(zero, 0.0);
    expect_near(zero.ions[0].bloch, {0.6, 0.0, 0.8}, 0.0);
}

TEST(Ensemble, excited_population_limits) {
    auto s = initialize_ensemble(10, 3e-3, 1);
    EXPECT_EQ(excited_population(s), 0.0);
    rotate(s, 0.0, pi);
    EXPECT_NEAR(excited_population(s), 1.0, 1e-15);
    reinitialize(s);
    rotate(s, 0.3, pi / 2);
    EXPECT_NEAR(excited_population(s), 0.5, 1e-15);
}

TEST(Ensemble, norm_preserved_under_random_sequences) {
    RngStream rng(21);
    auto s = initialize_ensemble(50, 3e-3, 2);
    for (auto &ion : s.ions) {
        ion.bloch = random_unit(rng);
    }
    for (int op = 0; op < 2000; ++op) {
        if (rng.bernoulli(0.5)) {
            rotate(s, rng.uniform(-pi, pi), rng.uniform(-2 * pi, 2 * pi));
        } else {
            free_precession(s, rng.uniform(-50.0, 50.0));
        }
    }
    for (const auto &ion : s.ions) {
        EXPECT_NEAR(ion.bloch.norm(), 1.0, 1e-9);
    }
}

TEST(Ensemble, readout_and_revert_pulses_cancel) {
    RngStream rng(22);
    auto s = initialize_ensemble(100, 3e-3, 2);
    std::vector<BlochVector> before;
    for (auto &ion : s.ions) {
        ion.bloch = random_unit(rng);
        before.push_back(ion.bloch);
    }
    rotate(s, pi / 2, pi / 2);
    rotate(s, pi / 2, 3 * pi / 2);
    for (std::size_t i = 0; i < s.size(); ++i) {
        expect_near(s.ions[i].bloch, before[i], 1e-9);
    }
}

TEST(Projection, full_sample_of_excited_ions_reads_one) {
    auto s = initialize_ensemble(100, 3e-3, 1);
    rotate(s, 0.0, pi);
    DetectionConfig det{DetectionMode::fixed_fraction, 1.0, 0.0, 1e-3};
    const auto m = partial_projection(s, det);
    EXPECT_EQ(m.estimate, 1.0);
    EXPECT_EQ(m.n_sampled, 100u);
    EXPECT_NEAR(m.true_fraction, 1.0, 1e-15);
}

TEST(Projection, zero_fraction_is_an_empty_sample) {
    auto s = initialize_ensemble(100, 3e-3, 1);
    DetectionConfig det{DetectionMode::fixed_fraction, 0.0, 0.1, 1e-3};
    EXPECT_THROW(partial_projection(s, det), EmptySampleError);
}

TEST(Projection, beam_overlap_needs_struck_set) {
    auto s = initialize_ensemble(10, 3e-3, 1);
    DetectionConfig det{DetectionMode::beam_overlap, 0.18, 0.0, 1e-3};
    EXPECT_THROW(partial_projection(s, det), InvalidArgument);
    const std::vector<std::size_t> struck{1, 4};
    const auto m = partial_projection(s, det, std::span<const std::size_t>(struck));
    EXPECT_EQ(m.n_sampled, 2u);
    EXPECT_TRUE(s.ions[1].ever_projected);
    EXPECT_FALSE(s.ions[0].ever_projected);
    const std::vector<std::size_t> bad{10};
    EXPECT_THROW(partial_projection(s, det, std::span<const std::size_t>(bad)), InvalidArgument);
}

TEST(Projection, invalid_detection_rejected) {
    auto s = initialize_ensemble(10, 3e-3, 1);
    EXPECT_THROW(partial_projection(s, {DetectionMode::fixed_fraction, 1.5, 0.0, 1e-3}), InvalidArgument);
    EXPECT_THROW(partial_projection(s, {DetectionMode::fixed_fraction, 0.5, -0.1, 1e-3}), InvalidArgument);
}

TEST(Projection, collapses_sampled_ions_and_leaves_others) {
    auto s = initialize_ensemble(2000, 3e-3, 8);
    rotate(s, 0.0, pi / 2);
    const auto m = partial_projection(s, {DetectionMode::fixed_fraction, 0.18, 0.0, 1e-3});
    std::size_t projected = 0;
    for (const auto &ion : s.ions) {
        if (ion.ever_projected) {
            ++projected;
            EXPECT_EQ(ion.bloch.x, 0.0);
            EXPECT_EQ(ion.bloch.y, 0.0);
            EXPECT_EQ(std::abs(ion.bloch.z), 1.0);
        } else {
            expect_near(ion.bloch, {0.0, 1.0, 0.0}, 1e-15);
        }
    }
    EXPECT_EQ(projected, m.n_sampled);
    EXPECT_NEAR(m.true_fraction, 0.5, 1e-12);
}

// Binomial oracle: with ~360 of 2000 equatorial ions sampled, the excited
// fraction has mean 1/2 and sd sqrt(0.25 / 360).
TEST(Projection, equatorial_readout_statistics) {
    const int repeats = 10000;
    auto s = initialize_ensemble(2000, 3e-3, 17);
    const DetectionConfig det{DetectionMode::fixed_fraction, 0.18, 0.0, 1e-3};
    double sum = 0.0, sum2 = 0.0;
    for (int r = 0; r < repeats; ++r) {
        reinitialize(s);
        rotate(s, 0.0, pi / 2);
        const double e = partial_projection(s, det).estimate;
        sum += e;
        sum2 += e * e;
    }
    const double m = sum / repeats;
    const double sd = std::sqrt((sum2 - repeats * m * m) / (repeats - 1));
    const double expected_sd = std::sqrt(0.25 / 360.0);
    EXPECT_NEAR(m, 0.5, 3.0 * expected_sd / std::sqrt(repeats));
    EXPECT_NEAR(sd, expected_sd, 0.05 * expected_sd);
}

TEST(Projection, estimate_is_unbiased) {
    const int repeats = 10000;
    auto s = initialize_ensemble(200, 3e-3, 23);
    const DetectionConfig det{DetectionMode::fixed_fraction, 0.3, 0.0, 1e-3};
    RngStream rng(5);
    std::vector<BlochVector> state;
    for (int i = 0; i < 200; ++i) {
        state.push_back(random_unit(rng));
    }
    double target = 0.0;
    for (const auto &v : state) {
        target += v.excited_probability();
    }
    target /= 200.0;
    double sum = 0.0, sum2 = 0.0;
    for (int r = 0; r < repeats; ++r) {
        for (std::size_t i = 0; i < 200; ++i) {
            s.ions[i].bloch = state[i];
        }
        const double e = partial_projection(s, det).estimate;
        sum += e;
        sum2 += e * e;
    }
    const double m = sum / repeats;
    const double sd = std::sqrt((sum2 - repeats * m * m) / (repeats - 1));
    EXPECT_NEAR(m, target, 3.0 * sd / std::sqrt(repeats));
}

TEST(Projection, collapse_frequency_follows_born_rule) {
    const int repeats = 10000;
    for (double z : {-0.8, -0.2, 0.0, 0.5, 0.9}) {
        const double r = std::sqrt(1.0 - z * z);
        auto s = single_ion({r, 0.0, z});
        int ups = 0;
        for (int k = 0; k < repeats; ++k) {
            s.ions[0].bloch = {r, 0.0, z};
            partial_projection(s, {DetectionMode::fixed_fraction, 1.0, 0.0, 1e-3});
            ups += s.ions[0].bloch.z > 0.0;
        }
        const double p = 0.5 * (1.0 + z);
        EXPECT_NEAR(ups / double(repeats), p, 3.0 * std::sqrt(p * (1 - p) / repeats) + 1e-12) << "z = " << z;
    }
}

TEST(Projection, unprojected_fraction_after_one_measurement) {
    const double p = 0.18;
    const int n = 20000;
    auto s = initialize_ensemble(n, 3e-3, 31);
    rotate(s, 0.0, pi / 2);
    partial_projection(s, {DetectionMode::fixed_fraction, p, 0.0, 1e-3});
    const double unprojected = 1.0 - ever_projected_fraction(s);
    EXPECT_NEAR(unprojected, 1.0 - p, 3.0 * std::sqrt(p * (1 - p) / n));
}

TEST(Projection, technical_noise_is_not_clamped) {
    auto s = initialize_ensemble(10, 3e-3, 1);
    rotate(s, 0.0, pi);
    bool above = false;
    for (int k = 0; k < 50 && !above; ++k) {
        reinitialize(s);
        rotate(s, 0.0, pi);
        const auto m = partial_projection(s, {DetectionMode::fixed_fraction, 1.0, 0.2, 1e-3});
        above = m.estimate > 1.0;
        EXPECT_LE(m.clamped_estimate(), 1.0);
    }
    EXPECT_TRUE(above);
}
