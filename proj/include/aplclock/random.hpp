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

#ifndef APLCLOCK_RANDOM_HPP
#define APLCLOCK_RANDOM_HPP

#include <cstdint>
#include <random>
#include <string_view>

namespace aplclock {

/// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001B3ULL;
    }
    return h;
}

/// Independent integer seed for item `index` of the named purpose, e.g. one ensemble per trial.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::string_view name, std::uint64_t index = 0) {
    return mix64(seed ^ mix64(fnv1a64(name) + mix64(index)));
}

/// A named, seeded random stream. Streams derived from the same (seed, id)
/// produce identical sequences; distinct ids give statistically independent
/// sequences, so trials can run on any thread and merge by index.
class RngStream {
   public:
    explicit RngStream(std::uint64_t seed = 0, std::uint64_t stream_id = 0)
        : seed_(seed), stream_id_(stream_id), engine_(mix64(seed ^ mix64(stream_id))) {
    }

    static RngStream named(std::uint64_t seed, std::string_view name) {
        return RngStream(seed, fnv1a64(name));
    }

    /// Child stream, e.g. one per Monte Carlo trial.
    RngStream fork(std::uint64_t child) const {
        return RngStream(seed_, mix64(stream_id_ + mix64(child + 1)));
    }

    RngStream fork(std::string_view name) const {
        return fork(fnv1a64(name));
    }

    double uniform() {
        return std::uniform_real_distribution<double>(0.0, 1.0)(engine_);
    }

    double uniform(double lo, double hi) {
        return std::uniform_real_distribution<double>(lo, hi)(engine_);
    }

    double normal(double mean = 0.0, double sd = 1.0) {
        return mean + sd * std_normal_(engine_);
    }

    bool bernoulli(double p) {
        return std::bernoulli_distribution(p)(engine_);
    }

    std::mt19937_64 &engine() {
        return engine_;
    }

    std::uint64_t seed() const {
        return seed_;
    }

    std::uint64_t stream_id() const {
        return stream_id_;
    }

   private:
    std::uint64_t seed_;
    std::uint64_t stream_id_;
    std::mt19937_64 engine_;
    std::normal_distribution<double> std_normal_{0.0, 1.0};
};

}  // namespace aplclock

#endif
