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

#ifndef APLCLOCK_CONFIG_HPP
#define APLCLOCK_CONFIG_HPP

// Flat, typed key = value run configuration.
//
//   # comment
//   run.seed = 7
//   det.p = 0.18
//   diff.d_override = none
//
// Every key has a type and a default; unknown keys are rejected.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "aplclock/errors.hpp"
#include "aplclock/random.hpp"

namespace aplclock {

enum class ValueType { integer, real, optional_real, text };

struct KeySpec {
    std::string_view key;
    ValueType type;
    std::string_view default_value;
    std::string_view help;
};

// clang-format off
inline const std::vector<KeySpec> &config_schema() {
    static const std::vector<KeySpec> schema = {
        {"run.seed",               ValueType::integer,       "1",          "master seed"},
        {"run.n_trials",           ValueType::integer,       "0",          "override of the main repeat count (0 = subcommand default)"},
        {"run.output_dir",         ValueType::text,          "out",        "output directory"},
        {"run.threads",            ValueType::integer,       "0",          "worker threads (0 = hardware concurrency)"},
        {"ensemble.n_ions",        ValueType::integer,       "2000",       "ions in the cloud"},
        {"ensemble.cloud_length_m", ValueType::real,         "0.003",      "axial cloud length"},
        {"det.mode",               ValueType::text,          "fixed_fraction", "fixed_fraction | beam_overlap"},
        {"det.p",                  ValueType::real,          "0.18",       "sampling fraction per measurement"},
        {"det.sigma_tech",         ValueType::real,          "0.1",        "additive readout noise, population units"},
        {"det.duration_s",         ValueType::real,          "0.001",      "measurement window (beam_overlap)"},
        {"lo.preset",              ValueType::text,          "maser",      "maser | noisy | none; explicit lo.h* keys override"},
        {"lo.f0_hz",               ValueType::real,          "12600000000", "carrier frequency"},
        {"lo.delta_f0_hz",         ValueType::real,          "0",          "deterministic LO offset"},
        {"lo.h0",                  ValueType::optional_real, "none",       "white FM level"},
        {"lo.h_minus1",            ValueType::optional_real, "none",       "flicker FM level"},
        {"lo.h_minus2",            ValueType::optional_real, "none",       "random-walk FM level"},
        {"ramsey.t_fp_s",          ValueType::real,          "0.1",        "free precession time"},
        {"ramsey.pi2_duration_s",  ValueType::real,          "0.00075",    "pi/2 pulse length"},
        {"ramsey.n_cp",            ValueType::integer,       "3",          "partial projections per phase-locked block"},
        {"ramsey.n_cycles",        ValueType::integer,       "3000",       "measurement cycles per mode"},
        {"ramsey.dead_time_s",     ValueType::real,          "0",          "dead time per cycle"},
        {"rabi.rotation_step_rad", ValueType::real,          "0.52359877559829882", "rotation added per probe"},
        {"rabi.n_steps",           ValueType::integer,       "12",         "probes after the initial point"},
        {"rabi.repeats_standard",  ValueType::integer,       "10",         "repeats, re-initialized Rabi"},
        {"rabi.repeats_ppm",       ValueType::integer,       "8",          "repeats, partial-projection Rabi"},
        {"apl.ppm_cycles",         ValueType::integer,       "20",         "consecutive partial projections in the decoherence run"},
        {"apl.samples",            ValueType::integer,       "32",         "repeats of the decoherence run"},
        {"diff.temperature_k",     ValueType::real,          "0.05",       "ion temperature"},
        {"diff.mobility",          ValueType::real,          "8.62e18",    "mobility, m^2 s^-1 J^-1"},
        {"diff.d_override",        ValueType::optional_real, "3.5e-6",     "diffusion constant; none = mobility * k_B * T"},
        {"diff.beam_lo_m",         ValueType::real,          "-0.000193",  "detection interval lower edge"},
        {"diff.beam_hi_m",         ValueType::real,          "0.000193",   "detection interval upper edge"},
        {"diff.dt_s",              ValueType::real,          "1e-05",      "walker sub-step"},
        {"diff.n_walkers",         ValueType::integer,       "20000",      "walkers per table row"},
        {"diff.msd_t_max_s",       ValueType::real,          "0.01",       "end of the MSD table"},
        {"diff.max_duration_s",    ValueType::real,          "0.005",      "end of the struck-fraction table"},
        {"stab.K",                 ValueType::real,          "1",          "order-unity line-shape constant"},
        {"stab.Q",                 ValueType::optional_real, "none",       "quality factor; none = 2 f0 T_FP"},
        {"stab.snr",               ValueType::optional_real, "none",       "single-shot SNR; none = measured"},
        {"stab.n_atom",            ValueType::optional_real, "none",       "atom number for the QPN line; none = ensemble.n_ions"},
        {"allan.mode",             ValueType::text,          "overlapping", "overlapping | non_overlapping"},
    };
    return schema;
}
// clang-format on

inline std::string format_real(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

class RunConfig {
   public:
    RunConfig() {
        for (const auto &spec : config_schema()) {
            values_[std::string(spec.key)] = canonical(spec, std::string(spec.default_value), 0);
        }
    }

    static RunConfig from_string(std::string_view text) {
        RunConfig cfg;
        std::istringstream in{std::string(text)};
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (auto hash = line.find('#'); hash != std::string::npos) {
                line.erase(hash);
            }
            const auto body = trim(line);
            if (body.empty()) {
                continue;
            }
            const auto eq = body.find('=');
            if (eq == std::string_view::npos) {
                throw ConfigError("expected 'key = value'", line_no);
            }
            cfg.set(std::string(trim(body.substr(0, eq))), std::string(trim(body.substr(eq + 1))), line_no);
        }
        return cfg;
    }

    static RunConfig from_file(const std::string &path) {
        std::ifstream f(path);
        if (!f) {
            throw ConfigError("cannot open config file " + path);
        }
        std::stringstream ss;
        ss << f.rdbuf();
        return from_string(ss.str());
    }

    void set(const std::string &key, const std::string &value, std::size_t line = 0) {
        const auto *spec = find(key);
        if (!spec) {
            throw ConfigError("unknown key '" + key + "'", line);
        }
        values_[key] = canonical(*spec, value, line);
        explicit_.insert_or_assign(key, true);
    }

    bool is_explicit(const std::string &key) const {
        return explicit_.contains(key);
    }

    std::int64_t integer(const std::string &key) const {
        expect(key, ValueType::integer);
        return std::stoll(values_.at(key));
    }

    std::size_t count(const std::string &key) const {
        const auto v = integer(key);
        if (v < 0) {
            throw ConfigError(key + " must be non-negative");
        }
        return static_cast<std::size_t>(v);
    }

    double real(const std::string &key) const {
        expect(key, ValueType::real);
        return std::stod(values_.at(key));
    }

    std::optional<double> optional_real(const std::string &key) const {
        expect(key, ValueType::optional_real);
        const auto &v = values_.at(key);
        if (v == "none") {
            return std::nullopt;
        }
        return std::stod(v);
    }

    const std::string &text(const std::string &key) const {
        expect(key, ValueType::text);
        return values_.at(key);
    }

    /// Resolved configuration, one "key = value" line per key in schema order.
    std::string canonical_text() const {
        std::string out;
        for (const auto &spec : config_schema()) {
            out += std::string(spec.key) + " = " + values_.at(std::string(spec.key)) + "\n";
        }
        return out;
    }

    /// Hash of the keys that can change results; output_dir and threads are left out.
    std::uint64_t hash() const {
        std::string text;
        for (const auto &spec : config_schema()) {
            if (spec.key != "run.output_dir" && spec.key != "run.threads") {
                text += std::string(spec.key) + " = " + values_.at(std::string(spec.key)) + "\n";
            }
        }
        return fnv1a64(text);
    }

    std::string hash_hex() const {
        char buf[17];
        std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash()));
        return buf;
    }

    const std::map<std::string, std::string> &values() const {
        return values_;
    }

   private:
    static std::string_view trim(std::string_view s) {
        const auto b = s.find_first_not_of(" \t\r");
        if (b == std::string_view::npos) {
            return {};
        }
        const auto e = s.find_last_not_of(" \t\r");
        return s.substr(b, e - b + 1);
    }

    static const KeySpec *find(std::string_view key) {
        for (const auto &spec : config_schema()) {
            if (spec.key == key) {
                return &spec;
            }
        }
        return nullptr;
    }

    void expect(const std::string &key, ValueType type) const {
        const auto *spec = find(key);
        if (!spec || spec->type != type) {
            throw ConfigError("key '" + key + "' is not a known key of the requested type");
        }
    }

    static std::string canonical(const KeySpec &spec, const std::string &value, std::size_t line) {
        const std::string key(spec.key);
        switch (spec.type) {
            case ValueType::integer: {
                std::int64_t v = 0;
                auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
                if (ec != std::errc{} || ptr != value.data() + value.size()) {
                    throw ConfigError(key + ": expected an integer, got '" + value + "'", line);
                }
                return std::to_string(v);
            }
            case ValueType::optional_real:
                if (value == "none") {
                    return value;
                }
                [[fallthrough]];
            case ValueType::real: {
                double v = 0.0;
                auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
                if (ec != std::errc{} || ptr != value.data() + value.size() || !std::isfinite(v)) {
                    throw ConfigError(key + ": expected a number, got '" + value + "'", line);
                }
                return format_real(v);
            }
            case ValueType::text:
                if (value.empty()) {
                    throw ConfigError(key + ": empty value", line);
                }
                return value;
        }
        return value;
    }

    std::map<std::string, std::string> values_;
    std::map<std::string, bool> explicit_;
};

}  // namespace aplclock

#endif
