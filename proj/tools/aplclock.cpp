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

// aplclock: command-line front end for the ion-ensemble clock simulator.
//
//   aplclock rabi|apl|diffusion [--config PATH] [--seed N] [--out DIR] [--trials N]
//   aplclock allan SERIES.csv [...]
//   aplclock reproduce fig4|fig5|fig6 [...]
//
// Exit codes: 0 ok, 2 configuration error, 3 runtime error.

#include <CLI11.hpp>
#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "aplclock/harness.hpp"

namespace {

constexpr int exit_config = 2;
constexpr int exit_runtime = 3;

struct Options {
    std::string config_path;
    std::optional<std::int64_t> seed;
    std::optional<std::string> out;
    std::optional<std::int64_t> trials;
    std::optional<std::int64_t> threads;
};

aplclock::RunConfig resolve(const Options &o) {
    auto cfg = o.config_path.empty() ? aplclock::RunConfig{} : aplclock::RunConfig::from_file(o.config_path);
    if (o.seed) {
        cfg.set("run.seed", std::to_string(*o.seed));
    }
    if (o.out) {
        cfg.set("run.output_dir", *o.out);
    }
    if (o.trials) {
        cfg.set("run.n_trials", std::to_string(*o.trials));
    }
    if (o.threads) {
        cfg.set("run.threads", std::to_string(*o.threads));
    }
    return cfg;
}

}  // namespace

int main(int argc, char **argv) {
    CLI::App app{"Monte Carlo simulator of an ion-ensemble clock with atomic phase lock"};
    app.require_subcommand(1);
    app.fallthrough();

    Options opt;
    app.add_option("--config", opt.config_path, "flat key = value config file");
    app.add_option("--seed", opt.seed, "master seed (overrides run.seed)");
    app.add_option("--out", opt.out, "output directory (overrides run.output_dir)");
    app.add_option("--trials", opt.trials, "main repeat count (overrides run.n_trials)");
    app.add_option("--threads", opt.threads, "worker threads (overrides run.threads)");

    auto *rabi = app.add_subcommand("rabi", "Rabi flopping, re-initialized vs partial projection");
    auto *apl = app.add_subcommand("apl", "decoherence under partial projection and the Allan comparison");
    auto *diffusion = app.add_subcommand("diffusion", "MSD, D(T) and beam-overlap tables");
    auto *allan = app.add_subcommand("allan", "Allan deviation of a (t, y) series");
    std::string series_path;
    allan->add_option("series", series_path, "CSV of t,y rows")->required();
    auto *reproduce = app.add_subcommand("reproduce", "run a figure with the default parameters");
    std::string figure;
    reproduce->add_option("figure", figure, "fig4 | fig5 | fig6")->required()->check(
        CLI::IsMember({"fig4", "fig5", "fig6"}));
    auto *keys = app.add_subcommand("keys", "list every config key with its default");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        return app.exit(e) == 0 ? 0 : exit_config;
    }

    if (keys->parsed()) {
        for (const auto &spec : aplclock::config_schema()) {
            std::cout << spec.key << " = " << spec.default_value << "    # " << spec.help << "\n";
        }
        return 0;
    }

    aplclock::RunConfig cfg;
    try {
        cfg = resolve(opt);
    } catch (const std::exception &e) {
        std::cerr << "config error: " << e.what() << "\n";
        return exit_config;
    }

    try {
        aplclock::CommandResult result;
        if (rabi->parsed()) {
            result = aplclock::cmd_rabi(cfg);
        } else if (apl->parsed()) {
            result = aplclock::cmd_apl(cfg);
        } else if (diffusion->parsed()) {
            result = aplclock::cmd_diffusion(cfg);
        } else if (allan->parsed()) {
            result = aplclock::cmd_allan(series_path, cfg);
        } else if (reproduce->parsed()) {
            result = aplclock::cmd_reproduce(figure, cfg);
        }
        for (const auto &w : result.warnings) {
            std::cerr << "warning: " << w << "\n";
        }
        const std::string dir = cfg.text("run.output_dir");
        aplclock::write_outputs(dir, result, cfg);
        std::cout << "wrote " << result.files.size() + 1 << " files to " << dir << " (config " << cfg.hash_hex()
                  << ", seed " << cfg.integer("run.seed") << ")\n";
    } catch (const aplclock::ConfigError &e) {
        std::cerr << "config error: " << e.what() << "\n";
        return exit_config;
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_runtime;
    }
    return 0;
}
