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

#include "aplclock/harness.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <string>

#include "gtest/gtest.h"

using namespace aplclock;
namespace fs = std::filesystem;

namespace {

RunConfig small_config(const std::string &extra = "") {
    return RunConfig::from_string(
        "ensemble.n_ions = 200\n"
        "ramsey.n_cycles = 90\n"
        "apl.ppm_cycles = 5\n"
        "apl.samples = 4\n"
        "rabi.repeats_standard = 3\n"
        "rabi.repeats_ppm = 3\n"
        "diff.n_walkers = 500\n" +
        extra);
}

std::vector<std::vector<std::string>> rows_of(const std::string &csv) {
    std::vector<std::vector<std::string>> rows;
    std::istringstream in(csv);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') {
            continue;
        }
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            cells.push_back(cell);
        }
        rows.push_back(cells);
    }
    return rows;
}

fs::path scratch(const std::string &name) {
    auto dir = fs::temp_directory_path() / ("aplclock_test_" + name);
    fs::remove_all(dir);
    return dir;
}

int run_cli(const std::string &args) {
    const std::string cmd = std::string(APLCLOCK_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

void write_text(const fs::path &p, const std::string &text) {
    std::ofstream(p) << text;
}

}  // namespace

TEST(Harness, csv_starts_with_provenance_line) {
    const auto cfg = small_config();
    const auto r = cmd_rabi(cfg);
    const auto *f = r.find("rabi.csv");
    ASSERT_NE(f, nullptr);
    const std::string first = f->content.substr(0, f->content.find('\n'));
    EXPECT_EQ(first, "# aplclock rabi config_hash=" + cfg.hash_hex() + " seed=1");
    EXPECT_EQ(rows_of(f->content)[0], (std::vector<std::string>{"step", "angle_rad", "mean", "sd", "mode"}));
    EXPECT_EQ(rows_of(f->content).size(), 1u + 2u * 13u);
}

TEST(Harness, outputs_do_not_depend_on_thread_count) {
    const auto one = cmd_apl(small_config("run.threads = 1\n"));
    const auto three = cmd_apl(small_config("run.threads = 3\n"));
    ASSERT_EQ(one.files.size(), three.files.size());
    for (std::size_t i = 0; i < one.files.size(); ++i) {
        EXPECT_EQ(one.files[i].name, three.files[i].name);
        EXPECT_EQ(one.files[i].content, three.files[i].content) << one.files[i].name;
    }
}

TEST(Harness, seed_changes_the_samples) {
    const auto a = cmd_rabi(small_config("run.seed = 1\n"));
    const auto b = cmd_rabi(small_config("run.seed = 2\n"));
    EXPECT_NE(rows_of(a.files[0].content), rows_of(b.files[0].content));
}

TEST(Harness, diffusion_table_recovers_mobility) {
    const auto cfg = small_config();
    const auto r = cmd_diffusion(cfg);
    const auto rows = rows_of(r.find("d_vs_t.csv")->content);
    std::vector<double> t, d;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        t.push_back(std::stod(rows[i][0]));
        d.push_back(std::stod(rows[i][1]));
    }
    const auto fit = fit_line(t, d);
    EXPECT_NEAR(fit.slope / boltzmann_constant / cfg.real("diff.mobility"), 1.0, 1e-9);
    EXPECT_NEAR(fit.intercept, 0.0, 1e-15);
}

TEST(Harness, zero_diffusion_gives_zero_msd) {
    const auto r = cmd_diffusion(small_config("diff.d_override = 0\n"));
    const auto rows = rows_of(r.find("msd.csv")->content);
    for (std::size_t i = 1; i < rows.size(); ++i) {
        EXPECT_EQ(std::stod(rows[i][1]), 0.0);
        EXPECT_EQ(std::stod(rows[i][2]), 0.0);
    }
}

TEST(Harness, noiseless_lo_gives_zero_true_phase) {
    const auto cfg = small_config("lo.preset = none\ndet.sigma_tech = 0\n");
    const auto c = compare_stability(cfg, 30, AllanMode::overlapping);
    std::vector<double> phi;
    for (const auto *set : {&c.standard, &c.apl}) {
        for (const auto &r : *set) {
            EXPECT_EQ(r.true_phase, 0.0);
            phi.push_back(r.phi_n);
        }
    }
    EXPECT_NEAR(mean(phi), 0.0, 0.03);
}

TEST(Harness, bad_values_are_config_errors) {
    EXPECT_THROW(detection_from(small_config("det.mode = laser\n")), ConfigError);
    EXPECT_THROW(noise_from(small_config("lo.preset = quartz\n")), ConfigError);
    EXPECT_THROW(noise_from(small_config("lo.h0 = -1\n")), ConfigError);
    EXPECT_THROW(diffusion_from(small_config("diff.beam_hi_m = 0.01\n")), ConfigError);
    EXPECT_THROW(cmd_reproduce("fig9", small_config()), ConfigError);
    EXPECT_THROW(allan_mode_from(small_config("allan.mode = hadamard\n")), ConfigError);
}

TEST(Harness, series_reader) {
    std::istringstream good("t,y\n# note\n0,1\n0.5,2\n\n1.0,3\n");
    const auto s = read_series_csv(good);
    EXPECT_EQ(s.y, (std::vector<double>{1, 2, 3}));
    EXPECT_DOUBLE_EQ(s.tau0, 0.5);

    std::istringstream bad("t,y\n0,1\n1,abc\n");
    try {
        read_series_csv(bad);
        FAIL();
    } catch (const ParseError &e) {
        EXPECT_EQ(e.line, 3u);
    }
    std::istringstream uneven("0,1\n1,1\n3,1\n");
    EXPECT_THROW(read_series_csv(uneven), ParseError);
    std::istringstream single("0,1\n");
    EXPECT_THROW(read_series_csv(single), ParseError);
}

TEST(Harness, run_json_records_seed_and_hash) {
    const auto cfg = small_config("run.seed = 17\n");
    const auto r = cmd_diffusion(cfg);
    const auto dir = scratch("json");
    write_outputs(dir, r, cfg);
    std::ifstream f(dir / "run.json");
    const auto j = nlohmann::json::parse(f);
    EXPECT_EQ(j["seed"], 17);
    EXPECT_EQ(j["config_hash"], cfg.hash_hex());
    EXPECT_EQ(j["files"].size(), r.files.size());
    for (const auto &file : r.files) {
        EXPECT_TRUE(fs::exists(dir / file.name));
    }
    fs::remove_all(dir);
}

TEST(Cli, lists_keys) {
    EXPECT_EQ(run_cli("keys"), 0);
}

TEST(Cli, usage_errors_exit_2) {
    EXPECT_EQ(run_cli(""), 2);
    EXPECT_EQ(run_cli("frobnicate"), 2);
    EXPECT_EQ(run_cli("reproduce fig9"), 2);
}

TEST(Cli, config_errors_exit_2_and_write_nothing) {
    const auto dir = scratch("cfgerr");
    const auto cfg_path = fs::temp_directory_path() / "aplclock_test_bad.cfg";
    write_text(cfg_path, "run.seed = 1\nno.such.key = 1\n");
    EXPECT_EQ(run_cli("diffusion --config " + cfg_path.string() + " --out " + dir.string()), 2);
    EXPECT_FALSE(fs::exists(dir));
    EXPECT_EQ(run_cli("diffusion --config /nonexistent.cfg --out " + dir.string()), 2);
    EXPECT_FALSE(fs::exists(dir));
    fs::remove(cfg_path);
}

TEST(Cli, runtime_errors_exit_3_and_write_nothing) {
    const auto dir = scratch("rterr");
    EXPECT_EQ(run_cli("allan /nonexistent/series.csv --out " + dir.string()), 3);
    EXPECT_FALSE(fs::exists(dir));
    const auto series = fs::temp_directory_path() / "aplclock_test_bad_series.csv";
    write_text(series, "t,y\n0,1\n1,2\n2,x\n");
    EXPECT_EQ(run_cli("allan " + series.string() + " --out " + dir.string()), 3);
    EXPECT_FALSE(fs::exists(dir));
    fs::remove(series);
}

TEST(Cli, allan_writes_table) {
    const auto dir = scratch("allan");
    const auto series = fs::temp_directory_path() / "aplclock_test_series.csv";
    std::string text = "t,y\n";
    for (int i = 0; i < 64; ++i) {
        text += std::to_string(i) + "," + (i % 2 ? "1" : "-1") + "\n";
    }
    write_text(series, text);
    ASSERT_EQ(run_cli("allan " + series.string() + " --out " + dir.string()), 0);
    std::ifstream f(dir / "allan.csv");
    std::stringstream ss;
    ss << f.rdbuf();
    const auto rows = rows_of(ss.str());
    ASSERT_GE(rows.size(), 2u);
    EXPECT_EQ(rows[1][0], "1");
    EXPECT_NEAR(std::stod(rows[1][1]), std::sqrt(2.0), 1e-11);
    EXPECT_TRUE(fs::exists(dir / "run.json"));
    fs::remove_all(dir);
    fs::remove(series);
}

TEST(Cli, identical_runs_are_byte_identical) {
    const auto a = scratch("det_a"), b = scratch("det_b");
    ASSERT_EQ(run_cli("diffusion --seed 5 --trials 300 --out " + a.string()), 0);
    ASSERT_EQ(run_cli("diffusion --seed 5 --trials 300 --out " + b.string()), 0);
    for (const auto &entry : fs::directory_iterator(a)) {
        const auto name = entry.path().filename();
        std::ifstream fa(entry.path(), std::ios::binary), fb(b / name, std::ios::binary);
        std::stringstream sa, sb;
        sa << fa.rdbuf();
        sb << fb.rdbuf();
        if (name == "run.json") {
            continue;  // records the output directory
        }
        EXPECT_EQ(sa.str(), sb.str()) << name;
    }
    fs::remove_all(a);
    fs::remove_all(b);
}
