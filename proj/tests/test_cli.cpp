// Copyright 2026 The undistort Authors
// SPDX-License-Identifier: Apache-2.0

#include "json.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <unistd.h>

namespace fs = std::filesystem;

namespace {

const fs::path& work_dir()
{
    static const fs::path dir = [] {
        const fs::path p = fs::temp_directory_path() / ("undistort_cli_" + std::to_string(::getpid()));
        fs::remove_all(p);
        fs::create_directories(p);
        return p;
    }();
    return dir;
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct RunResult
{
    int code = -1;
    std::string err;
};

/// Runs the tool with `args` inside the work directory; returns the exit code and stderr.
RunResult run(const std::string& args)
{
    const fs::path err = work_dir() / "stderr.txt";
    const std::string cmd = "cd '" + work_dir().string() + "' && '" + UNDISTORT_CLI + "' " + args + " >/dev/null 2>'" +
                            err.string() + "'";
    const int status = std::system(cmd.c_str());
    RunResult r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.err = slurp(err);
    return r;
}

void expect_same_files(const fs::path& a, const fs::path& b)
{
    ASSERT_TRUE(fs::exists(a)) << a;
    ASSERT_TRUE(fs::exists(b)) << b;
    EXPECT_TRUE(slurp(a) == slurp(b)) << a << " differs from " << b;
}

void write_text(const fs::path& p, const std::string& text)
{
    std::ofstream(p, std::ios::binary) << text;
}

} // namespace

TEST(Cli, SynthIsByteIdenticalAcrossRuns)
{
    ASSERT_EQ(run("synth --seed 11 --count 3 --out synth_a --jobs 1").code, 0);
    ASSERT_EQ(run("synth --seed 11 --count 3 --out synth_b --jobs 3").code, 0);
    for (const auto& e : fs::directory_iterator(work_dir() / "synth_a")) {
        expect_same_files(e.path(), work_dir() / "synth_b" / e.path().filename());
    }
    ASSERT_EQ(run("synth --seed 12 --count 1 --out synth_c").code, 0);
    EXPECT_NE(slurp(work_dir() / "synth_a/problem_0000.json"), slurp(work_dir() / "synth_c/problem_0000.json"));
}

TEST(Cli, SeedFromEnvironment)
{
    ASSERT_EQ(run("synth --seed 21 --count 1 --out env_a").code, 0);
    ASSERT_EQ(run("synth --count 1 --out env_b").code, 0);
    ASSERT_EQ(std::system(("cd '" + work_dir().string() + "' && UNDISTORT_SEED=21 '" + UNDISTORT_CLI +
                           "' synth --count 1 --out env_c >/dev/null 2>&1")
                              .c_str()),
              0);
    expect_same_files(work_dir() / "env_a/problem_0000.json", work_dir() / "env_c/problem_0000.json");
}

TEST(Cli, PipelineIsDeterministicAcrossThreadCounts)
{
    ASSERT_EQ(run("synth --seed 31 --count 1 --images --out pipe").code, 0);
    for (const std::string jobs : {"1", "4"}) {
        const std::string tag = "j" + jobs;
        ASSERT_EQ(run("invert pipe/problem_0000.json --out " + tag + "/solution.json --jobs " + jobs).code, 0);
        const RunResult c = run("correct pipe/problem_0000.json " + tag +
                                "/solution.json --image pipe/image_0000.png --depth pipe/depth_0000.pfm --scale 4 --out " +
                                tag + "/corrected.png --jobs " + jobs);
        ASSERT_EQ(c.code, 0) << c.err;
        write_text(work_dir() / tag / "pairs.json",
                   R"([{"id": "p0", "output": "corrected.png", "reference": "../pipe/reference_0000.png",)"
                   R"( "output_landmarks": "corrected.landmarks.json",)"
                   R"( "reference_landmarks": "../pipe/reference_0000.landmarks.json"}])");
        const RunResult e = run("eval --pairs " + tag + "/pairs.json --out " + tag + "/report.csv --jobs " + jobs);
        ASSERT_EQ(e.code, 0) << e.err;
    }
    for (const char* f : {"solution.json", "solution.trace.jsonl", "corrected.png", "corrected.landmarks.json",
                          "report.csv", "report.json"}) {
        expect_same_files(work_dir() / "j1" / f, work_dir() / "j4" / f);
    }
    const std::string csv = slurp(work_dir() / "j1/report.csv");
    EXPECT_EQ(csv.rfind("id,lmk_e,psnr_db,ssim,lpips\np0,", 0), 0u) << csv;
}

TEST(Cli, MissingArgumentIsUsageError)
{
    const RunResult r = run("invert");
    EXPECT_EQ(r.code, 1);
    const auto j = nlohmann::json::parse(r.err.substr(0, r.err.find('\n')));
    EXPECT_EQ(j.at("error"), "UsageError");
}

TEST(Cli, UnknownSubcommandIsUsageError)
{
    EXPECT_EQ(run("frobnicate").code, 1);
}

TEST(Cli, MalformedProblemIsInputError)
{
    write_text(work_dir() / "bad.json", "{\"landmarks\": [[0.1, 0.2], ");
    const RunResult r = run("invert bad.json --out bad_solution.json");
    EXPECT_EQ(r.code, 2);
    const auto j = nlohmann::json::parse(r.err.substr(0, r.err.find('\n')));
    EXPECT_EQ(j.at("error"), "ParseError");
    EXPECT_TRUE(j.contains("offset"));
    EXPECT_FALSE(fs::exists(work_dir() / "bad_solution.json"));
}

TEST(Cli, UnknownConfigKeyIsInputError)
{
    const RunResult r = run("synth --count 1 --out cfg --set solver.no_such_key=1");
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("no_such_key"), std::string::npos);
}

TEST(Cli, CorrectWithoutDepthNamesTheFlag)
{
    ASSERT_EQ(run("synth --seed 41 --count 1 --images --out nodepth").code, 0);
    ASSERT_EQ(run("invert nodepth/problem_0000.json --out nodepth/solution.json").code, 0);
    const RunResult r = run("correct nodepth/problem_0000.json nodepth/solution.json --image nodepth/image_0000.png "
                            "--out nodepth/out.png");
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("--depth"), std::string::npos);
}

namespace {

struct CleanupEnvironment : ::testing::Environment
{
    void TearDown() override { fs::remove_all(work_dir()); }
};

const auto* const cleanup = ::testing::AddGlobalTestEnvironment(new CleanupEnvironment);

} // namespace
