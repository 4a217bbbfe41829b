#include "config.hpp"

#include "modred/io.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <sys/wait.h>

namespace fs = std::filesystem;
using modred::cli::Config;
using modred::cli::UsageError;

namespace {

const std::string kSmallTomo =
    " --set tomo.n_side=16 --set tomo.n_angles=12 --set tomo.n_rays=21 --set tomo.region=8"
    " --set tomo.block=4 --set prior.draws=20 --set prior.lambda=4";
const std::string kSmallEit = " --set eit.refinement=1 --set eit.electrodes=8 --set eit.draws=5";

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("modred_cli_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

int run(const std::string& args, const fs::path& cwd) {
    const std::string cmd = "cd '" + cwd.string() + "' && '" MODRED_TOOL_PATH "' " + args + " >out.log 2>err.log";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) { return modred::io::read_file(p); }

// b-run paths renamed to the a-run ones
std::string retag(std::string s) {
    for (std::size_t pos = 0; (pos = s.find("_b", pos)) != std::string::npos; pos += 2) s[pos + 1] = 'a';
    return s;
}

}  // namespace

TEST(ConfigTest, DefaultsOverridesAndUnknownKeys) {
    Config c;
    EXPECT_EQ(c.get_int("tomo.n_side"), 64);
    EXPECT_EQ(c.get("solver.method"), "naive");
    c.apply_assignment("tomo.noise_rel=0.05");
    EXPECT_EQ(c.get_double("tomo.noise_rel"), 0.05);
    EXPECT_THROW(c.apply_assignment("tomo.nope=1"), UsageError);
    EXPECT_THROW(c.apply_assignment("novalue"), UsageError);
    c.set("tomo.n_side", "x");
    EXPECT_THROW(c.get_int("tomo.n_side"), UsageError);
    EXPECT_FALSE(c.is_set("io.sinogram"));
}

TEST(ConfigTest, IniRoundTrip) {
    const fs::path dir = scratch("ini");
    Config a;
    a.set("eit.delta", "0.01");
    a.set("io.out", "elsewhere");
    std::ofstream(dir / "c.ini") << a.to_ini();
    Config b;
    b.load_ini(dir / "c.ini");
    EXPECT_EQ(a.values(), b.values());
    std::ofstream(dir / "bad.ini") << "[tomo]\nunknown=1\n";
    EXPECT_THROW(Config().load_ini(dir / "bad.ini"), UsageError);
    std::ofstream(dir / "loose.ini") << "n_side=3\n";
    EXPECT_THROW(Config().load_ini(dir / "loose.ini"), UsageError);
    fs::remove_all(dir);
}

TEST(ToolTest, UsageErrorsExitTwo) {
    const fs::path dir = scratch("usage");
    EXPECT_EQ(run("", dir), 2);
    EXPECT_EQ(run("frobnicate", dir), 2);
    EXPECT_EQ(run("tomo-simulate --set tomo.bogus=1", dir), 2);
    EXPECT_EQ(run("tomo-simulate --set tomo.n_side=1", dir), 2);
    EXPECT_EQ(run("tomo-reconstruct", dir), 2);
    EXPECT_EQ(run("tomo-reconstruct --sinogram x --method magic", dir), 2);
    EXPECT_EQ(run("bae-sample --experiment bench", dir), 2);
    EXPECT_EQ(run("tomo-simulate --config /no/such/file.ini", dir), 2);
    EXPECT_NE(slurp(dir / "err.log").find("file.ini"), std::string::npos);
    EXPECT_EQ(run("--help", dir), 0);
    fs::remove_all(dir);
}

TEST(ToolTest, RuntimeErrorsExitOne) {
    const fs::path dir = scratch("runtime");
    EXPECT_EQ(run("tomo-reconstruct --sinogram missing", dir), 1);
    EXPECT_FALSE(slurp(dir / "err.log").empty());
    fs::remove_all(dir);
}

TEST(ToolTest, CheckSuitePasses) {
    const fs::path dir = scratch("check");
    EXPECT_EQ(run("check", dir), 0);
    const std::string out = slurp(dir / "out.log");
    EXPECT_EQ(out.find("FAIL"), std::string::npos);
    EXPECT_NE(out.find("all checks passed"), std::string::npos);
    fs::remove_all(dir);
}

TEST(ToolTest, TomographyPipelineIsDeterministic) {
    const fs::path dir = scratch("tomo");
    for (const char* tag : {"a", "b"}) {
        const std::string t = tag;
        ASSERT_EQ(run("tomo-simulate --out sim_" + t + kSmallTomo, dir), 0);
        ASSERT_EQ(run("bae-sample --experiment tomo --out samp_" + t + kSmallTomo, dir), 0);
        for (const char* m : {"naive", "bae", "spotlight"})
            ASSERT_EQ(run("tomo-reconstruct --method " + std::string(m) + " --sinogram sim_" + t +
                              "/sinogram --sample samp_" + t + "/errors --phantom sim_" + t + "/phantom --out rec_" + t +
                              "_" + m + kSmallTomo,
                          dir),
                      0)
                << slurp(dir / "err.log");
    }
    EXPECT_EQ(slurp(dir / "sim_a/sinogram.mrd1"), slurp(dir / "sim_b/sinogram.mrd1"));
    EXPECT_EQ(slurp(dir / "samp_a/errors.mrd1"), slurp(dir / "samp_b/errors.mrd1"));
    for (const char* m : {"naive", "bae", "spotlight"}) {
        const std::string img = std::string("image_") + m;
        EXPECT_EQ(slurp(dir / ("rec_a_" + std::string(m)) / (img + ".mrd1")),
                  slurp(dir / ("rec_b_" + std::string(m)) / (img + ".mrd1")));
        EXPECT_TRUE(fs::exists(dir / ("rec_a_" + std::string(m)) / (img + ".pgm")));
    }
    const auto manifest = modred::io::Header::read(dir / "rec_a_naive/manifest.txt");
    EXPECT_TRUE(manifest.has("discrepancy_history"));
    EXPECT_TRUE(manifest.has("region_error_vs_phantom"));
    EXPECT_EQ(manifest.get("method"), "naive");
    EXPECT_EQ(manifest.get("pgm.image_naive.lo"), "0");
    fs::remove_all(dir);
}

TEST(ToolTest, EffectiveConfigReproducesOutputs) {
    const fs::path dir = scratch("replay");
    ASSERT_EQ(run("tomo-simulate --out first --set tomo.seed=5" + kSmallTomo, dir), 0);
    ASSERT_EQ(run("tomo-simulate --config first/config.ini --out second", dir), 0);
    EXPECT_EQ(slurp(dir / "first/sinogram.mrd1"), slurp(dir / "second/sinogram.mrd1"));
    EXPECT_EQ(slurp(dir / "first/phantom.mrd1"), slurp(dir / "second/phantom.mrd1"));
    fs::remove_all(dir);
}

TEST(ToolTest, SpotlightBasisWritesProjectorAndSpectrum) {
    const fs::path dir = scratch("basis");
    ASSERT_EQ(run("bae-sample --experiment tomo --out samp" + kSmallTomo, dir), 0);
    ASSERT_EQ(run("spotlight-basis --sample samp/errors --set solver.rank=5 --out basis", dir), 0);
    const auto [U, h] = modred::io::read_matrix_bundle(dir / "basis/projector");
    EXPECT_EQ(U.cols(), 5);
    EXPECT_EQ(U.rows(), 12 * 21);
    EXPECT_LE((U.transpose() * U - modred::DenseMatrix::Identity(5, 5)).norm(), 1e-12);
    EXPECT_TRUE(fs::exists(dir / "basis/spectrum.mrd1"));
    ASSERT_EQ(run("tomo-reconstruct --method spotlight --sinogram samp/../samp/errors --out bad" + kSmallTomo, dir), 2);
    fs::remove_all(dir);
}

TEST(ToolTest, EitPipelineRunsAndIsDeterministic) {
    const fs::path dir = scratch("eit");
    for (const char* tag : {"a", "b"}) {
        const std::string t = tag;
        ASSERT_EQ(run("eit-simulate --out sim_" + t + kSmallEit, dir), 0) << slurp(dir / "err.log");
        ASSERT_EQ(run("bae-sample --experiment eit --out samp_" + t + kSmallEit, dir), 0);
        ASSERT_EQ(run("eit-reconstruct --data sim_" + t + "/voltages --sample samp_" + t + "/errors --out rec_" + t +
                          kSmallEit,
                      dir),
                  0)
            << slurp(dir / "err.log");
    }
    EXPECT_EQ(slurp(dir / "sim_a/voltages.mrd1"), slurp(dir / "sim_b/voltages.mrd1"));
    EXPECT_EQ(slurp(dir / "rec_a/conductivity_projected.mrd1"), slurp(dir / "rec_b/conductivity_projected.mrd1"));
    EXPECT_EQ(slurp(dir / "rec_a/manifest.txt"), retag(slurp(dir / "rec_b/manifest.txt")));
    const auto [U, h] = modred::io::read_matrix_bundle(dir / "sim_a/voltages");
    EXPECT_EQ(U.rows(), 8);
    EXPECT_EQ(U.cols(), 7);
    EXPECT_TRUE(modred::io::Header::read(dir / "rec_a/manifest.txt").has("error_vs_truth"));
    EXPECT_EQ(run("eit-reconstruct --data sim_a/voltages --set eit.electrodes=6 --set eit.refinement=1", dir), 2);
    fs::remove_all(dir);
}
