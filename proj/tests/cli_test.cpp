#include "activebc/dataset.hpp"
#include "activebc/episode.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sys/wait.h>

namespace fs = std::filesystem;
using namespace activebc;

namespace {

const fs::path kWork = fs::temp_directory_path() / "activebc_cli_test";

int run(const std::string& args, const fs::path& stdout_file = "/dev/null") {
  const std::string cmd = std::string(ACTIVEBC_CLI) + " " + args + " > " + stdout_file.string() + " 2>/dev/null";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

bool same_tree(const fs::path& a, const fs::path& b) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(a))
    if (e.is_regular_file()) files.push_back(fs::relative(e.path(), a));
  std::size_t count_b = 0;
  for (const auto& e : fs::recursive_directory_iterator(b)) count_b += e.is_regular_file();
  if (files.size() != count_b) return false;
  for (const auto& f : files) {
    if (f.filename().string().starts_with("config_")) continue;
    if (slurp(a / f) != slurp(b / f)) return false;
  }
  return true;
}

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    fs::remove_all(kWork);
    fs::create_directories(kWork);
    ASSERT_EQ(run("gen-demos --n 20 --seed 11 --out " + (kWork / "data").string()), 0);
  }
  static void TearDownTestSuite() { fs::remove_all(kWork); }
};

TEST_F(Cli, HelpAndUsageErrors) {
  EXPECT_EQ(run("--help"), 0);
  EXPECT_EQ(run(""), 2);
  EXPECT_EQ(run("frobnicate"), 2);
  EXPECT_EQ(run("gen-demos --n 3 --out " + (kWork / "odd").string()), 2);
  EXPECT_EQ(run("train --data " + (kWork / "data").string() + " --repr sideways --out " + (kWork / "x").string()), 2);
  EXPECT_EQ(run("train --data " + (kWork / "missing").string() + " --out " + (kWork / "x").string()), 2);
  EXPECT_EQ(run("dump-frame --side left --azimuth 0.3 --out " + (kWork / "x").string()), 2);
  EXPECT_NE(run("train --data " + (kWork / "data").string() + " --demos 64 --out " +
                (kWork / "too_many.abcw").string()),
            0);
}

TEST_F(Cli, GenDemosWritesTheDatasetLayout) {
  const fs::path d = kWork / "data";
  EXPECT_EQ(dataset_dir::pool_size(d), 20u);
  EXPECT_TRUE(fs::exists(d / "manifest.txt"));
  EXPECT_TRUE(fs::exists(d / "config_gen_demos.txt"));
  const SplitSpec s = dataset_dir::read_splits(d);
  EXPECT_EQ(s.train_pool_ids.size(), 16u);
  EXPECT_EQ(s.val_ids.size(), 2u);
  EXPECT_EQ(s.test_ids.size(), 2u);
  const Episode ep = read_episode(dataset_dir::episode_path(d, 0));
  EXPECT_EQ(ep.meta.source, "expert");
}

TEST_F(Cli, GenDemosIsByteIdenticalAcrossRuns) {
  ASSERT_EQ(run("gen-demos --n 20 --seed 11 --out " + (kWork / "data_again").string()), 0);
  EXPECT_TRUE(same_tree(kWork / "data", kWork / "data_again"));
  auto without_out = [](std::string text) {
    const auto pos = text.find("\nout=");
    return text.erase(pos, text.find('\n', pos + 1) - pos);
  };
  EXPECT_EQ(without_out(slurp(kWork / "data" / "config_gen_demos.txt")),
            without_out(slurp(kWork / "data_again" / "config_gen_demos.txt")));
}

TEST_F(Cli, TrainAndRolloutAreDeterministic) {
  const std::string data = (kWork / "data").string();
  for (const char* name : {"a", "b"}) {
    const fs::path ckpt = kWork / (std::string(name) + ".abcw");
    ASSERT_EQ(run("train --data " + data + " --demos 2 --H 2 --epochs 1 --seed 3 --out " + ckpt.string(),
                  kWork / (std::string(name) + ".train.txt")),
              0);
    ASSERT_EQ(run("rollout --ckpt " + ckpt.string() + " --side right --seed 4 --steps 12 --config-out " +
                      (kWork / (std::string(name) + ".cfg")).string(),
                  kWork / (std::string(name) + ".rollout.txt")),
              0);
  }
  EXPECT_EQ(slurp(kWork / "a.abcw"), slurp(kWork / "b.abcw"));
  EXPECT_EQ(slurp(kWork / "a.train.txt"), slurp(kWork / "b.train.txt"));
  const std::string trace = slurp(kWork / "a.rollout.txt");
  EXPECT_EQ(trace, slurp(kWork / "b.rollout.txt"));
  EXPECT_NE(trace.find("verdict: "), std::string::npos);
}

TEST_F(Cli, RolloutEpisodeOutIsJudgeable) {
  const fs::path ckpt = kWork / "r.abcw";
  ASSERT_EQ(run("train --data " + (kWork / "data").string() + " --demos 2 --H 1 --epochs 1 --out " +
                ckpt.string()),
            0);
  const fs::path ep_path = kWork / "r.abc1";
  ASSERT_EQ(run("rollout --ckpt " + ckpt.string() + " --azimuth 0.3 --steps 8 --episode-out " +
                ep_path.string() + " --config-out " + (kWork / "r.cfg").string()),
            0);
  const Episode ep = read_episode(ep_path);
  EXPECT_EQ(ep.length(), 9u);
  EXPECT_EQ(ep.meta.source, "rollout");
}

TEST_F(Cli, DumpFrameMatchesGolden) {
  const fs::path out = kWork / "frame.rgb";
  ASSERT_EQ(run("dump-frame --side left --seed 3 --joints 0.3,0.2,-0.1,0.4,0.5,1 --raw --out " +
                out.string()),
            0);
  EXPECT_EQ(slurp(out), slurp(fs::path(ACTIVEBC_GOLDEN_DIR) / "left_s3_posed.rgb"));
  const fs::path ppm = kWork / "frame.ppm";
  ASSERT_EQ(run("dump-frame --side left --seed 3 --joints 0.3,0.2,-0.1,0.4,0.5,1 --out " + ppm.string()), 0);
  const std::string p6 = slurp(ppm);
  EXPECT_EQ(p6.rfind("P6\n64 64\n255\n", 0), 0u);
  EXPECT_EQ(p6.substr(p6.size() - 12288), slurp(out));
}

}  // namespace
