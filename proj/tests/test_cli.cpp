#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "setpool/synth.hpp"

namespace {

std::string g_cli;  // path to the setpool binary, from argv[1]
std::filesystem::path g_dir;

int run_cli(const std::string& args) {
  const std::string cmd = g_cli + " " + args + " >" + (g_dir / "stdout.txt").string() +
                          " 2>" + (g_dir / "stderr.txt").string();
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

std::string file_contents(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string config_text(int episodes, const std::string& extra = "") {
  std::ostringstream out;
  out << "version 1\n"
      << "seed 21\n"
      << "dataset.num_identities 6\n"
      << "dataset.embed_dim 16\n"
      << "dataset.sets_per_identity 4\n"
      << "dataset.set_size_min 3\n"
      << "dataset.set_size_max 6\n"
      << "dataset.quality_sigma_min 0.05\n"
      << "dataset.quality_sigma_max 0.3\n"
      << "dataset.redundancy_rate 0.25\n"
      << "train.episodes " << episodes << "\n"
      << "train.head_warmup 10\n"
      << extra;
  return out.str();
}

std::string write_config(const std::string& name, const std::string& text) {
  const auto path = g_dir / name;
  std::ofstream out(path);
  out << text;
  return path.string();
}

}  // namespace

TEST_CASE("gen: deterministic files and record accounting") {
  const std::string cfg = write_config("gen.cfg", config_text(0));
  const std::string out1 = (g_dir / "data1.setf").string();
  const std::string out2 = (g_dir / "data2.setf").string();
  REQUIRE(run_cli("gen --config " + cfg + " --out " + out1) == 0);
  REQUIRE(run_cli("gen --config " + cfg + " --out " + out2) == 0);
  CHECK(file_contents(out1) == file_contents(out2));

  const auto collection = setpool::read_features(out1);
  std::size_t total = 0;
  for (const auto& set : setpool::group_sets(collection)) total += set.size;
  CHECK(total == collection.records.size());
  CHECK(setpool::group_sets(collection).size() == 6 * 4);
}

TEST_CASE("gen: unit set sizes force one record per set") {
  const std::string cfg = write_config(
      "gen1.cfg", config_text(0, "dataset.video_fraction 0\n"));
  // rewrite sizes to (1,1)
  std::string text = file_contents(g_dir / "gen1.cfg");
  text.replace(text.find("dataset.set_size_min 3"), 22, "dataset.set_size_min 1");
  text.replace(text.find("dataset.set_size_max 6"), 22, "dataset.set_size_max 1");
  const std::string cfg2 = write_config("gen2.cfg", text);
  const std::string out = (g_dir / "data_ones.setf").string();
  REQUIRE(run_cli("gen --config " + cfg2 + " --out " + out) == 0);
  for (const auto& set : setpool::group_sets(setpool::read_features(out)))
    CHECK(set.size == 1);
}

TEST_CASE("gen: invalid config exits 1") {
  const std::string cfg =
      write_config("bad.cfg", config_text(0, "dataset.set_size_maxx 10\n"));
  CHECK(run_cli("gen --config " + cfg + " --out " + (g_dir / "x.setf").string()) == 1);
}

TEST_CASE("train: zero episodes writes a loadable checkpoint") {
  const std::string cfg = write_config("t0.cfg", config_text(0));
  const std::string data = (g_dir / "t0.setf").string();
  const std::string ckpt = (g_dir / "t0.ckpt").string();
  REQUIRE(run_cli("gen --config " + cfg + " --out " + data) == 0);
  REQUIRE(run_cli("train --config " + cfg + " --data " + data + " --out " + ckpt) == 0);
  REQUIRE(run_cli("inspect --checkpoint " + ckpt) == 0);
  const std::string inspect = file_contents(g_dir / "stdout.txt");
  CHECK(inspect.find("episode          0") != std::string::npos);
}

TEST_CASE("train: resumed run reproduces the metric stream bitwise") {
  const std::string cfg = write_config("t1.cfg", config_text(6));
  const std::string data = (g_dir / "t1.setf").string();
  REQUIRE(run_cli("gen --config " + cfg + " --out " + data) == 0);

  const std::string full_ckpt = (g_dir / "full.ckpt").string();
  const std::string full_metrics = (g_dir / "full.csv").string();
  REQUIRE(run_cli("train --config " + cfg + " --data " + data + " --out " + full_ckpt +
                  " --metrics " + full_metrics) == 0);

  const std::string half_ckpt = (g_dir / "half.ckpt").string();
  REQUIRE(run_cli("train --config " + cfg + " --data " + data + " --out " + half_ckpt +
                  " --episodes 3 --metrics " + (g_dir / "half.csv").string()) == 0);
  const std::string resumed_metrics = (g_dir / "resumed.csv").string();
  const std::string resumed_ckpt = (g_dir / "resumed.ckpt").string();
  REQUIRE(run_cli("train --config " + cfg + " --data " + data + " --resume " + half_ckpt +
                  " --out " + resumed_ckpt + " --episodes 6 --metrics " +
                  resumed_metrics) == 0);

  // the resumed stream must equal the tail of the full stream
  std::istringstream full_in(file_contents(full_metrics));
  std::vector<std::string> full_lines;
  std::string line;
  while (std::getline(full_in, line)) full_lines.push_back(line);
  std::istringstream resumed_in(file_contents(resumed_metrics));
  std::vector<std::string> resumed_lines;
  while (std::getline(resumed_in, line)) resumed_lines.push_back(line);

  REQUIRE(full_lines.size() == 7);  // header + 6 episodes
  REQUIRE(resumed_lines.size() == 3);
  CHECK(resumed_lines[0] == full_lines[4]);
  CHECK(resumed_lines[1] == full_lines[5]);
  CHECK(resumed_lines[2] == full_lines[6]);

  // and the final checkpoints must agree byte for byte
  CHECK(file_contents(full_ckpt) == file_contents(resumed_ckpt));
}

TEST_CASE("eval: determinism and baseline separation on redundancy-heavy data") {
  const std::string cfg = write_config("e0.cfg", config_text(20));
  const std::string data = (g_dir / "e0.setf").string();
  const std::string ckpt = (g_dir / "e0.ckpt").string();
  REQUIRE(run_cli("gen --config " + cfg + " --out " + data) == 0);
  REQUIRE(run_cli("train --config " + cfg + " --data " + data + " --out " + ckpt) == 0);

  const std::string out1 = (g_dir / "eval1").string();
  const std::string out2 = (g_dir / "eval2").string();
  REQUIRE(run_cli("eval --checkpoint " + ckpt + " --data " + data + " --out " + out1 +
                  " --protocol closed-id --baseline dac") == 0);
  REQUIRE(run_cli("eval --checkpoint " + ckpt + " --data " + data + " --out " + out2 +
                  " --protocol closed-id --baseline dac") == 0);
  CHECK(file_contents(out1 + "/summary.json") == file_contents(out2 + "/summary.json"));
  CHECK(file_contents(out1 + "/weights.csv") == file_contents(out2 + "/weights.csv"));

  const std::string mean_out = (g_dir / "eval_mean").string();
  REQUIRE(run_cli("eval --checkpoint " + ckpt + " --data " + data + " --out " + mean_out +
                  " --protocol closed-id --baseline meanpool") == 0);
  // meanpool produces no weight traces; dac does
  CHECK(std::filesystem::exists(out1 + "/weights.csv"));
  CHECK(!std::filesystem::exists(mean_out + "/weights.csv"));
}

TEST_CASE("eval: verification on separable two-identity data is perfect") {
  std::string text = config_text(0);
  text.replace(text.find("dataset.num_identities 6"), 24, "dataset.num_identities 2");
  text.replace(text.find("dataset.quality_sigma_max 0.3"), 29,
               "dataset.quality_sigma_max 0.08");
  const std::string cfg = write_config("v.cfg", text);
  const std::string data = (g_dir / "v.setf").string();
  const std::string ckpt = (g_dir / "v.ckpt").string();
  REQUIRE(run_cli("gen --config " + cfg + " --out " + data) == 0);
  REQUIRE(run_cli("train --config " + cfg + " --data " + data + " --out " + ckpt) == 0);
  const std::string out = (g_dir / "v_eval").string();
  REQUIRE(run_cli("eval --checkpoint " + ckpt + " --data " + data + " --out " + out +
                  " --protocol verify --baseline meanpool") == 0);
  const std::string summary = file_contents(out + "/summary.json");
  CHECK(summary.find("\"tar@far=0.010000\": 1.0") != std::string::npos);
  CHECK(std::filesystem::exists(out + "/roc.csv"));
}

TEST_CASE("eval: open-id with --terminate exits with a config error") {
  const std::string cfg = write_config("o.cfg", config_text(0));
  const std::string data = (g_dir / "o.setf").string();
  const std::string ckpt = (g_dir / "o.ckpt").string();
  REQUIRE(run_cli("gen --config " + cfg + " --out " + data) == 0);
  REQUIRE(run_cli("train --config " + cfg + " --data " + data + " --out " + ckpt) == 0);
  CHECK(run_cli("eval --checkpoint " + ckpt + " --data " + data + " --out " +
                (g_dir / "o_eval").string() +
                " --protocol open-id --terminate") == 1);
}

TEST_CASE("inspect: corrupted checkpoint exits 2") {
  const auto bad = g_dir / "bad.ckpt";
  std::ofstream(bad) << "not a checkpoint";
  CHECK(run_cli("inspect --checkpoint " + bad.string()) == 2);
}

TEST_CASE("data format errors exit 2") {
  const std::string cfg = write_config("d.cfg", config_text(0));
  const auto bad = g_dir / "bad.setf";
  std::ofstream(bad) << "garbage";
  CHECK(run_cli("train --config " + cfg + " --data " + bad.string() + " --out " +
                (g_dir / "d.ckpt").string()) == 2);
}

int main(int argc, char** argv) {
  if (argc < 2) {
    std::fprintf(stderr, "usage: test_cli <path-to-setpool-binary> [doctest args]\n");
    return 1;
  }
  g_cli = argv[1];
  g_dir = std::filesystem::temp_directory_path() / "setpool_cli_tests";
  std::filesystem::create_directories(g_dir);

  doctest::Context context;
  context.applyCommandLine(argc - 1, argv + 1);
  const int rc = context.run();
  std::filesystem::remove_all(g_dir);
  return rc;
}
