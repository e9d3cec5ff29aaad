// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <iterator>
#include <json.hpp>
#include <map>

#include "mask3d/cli.hpp"
#include "support.hpp"

using namespace mask3d;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

int cli(std::vector<std::string> args) { return run_cli(args); }

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file() && e.path().filename() != "manifest.json")
      out[fs::relative(e.path(), root).string()] = slurp(e.path());
  return out;
}

json manifest(const fs::path& dir) { return json::parse(slurp(dir / "manifest.json")); }

const std::vector<std::string> kTiny{"--token-dim", "8", "--heads", "2", "--color-layers", "1",
                                     "--depth-layers", "1", "--decoder-layers", "1", "--patch", "4"};

std::vector<std::string> with(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

/// 16x16 corpus at patch 4.
void tiny_corpus(const fs::path& out, int frames = 6) {
  REQUIRE(cli({"gen", "--out", out.string(), "--frames", std::to_string(frames), "--val-frames", "2", "--height",
               "16", "--width", "16", "--patch", "4", "--seed", "3"}) == kExitOk);
}

}  // namespace

TEST_CASE("gen is deterministic and writes a manifest") {
  test::TempDir dir("gen");
  const auto a = dir.path() / "a", b = dir.path() / "b";
  CHECK(cli({"gen", "--out", a.string(), "--frames", "8", "--seed", "1"}) == kExitOk);
  CHECK(cli({"gen", "--out", b.string(), "--frames", "8", "--seed", "1"}) == kExitOk);
  CHECK(tree(a) == tree(b));
  const auto m = manifest(a);
  CHECK(m["command"] == "gen");
  CHECK(m["seed"] == 1);
  CHECK(m["args"]["frames"] == 8);
  CHECK(m["args"]["val-frames"] == 2);
  CHECK(m.contains("git_describe"));
}

TEST_CASE("gen edge cases") {
  test::TempDir dir("gen0");
  CHECK(cli({"gen", "--out", (dir.path() / "z").string(), "--frames", "0"}) == kExitOk);
  CHECK(fs::exists(dir.path() / "z" / "manifest.json"));
  CHECK(fs::is_empty(dir.path() / "z" / "train"));

  CHECK(cli({"gen", "--out", (dir.path() / "d").string()}) == kExitOk);
  std::size_t train = 0, val = 0;
  for (const auto& e : fs::directory_iterator(dir.path() / "d" / "train")) train += e.path().extension() == ".pgm";
  for (const auto& e : fs::directory_iterator(dir.path() / "d" / "val")) val += e.path().extension() == ".pgm";
  CHECK(train == 256);
  CHECK(val == 64);
}

TEST_CASE("argument errors") {
  test::TempDir dir("args");
  CHECK(cli({}) == kExitBadArgs);
  CHECK(cli({"frobnicate"}) == kExitBadArgs);
  CHECK(cli({"gen", "--frames", "x", "--out", dir.path().string()}) == kExitBadArgs);
  CHECK(cli({"--help"}) == kExitOk);
  tiny_corpus(dir.path() / "c");
  const auto out = dir.path() / "p";
  CHECK(cli(with({"pretrain", "--data", (dir.path() / "c").string(), "--out", out.string(), "--rgb-keep", "1.5"},
                 kTiny)) == kExitBadArgs);
  CHECK_FALSE(fs::exists(out / "manifest.json"));  // rejected before any compute
  CHECK(cli({"pretrain", "--data", (dir.path() / "c").string(), "--out", out.string(), "--heads", "3"}) ==
        kExitBadArgs);
  CHECK(cli({"probe", "--data", (dir.path() / "c").string()}) == kExitBadArgs);
}

TEST_CASE("missing data is a data error") {
  test::TempDir dir("missing");
  CHECK(cli({"pretrain", "--data", (dir.path() / "nope").string(), "--out", (dir.path() / "o").string()}) ==
        kExitDataError);
  CHECK(cli({"reconstruct", "--data", dir.path().string(), "--checkpoint", (dir.path() / "no.m3d").string(), "--out",
             (dir.path() / "r").string()}) == kExitDataError);
}

TEST_CASE("pretrain, replay, probe and reconstruct") {
  test::TempDir dir("flow");
  const auto data = dir.path() / "c";
  tiny_corpus(data);
  const auto run = dir.path() / "run";
  REQUIRE(cli(with({"pretrain", "--data", data.string(), "--out", run.string(), "--epochs", "2", "--micro-batch", "2",
                    "--accum", "1", "--quiet"},
                   kTiny)) == kExitOk);
  for (const char* f : {"checkpoint.m3d", "metrics.csv", "val_metrics.csv", "manifest.json"})
    CHECK(fs::exists(run / f));
  const auto m = manifest(run);
  CHECK(m["resolved"]["train"]["p_c"] == 0.2);
  CHECK(m["resolved"]["train"]["p_d"] == 0.2);
  CHECK(m["resolved"]["train"]["lambda_rgb"] == 0.0);

  const auto replay = dir.path() / "replay";
  CHECK(cli({"replay", (run / "manifest.json").string(), "--out", replay.string()}) == kExitOk);
  CHECK(slurp(run / "checkpoint.m3d") == slurp(replay / "checkpoint.m3d"));

  const auto ck = (run / "checkpoint.m3d").string();
  CHECK(cli({"probe", "--data", data.string(), "--checkpoint", ck, "--epochs", "2", "--out",
             (dir.path() / "pr").string()}) == kExitOk);
  const auto report = json::parse(slurp(dir.path() / "pr" / "probe.json"));
  CHECK(report["arm"] == "pretrained");
  CHECK(report["miou"].get<double>() >= 0.0);
  CHECK(cli(with({"probe", "--data", data.string(), "--scratch", "--epochs", "2"}, kTiny)) == kExitOk);

  const auto rec = dir.path() / "rec";
  CHECK(cli({"reconstruct", "--data", data.string(), "--checkpoint", ck, "--out", rec.string(), "--rgb-keep", "0.2",
             "--depth-keep", "0.2", "--frames", "2"}) == kExitOk);
  std::size_t pgm = 0;
  for (const auto& e : fs::directory_iterator(rec)) pgm += e.path().extension() == ".pgm";
  CHECK(pgm == 6);
}

TEST_CASE("pretrain special configurations") {
  test::TempDir dir("special");
  const auto data = dir.path() / "c";
  tiny_corpus(data, 4);
  CHECK(cli(with({"pretrain", "--data", data.string(), "--out", (dir.path() / "z").string(), "--epochs", "0"},
                 kTiny)) == kExitOk);
  CHECK(fs::exists(dir.path() / "z" / "checkpoint.m3d"));
  CHECK(cli(with({"pretrain", "--data", data.string(), "--out", (dir.path() / "mono").string(), "--epochs", "1",
                  "--rgb-keep", "1.0", "--depth-keep", "0.0", "--quiet"},
                 kTiny)) == kExitOk);
  CHECK(cli(with({"pretrain", "--data", data.string(), "--out", (dir.path() / "rgb").string(), "--epochs", "1",
                  "--lambda-rgb", "1", "--quiet"},
                 kTiny)) == kExitOk);
  CHECK(cli(with({"pretrain", "--data", data.string(), "--out", (dir.path() / "nan").string(), "--epochs", "3",
                  "--lr", "1e30", "--quiet"},
                 kTiny)) == kExitNumeric);
}

TEST_CASE("thread count falls back to the environment") {
  test::TempDir dir("env");
  const auto data = dir.path() / "c";
  tiny_corpus(data, 4);
  ::setenv("MASK3D_THREADS", "2", 1);
  CHECK(cli(with({"pretrain", "--data", data.string(), "--out", (dir.path() / "t2").string(), "--epochs", "1"},
                 kTiny)) == kExitOk);
  ::unsetenv("MASK3D_THREADS");
  CHECK(manifest(dir.path() / "t2")["resolved"]["train"]["threads"] == 2);
  CHECK(cli(with({"pretrain", "--data", data.string(), "--out", (dir.path() / "t1").string(), "--epochs", "1",
                  "--threads", "2"},
                 kTiny)) == kExitOk);
  CHECK(slurp(dir.path() / "t1" / "checkpoint.m3d") == slurp(dir.path() / "t2" / "checkpoint.m3d"));
}

TEST_CASE("ablate enumerates the appendix grid") {
  test::TempDir dir("abl");
  const auto data = dir.path() / "c";
  tiny_corpus(data, 4);
  REQUIRE(cli(with({"ablate", "--data", data.string(), "--out", (dir.path() / "a").string(), "--grid", "appendix",
                    "--micro-batch", "2", "--accum", "1", "--probe-epochs", "1"},
                   kTiny)) == kExitOk);
  std::ifstream f(dir.path() / "a" / "ablation.csv");
  std::string line;
  std::vector<std::string> rows;
  std::getline(f, line);
  while (std::getline(f, line)) rows.push_back(line);
  REQUIRE(rows.size() == 20);
  CHECK(rows[0].rfind("0.2,0,", 0) == 0);
  std::size_t baseline = 0;
  for (const auto& r : rows) baseline += r.find("pure-depth-baseline") != std::string::npos;
  CHECK(baseline == 1);
  CHECK(cli({"ablate", "--data", data.string(), "--out", (dir.path() / "b").string(), "--grid", "0.2:x"}) ==
        kExitBadArgs);
}
