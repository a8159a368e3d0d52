/**
 * Copyright 2026 The FedSense Simulator Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Drives the fedsense executable end to end on a tiny configuration.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::string kTiny =
    " --set data.patch_side=4 --set model.hidden=8 --set model.feature_dim=4"
    " --set federation.clients=3 --set federation.rounds=3"
    " --set data.samples_per_client=24 --set data.public_samples=40"
    " --set uni.steps=20 --set ssl.batch_size=8 --set server.distill_batch_size=8"
    " --set server.clusters=2 --set probe.samples=120 --set probe.steps=50";

fs::path fresh_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / ("fedsense_cli_" + name);
  fs::remove_all(p);
  return p;
}

int run(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + " " + FEDSENSE_CLI_PATH + " " + args + " >/dev/null 2>" +
                          (fs::temp_directory_path() / "fedsense_cli_stderr").string();
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string read(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string last_stderr() { return read(fs::temp_directory_path() / "fedsense_cli_stderr"); }

}  // namespace

TEST_CASE("run writes metrics, checkpoint and summary") {
  const auto out = fresh_dir("run");
  REQUIRE(run("run --out " + out.string() + " --seed 3" + kTiny) == 0);
  CHECK(fs::exists(out / "metrics.csv"));
  CHECK(fs::exists(out / "final.fsns"));
  CHECK(fs::exists(out / "config.txt"));
  const auto summary = json::parse(read(out / "summary.json"));
  CHECK(summary["probe_accuracy"].get<double>() >= 0.0);
  const auto csv = read(out / "metrics.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);

  const auto again = fresh_dir("run_again");
  REQUIRE(run("run --out " + again.string() + " --seed 3" + kTiny, "FEDSENSE_THREADS=3") == 0);
  CHECK(read(again / "metrics.csv") == csv);
  CHECK(read(again / "final.fsns") == read(out / "final.fsns"));

  const auto probed = fresh_dir("probe");
  REQUIRE(run("probe --out " + probed.string() + " --seed 3 --checkpoint " +
              (out / "final.fsns").string() + kTiny) == 0);
  const auto p = json::parse(read(probed / "probe.json"));
  CHECK(p["probe_accuracy"].get<double>() >= 0.0);
  fs::remove_all(out);
  fs::remove_all(again);
  fs::remove_all(probed);
}

TEST_CASE("config file plus overrides") {
  const auto out = fresh_dir("cfg");
  fs::create_directories(out);
  {
    std::ofstream cfg(out / "tiny.cfg");
    cfg << "# tiny\nfederation.rounds = 2\ncsg.bits = 1\n";
  }
  REQUIRE(run("run --config " + (out / "tiny.cfg").string() + " --out " + (out / "o").string() +
              kTiny + " --set federation.rounds=2") == 0);
  const auto rendered = read(out / "o" / "config.txt");
  CHECK(rendered.find("csg.bits = 1") != std::string::npos);
  CHECK(rendered.find("federation.rounds = 2") != std::string::npos);
  fs::remove_all(out);
}

TEST_CASE("errors exit nonzero with a machine-readable summary") {
  const auto out = fresh_dir("err");
  CHECK(run("run --out " + out.string() + " --set csg.bits=33") == 2);
  const auto err = json::parse(last_stderr());
  CHECK(err["status"] == "error");
  CHECK(err["kind"] == "config");
  CHECK(err["message"].get<std::string>().find("1 ≤ b ≤ 32") != std::string::npos);
  CHECK(run("run --out " + out.string() + " --set nope.key=1") == 2);
  CHECK(run("run --out " + out.string() + " --config /nonexistent.cfg") == 2);
  CHECK(run("run --out " + out.string() + kTiny, "FEDSENSE_THREADS=zero") == 2);
  CHECK(run("bogus") != 0);
  fs::remove_all(out);
}

TEST_CASE("codec-bench reports every width") {
  const auto out = fresh_dir("codec");
  REQUIRE(run("codec-bench --out " + out.string() + " --dim 16 --draws 500") == 0);
  const auto csv = read(out / "codec_bench.csv");
  CHECK(csv.rfind("bits,dim,wire_bytes,header_bytes,payload_bytes,draws,max_abs_bias,max_bias_z\n",
                  0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 7);
  fs::remove_all(out);
}

TEST_CASE("theory-check and ablate") {
  const auto out = fresh_dir("theory");
  REQUIRE(run("theory-check --skip-convergence --out " + out.string() + kTiny) == 0);
  const auto report = json::parse(read(out / "theory.json"));
  CHECK(report["lemmas"].size() == 1);
  CHECK(report["lemmas"][0]["passed"] == true);

  const auto ab = fresh_dir("ablate");
  REQUIRE(run("ablate --out " + ab.string() + kTiny) == 0);
  const auto csv = read(ab / "ablate.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 12);
  fs::remove_all(out);
  fs::remove_all(ab);
}
