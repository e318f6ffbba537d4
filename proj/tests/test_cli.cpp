// SPDX-License-Identifier: Apache-2.0
#include <catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <sys/wait.h>

#include <pausebench/pausebench.hpp>

using namespace pausebench;
namespace fs = std::filesystem;

namespace {

const fs::path &work() {
  static const fs::path dir = [] {
    const auto d = fs::temp_directory_path() / "pausebench_cli";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

int run(const std::string &args) {
  const std::string cmd = std::string(PAUSEBENCH_CLI_PATH) + " " + args + " > " +
                          (work() / "stdout.txt").string() + " 2> " +
                          (work() / "stderr.txt").string();
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string stderr_text() { return read_file_bytes(work() / "stderr.txt"); }

const std::string &corpus() {
  static const std::string path = [] {
    const auto d = work() / "corpus";
    REQUIRE(run("synth --out " + d.string() +
                " --recordings 10 --subjects 5 --min-duration 16 --max-duration 18"
                " --embeddings emb4 --seed 3") == 0);
    return (d / "manifest.json").string();
  }();
  return path;
}

const std::string quick = " --hidden 4 --layers 1 --epochs 2 --batch 16 --lr 0.01";

} // namespace

TEST_CASE("synth writes a valid corpus") {
  const auto m = load_manifest(corpus());
  CHECK(m.records.size() == 10);
  CHECK(m.records.front().matrices.count("emb4") == 1);
}

TEST_CASE("split and segment") {
  const auto split = (work() / "split.json").string();
  REQUIRE(run("split --manifest " + corpus() + " --seed 4 --out " + split) == 0);
  const auto spec = split_spec_from_json(read_json_file(split));
  CHECK(spec.assignment.size() == 5);

  const auto seg = (work() / "seg.json").string();
  REQUIRE(run("segment --manifest " + corpus() + " --stride 1 --out " + seg) == 0);
  const json w = read_json_file(seg);
  CHECK(w.at("window_s") == 15.0);
  CHECK(w.at("windows").size() >= 10 * 2);

  const auto stats = (work() / "stats.json").string();
  REQUIRE(run("stats --manifest " + corpus() + " --split " + split + " --out " + stats) == 0);
  CHECK(read_json_file(stats).at("splits").contains("train"));
}

TEST_CASE("train, predict, postproc and eval chain") {
  const auto ckpt = (work() / "model.ckpt").string();
  REQUIRE(run("train --manifest " + corpus() + quick + " --out " + ckpt) == 0);
  CHECK(load_checkpoint(ckpt).header.at("extra").contains("protocol"));

  const auto pred = (work() / "pred.json").string();
  REQUIRE(run("predict --checkpoint " + ckpt + " --split test --out " + pred) == 0);
  const json p = read_json_file(pred);
  REQUIRE(p.at("windows").size() >= 1);
  CHECK(p.at("windows")[0].at("output").size() == 750);

  const auto labels = (work() / "labels.json").string();
  REQUIRE(run("postproc --input " + pred + " --out " + labels) == 0);
  const auto metrics = (work() / "metrics.json").string();
  REQUIRE(run("eval --input " + labels + " --manifest " + corpus() + " --out " + metrics) == 0);
  const json m = read_json_file(metrics).at("metrics");
  CHECK(m.contains("overall"));
  CHECK(m.at("per_type").contains("BS"));
}

TEST_CASE("run is deterministic") {
  const auto a = (work() / "run_a.json").string(), b = (work() / "run_b.json").string();
  REQUIRE(run("run --manifest " + corpus() + " --setup 2 --emb emb4" + quick + " --out " + a) == 0);
  REQUIRE(run("run --manifest " + corpus() + " --setup 2 --emb emb4" + quick + " --out " + b) == 0);
  CHECK(read_file_bytes(a) == read_file_bytes(b));
  CHECK(read_json_file(a).at("config").at("setup") == 2);
}

TEST_CASE("merge matches the library vote") {
  std::vector<AnnotationTrack> tracks;
  std::string args = "merge";
  const std::vector<std::vector<int>> codes{{0, 1, 1, 2}, {0, 1, 2, 2}, {3, 1, 3, 0}};
  for (std::size_t i = 0; i < codes.size(); ++i) {
    AnnotationTrack t{"r", "ann" + std::to_string(i), FrameLabelSeq::from_codes(codes[i])};
    const auto path = work() / ("track" + std::to_string(i) + ".json");
    write_json_file(path, to_json(t));
    args += " " + path.string();
    tracks.push_back(t);
  }
  const auto out = (work() / "merged.json").string();
  REQUIRE(run(args + " --out " + out) == 0);
  CHECK(label_seq_from_json(read_json_file(out)) == majority_vote(tracks));
}

TEST_CASE("errors exit non-zero with a message") {
  CHECK(run("run --manifest " + (work() / "absent.json").string()) != 0);
  CHECK(stderr_text().find("error") != std::string::npos);
  CHECK(run("run --manifest " + corpus() + " --setup 5") != 0);
  CHECK(run("no-such-command") != 0);
  CHECK(run("merge " + (work() / "track0.json").string()) != 0);
}
