// SPDX-License-Identifier: Apache-2.0
#include <catch_amalgamated.hpp>

#include <filesystem>
#include <thread>

#include <pausebench/dataprep.hpp>
#include <pausebench/service.hpp>

using namespace pausebench;
namespace fs = std::filesystem;

namespace {

fs::path corpus() {
  static const fs::path dir = [] {
    const auto d = fs::temp_directory_path() / "pausebench_service_corpus";
    fs::remove_all(d);
    SynthCorpusConfig c;
    c.recordings = 3;
    c.subjects = 3;
    c.with_audio = true;
    c.seed = 2;
    write_synth_corpus(d, c);
    return d;
  }();
  return dir;
}

DatasetManifest manifest() { return load_manifest(corpus() / "manifest.json"); }

std::string track_body(int frames, int code) {
  return to_json(FrameLabelSeq::from_codes(std::vector<int>(static_cast<std::size_t>(frames), code)))
      .dump();
}

} // namespace

TEST_CASE("recording list mirrors the manifest") {
  AnnotationService svc(manifest());
  const Reply r = svc.list_recordings();
  CHECK(r.status == 200);
  const json list = json::parse(r.body);
  const auto m = manifest();
  REQUIRE(list.size() == m.records.size());
  for (std::size_t i = 0; i < list.size(); ++i) {
    CHECK(list[i].at("id") == m.records[i].meta.id);
    CHECK(list[i].at("has_audio") == true);
  }
}

TEST_CASE("labels round trip byte for byte") {
  AnnotationService svc(manifest());
  const auto &e = svc.manifest().records.front();
  const int frames = e.meta.frames();
  // unusual but valid formatting must survive untouched
  std::string body = "{ \"rate_hz\" : 50,\n  \"labels\": " +
                     json(std::vector<int>(static_cast<std::size_t>(frames), 1)).dump() + " }";
  const Reply put = svc.put_labels(e.meta.id, "alice", body);
  REQUIRE(put.status == 200);
  CHECK(json::parse(put.body).at("version") == 1);
  const Reply get = svc.get_labels(e.meta.id, "alice");
  CHECK(get.status == 200);
  CHECK(get.body == body);
  CHECK(get.headers.at("X-Version") == "1");
}

TEST_CASE("label writes are validated") {
  AnnotationService svc(manifest());
  const auto &e = svc.manifest().records.front();
  CHECK(svc.put_labels(e.meta.id, "bob", "not json").status == 400);
  CHECK(svc.put_labels(e.meta.id, "bob", track_body(e.meta.frames() - 1, 0)).status == 422);
  CHECK(svc.put_labels(e.meta.id, "../etc", track_body(e.meta.frames(), 0)).status == 400);
  CHECK(svc.put_labels("nope", "bob", track_body(10, 0)).status == 404);
  CHECK(svc.get_labels(e.meta.id, "nobody").status == 404);
  CHECK(svc.get_audio("nope").status == 404);
}

TEST_CASE("stale versions are reported and the last writer wins") {
  AnnotationService svc(manifest());
  const auto &e = svc.manifest().records.front();
  const int frames = e.meta.frames();
  CHECK(json::parse(svc.put_labels(e.meta.id, "a", track_body(frames, 1), 0L).body).at("conflict") ==
        false);
  const json second = json::parse(svc.put_labels(e.meta.id, "a", track_body(frames, 2), 0L).body);
  CHECK(second.at("conflict") == true);
  CHECK(second.at("version") == 2);
  CHECK(svc.get_labels(e.meta.id, "a").body == track_body(frames, 2));
}

TEST_CASE("concurrent writers are serialized") {
  AnnotationService svc(manifest());
  const auto &e = svc.manifest().records.front();
  const int frames = e.meta.frames();
  std::vector<std::thread> pool;
  for (int t = 0; t < 8; ++t)
    pool.emplace_back([&, t] {
      for (int i = 0; i < 10; ++i)
        svc.put_labels(e.meta.id, "w" + std::to_string(t), track_body(frames, t % 4));
    });
  for (auto &th : pool)
    th.join();
  CHECK(svc.get_labels(e.meta.id, "w0").headers.at("X-Version") == "80");
}

TEST_CASE("merge equals the library majority vote") {
  AnnotationService svc(manifest());
  const auto &e = svc.manifest().records.front();
  const int frames = e.meta.frames();
  std::vector<AnnotationTrack> tracks;
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> c(0, 3);
  for (const char *who : {"a", "b", "c"}) {
    std::vector<int> codes(static_cast<std::size_t>(frames));
    for (auto &v : codes)
      v = c(rng);
    const auto seq = FrameLabelSeq::from_codes(codes);
    tracks.push_back({e.meta.id, who, seq});
    REQUIRE(svc.put_labels(e.meta.id, who, to_json(seq).dump()).status == 200);
  }
  const Reply r = svc.merge(e.meta.id, R"({"annotators":["a","b","c"]})");
  REQUIRE(r.status == 200);
  const json body = json::parse(r.body);
  CHECK(label_seq_from_json(body) == majority_vote(tracks));
  CHECK(json::parse(svc.merge(e.meta.id, "").body).at("labels") == body.at("labels"));
  CHECK(svc.merge(e.meta.id, R"({"annotators":["a","zzz"]})").status == 404);
  CHECK(svc.merge(e.meta.id, R"({"annotators":["a"]})").status == 422);
}

TEST_CASE("feature preview is block averaged") {
  AnnotationService svc(manifest());
  const auto &e = svc.manifest().records.front();
  const Reply r = svc.get_features(e.meta.id, "mfb", 100);
  REQUIRE(r.status == 200);
  const json j = json::parse(r.body);
  const int step = j.at("step");
  CHECK(j.at("data").size() <= 100);
  const FeatureMatrix full = read_matrix(svc.manifest().resolve(e.matrices.at("mfb")));
  const double expected = full.data().col(0).head(step).mean();
  CHECK(j.at("data")[0][0].get<double>() == Catch::Approx(expected));
  CHECK(svc.get_features(e.meta.id, "emb12").status == 404);
  CHECK(svc.get_features(e.meta.id, "bogus").status == 404);
}

TEST_CASE("tracks persist across restarts") {
  const auto store = fs::temp_directory_path() / "pausebench_service_store";
  fs::remove_all(store);
  const auto m = manifest();
  const auto &e = m.records.back();
  const std::string body = track_body(e.meta.frames(), 3);
  {
    AnnotationService svc(m, store);
    REQUIRE(svc.put_labels(e.meta.id, "keeper", body).status == 200);
  }
  AnnotationService again(m, store);
  CHECK(again.get_labels(e.meta.id, "keeper").body == body);
}

TEST_CASE("HTTP endpoints") {
  AnnotationService svc(manifest());
  httplib::Server srv;
  svc.bind(srv);
  const int port = srv.bind_to_any_port("127.0.0.1");
  REQUIRE(port > 0);
  std::thread runner([&] { srv.listen_after_bind(); });
  srv.wait_until_ready();

  httplib::Client cli("127.0.0.1", port);
  const auto &e = svc.manifest().records.front();
  const std::string id = e.meta.id;

  auto list = cli.Get("/recordings");
  REQUIRE(list);
  CHECK(list->status == 200);
  CHECK(json::parse(list->body).size() == svc.manifest().records.size());

  auto audio = cli.Get("/recordings/" + id + "/audio");
  REQUIRE(audio);
  CHECK(audio->status == 200);
  CHECK(audio->get_header_value("Content-Type") == "audio/wav");
  CHECK(audio->body == read_file_bytes(svc.manifest().resolve(e.audio)));

  const std::string body = track_body(e.meta.frames(), 2);
  auto put = cli.Put("/recordings/" + id + "/labels/ann1", body, "application/json");
  REQUIRE(put);
  CHECK(put->status == 200);
  auto get = cli.Get("/recordings/" + id + "/labels/ann1");
  REQUIRE(get);
  CHECK(get->body == body);

  httplib::Headers stale{{"If-Match", "0"}};
  auto put2 = cli.Put("/recordings/" + id + "/labels/ann1", stale, body, "application/json");
  REQUIRE(put2);
  CHECK(json::parse(put2->body).at("conflict") == true);

  cli.Put("/recordings/" + id + "/labels/ann2", track_body(e.meta.frames(), 1), "application/json");
  auto merged = cli.Post("/recordings/" + id + "/merge", R"({"annotators":["ann1","ann2"]})",
                         "application/json");
  REQUIRE(merged);
  CHECK(merged->status == 200);
  CHECK(json::parse(merged->body).at("labels")[0] == 2);

  auto feats = cli.Get("/recordings/" + id + "/features?kind=mfb&max_frames=50");
  REQUIRE(feats);
  CHECK(json::parse(feats->body).at("data").size() <= 50);

  auto missing = cli.Get("/recordings/unknown/labels/ann1");
  REQUIRE(missing);
  CHECK(missing->status == 404);

  srv.stop();
  runner.join();
}
