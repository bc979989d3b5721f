#include <doctest.h>

#include <chrono>
#include <thread>

#include "inout/errors.hpp"
#include "inout/review_service.hpp"
#include "oracles.hpp"

#include <httplib.h>

using namespace inout;
using nlohmann::json;

namespace {

ToyDiffusionBackend tiny_backend() {
  ToyDenoiserConfig c;
  c.channels = 4;
  c.timesteps = 8;
  return ToyDiffusionBackend(c, 0);
}

ReviewServiceConfig service_config(const std::string& name, std::string token = {}) {
  ReviewServiceConfig c;
  c.state_dir = oracle::scratch_dir(name);
  c.resolution = {16, 32};
  c.token = std::move(token);
  return c;
}

json post(httplib::Client& cli, const std::string& path, const json& body, int expected) {
  auto res = cli.Post(path, body.dump(), "application/json");
  REQUIRE(res);
  CHECK(res->status == expected);
  return json::parse(res->body);
}

json get(httplib::Client& cli, const std::string& path, int expected) {
  auto res = cli.Get(path);
  REQUIRE(res);
  CHECK(res->status == expected);
  return json::parse(res->body);
}

json wait_job(httplib::Client& cli, const std::string& id) {
  for (int i = 0; i < 600; ++i) {
    json j = get(cli, "/jobs/" + id, 200);
    if (j["status"] == "done" || j["status"] == "failed") return j;
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
  }
  FAIL("job did not finish");
  return {};
}

}  // namespace

TEST_CASE("decision names") {
  CHECK(parse_decision("accept") == Decision::accepted);
  CHECK(parse_decision("rejected") == Decision::rejected);
  CHECK_THROWS_AS(parse_decision("maybe"), ValidationError);
}

TEST_CASE("HTTP review loop: generate, decide, revise, export") {
  const ToyDiffusionBackend backend = tiny_backend();
  const ReviewServiceConfig cfg = service_config("review_http");
  std::string session_id;
  json session_before_restart;
  {
    ReviewService service(backend, nullptr, cfg);
    ReviewServer server(service);
    const int port = server.start("127.0.0.1", 0);
    REQUIRE(port > 0);
    httplib::Client cli("127.0.0.1", port);

    const json created = post(cli, "/sessions", {{"prompt", "skt background cracked"}}, 201);
    session_id = created["id"];
    CHECK(created["status"] == "open");
    CHECK(created["prompt_history"].size() == 1);
    const std::string base = "/sessions/" + session_id;

    const json job = post(cli, base + "/generate", {{"count", 8}, {"seed", 1}}, 202);
    const json done = wait_job(cli, job["id"]);
    REQUIRE(done["status"] == "done");
    const auto ids = done["sample_ids"].get<std::vector<std::string>>();
    REQUIRE(ids.size() == 8);

    auto img = cli.Get(base + "/samples/" + ids[0] + "/image");
    REQUIRE(img);
    CHECK(img->status == 200);
    CHECK(img->get_header_value("Content-Type") == "image/png");
    CHECK(img->body.substr(0, 8) == std::string("\x89PNG\r\n\x1a\n", 8));

    for (int i = 0; i < 8; ++i) {
      const json d = post(cli, base + "/samples/" + ids[i] + "/decision",
                          {{"decision", i < 5 ? "accept" : "reject"}, {"note", "n" + std::to_string(i)}}, 200);
      CHECK(d["decision"] == (i < 5 ? "accepted" : "rejected"));
    }
    post(cli, base + "/samples/" + ids[0] + "/decision", {{"decision", "reject"}}, 409);

    CHECK(post(cli, base + "/prompt", {{"prompt", "skt background scratched"}}, 200)["iteration"] == 2);
    const json job2 = wait_job(cli, post(cli, base + "/generate", {{"count", 4}, {"seed", 2}}, 202)["id"]);
    REQUIRE(job2["sample_ids"].size() == 4);
    CHECK(job2["iteration"] == 2);

    const json s = get(cli, base, 200);
    CHECK(s["samples"].size() == 12);
    CHECK(s["counts"]["accepted"] == 5);
    CHECK(s["counts"]["rejected"] == 3);
    CHECK(s["counts"]["pending"] == 4);
    CHECK(s["prompt_history"][1]["prompt"] == "skt background scratched");

    const json fragment = post(cli, base + "/export", json::object(), 200);
    CHECK(fragment["samples"].size() == 5);
    for (const auto& e : fragment["samples"]) CHECK(e["label"] == "positive");
    CHECK(post(cli, base + "/export", json::object(), 200) == fragment);
    post(cli, base + "/generate", {{"count", 1}}, 409);
    post(cli, base + "/prompt", {{"prompt", "later"}}, 409);

    const DatasetManifest m = load_dataset_dir(cfg.state_dir / "sessions" / session_id);
    CHECK(m.size() == 5);
    CHECK(m.content_hash() == fragment["content_hash"]);

    CHECK(get(cli, "/sessions", 200)["sessions"].size() == 1);
    session_before_restart = get(cli, base, 200);
    server.stop();

    // The event log alone reproduces the session.
    CHECK(replay_events(service.events_path(session_id)).to_json() == session_before_restart);
  }
  ReviewService restarted(backend, nullptr, cfg);
  CHECK(restarted.session(session_id).to_json() == session_before_restart);
  CHECK(restarted.create_session("p") != session_id);
}

TEST_CASE("HTTP error mapping") {
  const ToyDiffusionBackend backend = tiny_backend();
  ReviewService service(backend, nullptr, service_config("review_errors"));
  ReviewServer server(service);
  const int port = server.start("127.0.0.1", 0);
  httplib::Client cli("127.0.0.1", port);
  post(cli, "/sessions", {{"prompt", ""}}, 400);
  auto bad = cli.Post("/sessions", "{not json", "application/json");
  REQUIRE(bad);
  CHECK(bad->status == 400);
  get(cli, "/sessions/session-9999", 404);
  get(cli, "/jobs/job-77", 404);
  const std::string id = post(cli, "/sessions", {{"prompt", "skt background"}}, 201)["id"];
  post(cli, "/sessions/" + id + "/generate", {{"count", -1}}, 400);
  post(cli, "/sessions/" + id + "/samples/nope/decision", {{"decision", "accept"}}, 404);
  post(cli, "/sessions/" + id + "/samples/nope/decision", {{"decision", "maybe"}}, 400);
  post(cli, "/sessions/" + id + "/export", json::object(), 400);
  const json empty = wait_job(cli, post(cli, "/sessions/" + id + "/generate", {{"count", 0}}, 202)["id"]);
  CHECK(empty["status"] == "done");
  CHECK(empty["sample_ids"].empty());
}

TEST_CASE("operator token is required when configured") {
  const ToyDiffusionBackend backend = tiny_backend();
  ReviewService service(backend, nullptr, service_config("review_token", "s3cret"));
  ReviewServer server(service);
  const int port = server.start("127.0.0.1", 0);
  httplib::Client cli("127.0.0.1", port);
  get(cli, "/sessions", 401);
  cli.set_bearer_token_auth("wrong");
  get(cli, "/sessions", 401);
  cli.set_bearer_token_auth("s3cret");
  get(cli, "/sessions", 200);
}

TEST_CASE("generation is reproducible for the same prompt and seed") {
  const ToyDiffusionBackend backend = tiny_backend();
  ReviewService service(backend, nullptr, service_config("review_repro"));
  const std::string a = service.create_session("skt background");
  const std::string b = service.create_session("skt background");
  service.generate_batch(a, 2, 5);
  service.generate_batch(b, 2, 5);
  service.wait_idle();
  const auto sa = service.session(a), sb = service.session(b);
  REQUIRE(sa.samples.size() == 2);
  REQUIRE(sb.samples.size() == 2);
  CHECK(sa.samples[0].digest == sb.samples[0].digest);
  CHECK(sa.samples[0].digest != sa.samples[1].digest);
  CHECK_THROWS_AS(service.decide(a, sa.samples[0].id, Decision::pending), ValidationError);
}
