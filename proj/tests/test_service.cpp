#include <filesystem>
#include <thread>

#include "hilml/csv.hpp"
#include "hilml/demo.hpp"
#include "hilml/service.hpp"
#include "support.hpp"

#include <httplib.h>

using namespace hilml;
using namespace hilml::testing;
namespace fs = std::filesystem;

namespace {

struct Fixture {
  fs::path root;
  fs::path demo;

  Fixture() {
    static int counter = 0;
    root = fs::temp_directory_path() / ("hilml-service-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    fs::remove_all(root);
    demo = root / "demo";
    write_demo(demo);
  }
  ~Fixture() { fs::remove_all(root); }

  ServiceConfig config() const {
    ServiceConfig c;
    c.session_root = root / "sessions";
    c.corpus_dir = demo / "corpus";
    c.seed = 3;
    return c;
  }
};

Response call(Service& s, const std::string& method, const std::string& path, const std::string& body = "",
              std::map<std::string, std::string> query = {}) {
  return s.handle(Request{method, path, std::move(query), body});
}

Json ok(Service& s, const std::string& method, const std::string& path, const std::string& body = "",
        std::map<std::string, std::string> query = {}) {
  const Response r = call(s, method, path, body, std::move(query));
  EXPECT_GE(r.status, 200) << method << " " << path << " " << r.body.dump();
  EXPECT_LT(r.status, 300) << method << " " << path << " " << r.body.dump();
  return r.body;
}

// Polls the event stream until the run finishes and returns every event.
Json drain(Service& s, const std::string& events_path, std::uint64_t page_cursor = 0) {
  Json all = Json::array();
  std::uint64_t cursor = page_cursor;
  for (;;) {
    const Json page = ok(s, "GET", events_path, "", {{"cursor", std::to_string(cursor)}});
    for (const auto& e : page["events"]) all.push_back(e);
    cursor = page["cursor"].get<std::uint64_t>();
    if (page["finished"].get<bool>()) break;
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
  return all;
}

std::string with_dataset(const fs::path& problem, const std::string& dataset) {
  Json p = Json::parse(read_file(problem));
  p["dataset"] = dataset;
  return p.dump();
}

}  // namespace

TEST(Service, HappyPathAndReload) {
  Fixture fx;
  std::vector<std::string> gets;
  std::map<std::string, Json> before;
  std::string sid;
  {
    Service svc(fx.config());
    sid = ok(svc, "POST", "/sessions")["session_id"].get<std::string>();
    const std::string base = "/sessions/" + sid;
    const Json up = ok(svc, "POST", base + "/datasets", read_file(fx.demo / "collisions.csv"), {{"name", "collisions"}});
    EXPECT_EQ(up["row_count"], 365);
    EXPECT_EQ(up["profiles"].size(), 3u);
    ok(svc, "GET", base + "/datasets/collisions/profile");

    const Json prob = ok(svc, "POST", base + "/problems", with_dataset(fx.demo / "problem.json", "collisions"));
    const std::string pid = prob["problem_id"];
    const std::string rid = ok(svc, "POST", base + "/problems/" + pid + "/search")["run_id"];
    const Json events = drain(svc, base + "/runs/" + rid + "/events");
    ASSERT_FALSE(events.empty());
    EXPECT_LE(events.size(), 40u);
    for (std::size_t i = 0; i < events.size(); ++i) EXPECT_EQ(events[i]["seq"], i + 1);

    // Replaying from any cursor yields the tail of the same stream.
    const Json tail = drain(svc, base + "/runs/" + rid + "/events", 7);
    ASSERT_EQ(tail.size(), events.size() - 7);
    for (std::size_t i = 0; i < tail.size(); ++i) EXPECT_EQ(tail[i], events[i + 7]);
    const Json alias = drain(svc, base + "/problems/" + pid + "/search/" + rid + "/events");
    EXPECT_EQ(alias, events);

    const Json ranked = ok(svc, "GET", base + "/runs/" + rid + "/solutions", "", {{"sort", "mae"}});
    ASSERT_EQ(ranked["solutions"].size(), events.size());
    const std::string best = ranked["solutions"][0]["solution_id"];
    const std::string second = ranked["solutions"][1]["solution_id"];
    ok(svc, "GET", base + "/runs/" + rid + "/summary", "", {{"metric", "r2"}});
    ok(svc, "GET", base + "/runs/" + rid + "/parallel");
    const Json scatter = ok(svc, "GET", base + "/runs/" + rid + "/solutions/" + best + "/explain/scatter");
    EXPECT_EQ(scatter["explanation"]["points"].size(), 365u);
    const Json pdp = ok(svc, "GET", base + "/runs/" + rid + "/solutions/" + best + "/explain/pdp", "", {{"feature", "trips"}});
    EXPECT_FALSE(pdp["explanation"]["grid"].empty());
    const Response cm = call(svc, "GET", base + "/runs/" + rid + "/solutions/" + best + "/explain/confusion_matrix");
    EXPECT_EQ(cm.status, 400);
    EXPECT_EQ(cm.body["error"]["code"], "WRONG_TASK_TYPE");
    const Json cmp = ok(svc, "GET", base + "/solutions/compare", "", {{"a", best}, {"b", second}});
    EXPECT_TRUE(cmp["diff"].is_array());

    const Json cands = ok(svc, "GET", base + "/datasets/collisions/augment", "", {{"keywords", "weather"}});
    ASSERT_EQ(cands["candidates"].size(), 1u);
    EXPECT_EQ(cands["candidates"][0]["plan"]["kind"], "temporal");
    EXPECT_EQ(cands["candidates"][0]["preview"]["rows"].size(), 5u);
    const Json applied = ok(svc, "POST", base + "/datasets/collisions/augment/apply",
                            Json{{"candidate_id", cands["candidates"][0]["id"]}}.dump());
    EXPECT_EQ(applied["columns"].size(), 7u);
    EXPECT_EQ(applied["added_columns"].size(), 4u);
    const std::string wide_name = applied["name"];

    Json wide = Json::parse(with_dataset(fx.demo / "problem.json", wide_name));
    for (const auto& c : applied["added_columns"]) wide["features"].push_back(c);
    const std::string pid2 = ok(svc, "POST", base + "/problems", wide.dump())["problem_id"];
    const std::string rid2 = ok(svc, "POST", base + "/problems/" + pid2 + "/search", R"({"seed": 3})")["run_id"];
    drain(svc, base + "/runs/" + rid2 + "/events");
    const Json ranked2 = ok(svc, "GET", base + "/runs/" + rid2 + "/solutions");
    EXPECT_LT(ranked2["solutions"][0]["metrics"]["mae"].get<double>(), ranked["solutions"][0]["metrics"]["mae"].get<double>());

    gets = {base,
            base + "/datasets",
            base + "/datasets/collisions",
            base + "/datasets/" + wide_name,
            base + "/datasets/" + wide_name + "/profile",
            base + "/problems",
            base + "/runs/" + rid,
            base + "/runs/" + rid + "/events",
            base + "/runs/" + rid + "/solutions",
            base + "/runs/" + rid + "/solutions/" + best,
            base + "/runs/" + rid + "/summary",
            base + "/runs/" + rid + "/parallel",
            base + "/runs/" + rid + "/solutions/" + best + "/explain/scatter",
            base + "/runs/" + rid2 + "/solutions"};
    for (const auto& g : gets) before[g] = ok(svc, "GET", g);
    before["pdp"] = pdp;
  }
  Service again(fx.config());
  for (const auto& g : gets) EXPECT_EQ(ok(again, "GET", g), before[g]) << g;
  const std::string base = "/sessions/" + sid;
  const std::string best = before[base + "/runs/r1/solutions"]["solutions"][0]["solution_id"];
  EXPECT_EQ(ok(again, "GET", base + "/runs/r1/solutions/" + best + "/explain/pdp", "", {{"feature", "trips"}}), before["pdp"]);
}

TEST(Service, ErrorsCarryCodesAndStatuses) {
  Fixture fx;
  Service svc(fx.config());
  const Response missing = call(svc, "GET", "/sessions/s-nope");
  EXPECT_EQ(missing.status, 404);
  EXPECT_EQ(missing.body["error"]["code"], "SESSION_NOT_FOUND");
  EXPECT_EQ(call(svc, "GET", "/sessions/../etc").status, 404);
  EXPECT_EQ(call(svc, "GET", "/nowhere").body["error"]["code"], "ROUTE_NOT_FOUND");

  const std::string base = "/sessions/" + ok(svc, "POST", "/sessions")["session_id"].get<std::string>();
  EXPECT_EQ(call(svc, "GET", base + "/datasets/none/profile").body["error"]["code"], "DATASET_NOT_FOUND");
  ok(svc, "POST", base + "/datasets", read_file(fx.demo / "collisions.csv"), {{"name", "c"}});
  EXPECT_EQ(call(svc, "POST", base + "/datasets", "a,b\n1,2\n", {{"name", "c"}}).status, 400);

  Json bad = Json::parse(with_dataset(fx.demo / "problem.json", "c"));
  bad["target"] = "casualties";
  const Response r = call(svc, "POST", base + "/problems", bad.dump());
  EXPECT_EQ(r.status, 400);
  EXPECT_EQ(r.body["error"]["code"], "TARGET_NOT_FOUND");
  EXPECT_NE(r.body["error"]["message"].get<std::string>().find("casualties"), std::string::npos);
  EXPECT_EQ(call(svc, "POST", base + "/problems", "{oops").body["error"]["code"], "BAD_REQUEST");
  EXPECT_EQ(call(svc, "GET", base + "/problems/p9").body["error"]["code"], "PROBLEM_NOT_FOUND");
  EXPECT_EQ(call(svc, "GET", base + "/runs/r9/events").body["error"]["code"], "RUN_NOT_FOUND");
  EXPECT_EQ(call(svc, "POST", base + "/datasets/c/augment/apply", R"({"candidate_id":"x"})").status, 404);
  EXPECT_EQ(call(svc, "GET", base + "/solutions/compare", "", {{"a", "r1-1"}, {"b", "r1-2"}}).body["error"]["code"],
            "SOLUTION_NOT_FOUND");
}

TEST(Service, CancelIsIdempotentAndRunsPersistAsFinished) {
  Fixture fx;
  Service svc(fx.config());
  const std::string base = "/sessions/" + ok(svc, "POST", "/sessions")["session_id"].get<std::string>();
  ok(svc, "POST", base + "/datasets", read_file(fx.demo / "collisions.csv"), {{"name", "c"}});
  const std::string pid = ok(svc, "POST", base + "/problems", with_dataset(fx.demo / "problem.json", "c"))["problem_id"];
  const std::string rid = ok(svc, "POST", base + "/problems/" + pid + "/search")["run_id"];
  ok(svc, "DELETE", base + "/runs/" + rid);
  ok(svc, "DELETE", base + "/problems/" + pid + "/search/" + rid);
  drain(svc, base + "/runs/" + rid + "/events");
  const Json run = ok(svc, "GET", base + "/runs/" + rid);
  EXPECT_TRUE(run["finished"].get<bool>());
}

TEST(Service, CorpusChangeMakesCandidateStale) {
  Fixture fx;
  std::string base, cid;
  {
    Service svc(fx.config());
    base = "/sessions/" + ok(svc, "POST", "/sessions")["session_id"].get<std::string>();
    ok(svc, "POST", base + "/datasets", read_file(fx.demo / "collisions.csv"), {{"name", "c"}});
    cid = ok(svc, "GET", base + "/datasets/c/augment", "", {{"keywords", "rain"}})["candidates"][0]["id"];
  }
  std::string csv = read_file(fx.demo / "corpus" / "weather.csv");
  csv.replace(csv.rfind(',') + 1, std::string::npos, "99\n");
  write_file_atomic(fx.demo / "corpus" / "weather.csv", csv);
  Service svc(fx.config());
  const Response r = call(svc, "POST", base + "/datasets/c/augment/apply", Json{{"candidate_id", cid}}.dump());
  EXPECT_EQ(r.status, 409);
  EXPECT_EQ(r.body["error"]["code"], "STALE_CANDIDATE");
}

TEST(Service, HttpTransportRoundTrip) {
  Fixture fx;
  Service svc(fx.config());
  HttpServer server(svc);
  const int port = server.start("127.0.0.1", 0);
  ASSERT_GT(port, 0);
  httplib::Client client("127.0.0.1", port);
  auto created = client.Post("/sessions", "", "application/json");
  ASSERT_TRUE(created);
  EXPECT_EQ(created->status, 201);
  const std::string sid = Json::parse(created->body)["session_id"];
  auto up = client.Post(("/sessions/" + sid + "/datasets?name=collisions").c_str(), read_file(fx.demo / "collisions.csv"), "text/csv");
  ASSERT_TRUE(up);
  EXPECT_EQ(up->status, 201);
  auto prof = client.Get(("/sessions/" + sid + "/datasets/collisions/profile").c_str());
  ASSERT_TRUE(prof);
  EXPECT_EQ(prof->status, 200);
  EXPECT_EQ(Json::parse(prof->body)["profiles"].size(), 3u);
  auto missing = client.Get("/sessions/unknown");
  ASSERT_TRUE(missing);
  EXPECT_EQ(missing->status, 404);
  EXPECT_EQ(Json::parse(missing->body)["error"]["code"], "SESSION_NOT_FOUND");
  server.stop();
}
