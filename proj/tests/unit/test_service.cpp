#include <gtest/gtest.h>

#include <httplib.h>

#include <thread>

#include "awtite/service.hpp"
#include "temp_dir.hpp"

using namespace awtite;
using nlohmann::json;

namespace {

class ServiceTest : public ::testing::Test {
 protected:
  void SetUp() override {
    store = std::make_unique<conduct::EventStore>(dir.path());
    server = std::make_unique<service::Server>(*store, service::ServerOptions{"127.0.0.1", 0, {}});
    ASSERT_TRUE(server->bind());
    thread = std::thread([this] { server->listen(); });
    server->wait_until_ready();
    client = std::make_unique<httplib::Client>("127.0.0.1", server->port());
  }

  void TearDown() override {
    server->stop();
    thread.join();
  }

  httplib::Result post(const std::string& path, const json& body) {
    return client->Post(path, body.dump(), "application/json");
  }

  static json body(const httplib::Result& r) { return json::parse(r->body); }

  static void expect_error(const httplib::Result& r, int status, const std::string& code) {
    ASSERT_TRUE(r);
    EXPECT_EQ(r->status, status) << r->body;
    const json j = body(r);
    EXPECT_EQ(j.at("code"), code);
    EXPECT_FALSE(j.at("message").get<std::string>().empty());
  }

  std::string create() {
    auto r = post("/trials", {{"name", "demo"}});
    EXPECT_EQ(r->status, 201);
    return body(r).at("id");
  }

  TempDir dir;
  std::unique_ptr<conduct::EventStore> store;
  std::unique_ptr<service::Server> server;
  std::unique_ptr<httplib::Client> client;
  std::thread thread;
};

json enroll(const std::string& id, int dose, const std::string& at) {
  return {{"kind", "patient-enrolled"}, {"patient_id", id}, {"dose", dose}, {"at", at}};
}

}  // namespace

TEST_F(ServiceTest, CreateAndList) {
  auto r = post("/trials", {{"id", "alpha"}, {"name", "Alpha"}, {"config", {{"design", "TITE"}}}});
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 201);
  EXPECT_EQ(r->get_header_value("Location"), "/trials/alpha");
  EXPECT_EQ(r->get_header_value("Content-Type"), "application/json");
  EXPECT_EQ(body(r).at("config").at("design"), "TITE");
  EXPECT_TRUE(body(r).at("patients").empty());

  r = client->Get("/trials");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 200);
  const json list = body(r).at("trials");
  ASSERT_EQ(list.size(), 1u);
  EXPECT_EQ(list[0].at("id"), "alpha");
  EXPECT_EQ(list[0].at("design"), "TITE");
  EXPECT_EQ(list[0].at("time_unit"), "weeks");

  expect_error(post("/trials", {{"id", "alpha"}}), 409, "conflict");
  expect_error(post("/trials", {{"config", {{"design", "3+3"}}}}), 400, "invalid");
  expect_error(client->Post("/trials", "{oops", "application/json"), 400, "invalid");
}

TEST_F(ServiceTest, EventsAndState) {
  const std::string id = create();
  auto r = post("/trials/" + id + "/events", enroll("P1", 1, "2026-01-05T09:00:00Z"));
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 201);
  EXPECT_EQ(body(r).at("seq"), 2);
  EXPECT_EQ(body(r).at("duplicate"), false);

  json tokened = enroll("P2", 1, "2026-01-19T09:00:00Z");
  tokened["dedupe_token"] = "crf-2";
  EXPECT_EQ(post("/trials/" + id + "/events", tokened)->status, 201);
  r = post("/trials/" + id + "/events", tokened);
  EXPECT_EQ(r->status, 200);
  EXPECT_EQ(body(r).at("seq"), 3);
  EXPECT_EQ(body(r).at("duplicate"), true);

  post("/trials/" + id + "/events", {{"kind", "note"}, {"text", "ok"}});
  r = client->Get("/trials/" + id + "/state");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 200);
  EXPECT_EQ(body(r).at("events").size(), 4u);
  EXPECT_EQ(body(r).at("patients").size(), 2u);

  expect_error(post("/trials/" + id + "/events", {{"kind", "dlt-observed"}, {"patient_id", "P7"}}), 409, "conflict");
  expect_error(post("/trials/" + id + "/events", enroll("P3", 9, "2026-02-02T09:00:00Z")), 400, "invalid");
  expect_error(post("/trials/" + id + "/events", {{"kind", "unheard-of"}}), 400, "invalid");
  expect_error(post("/trials/nope/events", enroll("P1", 1, "2026-01-05T09:00:00Z")), 404, "not-found");
  expect_error(client->Get("/trials/nope/state"), 404, "not-found");
  EXPECT_EQ(body(client->Get("/trials/" + id + "/state")).at("events").size(), 4u);
}

TEST_F(ServiceTest, Recommendation) {
  const std::string id = create();
  auto r = client->Get("/trials/" + id + "/recommendation?asOf=2026-01-05T09:00:00Z");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 200);
  EXPECT_EQ(body(r).at("dose"), 1);

  post("/trials/" + id + "/events", enroll("P1", 1, "2026-01-05T09:00:00Z"));
  post("/trials/" + id + "/events", enroll("P2", 1, "2026-01-19T09:00:00Z"));
  r = client->Get("/trials/" + id + "/recommendation?asOf=2026-02-02T09:00:00Z");
  ASSERT_TRUE(r);
  const json j = body(r);
  EXPECT_EQ(j.at("weights").size(), 2u);
  EXPECT_DOUBLE_EQ(j.at("clock").get<double>(), 4.0);
  EXPECT_EQ(j.at("mean_tox").size(), 5u);
  EXPECT_EQ(j.at("hypothetical"), false);
  EXPECT_EQ(j, store->recommendation_json(id, store->recommend(id, conduct::parse_timestamp("2026-02-02T09:00:00Z"))));

  expect_error(client->Get("/trials/" + id + "/recommendation?asOf=2026-01-06T09:00:00Z"), 400, "invalid");
  expect_error(client->Get("/trials/" + id + "/recommendation?asOf=yesterday"), 400, "invalid");
  expect_error(client->Get("/trials/nope/recommendation"), 404, "not-found");
  r = client->Get("/trials/" + id + "/recommendation");
  EXPECT_EQ(r->status, 200);
}

TEST_F(ServiceTest, WhatIf) {
  const std::string id = create();
  post("/trials/" + id + "/events", enroll("P1", 1, "2026-01-05T09:00:00Z"));
  post("/trials/" + id + "/events", enroll("P2", 1, "2026-01-19T09:00:00Z"));
  const std::string state_before = client->Get("/trials/" + id + "/state")->body;

  auto r = post("/trials/" + id + "/what-if",
                {{"asOf", "2026-02-02T09:00:00Z"},
                 {"events", {{{"kind", "dlt-observed"}, {"patient_id", "P2"}, {"at", "2026-02-02T09:00:00Z"}}}}});
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 200);
  const json j = body(r);
  EXPECT_EQ(j.at("hypothetical"), true);
  EXPECT_EQ(j.at("weights")[1].at("status"), "dlt");
  EXPECT_EQ(j.at("weights")[1].at("event_coefficient"), 1.0);
  EXPECT_EQ(client->Get("/trials/" + id + "/state")->body, state_before);

  expect_error(post("/trials/" + id + "/what-if", {{"events", {{{"kind", "dlt-observed"}, {"patient_id", "P9"}}}}}),
               409, "conflict");
  expect_error(post("/trials/" + id + "/what-if", {{"events", 3}}), 400, "invalid");
  expect_error(post("/trials/" + id + "/what-if", {{"when", "now"}}), 400, "invalid");
  expect_error(post("/trials/" + id + "/what-if", json::array()), 400, "invalid");
  expect_error(post("/trials/nope/what-if", json::object()), 404, "not-found");
}

TEST_F(ServiceTest, UnknownRoutesAreJsonNotFound) {
  expect_error(client->Get("/nowhere"), 404, "not-found");
  expect_error(client->Get("/trials/a/b/c"), 404, "not-found");
}

TEST(ServerTest, PortInUseFailsToBind) {
  TempDir dir;
  conduct::EventStore store(dir.path());
  service::Server first(store, {"127.0.0.1", 0, {}});
  ASSERT_TRUE(first.bind());
  service::Server second(store, {"127.0.0.1", first.port(), {}});
  EXPECT_FALSE(second.bind());
}
