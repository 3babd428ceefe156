#include <gtest/gtest.h>

#include <chrono>
#include <map>
#include <string>
#include <thread>

#include <boost/asio/connect.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>
#include <httplib.h>
#include <nlohmann/json.hpp>

#include "swarmfield/gateway_server.hpp"
#include "swarmfield/llm_http.hpp"

using namespace swarmfield;
using nlohmann::json;
using namespace std::chrono_literals;

namespace {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;

class CannedTransport : public ChatTransport {
public:
  std::string post(const LlmEndpoint&, const std::string&) override {
    return json{{"choices", {{{"message", {{"content", content}}}}}}}.dump();
  }
  std::string content;
};

GatewayConfig local_config() {
  GatewayConfig c;
  c.port = 0;
  return c;
}

json body_of(const httplib::Result& r) { return json::parse(r->body); }

class ServerTest : public ::testing::Test {
protected:
  void start(GatewayConfig config = local_config()) {
    server = std::make_unique<GatewayServer>(std::move(config));
    server->start();
    client = std::make_unique<httplib::Client>("127.0.0.1", server->port());
    client->set_read_timeout(30, 0);
  }

  void TearDown() override {
    if (server) server->stop();
  }

  httplib::Result post(const std::string& path, const json& body) {
    return client->Post(path, body.dump(), "application/json");
  }

  std::unique_ptr<GatewayServer> server;
  std::unique_ptr<httplib::Client> client;
};

}  // namespace

TEST(Stream, StrideFromRequestedRate) {
  EXPECT_EQ(stream_stride(20.0, 5.0), 4u);
  EXPECT_EQ(stream_stride(20.0, 3.0), 7u);
  EXPECT_EQ(stream_stride(20.0, 20.0), 1u);
  EXPECT_EQ(stream_stride(20.0, 50.0), 1u);
  EXPECT_EQ(stream_stride(20.0, 0.0), 1u);
}

TEST(Stream, BusDeliversNewestMatchingFrame) {
  FrameBus bus;
  for (std::uint64_t k = 0; k < 10; ++k) bus.publish(k, "tick " + std::to_string(k));
  auto f = bus.next(0, 4, 0ms);
  ASSERT_TRUE(f);
  EXPECT_EQ(*f->tick, 8u);
  EXPECT_EQ(*f->data, "tick 8");
  EXPECT_FALSE(bus.next(f->seq, 4, 10ms));
  bus.publish(std::nullopt, "status");
  f = bus.next(f->seq, 4, 0ms);
  ASSERT_TRUE(f);
  EXPECT_FALSE(f->tick);
  std::thread closer([&] {
    std::this_thread::sleep_for(20ms);
    bus.close();
  });
  const auto t0 = std::chrono::steady_clock::now();
  EXPECT_FALSE(bus.next(bus.last_seq(), 1, 5000ms));
  EXPECT_LT(std::chrono::steady_clock::now() - t0, 2s);
  closer.join();
}

TEST(Session, CommandsNeedARunningSession) {
  Session s(local_config());
  EXPECT_EQ(s.status(), RunStatus::idle);
  PlanCommand c;
  c.swap = true;
  EXPECT_THROW(s.submit(c), SessionIdle);

  SimConfig sim;
  sim.n_agents = 4;
  s.start(sim);
  EXPECT_EQ(s.status(), RunStatus::running);
  FormationSpec line{Shape::line};
  c = {};
  c.formation = line;
  auto fut = s.submit(c);
  ASSERT_EQ(fut.wait_for(5s), std::future_status::ready);
  const auto e = fut.get();
  EXPECT_EQ(e.status, "adopted");
  EXPECT_EQ(e.source, PlanSource::oracle);
  EXPECT_EQ(s.describe()["last_plan"]["source"], "oracle");
  s.stop();
  EXPECT_EQ(s.status(), RunStatus::idle);
  EXPECT_THROW(s.submit(c), SessionIdle);
}

TEST(Config, BindAndJson) {
  GatewayConfig c;
  c.set_bind("0.0.0.0:9001");
  EXPECT_EQ(c.host, "0.0.0.0");
  EXPECT_EQ(c.port, 9001);
  c.set_bind(":7000");
  EXPECT_EQ(c.host, "0.0.0.0");
  EXPECT_EQ(c.port, 7000);
  EXPECT_THROW(c.set_bind("localhost"), InvalidConfig);
  c.apply_json(json::parse(R"({"mode": "llm", "token": "t", "session_duration": 10})"));
  EXPECT_EQ(c.mode, PlannerMode::llm);
  EXPECT_EQ(c.token, "t");
  EXPECT_THROW(c.apply_json(json::parse(R"({"port": 1})")), InvalidConfig);
}

TEST_F(ServerTest, SessionLifecycleOverHttp) {
  start();
  auto r = client->Get("/api/session");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 200);
  EXPECT_EQ(body_of(r)["run_status"], "idle");

  r = post("/api/command", {{"swap", true}});
  EXPECT_EQ(r->status, 409);
  EXPECT_EQ(body_of(r)["error"], "SessionIdle");

  r = post("/api/session", {{"name", "formation_circle_n10"}});
  ASSERT_EQ(r->status, 201);
  EXPECT_EQ(body_of(r)["scenario"], "formation_circle_n10");

  r = post("/api/command", {{"formation", {{"shape", "circle"}, {"radius", 3.0}, {"altitude", 2.5}}}});
  ASSERT_EQ(r->status, 200);
  const auto plan = body_of(r);
  EXPECT_EQ(plan["status"], "adopted");
  EXPECT_EQ(plan["source"], "oracle");
  EXPECT_EQ(plan["accepted"], true);

  json goals = json::array();
  for (int i = 0; i < 10; ++i) goals.push_back({i == 3 ? 11.0 : 0.9 * i - 4.0, 0.0, 1.0});
  r = post("/api/command", {{"goals", goals}});
  ASSERT_EQ(r->status, 200);
  EXPECT_EQ(body_of(r)["outcome"], "fence_rejected");

  r = post("/api/command", {{"dance", true}});
  EXPECT_EQ(r->status, 400);
  EXPECT_EQ(body_of(r)["error"], "InvalidCommand");

  r = post("/api/session", {{"name", "no_such"}});
  EXPECT_EQ(r->status, 404);

  r = client->Delete("/api/session");
  EXPECT_EQ(r->status, 200);
  EXPECT_EQ(body_of(r)["run_status"], "idle");
  EXPECT_EQ(client->Get("/api/nowhere")->status, 404);
  EXPECT_EQ(client->Put("/api/session", "{}", "application/json")->status, 405);
}

TEST_F(ServerTest, HeadlessScenarioReport) {
  start();
  auto r = post("/api/scenario", {{"name", "formation_cube_n8"}});
  ASSERT_EQ(r->status, 202);
  const auto handle = body_of(r)["handle"].get<std::uint64_t>();
  json report;
  for (int i = 0; i < 200; ++i) {
    r = client->Get("/api/report/" + std::to_string(handle));
    if (r->status == 200) {
      report = body_of(r);
      break;
    }
    EXPECT_EQ(r->status, 202);
    std::this_thread::sleep_for(50ms);
  }
  EXPECT_EQ(report["converged"], true);
  EXPECT_EQ(report["collisions"], 0);
  EXPECT_EQ(client->Get("/api/report/999")->status, 404);
  EXPECT_EQ(client->Get("/api/report/abc")->status, 404);

  r = post("/api/scenario", {{"name", "swap"}, {"n_agents", 3}});
  ASSERT_EQ(r->status, 202);
  const auto odd = body_of(r)["handle"].get<std::uint64_t>();
  for (int i = 0; i < 200; ++i) {
    r = client->Get("/api/report/" + std::to_string(odd));
    if (r->status != 202) break;
    std::this_thread::sleep_for(50ms);
  }
  // a planner failure is part of the report, not a request error
  ASSERT_EQ(r->status, 200);
  EXPECT_EQ(body_of(r)["exit_reason"], "NoValidMatching");
}

TEST_F(ServerTest, BearerToken) {
  auto config = local_config();
  config.token = "s3cret";
  start(config);
  EXPECT_EQ(client->Get("/api/session")->status, 401);
  client->set_bearer_token_auth("s3cret");
  EXPECT_EQ(client->Get("/api/session")->status, 200);
}

TEST_F(ServerTest, LlmModeUsesTheTransport) {
  auto config = local_config();
  config.mode = PlannerMode::llm;
  config.endpoint = LlmEndpoint{"http://127.0.0.1:9/v1/chat/completions", "m", "", 2.0};
  start(config);
  auto canned = std::make_shared<CannedTransport>();
  canned->content = "[[0, 0, 1], [1.5, 0, 1], [3, 0, 1]]";
  server->session().set_transport_factory([canned] { return canned; });
  ASSERT_EQ(post("/api/session", {{"n_agents", 3}})->status, 201);
  auto r = post("/api/command", {{"text", "line up along x"}});
  ASSERT_EQ(r->status, 200);
  EXPECT_EQ(body_of(r)["source"], "llm");
  canned->content = "Sure! Here you go.";
  r = post("/api/command", {{"text", "again"}});
  ASSERT_EQ(r->status, 200);
  EXPECT_EQ(body_of(r)["outcome"], "malformed");
  EXPECT_EQ(body_of(r)["source"], "hold");
}

TEST_F(ServerTest, SubscribersShareFrames) {
  start();
  ASSERT_EQ(post("/api/session", {{"n_agents", 4}})->status, 201);

  auto subscribe = [&](std::map<std::uint64_t, std::string>& frames) {
    asio::io_context ioc;
    websocket::stream<tcp::socket> ws(ioc);
    ws.next_layer().connect({asio::ip::make_address("127.0.0.1"), server->port()});
    ws.handshake("127.0.0.1", "/api/stream?rate=5");
    const auto until = std::chrono::steady_clock::now() + 1500ms;
    while (std::chrono::steady_clock::now() < until) {
      beast::flat_buffer buf;
      ws.read(buf);
      const auto text = beast::buffers_to_string(buf.data());
      const auto j = json::parse(text);
      if (j["type"] == "state") frames[j["tick"].get<std::uint64_t>()] = text;
    }
    ws.close(websocket::close_code::normal);
  };
  std::map<std::uint64_t, std::string> a, b;
  std::thread ta([&] { subscribe(a); });
  std::thread tb([&] { subscribe(b); });
  ta.join();
  tb.join();

  ASSERT_GE(a.size(), 3u);
  int shared = 0;
  for (const auto& [tick, text] : a) {
    EXPECT_EQ(tick % 4, 0u);
    const auto j = json::parse(text);
    EXPECT_EQ(j["positions"].size(), 4u);
    EXPECT_EQ(j["run_status"], "running");
    if (auto it = b.find(tick); it != b.end()) {
      EXPECT_EQ(it->second, text);
      ++shared;
    }
  }
  EXPECT_GE(shared, 2);
}

TEST(HttpTransport, PostsToTheEndpoint) {
  httplib::Server fake;
  std::string seen_auth, seen_body;
  fake.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    seen_auth = req.get_header_value("Authorization");
    seen_body = req.body;
    res.set_content(R"({"choices":[{"message":{"content":"[[0,0,1]]"}}]})", "application/json");
  });
  fake.Post("/broken", [](const httplib::Request&, httplib::Response& res) { res.status = 500; });
  const int port = fake.bind_to_any_port("127.0.0.1");
  std::thread t([&] { fake.listen_after_bind(); });
  fake.wait_until_ready();

  HttpChatTransport http;
  const std::string base = "http://127.0.0.1:" + std::to_string(port);
  LlmEndpoint e{base + "/v1/chat/completions", "m", "key", 5.0};
  const auto reply = http.post(e, "{\"x\":1}");
  EXPECT_EQ(chat_response_content(reply), "[[0,0,1]]");
  EXPECT_EQ(seen_auth, "Bearer key");
  EXPECT_EQ(seen_body, "{\"x\":1}");
  e.url = base + "/broken";
  EXPECT_THROW(http.post(e, "{}"), TransportError);
  fake.stop();
  t.join();
  e.url = base + "/v1/chat/completions";
  EXPECT_THROW(http.post(e, "{}"), TransportError);
  EXPECT_EQ(split_url("https://api.example.com/v1/chat").path, "/v1/chat");
  EXPECT_THROW(split_url("api.example.com"), InvalidConfig);
}
