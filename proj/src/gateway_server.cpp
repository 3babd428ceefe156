#include "swarmfield/gateway_server.hpp"

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <future>
#include <list>
#include <mutex>
#include <string>
#include <thread>

#include <boost/asio/connect.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include "swarmfield/llm_http.hpp"

namespace swarmfield {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;

namespace {

using Request = http::request<http::string_body>;
using Response = http::response<http::string_body>;

Response json_response(const Request& req, http::status status, const nlohmann::json& body) {
  Response res{status, req.version()};
  res.set(http::field::content_type, "application/json");
  res.keep_alive(req.keep_alive());
  res.body() = body.dump();
  res.prepare_payload();
  return res;
}

Response error_response(const Request& req, http::status status, const std::string& code,
                        const std::string& message) {
  return json_response(req, status, {{"error", code}, {"message", message}});
}

std::string query_param(std::string_view target, std::string_view key) {
  const auto q = target.find('?');
  if (q == std::string_view::npos) return {};
  auto rest = target.substr(q + 1);
  while (!rest.empty()) {
    const auto amp = rest.find('&');
    const auto pair = rest.substr(0, amp);
    const auto eq = pair.find('=');
    if (pair.substr(0, eq) == key && eq != std::string_view::npos)
      return std::string(pair.substr(eq + 1));
    if (amp == std::string_view::npos) break;
    rest = rest.substr(amp + 1);
  }
  return {};
}

std::string_view path_of(std::string_view target) {
  return target.substr(0, target.find('?'));
}

std::string target_of(const Request& req) {
  const auto t = req.target();
  return std::string(t.data(), t.size());
}

}  // namespace

struct GatewayServer::Impl {
  struct Connection {
    std::shared_ptr<tcp::socket> socket;
    std::shared_ptr<std::atomic<bool>> done;
    std::thread thread;
  };

  explicit Impl(GatewayConfig c) : config(std::move(c)), session(config), acceptor(ioc) {
    session.set_transport_factory([] { return std::make_shared<HttpChatTransport>(); });
  }

  GatewayConfig config;
  Session session;
  ScenarioRunner runner;
  asio::io_context ioc;
  tcp::acceptor acceptor;
  std::uint16_t bound_port = 0;
  std::atomic<bool> stopping{false};
  std::thread accept_thread;
  std::mutex conn_mu;
  std::list<Connection> connections;
  std::mutex wait_mu;
  std::condition_variable wait_cv;
  bool stopped = false;

  void reap_finished() {
    std::lock_guard lock(conn_mu);
    for (auto it = connections.begin(); it != connections.end();) {
      if (it->done->load()) {
        it->thread.join();
        it = connections.erase(it);
      } else {
        ++it;
      }
    }
  }

  void accept_loop() {
    while (!stopping.load()) {
      auto socket = std::make_shared<tcp::socket>(ioc);
      beast::error_code ec;
      acceptor.accept(*socket, ec);
      if (stopping.load()) break;
      if (ec) continue;
      reap_finished();
      auto done = std::make_shared<std::atomic<bool>>(false);
      std::lock_guard lock(conn_mu);
      connections.push_back({socket, done, std::thread([this, socket, done] {
                               serve(*socket);
                               done->store(true);
                             })});
    }
  }

  bool authorized(const Request& req) const {
    if (config.token.empty()) return true;
    const auto it = req.find(http::field::authorization);
    return it != req.end() && it->value() == "Bearer " + config.token;
  }

  void serve(tcp::socket& socket) {
    beast::flat_buffer buffer;
    beast::error_code ec;
    for (;;) {
      Request req;
      http::read(socket, buffer, req, ec);
      if (ec) break;
      if (websocket::is_upgrade(req) && path_of(target_of(req)) == "/api/stream") {
        if (!authorized(req)) {
          http::write(socket, error_response(req, http::status::unauthorized, "Unauthorized",
                                             "missing or wrong bearer token"), ec);
          break;
        }
        stream(socket, req);
        break;
      }
      Response res = route(req);
      http::write(socket, res, ec);
      if (ec || !res.keep_alive()) break;
    }
    socket.shutdown(tcp::socket::shutdown_both, ec);
  }

  void stream(tcp::socket& socket, const Request& req) {
    websocket::stream<tcp::socket&> ws(socket);
    beast::error_code ec;
    ws.accept(req, ec);
    if (ec) return;
    ws.text(true);
    double rate = 0.0;
    if (auto r = query_param(target_of(req), "rate"); !r.empty()) {
      try {
        rate = std::stod(r);
      } catch (const std::exception&) {
        rate = 0.0;
      }
    }
    const auto stride = stream_stride(session.tick_rate(), rate);
    auto& bus = session.bus();
    std::uint64_t last = bus.last_seq();
    while (!stopping.load()) {
      auto frame = bus.next(last, stride, std::chrono::milliseconds(1000));
      if (frame) {
        last = frame->seq;
        ws.write(asio::buffer(*frame->data), ec);
      } else if (bus.closed()) {
        break;
      } else if (session.status() == RunStatus::idle) {
        ws.write(asio::buffer(status_frame(RunStatus::idle, session.session_id())), ec);
      }
      if (ec) return;
      // Client frames are ignored, but reading them answers a close handshake.
      if (socket.available(ec) > 0) {
        beast::flat_buffer incoming;
        ws.read(incoming, ec);
        if (ec) return;
      }
    }
    ws.close(websocket::close_code::going_away, ec);
  }

  Response route(const Request& req) {
    if (!authorized(req))
      return error_response(req, http::status::unauthorized, "Unauthorized",
                            "missing or wrong bearer token");
    const std::string path(path_of(target_of(req)));
    const auto method = req.method();
    try {
      if (path == "/api/session") {
        if (method == http::verb::get) return json_response(req, http::status::ok, session.describe());
        if (method == http::verb::post) return start_session(req);
        if (method == http::verb::delete_) {
          session.stop();
          return json_response(req, http::status::ok, session.describe());
        }
        return error_response(req, http::status::method_not_allowed, "MethodNotAllowed", path);
      }
      if (path == "/api/command") {
        if (method != http::verb::post)
          return error_response(req, http::status::method_not_allowed, "MethodNotAllowed", path);
        return command(req);
      }
      if (path == "/api/scenario") {
        if (method != http::verb::post)
          return error_response(req, http::status::method_not_allowed, "MethodNotAllowed", path);
        const auto body = parse_body(req);
        const auto handle = runner.start(scenario_from_request(body));
        return json_response(req, http::status::accepted, {{"handle", handle}});
      }
      if (path.starts_with("/api/report/")) {
        if (method != http::verb::get)
          return error_response(req, http::status::method_not_allowed, "MethodNotAllowed", path);
        const auto id = path.substr(std::string_view("/api/report/").size());
        std::uint64_t handle = 0;
        try {
          handle = std::stoull(id);
        } catch (const std::exception&) {
          return error_response(req, http::status::not_found, "UnknownHandle", id);
        }
        const auto report = runner.get(handle);
        if (!report) return error_response(req, http::status::not_found, "UnknownHandle", id);
        if (report->contains("status")) return json_response(req, http::status::accepted, *report);
        if (report->contains("error"))
          return json_response(req, http::status::unprocessable_entity, *report);
        return json_response(req, http::status::ok, *report);
      }
      return error_response(req, http::status::not_found, "NotFound", path);
    } catch (const UnknownScenario& e) {
      return error_response(req, http::status::not_found, e.code(), e.what());
    } catch (const SessionIdle& e) {
      return error_response(req, http::status::conflict, e.code(), e.what());
    } catch (const Error& e) {
      return error_response(req, http::status::bad_request, e.code(), e.what());
    } catch (const nlohmann::json::exception& e) {
      return error_response(req, http::status::bad_request, "InvalidRequest", e.what());
    }
  }

  static nlohmann::json parse_body(const Request& req) {
    if (req.body().empty()) return nlohmann::json::object();
    auto j = nlohmann::json::parse(req.body(), nullptr, false);
    if (j.is_discarded()) throw InvalidConfig("request body is not valid JSON");
    return j;
  }

  Response start_session(const Request& req) {
    const auto body = parse_body(req);
    SimConfig sim;
    if (body.contains("name") || body.contains("scenario")) {
      sim = scenario_from_request(body);
    } else {
      sim.name = "session";
      sim.n_agents = body.value("n_agents", std::size_t{10});
    }
    session.start(std::move(sim));
    return json_response(req, http::status::created, session.describe());
  }

  Response command(const Request& req) {
    const auto body = parse_body(req);
    PlanCommand cmd;
    try {
      cmd = plan_command_from_json(body);
    } catch (const InvalidScenario& e) {
      return error_response(req, http::status::bad_request, "InvalidCommand", e.what());
    }
    auto fut = session.submit(std::move(cmd));
    const double budget = (config.endpoint ? config.endpoint->timeout_s : 0.0) + 10.0;
    if (fut.wait_for(std::chrono::duration<double>(budget)) != std::future_status::ready)
      return error_response(req, http::status::gateway_timeout, "PlannerTimeout",
                            "no plan within the planner budget");
    try {
      return json_response(req, http::status::ok, plan_summary(fut.get()));
    } catch (const std::future_error&) {
      return error_response(req, http::status::service_unavailable, "SessionStopped",
                            "the session ended before the command was planned");
    }
  }
};

GatewayServer::GatewayServer(GatewayConfig config) : impl_(std::make_unique<Impl>(std::move(config))) {}

GatewayServer::~GatewayServer() { stop(); }

void GatewayServer::start() {
  auto& i = *impl_;
  const tcp::endpoint ep(asio::ip::make_address(i.config.host), i.config.port);
  i.acceptor.open(ep.protocol());
  i.acceptor.set_option(asio::socket_base::reuse_address(true));
  i.acceptor.bind(ep);
  i.acceptor.listen();
  i.bound_port = i.acceptor.local_endpoint().port();
  i.accept_thread = std::thread([&i] { i.accept_loop(); });
}

std::uint16_t GatewayServer::port() const { return impl_->bound_port; }

void GatewayServer::wait() {
  std::unique_lock lock(impl_->wait_mu);
  impl_->wait_cv.wait(lock, [&] { return impl_->stopped; });
}

void GatewayServer::stop() {
  auto& i = *impl_;
  if (i.stopping.exchange(true)) return;
  if (i.accept_thread.joinable()) {
    // Wake the blocking accept with a throwaway connection.
    beast::error_code ec;
    tcp::socket poke(i.ioc);
    poke.connect({i.acceptor.local_endpoint().address(), i.bound_port}, ec);
    i.accept_thread.join();
    i.acceptor.close(ec);
  }
  i.session.bus().close();
  i.session.stop();
  {
    std::lock_guard lock(i.conn_mu);
    for (auto& c : i.connections) {
      beast::error_code ec;
      c.socket->shutdown(tcp::socket::shutdown_both, ec);
    }
  }
  for (auto& c : i.connections) c.thread.join();
  i.connections.clear();
  {
    std::lock_guard lock(i.wait_mu);
    i.stopped = true;
  }
  i.wait_cv.notify_all();
}

Session& GatewayServer::session() { return impl_->session; }

}  // namespace swarmfield
