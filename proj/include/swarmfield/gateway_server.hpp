#pragma once

// HTTP + WebSocket front end for a Session. Endpoints are documented in
// docs/gateway-protocol.md. Implemented in src/gateway_server.cpp (links
// the swarmfield_gateway library).

#include <cstdint>
#include <memory>

#include "swarmfield/gateway.hpp"

namespace swarmfield {

class GatewayServer {
public:
  explicit GatewayServer(GatewayConfig config);
  ~GatewayServer();

  GatewayServer(const GatewayServer&) = delete;
  GatewayServer& operator=(const GatewayServer&) = delete;

  /// Binds and starts accepting. Port 0 picks a free port; see port().
  void start();
  std::uint16_t port() const;
  /// Blocks until stop() is called from another thread or a signal handler.
  void wait();
  void stop();

  Session& session();

private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace swarmfield
