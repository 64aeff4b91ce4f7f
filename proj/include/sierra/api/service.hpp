#pragma once

#include <atomic>
#include <memory>
#include <thread>

#include "sierra/api/router.hpp"

namespace httplib {
class Server;
}

namespace sierra::api {

/// A running HTTP service. Stops and joins on destruction.
class Service {
 public:
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  int port() const noexcept { return port_; }
  bool ready() const noexcept { return ready_.load(); }
  Api& api() noexcept { return *api_; }
  void stop();

 private:
  friend std::unique_ptr<Service> compose_service(ServiceConfig cfg);
  Service() = default;

  std::unique_ptr<Api> api_;
  std::unique_ptr<httplib::Server> server_;
  std::thread listener_;
  std::atomic<bool> ready_{false};
  int port_ = 0;
};

/// Resolves the master key from the configured environment variable, opens
/// the store, registers plugins and binds. Throws ConfigError or PortInUse.
std::unique_ptr<Service> compose_service(ServiceConfig cfg);

}  // namespace sierra::api
