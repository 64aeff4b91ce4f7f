#include "sierra/api/service.hpp"

#include <sys/socket.h>

#include <httplib.h>

namespace sierra::api {

namespace {

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

void serve(Api& api, const httplib::Request& req, httplib::Response& res) {
  ApiRequest ar;
  ar.method = req.method;
  ar.path = req.path;
  for (const auto& [k, v] : req.headers) ar.headers[lower(k)] = v;
  for (const auto& [k, v] : req.params) ar.query.emplace(k, v);
  ar.body = req.body;
  const ApiResponse out = api.handle(ar);
  res.status = out.status;
  res.set_content(out.body.dump(), "application/json");
}

}  // namespace

Service::~Service() { stop(); }

void Service::stop() {
  if (server_) server_->stop();
  if (listener_.joinable()) listener_.join();
  ready_ = false;
}

std::unique_ptr<Service> compose_service(ServiceConfig cfg) {
  std::optional<crypto::MasterKey> key = crypto::MasterKey::from_env(cfg.master_key_env.c_str());
  if (cfg.enable_phi && !key) {
    throw Error(ErrorCode::ConfigError, "master key missing: set " + cfg.master_key_env + " (64 hex characters)");
  }
  std::unique_ptr<Service> svc(new Service());
  svc->api_ = std::make_unique<Api>(cfg, std::move(key));
  svc->server_ = std::make_unique<httplib::Server>();
  auto& server = *svc->server_;
  // Default options include SO_REUSEPORT, which would let a second process
  // silently share the port.
  server.set_socket_options([](socket_t sock) {
    int yes = 1;
    ::setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
  });
  Api* api = svc->api_.get();
  auto handler = [api](const httplib::Request& req, httplib::Response& res) { serve(*api, req, res); };
  server.Get(".*", handler);
  server.Post(".*", handler);
  server.Put(".*", handler);
  server.Delete(".*", handler);
  server.Patch(".*", handler);

  int port = cfg.port;
  if (port == 0) {
    port = server.bind_to_any_port(cfg.bind_host);
    if (port < 0) throw Error(ErrorCode::PortInUse, "could not bind " + cfg.bind_host);
  } else if (!server.bind_to_port(cfg.bind_host, port)) {
    throw Error(ErrorCode::PortInUse, "port " + std::to_string(port) + " on " + cfg.bind_host + " is not available");
  }
  svc->port_ = port;
  Service* raw = svc.get();
  svc->listener_ = std::thread([raw] { raw->server_->listen_after_bind(); });
  server.wait_until_ready();
  svc->ready_ = true;
  return svc;
}

}  // namespace sierra::api
