#pragma once

// HTTP composition layer. `Api` dispatches transport-neutral requests so the
// route table can be exercised directly; `Service` (service.hpp) puts it
// behind a socket.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sierra/auth/auth.hpp"
#include "sierra/core/model.hpp"
#include "sierra/store/crypto.hpp"
#include "sierra/store/store.hpp"
#include "sierra/viz/registry.hpp"

namespace sierra::api {

inline constexpr std::string_view kDefaultMasterKeyEnv = "SIERRA_MASTER_KEY";

struct ServiceConfig {
  std::string bind_host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  std::filesystem::path data_dir = "data";
  std::int64_t session_ttl_ms = 12LL * 3600 * 1000;
  std::map<std::string, std::string> device_keys;  // key -> device id
  std::string master_key_env{kDefaultMasterKeyEnv};
  bool enable_phi = true;
  store::StoreOptions store_options;
  std::function<std::int64_t()> clock = now_ms;
};

struct ApiRequest {
  std::string method;
  std::string path;
  std::map<std::string, std::string> headers;  // lower-case names
  std::map<std::string, std::string> query;
  std::string body;
};

struct ApiResponse {
  int status = 200;
  nlohmann::json body;
};

enum class Guard { Public, Device, User };

struct RouteInfo {
  std::string method;
  std::string pattern;  // `{name}` segments capture
  Guard guard = Guard::User;
  std::optional<auth::Action> action;
};

/// HTTP status for an error code: validation 400, authentication 401,
/// forbidden 403, missing 404, conflict 409, otherwise 500.
int status_for(ErrorCode code) noexcept;

class MlJobs;

class Api {
 public:
  /// Opens the store under `cfg.data_dir`. Throws ConfigError when the
  /// directory is unusable or PHI endpoints are enabled without a key.
  explicit Api(ServiceConfig cfg, std::optional<crypto::MasterKey> master_key);
  ~Api();
  Api(const Api&) = delete;
  Api& operator=(const Api&) = delete;

  ApiResponse handle(const ApiRequest& request);

  static const std::vector<RouteInfo>& routes();

  store::Store& store() noexcept { return *store_; }
  auth::AuthService& auth() noexcept { return *auth_; }
  viz::PluginRegistry& registry() noexcept { return *registry_; }
  const ServiceConfig& config() const noexcept { return cfg_; }

 private:
  struct Context;
  ApiResponse dispatch(const RouteInfo& route, Context& ctx);

  ServiceConfig cfg_;
  std::optional<crypto::MasterKey> master_key_;
  std::unique_ptr<store::Store> store_;
  std::unique_ptr<auth::AuthService> auth_;
  std::unique_ptr<viz::PluginRegistry> registry_;
  std::unique_ptr<MlJobs> ml_;
};

/// `{ok: true, data}` / `{ok: false, error: {code, message, ...}}`
nlohmann::json ok_body(nlohmann::json data);
nlohmann::json error_body(const Error& e);

}  // namespace sierra::api
