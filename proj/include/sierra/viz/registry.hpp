#pragma once

// Visualization Palette: plugins advertise themselves in the portfolio and
// turn a queried series into a chart-ready data stream.

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "sierra/core/model.hpp"

namespace sierra::store {
class Store;
}

namespace sierra::viz {

enum class ParamType { String, Int, Float, Enum };

struct ParamSpec {
  std::string name;
  ParamType type = ParamType::String;
  bool required = false;
  std::optional<std::string> default_value;
  std::vector<std::string> choices;  // Enum only
  std::string description;
  std::optional<double> min;  // numeric types only, inclusive
  std::optional<double> max;
};

struct PluginDescriptor {
  std::string id;
  std::string name;
  std::string description;
  std::vector<ParamSpec> param_schema;
};

using ParamValue = std::variant<std::string, std::int64_t, double>;

/// Parameters after schema validation and default filling.
class Params {
 public:
  void set(std::string name, ParamValue v) { values_[std::move(name)] = std::move(v); }
  bool has(const std::string& name) const { return values_.count(name) > 0; }
  const std::string& str(const std::string& name) const;
  std::int64_t integer(const std::string& name) const;
  double real(const std::string& name) const;
  std::optional<double> maybe_real(const std::string& name) const;

 private:
  std::map<std::string, ParamValue> values_;
};

enum class StreamKind { Series, MultiSeries, Table, Histogram };

struct DataStream {
  StreamKind kind = StreamKind::Series;
  nlohmann::json meta = nlohmann::json::object();
  nlohmann::json payload = nlohmann::json::object();
};

nlohmann::json to_json(const DataStream& stream);
nlohmann::json to_json(const PluginDescriptor& d);
std::string_view to_string(StreamKind kind) noexcept;

/// Pure plugin body: the queried window plus validated parameters in, the
/// stream payload out.
using Transform = std::function<DataStream(const TimeSeries& series, const Params& params)>;

/// Window parameters every plugin accepts: subject, channel, t0, t1.
const std::vector<ParamSpec>& window_params();

class PluginRegistry {
 public:
  /// Throws DuplicatePluginId, or BadParams when the schema is inconsistent.
  void register_plugin(PluginDescriptor descriptor, Transform transform);

  /// Sorted by id; each schema starts with the window parameters.
  std::vector<PluginDescriptor> list_portfolio() const;

  bool contains(const std::string& id) const;

  /// Validates `raw` against the plugin schema and fills defaults. Throws
  /// UnknownPlugin or BadParams (one detail per offending parameter).
  Params resolve_params(const std::string& plugin_id, const std::map<std::string, std::string>& raw) const;

  /// Queries [t0, t1) from the store and applies the plugin.
  DataStream build_data_stream(const std::string& plugin_id, const std::map<std::string, std::string>& raw,
                               const store::Store& store) const;

 private:
  struct Entry {
    PluginDescriptor descriptor;
    Transform transform;
  };
  const Entry& entry(const std::string& id) const;

  mutable std::shared_mutex mutex_;
  std::map<std::string, Entry> plugins_;
};

/// Registry preloaded with daily_aggregate, histogram, sheet and
/// timeseries_line.
std::unique_ptr<PluginRegistry> make_builtin_registry();
void register_builtins(PluginRegistry& registry);

}  // namespace sierra::viz
