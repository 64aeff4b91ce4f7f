#include "sierra/viz/registry.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <set>
#include <sstream>

#include "sierra/store/store.hpp"

namespace sierra::viz {
namespace {

std::string_view to_string(ParamType t) noexcept {
  switch (t) {
    case ParamType::String: return "string";
    case ParamType::Int: return "int";
    case ParamType::Float: return "float";
    case ParamType::Enum: return "enum";
  }
  return "string";
}

std::optional<std::int64_t> parse_int(const std::string& s) {
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

std::optional<double> parse_float(const std::string& s) {
  if (s.empty()) return std::nullopt;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

bool in_bounds(const ParamSpec& spec, double v, std::string& why) {
  if ((spec.min && v < *spec.min) || (spec.max && v > *spec.max)) {
    std::ostringstream msg;
    msg << "must lie in [" << (spec.min ? *spec.min : -HUGE_VAL) << ", " << (spec.max ? *spec.max : HUGE_VAL) << "]";
    why = msg.str();
    return false;
  }
  return true;
}

std::optional<ParamValue> convert(const ParamSpec& spec, const std::string& text, std::string& why) {
  switch (spec.type) {
    case ParamType::String:
      if (text.empty()) {
        why = "must not be empty";
        return std::nullopt;
      }
      return ParamValue{text};
    case ParamType::Int:
      if (auto v = parse_int(text)) {
        if (in_bounds(spec, static_cast<double>(*v), why)) return ParamValue{*v};
        return std::nullopt;
      }
      why = "expected an integer";
      return std::nullopt;
    case ParamType::Float:
      if (auto v = parse_float(text)) {
        if (in_bounds(spec, *v, why)) return ParamValue{*v};
        return std::nullopt;
      }
      why = "expected a finite number";
      return std::nullopt;
    case ParamType::Enum:
      if (std::find(spec.choices.begin(), spec.choices.end(), text) != spec.choices.end()) return ParamValue{text};
      why = "expected one of the declared choices";
      return std::nullopt;
  }
  return std::nullopt;
}

}  // namespace

const std::string& Params::str(const std::string& name) const { return std::get<std::string>(values_.at(name)); }
std::int64_t Params::integer(const std::string& name) const { return std::get<std::int64_t>(values_.at(name)); }
double Params::real(const std::string& name) const { return std::get<double>(values_.at(name)); }
std::optional<double> Params::maybe_real(const std::string& name) const {
  auto it = values_.find(name);
  if (it == values_.end()) return std::nullopt;
  return std::get<double>(it->second);
}

std::string_view to_string(StreamKind kind) noexcept {
  switch (kind) {
    case StreamKind::Series: return "series";
    case StreamKind::MultiSeries: return "multiseries";
    case StreamKind::Table: return "table";
    case StreamKind::Histogram: return "histogram";
  }
  return "series";
}

nlohmann::json to_json(const DataStream& stream) {
  return {{"kind", to_string(stream.kind)}, {"meta", stream.meta}, {"payload", stream.payload}};
}

nlohmann::json to_json(const PluginDescriptor& d) {
  nlohmann::json schema = nlohmann::json::array();
  for (const auto& p : d.param_schema) {
    nlohmann::json entry = {{"name", p.name},
                            {"type", to_string(p.type)},
                            {"required", p.required},
                            {"description", p.description}};
    entry["default"] = p.default_value ? nlohmann::json(*p.default_value) : nlohmann::json(nullptr);
    if (p.type == ParamType::Enum) entry["choices"] = p.choices;
    if (p.min) entry["min"] = *p.min;
    if (p.max) entry["max"] = *p.max;
    schema.push_back(std::move(entry));
  }
  return {{"id", d.id}, {"name", d.name}, {"description", d.description}, {"param_schema", std::move(schema)}};
}

const std::vector<ParamSpec>& window_params() {
  static const std::vector<ParamSpec> params = {
      {"subject", ParamType::String, true, std::nullopt, {}, "Subject whose data is shown"},
      {"channel", ParamType::String, true, std::nullopt, {}, "Sensor channel"},
      {"t0", ParamType::Int, false, "0", {}, "Window start, epoch ms (inclusive)", 0.0, kMaxTimestampMs},
      {"t1", ParamType::Int, false, std::to_string(kMaxTimestampMs), {}, "Window end, epoch ms (exclusive)", 0.0, kMaxTimestampMs},
  };
  return params;
}

void PluginRegistry::register_plugin(PluginDescriptor descriptor, Transform transform) {
  std::vector<ErrorDetail> problems;
  std::set<std::string> names;
  for (const auto& w : window_params()) names.insert(w.name);
  for (const auto& p : descriptor.param_schema) {
    if (!names.insert(p.name).second) problems.push_back({p.name, ErrorCode::BadParams, "duplicate or reserved name"});
    if (p.required && p.default_value) problems.push_back({p.name, ErrorCode::BadParams, "required param has a default"});
    if (p.type == ParamType::Enum && p.choices.empty()) problems.push_back({p.name, ErrorCode::BadParams, "enum without choices"});
  }
  if (descriptor.id.empty()) problems.push_back({"id", ErrorCode::BadParams, "plugin id is empty"});
  if (!transform) problems.push_back({"transform", ErrorCode::BadParams, "plugin has no transform"});
  if (!problems.empty()) {
    throw Error(ErrorCode::BadParams, "plugin '" + descriptor.id + "' has an invalid descriptor", std::move(problems));
  }

  descriptor.param_schema.insert(descriptor.param_schema.begin(), window_params().begin(), window_params().end());
  std::unique_lock lock(mutex_);
  if (plugins_.count(descriptor.id)) {
    throw Error(ErrorCode::DuplicatePluginId, "plugin '" + descriptor.id + "' is already registered");
  }
  std::string id = descriptor.id;
  plugins_.emplace(std::move(id), Entry{std::move(descriptor), std::move(transform)});
}

std::vector<PluginDescriptor> PluginRegistry::list_portfolio() const {
  std::shared_lock lock(mutex_);
  std::vector<PluginDescriptor> out;
  out.reserve(plugins_.size());
  for (const auto& [_, e] : plugins_) out.push_back(e.descriptor);  // std::map iterates in id order
  return out;
}

bool PluginRegistry::contains(const std::string& id) const {
  std::shared_lock lock(mutex_);
  return plugins_.count(id) > 0;
}

const PluginRegistry::Entry& PluginRegistry::entry(const std::string& id) const {
  std::shared_lock lock(mutex_);
  auto it = plugins_.find(id);
  if (it == plugins_.end()) throw Error(ErrorCode::UnknownPlugin, "no plugin named '" + id + "'");
  return it->second;
}

Params PluginRegistry::resolve_params(const std::string& plugin_id,
                                      const std::map<std::string, std::string>& raw) const {
  const Entry& e = entry(plugin_id);
  std::vector<ErrorDetail> problems;
  Params out;
  for (const auto& spec : e.descriptor.param_schema) {
    auto it = raw.find(spec.name);
    std::optional<std::string> text;
    if (it != raw.end()) {
      text = it->second;
    } else if (spec.default_value) {
      text = spec.default_value;
    } else if (spec.required) {
      problems.push_back({spec.name, ErrorCode::BadParams, "required parameter missing"});
      continue;
    } else {
      continue;
    }
    std::string why;
    if (auto v = convert(spec, *text, why)) {
      out.set(spec.name, std::move(*v));
    } else {
      problems.push_back({spec.name, ErrorCode::BadParams, why});
    }
  }
  for (const auto& [name, _] : raw) {
    const auto& schema = e.descriptor.param_schema;
    if (std::none_of(schema.begin(), schema.end(), [&](const ParamSpec& s) { return s.name == name; })) {
      problems.push_back({name, ErrorCode::BadParams, "unknown parameter"});
    }
  }
  if (problems.empty()) {
    if (!SubjectId::parse(out.str("subject"))) problems.push_back({"subject", ErrorCode::BadParams, "not a valid subject id"});
    if (!ChannelId::parse(out.str("channel"))) problems.push_back({"channel", ErrorCode::BadParams, "not a valid channel name"});
    if (out.integer("t0") > out.integer("t1")) problems.push_back({"t1", ErrorCode::BadParams, "window requires t0 <= t1"});
  }
  if (!problems.empty()) {
    throw Error(ErrorCode::BadParams, "invalid parameters for plugin '" + plugin_id + "'", std::move(problems));
  }
  return out;
}

DataStream PluginRegistry::build_data_stream(const std::string& plugin_id,
                                             const std::map<std::string, std::string>& raw,
                                             const store::Store& store) const {
  const Params params = resolve_params(plugin_id, raw);
  const SubjectId subject(params.str("subject"));
  const ChannelId channel(params.str("channel"));
  const auto t0 = params.integer("t0");
  const auto t1 = params.integer("t1");
  const TimeSeries series = store.query_series(subject, channel, t0, t1);

  DataStream stream = entry(plugin_id).transform(series, params);
  stream.meta["plugin"] = plugin_id;
  stream.meta["subject"] = subject.str();
  stream.meta["channel"] = channel.str();
  stream.meta["window"] = {{"t0", t0}, {"t1", t1}};
  return stream;
}

}  // namespace sierra::viz
