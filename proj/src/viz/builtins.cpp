#include <algorithm>

#include "sierra/viz/registry.hpp"
#include "sierra/viz/transforms.hpp"

namespace sierra::viz {
namespace {

using nlohmann::json;

json points_json(const std::vector<Point>& points) {
  json out = json::array();
  for (const auto& p : points) out.push_back({p.t_ms, p.value});
  return out;
}

DataStream timeseries_line(const TimeSeries& series, const Params& params) {
  const auto max_points = params.integer("max_points");
  if (max_points < 1) {
    throw Error(ErrorCode::BadParams, "max_points must be >= 1", {{"max_points", ErrorCode::BadParams, "must be >= 1"}});
  }
  const auto mode = params.str("mode") == "minmax" ? DownsampleMode::MinMax : DownsampleMode::Mean;
  const Downsampled reduced = downsample_buckets(series.points, static_cast<std::size_t>(max_points), mode);

  json points = json::array();
  if (const auto* means = std::get_if<std::vector<SeriesPoint>>(&reduced)) {
    for (const auto& p : *means) points.push_back({p.t, p.y});
  } else {
    for (const auto& p : std::get<std::vector<EnvelopePoint>>(reduced)) points.push_back({p.t, p.min, p.max});
  }
  DataStream s;
  s.kind = StreamKind::Series;
  s.payload = {{"mode", params.str("mode")},
               {"source_points", series.points.size()},
               {"points", std::move(points)}};
  return s;
}

DataStream daily_aggregate(const TimeSeries& series, const Params& params) {
  const auto offset = params.integer("tz_offset_minutes");
  if (offset < -1440 || offset > 1440) {
    throw Error(ErrorCode::BadParams, "tz_offset_minutes out of range",
                {{"tz_offset_minutes", ErrorCode::BadParams, "must lie in [-1440, 1440]"}});
  }
  const std::string& name = params.str("stat");
  const DailyStat stat = name == "min"     ? DailyStat::Min
                         : name == "max"   ? DailyStat::Max
                         : name == "count" ? DailyStat::Count
                                           : DailyStat::Mean;
  DataStream s;
  s.kind = StreamKind::Series;
  s.payload = {{"stat", name},
               {"tz_offset_minutes", offset},
               {"points", points_json(aggregate_daily(series.points, stat, static_cast<int>(offset)))}};
  return s;
}

DataStream histogram_plugin(const TimeSeries& series, const Params& params) {
  const auto bins = params.integer("bins");
  if (bins < 1 || bins > 10'000) {
    throw Error(ErrorCode::BadParams, "bins out of range", {{"bins", ErrorCode::BadParams, "must lie in [1, 10000]"}});
  }
  std::vector<double> values;
  values.reserve(series.points.size());
  for (const auto& p : series.points) values.push_back(p.value);

  double lo = 0.0, hi = 1.0;
  if (!values.empty()) {
    auto [mn, mx] = std::minmax_element(values.begin(), values.end());
    lo = *mn;
    hi = *mx;
  }
  lo = params.maybe_real("lo").value_or(lo);
  hi = params.maybe_real("hi").value_or(hi);
  if (lo == hi && !params.has("lo") && !params.has("hi")) {
    lo -= 0.5;
    hi += 0.5;
  }
  if (!(lo < hi)) throw Error(ErrorCode::BadParams, "histogram range requires lo < hi", {{"hi", ErrorCode::BadParams, "must exceed lo"}});

  const Histogram h = histogram(values, static_cast<std::size_t>(bins), lo, hi);
  DataStream s;
  s.kind = StreamKind::Histogram;
  s.payload = {{"edges", h.edges}, {"counts", h.counts}, {"dropped", h.dropped}};
  return s;
}

DataStream sheet(const TimeSeries& series, const Params& params) {
  const auto limit = params.integer("limit");
  if (limit < 1) throw Error(ErrorCode::BadParams, "limit must be >= 1", {{"limit", ErrorCode::BadParams, "must be >= 1"}});
  const std::size_t n = std::min(series.points.size(), static_cast<std::size_t>(limit));
  json rows = json::array();
  for (std::size_t i = 0; i < n; ++i) rows.push_back({series.points[i].t_ms, series.points[i].value});

  DataStream s;
  s.kind = StreamKind::Table;
  s.payload = {{"columns", {"t_ms", "value"}}, {"rows", std::move(rows)}, {"truncated", n < series.points.size()}};
  return s;
}

}  // namespace

void register_builtins(PluginRegistry& registry) {
  registry.register_plugin(
      {"timeseries_line",
       "Time-series line",
       "Line chart of one channel over the selected window, reduced to at most max_points buckets "
       "(bucket means, or a min/max envelope that keeps extremes visible).",
       {{"max_points", ParamType::Int, false, "1000", {}, "Upper bound on plotted points", 1.0, std::nullopt},
        {"mode", ParamType::Enum, false, "mean", {"mean", "minmax"}, "Bucket reduction"}}},
      timeseries_line);
  registry.register_plugin(
      {"daily_aggregate",
       "Daily summary",
       "One value per calendar day in the chosen UTC offset: mean, min, max or sample count.",
       {{"stat", ParamType::Enum, false, "mean", {"mean", "min", "max", "count"}, "Per-day statistic"},
        {"tz_offset_minutes", ParamType::Int, false, "0", {}, "Offset from UTC used to cut days", -1440.0, 1440.0}}},
      daily_aggregate);
  registry.register_plugin(
      {"histogram",
       "Value histogram",
       "Distribution of channel values in equal-width bins; range defaults to the data extent.",
       {{"bins", ParamType::Int, false, "20", {}, "Number of bins", 1.0, 10000.0},
        {"lo", ParamType::Float, false, std::nullopt, {}, "Lower range bound"},
        {"hi", ParamType::Float, false, std::nullopt, {}, "Upper range bound"}}},
      histogram_plugin);
  registry.register_plugin(
      {"sheet",
       "Sheet",
       "Raw samples of the window as a table with columns t_ms and value.",
       {{"limit", ParamType::Int, false, "10000", {}, "Maximum number of rows", 1.0, std::nullopt}}},
      sheet);
}

std::unique_ptr<PluginRegistry> make_builtin_registry() {
  auto registry = std::make_unique<PluginRegistry>();
  register_builtins(*registry);
  return registry;
}

}  // namespace sierra::viz
