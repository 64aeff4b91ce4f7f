#include "sierra/viz/transforms.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace sierra::viz {

Downsampled downsample_buckets(std::span<const Point> points, std::size_t n_buckets, DownsampleMode mode) {
  if (n_buckets == 0) throw Error(ErrorCode::PreconditionViolation, "n_buckets must be >= 1");

  const std::size_t n = points.size();
  const std::size_t size = n <= n_buckets ? 1 : (n + n_buckets - 1) / n_buckets;

  std::vector<SeriesPoint> means;
  std::vector<EnvelopePoint> envelope;
  for (std::size_t start = 0; start < n; start += size) {
    const std::size_t end = std::min(n, start + size);
    double t_sum = 0.0, y_sum = 0.0;
    double y_min = points[start].value, y_max = points[start].value;
    for (std::size_t i = start; i < end; ++i) {
      t_sum += static_cast<double>(points[i].t_ms);
      y_sum += points[i].value;
      y_min = std::min(y_min, points[i].value);
      y_max = std::max(y_max, points[i].value);
    }
    const auto count = static_cast<double>(end - start);
    if (mode == DownsampleMode::Mean) {
      means.push_back({t_sum / count, y_sum / count});
    } else {
      envelope.push_back({t_sum / count, y_min, y_max});
    }
  }
  if (mode == DownsampleMode::Mean) return means;
  return envelope;
}

std::vector<Point> aggregate_daily(std::span<const Point> points, DailyStat stat, int tz_offset_minutes) {
  struct Acc {
    double sum = 0.0;
    double min = 0.0;
    double max = 0.0;
    std::size_t count = 0;
  };
  std::map<std::int64_t, Acc> days;
  for (const Point& p : points) {
    Acc& a = days[day_bucket(p.t_ms, tz_offset_minutes)];
    if (a.count == 0) {
      a.min = a.max = p.value;
    } else {
      a.min = std::min(a.min, p.value);
      a.max = std::max(a.max, p.value);
    }
    a.sum += p.value;
    ++a.count;
  }

  std::vector<Point> out;
  out.reserve(days.size());
  for (const auto& [day, a] : days) {
    double y = 0.0;
    switch (stat) {
      case DailyStat::Mean: y = a.sum / static_cast<double>(a.count); break;
      case DailyStat::Min: y = a.min; break;
      case DailyStat::Max: y = a.max; break;
      case DailyStat::Count: y = static_cast<double>(a.count); break;
    }
    out.push_back({day_start_ms(day, tz_offset_minutes), y});
  }
  return out;
}

Histogram histogram(std::span<const double> values, std::size_t n_bins, double lo, double hi) {
  if (n_bins == 0) throw Error(ErrorCode::PreconditionViolation, "n_bins must be >= 1");
  if (!(lo < hi)) throw Error(ErrorCode::PreconditionViolation, "histogram range requires lo < hi");

  Histogram h;
  h.edges.resize(n_bins + 1);
  const double width = (hi - lo) / static_cast<double>(n_bins);
  for (std::size_t i = 0; i < n_bins; ++i) h.edges[i] = lo + width * static_cast<double>(i);
  h.edges[n_bins] = hi;
  h.counts.assign(n_bins, 0);

  for (double v : values) {
    if (!(v >= lo && v <= hi)) {
      ++h.dropped;
      continue;
    }
    auto idx = static_cast<std::size_t>(std::floor((v - lo) / width));
    idx = std::min(idx, n_bins - 1);
    // Settle rounding against the materialized edges.
    while (idx > 0 && v < h.edges[idx]) --idx;
    while (idx + 1 < n_bins && v >= h.edges[idx + 1]) ++idx;
    ++h.counts[idx];
  }
  return h;
}

}  // namespace sierra::viz
