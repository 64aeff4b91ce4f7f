#pragma once

// Chart-oriented reductions over stored points.

#include <cstddef>
#include <cstdint>
#include <span>
#include <variant>
#include <vector>

#include "sierra/core/model.hpp"

namespace sierra::viz {

struct SeriesPoint {
  double t = 0.0;
  double y = 0.0;

  bool operator==(const SeriesPoint&) const = default;
};

struct EnvelopePoint {
  double t = 0.0;
  double min = 0.0;
  double max = 0.0;

  bool operator==(const EnvelopePoint&) const = default;
};

enum class DownsampleMode { Mean, MinMax };

using Downsampled = std::variant<std::vector<SeriesPoint>, std::vector<EnvelopePoint>>;

/// Splits `points` into contiguous buckets of ceil(n / n_buckets) points
/// (the last may be short). Each bucket's timestamp is the mean of its
/// members' timestamps. Inputs no longer than `n_buckets` pass through.
Downsampled downsample_buckets(std::span<const Point> points, std::size_t n_buckets, DownsampleMode mode);

enum class DailyStat { Mean, Min, Max, Count };

/// One point per non-empty day, stamped with the day's start in the given
/// UTC offset.
std::vector<Point> aggregate_daily(std::span<const Point> points, DailyStat stat, int tz_offset_minutes);

struct Histogram {
  std::vector<double> edges;
  std::vector<std::uint64_t> counts;
  std::uint64_t dropped = 0;
};

/// Equal-width bins over [lo, hi]; bins are half-open except the last,
/// which is closed. Values outside [lo, hi] (and non-finite values) are
/// counted in `dropped`.
Histogram histogram(std::span<const double> values, std::size_t n_bins, double lo, double hi);

}  // namespace sierra::viz
