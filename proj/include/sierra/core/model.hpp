#pragma once

// Shared vocabulary: identifiers, samples, series and day bucketing.

#include <compare>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sierra/core/error.hpp"

namespace sierra {

/// Largest exclusive timestamp accepted (2^53 ms keeps every timestamp exact
/// as a double on the wire).
inline constexpr std::int64_t kMaxTimestampMs = std::int64_t{1} << 53;
inline constexpr std::int64_t kMsPerDay = 86'400'000;

namespace detail {
bool is_valid_entity_id(std::string_view s) noexcept;
bool is_valid_channel_name(std::string_view s) noexcept;
}  // namespace detail

/// Validated string identifier. Construction throws `Error` with the tag's
/// error code when the text does not satisfy the tag's grammar.
template <class Tag>
class Identifier {
 public:
  Identifier() = default;
  explicit Identifier(std::string value) : value_(std::move(value)) {
    if (!Tag::valid(value_)) {
      throw Error(Tag::error, std::string(Tag::kind) + " '" + value_ + "' is not valid");
    }
  }

  static std::optional<Identifier> parse(std::string_view text) {
    if (!Tag::valid(text)) return std::nullopt;
    return Identifier(std::string(text));
  }

  const std::string& str() const noexcept { return value_; }
  bool empty() const noexcept { return value_.empty(); }

  friend auto operator<=>(const Identifier&, const Identifier&) = default;

 private:
  std::string value_;
};

// Subject and device ids become path components, so they exclude separators.
struct SubjectTag {
  static constexpr std::string_view kind = "subject id";
  static constexpr ErrorCode error = ErrorCode::BadIdentifier;
  static bool valid(std::string_view s) noexcept { return detail::is_valid_entity_id(s); }
};
struct DeviceTag {
  static constexpr std::string_view kind = "device id";
  static constexpr ErrorCode error = ErrorCode::BadIdentifier;
  static bool valid(std::string_view s) noexcept { return detail::is_valid_entity_id(s); }
};
struct ChannelTag {
  static constexpr std::string_view kind = "channel";
  static constexpr ErrorCode error = ErrorCode::BadChannelName;
  static bool valid(std::string_view s) noexcept { return detail::is_valid_channel_name(s); }
};

using SubjectId = Identifier<SubjectTag>;
using DeviceId = Identifier<DeviceTag>;
using ChannelId = Identifier<ChannelTag>;

struct SubjectRecord {
  SubjectId id;
  std::string cohort;
  std::map<std::string, std::string> phi;
  std::int64_t created_at = 0;

  bool operator==(const SubjectRecord&) const = default;
};

/// A sample as received from a device, before validation.
struct RawSample {
  std::string channel;
  std::int64_t t_ms = 0;
  double value = 0.0;
};

struct Sample {
  ChannelId channel;
  std::int64_t t_ms = 0;
  double value = 0.0;

  RawSample raw() const { return {channel.str(), t_ms, value}; }
  bool operator==(const Sample&) const = default;
};

struct Point {
  std::int64_t t_ms = 0;
  double value = 0.0;

  bool operator==(const Point&) const = default;
};

struct TimeSeries {
  SubjectId subject;
  ChannelId channel;
  std::vector<Point> points;
};

/// Returns the first invariant a raw sample violates, if any.
std::optional<ErrorCode> check_sample(const RawSample& s) noexcept;

/// Throws `Error` naming the violated invariant.
Sample validate_sample(const RawSample& s);

/// floor((t_ms + tz_offset_minutes * 60000) / 86400000)
std::int64_t day_bucket(std::int64_t t_ms, int tz_offset_minutes) noexcept;

/// Epoch-ms start of the given day index in the given offset.
std::int64_t day_start_ms(std::int64_t day_index, int tz_offset_minutes) noexcept;

std::int64_t now_ms();

}  // namespace sierra

template <class Tag>
struct std::hash<sierra::Identifier<Tag>> {
  std::size_t operator()(const sierra::Identifier<Tag>& id) const noexcept {
    return std::hash<std::string>{}(id.str());
  }
};
