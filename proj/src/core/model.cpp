#include "sierra/core/model.hpp"

#include <chrono>
#include <cmath>

namespace sierra {
namespace detail {

bool is_valid_entity_id(std::string_view s) noexcept {
  if (s.empty() || s.size() > 128 || s.front() == '.') return false;
  for (char c : s) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                    c == '_' || c == '-' || c == '.';
    if (!ok) return false;
  }
  return true;
}

bool is_valid_channel_name(std::string_view s) noexcept {
  if (s.empty() || s.size() > 64) return false;
  for (char c : s) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_';
    if (!ok) return false;
  }
  return true;
}

}  // namespace detail

std::optional<ErrorCode> check_sample(const RawSample& s) noexcept {
  if (!detail::is_valid_channel_name(s.channel)) return ErrorCode::BadChannelName;
  if (s.t_ms < 0 || s.t_ms >= kMaxTimestampMs) return ErrorCode::TimestampOutOfRange;
  if (!std::isfinite(s.value)) return ErrorCode::NonFiniteValue;
  return std::nullopt;
}

Sample validate_sample(const RawSample& s) {
  if (auto err = check_sample(s)) {
    throw Error(*err, std::string("sample rejected: ") + std::string(to_string(*err)));
  }
  return Sample{ChannelId(s.channel), s.t_ms, s.value};
}

namespace {
std::int64_t floor_div(std::int64_t a, std::int64_t b) noexcept {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}
}  // namespace

std::int64_t day_bucket(std::int64_t t_ms, int tz_offset_minutes) noexcept {
  return floor_div(t_ms + std::int64_t{tz_offset_minutes} * 60'000, kMsPerDay);
}

std::int64_t day_start_ms(std::int64_t day_index, int tz_offset_minutes) noexcept {
  return day_index * kMsPerDay - std::int64_t{tz_offset_minutes} * 60'000;
}

std::int64_t now_ms() {
  using namespace std::chrono;
  return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
}

}  // namespace sierra
