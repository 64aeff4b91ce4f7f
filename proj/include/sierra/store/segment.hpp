#pragma once

// Append-only per-(subject, channel) segment files.
//
// Layout: 6-byte header ("VSRA", version 0x01, one reserved zero byte)
// followed by 16-byte little-endian records (t_ms: int64, value: float64).
// A file whose payload length is not a multiple of 16 has a torn tail; the
// partial record is ignored by readers and cut off by the next writer.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "sierra/core/model.hpp"

namespace sierra::store {

inline constexpr std::array<std::uint8_t, 4> kSegmentMagic = {'V', 'S', 'R', 'A'};
inline constexpr std::uint8_t kSegmentVersion = 0x01;
inline constexpr std::size_t kSegmentHeaderSize = 6;
inline constexpr std::size_t kSegmentRecordSize = 16;

std::array<std::uint8_t, kSegmentHeaderSize> segment_header() noexcept;
std::array<std::uint8_t, kSegmentRecordSize> encode_record(const Point& p) noexcept;
Point decode_record(std::span<const std::uint8_t, kSegmentRecordSize> bytes) noexcept;

/// Every complete record in file order. Throws CorruptRecord on a bad header.
std::vector<Point> read_segment(const std::filesystem::path& path);

/// Appends records, creating the file (with header) when absent and
/// truncating any torn tail first. Flushes to stable storage when `sync`.
void append_segment(const std::filesystem::path& path, std::span<const Point> points, bool sync);

}  // namespace sierra::store
