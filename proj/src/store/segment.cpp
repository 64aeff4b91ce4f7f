#include "sierra/store/segment.hpp"

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <bit>
#include <cerrno>
#include <cstring>
#include <fstream>
#include <iterator>

namespace sierra::store {
namespace {

void put_le64(std::uint64_t v, std::uint8_t* out) noexcept {
  for (int i = 0; i < 8; ++i) out[i] = static_cast<std::uint8_t>(v >> (8 * i));
}

std::uint64_t get_le64(const std::uint8_t* in) noexcept {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t{in[i]} << (8 * i);
  return v;
}

class Fd {
 public:
  explicit Fd(int fd) : fd_(fd) {}
  Fd(const Fd&) = delete;
  Fd& operator=(const Fd&) = delete;
  ~Fd() {
    if (fd_ >= 0) ::close(fd_);
  }
  int get() const noexcept { return fd_; }

 private:
  int fd_;
};

[[noreturn]] void io_fail(const std::string& what, const std::filesystem::path& path) {
  throw Error(ErrorCode::Io, what + " '" + path.string() + "': " + std::strerror(errno));
}

void write_all(int fd, const std::uint8_t* data, std::size_t n, const std::filesystem::path& path) {
  while (n > 0) {
    const ssize_t w = ::write(fd, data, n);
    if (w < 0) {
      if (errno == EINTR) continue;
      io_fail("write failed for", path);
    }
    data += w;
    n -= static_cast<std::size_t>(w);
  }
}

}  // namespace

std::array<std::uint8_t, kSegmentHeaderSize> segment_header() noexcept {
  return {kSegmentMagic[0], kSegmentMagic[1], kSegmentMagic[2], kSegmentMagic[3], kSegmentVersion, 0};
}

std::array<std::uint8_t, kSegmentRecordSize> encode_record(const Point& p) noexcept {
  std::array<std::uint8_t, kSegmentRecordSize> out{};
  put_le64(static_cast<std::uint64_t>(p.t_ms), out.data());
  put_le64(std::bit_cast<std::uint64_t>(p.value), out.data() + 8);
  return out;
}

Point decode_record(std::span<const std::uint8_t, kSegmentRecordSize> bytes) noexcept {
  return {static_cast<std::int64_t>(get_le64(bytes.data())), std::bit_cast<double>(get_le64(bytes.data() + 8))};
}

std::vector<Point> read_segment(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open segment '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  // A header still being written by a concurrent creator reads as empty.
  if (bytes.size() < kSegmentHeaderSize) return {};
  const auto header = segment_header();
  if (!std::equal(header.begin(), header.begin() + 5, bytes.begin())) {
    throw Error(ErrorCode::CorruptRecord, "segment '" + path.string() + "' has a bad header");
  }
  const std::size_t n = (bytes.size() - kSegmentHeaderSize) / kSegmentRecordSize;
  std::vector<Point> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint8_t* rec = bytes.data() + kSegmentHeaderSize + i * kSegmentRecordSize;
    out.push_back(decode_record(std::span<const std::uint8_t, kSegmentRecordSize>(rec, kSegmentRecordSize)));
  }
  return out;
}

void append_segment(const std::filesystem::path& path, std::span<const Point> points, bool sync) {
  Fd fd(::open(path.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0600));
  if (fd.get() < 0) io_fail("cannot open segment", path);

  struct stat st {};
  if (::fstat(fd.get(), &st) != 0) io_fail("cannot stat segment", path);
  auto size = static_cast<std::size_t>(st.st_size);

  if (size < kSegmentHeaderSize) {
    if (::ftruncate(fd.get(), 0) != 0) io_fail("cannot truncate segment", path);
    const auto header = segment_header();
    if (::lseek(fd.get(), 0, SEEK_SET) < 0) io_fail("cannot seek segment", path);
    write_all(fd.get(), header.data(), header.size(), path);
    size = kSegmentHeaderSize;
  } else {
    const std::size_t torn = (size - kSegmentHeaderSize) % kSegmentRecordSize;
    if (torn != 0) {
      size -= torn;
      if (::ftruncate(fd.get(), static_cast<off_t>(size)) != 0) io_fail("cannot truncate segment", path);
    }
  }
  if (::lseek(fd.get(), static_cast<off_t>(size), SEEK_SET) < 0) io_fail("cannot seek segment", path);

  std::vector<std::uint8_t> buf;
  buf.reserve(points.size() * kSegmentRecordSize);
  for (const Point& p : points) {
    const auto rec = encode_record(p);
    buf.insert(buf.end(), rec.begin(), rec.end());
  }
  write_all(fd.get(), buf.data(), buf.size(), path);
  if (sync && ::fdatasync(fd.get()) != 0) io_fail("fdatasync failed for", path);
}

}  // namespace sierra::store
