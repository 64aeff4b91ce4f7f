#include "sierra/auth/password.hpp"

#include <openssl/evp.h>

#include <charconv>
#include <vector>

#include "sierra/core/error.hpp"
#include "sierra/store/crypto.hpp"

namespace sierra::auth {
namespace {

constexpr std::string_view kScheme = "pbkdf2-sha256";

crypto::Bytes derive(std::string_view password, std::span<const std::uint8_t> salt, std::uint32_t iterations) {
  crypto::Bytes out(kHashSize);
  if (PKCS5_PBKDF2_HMAC(password.data(), static_cast<int>(password.size()), salt.data(), static_cast<int>(salt.size()),
                        static_cast<int>(iterations), EVP_sha256(), static_cast<int>(out.size()), out.data()) != 1) {
    throw Error(ErrorCode::Io, "PBKDF2 failed");
  }
  return out;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const std::size_t p = s.find(sep, start);
    parts.push_back(s.substr(start, p == std::string_view::npos ? std::string_view::npos : p - start));
    if (p == std::string_view::npos) break;
    start = p + 1;
  }
  return parts;
}

}  // namespace

std::string hash_password(std::string_view password, std::uint32_t iterations) {
  if (iterations == 0) throw Error(ErrorCode::PreconditionViolation, "iteration count must be positive");
  const crypto::Bytes salt = crypto::random_bytes(kSaltSize);
  const crypto::Bytes hash = derive(password, salt, iterations);
  return std::string(kScheme) + "$" + std::to_string(iterations) + "$" + crypto::base64_encode(salt) + "$" +
         crypto::base64_encode(hash);
}

bool verify_password(std::string_view envelope, std::string_view password) {
  const auto parts = split(envelope, '$');
  if (parts.size() != 4 || parts[0] != kScheme) return false;
  std::uint32_t iterations = 0;
  auto [ptr, ec] = std::from_chars(parts[1].data(), parts[1].data() + parts[1].size(), iterations);
  if (ec != std::errc() || ptr != parts[1].data() + parts[1].size() || iterations == 0) return false;
  try {
    const crypto::Bytes salt = crypto::base64_decode(parts[2]);
    const crypto::Bytes expected = crypto::base64_decode(parts[3]);
    if (expected.size() != kHashSize) return false;
    return crypto::constant_time_equal(derive(password, salt, iterations), expected);
  } catch (const Error&) {
    return false;
  }
}

}  // namespace sierra::auth
