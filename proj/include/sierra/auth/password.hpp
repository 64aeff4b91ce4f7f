#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace sierra::auth {

inline constexpr std::uint32_t kPbkdf2Iterations = 210'000;
inline constexpr std::size_t kSaltSize = 16;
inline constexpr std::size_t kHashSize = 32;

/// PBKDF2-HMAC-SHA256 envelope: `pbkdf2-sha256$<iters>$<salt_b64>$<hash_b64>`.
std::string hash_password(std::string_view password, std::uint32_t iterations = kPbkdf2Iterations);

/// Recomputes with the envelope's own salt and iteration count and compares
/// in constant time. Malformed envelopes never verify.
bool verify_password(std::string_view envelope, std::string_view password);

}  // namespace sierra::auth
