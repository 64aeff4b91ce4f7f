#pragma once

// Field-level authenticated encryption (AES-256-GCM) and the small codec
// helpers shared with auth.

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace sierra::crypto {

using Bytes = std::vector<std::uint8_t>;

inline constexpr std::string_view kFieldAlg = "A256GCM";
inline constexpr std::size_t kNonceSize = 12;
inline constexpr std::size_t kTagSize = 16;

class MasterKey {
 public:
  static constexpr std::size_t kSize = 32;

  explicit MasterKey(const std::array<std::uint8_t, kSize>& bytes) : bytes_(bytes) {}

  /// 64 hex characters. Throws ConfigError otherwise.
  static MasterKey from_hex(std::string_view hex);
  /// Reads and decodes the named environment variable; nullopt when unset.
  static std::optional<MasterKey> from_env(const char* name);
  static MasterKey random();

  std::span<const std::uint8_t, kSize> bytes() const noexcept { return bytes_; }

 private:
  std::array<std::uint8_t, kSize> bytes_;
};

struct EncryptedField {
  std::string alg{kFieldAlg};
  std::array<std::uint8_t, kNonceSize> nonce{};
  Bytes ciphertext;  // ciphertext followed by the 16-byte tag
  std::string aad;   // field path the envelope is bound to

  bool operator==(const EncryptedField&) const = default;
};

EncryptedField encrypt_field(std::string_view path, std::string_view plaintext, const MasterKey& key);

/// Authenticates against the envelope's own path. Throws AuthFailure.
std::string decrypt_field(const EncryptedField& ef, const MasterKey& key);

/// As above, but first requires the envelope to be bound to `expected_path`
/// (WrongAad otherwise).
std::string decrypt_field(const EncryptedField& ef, const MasterKey& key, std::string_view expected_path);

nlohmann::json to_json(const EncryptedField& ef);
EncryptedField encrypted_field_from_json(const nlohmann::json& j);

Bytes random_bytes(std::size_t n);

std::string base64_encode(std::span<const std::uint8_t> data);
Bytes base64_decode(std::string_view text);  // throws BadRequest on malformed input
std::string base64url_encode(std::span<const std::uint8_t> data);

std::string hex_encode(std::span<const std::uint8_t> data);

bool constant_time_equal(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b) noexcept;

}  // namespace sierra::crypto
