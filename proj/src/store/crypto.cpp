#include "sierra/store/crypto.hpp"

#include <openssl/crypto.h>
#include <openssl/evp.h>
#include <openssl/rand.h>

#include <cstdlib>
#include <memory>

#include "sierra/core/error.hpp"

namespace sierra::crypto {
namespace {

struct CtxDeleter {
  void operator()(EVP_CIPHER_CTX* ctx) const noexcept { EVP_CIPHER_CTX_free(ctx); }
};
using CipherCtx = std::unique_ptr<EVP_CIPHER_CTX, CtxDeleter>;

CipherCtx new_ctx() {
  CipherCtx ctx(EVP_CIPHER_CTX_new());
  if (!ctx) throw Error(ErrorCode::Io, "EVP_CIPHER_CTX_new failed");
  return ctx;
}

int hex_digit(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

const unsigned char* as_uc(std::string_view s) { return reinterpret_cast<const unsigned char*>(s.data()); }

}  // namespace

MasterKey MasterKey::from_hex(std::string_view hex) {
  if (hex.size() != 2 * kSize) {
    throw Error(ErrorCode::ConfigError, "master key must be 64 hex characters");
  }
  std::array<std::uint8_t, kSize> out{};
  for (std::size_t i = 0; i < kSize; ++i) {
    const int hi = hex_digit(hex[2 * i]);
    const int lo = hex_digit(hex[2 * i + 1]);
    if (hi < 0 || lo < 0) throw Error(ErrorCode::ConfigError, "master key contains a non-hex character");
    out[i] = static_cast<std::uint8_t>((hi << 4) | lo);
  }
  return MasterKey(out);
}

std::optional<MasterKey> MasterKey::from_env(const char* name) {
  const char* value = std::getenv(name);
  if (!value || !*value) return std::nullopt;
  return from_hex(value);
}

MasterKey MasterKey::random() {
  std::array<std::uint8_t, kSize> out{};
  if (RAND_bytes(out.data(), static_cast<int>(out.size())) != 1) throw Error(ErrorCode::Io, "RAND_bytes failed");
  return MasterKey(out);
}

Bytes random_bytes(std::size_t n) {
  Bytes out(n);
  if (n && RAND_bytes(out.data(), static_cast<int>(n)) != 1) throw Error(ErrorCode::Io, "RAND_bytes failed");
  return out;
}

EncryptedField encrypt_field(std::string_view path, std::string_view plaintext, const MasterKey& key) {
  EncryptedField ef;
  ef.aad = std::string(path);
  const Bytes nonce = random_bytes(kNonceSize);
  std::copy(nonce.begin(), nonce.end(), ef.nonce.begin());

  auto ctx = new_ctx();
  int len = 0;
  ef.ciphertext.resize(plaintext.size() + kTagSize);
  bool ok = EVP_EncryptInit_ex(ctx.get(), EVP_aes_256_gcm(), nullptr, nullptr, nullptr) == 1 &&
            EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_SET_IVLEN, kNonceSize, nullptr) == 1 &&
            EVP_EncryptInit_ex(ctx.get(), nullptr, nullptr, key.bytes().data(), ef.nonce.data()) == 1 &&
            EVP_EncryptUpdate(ctx.get(), nullptr, &len, as_uc(path), static_cast<int>(path.size())) == 1 &&
            EVP_EncryptUpdate(ctx.get(), ef.ciphertext.data(), &len, as_uc(plaintext),
                              static_cast<int>(plaintext.size())) == 1;
  int total = len;
  ok = ok && EVP_EncryptFinal_ex(ctx.get(), ef.ciphertext.data() + total, &len) == 1;
  total += len;
  ok = ok && EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_GET_TAG, kTagSize, ef.ciphertext.data() + total) == 1;
  if (!ok) throw Error(ErrorCode::Io, "AES-GCM encryption failed");
  ef.ciphertext.resize(static_cast<std::size_t>(total) + kTagSize);
  return ef;
}

std::string decrypt_field(const EncryptedField& ef, const MasterKey& key) {
  if (ef.alg != kFieldAlg || ef.ciphertext.size() < kTagSize) {
    throw Error(ErrorCode::AuthFailure, "unsupported or truncated envelope");
  }
  const std::size_t ct_len = ef.ciphertext.size() - kTagSize;
  std::string out(ct_len, '\0');
  std::array<std::uint8_t, kTagSize> tag{};
  std::copy(ef.ciphertext.begin() + static_cast<std::ptrdiff_t>(ct_len), ef.ciphertext.end(), tag.begin());

  auto ctx = new_ctx();
  int len = 0;
  bool ok = EVP_DecryptInit_ex(ctx.get(), EVP_aes_256_gcm(), nullptr, nullptr, nullptr) == 1 &&
            EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_SET_IVLEN, kNonceSize, nullptr) == 1 &&
            EVP_DecryptInit_ex(ctx.get(), nullptr, nullptr, key.bytes().data(), ef.nonce.data()) == 1 &&
            EVP_DecryptUpdate(ctx.get(), nullptr, &len, as_uc(ef.aad), static_cast<int>(ef.aad.size())) == 1 &&
            EVP_DecryptUpdate(ctx.get(), reinterpret_cast<unsigned char*>(out.data()), &len, ef.ciphertext.data(),
                              static_cast<int>(ct_len)) == 1 &&
            EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_SET_TAG, kTagSize, tag.data()) == 1;
  if (!ok) throw Error(ErrorCode::AuthFailure, "AES-GCM setup failed");
  int final_len = 0;
  if (EVP_DecryptFinal_ex(ctx.get(), reinterpret_cast<unsigned char*>(out.data()) + len, &final_len) != 1) {
    OPENSSL_cleanse(out.data(), out.size());
    throw Error(ErrorCode::AuthFailure, "envelope failed authentication");
  }
  return out;
}

std::string decrypt_field(const EncryptedField& ef, const MasterKey& key, std::string_view expected_path) {
  if (ef.aad != expected_path) {
    throw Error(ErrorCode::WrongAad, "envelope is bound to '" + ef.aad + "', not '" + std::string(expected_path) + "'");
  }
  return decrypt_field(ef, key);
}

nlohmann::json to_json(const EncryptedField& ef) {
  return {{"alg", ef.alg}, {"nonce", base64_encode(ef.nonce)}, {"ct", base64_encode(ef.ciphertext)}, {"aad", ef.aad}};
}

EncryptedField encrypted_field_from_json(const nlohmann::json& j) {
  EncryptedField ef;
  try {
    ef.alg = j.at("alg").get<std::string>();
    ef.aad = j.at("aad").get<std::string>();
    const Bytes nonce = base64_decode(j.at("nonce").get<std::string>());
    if (nonce.size() != kNonceSize) throw Error(ErrorCode::CorruptRecord, "envelope nonce must be 12 bytes");
    std::copy(nonce.begin(), nonce.end(), ef.nonce.begin());
    ef.ciphertext = base64_decode(j.at("ct").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::CorruptRecord, std::string("malformed envelope: ") + e.what());
  }
  return ef;
}

std::string base64_encode(std::span<const std::uint8_t> data) {
  std::string out(4 * ((data.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), data.data(), static_cast<int>(data.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

Bytes base64_decode(std::string_view text) {
  if (text.size() % 4 != 0) throw Error(ErrorCode::BadRequest, "malformed base64");
  Bytes out(3 * text.size() / 4);
  const int n = EVP_DecodeBlock(out.data(), as_uc(text), static_cast<int>(text.size()));
  if (n < 0) throw Error(ErrorCode::BadRequest, "malformed base64");
  std::size_t len = static_cast<std::size_t>(n);
  // EVP_DecodeBlock counts padding characters as zero bytes.
  if (!text.empty() && text.back() == '=') --len;
  if (text.size() > 1 && text[text.size() - 2] == '=') --len;
  out.resize(len);
  return out;
}

std::string base64url_encode(std::span<const std::uint8_t> data) {
  std::string s = base64_encode(data);
  for (char& c : s) {
    if (c == '+') c = '-';
    else if (c == '/') c = '_';
  }
  while (!s.empty() && s.back() == '=') s.pop_back();
  return s;
}

std::string hex_encode(std::span<const std::uint8_t> data) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * data.size());
  for (std::uint8_t b : data) {
    out.push_back(kHex[b >> 4]);
    out.push_back(kHex[b & 0x0F]);
  }
  return out;
}

bool constant_time_equal(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b) noexcept {
  if (a.size() != b.size()) return false;
  return CRYPTO_memcmp(a.data(), b.data(), a.size()) == 0;
}

}  // namespace sierra::crypto
