#pragma once

// Users, sessions and the role-based access policy.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

#include "sierra/core/model.hpp"

namespace sierra::auth {

enum class Role { Admin, Expert, Subject };

std::string_view to_string(Role role) noexcept;
std::optional<Role> role_from_string(std::string_view s) noexcept;

inline constexpr std::size_t kMinPasswordLength = 10;

struct User {
  std::string username;
  std::string password_hash;
  Role role = Role::Subject;
  std::optional<SubjectId> linked_subject;  // set iff role == Subject
};

struct Session {
  std::string token;
  std::string username;
  Role role = Role::Subject;
  std::optional<SubjectId> linked_subject;
  std::int64_t expires_at = 0;
};

/// Action classes every route maps onto.
enum class Action {
  ReadSubjectData,       // series, subject record, scores, visualizations
  WriteSubjectData,      // subject creation
  ReadQuestionnaires,    // list, form
  WriteQuestionnaires,   // questionnaire upload
  RespondQuestionnaire,  // submit a response
  ReadPortfolio,
  RunMl,                 // dataset upload, training
  ReadMl,                // job status, confusion matrices
  ManageUsers,
  Logout,
};

inline constexpr Action kAllActions[] = {
    Action::ReadSubjectData, Action::WriteSubjectData, Action::ReadQuestionnaires, Action::WriteQuestionnaires,
    Action::RespondQuestionnaire, Action::ReadPortfolio, Action::RunMl, Action::ReadMl,
    Action::ManageUsers, Action::Logout};
inline constexpr Role kAllRoles[] = {Role::Admin, Role::Expert, Role::Subject};

std::string_view to_string(Action action) noexcept;

enum class Rule { Allow, Deny, OwnSubjectOnly };

/// The access matrix: a rule for every (role, action) pair.
Rule policy(Role role, Action action) noexcept;

struct AccessDecision {
  bool allowed = false;
  std::string reason;
  std::optional<Session> session;  // present whenever the token was valid
};

struct AuthConfig {
  std::int64_t session_ttl_ms = 12LL * 3600 * 1000;
  std::function<std::int64_t()> clock = now_ms;
  std::uint32_t pbkdf2_iterations = 210'000;
};

class AuthService {
 public:
  /// `users_file` is a JSON-lines file; it is created on first write.
  explicit AuthService(std::filesystem::path users_file, AuthConfig config = {});

  /// Throws DuplicateUser, WeakPassword, BadUsername or BadRequest (role /
  /// subject-link mismatch).
  User create_user(const std::string& username, std::string_view password, Role role,
                   std::optional<SubjectId> linked_subject = std::nullopt);

  /// Throws AuthFailed with the same message for unknown users and wrong
  /// passwords.
  Session authenticate(const std::string& username, std::string_view password);

  void logout(const std::string& token);

  AccessDecision check_access(const std::string& token, Action action,
                              const std::optional<SubjectId>& resource) const;

  std::optional<User> find_user(const std::string& username) const;
  std::size_t user_count() const;

 private:
  std::filesystem::path users_file_;
  AuthConfig config_;
  mutable std::mutex users_mutex_;
  std::map<std::string, User> users_;
  mutable std::shared_mutex sessions_mutex_;
  std::map<std::string, Session> sessions_;
};

}  // namespace sierra::auth
