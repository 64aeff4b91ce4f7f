#include "sierra/auth/auth.hpp"

#include <fstream>
#include <iterator>

#include <json.hpp>

#include "sierra/auth/password.hpp"
#include "sierra/store/crypto.hpp"

namespace sierra::auth {

using nlohmann::json;

std::string_view to_string(Role role) noexcept {
  switch (role) {
    case Role::Admin: return "admin";
    case Role::Expert: return "expert";
    case Role::Subject: return "subject";
  }
  return "subject";
}

std::optional<Role> role_from_string(std::string_view s) noexcept {
  if (s == "admin") return Role::Admin;
  if (s == "expert") return Role::Expert;
  if (s == "subject") return Role::Subject;
  return std::nullopt;
}

std::string_view to_string(Action action) noexcept {
  switch (action) {
    case Action::ReadSubjectData: return "read_subject_data";
    case Action::WriteSubjectData: return "write_subject_data";
    case Action::ReadQuestionnaires: return "read_questionnaires";
    case Action::WriteQuestionnaires: return "write_questionnaires";
    case Action::RespondQuestionnaire: return "respond_questionnaire";
    case Action::ReadPortfolio: return "read_portfolio";
    case Action::RunMl: return "run_ml";
    case Action::ReadMl: return "read_ml";
    case Action::ManageUsers: return "manage_users";
    case Action::Logout: return "logout";
  }
  return "unknown";
}

Rule policy(Role role, Action action) noexcept {
  switch (role) {
    case Role::Admin:
      return Rule::Allow;
    case Role::Expert:
      return action == Action::ManageUsers ? Rule::Deny : Rule::Allow;
    case Role::Subject:
      switch (action) {
        case Action::ReadSubjectData:
        case Action::RespondQuestionnaire:
          return Rule::OwnSubjectOnly;
        case Action::ReadQuestionnaires:
        case Action::ReadPortfolio:
        case Action::Logout:
          return Rule::Allow;
        case Action::WriteSubjectData:
        case Action::WriteQuestionnaires:
        case Action::RunMl:
        case Action::ReadMl:
        case Action::ManageUsers:
          return Rule::Deny;
      }
  }
  return Rule::Deny;
}

namespace {

bool valid_username(std::string_view s) {
  if (s.size() < 3 || s.size() > 64) return false;
  for (char c : s) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' ||
                    c == '-' || c == '.' || c == '@';
    if (!ok) return false;
  }
  return true;
}

json user_to_json(const User& u) {
  return {{"username", u.username},
          {"password_hash", u.password_hash},
          {"role", to_string(u.role)},
          {"linked_subject", u.linked_subject ? json(u.linked_subject->str()) : json(nullptr)}};
}

// Envelope checked against when the username is unknown, so both failure
// paths cost one key derivation.
const std::string& dummy_envelope(std::uint32_t iterations) {
  static const std::string envelope = hash_password("sierra-dummy-password", iterations);
  return envelope;
}

}  // namespace

AuthService::AuthService(std::filesystem::path users_file, AuthConfig config)
    : users_file_(std::move(users_file)), config_(std::move(config)) {
  if (!std::filesystem::exists(users_file_)) return;
  std::ifstream in(users_file_, std::ios::binary);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    User u;
    u.username = j.at("username").get<std::string>();
    u.password_hash = j.at("password_hash").get<std::string>();
    u.role = role_from_string(j.at("role").get<std::string>()).value_or(Role::Subject);
    if (!j.at("linked_subject").is_null()) u.linked_subject = SubjectId(j.at("linked_subject").get<std::string>());
    users_[u.username] = std::move(u);
  }
}

User AuthService::create_user(const std::string& username, std::string_view password, Role role,
                              std::optional<SubjectId> linked_subject) {
  if (!valid_username(username)) {
    throw Error(ErrorCode::BadUsername, "username must be 3-64 characters of [A-Za-z0-9_.@-]");
  }
  if (password.size() < kMinPasswordLength) {
    throw Error(ErrorCode::WeakPassword, "password must have at least " + std::to_string(kMinPasswordLength) + " characters");
  }
  if ((role == Role::Subject) != linked_subject.has_value()) {
    throw Error(ErrorCode::BadRequest, "a linked subject is required for, and only for, the subject role");
  }
  User u{username, "", role, std::move(linked_subject)};

  std::lock_guard lock(users_mutex_);
  if (users_.count(username)) throw Error(ErrorCode::DuplicateUser, "user '" + username + "' already exists");
  u.password_hash = hash_password(password, config_.pbkdf2_iterations);
  if (!users_file_.parent_path().empty()) std::filesystem::create_directories(users_file_.parent_path());
  std::ofstream out(users_file_, std::ios::binary | std::ios::app);
  out << user_to_json(u).dump() << '\n';
  out.flush();
  if (!out) throw Error(ErrorCode::Io, "cannot write '" + users_file_.string() + "'");
  users_[username] = u;
  return u;
}

Session AuthService::authenticate(const std::string& username, std::string_view password) {
  std::optional<User> user = find_user(username);
  const bool ok = user ? verify_password(user->password_hash, password)
                       : (verify_password(dummy_envelope(config_.pbkdf2_iterations), password), false);
  if (!ok) throw Error(ErrorCode::AuthFailed, "invalid username or password");

  const crypto::Bytes raw = crypto::random_bytes(32);
  Session s{crypto::base64url_encode(raw), user->username, user->role, user->linked_subject,
            config_.clock() + config_.session_ttl_ms};
  std::unique_lock lock(sessions_mutex_);
  sessions_[s.token] = s;
  return s;
}

void AuthService::logout(const std::string& token) {
  std::unique_lock lock(sessions_mutex_);
  sessions_.erase(token);
}

AccessDecision AuthService::check_access(const std::string& token, Action action,
                                         const std::optional<SubjectId>& resource) const {
  AccessDecision d;
  {
    std::shared_lock lock(sessions_mutex_);
    auto it = sessions_.find(token);
    if (token.empty() || it == sessions_.end()) {
      d.reason = "unknown session";
      return d;
    }
    if (config_.clock() >= it->second.expires_at) {
      d.reason = "session expired";
      return d;
    }
    d.session = it->second;
  }
  switch (policy(d.session->role, action)) {
    case Rule::Allow:
      d.allowed = true;
      break;
    case Rule::Deny:
      d.reason = std::string(to_string(d.session->role)) + " may not " + std::string(to_string(action));
      break;
    case Rule::OwnSubjectOnly:
      d.allowed = resource && d.session->linked_subject && *resource == *d.session->linked_subject;
      if (!d.allowed) d.reason = "subjects may only access their own records";
      break;
  }
  return d;
}

std::optional<User> AuthService::find_user(const std::string& username) const {
  std::lock_guard lock(users_mutex_);
  auto it = users_.find(username);
  if (it == users_.end()) return std::nullopt;
  return it->second;
}

std::size_t AuthService::user_count() const {
  std::lock_guard lock(users_mutex_);
  return users_.size();
}

}  // namespace sierra::auth
