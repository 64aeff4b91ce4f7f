#pragma once

// Ingestion and persistence.
//
//   <root>/series/<subject>/<channel>.seg   append-only sample segments
//   <root>/ledger/batches.journal           committed (device, seq_no) pairs
//   <root>/subjects.jsonl                   subject records, PHI encrypted
//   <root>/questionnaires/<id>.quest        canonical questionnaire sources
//   <root>/responses.jsonl                  responses, text answers encrypted
//
// The handle is shareable across threads: one writer per segment at a time,
// any number of readers.

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "sierra/core/model.hpp"
#include "sierra/quest/questionnaire.hpp"
#include "sierra/store/crypto.hpp"

namespace sierra::store {

inline constexpr std::size_t kMaxBatchSamples = 10'000;

struct SampleBatch {
  DeviceId device;
  SubjectId subject;
  std::uint64_t seq_no = 0;
  std::vector<RawSample> samples;
};

struct RejectedSample {
  std::size_t index = 0;
  ErrorCode reason = ErrorCode::NonFiniteValue;

  bool operator==(const RejectedSample&) const = default;
};

struct IngestReceipt {
  std::size_t accepted = 0;
  std::vector<RejectedSample> rejected;
  bool duplicate_batch = false;

  bool operator==(const IngestReceipt&) const = default;
};

/// Parses the ingestion wire body `{device_id, subject_id, seq_no, samples}`.
/// A sample value of null or "NaN"/"Infinity"/"-Infinity" decodes as a
/// non-finite number so it is itemized rather than failing the request.
SampleBatch batch_from_json(const nlohmann::json& body);
nlohmann::json to_json(const IngestReceipt& receipt);

struct StoredResponse {
  std::string response_id;
  std::string answered_by;
  quest::ResponseSet response;  // text answers present only when decrypted
};

struct StoreOptions {
  bool sync = true;  // fdatasync segment and journal appends
};

class Store {
 public:
  explicit Store(std::filesystem::path root, StoreOptions options = {});
  ~Store();
  Store(const Store&) = delete;
  Store& operator=(const Store&) = delete;

  const std::filesystem::path& root() const noexcept { return root_; }
  void close();

  IngestReceipt ingest_batch(const SampleBatch& batch);

  /// Points with t0 <= t < t1, ascending, duplicate timestamps resolved to
  /// the last written value. An empty window is not an error.
  TimeSeries query_series(const SubjectId& subject, const ChannelId& channel, std::int64_t t0_ms,
                          std::int64_t t1_ms) const;

  SubjectId put_subject(const SubjectRecord& rec, const std::optional<crypto::MasterKey>& key);
  SubjectRecord get_subject(const SubjectId& id, const crypto::MasterKey& key) const;
  bool has_subject(const SubjectId& id) const;
  std::vector<SubjectId> list_subjects() const;
  std::vector<ChannelId> list_channels(const SubjectId& id) const;

  /// Stores a new questionnaire or a strictly newer version of an existing one.
  void put_questionnaire(const quest::QuestionnaireDef& def);
  std::optional<quest::QuestionnaireDef> get_questionnaire(const std::string& id) const;
  std::vector<quest::QuestionnaireDef> list_questionnaires() const;

  std::string append_response(const quest::ResponseSet& rs, const std::string& answered_by,
                              const std::optional<crypto::MasterKey>& key);
  std::vector<StoredResponse> list_responses(const std::string& questionnaire_id,
                                             const std::optional<SubjectId>& subject,
                                             const std::optional<crypto::MasterKey>& key) const;

  /// Number of public operations served; lets tests prove a request never
  /// reached the store.
  std::uint64_t access_count() const noexcept { return access_count_.load(); }

  static std::string subject_phi_path(const SubjectId& id, const std::string& field);
  static std::string response_answer_path(const std::string& response_id, const std::string& item);

 private:
  void touch() const;
  std::filesystem::path segment_path(const SubjectId& s, const ChannelId& c) const;
  std::shared_ptr<std::mutex> lock_for(std::map<std::string, std::shared_ptr<std::mutex>>& table,
                                       const std::string& key);
  void load();
  bool subject_known(const SubjectId& id) const;
  void append_line(const std::filesystem::path& path, const std::string& line);

  std::filesystem::path root_;
  StoreOptions options_;
  std::atomic<bool> open_{true};
  mutable std::atomic<std::uint64_t> access_count_{0};

  mutable std::shared_mutex meta_mutex_;  // subjects, questionnaires, journal set
  std::map<SubjectId, nlohmann::json> subjects_;
  std::map<std::string, quest::QuestionnaireDef> questionnaires_;
  std::set<std::pair<std::string, std::uint64_t>> committed_;

  std::mutex locks_mutex_;
  std::map<std::string, std::shared_ptr<std::mutex>> device_locks_;
  std::map<std::string, std::shared_ptr<std::mutex>> segment_locks_;

  mutable std::mutex file_mutex_;  // serializes appends to the JSON-lines files
};

}  // namespace sierra::store
