#include "sierra/store/store.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <sstream>

#include "sierra/store/segment.hpp"

namespace sierra::store {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kJournalFile = "ledger/batches.journal";
constexpr const char* kSubjectsFile = "subjects.jsonl";
constexpr const char* kResponsesFile = "responses.jsonl";
constexpr const char* kQuestionnaireDir = "questionnaires";

/// Complete lines of a JSON-lines file. A trailing fragment without a
/// newline is an interrupted append: it is dropped and cut from the file.
std::vector<json> read_json_lines(const fs::path& path) {
  std::vector<json> out;
  if (!fs::exists(path)) return out;
  std::ifstream in(path, std::ios::binary);
  std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  in.close();
  const std::size_t last_nl = content.rfind('\n');
  const std::size_t complete = last_nl == std::string::npos ? 0 : last_nl + 1;
  if (complete != content.size()) fs::resize_file(path, complete);

  std::size_t start = 0;
  while (start < complete) {
    const std::size_t end = content.find('\n', start);
    const std::string_view line(content.data() + start, end - start);
    start = end + 1;
    if (line.empty()) continue;
    try {
      out.push_back(json::parse(line));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::CorruptRecord, "corrupt line in '" + path.string() + "': " + e.what());
    }
  }
  return out;
}

void write_file_atomic(const fs::path& path, const std::string& content) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out << content;
    if (!out) throw Error(ErrorCode::Io, "cannot write '" + tmp.string() + "'");
  }
  fs::rename(tmp, path);
}

double decode_value(const json& v) {
  if (v.is_number()) return v.get<double>();
  if (v.is_null()) return std::numeric_limits<double>::quiet_NaN();
  if (v.is_string()) {
    const auto& s = v.get_ref<const std::string&>();
    if (s == "NaN") return std::numeric_limits<double>::quiet_NaN();
    if (s == "Infinity") return std::numeric_limits<double>::infinity();
    if (s == "-Infinity") return -std::numeric_limits<double>::infinity();
  }
  throw Error(ErrorCode::BadRequest, "sample value must be a number");
}

}  // namespace

SampleBatch batch_from_json(const json& body) {
  if (!body.is_object()) throw Error(ErrorCode::BadRequest, "batch must be a JSON object");
  SampleBatch batch;
  try {
    batch.device = DeviceId(body.at("device_id").get<std::string>());
    batch.subject = SubjectId(body.at("subject_id").get<std::string>());
    const json& seq = body.at("seq_no");
    if (!seq.is_number_unsigned() && !(seq.is_number_integer() && seq.get<std::int64_t>() >= 0)) {
      throw Error(ErrorCode::BadRequest, "seq_no must be a non-negative integer");
    }
    batch.seq_no = seq.get<std::uint64_t>();
    const json& samples = body.at("samples");
    if (!samples.is_array()) throw Error(ErrorCode::BadRequest, "samples must be an array");
    batch.samples.reserve(samples.size());
    for (const json& s : samples) {
      if (!s.is_object()) throw Error(ErrorCode::BadRequest, "each sample must be an object");
      const json& t = s.at("t_ms");
      if (!t.is_number_integer()) throw Error(ErrorCode::BadRequest, "t_ms must be an integer");
      batch.samples.push_back({s.at("channel").get<std::string>(), t.get<std::int64_t>(), decode_value(s.at("value"))});
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::BadRequest, std::string("malformed batch: ") + e.what());
  }
  return batch;
}

json to_json(const IngestReceipt& receipt) {
  json rejected = json::array();
  for (const auto& r : receipt.rejected) rejected.push_back({{"index", r.index}, {"reason", to_string(r.reason)}});
  return {{"accepted", receipt.accepted}, {"rejected", std::move(rejected)}, {"duplicate_batch", receipt.duplicate_batch}};
}

Store::Store(fs::path root, StoreOptions options) : root_(std::move(root)), options_(options) {
  std::error_code ec;
  fs::create_directories(root_ / "series", ec);
  fs::create_directories(root_ / "ledger", ec);
  fs::create_directories(root_ / kQuestionnaireDir, ec);
  if (ec || !fs::is_directory(root_)) {
    throw Error(ErrorCode::ConfigError, "data directory '" + root_.string() + "' is not usable");
  }
  load();
}

Store::~Store() = default;

void Store::close() { open_ = false; }

void Store::touch() const {
  access_count_.fetch_add(1);
  if (!open_) throw Error(ErrorCode::StoreClosed, "store is closed");
}

std::string Store::subject_phi_path(const SubjectId& id, const std::string& field) {
  return "subjects/" + id.str() + "/phi/" + field;
}

std::string Store::response_answer_path(const std::string& response_id, const std::string& item) {
  return "responses/" + response_id + "/answers/" + item;
}

fs::path Store::segment_path(const SubjectId& s, const ChannelId& c) const {
  return root_ / "series" / s.str() / (c.str() + ".seg");
}

std::shared_ptr<std::mutex> Store::lock_for(std::map<std::string, std::shared_ptr<std::mutex>>& table,
                                            const std::string& key) {
  std::lock_guard guard(locks_mutex_);
  auto& slot = table[key];
  if (!slot) slot = std::make_shared<std::mutex>();
  return slot;
}

void Store::load() {
  for (const json& line : read_json_lines(root_ / kJournalFile)) {
    committed_.emplace(line.at("device").get<std::string>(), line.at("seq").get<std::uint64_t>());
  }
  for (json& line : read_json_lines(root_ / kSubjectsFile)) {
    SubjectId id(line.at("id").get<std::string>());
    subjects_[id] = std::move(line);
  }
  for (const auto& entry : fs::directory_iterator(root_ / kQuestionnaireDir)) {
    if (entry.path().extension() != ".quest") continue;
    std::ifstream in(entry.path(), std::ios::binary);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    auto def = quest::parse_questionnaire(text);
    questionnaires_[def.id] = std::move(def);
  }
}

void Store::append_line(const fs::path& path, const std::string& line) {
  std::lock_guard guard(file_mutex_);
  const int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0600);
  if (fd < 0) throw Error(ErrorCode::Io, "cannot open '" + path.string() + "': " + std::strerror(errno));
  const std::string data = line + "\n";
  std::size_t off = 0;
  while (off < data.size()) {
    const ssize_t w = ::write(fd, data.data() + off, data.size() - off);
    if (w < 0) {
      if (errno == EINTR) continue;
      ::close(fd);
      throw Error(ErrorCode::Io, "write to '" + path.string() + "' failed");
    }
    off += static_cast<std::size_t>(w);
  }
  if (options_.sync) ::fdatasync(fd);
  ::close(fd);
}

IngestReceipt Store::ingest_batch(const SampleBatch& batch) {
  touch();
  if (batch.samples.size() > kMaxBatchSamples) {
    throw Error(ErrorCode::BatchTooLarge, "batch holds " + std::to_string(batch.samples.size()) + " samples, limit is " +
                                              std::to_string(kMaxBatchSamples));
  }
  if (batch.samples.empty()) throw Error(ErrorCode::EmptyBatch, "batch holds no samples");
  if (!subject_known(batch.subject)) throw Error(ErrorCode::UnknownSubject, "unknown subject '" + batch.subject.str() + "'");

  const auto device_lock = lock_for(device_locks_, batch.device.str());
  std::lock_guard device_guard(*device_lock);

  const auto key = std::make_pair(batch.device.str(), batch.seq_no);
  {
    std::shared_lock read(meta_mutex_);
    if (committed_.count(key)) return IngestReceipt{0, {}, true};
  }

  IngestReceipt receipt;
  std::map<std::string, std::vector<Point>> by_channel;
  for (std::size_t i = 0; i < batch.samples.size(); ++i) {
    const RawSample& s = batch.samples[i];
    if (auto err = check_sample(s)) {
      receipt.rejected.push_back({i, *err});
      continue;
    }
    by_channel[s.channel].push_back({s.t_ms, s.value});
    ++receipt.accepted;
  }

  if (!by_channel.empty()) fs::create_directories(root_ / "series" / batch.subject.str());
  for (const auto& [channel, points] : by_channel) {
    const ChannelId cid(channel);
    const auto seg_lock = lock_for(segment_locks_, batch.subject.str() + "/" + channel);
    std::lock_guard seg_guard(*seg_lock);
    append_segment(segment_path(batch.subject, cid), points, options_.sync);
  }

  append_line(root_ / kJournalFile, json{{"device", key.first}, {"seq", key.second}}.dump());
  std::unique_lock write(meta_mutex_);
  committed_.insert(key);
  return receipt;
}

TimeSeries Store::query_series(const SubjectId& subject, const ChannelId& channel, std::int64_t t0_ms,
                               std::int64_t t1_ms) const {
  touch();
  if (t0_ms > t1_ms) throw Error(ErrorCode::BadRequest, "query window requires t0 <= t1");
  if (!subject_known(subject)) throw Error(ErrorCode::UnknownSubject, "unknown subject '" + subject.str() + "'");
  const fs::path path = segment_path(subject, channel);
  if (!fs::exists(path)) {
    throw Error(ErrorCode::UnknownChannel, "subject '" + subject.str() + "' has no channel '" + channel.str() + "'");
  }

  std::vector<Point> points = read_segment(path);
  std::stable_sort(points.begin(), points.end(), [](const Point& a, const Point& b) { return a.t_ms < b.t_ms; });

  TimeSeries out{subject, channel, {}};
  for (std::size_t i = 0; i < points.size(); ++i) {
    // Within a run of equal timestamps the stable sort keeps write order;
    // only the run's last element survives.
    if (i + 1 < points.size() && points[i + 1].t_ms == points[i].t_ms) continue;
    if (points[i].t_ms >= t0_ms && points[i].t_ms < t1_ms) out.points.push_back(points[i]);
  }
  return out;
}

SubjectId Store::put_subject(const SubjectRecord& rec, const std::optional<crypto::MasterKey>& key) {
  touch();
  if (!key) throw Error(ErrorCode::MissingMasterKey, "a master key is required to store subject records");
  if (rec.id.empty()) throw Error(ErrorCode::BadIdentifier, "subject id is empty");

  json phi = json::object();
  for (const auto& [field, value] : rec.phi) {
    phi[field] = crypto::to_json(crypto::encrypt_field(subject_phi_path(rec.id, field), value, *key));
  }
  json line = {{"id", rec.id.str()}, {"cohort", rec.cohort}, {"created_at", rec.created_at}, {"phi", std::move(phi)}};

  std::unique_lock write(meta_mutex_);
  if (subjects_.count(rec.id)) throw Error(ErrorCode::DuplicateSubject, "subject '" + rec.id.str() + "' already exists");
  append_line(root_ / kSubjectsFile, line.dump());
  subjects_[rec.id] = std::move(line);
  return rec.id;
}

SubjectRecord Store::get_subject(const SubjectId& id, const crypto::MasterKey& key) const {
  touch();
  json line;
  {
    std::shared_lock read(meta_mutex_);
    auto it = subjects_.find(id);
    if (it == subjects_.end()) throw Error(ErrorCode::UnknownSubject, "unknown subject '" + id.str() + "'");
    line = it->second;
  }
  SubjectRecord rec;
  rec.id = id;
  rec.cohort = line.at("cohort").get<std::string>();
  rec.created_at = line.at("created_at").get<std::int64_t>();
  for (const auto& [field, envelope] : line.at("phi").items()) {
    rec.phi[field] = crypto::decrypt_field(crypto::encrypted_field_from_json(envelope), key, subject_phi_path(id, field));
  }
  return rec;
}

bool Store::has_subject(const SubjectId& id) const {
  touch();
  return subject_known(id);
}

bool Store::subject_known(const SubjectId& id) const {
  std::shared_lock read(meta_mutex_);
  return subjects_.count(id) > 0;
}

std::vector<SubjectId> Store::list_subjects() const {
  touch();
  std::shared_lock read(meta_mutex_);
  std::vector<SubjectId> out;
  for (const auto& [id, _] : subjects_) out.push_back(id);
  return out;
}

std::vector<ChannelId> Store::list_channels(const SubjectId& id) const {
  touch();
  if (!subject_known(id)) throw Error(ErrorCode::UnknownSubject, "unknown subject '" + id.str() + "'");
  std::vector<ChannelId> out;
  const fs::path dir = root_ / "series" / id.str();
  if (!fs::exists(dir)) return out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() != ".seg") continue;
    if (auto c = ChannelId::parse(entry.path().stem().string())) out.push_back(*c);
  }
  std::sort(out.begin(), out.end());
  return out;
}

void Store::put_questionnaire(const quest::QuestionnaireDef& def) {
  touch();
  std::unique_lock write(meta_mutex_);
  auto it = questionnaires_.find(def.id);
  if (it != questionnaires_.end() && it->second.version >= def.version) {
    throw Error(ErrorCode::DuplicateQuestionnaire, "questionnaire '" + def.id + "' already has version " +
                                                       std::to_string(it->second.version));
  }
  write_file_atomic(root_ / kQuestionnaireDir / (def.id + ".quest"), quest::serialize_questionnaire(def));
  questionnaires_[def.id] = def;
}

std::optional<quest::QuestionnaireDef> Store::get_questionnaire(const std::string& id) const {
  touch();
  std::shared_lock read(meta_mutex_);
  auto it = questionnaires_.find(id);
  if (it == questionnaires_.end()) return std::nullopt;
  return it->second;
}

std::vector<quest::QuestionnaireDef> Store::list_questionnaires() const {
  touch();
  std::shared_lock read(meta_mutex_);
  std::vector<quest::QuestionnaireDef> out;
  for (const auto& [_, def] : questionnaires_) out.push_back(def);
  return out;
}

std::string Store::append_response(const quest::ResponseSet& rs, const std::string& answered_by,
                                   const std::optional<crypto::MasterKey>& key) {
  touch();
  const std::string response_id = crypto::hex_encode(crypto::random_bytes(12));
  json answers = json::object();
  for (const auto& [item, answer] : rs.answers) {
    if (const auto* v = std::get_if<std::int64_t>(&answer)) {
      answers[item] = *v;
    } else {
      if (!key) throw Error(ErrorCode::MissingMasterKey, "a master key is required to store text answers");
      answers[item] = crypto::to_json(
          crypto::encrypt_field(response_answer_path(response_id, item), std::get<std::string>(answer), *key));
    }
  }
  json line = {{"response_id", response_id},
               {"questionnaire_id", rs.questionnaire_id},
               {"version", rs.version},
               {"subject", rs.subject.str()},
               {"answered_at", rs.answered_at},
               {"answered_by", answered_by},
               {"answers", std::move(answers)}};
  append_line(root_ / kResponsesFile, line.dump());
  return response_id;
}

std::vector<StoredResponse> Store::list_responses(const std::string& questionnaire_id,
                                                  const std::optional<SubjectId>& subject,
                                                  const std::optional<crypto::MasterKey>& key) const {
  touch();
  std::vector<json> lines;
  {
    std::lock_guard guard(file_mutex_);
    lines = read_json_lines(root_ / kResponsesFile);
  }
  std::vector<StoredResponse> out;
  for (const json& line : lines) {
    if (line.at("questionnaire_id") != questionnaire_id) continue;
    if (subject && line.at("subject") != subject->str()) continue;
    StoredResponse sr;
    sr.response_id = line.at("response_id").get<std::string>();
    sr.answered_by = line.at("answered_by").get<std::string>();
    sr.response.questionnaire_id = questionnaire_id;
    sr.response.version = line.at("version").get<int>();
    sr.response.subject = SubjectId(line.at("subject").get<std::string>());
    sr.response.answered_at = line.at("answered_at").get<std::int64_t>();
    for (const auto& [item, value] : line.at("answers").items()) {
      if (value.is_number_integer()) {
        sr.response.answers[item] = value.get<std::int64_t>();
      } else if (key) {
        sr.response.answers[item] = crypto::decrypt_field(crypto::encrypted_field_from_json(value), *key,
                                                          response_answer_path(sr.response_id, item));
      }
    }
    out.push_back(std::move(sr));
  }
  return out;
}

}  // namespace sierra::store
