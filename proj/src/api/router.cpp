#include "sierra/api/router.hpp"

#include <atomic>
#include <limits>
#include <mutex>
#include <thread>

#include "sierra/ml/confusion.hpp"
#include "sierra/ml/dataset.hpp"
#include "sierra/ml/mlp.hpp"
#include "sierra/quest/questionnaire.hpp"

namespace sierra::api {

using nlohmann::json;
using auth::Action;

namespace {

std::vector<std::string> split_path(const std::string& path) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= path.size()) {
    std::size_t slash = path.find('/', start);
    if (slash == std::string::npos) slash = path.size();
    if (slash > start) out.push_back(path.substr(start, slash - start));
    start = slash + 1;
  }
  return out;
}

bool match(const std::string& pattern, const std::string& path, std::map<std::string, std::string>& captures) {
  const auto pat = split_path(pattern);
  const auto seg = split_path(path);
  if (pat.size() != seg.size()) return false;
  std::map<std::string, std::string> caps;
  for (std::size_t i = 0; i < pat.size(); ++i) {
    if (pat[i].size() > 2 && pat[i].front() == '{' && pat[i].back() == '}') {
      caps[pat[i].substr(1, pat[i].size() - 2)] = seg[i];
    } else if (pat[i] != seg[i]) {
      return false;
    }
  }
  captures = std::move(caps);
  return true;
}

std::int64_t query_int(const std::map<std::string, std::string>& q, const std::string& name, std::int64_t fallback) {
  auto it = q.find(name);
  if (it == q.end()) return fallback;
  try {
    std::size_t used = 0;
    const long long v = std::stoll(it->second, &used);
    if (used != it->second.size()) throw std::invalid_argument(name);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorCode::BadRequest, "query parameter '" + name + "' must be an integer");
  }
}

const std::string& require_query(const std::map<std::string, std::string>& q, const std::string& name) {
  auto it = q.find(name);
  if (it == q.end() || it->second.empty()) {
    throw Error(ErrorCode::BadRequest, "query parameter '" + name + "' is required");
  }
  return it->second;
}

json parse_json_body(const std::string& body) {
  try {
    return json::parse(body);
  } catch (const json::exception&) {
    throw Error(ErrorCode::BadRequest, "request body is not valid JSON");
  }
}

SubjectId subject_arg(const std::string& text) {
  auto id = SubjectId::parse(text);
  if (!id) throw Error(ErrorCode::BadIdentifier, "'" + text + "' is not a valid subject id");
  return *id;
}

}  // namespace

// ---------------------------------------------------------------------------
// Training jobs

class MlJobs {
 public:
  struct Job {
    std::mutex mutex;
    std::string status = "queued";
    std::string error;
    std::vector<double> history;
    std::optional<ml::ConfusionMatrix> confusion;
    std::optional<ml::Metrics> metrics;
    ml::Task task = ml::Task::Classification;
    json request;
  };

  ~MlJobs() {
    std::lock_guard lock(mutex_);
    for (auto& t : threads_) {
      if (t.joinable()) t.join();
    }
  }

  std::string add_dataset(ml::Dataset d) {
    std::lock_guard lock(mutex_);
    const std::string id = "ds" + std::to_string(++next_dataset_);
    datasets_[id] = std::make_shared<const ml::Dataset>(std::move(d));
    return id;
  }

  std::string start(const json& req) {
    std::shared_ptr<const ml::Dataset> data;
    std::vector<std::size_t> layers;
    ml::Activation activation = ml::Activation::Relu;
    ml::TrainConfig cfg;
    try {
      const std::string ds = req.at("dataset_id").get<std::string>();
      {
        std::lock_guard lock(mutex_);
        auto it = datasets_.find(ds);
        if (it == datasets_.end()) throw Error(ErrorCode::UnknownDataset, "no dataset '" + ds + "'");
        data = it->second;
      }
      layers = req.at("layers").get<std::vector<std::size_t>>();
      const std::string act = req.value("activation", std::string("relu"));
      if (act == "relu") activation = ml::Activation::Relu;
      else if (act == "tanh") activation = ml::Activation::Tanh;
      else throw Error(ErrorCode::BadRequest, "activation must be relu or tanh");
      cfg.learning_rate = req.value("learning_rate", 0.01);
      cfg.epochs = req.value("epochs", std::size_t{100});
      cfg.batch_size = req.value("batch_size", std::size_t{32});
      cfg.momentum = req.value("momentum", 0.0);
      cfg.seed = req.value("seed", std::uint64_t{0});
    } catch (const json::exception& e) {
      throw Error(ErrorCode::BadRequest, std::string("malformed training request: ") + e.what());
    }
    if (layers.size() < 2 || layers.front() != data->features.cols()) {
      throw Error(ErrorCode::BadArchitecture, "first layer must equal the dataset's feature count (" +
                                                  std::to_string(data->features.cols()) + ")");
    }
    if (data->task == ml::Task::Classification && layers.back() != data->num_classes) {
      throw Error(ErrorCode::BadArchitecture, "last layer must equal the class count (" +
                                                  std::to_string(data->num_classes) + ")");
    }
    if (!(cfg.learning_rate >= 0.0) || cfg.epochs < 1 || cfg.epochs > 1'000'000 || cfg.batch_size < 1 ||
        !(cfg.momentum >= 0.0 && cfg.momentum < 1.0)) {
      throw Error(ErrorCode::PreconditionViolation, "invalid training configuration");
    }
    ml::MlpModel model = ml::init_mlp(layers, activation, data->task, cfg.seed);

    auto job = std::make_shared<Job>();
    job->task = data->task;
    job->request = req;
    std::lock_guard lock(mutex_);
    const std::string id = "job" + std::to_string(++next_job_);
    jobs_[id] = job;
    threads_.emplace_back([job, data, model = std::move(model), cfg]() mutable {
      {
        std::lock_guard l(job->mutex);
        job->status = "running";
      }
      try {
        ml::TrainResult result = ml::train(std::move(model), *data, cfg);
        std::optional<ml::ConfusionMatrix> cm;
        std::optional<ml::Metrics> m;
        if (data->task == ml::Task::Classification) {
          const auto predicted = ml::predict_classes(result.model, data->features);
          cm = ml::confusion_matrix(data->labels, predicted, data->num_classes);
          m = ml::metrics(*cm);
        }
        std::lock_guard l(job->mutex);
        job->history = std::move(result.history);
        job->confusion = std::move(cm);
        job->metrics = std::move(m);
        job->status = "done";
      } catch (const std::exception& e) {
        std::lock_guard l(job->mutex);
        job->status = "failed";
        job->error = e.what();
      }
    });
    return id;
  }

  std::shared_ptr<Job> job(const std::string& id) {
    std::lock_guard lock(mutex_);
    auto it = jobs_.find(id);
    if (it == jobs_.end()) throw Error(ErrorCode::UnknownJob, "no job '" + id + "'");
    return it->second;
  }

 private:
  std::mutex mutex_;
  std::uint64_t next_dataset_ = 0;
  std::uint64_t next_job_ = 0;
  std::map<std::string, std::shared_ptr<const ml::Dataset>> datasets_;
  std::map<std::string, std::shared_ptr<Job>> jobs_;
  std::vector<std::thread> threads_;
};

// ---------------------------------------------------------------------------

int status_for(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::AuthFailed:
      return 401;
    case ErrorCode::Forbidden:
      return 403;
    case ErrorCode::UnknownSubject:
    case ErrorCode::UnknownChannel:
    case ErrorCode::UnknownQuestionnaire:
    case ErrorCode::UnknownPlugin:
    case ErrorCode::UnknownDataset:
    case ErrorCode::UnknownJob:
    case ErrorCode::NotFound:
      return 404;
    case ErrorCode::DuplicateSubject:
    case ErrorCode::DuplicateQuestionnaire:
    case ErrorCode::DuplicatePluginId:
    case ErrorCode::DuplicateUser:
    case ErrorCode::JobNotFinished:
      return 409;
    case ErrorCode::StoreClosed:
      return 503;
    case ErrorCode::Io:
    case ErrorCode::CorruptRecord:
    case ErrorCode::AuthFailure:
    case ErrorCode::WrongAad:
    case ErrorCode::MissingMasterKey:
    case ErrorCode::ConfigError:
    case ErrorCode::PortInUse:
      return 500;
    default:
      return 400;
  }
}

json ok_body(json data) { return {{"ok", true}, {"data", std::move(data)}}; }

json error_body(const Error& e) {
  json err = {{"code", to_string(e.code())}, {"message", e.what()}};
  if (const auto* pe = dynamic_cast<const ParseError*>(&e)) {
    err["line"] = pe->line();
    err["reason"] = pe->reason();
  }
  if (!e.details().empty()) {
    json details = json::array();
    for (const auto& d : e.details()) {
      details.push_back({{"item", d.subject}, {"reason", to_string(d.reason)}, {"message", d.message}});
    }
    err["details"] = std::move(details);
  }
  return {{"ok", false}, {"error", std::move(err)}};
}

const std::vector<RouteInfo>& Api::routes() {
  static const std::vector<RouteInfo> table = {
      {"GET", "/healthz", Guard::Public, std::nullopt},
      {"POST", "/api/v1/auth/login", Guard::Public, std::nullopt},
      {"POST", "/api/v1/auth/logout", Guard::User, Action::Logout},
      {"POST", "/api/v1/subjects", Guard::User, Action::WriteSubjectData},
      {"GET", "/api/v1/subjects/{id}", Guard::User, Action::ReadSubjectData},
      {"POST", "/api/v1/ingest", Guard::Device, std::nullopt},
      {"GET", "/api/v1/series", Guard::User, Action::ReadSubjectData},
      {"POST", "/api/v1/questionnaires", Guard::User, Action::WriteQuestionnaires},
      {"GET", "/api/v1/questionnaires", Guard::User, Action::ReadQuestionnaires},
      {"GET", "/api/v1/questionnaires/{id}/form", Guard::User, Action::ReadQuestionnaires},
      {"POST", "/api/v1/questionnaires/{id}/responses", Guard::User, Action::RespondQuestionnaire},
      {"GET", "/api/v1/questionnaires/{id}/scores", Guard::User, Action::ReadSubjectData},
      {"GET", "/api/v1/portfolio", Guard::User, Action::ReadPortfolio},
      {"GET", "/api/v1/viz/{plugin_id}/data", Guard::User, Action::ReadSubjectData},
      {"POST", "/api/v1/ml/datasets", Guard::User, Action::RunMl},
      {"POST", "/api/v1/ml/train", Guard::User, Action::RunMl},
      {"GET", "/api/v1/ml/jobs/{id}", Guard::User, Action::ReadMl},
      {"GET", "/api/v1/ml/jobs/{id}/confusion", Guard::User, Action::ReadMl},
  };
  return table;
}

struct Api::Context {
  const ApiRequest& req;
  std::map<std::string, std::string> captures;
  std::optional<auth::Session> session;
  std::optional<json> body_json;
};

Api::Api(ServiceConfig cfg, std::optional<crypto::MasterKey> master_key)
    : cfg_(std::move(cfg)), master_key_(std::move(master_key)) {
  if (cfg_.enable_phi && !master_key_) {
    throw Error(ErrorCode::ConfigError, "master key missing: set " + cfg_.master_key_env + " (64 hex characters)");
  }
  store_ = std::make_unique<store::Store>(cfg_.data_dir, cfg_.store_options);
  auth::AuthConfig ac;
  ac.session_ttl_ms = cfg_.session_ttl_ms;
  ac.clock = cfg_.clock;
  auth_ = std::make_unique<auth::AuthService>(cfg_.data_dir / "users.jsonl", ac);
  registry_ = viz::make_builtin_registry();
  ml_ = std::make_unique<MlJobs>();
}

Api::~Api() = default;

ApiResponse Api::handle(const ApiRequest& req) {
  try {
    const RouteInfo* route = nullptr;
    bool path_known = false;
    std::map<std::string, std::string> captures;
    for (const auto& r : routes()) {
      std::map<std::string, std::string> caps;
      if (!match(r.pattern, req.path, caps)) continue;
      path_known = true;
      if (r.method == req.method) {
        route = &r;
        captures = std::move(caps);
        break;
      }
    }
    if (!route) {
      if (path_known) return {405, error_body(Error(ErrorCode::BadRequest, "method not allowed"))};
      return {404, error_body(Error(ErrorCode::NotFound, "no route for " + req.path))};
    }

    Context ctx{req, std::move(captures), std::nullopt, std::nullopt};

    if (route->guard == Guard::Device) {
      auto it = req.headers.find("x-device-key");
      if (it == req.headers.end() || !cfg_.device_keys.count(it->second)) {
        return {401, error_body(Error(ErrorCode::AuthFailed, "missing or unknown device key"))};
      }
    } else if (route->guard == Guard::User) {
      std::string token;
      if (auto it = req.headers.find("authorization"); it != req.headers.end()) {
        constexpr std::string_view kBearer = "Bearer ";
        if (it->second.rfind(kBearer, 0) == 0) token = it->second.substr(kBearer.size());
      }
      // Resolve the subject the request is about without touching the store.
      std::optional<SubjectId> resource;
      std::optional<std::string> resource_text;
      if (route->pattern == "/api/v1/subjects/{id}") {
        resource_text = ctx.captures.at("id");
      } else if (route->pattern == "/api/v1/questionnaires/{id}/responses") {
        // Unparseable bodies are reported after authentication.
        try {
          ctx.body_json = json::parse(req.body);
          if (ctx.body_json->is_object() && ctx.body_json->contains("subject") && (*ctx.body_json)["subject"].is_string()) {
            resource_text = (*ctx.body_json)["subject"].get<std::string>();
          }
        } catch (const json::exception&) {
          ctx.body_json.reset();
        }
      } else if (auto q = req.query.find("subject"); q != req.query.end()) {
        resource_text = q->second;
      }
      if (resource_text) resource = SubjectId::parse(*resource_text);

      const auth::AccessDecision d = auth_->check_access(token, *route->action, resource);
      if (!d.session) return {401, error_body(Error(ErrorCode::AuthFailed, "authentication required"))};
      if (!d.allowed) return {403, error_body(Error(ErrorCode::Forbidden, d.reason))};
      ctx.session = d.session;
    }
    return dispatch(*route, ctx);
  } catch (const Error& e) {
    return {status_for(e.code()), error_body(e)};
  } catch (const std::exception& e) {
    return {500, error_body(Error(ErrorCode::Io, std::string("internal error: ") + e.what()))};
  }
}

ApiResponse Api::dispatch(const RouteInfo& route, Context& ctx) {
  const ApiRequest& req = ctx.req;
  const std::string& p = route.pattern;

  if (p == "/healthz") return {200, ok_body("ok")};

  if (p == "/api/v1/auth/login") {
    const json body = parse_json_body(req.body);
    if (!body.is_object() || !body.contains("username") || !body.contains("password") ||
        !body["username"].is_string() || !body["password"].is_string()) {
      throw Error(ErrorCode::BadRequest, "login needs string fields username and password");
    }
    const auth::Session s = auth_->authenticate(body["username"], body["password"].get<std::string>());
    return {200, ok_body({{"token", s.token},
                          {"username", s.username},
                          {"role", auth::to_string(s.role)},
                          {"linked_subject", s.linked_subject ? json(s.linked_subject->str()) : json(nullptr)},
                          {"expires_at", s.expires_at}})};
  }

  if (p == "/api/v1/auth/logout") {
    auth_->logout(ctx.session->token);
    return {200, ok_body({{"logged_out", true}})};
  }

  if (p == "/api/v1/subjects" || p == "/api/v1/subjects/{id}") {
    if (!cfg_.enable_phi) throw Error(ErrorCode::NotFound, "subject records are disabled on this service");
    if (req.method == "POST") {
      const json body = parse_json_body(req.body);
      SubjectRecord rec;
      try {
        rec.id = subject_arg(body.at("id").get<std::string>());
        rec.cohort = body.value("cohort", std::string());
        rec.phi = body.value("phi", std::map<std::string, std::string>{});
        rec.created_at = body.value("created_at", cfg_.clock());
      } catch (const json::exception& e) {
        throw Error(ErrorCode::BadRequest, std::string("malformed subject record: ") + e.what());
      }
      store_->put_subject(rec, master_key_);
      return {200, ok_body({{"id", rec.id.str()}})};
    }
    const SubjectRecord rec = store_->get_subject(subject_arg(ctx.captures.at("id")), *master_key_);
    return {200, ok_body({{"id", rec.id.str()}, {"cohort", rec.cohort}, {"phi", rec.phi}, {"created_at", rec.created_at}})};
  }

  if (p == "/api/v1/ingest") {
    const std::string& device = cfg_.device_keys.at(req.headers.at("x-device-key"));
    const store::SampleBatch batch = store::batch_from_json(parse_json_body(req.body));
    if (batch.device.str() != device) {
      throw Error(ErrorCode::Forbidden, "device key does not belong to device '" + batch.device.str() + "'");
    }
    return {200, ok_body(store::to_json(store_->ingest_batch(batch)))};
  }

  if (p == "/api/v1/series") {
    const SubjectId subject = subject_arg(require_query(req.query, "subject"));
    const auto channel = ChannelId::parse(require_query(req.query, "channel"));
    if (!channel) throw Error(ErrorCode::BadChannelName, "invalid channel name");
    const auto t0 = query_int(req.query, "t0", 0);
    const auto t1 = query_int(req.query, "t1", kMaxTimestampMs);
    const TimeSeries ts = store_->query_series(subject, *channel, t0, t1);
    json points = json::array();
    for (const auto& pt : ts.points) points.push_back({pt.t_ms, pt.value});
    return {200, ok_body({{"subject", subject.str()}, {"channel", channel->str()}, {"t0", t0}, {"t1", t1},
                          {"points", std::move(points)}})};
  }

  if (p == "/api/v1/questionnaires") {
    if (req.method == "POST") {
      const quest::QuestionnaireDef def = quest::parse_questionnaire(req.body);
      store_->put_questionnaire(def);
      return {200, ok_body({{"id", def.id}, {"version", def.version}, {"n_items", def.items.size()}})};
    }
    json list = json::array();
    for (const auto& def : store_->list_questionnaires()) {
      list.push_back({{"id", def.id}, {"version", def.version}, {"n_items", def.items.size()}});
    }
    return {200, ok_body(std::move(list))};
  }

  if (p.rfind("/api/v1/questionnaires/{id}", 0) == 0) {
    const std::string& qid = ctx.captures.at("id");
    const auto def = store_->get_questionnaire(qid);
    if (!def) throw Error(ErrorCode::UnknownQuestionnaire, "no questionnaire '" + qid + "'");

    if (p == "/api/v1/questionnaires/{id}/form") return {200, ok_body(quest::emit_form_spec(*def))};

    if (p == "/api/v1/questionnaires/{id}/responses") {
      if (!ctx.body_json) throw Error(ErrorCode::BadRequest, "request body is not valid JSON");
      json doc = *ctx.body_json;
      if (doc.is_object() && !doc.contains("answered_at")) doc["answered_at"] = cfg_.clock();
      const quest::ResponseSet rs = quest::validate_response(*def, doc);
      if (!store_->has_subject(rs.subject)) throw Error(ErrorCode::UnknownSubject, "unknown subject '" + rs.subject.str() + "'");
      const std::string id = store_->append_response(rs, ctx.session->username, master_key_);
      return {200, ok_body({{"response_id", id}, {"n_answers", rs.answers.size()}})};
    }

    // scores
    std::optional<SubjectId> subject;
    if (auto q = req.query.find("subject"); q != req.query.end()) subject = subject_arg(q->second);
    json list = json::array();
    for (const auto& sr : store_->list_responses(qid, subject, std::nullopt)) {
      json entry = {{"response_id", sr.response_id},
                    {"subject", sr.response.subject.str()},
                    {"answered_at", sr.response.answered_at},
                    {"answered_by", sr.answered_by},
                    {"version", sr.response.version}};
      if (sr.response.version == def->version) {
        try {
          entry["score"] = quest::to_json(quest::score_response(*def, sr.response));
        } catch (const Error& e) {
          entry["score"] = nullptr;
          entry["score_error"] = to_string(e.code());
        }
      } else {
        entry["score"] = nullptr;
        entry["score_error"] = "VersionMismatch";
      }
      list.push_back(std::move(entry));
    }
    return {200, ok_body(std::move(list))};
  }

  if (p == "/api/v1/portfolio") {
    json list = json::array();
    for (const auto& d : registry_->list_portfolio()) list.push_back(viz::to_json(d));
    return {200, ok_body(std::move(list))};
  }

  if (p == "/api/v1/viz/{plugin_id}/data") {
    const viz::DataStream s = registry_->build_data_stream(ctx.captures.at("plugin_id"), req.query, *store_);
    return {200, ok_body(viz::to_json(s))};
  }

  if (p == "/api/v1/ml/datasets") {
    const std::string task_name = req.query.count("task") ? req.query.at("task") : "classification";
    ml::Task task;
    if (task_name == "classification") task = ml::Task::Classification;
    else if (task_name == "regression") task = ml::Task::Regression;
    else throw Error(ErrorCode::BadRequest, "task must be classification or regression");
    ml::Dataset d = ml::parse_dataset_csv(req.body, task);
    json info = {{"rows", d.size()}, {"features", d.features.cols()}, {"task", task_name}};
    if (task == ml::Task::Classification) info["classes"] = d.num_classes;
    info["dataset_id"] = ml_->add_dataset(std::move(d));
    return {200, ok_body(std::move(info))};
  }

  if (p == "/api/v1/ml/train") {
    const std::string id = ml_->start(parse_json_body(req.body));
    return {200, ok_body({{"job_id", id}, {"status", "queued"}})};
  }

  if (p == "/api/v1/ml/jobs/{id}" || p == "/api/v1/ml/jobs/{id}/confusion") {
    const auto job = ml_->job(ctx.captures.at("id"));
    std::lock_guard lock(job->mutex);
    if (p == "/api/v1/ml/jobs/{id}") {
      json out = {{"job_id", ctx.captures.at("id")}, {"status", job->status}, {"history", job->history}};
      out["final_loss"] = job->history.empty() ? json(nullptr) : json(job->history.back());
      if (!job->error.empty()) out["error"] = job->error;
      if (job->metrics) out["accuracy"] = job->metrics->accuracy;
      return {200, ok_body(std::move(out))};
    }
    if (job->status != "done") throw Error(ErrorCode::JobNotFinished, "job is " + job->status);
    if (!job->confusion) throw Error(ErrorCode::BadRequest, "regression jobs have no confusion matrix");
    return {200, ok_body({{"matrix", ml::to_json(*job->confusion)}, {"metrics", ml::to_json(*job->metrics)}})};
  }

  throw Error(ErrorCode::NotFound, "route not implemented: " + p);
}

}  // namespace sierra::api
