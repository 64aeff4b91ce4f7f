#include "sierra/cli/cli.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "sierra/api/service.hpp"
#include "sierra/ml/confusion.hpp"
#include "sierra/ml/dataset.hpp"
#include "sierra/ml/mlp.hpp"
#include "sierra/quest/questionnaire.hpp"
#include "sierra/store/store.hpp"

namespace sierra::cli {

namespace {

std::atomic<bool> g_stop{false};

extern "C" void on_signal(int) { g_stop = true; }

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::Io, "cannot read '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::string fmt_double(double v) {
  char buf[32];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::optional<crypto::MasterKey> env_key() {
  return crypto::MasterKey::from_env(std::string(api::kDefaultMasterKeyEnv).c_str());
}

struct CsvRow {
  std::size_t line;
  RawSample sample;
};

// header `channel,t_ms,value`
std::vector<CsvRow> read_sample_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error(ErrorCode::Io, "cannot read '" + path + "'");
  std::vector<CsvRow> rows;
  std::string line;
  std::size_t n = 0;
  bool header = false;
  while (std::getline(f, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (!header) {
      if (line != "channel,t_ms,value") {
        throw ParseError(static_cast<int>(n), "expected header 'channel,t_ms,value'");
      }
      header = true;
      continue;
    }
    const auto c1 = line.find(',');
    const auto c2 = c1 == std::string::npos ? c1 : line.find(',', c1 + 1);
    if (c2 == std::string::npos || line.find(',', c2 + 1) != std::string::npos) {
      throw ParseError(static_cast<int>(n), "expected 3 fields");
    }
    CsvRow row{n, {line.substr(0, c1), 0, 0.0}};
    const std::string t = line.substr(c1 + 1, c2 - c1 - 1);
    const std::string v = line.substr(c2 + 1);
    auto rt = std::from_chars(t.data(), t.data() + t.size(), row.sample.t_ms);
    if (rt.ec != std::errc() || rt.ptr != t.data() + t.size()) throw ParseError(static_cast<int>(n), "bad t_ms '" + t + "'");
    char* end = nullptr;
    row.sample.value = std::strtod(v.c_str(), &end);
    if (v.empty() || end != v.c_str() + v.size()) throw ParseError(static_cast<int>(n), "bad value '" + v + "'");
    rows.push_back(std::move(row));
  }
  if (!header) throw ParseError(static_cast<int>(std::max<std::size_t>(n, 1)), "expected header 'channel,t_ms,value'");
  return rows;
}

std::pair<std::string, int> split_addr(const std::string& addr) {
  const auto colon = addr.rfind(':');
  if (colon == std::string::npos) throw Error(ErrorCode::BadRequest, "--addr must be host:port");
  int port = 0;
  const std::string p = addr.substr(colon + 1);
  auto r = std::from_chars(p.data(), p.data() + p.size(), port);
  if (r.ec != std::errc() || r.ptr != p.data() + p.size() || port < 0 || port > 65535) {
    throw Error(ErrorCode::BadRequest, "bad port in --addr");
  }
  return {addr.substr(0, colon), port};
}

std::vector<std::size_t> parse_layers(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    std::size_t v = 0;
    auto r = std::from_chars(part.data(), part.data() + part.size(), v);
    if (part.empty() || r.ec != std::errc() || r.ptr != part.data() + part.size()) {
      throw Error(ErrorCode::BadArchitecture, "--layers must be comma separated sizes, got '" + text + "'");
    }
    out.push_back(v);
  }
  return out;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err) {
  CLI::App app{"sierra: remote health monitoring service and tools", "sierra"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string data_dir = "data";
  app.add_option("--data-dir", data_dir, "Store directory")->capture_default_str();

  // serve
  auto* serve = app.add_subcommand("serve", "Run the HTTP service");
  std::string addr = "127.0.0.1:8080";
  std::vector<std::string> device_keys;
  bool no_phi = false;
  serve->add_option("--addr", addr, "host:port to bind")->capture_default_str();
  serve->add_option("--device-key", device_keys, "KEY=DEVICE_ID, repeatable");
  serve->add_flag("--no-phi", no_phi, "Disable subject record endpoints (no master key needed)");

  // useradd
  auto* useradd = app.add_subcommand("useradd", "Create a user; password is read from stdin");
  std::string username, role, linked;
  useradd->add_option("username", username)->required();
  useradd->add_option("--role", role, "admin|expert|subject")->required();
  useradd->add_option("--subject", linked, "Linked subject (role subject only)");

  // subject
  auto* subject_cmd = app.add_subcommand("subject", "Subject records");
  subject_cmd->require_subcommand(1);
  auto* subject_add = subject_cmd->add_subcommand("add", "Register a subject");
  std::string subject_id, cohort;
  subject_add->add_option("id", subject_id)->required();
  subject_add->add_option("--cohort", cohort);

  // quest
  auto* quest_cmd = app.add_subcommand("quest", "Questionnaire definitions");
  quest_cmd->require_subcommand(1);
  std::string quest_file;
  auto* quest_validate = quest_cmd->add_subcommand("validate", "Parse a definition file");
  quest_validate->add_option("file", quest_file)->required();
  auto* quest_load = quest_cmd->add_subcommand("load", "Parse and store a definition file");
  quest_load->add_option("file", quest_file)->required();

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Bulk-ingest a channel,t_ms,value CSV");
  std::string csv_file, ingest_subject, device;
  std::uint64_t first_seq = 0;
  bool create_subject = false;
  ingest->add_option("--file", csv_file)->required();
  ingest->add_option("--subject", ingest_subject)->required();
  ingest->add_option("--device", device)->required();
  ingest->add_option("--seq", first_seq, "seq_no of the first chunk")->capture_default_str();
  ingest->add_flag("--create-subject", create_subject, "Register the subject first if it is unknown");

  // train
  auto* train = app.add_subcommand("train", "Train an MLP on a CSV dataset");
  std::string dataset_file, layers_text, activation = "relu", task_name = "classification";
  std::size_t epochs = 100, batch_size = 32;
  double lr = 0.01, momentum = 0.0;
  std::uint64_t seed = 0;
  train->add_option("--dataset", dataset_file)->required();
  train->add_option("--layers", layers_text, "e.g. 2,8,2")->required();
  train->add_option("--epochs", epochs)->capture_default_str();
  train->add_option("--lr", lr)->capture_default_str();
  train->add_option("--seed", seed)->capture_default_str();
  train->add_option("--batch-size", batch_size)->capture_default_str();
  train->add_option("--momentum", momentum)->capture_default_str();
  train->add_option("--activation", activation)->check(CLI::IsMember({"relu", "tanh"}))->capture_default_str();
  train->add_option("--task", task_name)->check(CLI::IsMember({"classification", "regression"}))->capture_default_str();

  // export
  auto* export_cmd = app.add_subcommand("export", "Print a stored series as CSV");
  std::string export_subject, channel;
  std::int64_t t0 = 0, t1 = kMaxTimestampMs;
  export_cmd->add_option("--subject", export_subject)->required();
  export_cmd->add_option("--channel", channel)->required();
  export_cmd->add_option("--t0", t0)->capture_default_str();
  export_cmd->add_option("--t1", t1)->capture_default_str();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  }

  try {
    if (*serve) {
      api::ServiceConfig cfg;
      std::tie(cfg.bind_host, cfg.port) = split_addr(addr);
      cfg.data_dir = data_dir;
      cfg.enable_phi = !no_phi;
      for (const auto& kv : device_keys) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos || eq == 0 || eq + 1 == kv.size()) {
          err << "error: --device-key expects KEY=DEVICE_ID\n";
          return kExitUsage;
        }
        cfg.device_keys[kv.substr(0, eq)] = kv.substr(eq + 1);
      }
      auto svc = api::compose_service(cfg);
      out << "listening on " << cfg.bind_host << ":" << svc->port() << std::endl;
      g_stop = false;
      auto prev_int = std::signal(SIGINT, on_signal);
      auto prev_term = std::signal(SIGTERM, on_signal);
      while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
      std::signal(SIGINT, prev_int);
      std::signal(SIGTERM, prev_term);
      svc->stop();
      return kExitOk;
    }

    if (*useradd) {
      std::string password;
      std::getline(in, password);
      if (!password.empty() && password.back() == '\r') password.pop_back();
      std::filesystem::create_directories(data_dir);
      auth::AuthService auth(std::filesystem::path(data_dir) / "users.jsonl");
      std::optional<SubjectId> link;
      if (!linked.empty()) link = SubjectId(linked);
      const auto r = auth::role_from_string(role);
      if (!r) {
        err << "error: --role must be admin, expert or subject\n";
        return kExitUsage;
      }
      const auto user = auth.create_user(username, password, *r, link);
      out << "created user " << user.username << " (" << auth::to_string(user.role) << ")\n";
      return kExitOk;
    }

    if (*subject_add) {
      store::Store st(data_dir);
      SubjectRecord rec;
      rec.id = SubjectId(subject_id);
      rec.cohort = cohort;
      rec.created_at = now_ms();
      st.put_subject(rec, env_key());
      out << "added subject " << subject_id << "\n";
      return kExitOk;
    }

    if (*quest_validate || *quest_load) {
      quest::QuestionnaireDef def;
      try {
        def = quest::parse_questionnaire(read_file(quest_file));
      } catch (const ParseError& e) {
        err << quest_file << ":" << e.line() << ": error: " << e.reason() << "\n";
        return kExitFailure;
      }
      if (*quest_load) {
        store::Store st(data_dir);
        st.put_questionnaire(def);
        out << "loaded " << def.id << " v" << def.version << " (" << def.items.size() << " items)\n";
      } else {
        out << quest_file << ": ok (" << def.id << " v" << def.version << ", " << def.items.size() << " items)\n";
      }
      return kExitOk;
    }

    if (*ingest) {
      std::vector<CsvRow> rows;
      try {
        rows = read_sample_csv(csv_file);
      } catch (const ParseError& e) {
        err << csv_file << ":" << e.line() << ": error: " << e.reason() << "\n";
        return kExitFailure;
      }
      store::Store st(data_dir);
      const SubjectId subj(ingest_subject);
      if (create_subject && !st.has_subject(subj)) {
        SubjectRecord rec;
        rec.id = subj;
        rec.created_at = now_ms();
        st.put_subject(rec, env_key());
      }
      std::size_t accepted = 0, rejected = 0, duplicates = 0, chunks = 0;
      for (std::size_t start = 0; start < rows.size(); start += store::kMaxBatchSamples) {
        const std::size_t end = std::min(rows.size(), start + store::kMaxBatchSamples);
        store::SampleBatch batch{DeviceId(device), subj, first_seq + chunks, {}};
        for (std::size_t i = start; i < end; ++i) batch.samples.push_back(rows[i].sample);
        const auto receipt = st.ingest_batch(batch);
        ++chunks;
        if (receipt.duplicate_batch) {
          ++duplicates;
          continue;
        }
        accepted += receipt.accepted;
        rejected += receipt.rejected.size();
        for (const auto& r : receipt.rejected) {
          err << csv_file << ":" << rows[start + r.index].line << ": rejected: " << to_string(r.reason) << "\n";
        }
      }
      out << "accepted " << accepted << " rejected " << rejected << " duplicate_batches " << duplicates
          << " batches " << chunks << "\n";
      return rejected ? kExitFailure : kExitOk;
    }

    if (*train) {
      const ml::Task task = task_name == "regression" ? ml::Task::Regression : ml::Task::Classification;
      ml::Dataset data;
      try {
        data = ml::parse_dataset_csv(read_file(dataset_file), task);
      } catch (const Error& e) {
        err << dataset_file << ": error: " << e.what() << "\n";
        return kExitFailure;
      }
      const auto layers = parse_layers(layers_text);
      if (layers.empty() || layers.front() != data.features.cols()) {
        err << "error: first layer must be " << data.features.cols() << " (feature count)\n";
        return kExitFailure;
      }
      ml::TrainConfig cfg;
      cfg.learning_rate = lr;
      cfg.epochs = epochs;
      cfg.batch_size = batch_size;
      cfg.momentum = momentum;
      cfg.seed = seed;
      auto model = ml::init_mlp(layers, activation == "tanh" ? ml::Activation::Tanh : ml::Activation::Relu, task, seed);
      const auto result = ml::train(std::move(model), data, cfg);
      for (std::size_t e = 0; e < result.history.size(); ++e) {
        if (e + 1 == result.history.size() || (e + 1) % 10 == 0) {
          out << "epoch " << (e + 1) << " loss " << fmt_double(result.history[e]) << "\n";
        }
      }
      out << "final_loss " << fmt_double(result.history.empty() ? 0.0 : result.history.back()) << "\n";
      if (task == ml::Task::Classification) {
        const auto cm = ml::confusion_matrix(data.labels, ml::predict_classes(result.model, data.features),
                                             data.num_classes);
        out << "train_accuracy " << fmt_double(ml::metrics(cm).accuracy) << "\n";
      }
      return kExitOk;
    }

    if (*export_cmd) {
      store::Store st(data_dir);
      const auto ts = st.query_series(SubjectId(export_subject), ChannelId(channel), t0, t1);
      out << "channel,t_ms,value\n";
      for (const auto& p : ts.points) out << channel << "," << p.t_ms << "," << fmt_double(p.value) << "\n";
      return kExitOk;
    }
  } catch (const Error& e) {
    err << "error: " << to_string(e.code()) << ": " << e.what() << "\n";
    for (const auto& d : e.details()) err << "  " << d.subject << ": " << d.message << "\n";
    return kExitFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace sierra::cli
