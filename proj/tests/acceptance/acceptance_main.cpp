// Acceptance suite: one line per criterion, non-zero exit if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <httplib.h>

#include "sierra/api/router.hpp"
#include "sierra/api/service.hpp"
#include "sierra/auth/auth.hpp"
#include "sierra/ml/confusion.hpp"
#include "sierra/ml/mlp.hpp"
#include "sierra/quest/questionnaire.hpp"
#include "sierra/store/segment.hpp"
#include "sierra/store/store.hpp"
#include "sierra/viz/registry.hpp"
#include "sierra/viz/transforms.hpp"
#include "unit/test_helpers.hpp"

using namespace sierra;
using nlohmann::json;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v) {
  std::ostringstream s;
  s << std::setprecision(3) << v;
  return s.str();
}

#define EXPECT(cond, msg)                   \
  do {                                      \
    if (!(cond)) return Outcome{false, msg}; \
  } while (0)

// ---------------------------------------------------------------------------
// Questionnaire scoring against a brute-force oracle

struct GenItem {
  std::string id;
  bool text = false;
  int lo = 0, hi = 0;
  bool reverse = false;
  bool required = true;
};

Outcome quest_oracle() {
  std::mt19937_64 rng(20240601);
  auto pick = [&](int lo, int hi) { return lo + static_cast<int>(rng() % static_cast<std::uint64_t>(hi - lo + 1)); };
  double worst = 0;
  int scored = 0, unscorable = 0;

  for (int trial = 0; trial < 1000; ++trial) {
    const int n_scales = pick(1, 3);
    std::vector<std::pair<int, int>> scales;
    std::ostringstream src;
    src << "questionnaire \"gen" << trial << "\" version " << pick(1, 9) << "\n";
    for (int s = 0; s < n_scales; ++s) {
      const int lo = pick(-3, 3);
      const int hi = lo + pick(1, 9);
      scales.emplace_back(lo, hi);
      src << "scale sc" << s << " likert " << lo << ".." << hi << "\n";
    }
    const int mode = pick(0, 2);  // 0 unset, 1 mean, 2 sum
    std::vector<GenItem> items;
    const int n_items = pick(1, 15);
    for (int i = 0; i < n_items; ++i) {
      GenItem it;
      it.id = "i" + std::to_string(i);
      it.text = pick(0, 99) < 15;
      it.required = pick(0, 99) >= 25;
      src << "item " << it.id << " \"Prompt " << i << "\"";
      if (it.text) {
        src << " text";
      } else {
        const int s = pick(0, n_scales - 1);
        std::tie(it.lo, it.hi) = scales[s];
        if (s != 0 || pick(0, 1)) src << " scale sc" << s;
        it.reverse = pick(0, 99) < 40;
        if (it.reverse) src << " reverse";
      }
      if (!it.required) src << " optional";
      src << "\n";
      items.push_back(it);
    }
    if (mode == 1) src << "score mean\n";
    if (mode == 2) src << "score sum\n";

    bool any_likert = false;
    for (const auto& it : items) any_likert |= !it.text;
    if (!any_likert && mode != 0) {
      // A score line needs a likert item; the generator drops it instead.
      std::string text = src.str();
      text.erase(text.rfind("score "));
      src.str(text);
      src.seekp(0, std::ios::end);
    }

    json answers = json::object();
    double sum = 0;
    int n = 0;
    std::map<std::string, double> per_item;
    for (const auto& it : items) {
      const bool answer = it.required || pick(0, 99) < 60;
      if (!answer) continue;
      if (it.text) {
        answers[it.id] = "free text " + std::to_string(rng() % 1000);
      } else {
        const int v = pick(it.lo, it.hi);
        answers[it.id] = v;
        const double applied = it.reverse ? it.lo + it.hi - v : v;
        per_item[it.id] = applied;
        sum += applied;
        ++n;
      }
    }

    const auto def = quest::parse_questionnaire(src.str());
    const json doc = {{"questionnaire_id", def.id},
                      {"version", def.version},
                      {"subject", "s1"},
                      {"answered_at", 0},
                      {"answers", answers}};
    const auto rs = quest::validate_response(def, doc);
    if (n == 0) {
      bool threw = false;
      try {
        quest::score_response(def, rs);
      } catch (const Error& e) {
        threw = e.code() == ErrorCode::NoScorableItems;
      }
      EXPECT(threw, "trial " + std::to_string(trial) + ": expected NoScorableItems");
      ++unscorable;
      continue;
    }
    const double expected = (mode == 2) ? sum : sum / n;
    const auto report = quest::score_response(def, rs);
    EXPECT(report.n_scored == n, "trial " + std::to_string(trial) + ": n_scored differs");
    EXPECT(report.per_item == per_item, "trial " + std::to_string(trial) + ": per-item values differ");
    worst = std::max(worst, std::abs(report.total - expected));
    ++scored;
  }
  EXPECT(worst <= 1e-9, "max |engine - oracle| = " + fmt(worst));

  // Oxford fixture: the reverse count is read from the source text.
  const std::string text = slurp_file(std::filesystem::path(SIERRA_FIXTURES) / "oxford.quest");
  std::istringstream lines(text);
  int items = 0, r = 0;
  json answers = json::object();
  for (std::string line; std::getline(lines, line);) {
    std::istringstream words(line);
    std::string kw, id;
    words >> kw >> id;
    if (kw != "item") continue;
    ++items;
    answers[id] = 4;
    for (std::string w; words >> w;) r += w == "reverse";
  }
  const double closed_form = (4.0 * (29 - r) + 3.0 * r) / 29.0;
  const auto def = quest::parse_questionnaire(text);
  const auto report = quest::score_response(
      def, quest::validate_response(def, {{"questionnaire_id", def.id},
                                          {"version", def.version},
                                          {"subject", "s1"},
                                          {"answered_at", 0},
                                          {"answers", answers}}));
  EXPECT(items == 29, "oxford fixture has " + std::to_string(items) + " items");
  EXPECT(std::abs(report.total - closed_form) <= 1e-9,
         "oxford total " + fmt(report.total) + " vs closed form " + fmt(closed_form));
  std::ostringstream d;
  d << scored << " scored + " << unscorable << " unscorable pairs, max err " << worst << "; oxford r=" << r
    << " total " << std::setprecision(12) << report.total;
  return {true, d.str()};
}

// ---------------------------------------------------------------------------
// DSL corpus

Outcome dsl_roundtrip() {
  int ok = 0, bad = 0;
  std::set<std::string> reasons;
  for (const auto& entry : std::filesystem::directory_iterator(SIERRA_CORPUS)) {
    if (entry.path().extension() != ".quest") continue;
    const std::string name = entry.path().filename().string();
    const std::string text = slurp_file(entry.path());
    std::string header = text.substr(0, text.find('\n'));
    if (!header.empty() && header.back() == '\r') header.pop_back();
    if (header == "# expect: ok") {
      const auto a = quest::parse_questionnaire(text);
      const auto b = quest::parse_questionnaire(quest::serialize_questionnaire(a));
      EXPECT(a == b, name + ": parse(serialize(parse)) differs");
      EXPECT(quest::serialize_questionnaire(b) == quest::serialize_questionnaire(a), name + ": serializer unstable");
      ++ok;
      continue;
    }
    std::istringstream hs(header);
    std::string hash, expect, error;
    int line = 0;
    hs >> hash >> expect >> error >> line;
    std::string needle;
    std::getline(hs, needle);
    needle.erase(0, needle.find_first_not_of(' '));
    EXPECT(error == "error" && line > 0 && !needle.empty(), name + ": malformed expectation header");
    try {
      quest::parse_questionnaire(text);
      return {false, name + ": parsed but should fail"};
    } catch (const ParseError& e) {
      EXPECT(e.line() == line, name + ": line " + std::to_string(e.line()) + ", expected " + std::to_string(line));
      EXPECT(e.reason().find(needle) != std::string::npos, name + ": reason '" + e.reason() + "'");
      reasons.insert(needle);
    }
    ++bad;
  }
  EXPECT(ok + bad >= 20, "corpus has only " + std::to_string(ok + bad) + " files");
  return {true, std::to_string(ok + bad) + " files: " + std::to_string(ok) + " valid round-trip, " + std::to_string(bad) +
                    " errors (" + std::to_string(reasons.size()) + " distinct) at designated lines"};
}

// ---------------------------------------------------------------------------
// Gradient check

Outcome gradient_check() {
  std::mt19937_64 rng(777);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  double worst = 0;
  std::string worst_cfg;
  int relu = 0;
  const ml::Activation acts[] = {ml::Activation::Tanh, ml::Activation::Relu, ml::Activation::Identity};
  for (int c = 0; c < 100; ++c) {
    const bool classify = rng() % 2 == 0;
    std::vector<std::size_t> sizes = {1 + rng() % 5};
    const std::size_t hidden_layers = rng() % 3;
    for (std::size_t h = 0; h < hidden_layers; ++h) sizes.push_back(1 + rng() % 6);
    sizes.push_back(classify ? 2 + rng() % 4 : 1 + rng() % 3);
    const auto act = acts[rng() % 3];
    relu += act == ml::Activation::Relu;
    auto model = ml::init_mlp(sizes, act, classify ? ml::Task::Classification : ml::Task::Regression, rng());
    // Zero init biases put relu units fed only by dead units exactly on the
    // kink, where a central difference is not a derivative. Random biases
    // move every pre-activation off it.
    for (auto& layer : model.layers)
      for (auto& b : layer.bias) b = 0.5 * u(rng);

    ml::Dataset batch;
    const std::size_t rows = 1 + rng() % 8;
    batch.task = model.task;
    batch.features = ml::Matrix(rows, sizes.front());
    for (auto& x : batch.features.data()) x = u(rng);
    if (classify) {
      batch.num_classes = sizes.back();
      for (std::size_t i = 0; i < rows; ++i) batch.labels.push_back(static_cast<int>(rng() % sizes.back()));
    } else {
      batch.targets = ml::Matrix(rows, sizes.back());
      for (auto& x : batch.targets.data()) x = u(rng);
    }
    const double err = ml::grad_check(model, batch, ml::default_loss(model.task));
    if (err > worst) {
      worst = err;
      std::ostringstream s;
      s << "config " << c << " [";
      for (std::size_t i = 0; i < sizes.size(); ++i) s << (i ? "," : "") << sizes[i];
      s << "]";
      worst_cfg = s.str();
    }
  }
  std::ostringstream d;
  d << "100 configs (" << relu << " relu), max relative error " << std::setprecision(3) << worst << " (" << worst_cfg << ")";
  return {worst < 1e-5, d.str()};
}

// ---------------------------------------------------------------------------
// Learning sanity

double accuracy(const ml::MlpModel& m, const ml::Dataset& d) {
  const auto pred = ml::predict_classes(m, d.features);
  const auto cm = ml::confusion_matrix(d.labels, pred, d.num_classes);
  return ml::metrics(cm).accuracy;
}

Outcome learning_sanity() {
  ml::Dataset xor_data;
  xor_data.features = ml::Matrix{{0, 0}, {0, 1}, {1, 0}, {1, 1}};
  xor_data.labels = {0, 1, 1, 0};
  xor_data.num_classes = 2;
  const std::vector<std::size_t> layers = {2, 8, 2};
  ml::TrainConfig cfg;
  cfg.learning_rate = 0.1;
  cfg.epochs = 2000;
  cfg.batch_size = 4;
  cfg.momentum = 0.9;
  cfg.seed = 7;
  const auto xr = ml::train(ml::init_mlp(layers, ml::Activation::Tanh, ml::Task::Classification, 7), xor_data, cfg);
  const double xor_acc = accuracy(xr.model, xor_data);
  EXPECT(xor_acc == 1.0, "xor train accuracy " + fmt(xor_acc));

  // Block averages of 100 epochs never rise.
  std::vector<double> blocks;
  for (std::size_t s = 0; s + 100 <= xr.history.size(); s += 100) {
    double m = 0;
    for (std::size_t i = s; i < s + 100; ++i) m += xr.history[i];
    blocks.push_back(m / 100);
  }
  for (std::size_t i = 1; i < blocks.size(); ++i) {
    EXPECT(blocks[i] <= blocks[i - 1], "xor loss window " + std::to_string(i) + " rose");
  }

  // Two separable blobs, split 140 / 60.
  std::mt19937_64 rng(11);
  std::normal_distribution<double> noise(0.0, 0.9);
  std::vector<std::array<double, 3>> rows;
  while (rows.size() < 200) {
    const int label = static_cast<int>(rows.size() % 2);
    const double cx = label ? 2.0 : -2.0;
    const double x = cx + noise(rng), y = cx + noise(rng);
    if (label ? (x + y <= 0.5) : (x + y >= -0.5)) continue;  // keep a margin around x + y = 0
    rows.push_back({x, y, static_cast<double>(label)});
  }
  std::shuffle(rows.begin(), rows.end(), rng);
  auto make = [&](std::size_t from, std::size_t to) {
    ml::Dataset d;
    d.features = ml::Matrix(to - from, 2);
    d.num_classes = 2;
    for (std::size_t i = from; i < to; ++i) {
      d.features(i - from, 0) = rows[i][0];
      d.features(i - from, 1) = rows[i][1];
      d.labels.push_back(static_cast<int>(rows[i][2]));
    }
    return d;
  };
  const auto train_set = make(0, 140), test_set = make(140, 200);
  ml::TrainConfig bc;
  bc.learning_rate = 0.05;
  bc.epochs = 100;
  bc.batch_size = 16;
  bc.momentum = 0.9;
  bc.seed = 3;
  const auto br = ml::train(ml::init_mlp(layers, ml::Activation::Relu, ml::Task::Classification, 3), train_set, bc);
  const double blob_acc = accuracy(br.model, test_set);
  EXPECT(blob_acc >= 0.95, "blob test accuracy " + fmt(blob_acc));
  return {true, "xor accuracy 1.0 (final loss " + fmt(xr.history.back()) + "), blob test accuracy " + fmt(blob_acc)};
}

// ---------------------------------------------------------------------------
// Confusion matrix and metrics

Outcome confusion_exactness() {
  using ml::confusion_matrix;
  {
    const std::vector<int> t = {0, 1, 0, 0}, p = {0, 1, 1, 0};
    const auto cm = confusion_matrix(t, p, 2);
    EXPECT(cm.at(0, 0) == 2 && cm.at(0, 1) == 1 && cm.at(1, 0) == 0 && cm.at(1, 1) == 1, "[[2,1],[0,1]] counts");
    EXPECT(cm.total() == 4 && cm.trace() == 3, "[[2,1],[0,1]] totals");
    const auto m = ml::metrics(cm);
    EXPECT(m.accuracy == 0.75, "accuracy " + fmt(m.accuracy));
    EXPECT(m.precision[0] == 1.0 && m.precision[1] == 0.5, "precision");
    EXPECT(m.recall[0] == 2.0 / 3.0 && m.recall[1] == 1.0, "recall");
  }
  {
    const std::vector<int> t = {0, 0, 1, 1, 2, 2}, p = {0, 1, 1, 1, 0, 0};
    const auto cm = confusion_matrix(t, p, 3);
    const std::uint64_t expected[3][3] = {{1, 1, 0}, {0, 2, 0}, {2, 0, 0}};
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) EXPECT(cm.at(i, j) == expected[i][j], "3-class counts");
    const auto m = ml::metrics(cm);
    EXPECT(m.accuracy == 0.5, "3-class accuracy");
    EXPECT(m.precision[0] == 1.0 / 3.0 && m.precision[1] == 2.0 / 3.0 && !m.precision[2], "3-class precision");
    EXPECT(m.recall[0] == 0.5 && m.recall[1] == 1.0 && m.recall[2] == 0.0, "3-class recall");
  }
  {
    const std::vector<int> t = {0, 0}, p = {0, 1};
    const auto m = ml::metrics(confusion_matrix(t, p, 3));
    EXPECT(m.precision[1] == 0.0 && !m.recall[1], "class predicted but absent");
    EXPECT(!m.precision[2] && !m.recall[2], "class neither present nor predicted");
  }
  {
    const auto cm = confusion_matrix(std::vector<int>{}, std::vector<int>{}, 2);
    EXPECT(cm.total() == 0, "empty matrix not zero");
    bool threw = false;
    try {
      ml::metrics(cm);
    } catch (const Error& e) {
      threw = e.code() == ErrorCode::EmptyMatrix;
    }
    EXPECT(threw, "metrics of an empty matrix must raise EmptyMatrix");
  }
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t k = 2 + rng() % 6, n = 1 + rng() % 500;
    std::vector<int> t(n), p(n);
    for (std::size_t i = 0; i < n; ++i) {
      t[i] = static_cast<int>(rng() % k);
      p[i] = static_cast<int>(rng() % k);
    }
    const auto cm = confusion_matrix(t, p, k);
    std::uint64_t hits = 0;
    for (std::size_t i = 0; i < n; ++i) hits += t[i] == p[i];
    EXPECT(cm.total() == n, "total differs from row count");
    EXPECT(cm.trace() == hits, "trace differs from hit count");
    EXPECT(ml::metrics(cm).accuracy == static_cast<double>(hits) / static_cast<double>(n), "accuracy not trace/total");
  }
  return {true, "hand cases ([[2,1],[0,1]] accuracy 0.75, 3-class, 0/0 undefined, empty) and 1000 random matrices"};
}

// ---------------------------------------------------------------------------
// Ingestion fuzz against an in-memory reference

Outcome ingestion_fuzz() {
  TempDir tmp;
  const auto key = crypto::MasterKey::random();
  std::mt19937_64 rng(99);
  const std::vector<std::string> subjects = {"s1", "s2"};
  const std::vector<std::string> channels = {"hr", "emg", "angle"};
  std::map<std::pair<std::string, std::string>, std::map<std::int64_t, double>> reference;
  std::vector<store::SampleBatch> sent;
  std::size_t samples = 0, fresh = 0, replays = 0, rejected = 0;
  std::map<std::string, std::uint64_t> next_seq;

  store::Store st(tmp.path());
  for (const auto& s : subjects) {
    SubjectRecord rec;
    rec.id = SubjectId(s);
    st.put_subject(rec, key);
  }
  // Every fifth submission replays an earlier batch.
  while (samples < 10'000) {
    if ((fresh + replays) % 5 == 4) {
      const auto& again = sent[rng() % sent.size()];
      const std::string before = slurp_tree(tmp.path());
      const auto r = st.ingest_batch(again);
      EXPECT(r.duplicate_batch && r.accepted == 0, "replay was not recognised");
      EXPECT(slurp_tree(tmp.path()) == before, "replay changed on-disk bytes");
      ++replays;
      continue;
    }
    store::SampleBatch b;
    const std::string device = "dev" + std::to_string(rng() % 3);
    b.device = DeviceId(device);
    b.subject = SubjectId(subjects[rng() % subjects.size()]);
    b.seq_no = next_seq[device]++;
    const std::size_t n = std::min<std::size_t>(1 + rng() % 120, 10'000 - samples);
    for (std::size_t i = 0; i < n; ++i) {
      RawSample s{channels[rng() % channels.size()], static_cast<std::int64_t>(rng() % 20'000),
                  static_cast<double>(static_cast<int>(rng() % 20001) - 10000) / 16.0};
      if (rng() % 50 == 0) s.value = std::nan("");
      b.samples.push_back(s);
    }
    const auto r = st.ingest_batch(b);
    EXPECT(!r.duplicate_batch, "fresh batch flagged duplicate");
    std::set<std::size_t> bad;
    for (const auto& x : r.rejected) bad.insert(x.index);
    for (std::size_t i = 0; i < b.samples.size(); ++i) {
      const bool finite = std::isfinite(b.samples[i].value);
      EXPECT(finite != static_cast<bool>(bad.count(i)), "rejection set differs from the non-finite samples");
      if (finite) reference[{b.subject.str(), b.samples[i].channel}][b.samples[i].t_ms] = b.samples[i].value;
    }
    rejected += bad.size();
    samples += n;
    ++fresh;
    sent.push_back(std::move(b));
  }

  auto check_windows = [&](const store::Store& s, std::mt19937_64& wr) -> Outcome {
    for (int w = 0; w < 100; ++w) {
      const std::string subj = subjects[wr() % subjects.size()];
      const std::string ch = channels[wr() % channels.size()];
      std::int64_t t0 = static_cast<std::int64_t>(wr() % 21'000), t1 = static_cast<std::int64_t>(wr() % 21'000);
      if (t0 > t1) std::swap(t0, t1);
      std::vector<Point> expected;
      const auto& ref = reference[{subj, ch}];
      for (auto it = ref.lower_bound(t0); it != ref.end() && it->first < t1; ++it) expected.push_back({it->first, it->second});
      std::vector<Point> got;
      try {
        got = s.query_series(SubjectId(subj), ChannelId(ch), t0, t1).points;
      } catch (const Error& e) {
        if (!(e.code() == ErrorCode::UnknownChannel && ref.empty())) throw;
      }
      if (got != expected) return {false, "window " + std::to_string(w) + " differs from reference"};
    }
    return {true, ""};
  };
  std::mt19937_64 wr(1234);
  auto live = check_windows(st, wr);
  if (!live.pass) return live;
  st.close();
  store::Store reopened(tmp.path());
  std::mt19937_64 wr2(1234);
  auto after = check_windows(reopened, wr2);
  if (!after.pass) return {false, "after reopen: " + after.detail};
  std::ostringstream d;
  d << samples << " samples in " << fresh << " batches + " << replays << " replays ("
    << fmt(100.0 * replays / static_cast<double>(fresh + replays)) << "%), " << rejected
    << " non-finite rejected; 100 windows match live and after reopen";
  return {true, d.str()};
}

// ---------------------------------------------------------------------------
// Crash safety

Outcome crash_safety() {
  const auto key = crypto::MasterKey::random();
  for (std::size_t k = 0; k < store::kSegmentRecordSize; ++k) {
    TempDir tmp;
    std::vector<RawSample> first;
    for (int i = 1; i <= 10; ++i) first.push_back({"hr", i * 1000, i * 1.25});
    {
      store::Store st(tmp.path());
      SubjectRecord rec;
      rec.id = SubjectId("s1");
      st.put_subject(rec, key);
      st.ingest_batch({DeviceId("d"), rec.id, 1, first});
    }
    const auto seg = tmp.path() / "series/s1/hr.seg";
    const auto intact = store::kSegmentHeaderSize + 9 * store::kSegmentRecordSize;
    std::filesystem::resize_file(seg, intact + k);

    store::Store st(tmp.path());
    const auto pts = st.query_series(SubjectId("s1"), ChannelId("hr"), 0, kMaxTimestampMs).points;
    EXPECT(pts.size() == 9, "offset " + std::to_string(k) + ": " + std::to_string(pts.size()) + " records readable");
    for (int i = 0; i < 9; ++i) {
      EXPECT((pts[i] == Point{(i + 1) * 1000, (i + 1) * 1.25}), "offset " + std::to_string(k) + ": record altered");
    }
    st.ingest_batch({DeviceId("d"), SubjectId("s1"), 2, {{"hr", 50'000, 7.0}}});
    const auto after = st.query_series(SubjectId("s1"), ChannelId("hr"), 0, kMaxTimestampMs).points;
    EXPECT(after.size() == 10 && after.back() == (Point{50'000, 7.0}), "offset " + std::to_string(k) + ": append after repair");
    EXPECT(std::filesystem::file_size(seg) == intact + store::kSegmentRecordSize,
           "offset " + std::to_string(k) + ": torn tail not cut");
  }
  return {true, "all 16 truncation offsets: 9 prior records intact, partial ignored, next append repairs the tail"};
}

// ---------------------------------------------------------------------------
// Shared HTTP helpers

struct Http {
  httplib::Client client;
  std::string token;
  explicit Http(int port) : client("127.0.0.1", port) {}

  httplib::Headers headers() const {
    httplib::Headers h;
    if (!token.empty()) h.emplace("Authorization", "Bearer " + token);
    return h;
  }
  json get(const std::string& path, int* status = nullptr) {
    auto r = client.Get(path, headers());
    if (!r) throw std::runtime_error("GET " + path + " failed");
    if (status) *status = r->status;
    return json::parse(r->body);
  }
  json post(const std::string& path, const std::string& body, const std::string& type, int* status = nullptr,
            httplib::Headers extra = {}) {
    auto h = headers();
    h.insert(extra.begin(), extra.end());
    auto r = client.Post(path, h, body, type);
    if (!r) throw std::runtime_error("POST " + path + " failed");
    if (status) *status = r->status;
    return json::parse(r->body);
  }
  void login(const std::string& user, const std::string& password) {
    token.clear();
    int status = 0;
    const json r = post("/api/v1/auth/login", json{{"username", user}, {"password", password}}.dump(), "application/json", &status);
    if (status != 200) throw std::runtime_error("login failed: " + r.dump());
    token = r["data"]["token"];
  }
};

const char* kPassword = "acceptance-password-1";

// ---------------------------------------------------------------------------
// Confidentiality

Outcome confidentiality() {
  TempDir tmp;
  const auto key = crypto::MasterKey::random();
  const std::string env = "SIERRA_ACCEPTANCE_MASTER_KEY";
  ::setenv(env.c_str(), crypto::hex_encode(key.bytes()).c_str(), 1);

  const std::vector<std::string> secrets = {"Zelda Quimby-Farnsworth", "zq.farnsworth@example.org", "+1-555-0142-7781",
                                            "allergic to penicillin and latex", "Bartholomew Okonkwo-Lindqvist",
                                            "stairs hurt after the long walk 7731", "slept badly, knee swollen 4412"};
  {
    api::ServiceConfig cfg;
    cfg.data_dir = tmp.path();
    cfg.port = 0;
    cfg.master_key_env = env;
    cfg.device_keys = {{"k-dev-1", "dev1"}};
    auto svc = api::compose_service(cfg);
    svc->api().auth().create_user("clin1", kPassword, auth::Role::Expert);
    Http http(svc->port());
    http.login("clin1", kPassword);
    int status = 0;

    http.post("/api/v1/subjects",
              json{{"id", "s1"}, {"cohort", "knee"}, {"phi", {{"name", secrets[0]}, {"contact", secrets[1]}, {"phone", secrets[2]}, {"notes", secrets[3]}}}}.dump(),
              "application/json", &status);
    EXPECT(status == 200, "subject s1 create: " + std::to_string(status));
    http.post("/api/v1/subjects", json{{"id", "s2"}, {"cohort", "knee"}, {"phi", {{"name", secrets[4]}}}}.dump(),
              "application/json", &status);
    EXPECT(status == 200, "subject s2 create");
    const json back = http.get("/api/v1/subjects/s1", &status);
    EXPECT(status == 200 && back["data"]["phi"]["notes"] == secrets[3], "PHI does not round-trip over HTTP");

    const std::string quest =
        "questionnaire \"daily\" version 1\nscale s likert 1..5\nitem pain \"Pain today\" reverse\n"
        "item diary \"Anything else?\" text optional\n";
    http.post("/api/v1/questionnaires", quest, "text/plain", &status);
    EXPECT(status == 200, "questionnaire upload");
    for (int i = 0; i < 2; ++i) {
      const json resp = {{"questionnaire_id", "daily"},
                         {"version", 1},
                         {"subject", i ? "s2" : "s1"},
                         {"answers", {{"pain", 2 + i}, {"diary", secrets[5 + i]}}}};
      http.post("/api/v1/questionnaires/daily/responses", resp.dump(), "application/json", &status);
      EXPECT(status == 200, "response submit");
    }
    const json batch = {{"device_id", "dev1"}, {"subject_id", "s1"}, {"seq_no", 1},
                        {"samples", {{{"channel", "hr"}, {"t_ms", 1}, {"value", 70}}}}};
    http.token.clear();
    http.post("/api/v1/ingest", batch.dump(), "application/json", &status, {{"X-Device-Key", "k-dev-1"}});
    EXPECT(status == 200, "ingest");
    svc->stop();
  }

  const std::string all = slurp_tree(tmp.path());
  std::size_t hits = 0;
  for (const auto& s : secrets) hits += all.find(s) != std::string::npos;
  EXPECT(hits == 0, std::to_string(hits) + " plaintext strings found on disk");

  // Every bit of every stored envelope.
  std::vector<crypto::EncryptedField> envelopes;
  std::istringstream subj(slurp_file(tmp.path() / "subjects.jsonl"));
  for (std::string line; std::getline(subj, line);) {
    const json rec = json::parse(line);
    for (const auto& [field, ef] : rec.at("phi").items()) envelopes.push_back(crypto::encrypted_field_from_json(ef));
  }
  std::istringstream resp(slurp_file(tmp.path() / "responses.jsonl"));
  for (std::string line; std::getline(resp, line);) {
    const json rec = json::parse(line);
    envelopes.push_back(crypto::encrypted_field_from_json(rec.at("answers").at("diary")));
  }
  EXPECT(envelopes.size() == 7, "found " + std::to_string(envelopes.size()) + " of 7 stored envelopes");
  std::size_t flips = 0;
  for (const auto& ef : envelopes) {
    EXPECT(!crypto::decrypt_field(ef, key, ef.aad).empty(), "stored envelope does not decrypt");
    for (std::size_t byte = 0; byte < ef.ciphertext.size(); ++byte) {
      for (int bit = 0; bit < 8; ++bit) {
        auto bad = ef;
        bad.ciphertext[byte] ^= static_cast<std::uint8_t>(1u << bit);
        bool auth_failure = false;
        try {
          crypto::decrypt_field(bad, key, bad.aad);
        } catch (const Error& e) {
          auth_failure = e.code() == ErrorCode::AuthFailure;
        }
        EXPECT(auth_failure, "flipped bit decrypted or wrong error");
        ++flips;
      }
    }
  }

  // Through the store: corrupt the file itself and read the record back.
  const auto subjects_file = tmp.path() / "subjects.jsonl";
  const std::string original = slurp_file(subjects_file);
  std::size_t store_flips = 0;
  for (std::size_t byte = 0; byte < 8; ++byte) {
    json first = json::parse(original.substr(0, original.find('\n')));
    auto ef = crypto::encrypted_field_from_json(first["phi"]["name"]);
    ef.ciphertext[byte * 3 % ef.ciphertext.size()] ^= static_cast<std::uint8_t>(1u << byte);
    first["phi"]["name"] = crypto::to_json(ef);
    std::ofstream(subjects_file, std::ios::binary | std::ios::trunc) << first.dump() << "\n"
                                                                     << original.substr(original.find('\n') + 1);
    store::Store st(tmp.path());
    bool auth_failure = false;
    try {
      st.get_subject(SubjectId("s1"), key);
    } catch (const Error& e) {
      auth_failure = e.code() == ErrorCode::AuthFailure;
    }
    EXPECT(auth_failure, "store returned a tampered record");
    ++store_flips;
  }
  std::ofstream(subjects_file, std::ios::binary | std::ios::trunc) << original;
  return {true, std::to_string(secrets.size()) + " secrets, 0 plaintext hits; " + std::to_string(flips) +
                    " single-bit flips over " + std::to_string(envelopes.size()) + " envelopes and " +
                    std::to_string(store_flips) + " on-disk flips all AuthFailure"};
}

// ---------------------------------------------------------------------------
// Auth matrix

Outcome auth_matrix() {
  TempDir tmp;
  const auto key = crypto::MasterKey::random();
  api::ServiceConfig cfg;
  cfg.data_dir = tmp.path();
  cfg.device_keys = {{"k-dev-1", "dev1"}};
  api::Api a(cfg, key);
  auto& st = a.store();
  auto& au = a.auth();
  au.create_user("root1", kPassword, auth::Role::Admin);
  au.create_user("clin1", kPassword, auth::Role::Expert);
  au.create_user("pat1", kPassword, auth::Role::Subject, SubjectId("s1"));
  const std::map<auth::Role, std::string> users = {
      {auth::Role::Admin, "root1"}, {auth::Role::Expert, "clin1"}, {auth::Role::Subject, "pat1"}};
  for (const char* s : {"s1", "s2"}) {
    SubjectRecord rec;
    rec.id = SubjectId(s);
    st.put_subject(rec, key);
    st.ingest_batch({DeviceId("dev1"), rec.id, std::uint64_t(s[1]), {{"hr", 1000, 1}, {"hr", 2000, 2}}});
  }
  st.put_questionnaire(quest::parse_questionnaire("questionnaire \"mood\" version 1\nscale s likert 1..5\nitem a \"A\"\n"));

  std::map<auth::Role, std::string> tokens;
  for (const auto& [role, name] : users) tokens[role] = au.authenticate(name, kPassword).token;

  auto request = [&](const api::RouteInfo& route, const std::string& token, const std::string& subject, int n) {
    api::ApiRequest req;
    req.method = route.method;
    req.path = route.pattern;
    auto put = [&](const std::string& name, const std::string& value) {
      req.path.replace(req.path.find(name), name.size(), value);
    };
    if (route.pattern == "/api/v1/subjects/{id}") put("{id}", subject);
    if (route.pattern.find("/questionnaires/{id}") != std::string::npos) put("{id}", "mood");
    if (route.pattern.find("{plugin_id}") != std::string::npos) put("{plugin_id}", "timeseries_line");
    if (route.pattern.find("/ml/jobs/{id}") != std::string::npos) put("{id}", "job1");
    req.query = {{"subject", subject}, {"channel", "hr"}};
    if (route.pattern == "/api/v1/subjects") req.body = json{{"id", "new" + std::to_string(n)}}.dump();
    if (route.pattern == "/api/v1/questionnaires" && route.method == "POST") {
      req.body = "questionnaire \"q" + std::to_string(n) + "\" version 1\nscale s likert 1..5\nitem a \"A\"\n";
    }
    if (route.pattern == "/api/v1/questionnaires/{id}/responses") {
      req.body = json{{"questionnaire_id", "mood"}, {"version", 1}, {"subject", subject}, {"answers", {{"a", 3}}}}.dump();
    }
    if (route.pattern == "/api/v1/ml/datasets") req.body = "x,y\n0,0\n1,1\n";
    if (route.pattern == "/api/v1/ml/train") req.body = json{{"dataset_id", "ds1"}, {"layers", {1, 2}}, {"epochs", 1}}.dump();
    if (!token.empty()) req.headers["authorization"] = "Bearer " + token;
    return req;
  };

  // Seed ds1 / job1 so the ml routes have something to find.
  {
    api::RouteInfo ds{"POST", "/api/v1/ml/datasets", api::Guard::User, auth::Action::RunMl};
    api::RouteInfo tr{"POST", "/api/v1/ml/train", api::Guard::User, auth::Action::RunMl};
    if (a.handle(request(ds, tokens[auth::Role::Admin], "s1", 0)).status != 200) return {false, "dataset seed failed"};
    if (a.handle(request(tr, tokens[auth::Role::Admin], "s1", 0)).status != 200) return {false, "job seed failed"};
  }

  int checked = 0, denied = 0, n = 1;
  for (const auto& route : api::Api::routes()) {
    if (route.guard == api::Guard::Public) continue;
    if (route.guard == api::Guard::Device) {
      const auto before = st.access_count();
      api::ApiRequest req;
      req.method = route.method;
      req.path = route.pattern;
      req.body = json{{"device_id", "dev1"}, {"subject_id", "s1"}, {"seq_no", 99}, {"samples", {{{"channel", "hr"}, {"t_ms", 5}, {"value", 1}}}}}.dump();
      EXPECT(a.handle(req).status == 401 && st.access_count() == before, "ingest without key");
      req.headers["x-device-key"] = "wrong";
      EXPECT(a.handle(req).status == 401 && st.access_count() == before, "ingest with unknown key");
      for (const auto& [role, token] : tokens) {
        req.headers = {{"authorization", "Bearer " + token}};
        EXPECT(a.handle(req).status == 401 && st.access_count() == before, "ingest with a user session");
      }
      req.headers = {{"x-device-key", "k-dev-1"}};
      EXPECT(a.handle(req).status == 200, "ingest with device key");
      checked += 5;
      continue;
    }
    {
      const auto before = st.access_count();
      const auto r = a.handle(request(route, "", "s1", n++));
      EXPECT(r.status == 401 && st.access_count() == before, route.pattern + " without a session");
      ++checked;
    }
    for (const auto role : auth::kAllRoles) {
      for (const std::string subject : {"s1", "s2"}) {
        std::string token = tokens[role];
        if (route.action == auth::Action::Logout) token = au.authenticate(users.at(role), kPassword).token;
        const auth::Rule rule = auth::policy(role, *route.action);
        const bool allow = rule == auth::Rule::Allow || (rule == auth::Rule::OwnSubjectOnly && subject == "s1");
        const auto before = st.access_count();
        const auto r = a.handle(request(route, token, subject, n++));
        const std::string where = route.method + " " + route.pattern + " as " + std::string(auth::to_string(role)) +
                                  " on " + subject + ": status " + std::to_string(r.status);
        if (allow) {
          EXPECT(r.status != 401 && r.status != 403, where);
        } else {
          EXPECT(r.status == 403, where);
          EXPECT(st.access_count() == before, where + " touched the store");
          ++denied;
        }
        ++checked;
      }
    }
  }
  return {true, std::to_string(checked) + " (role, route, subject) requests match the policy; " + std::to_string(denied) +
                    " denials with zero store access"};
}

// ---------------------------------------------------------------------------
// Knee exercise case study

Outcome knee_case_study() {
  TempDir tmp;
  const auto key = crypto::MasterKey::random();
  ::setenv("SIERRA_MASTER_KEY", crypto::hex_encode(key.bytes()).c_str(), 1);
  const std::string data = (tmp.path() / "data").string();
  const std::string csv = std::string(SIERRA_FIXTURES) + "/knee_exercise.csv";
  const std::string cmd = std::string("\"") + SIERRA_CLI_PATH + "\" --data-dir \"" + data + "\" ingest --file \"" + csv +
                          "\" --subject knee01 --device brace01 --create-subject > \"" +
                          (tmp.path() / "ingest.log").string() + "\" 2>&1";
  const int rc = std::system(cmd.c_str());
  EXPECT(rc == 0, "cli ingest exited with " + std::to_string(rc) + ": " + slurp_file(tmp.path() / "ingest.log"));

  api::ServiceConfig cfg;
  cfg.data_dir = data;
  cfg.port = 0;
  std::map<std::string, json> fetched;
  {
    auto svc = api::compose_service(cfg);
    svc->api().auth().create_user("clin1", kPassword, auth::Role::Expert);
    Http http(svc->port());
    http.login("clin1", kPassword);
    for (const std::string ch : {"knee_angle_deg", "emg_rms_mv", "heart_rate_bpm"}) {
      int s1 = 0, s2 = 0;
      fetched["daily/" + ch] = http.get("/api/v1/viz/daily_aggregate/data?subject=knee01&channel=" + ch, &s1);
      fetched["line/" + ch] =
          http.get("/api/v1/viz/timeseries_line/data?subject=knee01&channel=" + ch + "&max_points=100", &s2);
      EXPECT(s1 == 200 && s2 == 200, ch + ": http status " + std::to_string(s1) + "/" + std::to_string(s2));
    }
    svc->stop();
  }

  store::Store st(data);
  std::size_t total_points = 0;
  for (const std::string ch : {"knee_angle_deg", "emg_rms_mv", "heart_rate_bpm"}) {
    const auto pts = st.query_series(SubjectId("knee01"), ChannelId(ch), 0, kMaxTimestampMs).points;
    total_points += pts.size();
    json daily = json::array();
    for (const auto& p : viz::aggregate_daily(pts, viz::DailyStat::Mean, 0)) daily.push_back({p.t_ms, p.value});
    json line = json::array();
    const auto reduced = viz::downsample_buckets(pts, 100, viz::DownsampleMode::Mean);
    for (const auto& p : std::get<std::vector<viz::SeriesPoint>>(reduced)) line.push_back({p.t, p.y});
    const json& d = fetched["daily/" + ch]["data"]["payload"]["points"];
    const json& l = fetched["line/" + ch]["data"]["payload"]["points"];
    EXPECT(d == daily, ch + ": daily_aggregate payload differs from direct composition");
    EXPECT(l == line, ch + ": timeseries_line payload differs from direct composition");
    EXPECT(daily.size() == 4, ch + ": expected 4 days, got " + std::to_string(daily.size()));
    EXPECT(line.size() == 100, ch + ": expected 100 buckets, got " + std::to_string(line.size()));
  }
  EXPECT(total_points == 12'000, "stored " + std::to_string(total_points) + " of 12000 fixture rows");
  return {true, "12000 rows via CLI; 3 channels x (4 daily means, 100 buckets) equal direct composition"};
}

struct Criterion {
  std::string name;
  double limit_s;  // 0: no runtime bound
  std::function<Outcome()> run;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {"questionnaire-oracle", 5, quest_oracle},
      {"dsl-round-trip", 0, dsl_roundtrip},
      {"gradient-check", 60, gradient_check},
      {"learning-sanity", 30, learning_sanity},
      {"confusion-metrics", 0, confusion_exactness},
      {"ingestion-fuzz", 0, ingestion_fuzz},
      {"crash-safety", 0, crash_safety},
      {"confidentiality", 0, confidentiality},
      {"auth-matrix", 0, auth_matrix},
      {"knee-case-study", 10, knee_case_study},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (o.pass && c.limit_s > 0 && secs >= c.limit_s) {
      o = {false, o.detail + "; runtime " + fmt(secs) + " s exceeds " + fmt(c.limit_s) + " s"};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS " : "FAIL ") << std::left << std::setw(22) << c.name << " " << std::fixed
              << std::setprecision(2) << secs << "s";
    if (c.limit_s > 0) std::cout << " (limit " << std::setprecision(0) << c.limit_s << "s)";
    std::cout << std::defaultfloat << "  " << o.detail << std::endl;
  }
  std::cout << (criteria.size() - failed) << "/" << criteria.size() << " criteria passed" << std::endl;
  return failed ? 1 : 0;
}
