#include "sierra/quest/questionnaire.hpp"

namespace sierra::quest {

ResponseSet validate_response(const QuestionnaireDef& def, const nlohmann::json& doc) {
  if (!doc.is_object()) throw Error(ErrorCode::BadRequest, "response document must be a JSON object");

  ResponseSet rs;
  try {
    rs.questionnaire_id = doc.at("questionnaire_id").get<std::string>();
    rs.version = doc.at("version").get<int>();
    rs.subject = SubjectId(doc.at("subject").get<std::string>());
    rs.answered_at = doc.value("answered_at", std::int64_t{0});
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::BadRequest, std::string("malformed response document: ") + e.what());
  }
  if (rs.questionnaire_id != def.id) {
    throw Error(ErrorCode::BadRequest, "response targets questionnaire '" + rs.questionnaire_id + "', not '" + def.id + "'");
  }
  if (rs.version != def.version) {
    throw Error(ErrorCode::BadRequest, "response targets version " + std::to_string(rs.version) + ", current is " +
                                           std::to_string(def.version));
  }

  const auto answers_it = doc.find("answers");
  if (answers_it == doc.end() || !answers_it->is_object()) {
    throw Error(ErrorCode::BadRequest, "response document needs an 'answers' object");
  }

  std::vector<ErrorDetail> problems;
  for (const auto& [key, value] : answers_it->items()) {
    const ItemDef* item = def.find_item(key);
    if (!item) {
      problems.push_back({key, ErrorCode::UnknownItem, "no such item"});
      continue;
    }
    if (item->kind == ItemKind::Text) {
      if (!value.is_string()) {
        problems.push_back({key, ErrorCode::TypeMismatch, "text item expects a string"});
        continue;
      }
      rs.answers[key] = value.get<std::string>();
      continue;
    }
    if (!value.is_number_integer()) {
      problems.push_back({key, ErrorCode::TypeMismatch, "likert item expects an integer"});
      continue;
    }
    const ScaleDef& scale = *def.find_scale(item->scale);
    const auto v = value.get<std::int64_t>();
    if (v < scale.lo || v > scale.hi) {
      problems.push_back({key, ErrorCode::OutOfRange,
                          "answer " + std::to_string(v) + " outside [" + std::to_string(scale.lo) + ", " +
                              std::to_string(scale.hi) + "]"});
      continue;
    }
    rs.answers[key] = v;
  }
  for (const auto& item : def.items) {
    if (item.required && !answers_it->contains(item.id)) {
      problems.push_back({item.id, ErrorCode::MissingRequired, "required item not answered"});
    }
  }
  if (!problems.empty()) {
    throw Error(ErrorCode::ResponseError, "response rejected (" + std::to_string(problems.size()) + " problem(s))",
                std::move(problems));
  }
  return rs;
}

ScoreReport score_response(const QuestionnaireDef& def, const ResponseSet& rs) {
  ScoreReport report;
  report.mode = def.effective_score_mode();
  double sum = 0.0;
  for (const auto& item : def.items) {
    if (item.kind != ItemKind::Likert) continue;
    auto it = rs.answers.find(item.id);
    if (it == rs.answers.end()) continue;
    const auto* v = std::get_if<std::int64_t>(&it->second);
    if (!v) throw Error(ErrorCode::TypeMismatch, "likert item '" + item.id + "' holds a text answer");
    const ScaleDef& scale = *def.find_scale(item.scale);
    const int raw = static_cast<int>(*v);
    const int applied = item.reverse ? reverse_value(scale, raw) : raw;
    report.per_item[item.id] = applied;
    sum += applied;
    ++report.n_scored;
  }
  if (report.n_scored == 0) throw Error(ErrorCode::NoScorableItems, "response has no scorable answers");
  report.total = report.mode == ScoreMode::Mean ? sum / report.n_scored : sum;
  return report;
}

nlohmann::json emit_form_spec(const QuestionnaireDef& def) {
  nlohmann::json items = nlohmann::json::array();
  for (const auto& item : def.items) {
    nlohmann::json entry = {{"id", item.id}, {"prompt", item.prompt}, {"required", item.required}};
    if (item.kind == ItemKind::Text) {
      entry["kind"] = "text";
    } else {
      const ScaleDef& scale = *def.find_scale(item.scale);
      entry["kind"] = "likert";
      entry["min"] = scale.lo;
      entry["max"] = scale.hi;
      entry["labels"] = scale.labels;
    }
    items.push_back(std::move(entry));
  }
  return {{"questionnaire_id", def.id}, {"version", def.version}, {"items", std::move(items)}};
}

}  // namespace sierra::quest
