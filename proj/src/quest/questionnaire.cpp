#include "sierra/quest/questionnaire.hpp"

#include <algorithm>

namespace sierra::quest {

const ScaleDef* QuestionnaireDef::find_scale(std::string_view name) const noexcept {
  auto it = std::find_if(scales.begin(), scales.end(), [&](const ScaleDef& s) { return s.name == name; });
  return it == scales.end() ? nullptr : &*it;
}

const ItemDef* QuestionnaireDef::find_item(std::string_view id) const noexcept {
  auto it = std::find_if(items.begin(), items.end(), [&](const ItemDef& i) { return i.id == id; });
  return it == items.end() ? nullptr : &*it;
}

std::size_t QuestionnaireDef::likert_count() const noexcept {
  return static_cast<std::size_t>(
      std::count_if(items.begin(), items.end(), [](const ItemDef& i) { return i.kind == ItemKind::Likert; }));
}

int reverse_value(const ScaleDef& scale, int v) {
  if (v < scale.lo || v > scale.hi) {
    throw Error(ErrorCode::OutOfRange, "value " + std::to_string(v) + " outside scale '" + scale.name + "' [" +
                                           std::to_string(scale.lo) + ", " + std::to_string(scale.hi) + "]");
  }
  return scale.lo + scale.hi - v;
}

std::string_view to_string(ScoreMode mode) noexcept { return mode == ScoreMode::Sum ? "sum" : "mean"; }

nlohmann::json to_json(const ResponseSet& rs) {
  nlohmann::json answers = nlohmann::json::object();
  for (const auto& [id, a] : rs.answers) {
    std::visit([&](const auto& v) { answers[id] = v; }, a);
  }
  return {{"questionnaire_id", rs.questionnaire_id},
          {"version", rs.version},
          {"subject", rs.subject.str()},
          {"answered_at", rs.answered_at},
          {"answers", std::move(answers)}};
}

nlohmann::json to_json(const ScoreReport& report) {
  return {{"total", report.total},
          {"per_item", report.per_item},
          {"n_scored", report.n_scored},
          {"score_mode", to_string(report.mode)}};
}

}  // namespace sierra::quest
