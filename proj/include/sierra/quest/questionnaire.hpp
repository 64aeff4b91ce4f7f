#pragma once

// Questionnaire Board: a line-oriented questionnaire DSL, response
// validation, reverse-coded Likert scoring and the client form document.
//
//   file   := header decl+
//   header := 'questionnaire' STRING 'version' INT
//   decl   := 'scale' IDENT 'likert' INT '..' INT ('labels' STRING+)?
//           | 'item' IDENT STRING ('scale' IDENT)? ('reverse')? ('optional')?
//           | 'item' IDENT STRING 'text' ('optional')?
//           | 'score' ('mean' | 'sum')
//
// One declaration per line; `#` starts a comment. Scales must be declared
// before use and the first declared scale is the default for likert items.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "sierra/core/model.hpp"

namespace sierra::quest {

struct ScaleDef {
  std::string name;
  int lo = 1;
  int hi = 5;
  std::vector<std::string> labels;  // empty, or exactly hi - lo + 1 entries

  bool operator==(const ScaleDef&) const = default;
};

enum class ItemKind { Likert, Text };
enum class ScoreMode { Mean, Sum };

struct ItemDef {
  std::string id;
  std::string prompt;
  ItemKind kind = ItemKind::Likert;
  std::string scale;  // empty for text items
  bool reverse = false;
  bool required = true;

  bool operator==(const ItemDef&) const = default;
};

struct QuestionnaireDef {
  std::string id;
  int version = 1;
  std::vector<ScaleDef> scales;  // declaration order; front() is the default
  std::vector<ItemDef> items;
  std::optional<ScoreMode> score_mode;  // unset means mean

  const ScaleDef* find_scale(std::string_view name) const noexcept;
  const ItemDef* find_item(std::string_view id) const noexcept;
  ScoreMode effective_score_mode() const noexcept { return score_mode.value_or(ScoreMode::Mean); }
  std::size_t likert_count() const noexcept;

  bool operator==(const QuestionnaireDef&) const = default;
};

/// Throws `ParseError` carrying the 1-based line of the offending declaration.
QuestionnaireDef parse_questionnaire(std::string_view text);

/// Canonical DSL text; parse_questionnaire(serialize_questionnaire(d)) == d.
std::string serialize_questionnaire(const QuestionnaireDef& def);

/// lo + hi - v. Throws OutOfRange when v lies outside the scale.
int reverse_value(const ScaleDef& scale, int v);

using Answer = std::variant<std::int64_t, std::string>;

struct ResponseSet {
  std::string questionnaire_id;
  int version = 1;
  SubjectId subject;
  std::int64_t answered_at = 0;
  std::map<std::string, Answer> answers;

  bool operator==(const ResponseSet&) const = default;
};

/// Validates a ResponseSet wire document
/// `{questionnaire_id, version, subject, answered_at, answers: {item: int|string}}`.
/// Item-level problems are collected and thrown together as a ResponseError
/// whose details name each offending item.
ResponseSet validate_response(const QuestionnaireDef& def, const nlohmann::json& document);

struct ScoreReport {
  double total = 0.0;
  std::map<std::string, double> per_item;  // post-reversal values
  int n_scored = 0;
  ScoreMode mode = ScoreMode::Mean;

  bool operator==(const ScoreReport&) const = default;
};

/// Text items and unanswered optional items do not contribute.
/// Throws NoScorableItems when no likert answer is present.
ScoreReport score_response(const QuestionnaireDef& def, const ResponseSet& rs);

/// Client-facing form document. Carries no scoring direction.
nlohmann::json emit_form_spec(const QuestionnaireDef& def);

nlohmann::json to_json(const ResponseSet& rs);
nlohmann::json to_json(const ScoreReport& report);
std::string_view to_string(ScoreMode mode) noexcept;

}  // namespace sierra::quest
