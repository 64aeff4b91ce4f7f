#include <charconv>
#include <set>
#include <sstream>

#include "sierra/quest/questionnaire.hpp"

namespace sierra::quest {
namespace {

enum class TokKind { Word, String, Int, DotDot };

struct Token {
  TokKind kind;
  std::string text;
  long long number = 0;
};

bool is_ident_start(char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_'; }
bool is_ident_char(char c) { return is_ident_start(c) || (c >= '0' && c <= '9'); }
bool is_digit(char c) { return c >= '0' && c <= '9'; }

std::vector<Token> tokenize(std::string_view line, int lineno) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < line.size()) {
    const char c = line[i];
    if (c == ' ' || c == '\t' || c == '\r') {
      ++i;
    } else if (c == '#') {
      break;
    } else if (c == '"') {
      std::string s;
      ++i;
      bool closed = false;
      while (i < line.size()) {
        char d = line[i++];
        if (d == '"') {
          closed = true;
          break;
        }
        if (d == '\\') {
          if (i >= line.size()) break;
          char e = line[i++];
          switch (e) {
            case 'n': s.push_back('\n'); break;
            case 't': s.push_back('\t'); break;
            case '"': s.push_back('"'); break;
            case '\\': s.push_back('\\'); break;
            default: throw ParseError(lineno, std::string("unknown escape '\\") + e + "'");
          }
        } else {
          s.push_back(d);
        }
      }
      if (!closed) throw ParseError(lineno, "unterminated string");
      out.push_back({TokKind::String, std::move(s)});
    } else if (c == '.' && i + 1 < line.size() && line[i + 1] == '.') {
      out.push_back({TokKind::DotDot, ".."});
      i += 2;
    } else if (is_digit(c) || (c == '-' && i + 1 < line.size() && is_digit(line[i + 1]))) {
      std::size_t j = i + 1;
      while (j < line.size() && is_digit(line[j])) ++j;
      Token t{TokKind::Int, std::string(line.substr(i, j - i))};
      int value = 0;
      auto [ptr, ec] = std::from_chars(line.data() + i, line.data() + j, value);
      if (ec != std::errc() || ptr != line.data() + j) {
        throw ParseError(lineno, "integer out of range '" + t.text + "'");
      }
      t.number = value;
      out.push_back(std::move(t));
      i = j;
    } else if (is_ident_start(c)) {
      std::size_t j = i + 1;
      while (j < line.size() && is_ident_char(line[j])) ++j;
      out.push_back({TokKind::Word, std::string(line.substr(i, j - i))});
      i = j;
    } else {
      throw ParseError(lineno, std::string("unexpected character '") + c + "'");
    }
  }
  return out;
}

bool is_valid_questionnaire_id(std::string_view s) {
  if (s.empty() || s.size() > 64) return false;
  for (char c : s) {
    if (!is_ident_char(c) && c != '-' && c != '.') return false;
  }
  return s.front() != '.';
}

class LineCursor {
 public:
  LineCursor(const std::vector<Token>& toks, int lineno) : toks_(toks), lineno_(lineno) {}

  bool done() const { return pos_ >= toks_.size(); }
  const Token* peek() const { return done() ? nullptr : &toks_[pos_]; }

  bool accept_word(std::string_view w) {
    if (!done() && toks_[pos_].kind == TokKind::Word && toks_[pos_].text == w) {
      ++pos_;
      return true;
    }
    return false;
  }

  const Token& expect(TokKind kind, std::string_view what) {
    if (done()) throw ParseError(lineno_, "expected " + std::string(what) + " at end of line");
    const Token& t = toks_[pos_];
    if (t.kind != kind) {
      throw ParseError(lineno_, "expected " + std::string(what) + ", found '" + t.text + "'");
    }
    ++pos_;
    return t;
  }

  void expect_word(std::string_view w) {
    if (!accept_word(w)) {
      const Token* t = peek();
      throw ParseError(lineno_, "expected '" + std::string(w) + "'" +
                                    (t ? ", found '" + t->text + "'" : std::string(" at end of line")));
    }
  }

  void expect_end() {
    if (!done()) throw ParseError(lineno_, "unexpected token '" + toks_[pos_].text + "'");
  }

 private:
  const std::vector<Token>& toks_;
  int lineno_;
  std::size_t pos_ = 0;
};

struct ParseState {
  QuestionnaireDef def;
  bool have_header = false;
  int header_line = 0;
  int score_line = 0;
  std::set<std::string> item_ids;
};

void parse_header(LineCursor& cur, ParseState& st, int lineno) {
  if (st.have_header) throw ParseError(lineno, "duplicate header");
  const std::string id = cur.expect(TokKind::String, "questionnaire id string").text;
  if (!is_valid_questionnaire_id(id)) throw ParseError(lineno, "invalid questionnaire id '" + id + "'");
  cur.expect_word("version");
  const long long version = cur.expect(TokKind::Int, "version number").number;
  if (version < 1) throw ParseError(lineno, "version must be >= 1");
  cur.expect_end();
  st.def.id = id;
  st.def.version = static_cast<int>(version);
  st.have_header = true;
  st.header_line = lineno;
}

void parse_scale(LineCursor& cur, ParseState& st, int lineno) {
  ScaleDef scale;
  scale.name = cur.expect(TokKind::Word, "scale name").text;
  if (st.def.find_scale(scale.name)) throw ParseError(lineno, "duplicate scale '" + scale.name + "'");
  cur.expect_word("likert");
  scale.lo = static_cast<int>(cur.expect(TokKind::Int, "scale lower bound").number);
  cur.expect(TokKind::DotDot, "'..'");
  scale.hi = static_cast<int>(cur.expect(TokKind::Int, "scale upper bound").number);
  if (scale.lo >= scale.hi) throw ParseError(lineno, "scale range must satisfy lo < hi");
  if (cur.accept_word("labels")) {
    while (!cur.done()) scale.labels.push_back(cur.expect(TokKind::String, "label string").text);
    const auto expected = static_cast<std::size_t>(scale.hi) - static_cast<std::size_t>(scale.lo) + 1;
    if (scale.labels.size() != expected) {
      throw ParseError(lineno, "label count " + std::to_string(scale.labels.size()) + " does not match scale size " +
                                   std::to_string(expected));
    }
  }
  cur.expect_end();
  st.def.scales.push_back(std::move(scale));
}

void parse_item(LineCursor& cur, ParseState& st, int lineno) {
  ItemDef item;
  item.id = cur.expect(TokKind::Word, "item id").text;
  if (st.item_ids.count(item.id)) throw ParseError(lineno, "duplicate item id '" + item.id + "'");
  item.prompt = cur.expect(TokKind::String, "prompt string").text;
  if (item.prompt.empty()) throw ParseError(lineno, "empty prompt");

  bool saw_scale = false, saw_text = false, saw_reverse = false, saw_optional = false;
  while (!cur.done()) {
    const Token& t = *cur.peek();
    auto once = [&](bool& flag) {
      if (flag) throw ParseError(lineno, "repeated modifier '" + t.text + "'");
      flag = true;
    };
    if (t.kind != TokKind::Word) throw ParseError(lineno, "unexpected token '" + t.text + "'");
    if (cur.accept_word("scale")) {
      once(saw_scale);
      item.scale = cur.expect(TokKind::Word, "scale name").text;
    } else if (cur.accept_word("text")) {
      once(saw_text);
    } else if (cur.accept_word("reverse")) {
      once(saw_reverse);
    } else if (cur.accept_word("optional")) {
      once(saw_optional);
    } else {
      throw ParseError(lineno, "unexpected token '" + t.text + "'");
    }
  }

  if (saw_text) {
    if (saw_reverse) throw ParseError(lineno, "reverse on text item");
    if (saw_scale) throw ParseError(lineno, "text item cannot reference a scale");
    item.kind = ItemKind::Text;
  } else {
    item.kind = ItemKind::Likert;
    if (!saw_scale) {
      if (st.def.scales.empty()) throw ParseError(lineno, "undeclared scale (no default scale declared)");
      item.scale = st.def.scales.front().name;
    } else if (!st.def.find_scale(item.scale)) {
      throw ParseError(lineno, "undeclared scale '" + item.scale + "'");
    }
    item.reverse = saw_reverse;
  }
  item.required = !saw_optional;
  st.item_ids.insert(item.id);
  st.def.items.push_back(std::move(item));
}

void parse_score(LineCursor& cur, ParseState& st, int lineno) {
  if (st.def.score_mode) throw ParseError(lineno, "duplicate score declaration");
  if (cur.accept_word("mean")) {
    st.def.score_mode = ScoreMode::Mean;
  } else if (cur.accept_word("sum")) {
    st.def.score_mode = ScoreMode::Sum;
  } else {
    throw ParseError(lineno, "score mode must be 'mean' or 'sum'");
  }
  cur.expect_end();
  st.score_line = lineno;
}

std::string quote(std::string_view s) {
  std::string out = "\"";
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      default: out.push_back(c);
    }
  }
  out.push_back('"');
  return out;
}

}  // namespace

QuestionnaireDef parse_questionnaire(std::string_view text) {
  ParseState st;
  int lineno = 0;
  int last_line = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view line = text.substr(start, end - start);
    ++lineno;
    start = end + 1;

    const auto toks = tokenize(line, lineno);
    if (toks.empty()) {
      if (end == text.size()) break;
      continue;
    }
    last_line = lineno;
    if (toks.front().kind != TokKind::Word) {
      throw ParseError(lineno, "unexpected token '" + toks.front().text + "'");
    }
    const std::string& keyword = toks.front().text;
    static const std::set<std::string> kKeywords = {"questionnaire", "scale", "item", "score"};
    if (!kKeywords.count(keyword)) throw ParseError(lineno, "unknown keyword '" + keyword + "'");
    if (keyword != "questionnaire" && !st.have_header) throw ParseError(lineno, "missing header");

    std::vector<Token> rest(toks.begin() + 1, toks.end());
    LineCursor cur(rest, lineno);
    if (keyword == "questionnaire") {
      parse_header(cur, st, lineno);
    } else if (keyword == "scale") {
      parse_scale(cur, st, lineno);
    } else if (keyword == "item") {
      parse_item(cur, st, lineno);
    } else {
      parse_score(cur, st, lineno);
    }
    if (end == text.size()) break;
  }

  if (!st.have_header) throw ParseError(1, "missing header");
  if (st.def.items.empty()) throw ParseError(last_line, "questionnaire has no items");
  if (st.def.score_mode && st.def.likert_count() == 0) {
    throw ParseError(st.score_line, "score declared but no likert items");
  }
  return std::move(st.def);
}

std::string serialize_questionnaire(const QuestionnaireDef& def) {
  std::ostringstream out;
  out << "questionnaire " << quote(def.id) << " version " << def.version << "\n";
  for (const auto& s : def.scales) {
    out << "scale " << s.name << " likert " << s.lo << ".." << s.hi;
    if (!s.labels.empty()) {
      out << " labels";
      for (const auto& l : s.labels) out << ' ' << quote(l);
    }
    out << "\n";
  }
  for (const auto& item : def.items) {
    out << "item " << item.id << ' ' << quote(item.prompt);
    if (item.kind == ItemKind::Text) {
      out << " text";
    } else {
      out << " scale " << item.scale;
      if (item.reverse) out << " reverse";
    }
    if (!item.required) out << " optional";
    out << "\n";
  }
  if (def.score_mode) out << "score " << to_string(*def.score_mode) << "\n";
  return out.str();
}

}  // namespace sierra::quest
