#include "vt/parse.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include <nlohmann/json.hpp>

namespace vt {

namespace {

using json = nlohmann::json;

struct Token {
  enum Kind { lbrace, rbrace, lbracket, rbracket, colon, comma, string, number, literal, garbage };
  Kind kind;
  std::size_t begin = 0;
  std::size_t end = 0;
  bool unterminated = false;  // string reached end of input before its closing quote
};

bool is_space(unsigned char c) { return std::isspace(c) != 0; }

// Tolerant scan: anything unknown becomes a garbage token instead of failing,
// so repair steps can reason about structure on arbitrary input.
std::vector<Token> lex(std::string_view text) {
  std::vector<Token> tokens;
  std::size_t i = 0;
  while (i < text.size()) {
    unsigned char c = static_cast<unsigned char>(text[i]);
    if (is_space(c)) {
      ++i;
      continue;
    }
    Token t;
    t.begin = i;
    switch (c) {
      case '{': t.kind = Token::lbrace; t.end = ++i; break;
      case '}': t.kind = Token::rbrace; t.end = ++i; break;
      case '[': t.kind = Token::lbracket; t.end = ++i; break;
      case ']': t.kind = Token::rbracket; t.end = ++i; break;
      case ':': t.kind = Token::colon; t.end = ++i; break;
      case ',': t.kind = Token::comma; t.end = ++i; break;
      case '"': {
        t.kind = Token::string;
        bool esc = false;
        bool closed = false;
        ++i;
        while (i < text.size()) {
          char s = text[i++];
          if (esc) {
            esc = false;
          } else if (s == '\\') {
            esc = true;
          } else if (s == '"') {
            closed = true;
            break;
          }
        }
        t.end = i;
        t.unterminated = !closed;
        break;
      }
      default:
        if (std::isdigit(c) || (c == '-' && i + 1 < text.size() &&
                                std::isdigit(static_cast<unsigned char>(text[i + 1])))) {
          t.kind = Token::number;
          ++i;
          while (i < text.size()) {
            char s = text[i];
            if (std::isdigit(static_cast<unsigned char>(s)) || s == '.' || s == 'e' || s == 'E' ||
                s == '+' || s == '-') {
              ++i;
            } else {
              break;
            }
          }
          t.end = i;
        } else if (std::isalpha(c)) {
          t.kind = Token::literal;
          ++i;
          while (i < text.size() && std::isalpha(static_cast<unsigned char>(text[i]))) ++i;
          t.end = i;
        } else {
          t.kind = Token::garbage;
          t.end = ++i;
        }
    }
    tokens.push_back(t);
  }
  return tokens;
}

std::string rebuild(std::string_view text, const std::vector<Token>& tokens) {
  std::string out;
  out.reserve(text.size());
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i > 0) out += ' ';
    out += text.substr(tokens[i].begin, tokens[i].end - tokens[i].begin);
  }
  return out;
}

bool remove_trailing_commas(std::vector<Token>& tokens) {
  bool changed = false;
  std::vector<Token> kept;
  kept.reserve(tokens.size());
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i].kind == Token::comma) {
      // look past any further commas to the next structural token
      std::size_t j = i;
      while (j < tokens.size() && tokens[j].kind == Token::comma) ++j;
      bool before_closer = j < tokens.size() && (tokens[j].kind == Token::rbrace ||
                                                 tokens[j].kind == Token::rbracket);
      if (before_closer || j > i + 1) {
        // drop all but the last comma of a run; drop all of them before a closer
        std::size_t keep_from = before_closer ? j : j - 1;
        if (keep_from > i) changed = true;
        i = keep_from - 1;
        continue;
      }
    }
    kept.push_back(tokens[i]);
  }
  tokens = std::move(kept);
  return changed;
}

bool unbalanced(const std::vector<Token>& tokens) {
  int depth_brace = 0;
  int depth_bracket = 0;
  for (const Token& t : tokens) {
    if (t.kind == Token::lbrace) ++depth_brace;
    if (t.kind == Token::rbrace) --depth_brace;
    if (t.kind == Token::lbracket) ++depth_bracket;
    if (t.kind == Token::rbracket) --depth_bracket;
    if (t.kind == Token::string && t.unterminated) return true;
  }
  return depth_brace != 0 || depth_bracket != 0;
}

// Closes an input cut off mid-stream: drops a dangling comma, terminates an
// unterminated string (discarding a half-written escape), and appends the
// closers still open on the bracket stack.
std::string close_at_eoi(std::string_view text, std::vector<Token> tokens, bool& changed) {
  changed = false;
  while (!tokens.empty() && tokens.back().kind == Token::comma) {
    tokens.pop_back();
    changed = true;
  }
  std::string out;
  std::vector<char> stack;
  for (const Token& t : tokens) {
    switch (t.kind) {
      case Token::lbrace: stack.push_back('}'); break;
      case Token::lbracket: stack.push_back(']'); break;
      case Token::rbrace:
      case Token::rbracket:
        if (!stack.empty()) stack.pop_back();
        break;
      default: break;
    }
  }
  out = rebuild(text, tokens);
  if (!tokens.empty() && tokens.back().kind == Token::string && tokens.back().unterminated) {
    std::size_t backslashes = 0;
    while (backslashes < out.size() && out[out.size() - 1 - backslashes] == '\\') ++backslashes;
    if (backslashes % 2 == 1) out.pop_back();
    out += '"';
    changed = true;
  }
  for (auto it = stack.rbegin(); it != stack.rend(); ++it) {
    out += *it;
    changed = true;
  }
  return out;
}

// Removes the last object entry opened directly inside an array (the
// half-written tail of a truncated objects list). Returns false when the
// input has no such entry.
bool drop_incomplete_tail(std::vector<Token>& tokens) {
  std::vector<Token::Kind> stack;
  std::size_t candidate = std::string::npos;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    Token::Kind k = tokens[i].kind;
    if (k == Token::lbrace) {
      if (!stack.empty() && stack.back() == Token::lbracket) candidate = i;
      stack.push_back(k);
    } else if (k == Token::lbracket) {
      stack.push_back(k);
    } else if (k == Token::rbrace || k == Token::rbracket) {
      if (!stack.empty()) stack.pop_back();
    }
  }
  if (candidate == std::string::npos) return false;
  tokens.resize(candidate);
  while (!tokens.empty() && tokens.back().kind == Token::comma) tokens.pop_back();
  return true;
}

// SAX scan for duplicate keys within a single object; runs on text that has
// already parsed, so no error path matters.
struct DuplicateKeyScan {
  std::vector<std::set<std::string>> scopes;
  bool duplicate = false;

  bool null() { return true; }
  bool boolean(bool) { return true; }
  bool number_integer(json::number_integer_t) { return true; }
  bool number_unsigned(json::number_unsigned_t) { return true; }
  bool number_float(json::number_float_t, const json::string_t&) { return true; }
  bool string(json::string_t&) { return true; }
  bool binary(json::binary_t&) { return true; }
  bool start_object(std::size_t) {
    scopes.emplace_back();
    return true;
  }
  bool key(json::string_t& k) {
    if (!scopes.empty() && !scopes.back().insert(k).second) duplicate = true;
    return true;
  }
  bool end_object() {
    if (!scopes.empty()) scopes.pop_back();
    return true;
  }
  bool start_array(std::size_t) { return true; }
  bool end_array() { return true; }
  bool parse_error(std::size_t, const std::string&, const json::exception&) { return false; }
};

bool has_duplicate_keys(const std::string& text) {
  DuplicateKeyScan scan;
  json::sax_parse(text, &scan);
  return scan.duplicate;
}

std::string underscored(std::string_view key) {
  std::string out(key);
  std::replace(out.begin(), out.end(), ' ', '_');
  return out;
}

struct StageResult {
  json value;
  std::vector<RepairAction> repairs;
  std::string final_text;
  bool ok = false;
};

json try_parse(const std::string& text) { return json::parse(text, nullptr, false); }

// Fence stripping + span isolation + the token-level repair ladder. Produces
// a parsed JSON value or nothing; records each applied step.
StageResult text_stage(std::string_view raw, std::string& residue) {
  StageResult result;
  std::string_view text = raw;
  std::string fence_residue;

  // (1) markdown code fences
  std::size_t fence = text.find("```");
  if (fence != std::string_view::npos) {
    std::size_t content_begin = fence + 3;
    std::size_t line_end = text.find('\n', content_begin);
    if (line_end != std::string_view::npos && line_end - content_begin <= 16) {
      content_begin = line_end + 1;  // skip a language tag line such as ```json
    }
    std::size_t closing = text.find("```", content_begin);
    std::string_view inner = closing == std::string_view::npos
                                 ? text.substr(content_begin)
                                 : text.substr(content_begin, closing - content_begin);
    if (inner.find('{') != std::string_view::npos) {
      result.repairs.push_back(RepairAction::strip_fences);
      fence_residue = trim_copy(text.substr(0, fence));
      if (closing != std::string_view::npos) {
        std::string after = trim_copy(text.substr(closing + 3));
        if (!after.empty()) {
          if (!fence_residue.empty()) fence_residue += '\n';
          fence_residue += after;
        }
      }
      text = inner;
    }
  }

  // (2) outermost {...} span
  std::size_t first = text.find('{');
  if (first == std::string_view::npos) return result;
  std::string_view tail = text.substr(first);
  std::vector<Token> tail_tokens = lex(tail);
  std::size_t span_end = std::string_view::npos;  // byte offset into tail
  {
    int depth = 0;
    for (const Token& t : tail_tokens) {
      if (t.kind == Token::lbrace) ++depth;
      if (t.kind == Token::rbrace && --depth == 0) {
        span_end = t.end;
        break;
      }
    }
  }
  std::string_view leading = text.substr(0, first);
  std::string_view trailing =
      span_end == std::string_view::npos ? std::string_view{} : tail.substr(span_end);
  std::string span(span_end == std::string_view::npos ? tail : tail.substr(0, span_end));
  std::string lead_trim = trim_copy(leading);
  std::string trail_trim = trim_copy(trailing);
  if (!lead_trim.empty() || !trail_trim.empty()) {
    result.repairs.push_back(RepairAction::isolate_span);
    residue = lead_trim;
    if (!trail_trim.empty()) {
      if (!residue.empty()) residue += '\n';
      residue += trail_trim;
    }
  }
  if (!fence_residue.empty()) {
    residue = residue.empty() ? fence_residue : fence_residue + '\n' + residue;
  }

  auto finish = [&](json value, std::string final_text,
                    std::vector<RepairAction> extra) -> StageResult& {
    result.value = std::move(value);
    result.final_text = std::move(final_text);
    for (RepairAction a : extra) result.repairs.push_back(a);
    result.ok = true;
    return result;
  };

  // (3) trailing commas
  std::vector<Token> tokens = lex(span);
  bool commas_removed = remove_trailing_commas(tokens);
  std::string text3 = commas_removed ? rebuild(span, tokens) : span;
  std::vector<RepairAction> applied;
  if (commas_removed) applied.push_back(RepairAction::remove_trailing_commas);
  if (json j = try_parse(text3); !j.is_discarded()) return finish(std::move(j), text3, applied);

  // (4) close brackets / string at end of input
  if (unbalanced(tokens)) {
    bool changed = false;
    std::string text4 = close_at_eoi(span, tokens, changed);
    auto applied4 = applied;
    if (changed) applied4.push_back(RepairAction::close_brackets);
    if (json j = try_parse(text4); !j.is_discarded()) return finish(std::move(j), text4, applied4);

    // (5) drop the half-written final entry, then close again
    std::vector<Token> trimmed = tokens;
    if (drop_incomplete_tail(trimmed)) {
      std::string text5 = close_at_eoi(span, trimmed, changed);
      auto applied5 = applied;
      applied5.push_back(RepairAction::close_brackets);
      applied5.push_back(RepairAction::drop_incomplete_tail);
      if (json j = try_parse(text5); !j.is_discarded())
        return finish(std::move(j), text5, applied5);
    }
  } else {
    // balanced yet unparseable: a structurally broken final entry
    std::vector<Token> trimmed = tokens;
    if (drop_incomplete_tail(trimmed)) {
      bool changed = false;
      std::string text5 = close_at_eoi(span, trimmed, changed);
      auto applied5 = applied;
      applied5.push_back(RepairAction::drop_incomplete_tail);
      if (changed) applied5.push_back(RepairAction::close_brackets);
      if (json j = try_parse(text5); !j.is_discarded())
        return finish(std::move(j), text5, applied5);
    }
  }
  return result;  // ok == false
}

struct MappedKey {
  const json* value = nullptr;
  bool aliased = false;
};

MappedKey find_key(const json& obj, std::string_view canonical) {
  if (auto it = obj.find(canonical); it != obj.end()) return {&*it, false};
  if (auto it = obj.find(underscored(canonical)); it != obj.end()) return {&*it, true};
  return {};
}

bool matches_any(std::string_view key, std::initializer_list<std::string_view> canonicals) {
  for (std::string_view canonical : canonicals) {
    if (key == canonical || key == underscored(canonical)) return true;
  }
  return false;
}

bool known_table_key(std::string_view key) { return matches_any(key, {kSceneKey, kObjectsKey}); }

bool known_entry_key(std::string_view key) {
  return matches_any(key, {kCategoryKey, kAttributeKey, kKnowledgeKey});
}

void fail(ParseOutcome& outcome, ErrorKind kind, std::string detail) {
  outcome.table.reset();
  outcome.error = kind;
  outcome.error_detail = std::move(detail);
}

// json value -> VisualTable, tolerating aliased keys and preserving extras.
void schema_stage(const json& value, const std::string& final_text, ParseOutcome& outcome) {
  if (!value.is_object()) {
    fail(outcome, ErrorKind::schema_mismatch, "top-level JSON value is not an object");
    return;
  }
  bool aliased = false;
  bool extras_seen = false;
  VisualTable table;

  MappedKey scene = find_key(value, kSceneKey);
  if (scene.value) {
    if (!scene.value->is_string()) {
      fail(outcome, ErrorKind::schema_mismatch, "scene description must be a string");
      return;
    }
    table.scene_description = scene.value->get<std::string>();
    aliased |= scene.aliased;
  } else {
    outcome.repairs.push_back(RepairAction::missing_scene);
  }

  MappedKey objects = find_key(value, kObjectsKey);
  if (objects.value) {
    if (!objects.value->is_array()) {
      fail(outcome, ErrorKind::schema_mismatch, "objects must be an array");
      return;
    }
    aliased |= objects.aliased;
    std::size_t index = 0;
    for (const json& element : *objects.value) {
      std::string path = "objects[" + std::to_string(index) + "]";
      if (!element.is_object()) {
        fail(outcome, ErrorKind::schema_mismatch, path + " must be an object");
        return;
      }
      ObjectEntry entry;
      MappedKey category = find_key(element, kCategoryKey);
      if (!category.value || !category.value->is_string()) {
        fail(outcome, ErrorKind::schema_mismatch, path + " lacks a string object category");
        return;
      }
      entry.category = category.value->get<std::string>();
      if (trim_copy(entry.category).empty()) {
        fail(outcome, ErrorKind::schema_mismatch, path + " has a blank object category");
        return;
      }
      aliased |= category.aliased;
      for (auto [canonical, slot] :
           {std::pair{kAttributeKey, &entry.attribute}, std::pair{kKnowledgeKey, &entry.knowledge}}) {
        MappedKey field = find_key(element, canonical);
        if (!field.value) continue;
        if (!field.value->is_string()) {
          fail(outcome, ErrorKind::schema_mismatch,
               path + "." + std::string(canonical) + " must be a string");
          return;
        }
        *slot = field.value->get<std::string>();
        aliased |= field.aliased;
      }
      for (const auto& [key, nested] : element.items()) {
        if (!known_entry_key(key)) {
          entry.extras.emplace(key, nested.dump());
          extras_seen = true;
        }
      }
      table.objects.push_back(std::move(entry));
      ++index;
    }
  } else {
    outcome.repairs.push_back(RepairAction::missing_objects);
  }

  for (const auto& [key, nested] : value.items()) {
    if (!known_table_key(key)) {
      table.extras.emplace(key, nested.dump());
      extras_seen = true;
    }
  }

  if (aliased) outcome.repairs.push_back(RepairAction::alias_keys);
  if (extras_seen) outcome.repairs.push_back(RepairAction::extra_keys_preserved);
  if (has_duplicate_keys(final_text)) {
    outcome.repairs.push_back(RepairAction::duplicate_key_last_wins);
  }
  outcome.table = std::move(table);
}

}  // namespace

const char* to_string(RepairAction action) {
  switch (action) {
    case RepairAction::strip_fences: return "strip_fences";
    case RepairAction::isolate_span: return "isolate_span";
    case RepairAction::remove_trailing_commas: return "remove_trailing_commas";
    case RepairAction::close_brackets: return "close_brackets";
    case RepairAction::drop_incomplete_tail: return "drop_incomplete_tail";
    case RepairAction::alias_keys: return "alias_keys";
    case RepairAction::duplicate_key_last_wins: return "duplicate_key_last_wins";
    case RepairAction::missing_scene: return "missing_scene";
    case RepairAction::missing_objects: return "missing_objects";
    case RepairAction::extra_keys_preserved: return "extra_keys_preserved";
  }
  return "unknown";
}

ParseOutcome extract_and_parse(std::string_view raw, const ParseOptions& options) {
  ParseOutcome outcome;
  if (raw.size() > options.max_input_bytes) {
    fail(outcome, ErrorKind::unparseable,
         "input exceeds " + std::to_string(options.max_input_bytes) + " byte cap");
    return outcome;
  }

  StageResult stage = text_stage(raw, outcome.residue);
  outcome.repairs = stage.repairs;
  if (!stage.ok) {
    fail(outcome, ErrorKind::unparseable, "no recoverable JSON object in input");
    return outcome;
  }
  schema_stage(stage.value, stage.final_text, outcome);
  if (!outcome.table.has_value()) return outcome;

  if (options.policy == ParsePolicy::strict) {
    bool extras = !outcome.table->extras.empty() ||
                  std::any_of(outcome.table->objects.begin(), outcome.table->objects.end(),
                              [](const ObjectEntry& e) { return !e.extras.empty(); });
    if (!outcome.repairs.empty() || extras) {
      std::string detail = extras ? "unexpected keys present" : "repairs required:";
      for (RepairAction a : outcome.repairs) {
        detail += ' ';
        detail += to_string(a);
      }
      ErrorKind kind = ErrorKind::schema_mismatch;
      for (RepairAction a : outcome.repairs) {
        if (a == RepairAction::strip_fences || a == RepairAction::isolate_span ||
            a == RepairAction::remove_trailing_commas || a == RepairAction::close_brackets ||
            a == RepairAction::drop_incomplete_tail) {
          kind = ErrorKind::unparseable;
          break;
        }
      }
      fail(outcome, kind, detail);
    }
  }
  return outcome;
}

ParseOutcome extract_and_parse(std::string_view raw, ParsePolicy policy) {
  ParseOptions options;
  options.policy = policy;
  return extract_and_parse(raw, options);
}

ParseStats fuzz_corpus_check(const std::vector<std::string>& corpus) {
  if (corpus.empty()) throw Error(ErrorKind::config, "fuzz corpus must be nonempty");
  ParseStats stats;
  for (const std::string& raw : corpus) {
    ParseOutcome outcome = extract_and_parse(raw, ParsePolicy::lenient);
    if (outcome.strict_ok()) {
      ++stats.strict_ok;
    } else if (outcome.ok()) {
      ++stats.repaired;
    } else {
      ++stats.unparseable;
    }
  }
  return stats;
}

}  // namespace vt
