#include "vt/table.hpp"

#include <algorithm>
#include <cctype>

namespace vt {

namespace {

bool is_space(unsigned char c) { return std::isspace(c) != 0; }

bool is_word_byte(unsigned char c) {
  // UTF-8 lead/continuation bytes count as word bytes so multibyte text
  // clusters into runs instead of one token per byte.
  return std::isalnum(c) != 0 || c >= 0x80;
}

bool blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](char c) { return is_space(static_cast<unsigned char>(c)); });
}

void tokenize_words_and_punct(std::string_view text, std::vector<std::string>& out) {
  std::size_t i = 0;
  while (i < text.size()) {
    unsigned char c = static_cast<unsigned char>(text[i]);
    if (is_space(c)) {
      ++i;
      continue;
    }
    if (is_word_byte(c)) {
      std::size_t j = i + 1;
      while (j < text.size() && is_word_byte(static_cast<unsigned char>(text[j]))) ++j;
      out.emplace_back(text.substr(i, j - i));
      i = j;
    } else {
      out.emplace_back(text.substr(i, 1));
      ++i;
    }
  }
}

void tokenize_whitespace(std::string_view text, std::vector<std::string>& out) {
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && !is_space(static_cast<unsigned char>(text[j]))) ++j;
    if (j > i) out.emplace_back(text.substr(i, j - i));
    i = j;
  }
}

std::string object_path(std::size_t index, std::string_view field) {
  std::string p = "objects[" + std::to_string(index) + "]";
  if (!field.empty()) {
    p += '.';
    p += field;
  }
  return p;
}

void append_pair(std::string& out, std::string_view key, std::string_view value) {
  out += '"';
  out += key;
  out += "\": \"";
  out += json_escape(value);
  out += '"';
}

}  // namespace

std::string trim_copy(std::string_view text) {
  std::size_t b = 0;
  std::size_t e = text.size();
  while (b < e && is_space(static_cast<unsigned char>(text[b]))) ++b;
  while (e > b && is_space(static_cast<unsigned char>(text[e - 1]))) --e;
  return std::string(text.substr(b, e - b));
}

std::string json_escape(std::string_view text) {
  std::string out;
  out.reserve(text.size() + 8);
  for (unsigned char c : text) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\b': out += "\\b"; break;
      case '\f': out += "\\f"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      case '\t': out += "\\t"; break;
      default:
        if (c < 0x20) {
          static const char* hex = "0123456789abcdef";
          out += "\\u00";
          out += hex[(c >> 4) & 0xF];
          out += hex[c & 0xF];
        } else {
          out += static_cast<char>(c);
        }
    }
  }
  return out;
}

ValidationReport validate(const VisualTable& table, ValidationMode mode) {
  ValidationReport report;
  auto violation = [&](std::string path, std::string rule, std::string message) {
    report.violations.push_back({std::move(path), std::move(rule), std::move(message)});
  };
  auto flag = [&](std::string path, std::string rule, std::string message) {
    report.flags.push_back({std::move(path), std::move(rule), std::move(message)});
  };

  if (mode == ValidationMode::full && blank(table.scene_description)) {
    violation(std::string(kSceneKey), "scene_nonempty", "scene description must be non-empty");
  }
  for (const auto& [key, value] : table.extras) {
    (void)value;
    if (mode == ValidationMode::full) {
      violation(key, "extra_key", "unrecognized key in table");
    } else {
      flag(key, "extra_key", "unrecognized key preserved");
    }
  }
  for (std::size_t i = 0; i < table.objects.size(); ++i) {
    const ObjectEntry& entry = table.objects[i];
    if (blank(entry.category)) {
      violation(object_path(i, kCategoryKey), "category_nonempty",
                "object category must be non-empty");
    }
    if (mode == ValidationMode::full) {
      if (!entry.attribute.has_value() || blank(*entry.attribute)) {
        violation(object_path(i, kAttributeKey), "attribute_required",
                  "attribute description required in full mode");
      }
      if (!entry.knowledge.has_value() || blank(*entry.knowledge)) {
        violation(object_path(i, kKnowledgeKey), "knowledge_required",
                  "knowledge description required in full mode");
      }
    }
    for (const auto& [key, value] : entry.extras) {
      (void)value;
      if (mode == ValidationMode::full) {
        violation(object_path(i, key), "extra_key", "unrecognized key in object entry");
      } else {
        flag(object_path(i, key), "extra_key", "unrecognized key preserved");
      }
    }
  }
  return report;
}

std::string canonical_serialize(const VisualTable& table) {
  ValidationReport report = validate(table, ValidationMode::ablated);
  if (!report.ok()) {
    std::string detail = report.violations.front().path + ": " + report.violations.front().message;
    throw Error(ErrorKind::invalid_table, detail);
  }

  std::string out;
  out.reserve(256 + table.scene_description.size());
  out += '{';
  append_pair(out, kSceneKey, table.scene_description);
  out += ", \"";
  out += kObjectsKey;
  out += "\": [";
  for (std::size_t i = 0; i < table.objects.size(); ++i) {
    const ObjectEntry& entry = table.objects[i];
    if (i > 0) out += ", ";
    out += '{';
    append_pair(out, kCategoryKey, entry.category);
    if (entry.attribute.has_value()) {
      out += ", ";
      append_pair(out, kAttributeKey, *entry.attribute);
    }
    if (entry.knowledge.has_value()) {
      out += ", ";
      append_pair(out, kKnowledgeKey, *entry.knowledge);
    }
    out += '}';
  }
  out += "]}";
  return out;
}

std::vector<std::string> registered_tokenizers() {
  return {std::string(kDefaultTokenizer), "whitespace"};
}

bool tokenizer_registered(std::string_view tokenizer_id) {
  return tokenizer_id == kDefaultTokenizer || tokenizer_id == "whitespace";
}

std::vector<std::string> tokenize(std::string_view text, std::string_view tokenizer_id) {
  std::vector<std::string> out;
  if (tokenizer_id == kDefaultTokenizer) {
    tokenize_words_and_punct(text, out);
  } else if (tokenizer_id == "whitespace") {
    tokenize_whitespace(text, out);
  } else {
    throw Error(ErrorKind::unknown_tokenizer, std::string(tokenizer_id));
  }
  return out;
}

std::size_t count_text_tokens(std::string_view text, std::string_view tokenizer_id) {
  return tokenize(text, tokenizer_id).size();
}

TableStats count_tokens(const VisualTable& table, std::string_view tokenizer_id) {
  if (!tokenizer_registered(tokenizer_id)) {
    throw Error(ErrorKind::unknown_tokenizer, std::string(tokenizer_id));
  }
  TableStats stats;
  stats.tokenizer_id = std::string(tokenizer_id);
  std::string canonical = canonical_serialize(table);
  stats.token_count = static_cast<std::int64_t>(count_text_tokens(canonical, tokenizer_id));
  stats.object_count = static_cast<std::int64_t>(table.objects.size());
  stats.char_count = static_cast<std::int64_t>(canonical.size());
  stats.scene_chars = static_cast<std::int64_t>(table.scene_description.size());
  for (const ObjectEntry& entry : table.objects) {
    stats.category_chars += static_cast<std::int64_t>(entry.category.size());
    if (entry.attribute) stats.attribute_chars += static_cast<std::int64_t>(entry.attribute->size());
    if (entry.knowledge) stats.knowledge_chars += static_cast<std::int64_t>(entry.knowledge->size());
  }
  return stats;
}

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_table: return "invalid table";
    case ErrorKind::unknown_tokenizer: return "unknown tokenizer";
    case ErrorKind::unknown_benchmark: return "unknown benchmark";
    case ErrorKind::missing_table: return "missing table";
    case ErrorKind::unparseable: return "unparseable";
    case ErrorKind::schema_mismatch: return "schema mismatch";
    case ErrorKind::sample_too_large: return "sample too large";
    case ErrorKind::empty_verdicts: return "empty verdicts";
    case ErrorKind::judge_unavailable: return "judge unavailable";
    case ErrorKind::config: return "config error";
    case ErrorKind::io: return "io error";
  }
  return "error";
}

}  // namespace vt
