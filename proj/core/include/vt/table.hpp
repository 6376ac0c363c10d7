#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "vt/error.hpp"

namespace vt {

// Canonical key strings. Serialized form uses these bytes exactly; the
// spaced spellings are deliberate and must never be "fixed" to snake_case.
inline constexpr std::string_view kSceneKey = "scene description";
inline constexpr std::string_view kObjectsKey = "objects";
inline constexpr std::string_view kCategoryKey = "object category";
inline constexpr std::string_view kAttributeKey = "attribute description";
inline constexpr std::string_view kKnowledgeKey = "knowledge description";

// One object-centric row of a visual table. attribute/knowledge are optional
// so ablation can drop a field without losing the entry.
struct ObjectEntry {
  std::string category;
  std::optional<std::string> attribute;
  std::optional<std::string> knowledge;
  // Unrecognized keys seen while parsing, key -> raw JSON value text.
  // Preserved for inspection; never emitted by canonical_serialize.
  std::map<std::string, std::string> extras;

  bool operator==(const ObjectEntry&) const = default;
};

// Hierarchical text representation of an image: one scene description plus
// ordered object entries. Immutable by convention after construction; all
// operations below are pure.
struct VisualTable {
  std::string scene_description;
  std::vector<ObjectEntry> objects;
  std::map<std::string, std::string> extras;

  bool operator==(const VisualTable&) const = default;
};

enum class ValidationMode { full, ablated };

struct Violation {
  std::string path;  // e.g. "objects[2].attribute description"
  std::string rule;  // stable rule id
  std::string message;
};

struct ValidationReport {
  std::vector<Violation> violations;  // errors under the requested mode
  std::vector<Violation> flags;       // tolerated anomalies (e.g. extra keys in ablated mode)

  bool ok() const { return violations.empty(); }
};

// Never throws; reports every rule breach with a path and rule id.
// full: scene and all three object fields must be present and non-blank,
// extra keys are violations. ablated: only object categories must be
// non-blank; missing/empty scene, attribute and knowledge are legal and
// extra keys are downgraded to flags. Anything accepted in full mode is
// accepted in ablated mode.
ValidationReport validate(const VisualTable& table, ValidationMode mode);

// Single-line JSON with the exact canonical key strings, objects in source
// order, no extras. Byte-stable for a given table. Fields dropped by
// ablation are omitted. Throws Error{invalid_table} if the table fails
// ablated-mode validation.
std::string canonical_serialize(const VisualTable& table);

struct TableStats {
  std::int64_t token_count = 0;  // over the canonical serialization
  std::int64_t object_count = 0;
  std::int64_t char_count = 0;  // bytes of the canonical serialization
  // content bytes per component, summed over entries
  std::int64_t scene_chars = 0;
  std::int64_t category_chars = 0;
  std::int64_t attribute_chars = 0;
  std::int64_t knowledge_chars = 0;
  std::string tokenizer_id;
};

// Tokenizers are deliberately simple, deterministic schemes so that token
// statistics are reproducible without shipping a model vocabulary.
//   words_and_punct (default): runs of letters/digits (or UTF-8 continuation
//                              bytes) form one token; every other printable
//                              character is its own token.
//   whitespace:                maximal runs of non-whitespace.
inline constexpr std::string_view kDefaultTokenizer = "words_and_punct";

std::vector<std::string> registered_tokenizers();
bool tokenizer_registered(std::string_view tokenizer_id);

// Throws Error{unknown_tokenizer} for an unregistered id.
std::vector<std::string> tokenize(std::string_view text, std::string_view tokenizer_id);
std::size_t count_text_tokens(std::string_view text, std::string_view tokenizer_id);

// Deterministic stats for (table, tokenizer_id). Throws Error{unknown_tokenizer}.
TableStats count_tokens(const VisualTable& table,
                        std::string_view tokenizer_id = kDefaultTokenizer);

// JSON string escaping used by the canonical form (minimal JSON escapes,
// UTF-8 passed through verbatim).
std::string json_escape(std::string_view text);

std::string trim_copy(std::string_view text);

}  // namespace vt
