#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "vt/error.hpp"
#include "vt/table.hpp"

namespace vt {

enum class ParsePolicy { strict, lenient };

// Repair steps, applied in this fixed order; no search over combinations.
enum class RepairAction {
  strip_fences,             // drop ``` fences, keep inner block
  isolate_span,             // cut the outermost {...} span out of surrounding prose
  remove_trailing_commas,   // `,` directly before `}` or `]`
  close_brackets,           // close unterminated string and open brackets at end of input
  drop_incomplete_tail,     // remove a structurally incomplete final object entry
  alias_keys,               // map underscored key variants to canonical keys
  duplicate_key_last_wins,  // duplicate key inside one object; last occurrence kept
  missing_scene,            // "scene description" absent; treated as empty
  missing_objects,          // "objects" absent; treated as empty list
  extra_keys_preserved,     // unrecognized keys kept in VisualTable::extras
};

const char* to_string(RepairAction action);

struct ParseOutcome {
  std::optional<VisualTable> table;
  std::vector<RepairAction> repairs;  // empty iff input was strict canonical JSON
  std::string residue;                // input text outside the parsed JSON span
  // populated when !table: unparseable or schema_mismatch
  std::optional<ErrorKind> error;
  std::string error_detail;

  bool ok() const { return table.has_value(); }
  bool strict_ok() const { return table.has_value() && repairs.empty(); }
};

struct ParseOptions {
  ParsePolicy policy = ParsePolicy::lenient;
  std::size_t max_input_bytes = 1 << 20;  // endpoint misbehavior containment
};

// Total over arbitrary bytes: never throws, never aborts. strict accepts a
// single well-formed JSON object whose keys are exactly the canonical ones
// (attribute/knowledge may be omitted, as ablated serializations do).
// lenient additionally applies the repair ladder above and records every
// step taken. A returned table always passes validate() in ablated mode.
ParseOutcome extract_and_parse(std::string_view raw, const ParseOptions& options);
ParseOutcome extract_and_parse(std::string_view raw, ParsePolicy policy = ParsePolicy::lenient);

struct ParseStats {
  std::size_t strict_ok = 0;    // parsed with no repairs
  std::size_t repaired = 0;     // parsed after repairs
  std::size_t unparseable = 0;  // no table recovered
};

// Requires a nonempty corpus (throws Error{config} otherwise); individual
// entries may be any byte sequence.
ParseStats fuzz_corpus_check(const std::vector<std::string>& corpus);

}  // namespace vt
