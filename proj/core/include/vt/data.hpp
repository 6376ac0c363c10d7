#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "vt/prompt.hpp"
#include "vt/table.hpp"

namespace vt {

struct ManifestEntry {
  std::string image_id;
  std::string image_uri;
  std::int64_t instruction_response_count = 0;
  std::string split;  // train | val | test
};

struct ImageManifest {
  std::vector<ManifestEntry> entries;
};

// JSONL, one entry per line: {"image_id", "image_uri",
// "instruction_response_count", "split"}. Loading enforces unique image_ids
// and non-negative counts (Error{config}).
ImageManifest load_manifest_jsonl(const std::filesystem::path& path);
void save_manifest_jsonl(const std::filesystem::path& path, const ImageManifest& manifest);

// Keeps entries with instruction_response_count >= min_responses, order
// preserved.
ImageManifest curate(const ImageManifest& manifest, std::int64_t min_responses = 2);

// Component selection for ablation studies. Object categories always survive;
// drop_table marks the no-table baseline where the table segment is omitted
// from assembled records entirely.
struct AblationMask {
  bool keep_scene = true;
  bool keep_attribute = true;
  bool keep_knowledge = true;
  bool drop_table = false;

  static AblationMask full() { return {}; }
  static AblationMask none() { return {false, false, false, false}; }
  static AblationMask no_table() { return {false, false, false, true}; }

  bool operator==(const AblationMask&) const = default;
};

std::string to_string(const AblationMask& mask);

// Deletion-only transform: empties the scene unless keep_scene, drops
// attribute/knowledge fields per mask, keeps every category. Idempotent;
// sequential masks compose as their conjunction. Ignores drop_table (that is
// an assembly-time concern). Output validates in ablated mode.
VisualTable ablate(const VisualTable& table, const AblationMask& mask);

enum class SegmentKind { image_placeholder, visual_table_text, instruction_text };

const char* to_string(SegmentKind kind);
SegmentKind segment_kind_from_string(std::string_view name);

inline constexpr std::string_view kImagePlaceholder = "<image>";

struct Segment {
  SegmentKind kind;
  std::string text;
};

struct TokenSpan {
  std::size_t begin = 0;
  std::size_t end = 0;  // half-open
};

// One serialized conversation sample. Tokenizing
// join(context, "\n") + "\n" + target yields exactly sequence_length tokens,
// of which [loss_mask_span.begin, loss_mask_span.end) are the target's and
// none are context (segments are newline-joined, so token boundaries never
// straddle a segment edge).
struct TrainingRecord {
  std::string record_id;
  std::string image_id;
  std::string system;  // optional preamble, empty by default
  std::vector<Segment> context_segments;
  std::string target_text;
  TokenSpan loss_mask_span;
  std::size_t sequence_length = 0;
};

std::string record_context_text(const TrainingRecord& record);
std::string record_full_text(const TrainingRecord& record);

// Generator fine-tune records: context [image_placeholder, generation
// request], target = canonical table serialization. Tables must validate in
// full mode (Error{invalid_table}).
std::vector<TrainingRecord> assemble_generator_records(
    const std::vector<std::pair<std::string, VisualTable>>& tables, const PromptRegistry& registry,
    std::string_view tokenizer_id = kDefaultTokenizer);

enum class VqaMode { with_image, table_only };

const char* to_string(VqaMode mode);
VqaMode vqa_mode_from_string(std::string_view name);

struct QaPair {
  std::string image_id;
  std::string question;
  std::string answer;
};

// Table-augmented answer records. with_image: [image_placeholder,
// visual_table_text, instruction_text]; table_only omits the image
// placeholder. mask ablates each table before serialization; mask.drop_table
// omits the table segment (with_image only). Records are ordered by
// (image_id, question hash). Throws Error{missing_table} naming every
// image_id without a table.
std::vector<TrainingRecord> assemble_vqa_records(const std::vector<QaPair>& qa,
                                                 const std::map<std::string, VisualTable>& tables,
                                                 VqaMode mode,
                                                 const AblationMask& mask = AblationMask::full(),
                                                 std::string_view tokenizer_id = kDefaultTokenizer);

// Fixed-field-order JSONL plus a <path>.meta.json sidecar carrying the
// supplied metadata, the record count, and a content hash of the output.
// Byte-identical for identical inputs.
void write_records_jsonl(const std::filesystem::path& path,
                         const std::vector<TrainingRecord>& records,
                         const nlohmann::ordered_json& metadata);
std::vector<TrainingRecord> load_records_jsonl(const std::filesystem::path& path);

nlohmann::ordered_json record_to_json(const TrainingRecord& record);
TrainingRecord record_from_json(const nlohmann::json& j);

}  // namespace vt
