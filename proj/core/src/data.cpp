#include "vt/data.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "vt/digest.hpp"

namespace vt {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

json parse_line(const std::string& line, const std::filesystem::path& path, std::size_t line_no) {
  json j = json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    throw Error(ErrorKind::io,
                path.string() + ":" + std::to_string(line_no) + ": malformed JSONL line");
  }
  return j;
}

std::string fnv_hash8(std::string_view text) { return detail::hash8(text); }

}  // namespace

ImageManifest load_manifest_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot read manifest " + path.string());
  ImageManifest manifest;
  std::set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim_copy(line).empty()) continue;
    json j = parse_line(line, path, line_no);
    ManifestEntry entry;
    entry.image_id = j.value("image_id", "");
    entry.image_uri = j.value("image_uri", "");
    entry.instruction_response_count = j.value("instruction_response_count", std::int64_t{0});
    entry.split = j.value("split", "train");
    if (entry.image_id.empty()) {
      throw Error(ErrorKind::config,
                  path.string() + ":" + std::to_string(line_no) + ": missing image_id");
    }
    if (!seen.insert(entry.image_id).second) {
      throw Error(ErrorKind::config, "duplicate image_id '" + entry.image_id + "' in manifest");
    }
    if (entry.instruction_response_count < 0) {
      throw Error(ErrorKind::config,
                  "negative instruction_response_count for '" + entry.image_id + "'");
    }
    if (entry.split != "train" && entry.split != "val" && entry.split != "test") {
      throw Error(ErrorKind::config, "unknown split '" + entry.split + "' for '" +
                                         entry.image_id + "' (expected train|val|test)");
    }
    manifest.entries.push_back(std::move(entry));
  }
  return manifest;
}

void save_manifest_jsonl(const std::filesystem::path& path, const ImageManifest& manifest) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::io, "cannot write manifest " + path.string());
  for (const ManifestEntry& entry : manifest.entries) {
    ordered_json j;
    j["image_id"] = entry.image_id;
    j["image_uri"] = entry.image_uri;
    j["instruction_response_count"] = entry.instruction_response_count;
    j["split"] = entry.split;
    out << j.dump() << '\n';
  }
}

ImageManifest curate(const ImageManifest& manifest, std::int64_t min_responses) {
  ImageManifest curated;
  curated.entries.reserve(manifest.entries.size());
  for (const ManifestEntry& entry : manifest.entries) {
    if (entry.instruction_response_count >= min_responses) curated.entries.push_back(entry);
  }
  return curated;
}

std::string to_string(const AblationMask& mask) {
  if (mask.drop_table) return "no_table";
  std::string out;
  out += mask.keep_scene ? "scene" : "-";
  out += '+';
  out += mask.keep_attribute ? "attribute" : "-";
  out += '+';
  out += mask.keep_knowledge ? "knowledge" : "-";
  return out;
}

VisualTable ablate(const VisualTable& table, const AblationMask& mask) {
  VisualTable out;
  out.scene_description = mask.keep_scene ? table.scene_description : std::string{};
  out.extras = table.extras;
  out.objects.reserve(table.objects.size());
  for (const ObjectEntry& entry : table.objects) {
    ObjectEntry e;
    e.category = entry.category;
    if (mask.keep_attribute) e.attribute = entry.attribute;
    if (mask.keep_knowledge) e.knowledge = entry.knowledge;
    e.extras = entry.extras;
    out.objects.push_back(std::move(e));
  }
  return out;
}

const char* to_string(SegmentKind kind) {
  switch (kind) {
    case SegmentKind::image_placeholder: return "image_placeholder";
    case SegmentKind::visual_table_text: return "visual_table_text";
    case SegmentKind::instruction_text: return "instruction_text";
  }
  return "unknown";
}

SegmentKind segment_kind_from_string(std::string_view name) {
  if (name == "image_placeholder") return SegmentKind::image_placeholder;
  if (name == "visual_table_text") return SegmentKind::visual_table_text;
  if (name == "instruction_text") return SegmentKind::instruction_text;
  throw Error(ErrorKind::config, "unknown segment kind '" + std::string(name) + "'");
}

const char* to_string(VqaMode mode) {
  switch (mode) {
    case VqaMode::with_image: return "with_image";
    case VqaMode::table_only: return "table_only";
  }
  return "unknown";
}

VqaMode vqa_mode_from_string(std::string_view name) {
  if (name == "with_image") return VqaMode::with_image;
  if (name == "table_only") return VqaMode::table_only;
  throw Error(ErrorKind::config, "unknown vqa mode '" + std::string(name) + "'");
}

std::string record_context_text(const TrainingRecord& record) {
  std::string out;
  for (std::size_t i = 0; i < record.context_segments.size(); ++i) {
    if (i > 0) out += '\n';
    out += record.context_segments[i].text;
  }
  return out;
}

std::string record_full_text(const TrainingRecord& record) {
  std::string context = record_context_text(record);
  if (context.empty()) return record.target_text;
  return context + "\n" + record.target_text;
}

namespace {

// Segments are newline-joined, so context/target token counts add exactly.
void finalize_spans(TrainingRecord& record, std::string_view tokenizer_id) {
  std::size_t context_tokens = count_text_tokens(record_context_text(record), tokenizer_id);
  std::size_t target_tokens = count_text_tokens(record.target_text, tokenizer_id);
  record.loss_mask_span = {context_tokens, context_tokens + target_tokens};
  record.sequence_length = context_tokens + target_tokens;
}

}  // namespace

std::vector<TrainingRecord> assemble_generator_records(
    const std::vector<std::pair<std::string, VisualTable>>& tables, const PromptRegistry& registry,
    std::string_view tokenizer_id) {
  std::string instruction = render_generation_prompt(registry).text;
  std::vector<TrainingRecord> records;
  records.reserve(tables.size());
  for (const auto& [image_id, table] : tables) {
    ValidationReport report = validate(table, ValidationMode::full);
    if (!report.ok()) {
      throw Error(ErrorKind::invalid_table, image_id + ": " + report.violations.front().path +
                                                " " + report.violations.front().message);
    }
    TrainingRecord record;
    record.record_id = image_id + "-vtgen";
    record.image_id = image_id;
    record.context_segments = {
        {SegmentKind::image_placeholder, std::string(kImagePlaceholder)},
        {SegmentKind::instruction_text, instruction},
    };
    record.target_text = canonical_serialize(table);
    finalize_spans(record, tokenizer_id);
    records.push_back(std::move(record));
  }
  return records;
}

std::vector<TrainingRecord> assemble_vqa_records(const std::vector<QaPair>& qa,
                                                 const std::map<std::string, VisualTable>& tables,
                                                 VqaMode mode, const AblationMask& mask,
                                                 std::string_view tokenizer_id) {
  bool include_table = !mask.drop_table;
  if (!include_table && mode == VqaMode::table_only) {
    throw Error(ErrorKind::config, "table_only mode cannot drop the table segment");
  }
  if (include_table) {
    std::set<std::string> missing;
    for (const QaPair& pair : qa) {
      if (!tables.count(pair.image_id)) missing.insert(pair.image_id);
    }
    if (!missing.empty()) {
      std::string detail;
      for (const std::string& id : missing) {
        if (!detail.empty()) detail += ", ";
        detail += id;
      }
      throw Error(ErrorKind::missing_table, detail);
    }
  }

  std::vector<TrainingRecord> records;
  records.reserve(qa.size());
  for (const QaPair& pair : qa) {
    TrainingRecord record;
    record.record_id = pair.image_id + "-" + fnv_hash8(pair.question);
    record.image_id = pair.image_id;
    if (mode == VqaMode::with_image) {
      record.context_segments.push_back(
          {SegmentKind::image_placeholder, std::string(kImagePlaceholder)});
    }
    if (include_table) {
      const VisualTable& table = tables.at(pair.image_id);
      record.context_segments.push_back(
          {SegmentKind::visual_table_text, canonical_serialize(ablate(table, mask))});
    }
    record.context_segments.push_back({SegmentKind::instruction_text, pair.question});
    record.target_text = pair.answer;
    finalize_spans(record, tokenizer_id);
    records.push_back(std::move(record));
  }
  std::stable_sort(records.begin(), records.end(),
                   [](const TrainingRecord& a, const TrainingRecord& b) {
                     if (a.image_id != b.image_id) return a.image_id < b.image_id;
                     return a.record_id < b.record_id;
                   });
  return records;
}

nlohmann::ordered_json record_to_json(const TrainingRecord& record) {
  ordered_json j;
  j["record_id"] = record.record_id;
  j["image_id"] = record.image_id;
  j["system"] = record.system;
  ordered_json segments = ordered_json::array();
  for (const Segment& segment : record.context_segments) {
    segments.push_back({{"kind", to_string(segment.kind)}, {"text", segment.text}});
  }
  j["context_segments"] = std::move(segments);
  j["target_text"] = record.target_text;
  j["loss_mask_span"] = {{"begin", record.loss_mask_span.begin},
                         {"end", record.loss_mask_span.end}};
  j["sequence_length"] = record.sequence_length;
  return j;
}

TrainingRecord record_from_json(const nlohmann::json& j) {
  TrainingRecord record;
  record.record_id = j.at("record_id").get<std::string>();
  record.image_id = j.at("image_id").get<std::string>();
  record.system = j.value("system", "");
  for (const auto& segment : j.at("context_segments")) {
    record.context_segments.push_back({segment_kind_from_string(segment.at("kind").get<std::string>()),
                                       segment.at("text").get<std::string>()});
  }
  record.target_text = j.at("target_text").get<std::string>();
  record.loss_mask_span.begin = j.at("loss_mask_span").at("begin").get<std::size_t>();
  record.loss_mask_span.end = j.at("loss_mask_span").at("end").get<std::size_t>();
  record.sequence_length = j.at("sequence_length").get<std::size_t>();
  return record;
}

void write_records_jsonl(const std::filesystem::path& path,
                         const std::vector<TrainingRecord>& records,
                         const nlohmann::ordered_json& metadata) {
  std::string payload;
  for (const TrainingRecord& record : records) {
    payload += record_to_json(record).dump();
    payload += '\n';
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::io, "cannot write " + path.string());
  out << payload;
  out.close();

  ordered_json meta = metadata;
  meta["record_count"] = records.size();
  meta["content_sha256"] = sha256_hex(payload);
  std::ofstream meta_out(path.string() + ".meta.json", std::ios::binary);
  if (!meta_out) throw Error(ErrorKind::io, "cannot write " + path.string() + ".meta.json");
  meta_out << meta.dump(2) << '\n';
}

std::vector<TrainingRecord> load_records_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot read " + path.string());
  std::vector<TrainingRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim_copy(line).empty()) continue;
    records.push_back(record_from_json(parse_line(line, path, line_no)));
  }
  return records;
}

}  // namespace vt
