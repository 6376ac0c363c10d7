#include <algorithm>

#include "doctest.h"
#include "testutil.hpp"
#include "vt/data.hpp"
#include "vt/eval.hpp"
#include "vt/parse.hpp"

using namespace vt;

namespace {

VisualTable load_golden(const std::string& name) {
  return *extract_and_parse(
              vttest::read_file(vttest::fixture_dir() / "golden" / (name + ".txt")),
              ParsePolicy::strict)
              .table;
}

ImageManifest make_manifest(std::initializer_list<std::pair<const char*, int>> entries) {
  ImageManifest manifest;
  for (const auto& [id, count] : entries) {
    manifest.entries.push_back({id, std::string("file://") + id, count, "train"});
  }
  return manifest;
}

}  // namespace

TEST_CASE("curate keeps entries meeting the response threshold, in order") {
  ImageManifest manifest = make_manifest({{"A", 3}, {"B", 1}, {"C", 2}});
  ImageManifest curated = curate(manifest);
  REQUIRE(curated.entries.size() == 2);
  CHECK(curated.entries[0].image_id == "A");
  CHECK(curated.entries[1].image_id == "C");

  CHECK(curate(manifest, 0).entries.size() == 3);  // identity
}

TEST_CASE("manifest io round trips and rejects duplicates") {
  auto dir = vttest::fresh_temp_dir("manifest");
  ImageManifest manifest = make_manifest({{"x", 2}, {"y", 5}});
  manifest.entries[1].split = "val";
  save_manifest_jsonl(dir / "m.jsonl", manifest);
  ImageManifest loaded = load_manifest_jsonl(dir / "m.jsonl");
  REQUIRE(loaded.entries.size() == 2);
  CHECK(loaded.entries[1].split == "val");
  CHECK(loaded.entries[1].instruction_response_count == 5);

  vttest::write_file(dir / "badsplit.jsonl",
                     "{\"image_id\":\"a\",\"image_uri\":\"u\","
                     "\"instruction_response_count\":1,\"split\":\"holdout\"}\n");
  CHECK_THROWS_AS(load_manifest_jsonl(dir / "badsplit.jsonl"), Error);

  vttest::write_file(dir / "dup.jsonl",
                     "{\"image_id\":\"a\",\"image_uri\":\"u\",\"instruction_response_count\":1,\"split\":\"train\"}\n"
                     "{\"image_id\":\"a\",\"image_uri\":\"u\",\"instruction_response_count\":2,\"split\":\"train\"}\n");
  CHECK_THROWS_AS(load_manifest_jsonl(dir / "dup.jsonl"), Error);
}

TEST_CASE("scene-only ablation leaves objects with just their categories") {
  VisualTable dog = load_golden("dog_monday");
  AblationMask mask{true, false, false, false};
  VisualTable ablated = ablate(dog, mask);
  CHECK(ablated.scene_description == dog.scene_description);
  REQUIRE(ablated.objects.size() == 3);
  for (const ObjectEntry& entry : ablated.objects) {
    CHECK(!entry.category.empty());
    CHECK(!entry.attribute.has_value());
    CHECK(!entry.knowledge.has_value());
  }
  CHECK(validate(ablated, ValidationMode::ablated).ok());
  std::string serialized = canonical_serialize(ablated);
  CHECK(serialized.find("attribute description") == std::string::npos);
  CHECK(serialized.find("knowledge description") == std::string::npos);
}

TEST_CASE("the full mask is the identity") {
  VisualTable dog = load_golden("dog_monday");
  CHECK(ablate(dog, AblationMask::full()) == dog);
}

TEST_CASE("ablation laws hold on random tables and masks") {
  SplitMix64 rng(77);
  for (int i = 0; i < 200; ++i) {
    VisualTable table = vttest::random_table(rng);
    AblationMask m1 = vttest::random_mask(rng);
    AblationMask m2 = vttest::random_mask(rng);

    VisualTable once = ablate(table, m1);
    CHECK(ablate(once, m1) == once);  // idempotent

    AblationMask both{m1.keep_scene && m2.keep_scene, m1.keep_attribute && m2.keep_attribute,
                      m1.keep_knowledge && m2.keep_knowledge, false};
    CHECK(ablate(ablate(table, m1), m2) == ablate(table, both));  // composition

    CHECK(count_tokens(once).token_count <= count_tokens(table).token_count);  // monotone
  }
}

TEST_CASE("generator records follow the conditioning layout") {
  PromptRegistry registry;
  VisualTable dog = load_golden("dog_monday");
  auto records = assemble_generator_records({{"img-7", dog}}, registry);
  REQUIRE(records.size() == 1);
  const TrainingRecord& record = records[0];
  CHECK(record.record_id == "img-7-vtgen");
  REQUIRE(record.context_segments.size() == 2);
  CHECK(record.context_segments[0].kind == SegmentKind::image_placeholder);
  CHECK(record.context_segments[1].kind == SegmentKind::instruction_text);
  CHECK(record.context_segments[1].text.rfind("Based on the given image", 0) == 0);

  ParseOutcome round = extract_and_parse(record.target_text, ParsePolicy::strict);
  REQUIRE(round.ok());
  CHECK(*round.table == dog);

  CHECK(assemble_generator_records({}, registry).empty());
}

TEST_CASE("generator assembly rejects invalid tables") {
  PromptRegistry registry;
  VisualTable bad;
  bad.scene_description = "";
  CHECK_THROWS_AS(assemble_generator_records({{"x", bad}}, registry), Error);
}

TEST_CASE("vqa record segment order encodes the conditioning modes") {
  PromptRegistry registry;
  std::map<std::string, VisualTable> tables = {{"i1", load_golden("dog_monday")}};
  std::vector<QaPair> qa = {{"i1", "What animal is shown?", "a dog"}};

  auto with_image = assemble_vqa_records(qa, tables, VqaMode::with_image);
  REQUIRE(with_image.size() == 1);
  REQUIRE(with_image[0].context_segments.size() == 3);
  CHECK(with_image[0].context_segments[0].kind == SegmentKind::image_placeholder);
  CHECK(with_image[0].context_segments[1].kind == SegmentKind::visual_table_text);
  CHECK(with_image[0].context_segments[2].kind == SegmentKind::instruction_text);
  CHECK(with_image[0].target_text == "a dog");

  auto table_only = assemble_vqa_records(qa, tables, VqaMode::table_only);
  REQUIRE(table_only[0].context_segments.size() == 2);
  CHECK(table_only[0].context_segments[0].kind == SegmentKind::visual_table_text);
  for (const Segment& segment : table_only[0].context_segments) {
    CHECK(segment.kind != SegmentKind::image_placeholder);
  }

  auto no_table = assemble_vqa_records(qa, tables, VqaMode::with_image, AblationMask::no_table());
  REQUIRE(no_table[0].context_segments.size() == 2);
  for (const Segment& segment : no_table[0].context_segments) {
    CHECK(segment.kind != SegmentKind::visual_table_text);
  }
  CHECK_THROWS_AS(assemble_vqa_records(qa, tables, VqaMode::table_only, AblationMask::no_table()),
                  Error);
}

TEST_CASE("vqa assembly names every image missing a table") {
  PromptRegistry registry;
  std::map<std::string, VisualTable> tables = {{"i1", load_golden("dog_monday")}};
  std::vector<QaPair> qa = {{"i1", "q", "a"}, {"ghost", "q", "a"}, {"phantom", "q", "a"}};
  try {
    assemble_vqa_records(qa, tables, VqaMode::with_image);
    FAIL("expected missing_table");
  } catch (const Error& error) {
    CHECK(error.kind() == ErrorKind::missing_table);
    CHECK(std::string(error.what()).find("ghost") != std::string::npos);
    CHECK(std::string(error.what()).find("phantom") != std::string::npos);
  }
}

TEST_CASE("loss mask spans exactly the target tokens") {
  PromptRegistry registry;
  std::map<std::string, VisualTable> tables = {{"i1", load_golden("starry_night")}};
  std::vector<QaPair> qa = {{"i1", "Who painted this?", "Vincent van Gogh"}};
  for (VqaMode mode : {VqaMode::with_image, VqaMode::table_only}) {
    auto records = assemble_vqa_records(qa, tables, mode);
    const TrainingRecord& record = records[0];
    auto full_tokens = tokenize(record_full_text(record), kDefaultTokenizer);
    auto target_tokens = tokenize(record.target_text, kDefaultTokenizer);
    auto context_tokens = tokenize(record_context_text(record), kDefaultTokenizer);
    REQUIRE(record.sequence_length == full_tokens.size());
    REQUIRE(record.loss_mask_span.end == full_tokens.size());
    CHECK(record.loss_mask_span.begin == context_tokens.size());
    CHECK(std::vector<std::string>(full_tokens.begin() + record.loss_mask_span.begin,
                                   full_tokens.end()) == target_tokens);
  }
}

TEST_CASE("records serialize deterministically with a sidecar") {
  PromptRegistry registry;
  std::map<std::string, VisualTable> tables = {{"b", load_golden("chest_xray")},
                                               {"a", load_golden("subway_sandwich")}};
  std::vector<QaPair> qa = {{"b", "q1", "a1"}, {"a", "q2", "a2"}, {"a", "q0", "a0"}};
  auto records = assemble_vqa_records(qa, tables, VqaMode::with_image);
  REQUIRE(records.size() == 3);
  CHECK(records[0].image_id == "a");  // sorted by (image_id, question hash)

  auto dir = vttest::fresh_temp_dir("records");
  nlohmann::ordered_json meta;
  meta["mode"] = "with_image";
  write_records_jsonl(dir / "r.jsonl", records, meta);
  write_records_jsonl(dir / "r2.jsonl", records, meta);
  CHECK(vttest::read_file(dir / "r.jsonl") == vttest::read_file(dir / "r2.jsonl"));

  auto loaded = load_records_jsonl(dir / "r.jsonl");
  REQUIRE(loaded.size() == records.size());
  for (std::size_t i = 0; i < loaded.size(); ++i) {
    CHECK(loaded[i].record_id == records[i].record_id);
    CHECK(loaded[i].target_text == records[i].target_text);
    CHECK(loaded[i].loss_mask_span.begin == records[i].loss_mask_span.begin);
    CHECK(loaded[i].loss_mask_span.end == records[i].loss_mask_span.end);
  }

  nlohmann::json sidecar = nlohmann::json::parse(vttest::read_file(dir / "r.jsonl.meta.json"));
  CHECK(sidecar["record_count"] == 3);
  CHECK(sidecar["mode"] == "with_image");
  CHECK(sidecar["content_sha256"].get<std::string>().size() == 64);
}
