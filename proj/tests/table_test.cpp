#include <algorithm>

#include <nlohmann/json.hpp>

#include "doctest.h"
#include "testutil.hpp"
#include "vt/parse.hpp"
#include "vt/table.hpp"

using namespace vt;

namespace {

VisualTable load_golden(const std::string& name) {
  ParseOutcome outcome = extract_and_parse(
      vttest::read_file(vttest::fixture_dir() / "golden" / (name + ".txt")), ParsePolicy::strict);
  REQUIRE(outcome.ok());
  return *outcome.table;
}

}  // namespace

TEST_CASE("golden dog table validates in full mode") {
  VisualTable table = load_golden("dog_monday");
  REQUIRE(table.objects.size() == 3);
  ValidationReport report = validate(table, ValidationMode::full);
  CHECK(report.ok());
  CHECK(report.flags.empty());
}

TEST_CASE("empty scene description is a violation at its path") {
  VisualTable table;
  table.scene_description = "   ";
  ValidationReport report = validate(table, ValidationMode::full);
  REQUIRE(report.violations.size() == 1);
  CHECK(report.violations[0].path == "scene description");
  CHECK(report.violations[0].rule == "scene_nonempty");
  CHECK(validate(table, ValidationMode::ablated).ok());
}

TEST_CASE("knowledge removed from every entry: one violation per object in full mode") {
  VisualTable table = load_golden("five_dollar_bill");
  REQUIRE(table.objects.size() == 5);
  for (ObjectEntry& entry : table.objects) entry.knowledge.reset();
  ValidationReport full = validate(table, ValidationMode::full);
  CHECK(full.violations.size() == table.objects.size());
  for (const Violation& violation : full.violations) CHECK(violation.rule == "knowledge_required");
  CHECK(validate(table, ValidationMode::ablated).ok());
}

TEST_CASE("anything accepted in full mode is accepted in ablated mode") {
  SplitMix64 rng(11);
  for (int i = 0; i < 200; ++i) {
    VisualTable table = vttest::random_table(rng);
    if (validate(table, ValidationMode::full).ok()) {
      CHECK(validate(table, ValidationMode::ablated).ok());
    }
  }
}

TEST_CASE("canonical serialization of the empty-objects table is byte exact") {
  VisualTable table;
  table.scene_description = "s";
  CHECK(canonical_serialize(table) == R"({"scene description": "s", "objects": []})");
}

TEST_CASE("canonical serialization is stable through a parse round trip") {
  for (const auto& [name, text] : vttest::golden_fixture_texts()) {
    ParseOutcome first = extract_and_parse(text, ParsePolicy::strict);
    REQUIRE(first.ok());
    std::string serialized = canonical_serialize(*first.table);
    ParseOutcome second = extract_and_parse(serialized, ParsePolicy::strict);
    REQUIRE(second.ok());
    CHECK(canonical_serialize(*second.table) == serialized);
    CHECK(*second.table == *first.table);
  }
}

TEST_CASE("dog table serializes its categories in source order") {
  std::string serialized = canonical_serialize(load_golden("dog_monday"));
  std::size_t dog = serialized.find("\"Dog\"");
  std::size_t floor = serialized.find("\"Wooden floor\"");
  std::size_t text = serialized.find("\"Text\"");
  REQUIRE(dog != std::string::npos);
  REQUIRE(floor != std::string::npos);
  REQUIRE(text != std::string::npos);
  CHECK(dog < floor);
  CHECK(floor < text);
}

TEST_CASE("canonical output uses the spaced key strings and no underscored variants") {
  std::string serialized = canonical_serialize(load_golden("savanna_wildlife"));
  for (std::string_view key : {kSceneKey, kObjectsKey, kCategoryKey, kAttributeKey, kKnowledgeKey}) {
    CHECK(serialized.find(std::string("\"") + std::string(key) + "\"") != std::string::npos);
  }
  CHECK(serialized.find("scene_description") == std::string::npos);
  CHECK(serialized.find("object_category") == std::string::npos);
}

TEST_CASE("ablated serialization omits dropped fields") {
  VisualTable table;
  table.scene_description = "s";
  ObjectEntry entry;
  entry.category = "Dog";
  table.objects.push_back(entry);
  CHECK(canonical_serialize(table) ==
        R"({"scene description": "s", "objects": [{"object category": "Dog"}]})");
}

TEST_CASE("serialize rejects a table that fails ablated validation") {
  VisualTable table;
  table.scene_description = "s";
  table.objects.push_back(ObjectEntry{});  // blank category
  CHECK_THROWS_AS(canonical_serialize(table), Error);
}

TEST_CASE("json escaping survives a strict parse round trip") {
  VisualTable table;
  table.scene_description = "quote \" backslash \\ newline \n tab \t bell \x07 unicode é日";
  ObjectEntry entry;
  entry.category = "控制\\\"字符";
  entry.attribute = "a\nb";
  entry.knowledge = "k";
  table.objects.push_back(entry);
  ParseOutcome outcome = extract_and_parse(canonical_serialize(table), ParsePolicy::strict);
  REQUIRE(outcome.ok());
  CHECK(*outcome.table == table);
}

TEST_CASE("token counting is deterministic and bounded below by scene words") {
  VisualTable table;
  table.scene_description = "a b c";
  TableStats first = count_tokens(table, "whitespace");
  TableStats second = count_tokens(table, "whitespace");
  CHECK(first.token_count >= 3);
  CHECK(first.token_count == second.token_count);
  CHECK(first.char_count == second.char_count);
  CHECK(first.object_count == 0);
}

TEST_CASE("object_count always equals the objects length") {
  SplitMix64 rng(5);
  for (int i = 0; i < 100; ++i) {
    VisualTable table = vttest::random_table(rng);
    TableStats stats = count_tokens(table);
    CHECK(stats.object_count == static_cast<std::int64_t>(table.objects.size()));
  }
}

TEST_CASE("unknown tokenizer id raises") {
  VisualTable table;
  table.scene_description = "s";
  CHECK_THROWS_AS(count_tokens(table, "bpe-52k"), Error);
  try {
    count_tokens(table, "bpe-52k");
  } catch (const Error& error) {
    CHECK(error.kind() == ErrorKind::unknown_tokenizer);
  }
  CHECK(tokenizer_registered(kDefaultTokenizer));
  CHECK(tokenizer_registered("whitespace"));
  CHECK(!tokenizer_registered("bpe-52k"));
}

TEST_CASE("golden corpus token counts match the frozen baseline") {
  nlohmann::json baseline = nlohmann::json::parse(
      vttest::read_file(vttest::fixture_dir() / "stats_baseline.json"));
  REQUIRE(baseline["tokenizer_id"] == kDefaultTokenizer);
  for (const auto& [name, text] : vttest::golden_fixture_texts()) {
    CAPTURE(name);
    VisualTable table = load_golden(name);
    TableStats stats = count_tokens(table);
    CHECK(stats.token_count ==
          baseline["per_table_token_count"][name].get<std::int64_t>());
  }
}

TEST_CASE("default tokenizer splits words and punctuation") {
  auto tokens = tokenize("Dogs, cats; 3 mice.", kDefaultTokenizer);
  std::vector<std::string> expected = {"Dogs", ",", "cats", ";", "3", "mice", "."};
  CHECK(tokens == expected);
  CHECK(tokenize("héllo 日本", kDefaultTokenizer).size() == 2);
}
