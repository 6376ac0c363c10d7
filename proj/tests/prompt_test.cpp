#include <algorithm>
#include <filesystem>

#include "doctest.h"
#include "testutil.hpp"
#include "vt/benchmarks.hpp"
#include "vt/prompt.hpp"

using namespace vt;

namespace {

std::size_t count_occurrences(const std::string& haystack, const std::string& needle) {
  std::size_t count = 0;
  std::size_t pos = 0;
  while ((pos = haystack.find(needle, pos)) != std::string::npos) {
    ++count;
    pos += needle.size();
  }
  return count;
}

}  // namespace

TEST_CASE("collection prompt names all four tasks and ends with the format block") {
  PromptRegistry registry;
  RenderedPrompt prompt = render_collection_prompt(registry);
  for (std::string task : {"Scene description generation", "Object category recognition",
                           "Attribute description generation", "Knowledge description generation"}) {
    CHECK(prompt.text.find(task) != std::string::npos);
  }
  for (std::string_view key :
       {kSceneKey, kObjectsKey, kCategoryKey, kAttributeKey, kKnowledgeKey}) {
    CHECK(prompt.text.find('"' + std::string(key) + '"') != std::string::npos);
  }
  CHECK(prompt.text.find("JSON") != std::string::npos);
  CHECK(prompt.text.find(table_format_skeleton()) != std::string::npos);
  CHECK(prompt.text.find("{{") == std::string::npos);

  CHECK(render_collection_prompt(registry).text == prompt.text);  // deterministic
}

TEST_CASE("custom collection guideline appears exactly once") {
  PromptRegistry registry;
  CollectionPromptOptions options;
  options.extra_guidelines.push_back("Write at most 30 words per description.");
  RenderedPrompt prompt = render_collection_prompt(registry, options);
  CHECK(count_occurrences(prompt.text, "Write at most 30 words per description.") == 1);
}

TEST_CASE("generation prompt is the request line plus the skeleton") {
  PromptRegistry registry;
  RenderedPrompt prompt = render_generation_prompt(registry);
  CHECK(prompt.text.rfind("Based on the given image", 0) == 0);
  CHECK(count_occurrences(prompt.text, "\"object category\"") == 2);
  CHECK(prompt.text.find("......") != std::string::npos);
  CHECK(prompt.text.find("base64") == std::string::npos);  // image travels separately
}

TEST_CASE("benchmark response prompts follow the registry") {
  PromptRegistry registry;
  RenderedPrompt gqa = render_benchmark_prompt(registry, "gqa", "What color is the car?");
  CHECK(gqa.text.rfind("Answer the question using a single word or phrase.") ==
        gqa.text.size() - std::string("Answer the question using a single word or phrase.").size());
  CHECK(gqa.text.rfind("What color is the car?", 0) == 0);

  std::vector<std::string> choices = {"red", "green", "blue", "yellow"};
  RenderedPrompt mmb = render_benchmark_prompt(registry, "mmbench", "Pick one.", &choices);
  CHECK(mmb.text.find("\nA. red") != std::string::npos);
  CHECK(mmb.text.find("\nD. yellow") != std::string::npos);
  std::string letter_suffix = "Answer with the option's letter from the given choices directly.";
  CHECK(mmb.text.rfind(letter_suffix) == mmb.text.size() - letter_suffix.size());

  RenderedPrompt mmvet = render_benchmark_prompt(registry, "mm-vet", "Describe the humor.");
  CHECK(mmvet.text == "Describe the humor.");
  CHECK(render_benchmark_prompt(registry, "llava-bench", "q").text == "q");
  CHECK(render_benchmark_prompt(registry, "mmmu", "q").text == "q");

  RenderedPrompt vizwiz = render_benchmark_prompt(registry, "vizwiz", "What is this?");
  CHECK(vizwiz.text.find("respond with 'Unanswerable'") != std::string::npos);

  CHECK_THROWS_AS(render_benchmark_prompt(registry, "unknown-bench", "q"), Error);
}

TEST_CASE("registry covers the eleven benchmarks with the right protocols") {
  const auto& registry = benchmark_registry();
  CHECK(registry.size() == 11);
  auto protocol_of = [](std::string_view id) { return benchmark_info(id).protocol; };
  for (std::string_view id : {"pope", "vizwiz", "gqa", "vqa-v2", "textvqa"}) {
    CHECK(protocol_of(id) == Protocol::exact);
  }
  for (std::string_view id : {"mmbench", "mmvp", "sqa-img"}) {
    CHECK(protocol_of(id) == Protocol::choice);
    CHECK(benchmark_info(id).multiple_choice);
  }
  for (std::string_view id : {"mm-vet", "llava-bench", "mmmu"}) {
    CHECK(protocol_of(id) == Protocol::judge);
    CHECK(benchmark_info(id).response_prompt.empty());
  }
  CHECK(benchmark_info("vqav2").id == "vqa-v2");
  CHECK(benchmark_info("ScienceQA-IMG").id == "sqa-img");
  CHECK(!benchmark_registered("imagenet"));
}

TEST_CASE("baseline prompts differ by kind and ask for the right representation") {
  PromptRegistry registry;
  RenderedPrompt cap = render_baseline_prompt(registry, BaselineKind::cap);
  RenderedPrompt dcap = render_baseline_prompt(registry, BaselineKind::dcap);
  RenderedPrompt sg = render_baseline_prompt(registry, BaselineKind::sg);
  CHECK(cap.text != dcap.text);
  CHECK(dcap.text.find("detail") != std::string::npos);
  CHECK(sg.text.find("scene graph") != std::string::npos);
  CHECK(sg.text.find("attributes") != std::string::npos);
  CHECK(sg.text.find("relationships") != std::string::npos);
}

TEST_CASE("rendering fails on unbound placeholders") {
  PromptRegistry registry;
  CHECK_THROWS_AS(registry.render("judge", {{"question", "q"}}), Error);
}

TEST_CASE("template ids carry a content hash that changes with the body") {
  PromptRegistry registry;
  std::string original_id = registry.get("generation").id;
  CHECK(original_id.rfind("generation@", 0) == 0);

  auto dir = vttest::fresh_temp_dir("prompt_manifest");
  vttest::write_file(dir / "generation.txt",
                     "Produce the visual table for this image as JSON: {{format_skeleton}}\n");
  vttest::write_file(dir / "templates.manifest", "# registry overrides\ngeneration generation.txt\n");
  registry.load_manifest(dir / "templates.manifest");
  CHECK(registry.get("generation").id != original_id);
  CHECK(render_generation_prompt(registry).text.rfind("Produce the visual table", 0) == 0);

  PromptRegistry fresh;
  CHECK(fresh.get("generation").id == original_id);
}

TEST_CASE("shipped template assets reproduce the builtin registry") {
  auto assets = vttest::fixture_dir().parent_path().parent_path() / "assets" / "templates";
  REQUIRE(std::filesystem::exists(assets / "templates.manifest"));
  PromptRegistry builtin;
  PromptRegistry from_assets;
  from_assets.load_manifest(assets / "templates.manifest");
  for (const std::string& name : builtin.names()) {
    CAPTURE(name);
    CHECK(from_assets.get(name).body == builtin.get(name).body);
    CHECK(from_assets.get(name).id == builtin.get(name).id);
  }
}

TEST_CASE("manifest with a new name requires an explicit kind") {
  auto dir = vttest::fresh_temp_dir("prompt_manifest2");
  vttest::write_file(dir / "alt.txt", "Alt judge {{question}} {{ground_truth}} {{prediction}}\n");
  vttest::write_file(dir / "bad.manifest", "judge-alt alt.txt\n");
  vttest::write_file(dir / "good.manifest", "judge-alt judge alt.txt\n");
  PromptRegistry registry;
  CHECK_THROWS_AS(registry.load_manifest(dir / "bad.manifest"), Error);
  registry.load_manifest(dir / "good.manifest");
  CHECK(registry.get("judge-alt").kind == TemplateKind::judge);
}
