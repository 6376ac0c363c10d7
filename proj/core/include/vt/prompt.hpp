#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "vt/benchmarks.hpp"
#include "vt/error.hpp"

namespace vt {

// The JSON skeleton the pipeline asks models to fill in. The literal
// "......" between the two entry slots is part of the request text.
std::string table_format_skeleton();

enum class TemplateKind {
  collection,
  generation,
  baseline_cap,
  baseline_dcap,
  baseline_sg,
  benchmark_response,
  judge,
};

// Immutable template body with {{name}} placeholders. The id carries a
// content-hash suffix so edited bodies never collide with cached renders.
struct PromptTemplate {
  std::string id;    // "<name>@<hash8>"
  std::string name;  // registry key, e.g. "collection"
  TemplateKind kind;
  std::string body;
  std::set<std::string> required_placeholders;  // derived from the body
};

struct RenderedPrompt {
  std::string template_id;
  std::string text;  // no unresolved {{...}} markers remain
  std::map<std::string, std::string> bindings;
};

// Template lookup by name. Construction seeds the built-in templates;
// load_manifest() overrides them from plain-text asset files so wording can
// change without rebuilding.
class PromptRegistry {
 public:
  PromptRegistry();

  // Manifest format: one "name<whitespace>relative/path.txt" per line,
  // '#' comments allowed. Throws Error{io} or Error{config}.
  void load_manifest(const std::filesystem::path& manifest_path);

  const PromptTemplate& get(std::string_view name) const;  // throws Error{config}
  std::vector<std::string> names() const;

  // Throws Error{config} when a required placeholder is unbound.
  RenderedPrompt render(std::string_view name,
                        const std::map<std::string, std::string>& bindings) const;

 private:
  void register_template(std::string name, TemplateKind kind, std::string body);
  std::map<std::string, PromptTemplate> templates_;
};

struct CollectionPromptOptions {
  std::vector<std::string> extra_guidelines;  // appended once to the guidelines section
};

// Four-task collection prompt: scene description generation, object category
// recognition, attribute description generation, knowledge description
// generation; ends by demanding JSON output in the canonical format.
RenderedPrompt render_collection_prompt(const PromptRegistry& registry,
                                        const CollectionPromptOptions& options = {});

// "Based on the given image, generate the visual table ..." request line
// followed by the format skeleton.
RenderedPrompt render_generation_prompt(const PromptRegistry& registry);

// Question (plus lettered choices where the benchmark is multiple-choice)
// followed by the benchmark's response prompt; judge-protocol benchmarks get
// the bare question. Throws Error{unknown_benchmark}.
RenderedPrompt render_benchmark_prompt(const PromptRegistry& registry, std::string_view benchmark_id,
                                       std::string_view question,
                                       const std::vector<std::string>* choices = nullptr);

enum class BaselineKind { cap, dcap, sg };

BaselineKind baseline_kind_from_string(std::string_view name);  // throws Error{config}

// Representation-eliciting instruction for the short-caption, detailed-caption
// and scene-graph baselines.
RenderedPrompt render_baseline_prompt(const PromptRegistry& registry, BaselineKind kind);

// Judge grading prompt over {{question}}, {{ground_truth}}, {{prediction}}.
RenderedPrompt render_judge_prompt(const PromptRegistry& registry, std::string_view question,
                                   std::string_view ground_truth, std::string_view prediction,
                                   std::string_view template_name = "judge");

namespace detail {
std::uint64_t fnv1a64(std::string_view text);
std::string hash8(std::string_view text);
std::set<std::string> scan_placeholders(std::string_view body);
}  // namespace detail

}  // namespace vt
