#include "vt/prompt.hpp"

#include <fstream>
#include <sstream>

#include "vt/table.hpp"

namespace vt {

namespace {

constexpr std::string_view kCollectionBody =
    "You are shown a single image. Carry out the following four tasks on it and collect the "
    "results into one visual table.\n"
    "\n"
    "Task 1: Scene description generation.\n"
    "Definition: Summarize the whole visual scene in one short paragraph.\n"
    "Guidelines: Mention the setting, the main activity, the time of day when evident, and any "
    "visible text. Describe only what the image shows.\n"
    "\n"
    "Task 2: Object category recognition.\n"
    "Definition: List every salient object in the image and name its category.\n"
    "Guidelines: Use a concise noun phrase per object. Keep one entry per visible instance, even "
    "when several instances share a category.\n"
    "\n"
    "Task 3: Attribute description generation.\n"
    "Definition: For each object, describe its visual attributes.\n"
    "Guidelines: Cover appearance, color, material, shape, state, pose and spatial context, "
    "grounded in the specific instance.\n"
    "\n"
    "Task 4: Knowledge description generation.\n"
    "Definition: For each object, describe world knowledge about the specific instance.\n"
    "Guidelines: Include the object's function or affordance, background knowledge of named "
    "entities, and commonsense relevant to this exact instance rather than its category in "
    "general.\n"
    "{{extra_guidelines}}"
    "\n"
    "Output the visual table in JSON format, as a nested dictionary following exactly this "
    "structure:\n"
    "{{format_skeleton}}\n"
    "Return only the JSON object, with every field filled in.";

constexpr std::string_view kGenerationBody =
    "Based on the given image, generate the visual table that follows the following JSON "
    "format: {{format_skeleton}}";

constexpr std::string_view kBaselineCapBody =
    "Provide a short caption for the given image in one sentence.";

constexpr std::string_view kBaselineDcapBody =
    "Describe the given image in detail, covering all visible objects, their attributes, and "
    "the overall scene.";

constexpr std::string_view kBaselineSgBody =
    "Generate a scene graph for the given image in structured text, listing the image objects "
    "together with their visual attributes and the relationships between them.";

constexpr std::string_view kBenchmarkResponseBody =
    "{{question}}{{choices_block}}{{response_suffix}}";

constexpr std::string_view kJudgeBody =
    "You are grading the answer to a visual question.\n"
    "Question: {{question}}\n"
    "Ground-truth answer: {{ground_truth}}\n"
    "Predicted answer: {{prediction}}\n"
    "Rate how correct the predicted answer is with respect to the ground truth, as an integer "
    "from 0 (completely wrong) to 10 (completely correct). Reply on the first line with exactly "
    "\"Score: <number>\", then give a one-line rationale.";

TemplateKind kind_from_string(std::string_view name) {
  if (name == "collection") return TemplateKind::collection;
  if (name == "generation") return TemplateKind::generation;
  if (name == "baseline_cap") return TemplateKind::baseline_cap;
  if (name == "baseline_dcap") return TemplateKind::baseline_dcap;
  if (name == "baseline_sg") return TemplateKind::baseline_sg;
  if (name == "benchmark_response") return TemplateKind::benchmark_response;
  if (name == "judge") return TemplateKind::judge;
  throw Error(ErrorKind::config, "unknown template kind '" + std::string(name) + "'");
}

}  // namespace

namespace detail {

std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t hash = 1469598103934665603ull;
  for (unsigned char c : text) {
    hash ^= c;
    hash *= 1099511628211ull;
  }
  return hash;
}

std::string hash8(std::string_view text) {
  static const char* hex = "0123456789abcdef";
  std::uint64_t h = fnv1a64(text);
  std::string out(8, '0');
  for (int i = 0; i < 8; ++i) {
    out[i] = hex[(h >> (60 - 8 * i)) & 0xF];
  }
  return out;
}

std::set<std::string> scan_placeholders(std::string_view body) {
  std::set<std::string> names;
  std::size_t pos = 0;
  while ((pos = body.find("{{", pos)) != std::string_view::npos) {
    std::size_t end = body.find("}}", pos + 2);
    if (end == std::string_view::npos) break;
    names.emplace(body.substr(pos + 2, end - pos - 2));
    pos = end + 2;
  }
  return names;
}

}  // namespace detail

std::string table_format_skeleton() {
  std::string entry = std::string("{\"") + std::string(kCategoryKey) + "\": \"\", \"" +
                      std::string(kAttributeKey) + "\": \"\", \"" + std::string(kKnowledgeKey) +
                      "\": \"\"}";
  return std::string("{\"") + std::string(kSceneKey) + "\": \"\", \"" + std::string(kObjectsKey) +
         "\": [" + entry + ", ......, " + entry + "]}";
}

PromptRegistry::PromptRegistry() {
  register_template("collection", TemplateKind::collection, std::string(kCollectionBody));
  register_template("generation", TemplateKind::generation, std::string(kGenerationBody));
  register_template("baseline_cap", TemplateKind::baseline_cap, std::string(kBaselineCapBody));
  register_template("baseline_dcap", TemplateKind::baseline_dcap, std::string(kBaselineDcapBody));
  register_template("baseline_sg", TemplateKind::baseline_sg, std::string(kBaselineSgBody));
  register_template("benchmark_response", TemplateKind::benchmark_response,
                    std::string(kBenchmarkResponseBody));
  register_template("judge", TemplateKind::judge, std::string(kJudgeBody));
}

void PromptRegistry::register_template(std::string name, TemplateKind kind, std::string body) {
  PromptTemplate tpl;
  tpl.name = name;
  tpl.kind = kind;
  tpl.required_placeholders = detail::scan_placeholders(body);
  tpl.id = name + "@" + detail::hash8(body);
  tpl.body = std::move(body);
  templates_[std::move(name)] = std::move(tpl);
}

void PromptRegistry::load_manifest(const std::filesystem::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw Error(ErrorKind::io, "cannot read manifest " + manifest_path.string());
  std::filesystem::path base = manifest_path.parent_path();
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string stripped = trim_copy(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    std::istringstream fields(stripped);
    std::string name, second, third;
    fields >> name >> second >> third;
    std::string kind_name;
    std::string rel_path;
    if (!third.empty()) {
      kind_name = second;
      rel_path = third;
    } else if (!second.empty()) {
      rel_path = second;
    } else {
      throw Error(ErrorKind::config, "manifest line " + std::to_string(line_no) +
                                         ": expected 'name [kind] path'");
    }
    TemplateKind kind;
    if (!kind_name.empty()) {
      kind = kind_from_string(kind_name);
    } else if (auto it = templates_.find(name); it != templates_.end()) {
      kind = it->second.kind;
    } else {
      throw Error(ErrorKind::config, "manifest line " + std::to_string(line_no) + ": new name '" +
                                         name + "' needs an explicit kind");
    }
    std::ifstream body_in(base / rel_path, std::ios::binary);
    if (!body_in) throw Error(ErrorKind::io, "cannot read template file " + (base / rel_path).string());
    std::ostringstream buffer;
    buffer << body_in.rdbuf();
    std::string body = buffer.str();
    if (!body.empty() && body.back() == '\n') body.pop_back();  // editor artifact
    register_template(name, kind, std::move(body));
  }
}

const PromptTemplate& PromptRegistry::get(std::string_view name) const {
  auto it = templates_.find(std::string(name));
  if (it == templates_.end()) {
    throw Error(ErrorKind::config, "no template named '" + std::string(name) + "'");
  }
  return it->second;
}

std::vector<std::string> PromptRegistry::names() const {
  std::vector<std::string> out;
  out.reserve(templates_.size());
  for (const auto& [name, tpl] : templates_) out.push_back(name);
  return out;
}

RenderedPrompt PromptRegistry::render(std::string_view name,
                                      const std::map<std::string, std::string>& bindings) const {
  const PromptTemplate& tpl = get(name);
  for (const std::string& placeholder : tpl.required_placeholders) {
    if (!bindings.count(placeholder)) {
      throw Error(ErrorKind::config,
                  "template '" + tpl.name + "': unbound placeholder '" + placeholder + "'");
    }
  }
  std::string text;
  text.reserve(tpl.body.size() + 64);
  std::string_view body = tpl.body;
  std::size_t pos = 0;
  while (pos < body.size()) {
    std::size_t open = body.find("{{", pos);
    if (open == std::string_view::npos) {
      text.append(body.substr(pos));
      break;
    }
    std::size_t end = body.find("}}", open + 2);
    if (end == std::string_view::npos) {
      text.append(body.substr(pos));
      break;
    }
    text.append(body.substr(pos, open - pos));
    std::string key(body.substr(open + 2, end - open - 2));
    text.append(bindings.at(key));
    pos = end + 2;
  }
  return RenderedPrompt{tpl.id, std::move(text), bindings};
}

RenderedPrompt render_collection_prompt(const PromptRegistry& registry,
                                        const CollectionPromptOptions& options) {
  std::string extra;
  if (!options.extra_guidelines.empty()) {
    extra = "\nAdditional guidelines:\n";
    for (const std::string& guideline : options.extra_guidelines) {
      extra += "- " + guideline + "\n";
    }
  }
  return registry.render("collection", {{"extra_guidelines", extra},
                                        {"format_skeleton", table_format_skeleton()}});
}

RenderedPrompt render_generation_prompt(const PromptRegistry& registry) {
  return registry.render("generation", {{"format_skeleton", table_format_skeleton()}});
}

RenderedPrompt render_benchmark_prompt(const PromptRegistry& registry, std::string_view benchmark_id,
                                       std::string_view question,
                                       const std::vector<std::string>* choices) {
  const BenchmarkInfo& info = benchmark_info(benchmark_id);
  std::string choices_block;
  if (info.multiple_choice && choices != nullptr && !choices->empty()) {
    if (choices->size() > 26) {
      throw Error(ErrorKind::config, "more than 26 choices for " + info.id);
    }
    for (std::size_t i = 0; i < choices->size(); ++i) {
      choices_block += '\n';
      choices_block += static_cast<char>('A' + i);
      choices_block += ". ";
      choices_block += (*choices)[i];
    }
  }
  std::string suffix;
  if (!info.response_prompt.empty()) suffix = "\n" + info.response_prompt;
  return registry.render("benchmark_response", {{"question", std::string(question)},
                                                {"choices_block", choices_block},
                                                {"response_suffix", suffix}});
}

BaselineKind baseline_kind_from_string(std::string_view name) {
  if (name == "cap") return BaselineKind::cap;
  if (name == "dcap") return BaselineKind::dcap;
  if (name == "sg") return BaselineKind::sg;
  throw Error(ErrorKind::config, "unknown baseline kind '" + std::string(name) + "'");
}

RenderedPrompt render_baseline_prompt(const PromptRegistry& registry, BaselineKind kind) {
  switch (kind) {
    case BaselineKind::cap: return registry.render("baseline_cap", {});
    case BaselineKind::dcap: return registry.render("baseline_dcap", {});
    case BaselineKind::sg: return registry.render("baseline_sg", {});
  }
  throw Error(ErrorKind::config, "unknown baseline kind");
}

RenderedPrompt render_judge_prompt(const PromptRegistry& registry, std::string_view question,
                                   std::string_view ground_truth, std::string_view prediction,
                                   std::string_view template_name) {
  return registry.render(template_name, {{"question", std::string(question)},
                                         {"ground_truth", std::string(ground_truth)},
                                         {"prediction", std::string(prediction)}});
}

}  // namespace vt
