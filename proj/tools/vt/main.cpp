// vt - visual table pipeline front door: collect, generate, curate, assemble,
// ablate, eval, report, stats.
#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <tuple>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "vt/benchmarks.hpp"
#include "vt/client.hpp"
#include "vt/data.hpp"
#include "vt/digest.hpp"
#include "vt/error.hpp"
#include "vt/eval.hpp"
#include "vt/parse.hpp"
#include "vt/prompt.hpp"
#include "vt/table.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitConfig = 3;
constexpr int kExitPartial = 4;

// ---------------------------------------------------------------------------
// configuration chain: CLI flag > environment variable > config file > default
// ---------------------------------------------------------------------------

std::string env_name_for(const std::string& key) {
  std::string out = "VT_";
  for (char c : key) {
    out += c == '-' || c == '.' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  }
  return out;
}

bool parse_scalar(const std::string& text, std::string& out) {
  out = text;
  return true;
}
template <typename T>
bool parse_scalar(const std::string& text, T& out) {
  std::istringstream in(text);
  in >> out;
  return static_cast<bool>(in) && in.eof();
}

class ConfigChain {
 public:
  void load_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw vt::Error(vt::ErrorKind::config, "cannot read config file " + path.string());
    std::string line;
    while (std::getline(in, line)) {
      std::string stripped = vt::trim_copy(line);
      if (stripped.empty() || stripped[0] == '#') continue;
      std::size_t eq = stripped.find('=');
      if (eq == std::string::npos) {
        throw vt::Error(vt::ErrorKind::config, "config line is not key=value: " + stripped);
      }
      values_[vt::trim_copy(stripped.substr(0, eq))] = vt::trim_copy(stripped.substr(eq + 1));
    }
  }

  // fills `value` for an option the user did not pass on the command line
  template <typename T>
  void apply(const CLI::Option* option, const std::string& key, T& value) {
    if (option != nullptr && option->count() > 0) return;  // flag wins
    if (const char* env = std::getenv(env_name_for(key).c_str()); env != nullptr && *env) {
      if (!parse_scalar(std::string(env), value)) {
        throw vt::Error(vt::ErrorKind::config, env_name_for(key) + ": cannot parse '" + env + "'");
      }
      return;
    }
    if (auto it = values_.find(key); it != values_.end()) {
      if (!parse_scalar(it->second, value)) {
        throw vt::Error(vt::ErrorKind::config, key + ": cannot parse '" + it->second + "'");
      }
    }
  }

 private:
  std::map<std::string, std::string> values_;
};

// ---------------------------------------------------------------------------
// shared plumbing
// ---------------------------------------------------------------------------

struct GlobalOptions {
  std::uint64_t seed = 0;
  bool dry_run = false;
  std::string runs_dir = "runs";
  std::string config_file;
  CLI::Option* seed_opt = nullptr;
  CLI::Option* runs_opt = nullptr;
  ConfigChain chain;

  void resolve() {
    chain.apply(seed_opt, "seed", seed);
    chain.apply(runs_opt, "runs-dir", runs_dir);
  }
};

struct EndpointFlags {
  std::string prefix;
  std::string base_url;
  std::string model = "gpt-4-vision-preview";
  std::string api_key_env = "OPENAI_API_KEY";
  int max_parallel = 4;
  int timeout_ms = 60'000;
  int max_attempts = 3;
  int backoff_ms = 250;
  double price_in = 0.0;
  double price_out = 0.0;
  std::map<std::string, CLI::Option*> opts;

  void add(CLI::App* cmd, const std::string& flag_prefix) {
    prefix = flag_prefix;
    auto name = [&](const char* suffix) { return "--" + flag_prefix + suffix; };
    opts["base-url"] = cmd->add_option(name("base-url"), base_url, "chat-completions endpoint base url");
    opts["model"] = cmd->add_option(name("model"), model, "model name");
    opts["api-key-env"] =
        cmd->add_option(name("api-key-env"), api_key_env, "environment variable holding the API key");
    opts["max-parallel"] = cmd->add_option(name("max-parallel"), max_parallel, "in-flight request cap");
    opts["timeout-ms"] = cmd->add_option(name("timeout-ms"), timeout_ms, "per-request timeout");
    opts["max-attempts"] = cmd->add_option(name("max-attempts"), max_attempts, "attempts per request");
    opts["backoff-ms"] = cmd->add_option(name("backoff-ms"), backoff_ms, "retry backoff base");
    opts["price-in"] = cmd->add_option(name("price-in"), price_in, "currency per 1K input tokens");
    opts["price-out"] = cmd->add_option(name("price-out"), price_out, "currency per 1K output tokens");
  }

  void resolve(ConfigChain& chain) {
    chain.apply(opts["base-url"], prefix + "base-url", base_url);
    chain.apply(opts["model"], prefix + "model", model);
    chain.apply(opts["api-key-env"], prefix + "api-key-env", api_key_env);
    chain.apply(opts["max-parallel"], prefix + "max-parallel", max_parallel);
    chain.apply(opts["timeout-ms"], prefix + "timeout-ms", timeout_ms);
    chain.apply(opts["max-attempts"], prefix + "max-attempts", max_attempts);
    chain.apply(opts["backoff-ms"], prefix + "backoff-ms", backoff_ms);
    chain.apply(opts["price-in"], prefix + "price-in", price_in);
    chain.apply(opts["price-out"], prefix + "price-out", price_out);
  }

  vt::EndpointConfig build() const {
    vt::EndpointConfig config;
    config.base_url = base_url;
    config.model_name = model;
    config.api_key_source = api_key_env;
    config.max_parallel = max_parallel;
    config.timeout_ms = timeout_ms;
    config.retry.max_attempts = max_attempts;
    config.retry.backoff_base_ms = backoff_ms;
    config.price_per_1k_in = price_in;
    config.price_per_1k_out = price_out;
    return config;
  }

  ordered_json to_json() const {
    return {{"base_url", base_url},       {"model", model},
            {"api_key_env", api_key_env}, {"max_parallel", max_parallel},
            {"timeout_ms", timeout_ms},   {"max_attempts", max_attempts},
            {"backoff_ms", backoff_ms},   {"price_in", price_in},
            {"price_out", price_out}};
  }
};

void require_path(const fs::path& path, const std::string& what) {
  if (!fs::exists(path)) {
    throw vt::Error(vt::ErrorKind::config, what + " not found: " + path.string());
  }
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw vt::Error(vt::ErrorKind::io, "cannot read " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_file(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw vt::Error(vt::ErrorKind::io, "cannot write " + path.string());
  out << content;
}

// machine-readable per-run log under runs/
class RunLog {
 public:
  RunLog(std::string subcommand, ordered_json config)
      : started_(std::chrono::system_clock::now()),
        clock_start_(std::chrono::steady_clock::now()) {
    payload_["subcommand"] = std::move(subcommand);
    payload_["config"] = config;
    payload_["config_hash"] = vt::sha256_hex(config.dump());
  }

  ordered_json& counts() { return payload_["counts"]; }
  void set_ledger(const vt::CostLedger& ledger) { payload_["ledger"] = ledger.to_json(); }

  void write(const GlobalOptions& global, int exit_code) {
    if (global.dry_run) return;
    payload_["exit_code"] = exit_code;
    auto now_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                      started_.time_since_epoch())
                      .count();
    payload_["started_unix_ms"] = now_ms;
    payload_["duration_ms"] = std::chrono::duration_cast<std::chrono::milliseconds>(
                                  std::chrono::steady_clock::now() - clock_start_)
                                  .count();
    fs::path dir(global.runs_dir);
    fs::create_directories(dir);
    std::string name = std::to_string(now_ms) + "-" +
                       payload_["subcommand"].get<std::string>() + ".json";
    write_file(dir / name, payload_.dump(2) + "\n");
  }

 private:
  ordered_json payload_;
  std::chrono::system_clock::time_point started_;
  std::chrono::steady_clock::time_point clock_start_;
};

std::string media_type_for(const fs::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (ext == ".png") return "image/png";
  if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
  if (ext == ".gif") return "image/gif";
  if (ext == ".webp") return "image/webp";
  return "application/octet-stream";
}

fs::path uri_to_path(const std::string& uri) {
  if (uri.rfind("file://", 0) == 0) return fs::path(uri.substr(7));
  return fs::path(uri);
}

struct LoadedTable {
  std::string file;
  std::string image_id;
  vt::VisualTable table;
};

void load_table_node(const json& j, const std::string& origin, const std::string& fallback_id,
                     std::vector<LoadedTable>& out, std::vector<std::string>& errors) {
  if (j.is_discarded() || !j.is_object()) {
    errors.push_back(origin + ": not a JSON object");
    return;
  }
  std::string image_id = j.value("image_id", fallback_id);
  const json& node = j.contains("table") ? j["table"] : j;
  vt::ParseOutcome outcome = vt::extract_and_parse(node.dump(), vt::ParsePolicy::lenient);
  if (!outcome.ok()) {
    errors.push_back(origin + ": " + outcome.error_detail);
    return;
  }
  out.push_back({origin, image_id, std::move(*outcome.table)});
}

void load_tables_jsonl(const fs::path& file, std::vector<LoadedTable>& out,
                       std::vector<std::string>& errors) {
  std::istringstream in(read_file(file));
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (vt::trim_copy(line).empty()) continue;
    std::string origin = file.filename().string() + ":" + std::to_string(line_no);
    load_table_node(json::parse(line, nullptr, false), origin,
                    file.stem().string() + "-" + std::to_string(line_no), out, errors);
  }
}

// accepts a directory of .json/.jsonl files or a single .jsonl file; tables
// are bare objects or {"image_id", "table"} wrappers
std::vector<LoadedTable> load_tables_dir(const fs::path& path, std::vector<std::string>& errors) {
  require_path(path, "tables path");
  std::vector<LoadedTable> out;
  if (fs::is_regular_file(path)) {
    load_tables_jsonl(path, out, errors);
    return out;
  }
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(path)) {
    std::string ext = entry.path().extension().string();
    if (ext == ".json" || ext == ".jsonl") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  for (const fs::path& file : files) {
    if (file.extension() == ".jsonl") {
      load_tables_jsonl(file, out, errors);
    } else {
      load_table_node(json::parse(read_file(file), nullptr, false), file.filename().string(),
                      file.stem().string(), out, errors);
    }
  }
  return out;
}

vt::PromptRegistry make_registry(const std::string& templates_manifest) {
  vt::PromptRegistry registry;
  if (!templates_manifest.empty()) {
    require_path(templates_manifest, "templates manifest");
    registry.load_manifest(templates_manifest);
  }
  return registry;
}

vt::AblationMask mask_from_flags(bool keep_scene, bool keep_attribute, bool keep_knowledge,
                                 bool no_table) {
  if (no_table) return vt::AblationMask::no_table();
  return {keep_scene, keep_attribute, keep_knowledge, false};
}

// ---------------------------------------------------------------------------
// collect / generate
// ---------------------------------------------------------------------------

struct BatchArgs {
  std::string manifest;
  std::string out_dir;
  std::string cache_dir;
  std::string templates_manifest;
  std::vector<std::string> guidelines;
  int limit = -1;
  int stop_after = -1;
  int max_tokens = 2048;
  double temperature = 0.0;
  EndpointFlags endpoint;
};

int run_batch(const std::string& kind, BatchArgs& args, GlobalOptions& global) {
  require_path(args.manifest, "manifest");
  vt::ImageManifest manifest = vt::load_manifest_jsonl(args.manifest);
  if (args.limit >= 0 && static_cast<std::size_t>(args.limit) < manifest.entries.size()) {
    manifest.entries.resize(args.limit);
  }
  vt::PromptRegistry registry = make_registry(args.templates_manifest);
  vt::RenderedPrompt prompt;
  if (kind == "collect") {
    vt::CollectionPromptOptions options;
    options.extra_guidelines = args.guidelines;
    prompt = vt::render_collection_prompt(registry, options);
  } else {
    prompt = vt::render_generation_prompt(registry);
  }

  struct Failure {
    std::string image_id;
    std::string error;
    std::string detail;
  };
  std::vector<Failure> failures;
  std::vector<vt::CollectItem> items;
  for (const vt::ManifestEntry& entry : manifest.entries) {
    if (global.dry_run) {
      items.push_back({entry.image_id, std::nullopt, prompt.text});
      continue;
    }
    fs::path image_path = uri_to_path(entry.image_uri);
    if (!fs::exists(image_path)) {
      failures.push_back({entry.image_id, "io", "image not found: " + image_path.string()});
      continue;
    }
    vt::ImagePayload image{read_file(image_path), media_type_for(image_path)};
    items.push_back({entry.image_id, std::move(image), prompt.text});
  }

  if (global.dry_run) {
    std::cout << "plan: " << kind << " " << items.size() << " image(s) via "
              << args.endpoint.model << " at " << args.endpoint.base_url << "\n";
    for (const vt::CollectItem& item : items) {
      std::cout << "plan: call model for image " << item.image_id << "\n";
    }
    std::cout << "plan: write per-image tables under " << args.out_dir << "/tables\n";
    std::cout << "plan: 0 network calls made, 0 files written\n";
    return kExitOk;
  }

  ordered_json config;
  config["kind"] = kind;
  config["manifest"] = args.manifest;
  config["out"] = args.out_dir;
  config["template_id"] = prompt.template_id;
  config["endpoint"] = args.endpoint.to_json();
  config["max_tokens"] = args.max_tokens;
  config["temperature"] = args.temperature;
  config["seed"] = global.seed;
  RunLog log(kind, config);

  fs::path cache_dir = args.cache_dir.empty() ? fs::path(args.out_dir) / "cache" : fs::path(args.cache_dir);
  vt::ResponseCache cache(cache_dir);
  vt::CostLedger ledger;
  vt::EndpointClient client(args.endpoint.build(), &cache, &ledger);

  vt::BatchOptions options;
  options.output_dir = args.out_dir;
  options.decode.temperature = args.temperature;
  options.decode.max_tokens = args.max_tokens;
  options.stop_after = args.stop_after;
  vt::BatchReport report = vt::batch_collect(client, items, options);

  for (const vt::BatchItemResult& item : report.items) {
    if (!item.outcome.ok() && item.error.has_value()) {
      failures.push_back({item.image_id, vt::to_string(*item.error), item.error_detail});
    }
  }
  if (!failures.empty()) {
    std::string lines;
    for (const Failure& failure : failures) {
      ordered_json j;
      j["image_id"] = failure.image_id;
      j["error"] = failure.error;
      j["detail"] = failure.detail;
      lines += j.dump() + "\n";
    }
    write_file(fs::path(args.out_dir) / "failures.jsonl", lines);
  }

  log.counts()["items"] = manifest.entries.size();
  log.counts()["succeeded"] = report.succeeded;
  log.counts()["failed"] = failures.size();
  log.counts()["skipped_existing"] = report.skipped_existing;
  log.set_ledger(ledger);
  int rc = failures.empty() ? kExitOk : kExitPartial;
  log.write(global, rc);

  std::cout << kind << ": " << report.succeeded << " ok, " << failures.size() << " failed, "
            << report.skipped_existing << " already present -> " << args.out_dir << "\n";
  return rc;
}

// ---------------------------------------------------------------------------
// stats
// ---------------------------------------------------------------------------

int run_stats(const std::string& tables_dir, const std::string& tokenizer,
              const std::string& out_path, GlobalOptions& global) {
  std::vector<std::string> errors;
  std::vector<LoadedTable> tables = load_tables_dir(tables_dir, errors);
  if (global.dry_run) {
    std::cout << "plan: stats over " << tables.size() << " table(s) in " << tables_dir << "\n";
    return kExitOk;
  }

  ordered_json per_table = ordered_json::array();
  std::map<std::int64_t, std::int64_t> histogram;
  std::int64_t objects_total = 0;
  double token_sum = 0;
  for (const LoadedTable& loaded : tables) {
    vt::TableStats stats = vt::count_tokens(loaded.table, tokenizer);
    histogram[stats.object_count] += 1;
    objects_total += stats.object_count;
    token_sum += static_cast<double>(stats.token_count);
    per_table.push_back({{"file", loaded.file},
                         {"image_id", loaded.image_id},
                         {"token_count", stats.token_count},
                         {"object_count", stats.object_count},
                         {"char_count", stats.char_count},
                         {"scene_chars", stats.scene_chars},
                         {"category_chars", stats.category_chars},
                         {"attribute_chars", stats.attribute_chars},
                         {"knowledge_chars", stats.knowledge_chars}});
  }
  ordered_json hist;
  for (const auto& [objects, count] : histogram) hist[std::to_string(objects)] = count;
  ordered_json out;
  out["tokenizer_id"] = tokenizer;
  out["tables"] = tables.size();
  out["objects_total"] = objects_total;
  out["object_count_histogram"] = hist;
  out["token_count_mean"] = tables.empty() ? 0.0 : token_sum / static_cast<double>(tables.size());
  out["per_table"] = per_table;
  if (!errors.empty()) out["errors"] = errors;

  ordered_json config{{"tables", tables_dir}, {"tokenizer", tokenizer}, {"out", out_path}};
  RunLog log("stats", config);
  log.counts()["tables"] = tables.size();
  log.counts()["errors"] = errors.size();

  std::string dump = out.dump(2) + "\n";
  if (out_path.empty()) {
    std::cout << dump;
  } else {
    write_file(out_path, dump);
    std::cout << "stats: " << tables.size() << " tables, " << objects_total << " objects -> "
              << out_path << "\n";
  }
  int rc = errors.empty() ? kExitOk : kExitPartial;
  log.write(global, rc);
  return rc;
}

// ---------------------------------------------------------------------------
// ablate
// ---------------------------------------------------------------------------

int run_ablate(const std::string& tables_dir, const std::string& out_dir,
               const vt::AblationMask& mask, GlobalOptions& global) {
  std::vector<std::string> errors;
  std::vector<LoadedTable> tables = load_tables_dir(tables_dir, errors);
  if (global.dry_run) {
    std::cout << "plan: ablate " << tables.size() << " table(s) with mask " << vt::to_string(mask)
              << " -> " << out_dir << "\n";
    return kExitOk;
  }
  ordered_json config{{"tables", tables_dir}, {"out", out_dir}, {"mask", vt::to_string(mask)}};
  RunLog log("ablate", config);
  fs::create_directories(out_dir);
  for (const LoadedTable& loaded : tables) {
    vt::VisualTable ablated = vt::ablate(loaded.table, mask);
    std::string payload = "{\"image_id\": \"" + vt::json_escape(loaded.image_id) +
                          "\", \"table\": " + vt::canonical_serialize(ablated) + "}\n";
    write_file(fs::path(out_dir) / loaded.file, payload);
  }
  log.counts()["tables"] = tables.size();
  log.counts()["errors"] = errors.size();
  int rc = errors.empty() ? kExitOk : kExitPartial;
  log.write(global, rc);
  std::cout << "ablate: " << tables.size() << " table(s) with mask " << vt::to_string(mask)
            << " -> " << out_dir << "\n";
  return rc;
}

// ---------------------------------------------------------------------------
// curate
// ---------------------------------------------------------------------------

int run_curate(const std::string& manifest_path, const std::string& out_path,
               std::int64_t min_responses, GlobalOptions& global) {
  require_path(manifest_path, "manifest");
  vt::ImageManifest manifest = vt::load_manifest_jsonl(manifest_path);
  vt::ImageManifest curated = vt::curate(manifest, min_responses);
  if (global.dry_run) {
    std::cout << "plan: curate " << manifest.entries.size() << " -> " << curated.entries.size()
              << " entries (min_responses=" << min_responses << "); would write " << out_path
              << "\n";
    return kExitOk;
  }
  ordered_json config{{"manifest", manifest_path}, {"out", out_path},
                      {"min_responses", min_responses}};
  RunLog log("curate", config);
  vt::save_manifest_jsonl(out_path, curated);
  log.counts()["in"] = manifest.entries.size();
  log.counts()["kept"] = curated.entries.size();
  log.write(global, kExitOk);
  std::cout << "curate: kept " << curated.entries.size() << " of " << manifest.entries.size()
            << " -> " << out_path << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// assemble
// ---------------------------------------------------------------------------

std::vector<vt::QaPair> load_qa_jsonl(const fs::path& path) {
  require_path(path, "qa file");
  std::ifstream in(path, std::ios::binary);
  std::vector<vt::QaPair> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (vt::trim_copy(line).empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      throw vt::Error(vt::ErrorKind::io,
                      path.string() + ":" + std::to_string(line_no) + ": malformed JSONL line");
    }
    out.push_back({j.value("image_id", ""), j.value("question", ""), j.value("answer", "")});
  }
  return out;
}

struct AssembleArgs {
  std::string mode = "generator";  // generator | vqa
  std::string tables_dir;
  std::string qa_path;
  std::string vqa_mode = "with_image";
  std::string out_path;
  std::string tokenizer = std::string(vt::kDefaultTokenizer);
  std::string templates_manifest;
  bool keep_scene = true;
  bool keep_attribute = true;
  bool keep_knowledge = true;
  bool no_table = false;
};

int run_assemble(AssembleArgs& args, GlobalOptions& global) {
  std::vector<std::string> errors;
  std::vector<LoadedTable> loaded = load_tables_dir(args.tables_dir, errors);
  if (!errors.empty()) {
    throw vt::Error(vt::ErrorKind::config, "unreadable tables: " + errors.front());
  }
  vt::PromptRegistry registry = make_registry(args.templates_manifest);
  vt::AblationMask mask =
      mask_from_flags(args.keep_scene, args.keep_attribute, args.keep_knowledge, args.no_table);

  std::vector<vt::TrainingRecord> records;
  ordered_json meta;
  meta["mode"] = args.mode;
  meta["tokenizer_id"] = args.tokenizer;
  meta["seed"] = global.seed;
  if (args.mode == "generator") {
    std::vector<std::pair<std::string, vt::VisualTable>> tables;
    tables.reserve(loaded.size());
    for (LoadedTable& t : loaded) tables.emplace_back(t.image_id, std::move(t.table));
    if (global.dry_run) {
      std::cout << "plan: assemble " << tables.size() << " generator record(s) -> "
                << args.out_path << "\n";
      return kExitOk;
    }
    records = vt::assemble_generator_records(tables, registry, args.tokenizer);
    meta["template_id"] = registry.get("generation").id;
  } else if (args.mode == "vqa") {
    std::vector<vt::QaPair> qa = load_qa_jsonl(args.qa_path);
    std::map<std::string, vt::VisualTable> tables;
    for (LoadedTable& t : loaded) tables.emplace(t.image_id, std::move(t.table));
    vt::VqaMode mode = vt::vqa_mode_from_string(args.vqa_mode);
    if (global.dry_run) {
      std::cout << "plan: assemble " << qa.size() << " vqa record(s) (" << args.vqa_mode
                << ", mask " << vt::to_string(mask) << ") -> " << args.out_path << "\n";
      return kExitOk;
    }
    records = vt::assemble_vqa_records(qa, tables, mode, mask, args.tokenizer);
    meta["vqa_mode"] = args.vqa_mode;
    meta["mask"] = vt::to_string(mask);
  } else {
    throw vt::Error(vt::ErrorKind::config, "unknown assemble mode '" + args.mode + "'");
  }

  ordered_json config = meta;
  config["tables"] = args.tables_dir;
  config["qa"] = args.qa_path;
  config["out"] = args.out_path;
  RunLog log("assemble", config);
  vt::write_records_jsonl(args.out_path, records, meta);
  log.counts()["records"] = records.size();
  log.write(global, kExitOk);
  std::cout << "assemble: " << records.size() << " record(s) -> " << args.out_path << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string benchmark;
  std::string items_path;
  std::string predictions_path;
  std::string out_path;
  std::string protocol_override;
  std::string fingerprint;
  std::string judge_cache;
  std::string judge_template = "judge";
  std::string templates_manifest;
  std::uint64_t n = 0;
  bool vqa_soft = false;
  EndpointFlags judge;
};

int run_eval(EvalArgs& args, GlobalOptions& global) {
  const vt::BenchmarkInfo& info = vt::benchmark_info(args.benchmark);
  vt::Protocol protocol = args.protocol_override.empty()
                              ? info.protocol
                              : vt::protocol_from_string(args.protocol_override);
  require_path(args.items_path, "items file");
  require_path(args.predictions_path, "predictions file");
  std::vector<vt::EvalItem> items = vt::load_eval_items(args.items_path, args.predictions_path);
  if (args.n > 0) {
    items = vt::subsample(items, args.n, global.seed);
  }

  if (global.dry_run) {
    std::cout << "plan: eval " << items.size() << " item(s) of " << info.id << " under "
              << vt::to_string(protocol) << " protocol";
    if (protocol == vt::Protocol::judge) {
      std::cout << " via judge " << args.judge.model << " at " << args.judge.base_url;
    }
    std::cout << "; would write " << args.out_path << "\n";
    return kExitOk;
  }

  std::string fingerprint = args.fingerprint;
  if (fingerprint.empty()) {
    fingerprint = info.id + "|" + vt::to_string(protocol) + "|n=" + std::to_string(items.size()) +
                  "|seed=" + std::to_string(global.seed);
  }

  ordered_json config;
  config["benchmark"] = info.id;
  config["protocol"] = vt::to_string(protocol);
  config["items"] = args.items_path;
  config["predictions"] = args.predictions_path;
  config["n"] = args.n;
  config["seed"] = global.seed;
  config["fingerprint"] = fingerprint;
  if (protocol == vt::Protocol::judge) config["judge"] = args.judge.to_json();
  RunLog log("eval", config);

  std::vector<vt::Verdict> verdicts(items.size());
  vt::CostLedger ledger;
  if (protocol == vt::Protocol::judge) {
    vt::PromptRegistry registry = make_registry(args.templates_manifest);
    vt::ResponseCache cache;
    if (!args.judge_cache.empty()) cache = vt::ResponseCache(args.judge_cache);
    vt::EndpointClient judge(args.judge.build(), args.judge_cache.empty() ? nullptr : &cache,
                             &ledger);
    vt::JudgeOptions judge_options;
    judge_options.template_name = args.judge_template;

    std::atomic<std::size_t> next{0};
    std::mutex error_mutex;
    std::string first_error;
    auto worker = [&]() {
      while (true) {
        std::size_t i = next.fetch_add(1);
        if (i >= items.size()) break;
        {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!first_error.empty()) break;
        }
        try {
          verdicts[i] = vt::score_judge(items[i], judge, registry, judge_options);
        } catch (const vt::Error& error) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (first_error.empty()) first_error = error.what();
          break;
        }
      }
    };
    std::size_t n_threads = std::min<std::size_t>(
        static_cast<std::size_t>(std::max(1, args.judge.max_parallel)),
        std::max<std::size_t>(items.size(), 1));
    std::vector<std::thread> threads;
    for (std::size_t t = 0; t < n_threads; ++t) threads.emplace_back(worker);
    for (std::thread& t : threads) t.join();
    if (!first_error.empty()) throw vt::Error(vt::ErrorKind::judge_unavailable, first_error);
  } else {
    vt::ExactOptions exact_options;
    exact_options.vqa_soft_accuracy = args.vqa_soft;
    for (std::size_t i = 0; i < items.size(); ++i) {
      verdicts[i] = protocol == vt::Protocol::exact ? vt::score_exact(items[i], exact_options)
                                                    : vt::score_choice(items[i]);
    }
  }

  vt::ReportRow row = vt::aggregate(verdicts, info.id, fingerprint);
  vt::write_verdicts_jsonl(args.out_path, verdicts, row);

  std::size_t flagged = 0;
  for (const vt::Verdict& verdict : verdicts) flagged += verdict.flagged ? 1 : 0;
  log.counts()["items"] = items.size();
  log.counts()["flagged"] = flagged;
  char accuracy[32];
  std::snprintf(accuracy, sizeof(accuracy), "%.2f", row.accuracy);
  log.counts()["accuracy"] = row.accuracy;
  log.set_ledger(ledger);
  log.write(global, kExitOk);

  std::cout << "eval " << info.id << ": accuracy " << accuracy << " over " << items.size()
            << " item(s), " << flagged << " flagged -> " << args.out_path << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

int run_report(const std::vector<std::string>& verdict_paths,
               const std::vector<std::string>& baseline_paths, const std::string& format_name,
               const std::string& out_path, GlobalOptions& global) {
  vt::ReportFormat format = format_name == "csv" ? vt::ReportFormat::csv : vt::ReportFormat::markdown;
  if (format_name != "csv" && format_name != "markdown") {
    throw vt::Error(vt::ErrorKind::config, "unknown report format '" + format_name + "'");
  }
  std::vector<vt::ReportRow> rows;
  for (const std::string& path : verdict_paths) {
    require_path(path, "verdicts file");
    rows.push_back(vt::load_verdicts_jsonl(path).second);
  }
  std::vector<vt::ReportRow> baseline;
  for (const std::string& path : baseline_paths) {
    require_path(path, "baseline verdicts file");
    baseline.push_back(vt::load_verdicts_jsonl(path).second);
  }
  if (global.dry_run) {
    std::cout << "plan: report " << rows.size() << " row(s) as " << format_name;
    if (!baseline.empty()) std::cout << " with delta against " << baseline.size() << " baseline row(s)";
    std::cout << "\n";
    return kExitOk;
  }
  std::string text = vt::emit_report(rows, format, baseline.empty() ? nullptr : &baseline);
  ordered_json config{{"format", format_name}, {"out", out_path}};
  RunLog log("report", config);
  log.counts()["rows"] = rows.size();
  if (out_path.empty()) {
    std::cout << text;
  } else {
    write_file(out_path, text);
    std::cout << "report: " << rows.size() << " row(s) -> " << out_path << "\n";
  }
  log.write(global, kExitOk);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"visual table pipeline: collect, generate, curate, assemble, ablate, eval, report, stats"};
  app.require_subcommand(1);

  GlobalOptions global;
  global.seed_opt = app.add_option("--seed", global.seed, "top-level seed for all randomness");
  global.runs_opt = app.add_option("--runs-dir", global.runs_dir, "directory for run logs");
  app.add_flag("--dry-run", global.dry_run, "print the planned actions; no writes, no network");
  app.add_option("--config", global.config_file, "key=value config file");

  int rc = kExitOk;

  // collect / generate
  BatchArgs collect_args;
  BatchArgs generate_args;
  for (auto [name, args, help] :
       {std::tuple{"collect", &collect_args, "collect visual tables from a vision endpoint"},
        std::tuple{"generate", &generate_args, "generate visual tables with the trained generator"}}) {
    CLI::App* cmd = app.add_subcommand(name, help);
    cmd->add_option("--manifest", args->manifest, "image manifest JSONL")->required();
    cmd->add_option("--out", args->out_dir, "output directory")->required();
    cmd->add_option("--cache", args->cache_dir, "response cache directory (default <out>/cache)");
    cmd->add_option("--templates-manifest", args->templates_manifest, "prompt template overrides");
    cmd->add_option("--limit", args->limit, "process only the first N manifest entries");
    cmd->add_option("--stop-after", args->stop_after, "stop after N new items (checkpointing)");
    cmd->add_option("--max-tokens", args->max_tokens, "decode token budget");
    cmd->add_option("--temperature", args->temperature, "decode temperature");
    if (std::string(name) == "collect") {
      cmd->add_option("--guideline", args->guidelines, "extra collection guideline (repeatable)");
    }
    args->endpoint.add(cmd, "");
    std::string kind = name;
    cmd->callback([&, args, kind]() {
      global.resolve();
      args->endpoint.resolve(global.chain);
      rc = run_batch(kind, *args, global);
    });
  }

  // curate
  struct {
    std::string manifest, out;
    std::int64_t min_responses = 2;
  } curate_args;
  {
    CLI::App* cmd = app.add_subcommand("curate", "filter a manifest by instruction-response count");
    cmd->add_option("--manifest", curate_args.manifest, "input manifest JSONL")->required();
    cmd->add_option("--out", curate_args.out, "output manifest JSONL")->required();
    auto* min_opt = cmd->add_option("--min-responses", curate_args.min_responses,
                                    "minimum instruction-following responses");
    cmd->callback([&, min_opt]() {
      global.resolve();
      global.chain.apply(min_opt, "min-responses", curate_args.min_responses);
      rc = run_curate(curate_args.manifest, curate_args.out, curate_args.min_responses, global);
    });
  }

  // ablate
  struct {
    std::string tables, out;
    bool keep_scene = false, keep_attribute = false, keep_knowledge = false;
  } ablate_args;
  {
    CLI::App* cmd = app.add_subcommand("ablate", "drop visual table components by mask");
    cmd->add_option("--tables", ablate_args.tables, "input tables directory")->required();
    cmd->add_option("--out", ablate_args.out, "output tables directory")->required();
    cmd->add_flag("--keep-scene", ablate_args.keep_scene, "keep scene descriptions");
    cmd->add_flag("--keep-attribute", ablate_args.keep_attribute, "keep attribute descriptions");
    cmd->add_flag("--keep-knowledge", ablate_args.keep_knowledge, "keep knowledge descriptions");
    cmd->callback([&]() {
      global.resolve();
      rc = run_ablate(ablate_args.tables, ablate_args.out,
                      mask_from_flags(ablate_args.keep_scene, ablate_args.keep_attribute,
                                      ablate_args.keep_knowledge, false),
                      global);
    });
  }

  // assemble
  AssembleArgs assemble_args;
  {
    CLI::App* cmd = app.add_subcommand("assemble", "build training-ready JSONL records");
    cmd->add_option("--mode", assemble_args.mode, "generator | vqa")->required();
    cmd->add_option("--tables", assemble_args.tables_dir, "tables directory")->required();
    cmd->add_option("--qa", assemble_args.qa_path, "qa JSONL (vqa mode)");
    cmd->add_option("--vqa-mode", assemble_args.vqa_mode, "with_image | table_only");
    cmd->add_option("--out", assemble_args.out_path, "output records JSONL")->required();
    cmd->add_option("--tokenizer", assemble_args.tokenizer, "tokenizer id for loss spans");
    cmd->add_option("--templates-manifest", assemble_args.templates_manifest,
                    "prompt template overrides");
    cmd->add_flag("--drop-scene{false}", assemble_args.keep_scene, "ablate scene descriptions")
        ->disable_flag_override();
    cmd->add_flag("--drop-attribute{false}", assemble_args.keep_attribute,
                  "ablate attribute descriptions")
        ->disable_flag_override();
    cmd->add_flag("--drop-knowledge{false}", assemble_args.keep_knowledge,
                  "ablate knowledge descriptions")
        ->disable_flag_override();
    cmd->add_flag("--no-table", assemble_args.no_table, "omit the table segment entirely");
    cmd->callback([&]() {
      global.resolve();
      rc = run_assemble(assemble_args, global);
    });
  }

  // eval
  EvalArgs eval_args;
  {
    CLI::App* cmd = app.add_subcommand("eval", "score predictions under a benchmark protocol");
    cmd->add_option("--benchmark", eval_args.benchmark, "benchmark id")->required();
    cmd->add_option("--items", eval_args.items_path, "benchmark items JSONL")->required();
    cmd->add_option("--predictions", eval_args.predictions_path, "predictions JSONL")->required();
    cmd->add_option("--out", eval_args.out_path, "output verdicts JSONL")->required();
    cmd->add_option("--n", eval_args.n, "subsample size (0 = all items)");
    cmd->add_option("--protocol", eval_args.protocol_override, "override: exact | choice | judge");
    cmd->add_option("--fingerprint", eval_args.fingerprint, "config fingerprint for the report row");
    cmd->add_flag("--vqa-soft", eval_args.vqa_soft, "VQA-v2 multi-annotator soft accuracy");
    cmd->add_option("--judge-cache", eval_args.judge_cache, "judge response cache directory");
    cmd->add_option("--judge-template", eval_args.judge_template, "judge template name");
    cmd->add_option("--templates-manifest", eval_args.templates_manifest,
                    "prompt template overrides");
    eval_args.judge.add(cmd, "judge-");
    cmd->callback([&]() {
      global.resolve();
      eval_args.judge.resolve(global.chain);
      rc = run_eval(eval_args, global);
    });
  }

  // report
  struct {
    std::vector<std::string> verdicts, baseline;
    std::string format = "markdown", out;
  } report_args;
  {
    CLI::App* cmd = app.add_subcommand("report", "aggregate verdicts into a benchmark report");
    cmd->add_option("--verdicts", report_args.verdicts, "verdict JSONL files")->required();
    cmd->add_option("--baseline", report_args.baseline, "baseline verdict JSONL files");
    cmd->add_option("--format", report_args.format, "markdown | csv");
    cmd->add_option("--out", report_args.out, "output file (default stdout)");
    cmd->callback([&]() {
      global.resolve();
      rc = run_report(report_args.verdicts, report_args.baseline, report_args.format,
                      report_args.out, global);
    });
  }

  // stats
  struct {
    std::string tables, out;
    std::string tokenizer = std::string(vt::kDefaultTokenizer);
  } stats_args;
  {
    CLI::App* cmd = app.add_subcommand("stats", "token/object statistics over a tables directory");
    cmd->add_option("--tables", stats_args.tables, "tables directory")->required();
    cmd->add_option("--tokenizer", stats_args.tokenizer, "tokenizer id");
    cmd->add_option("--out", stats_args.out, "output JSON file (default stdout)");
    cmd->callback([&]() {
      global.resolve();
      rc = run_stats(stats_args.tables, stats_args.tokenizer, stats_args.out, global);
    });
  }

  try {
    // pre-scan argv for --config so the chain is ready before callbacks run
    for (int i = 1; i < argc - 1; ++i) {
      if (std::string(argv[i]) == "--config") {
        global.chain.load_file(argv[i + 1]);
        break;
      }
    }
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  } catch (const vt::Error& error) {
    std::cerr << "error: " << error.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& error) {
    std::cerr << "error: " << error.what() << "\n";
    return kExitConfig;
  }
  return rc;
}
