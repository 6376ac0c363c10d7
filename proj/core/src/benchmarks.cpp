#include "vt/benchmarks.hpp"

#include <algorithm>
#include <cctype>
#include <map>

namespace vt {

namespace {

constexpr const char* kSingleWord = "Answer the question using a single word or phrase.";
constexpr const char* kOptionLetter =
    "Answer with the option's letter from the given choices directly.";
constexpr const char* kUnanswerable =
    "When the provided information is insufficient, respond with 'Unanswerable'. "
    "Answer the question using a single word or phrase.";

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

const std::map<std::string, std::string>& alias_map() {
  static const std::map<std::string, std::string> aliases = {
      {"mmvet", "mm-vet"},         {"llava-w", "llava-bench"}, {"llavabench", "llava-bench"},
      {"mmb", "mmbench"},          {"sqa", "sqa-img"},         {"scienceqa-img", "sqa-img"},
      {"scienceqa", "sqa-img"},    {"sqa-i", "sqa-img"},       {"vqav2", "vqa-v2"},
      {"vqa", "vqa-v2"},           {"vqa-t", "textvqa"},
  };
  return aliases;
}

}  // namespace

const char* to_string(Protocol protocol) {
  switch (protocol) {
    case Protocol::exact: return "exact";
    case Protocol::choice: return "choice";
    case Protocol::judge: return "judge";
  }
  return "unknown";
}

Protocol protocol_from_string(std::string_view name) {
  std::string n = lower(name);
  if (n == "exact") return Protocol::exact;
  if (n == "choice") return Protocol::choice;
  if (n == "judge") return Protocol::judge;
  throw Error(ErrorKind::config, "unknown protocol '" + n + "'");
}

const std::vector<BenchmarkInfo>& benchmark_registry() {
  static const std::vector<BenchmarkInfo> registry = {
      {"mm-vet", "MM-Vet", Protocol::judge, false, ""},
      {"llava-bench", "LLaVA-Bench", Protocol::judge, false, ""},
      {"mmmu", "MMMU", Protocol::judge, false, ""},
      {"mmbench", "MMBench", Protocol::choice, true, kOptionLetter},
      {"mmvp", "MMVP", Protocol::choice, true, kOptionLetter},
      {"pope", "POPE", Protocol::exact, false, kSingleWord},
      {"vizwiz", "VizWiz", Protocol::exact, false, kUnanswerable},
      {"sqa-img", "ScienceQA-IMG", Protocol::choice, true, kOptionLetter},
      {"gqa", "GQA", Protocol::exact, false, kSingleWord},
      {"vqa-v2", "VQA-v2", Protocol::exact, false, kSingleWord},
      {"textvqa", "TextVQA", Protocol::exact, false, kSingleWord},
  };
  return registry;
}

bool benchmark_registered(std::string_view id) {
  std::string n = lower(id);
  if (alias_map().count(n)) return true;
  const auto& registry = benchmark_registry();
  return std::any_of(registry.begin(), registry.end(),
                     [&](const BenchmarkInfo& b) { return b.id == n; });
}

const BenchmarkInfo& benchmark_info(std::string_view id) {
  std::string n = lower(id);
  if (auto it = alias_map().find(n); it != alias_map().end()) n = it->second;
  for (const BenchmarkInfo& b : benchmark_registry()) {
    if (b.id == n) return b;
  }
  throw Error(ErrorKind::unknown_benchmark, std::string(id));
}

}  // namespace vt
