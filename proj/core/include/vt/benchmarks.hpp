#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "vt/error.hpp"

namespace vt {

enum class Protocol { exact, choice, judge };

const char* to_string(Protocol protocol);
Protocol protocol_from_string(std::string_view name);  // throws Error{config}

// One registered evaluation benchmark: its scoring protocol, whether items
// carry lettered choices, and the response prompt appended to questions
// (empty for the open-ended judge benchmarks).
struct BenchmarkInfo {
  std::string id;
  std::string display_name;
  Protocol protocol;
  bool multiple_choice = false;
  std::string response_prompt;
};

// All eleven registered benchmarks, in report order.
const std::vector<BenchmarkInfo>& benchmark_registry();

bool benchmark_registered(std::string_view id);

// Resolves common aliases ("vqav2", "scienceqa-img", ...). Throws
// Error{unknown_benchmark} for anything unregistered.
const BenchmarkInfo& benchmark_info(std::string_view id);

}  // namespace vt
