#include <benchmark/benchmark.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "vt/eval.hpp"
#include "vt/parse.hpp"
#include "vt/table.hpp"

namespace {

std::string load_fixture(const char* name) {
  std::filesystem::path path = std::filesystem::path(VT_TEST_FIXTURE_DIR) / "golden" / name;
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

const std::string& dog_text() {
  static const std::string text = load_fixture("dog_monday.txt");
  return text;
}

void BM_strict_parse(benchmark::State& state) {
  const std::string& text = dog_text();
  for (auto _ : state) {
    auto outcome = vt::extract_and_parse(text, vt::ParsePolicy::strict);
    benchmark::DoNotOptimize(outcome);
  }
  state.SetBytesProcessed(static_cast<int64_t>(state.iterations() * text.size()));
}
BENCHMARK(BM_strict_parse);

void BM_lenient_repair_truncated(benchmark::State& state) {
  std::string truncated = dog_text().substr(0, dog_text().size() / 2);
  for (auto _ : state) {
    auto outcome = vt::extract_and_parse(truncated, vt::ParsePolicy::lenient);
    benchmark::DoNotOptimize(outcome);
  }
  state.SetBytesProcessed(static_cast<int64_t>(state.iterations() * truncated.size()));
}
BENCHMARK(BM_lenient_repair_truncated);

void BM_canonical_serialize(benchmark::State& state) {
  vt::VisualTable table = *vt::extract_and_parse(dog_text(), vt::ParsePolicy::strict).table;
  for (auto _ : state) {
    std::string out = vt::canonical_serialize(table);
    benchmark::DoNotOptimize(out);
  }
}
BENCHMARK(BM_canonical_serialize);

void BM_tokenize_table(benchmark::State& state) {
  vt::VisualTable table = *vt::extract_and_parse(dog_text(), vt::ParsePolicy::strict).table;
  for (auto _ : state) {
    auto stats = vt::count_tokens(table);
    benchmark::DoNotOptimize(stats);
  }
}
BENCHMARK(BM_tokenize_table);

void BM_normalize_answer(benchmark::State& state) {
  for (auto _ : state) {
    std::string out = vt::normalize_answer("  The Quick,   Brown Fox -- jumped!  ");
    benchmark::DoNotOptimize(out);
  }
}
BENCHMARK(BM_normalize_answer);

void BM_extract_choice_letter(benchmark::State& state) {
  std::vector<std::string> choices = {"a red apple", "a green pear", "a blue plum", "a lemon"};
  for (auto _ : state) {
    auto letter = vt::extract_choice_letter("I would say the answer is (C), the blue one.", choices);
    benchmark::DoNotOptimize(letter);
  }
}
BENCHMARK(BM_extract_choice_letter);

void BM_subsample_855_of_1000(benchmark::State& state) {
  for (auto _ : state) {
    auto indices = vt::subsample_indices(1000, 855, 0);
    benchmark::DoNotOptimize(indices);
  }
}
BENCHMARK(BM_subsample_855_of_1000);

}  // namespace

BENCHMARK_MAIN();
