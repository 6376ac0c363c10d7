#include "testutil.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace vttest {

std::filesystem::path fixture_dir() { return VT_TEST_FIXTURE_DIR; }

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << content;
}

std::vector<std::pair<std::string, std::string>> golden_fixture_texts() {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& entry : std::filesystem::directory_iterator(fixture_dir() / "golden")) {
    if (entry.path().extension() != ".txt") continue;
    out.emplace_back(entry.path().stem().string(), read_file(entry.path()));
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::map<std::string, int> golden_object_counts() {
  nlohmann::json j = nlohmann::json::parse(read_file(fixture_dir() / "golden_object_counts.json"));
  std::map<std::string, int> out;
  for (const auto& [name, count] : j.items()) out[name] = count.get<int>();
  return out;
}

std::filesystem::path fresh_temp_dir(const std::string& tag) {
  std::filesystem::path dir = std::filesystem::temp_directory_path() / ("vtab_test_" + tag);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

namespace {

// pool exercises escaping, unicode passthrough and whitespace handling
const std::vector<std::string>& char_pool() {
  static const std::vector<std::string> pool = {
      "a", "b", "c", "d", "Z", "0", "7", " ", " ",  " ", ".", ",", "'", ":", ";", "-",
      "\"", "\\", "{", "}", "[", "]", "\n", "\t", "é", "日", "ß", "🙂",
  };
  return pool;
}

std::string random_text(vt::SplitMix64& rng, std::size_t min_len, std::size_t max_len) {
  const auto& pool = char_pool();
  std::size_t len = min_len + rng.next() % (max_len - min_len + 1);
  std::string out;
  for (std::size_t i = 0; i < len; ++i) out += pool[rng.next() % pool.size()];
  return out;
}

std::string random_word(vt::SplitMix64& rng) {
  static const char* words[] = {"dog",   "floor", "sky",   "person", "tree",
                                "table", "sign",  "cloud", "bridge", "boat"};
  return words[rng.next() % 10];
}

}  // namespace

vt::VisualTable random_table(vt::SplitMix64& rng) {
  vt::VisualTable table;
  // mostly full-valid tables, with some ablated shapes mixed in
  bool empty_scene = rng.next() % 10 == 0;
  table.scene_description = empty_scene ? "" : random_word(rng) + " " + random_text(rng, 1, 40);
  std::size_t n_objects = rng.next() % 7;
  for (std::size_t i = 0; i < n_objects; ++i) {
    vt::ObjectEntry entry;
    entry.category = random_word(rng) + random_text(rng, 0, 8);
    if (rng.next() % 10 != 0) entry.attribute = random_text(rng, 1, 40);
    if (rng.next() % 10 != 0) entry.knowledge = random_text(rng, 1, 40);
    table.objects.push_back(std::move(entry));
  }
  return table;
}

vt::AblationMask random_mask(vt::SplitMix64& rng) {
  vt::AblationMask mask;
  mask.keep_scene = rng.next() % 2 == 0;
  mask.keep_attribute = rng.next() % 2 == 0;
  mask.keep_knowledge = rng.next() % 2 == 0;
  return mask;
}

std::string random_bytes(vt::SplitMix64& rng, std::size_t max_len) {
  std::size_t len = rng.next() % (max_len + 1);
  std::string out;
  out.reserve(len);
  for (std::size_t i = 0; i < len; ++i) {
    out += static_cast<char>(rng.next() & 0xFF);
  }
  return out;
}

}  // namespace vttest
