#include "vt/eval.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

namespace vt {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

bool is_space(unsigned char c) { return std::isspace(c) != 0; }
bool is_punct(unsigned char c) { return std::ispunct(c) != 0; }

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

bool is_article(std::string_view word) { return word == "a" || word == "an" || word == "the"; }

// leading alphanumeric run of an already-normalized string
std::string_view leading_token(std::string_view s) {
  std::size_t end = 0;
  while (end < s.size() && std::isalnum(static_cast<unsigned char>(s[end]))) ++end;
  return s.substr(0, end);
}

std::string format_accuracy(double value) {
  char buffer[32];
  std::snprintf(buffer, sizeof(buffer), "%.2f", value);
  return buffer;
}

std::string format_delta(double value) {
  char buffer[32];
  std::snprintf(buffer, sizeof(buffer), "%+.2f", value);
  return buffer;
}

}  // namespace

std::string normalize_answer(std::string_view raw) {
  std::string s = lower(trim_copy(raw));
  // collapse internal whitespace
  std::string collapsed;
  collapsed.reserve(s.size());
  bool in_space = false;
  for (unsigned char c : s) {
    if (is_space(c)) {
      in_space = true;
      continue;
    }
    if (in_space && !collapsed.empty()) collapsed += ' ';
    in_space = false;
    collapsed += static_cast<char>(c);
  }
  // strip terminal punctuation (and any whitespace it exposes)
  while (!collapsed.empty() &&
         (is_punct(static_cast<unsigned char>(collapsed.back())) ||
          is_space(static_cast<unsigned char>(collapsed.back())))) {
    collapsed.pop_back();
  }
  // strip leading articles until none remain
  for (;;) {
    std::size_t space = collapsed.find(' ');
    std::string_view first =
        space == std::string::npos ? std::string_view(collapsed) : std::string_view(collapsed).substr(0, space);
    if (!is_article(first)) break;
    collapsed = space == std::string::npos ? std::string{} : collapsed.substr(space + 1);
  }
  return collapsed;
}

Verdict score_exact(const EvalItem& item, const ExactOptions& options) {
  Verdict verdict;
  verdict.item_id = item.item_id;
  verdict.protocol = Protocol::exact;

  std::string pred = normalize_answer(item.prediction);
  if (item.benchmark_id == "pope") {
    // leading-token yes/no reduction
    std::string_view token = leading_token(pred);
    if (token == "yes" || token == "no") pred = std::string(token);
  }
  verdict.detail = pred;

  std::size_t matches = 0;
  for (const std::string& gt : item.ground_truth) {
    if (normalize_answer(gt) == pred) ++matches;
  }
  if (options.vqa_soft_accuracy) {
    verdict.score = std::min(static_cast<double>(matches) / 3.0, 1.0);
  } else {
    verdict.score = matches > 0 ? 1.0 : 0.0;
  }
  return verdict;
}

std::optional<char> extract_choice_letter(std::string_view prediction,
                                          const std::vector<std::string>& choices) {
  if (choices.empty() || choices.size() > 26) return std::nullopt;
  char max_letter = static_cast<char>('A' + choices.size() - 1);
  auto in_range = [&](char c) {
    char up = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return up >= 'A' && up <= max_letter;
  };
  auto upper = [](char c) { return static_cast<char>(std::toupper(static_cast<unsigned char>(c))); };

  std::string t = trim_copy(prediction);
  if (t.empty()) return std::nullopt;

  // (1) the prediction is a lone letter, allowing trailing punctuation
  {
    std::string stripped = t;
    while (!stripped.empty() && (is_punct(static_cast<unsigned char>(stripped.back())) ||
                                 is_space(static_cast<unsigned char>(stripped.back())))) {
      stripped.pop_back();
    }
    if (stripped.size() == 1 && std::isalpha(static_cast<unsigned char>(stripped[0])) &&
        in_range(stripped[0])) {
      return upper(stripped[0]);
    }
  }

  // (2) a leading "X." / "X)" / "X:" pattern, or "(X)" anywhere
  if (t.size() >= 2 && std::isalpha(static_cast<unsigned char>(t[0])) && in_range(t[0]) &&
      (t[1] == '.' || t[1] == ')' || t[1] == ':')) {
    return upper(t[0]);
  }
  for (std::size_t i = 0; i + 2 < t.size(); ++i) {
    if (t[i] == '(' && std::isalpha(static_cast<unsigned char>(t[i + 1])) && t[i + 2] == ')' &&
        in_range(t[i + 1])) {
      return upper(t[i + 1]);
    }
  }

  // (3) exactly one choice text appears in the prediction
  {
    std::string pred_norm = normalize_answer(t);
    std::optional<char> unique;
    for (std::size_t i = 0; i < choices.size(); ++i) {
      std::string choice_norm = normalize_answer(choices[i]);
      if (choice_norm.empty()) continue;
      if (pred_norm.find(choice_norm) != std::string::npos) {
        if (unique.has_value()) return std::nullopt;  // ambiguous
        unique = static_cast<char>('A' + i);
      }
    }
    if (unique.has_value()) return unique;
  }
  return std::nullopt;
}

Verdict score_choice(const EvalItem& item) {
  Verdict verdict;
  verdict.item_id = item.item_id;
  verdict.protocol = Protocol::choice;
  if (!item.choices.has_value() || item.choices->empty()) {
    verdict.flagged = true;
    verdict.detail = "no choices on item";
    return verdict;
  }
  char gt_letter = 0;
  for (const std::string& gt : item.ground_truth) {
    for (char c : gt) {
      if (std::isalpha(static_cast<unsigned char>(c))) {
        gt_letter = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
        break;
      }
    }
    if (gt_letter != 0) break;
  }
  std::optional<char> letter = extract_choice_letter(item.prediction, *item.choices);
  if (!letter.has_value()) {
    verdict.flagged = true;
    verdict.detail = "unextractable";
    verdict.score = 0.0;
    return verdict;
  }
  verdict.detail = std::string(1, *letter);
  verdict.score = (*letter == gt_letter) ? 1.0 : 0.0;
  return verdict;
}

std::optional<double> parse_judge_score(std::string_view reply) {
  std::string haystack = lower(reply);
  std::size_t pos = haystack.find("score");
  if (pos == std::string::npos) return std::nullopt;
  pos += 5;
  while (pos < haystack.size() && is_space(static_cast<unsigned char>(haystack[pos]))) ++pos;
  if (pos >= haystack.size() || haystack[pos] != ':') return std::nullopt;
  ++pos;
  while (pos < haystack.size() && is_space(static_cast<unsigned char>(haystack[pos]))) ++pos;
  if (pos >= haystack.size()) return std::nullopt;
  const char* begin = haystack.c_str() + pos;
  char* end = nullptr;
  double value = std::strtod(begin, &end);
  if (end == begin) return std::nullopt;
  if (value < 0.0 || value > 10.0) return std::nullopt;
  if (value > 1.0) value /= 10.0;
  return value;
}

Verdict score_judge(const EvalItem& item, EndpointClient& judge, const PromptRegistry& registry,
                    const JudgeOptions& options) {
  Verdict verdict;
  verdict.item_id = item.item_id;
  verdict.protocol = Protocol::judge;

  std::string ground_truth;
  for (std::size_t i = 0; i < item.ground_truth.size(); ++i) {
    if (i > 0) ground_truth += "; ";
    ground_truth += item.ground_truth[i];
  }
  RenderedPrompt prompt = render_judge_prompt(registry, item.question, ground_truth,
                                              item.prediction, options.template_name);

  std::string last_reply;
  for (int attempt = 0; attempt <= options.parse_retries; ++attempt) {
    EndpointRequest request;
    request.rendered_prompt = prompt.text;
    request.decode.temperature = 0.0;
    request.decode.max_tokens = 256;
    request.request_id = item.item_id + "-judge-" + std::to_string(attempt);
    CallResult result = judge.call(request);
    if (!result.ok()) {
      throw Error(ErrorKind::judge_unavailable,
                  std::string(to_string(*result.error)) + ": " + result.error_detail);
    }
    last_reply = result.response->text;
    if (auto score = parse_judge_score(last_reply); score.has_value()) {
      verdict.score = *score;
      std::size_t newline = last_reply.find('\n');
      std::string rationale =
          newline == std::string::npos ? "" : trim_copy(last_reply.substr(newline + 1));
      verdict.detail = rationale.empty() ? trim_copy(last_reply) : rationale.substr(0, 200);
      return verdict;
    }
  }
  verdict.score = 0.0;
  verdict.flagged = true;
  verdict.detail = "malformed judge reply: " + trim_copy(last_reply).substr(0, 120);
  return verdict;
}

std::uint64_t SplitMix64::next() {
  state_ += 0x9E3779B97F4A7C15ull;
  std::uint64_t z = state_;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

std::vector<std::size_t> subsample_indices(std::size_t total, std::size_t n, std::uint64_t seed) {
  if (n > total) {
    throw Error(ErrorKind::sample_too_large,
                std::to_string(n) + " > population " + std::to_string(total));
  }
  std::vector<std::size_t> indices(total);
  std::iota(indices.begin(), indices.end(), std::size_t{0});
  SplitMix64 rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t j = i + static_cast<std::size_t>(rng.next() % (total - i));
    std::swap(indices[i], indices[j]);
  }
  indices.resize(n);
  std::sort(indices.begin(), indices.end());
  return indices;
}

std::vector<EvalItem> subsample(const std::vector<EvalItem>& items, std::size_t n,
                                std::uint64_t seed) {
  std::vector<std::size_t> picked = subsample_indices(items.size(), n, seed);
  std::vector<EvalItem> out;
  out.reserve(n);
  for (std::size_t index : picked) out.push_back(items[index]);
  return out;
}

ReportRow aggregate(const std::vector<Verdict>& verdicts, std::string_view benchmark_id,
                    std::string_view config_fingerprint) {
  if (verdicts.empty()) {
    throw Error(ErrorKind::empty_verdicts, "no verdicts for " + std::string(benchmark_id));
  }
  ReportRow row;
  row.benchmark_id = std::string(benchmark_id);
  row.n_items = verdicts.size();
  // deterministic single-pass reduce over sorted item ids
  std::vector<const Verdict*> ordered;
  ordered.reserve(verdicts.size());
  for (const Verdict& verdict : verdicts) ordered.push_back(&verdict);
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const Verdict* a, const Verdict* b) { return a->item_id < b->item_id; });
  double sum = 0.0;
  for (const Verdict* verdict : ordered) sum += verdict->score;
  row.accuracy = 100.0 * sum / static_cast<double>(verdicts.size());
  row.protocol = verdicts.front().protocol;
  row.config_fingerprint = std::string(config_fingerprint);
  return row;
}

std::string emit_report(const std::vector<ReportRow>& rows, ReportFormat format,
                        const std::vector<ReportRow>* baseline) {
  std::map<std::string, double> base_accuracy;
  if (baseline != nullptr) {
    for (const ReportRow& row : *baseline) base_accuracy[row.benchmark_id] = row.accuracy;
  }
  bool with_delta = baseline != nullptr;
  std::ostringstream out;
  if (format == ReportFormat::markdown) {
    out << "| benchmark | protocol | items | accuracy |";
    if (with_delta) out << " delta |";
    out << " config |\n";
    out << "|---|---|---:|---:|";
    if (with_delta) out << "---:|";
    out << "---|\n";
    for (const ReportRow& row : rows) {
      out << "| " << row.benchmark_id << " | " << to_string(row.protocol) << " | " << row.n_items
          << " | " << format_accuracy(row.accuracy) << " |";
      if (with_delta) {
        auto it = base_accuracy.find(row.benchmark_id);
        out << ' ' << (it == base_accuracy.end() ? std::string("--")
                                                 : format_delta(row.accuracy - it->second))
            << " |";
      }
      out << ' ' << (row.config_fingerprint.empty() ? "-" : row.config_fingerprint) << " |\n";
    }
  } else {
    out << "benchmark,protocol,items,accuracy";
    if (with_delta) out << ",delta";
    out << ",config\n";
    for (const ReportRow& row : rows) {
      out << row.benchmark_id << ',' << to_string(row.protocol) << ',' << row.n_items << ','
          << format_accuracy(row.accuracy);
      if (with_delta) {
        auto it = base_accuracy.find(row.benchmark_id);
        out << ',' << (it == base_accuracy.end() ? std::string("--")
                                                 : format_delta(row.accuracy - it->second));
      }
      out << ',' << row.config_fingerprint << '\n';
    }
  }
  return out.str();
}

namespace {

json parse_jsonl_line(const std::string& line, const std::filesystem::path& path,
                      std::size_t line_no) {
  json j = json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    throw Error(ErrorKind::io,
                path.string() + ":" + std::to_string(line_no) + ": malformed JSONL line");
  }
  return j;
}

}  // namespace

std::vector<EvalItem> load_eval_items(const std::filesystem::path& items_path,
                                      const std::filesystem::path& predictions_path) {
  std::ifstream items_in(items_path, std::ios::binary);
  if (!items_in) throw Error(ErrorKind::io, "cannot read items " + items_path.string());
  std::vector<EvalItem> items;
  std::map<std::string, std::size_t> by_id;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(items_in, line)) {
    ++line_no;
    if (trim_copy(line).empty()) continue;
    json j = parse_jsonl_line(line, items_path, line_no);
    EvalItem item;
    item.benchmark_id = j.value("benchmark_id", "");
    item.item_id = j.value("item_id", "");
    item.question = j.value("question", "");
    if (j.contains("ground_truth")) {
      if (j["ground_truth"].is_array()) {
        for (const auto& gt : j["ground_truth"]) item.ground_truth.push_back(gt.get<std::string>());
      } else {
        item.ground_truth.push_back(j["ground_truth"].get<std::string>());
      }
    }
    if (j.contains("choices") && j["choices"].is_array()) {
      std::vector<std::string> choices;
      for (const auto& choice : j["choices"]) choices.push_back(choice.get<std::string>());
      item.choices = std::move(choices);
    }
    if (item.item_id.empty()) {
      throw Error(ErrorKind::config,
                  items_path.string() + ":" + std::to_string(line_no) + ": missing item_id");
    }
    by_id[item.item_id] = items.size();
    items.push_back(std::move(item));
  }

  if (!predictions_path.empty()) {
    std::ifstream preds_in(predictions_path, std::ios::binary);
    if (!preds_in) throw Error(ErrorKind::io, "cannot read predictions " + predictions_path.string());
    line_no = 0;
    while (std::getline(preds_in, line)) {
      ++line_no;
      if (trim_copy(line).empty()) continue;
      json j = parse_jsonl_line(line, predictions_path, line_no);
      std::string item_id = j.value("item_id", "");
      auto it = by_id.find(item_id);
      if (it == by_id.end()) {
        throw Error(ErrorKind::config, "prediction for unknown item '" + item_id + "'");
      }
      items[it->second].prediction = j.value("prediction", "");
    }
  }
  return items;
}

void write_verdicts_jsonl(const std::filesystem::path& path, const std::vector<Verdict>& verdicts,
                          const ReportRow& row) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::io, "cannot write " + path.string());
  for (const Verdict& verdict : verdicts) {
    ordered_json j;
    j["item_id"] = verdict.item_id;
    j["score"] = verdict.score;
    j["protocol"] = to_string(verdict.protocol);
    j["detail"] = verdict.detail;
    j["flagged"] = verdict.flagged;
    out << j.dump() << '\n';
  }
  out.close();
  ordered_json meta;
  meta["benchmark_id"] = row.benchmark_id;
  meta["n_items"] = row.n_items;
  meta["accuracy"] = row.accuracy;
  meta["protocol"] = to_string(row.protocol);
  meta["config_fingerprint"] = row.config_fingerprint;
  std::ofstream meta_out(path.string() + ".meta.json", std::ios::binary);
  if (!meta_out) throw Error(ErrorKind::io, "cannot write " + path.string() + ".meta.json");
  meta_out << meta.dump(2) << '\n';
}

std::pair<std::vector<Verdict>, ReportRow> load_verdicts_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot read " + path.string());
  std::vector<Verdict> verdicts;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim_copy(line).empty()) continue;
    json j = parse_jsonl_line(line, path, line_no);
    Verdict verdict;
    verdict.item_id = j.value("item_id", "");
    verdict.score = j.value("score", 0.0);
    verdict.protocol = protocol_from_string(j.value("protocol", "exact"));
    verdict.detail = j.value("detail", "");
    verdict.flagged = j.value("flagged", false);
    verdicts.push_back(std::move(verdict));
  }

  ReportRow row;
  std::ifstream meta_in(path.string() + ".meta.json", std::ios::binary);
  if (meta_in) {
    json meta = json::parse(meta_in, nullptr, false);
    if (!meta.is_discarded()) {
      row.benchmark_id = meta.value("benchmark_id", "");
      row.n_items = meta.value("n_items", std::size_t{0});
      row.accuracy = meta.value("accuracy", 0.0);
      row.protocol = protocol_from_string(meta.value("protocol", "exact"));
      row.config_fingerprint = meta.value("config_fingerprint", "");
    }
  } else if (!verdicts.empty()) {
    row = aggregate(verdicts, "unknown", "");
  }
  return {std::move(verdicts), std::move(row)};
}

}  // namespace vt
