#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "vt/benchmarks.hpp"
#include "vt/client.hpp"
#include "vt/error.hpp"
#include "vt/prompt.hpp"

namespace vt {

struct EvalItem {
  std::string benchmark_id;
  std::string item_id;
  std::string question;
  std::vector<std::string> ground_truth;  // one or more accepted variants
  std::optional<std::vector<std::string>> choices;
  std::string prediction;  // raw model text
};

struct Verdict {
  std::string item_id;
  double score = 0.0;  // {0,1} for exact/choice, [0,1] for judge
  Protocol protocol = Protocol::exact;
  std::string detail;   // normalized prediction / extracted letter / judge reply
  bool flagged = false; // unextractable choice or judge fallback
};

struct ReportRow {
  std::string benchmark_id;
  std::size_t n_items = 0;
  double accuracy = 0.0;  // 100 * mean(score)
  Protocol protocol = Protocol::exact;
  std::string config_fingerprint;
};

// lowercase, trim, strip terminal punctuation, collapse internal whitespace,
// strip leading articles (a, an, the). Idempotent.
std::string normalize_answer(std::string_view raw);

struct ExactOptions {
  // VQA-v2's multi-annotator soft accuracy min(matches/3, 1); default is
  // plain any-variant string matching.
  bool vqa_soft_accuracy = false;
};

// String match after normalization against any ground-truth variant.
// POPE predictions reduce to yes/no by their leading token first; VizWiz
// "unanswerable" matches through normalization like any other string.
Verdict score_exact(const EvalItem& item, const ExactOptions& options = {});

// Letter extraction precedence: (1) the whole prediction is one letter,
// (2) a leading "X." / "X)" / "X:" or "(X)" anywhere, (3) the prediction
// contains exactly one choice's text. Unextractable scores 0 and is flagged.
Verdict score_choice(const EvalItem& item);

std::optional<char> extract_choice_letter(std::string_view prediction,
                                          const std::vector<std::string>& choices);

struct JudgeOptions {
  std::string template_name = "judge";
  int parse_retries = 1;  // re-ask once on a malformed reply
};

// Renders the judge prompt over (question, ground truth, prediction), parses
// "Score: <x>" from the reply (x in [0,1] as-is, (1,10] rescaled by 10), and
// falls back to a flagged 0 after exhausting retries on malformed replies.
// Throws Error{judge_unavailable} when the endpoint cannot be reached.
Verdict score_judge(const EvalItem& item, EndpointClient& judge, const PromptRegistry& registry,
                    const JudgeOptions& options = {});

// "Score: <x>" parser, exposed for tests; nullopt when absent or out of range.
std::optional<double> parse_judge_score(std::string_view reply);

// SplitMix64 sequence; the named PRNG behind subsampling so subsets are
// reproducible across platforms and languages.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}
  std::uint64_t next();

 private:
  std::uint64_t state_;
};

// Deterministic uniform subset without replacement: a partial Fisher-Yates
// pass driven by SplitMix64, selected indices returned in ascending order.
// Throws Error{sample_too_large} when n > total.
std::vector<std::size_t> subsample_indices(std::size_t total, std::size_t n, std::uint64_t seed);

std::vector<EvalItem> subsample(const std::vector<EvalItem>& items, std::size_t n,
                                std::uint64_t seed);

// accuracy = 100 * mean(score); throws Error{empty_verdicts}.
ReportRow aggregate(const std::vector<Verdict>& verdicts, std::string_view benchmark_id,
                    std::string_view config_fingerprint);

enum class ReportFormat { markdown, csv };

// One line per row; a delta column appears when baseline rows are supplied
// (matched by benchmark_id).
std::string emit_report(const std::vector<ReportRow>& rows, ReportFormat format,
                        const std::vector<ReportRow>* baseline = nullptr);

// Benchmark item and prediction files are JSONL:
//   items:       {"benchmark_id","item_id","question","ground_truth",("choices")}
//                 ground_truth: string or array of strings
//   predictions: {"benchmark_id","item_id","prediction"}
std::vector<EvalItem> load_eval_items(const std::filesystem::path& items_path,
                                      const std::filesystem::path& predictions_path);
void write_verdicts_jsonl(const std::filesystem::path& path, const std::vector<Verdict>& verdicts,
                          const ReportRow& row);
std::pair<std::vector<Verdict>, ReportRow> load_verdicts_jsonl(const std::filesystem::path& path);

}  // namespace vt
