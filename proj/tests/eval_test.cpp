#include <algorithm>
#include <set>

#include "doctest.h"
#include "testutil.hpp"
#include "vt/eval.hpp"

using namespace vt;

namespace {

EvalItem make_item(std::string benchmark, std::string pred, std::vector<std::string> gt,
                   std::optional<std::vector<std::string>> choices = std::nullopt) {
  EvalItem item;
  item.benchmark_id = std::move(benchmark);
  item.item_id = "t";
  item.question = "q";
  item.prediction = std::move(pred);
  item.ground_truth = std::move(gt);
  item.choices = std::move(choices);
  return item;
}

}  // namespace

TEST_CASE("answer normalization rules") {
  CHECK(normalize_answer("Yes.") == "yes");
  CHECK(normalize_answer("The red car") == "red car");
  CHECK(normalize_answer("  Two   dogs ") == "two dogs");
  CHECK(normalize_answer("An apple!!") == "apple");
  CHECK(normalize_answer("THE THE CAR") == "car");
  CHECK(normalize_answer("a") == "");
  CHECK(normalize_answer("") == "");
  CHECK(normalize_answer("don't stop") == "don't stop");
}

TEST_CASE("normalization is idempotent") {
  SplitMix64 rng(3);
  for (int i = 0; i < 500; ++i) {
    std::string text = vttest::random_bytes(rng, 60);
    std::string once = normalize_answer(text);
    CHECK(normalize_answer(once) == once);
  }
}

TEST_CASE("exact scoring matches any normalized ground-truth variant") {
  CHECK(score_exact(make_item("gqa", "Red", {"red"})).score == 1.0);
  CHECK(score_exact(make_item("gqa", "red", {"blue"})).score == 0.0);
  CHECK(score_exact(make_item("gqa", "a red car", {"Red Car", "automobile"})).score == 1.0);
}

TEST_CASE("exact scoring is symmetric under normalization") {
  SplitMix64 rng(8);
  for (int i = 0; i < 200; ++i) {
    std::string a = vttest::random_bytes(rng, 24);
    std::string b = vttest::random_bytes(rng, 24);
    double forward = score_exact(make_item("gqa", a, {b})).score;
    double backward = score_exact(make_item("gqa", b, {a})).score;
    CHECK(forward == backward);
  }
}

TEST_CASE("pope predictions reduce to their leading yes/no token") {
  CHECK(score_exact(make_item("pope", "Yes, there is a dog", {"yes"})).score == 1.0);
  CHECK(score_exact(make_item("pope", "No. Nothing like that.", {"no"})).score == 1.0);
  CHECK(score_exact(make_item("pope", "Yesterday", {"yes"})).score == 0.0);
  CHECK(score_exact(make_item("pope", "maybe", {"yes"})).score == 0.0);
}

TEST_CASE("vizwiz unanswerable matches through normalization") {
  CHECK(score_exact(make_item("vizwiz", "Unanswerable.", {"unanswerable"})).score == 1.0);
}

TEST_CASE("vqa-v2 soft accuracy is min(matches/3, 1)") {
  EvalItem item = make_item("vqa-v2", "red", {"red", "red", "blue", "red", "crimson"});
  ExactOptions soft;
  soft.vqa_soft_accuracy = true;
  CHECK(score_exact(item, soft).score == 1.0);
  item.ground_truth = {"red", "blue", "crimson"};
  CHECK(score_exact(item, soft).score == doctest::Approx(1.0 / 3.0));
  CHECK(score_exact(item).score == 1.0);  // default stays binary
}

TEST_CASE("choice letter extraction precedence") {
  std::vector<std::string> choices = {"a red apple", "a green pear", "a blue plum",
                                      "a yellow lemon"};
  CHECK(extract_choice_letter("B", choices) == 'B');
  CHECK(extract_choice_letter("b.", choices) == 'B');
  CHECK(extract_choice_letter("  C  ", choices) == 'C');
  CHECK(extract_choice_letter("The answer is (C).", choices) == 'C');
  CHECK(extract_choice_letter("D: because it is sour", choices) == 'D');
  CHECK(extract_choice_letter("A) the first one", choices) == 'A');
  CHECK(extract_choice_letter("I would pick a yellow lemon", choices) == 'D');
  CHECK(!extract_choice_letter("a red apple or a blue plum", choices).has_value());
  CHECK(!extract_choice_letter("no idea", choices).has_value());
  CHECK(!extract_choice_letter("Z", choices).has_value());  // out of range
  CHECK(!extract_choice_letter("", choices).has_value());
}

TEST_CASE("choice scoring compares the extracted letter to ground truth") {
  std::vector<std::string> choices = {"one", "two", "three"};
  EvalItem item = make_item("mmbench", "The answer is (B).", {"B"}, choices);
  Verdict verdict = score_choice(item);
  CHECK(verdict.score == 1.0);
  CHECK(verdict.detail == "B");

  item.prediction = "hard to say";
  verdict = score_choice(item);
  CHECK(verdict.score == 0.0);
  CHECK(verdict.flagged);
}

TEST_CASE("judge score parsing and rescaling") {
  CHECK(parse_judge_score("Score: 1.0") == 1.0);
  CHECK(parse_judge_score("Score: 7") == doctest::Approx(0.7));
  CHECK(parse_judge_score("score: 0.25 (partially right)") == doctest::Approx(0.25));
  CHECK(parse_judge_score("SCORE : 10") == 1.0);
  CHECK(parse_judge_score("Score: 0") == 0.0);
  CHECK(!parse_judge_score("I liked it").has_value());
  CHECK(!parse_judge_score("Score: eleven").has_value());
  CHECK(!parse_judge_score("Score: 15").has_value());
  CHECK(!parse_judge_score("Score: -2").has_value());
}

TEST_CASE("subsampling is deterministic, uniform-without-replacement, and bounded") {
  std::vector<EvalItem> items;
  for (int i = 0; i < 40; ++i) items.push_back(make_item("gqa", "p", {"g"}));
  for (std::size_t i = 0; i < items.size(); ++i) items[i].item_id = "id" + std::to_string(i);

  auto all = subsample(items, items.size(), 1);
  CHECK(all.size() == items.size());
  std::set<std::string> ids;
  for (const EvalItem& item : all) ids.insert(item.item_id);
  CHECK(ids.size() == items.size());  // identity as a set

  auto first = subsample_indices(1000, 855, 0);
  auto second = subsample_indices(1000, 855, 0);
  CHECK(first == second);
  CHECK(std::is_sorted(first.begin(), first.end()));
  CHECK(std::set<std::size_t>(first.begin(), first.end()).size() == 855);

  CHECK(subsample_indices(1000, 855, 1) != first);  // seed matters
  CHECK_THROWS_AS(subsample_indices(10, 11, 0), Error);
}

TEST_CASE("splitmix64 matches its published constants") {
  // reference values for seed 1234567 (first three outputs)
  SplitMix64 rng(1234567);
  CHECK(rng.next() == 6457827717110365317ull);
  CHECK(rng.next() == 3203168211198807973ull);
  CHECK(rng.next() == 9817491932198370423ull);
}

TEST_CASE("aggregation is the mean in percent") {
  std::vector<Verdict> verdicts(3);
  verdicts[0].score = 1.0;
  verdicts[1].score = 0.5;
  verdicts[2].score = 0.0;
  ReportRow row = aggregate(verdicts, "gqa", "cfg");
  CHECK(row.accuracy == doctest::Approx(50.0));
  CHECK(row.n_items == 3);
  CHECK_THROWS_AS(aggregate({}, "gqa", ""), Error);
}

TEST_CASE("reports carry a delta column against a baseline") {
  ReportRow a{"gqa", 100, 62.5, Protocol::exact, "mask=scene"};
  ReportRow b{"gqa", 100, 60.0, Protocol::exact, "mask=full"};
  std::vector<ReportRow> rows = {a};
  std::vector<ReportRow> baseline = {b};
  std::string markdown = emit_report(rows, ReportFormat::markdown, &baseline);
  CHECK(markdown.find("+2.50") != std::string::npos);
  std::string csv = emit_report(rows, ReportFormat::csv, &baseline);
  CHECK(csv.find("+2.50") != std::string::npos);
}

TEST_CASE("markdown and csv report the same numbers") {
  std::vector<ReportRow> rows = {{"gqa", 855, 57.81, Protocol::exact, "cfg"},
                                 {"mm-vet", 218, 39.83, Protocol::judge, "cfg"}};
  std::string markdown = emit_report(rows, ReportFormat::markdown);
  std::string csv = emit_report(rows, ReportFormat::csv);
  for (std::string number : {"57.81", "39.83", "855", "218"}) {
    CHECK(markdown.find(number) != std::string::npos);
    CHECK(csv.find(number) != std::string::npos);
  }
}

TEST_CASE("verdict files round trip with their report row") {
  auto dir = vttest::fresh_temp_dir("verdicts");
  std::vector<Verdict> verdicts(2);
  verdicts[0] = {"i1", 1.0, Protocol::exact, "yes", false};
  verdicts[1] = {"i2", 0.0, Protocol::exact, "no", true};
  ReportRow row = aggregate(verdicts, "pope", "cfg-1");
  write_verdicts_jsonl(dir / "v.jsonl", verdicts, row);
  auto [loaded, loaded_row] = load_verdicts_jsonl(dir / "v.jsonl");
  REQUIRE(loaded.size() == 2);
  CHECK(loaded[1].flagged);
  CHECK(loaded_row.benchmark_id == "pope");
  CHECK(loaded_row.accuracy == doctest::Approx(50.0));
}

TEST_CASE("eval item loading merges predictions by item id") {
  auto dir = vttest::fresh_temp_dir("evalitems");
  vttest::write_file(dir / "items.jsonl",
                     R"({"benchmark_id":"mmbench","item_id":"m1","question":"pick","ground_truth":"A","choices":["x","y"]})"
                     "\n"
                     R"({"benchmark_id":"mmbench","item_id":"m2","question":"pick","ground_truth":["B"]})"
                     "\n");
  vttest::write_file(dir / "preds.jsonl",
                     R"({"benchmark_id":"mmbench","item_id":"m2","prediction":"B"})"
                     "\n");
  auto items = load_eval_items(dir / "items.jsonl", dir / "preds.jsonl");
  REQUIRE(items.size() == 2);
  CHECK(items[0].choices.has_value());
  CHECK(items[0].prediction.empty());
  CHECK(items[1].prediction == "B");

  vttest::write_file(dir / "bad.jsonl", R"({"item_id":"nope","prediction":"?"})" "\n");
  CHECK_THROWS_AS(load_eval_items(dir / "items.jsonl", dir / "bad.jsonl"), Error);
}
