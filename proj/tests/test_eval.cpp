#include "agentrouter/eval.hpp"

#include <doctest.h>

#include <cmath>

using namespace agentrouter;

TEST_CASE("normalize_answer applies the four rules") {
  CHECK(eval::normalize_answer("The Devil's Hairpin") == "devils hairpin");
  CHECK(eval::normalize_answer("yes") == "yes");
  CHECK(eval::normalize_answer("  A  an the  ") == "");
  CHECK(eval::normalize_answer("iPhone apps!") == "iphone apps");
  CHECK(eval::normalize_answer("Gay   Lawrence") == "gay lawrence");
}

TEST_CASE("normalize_answer is idempotent") {
  for (const char* s : {"The Devil's Hairpin", "a 1942 film", "  spaced   out  ", "", "X-ray!"}) {
    std::string once = eval::normalize_answer(s);
    CHECK(eval::normalize_answer(once) == once);
  }
}

TEST_CASE("exact match folds case, punctuation, and articles") {
  CHECK(eval::exact_match("Gay Lawrence", {"gay lawrence"}) == 1);
  CHECK(eval::exact_match("the falcon", {"falcon"}) == 1);
  CHECK(eval::exact_match("falcon takes over", {"falcon"}) == 0);
  CHECK(eval::exact_match("1941", {"1941."}) == 1);
  CHECK(eval::exact_match("wrong", {"right", "also right"}) == 0);
}

TEST_CASE("token F1 over bags of tokens, max over golds") {
  CHECK(eval::token_f1("paris", {"paris"}) == doctest::Approx(1.0));
  CHECK(eval::token_f1("falcon takes over", {"falcon"}) == doctest::Approx(0.5));
  CHECK(eval::token_f1("", {"x"}) == doctest::Approx(0.0));
  CHECK(eval::token_f1("x", {"the"}) == doctest::Approx(0.0));  // gold normalizes empty
  CHECK(eval::token_f1("the", {"a"}) == doctest::Approx(1.0));  // both empty
  CHECK(eval::token_f1("new york city", {"york new city"}) == doctest::Approx(1.0));
  CHECK(eval::token_f1("x b b", {"b"}) == doctest::Approx(0.5));
  CHECK(eval::token_f1("george sanders", {"george"}) == doctest::Approx(2.0 / 3.0));
  CHECK(eval::token_f1("bad", {"good answer", "bad"}) == doctest::Approx(1.0));
}

TEST_CASE("EM implies full F1 and metric bounds hold") {
  const std::vector<std::pair<std::string, std::vector<std::string>>> cases = {
      {"alpha", {"alpha"}},       {"beta gamma", {"beta"}},  {"", {"gold"}},
      {"the gold", {"gold"}},     {"unrelated", {"thing"}},  {"a b c", {"c b a"}},
  };
  for (const auto& [pred, golds] : cases) {
    int em = eval::exact_match(pred, golds);
    double f1 = eval::token_f1(pred, golds);
    CHECK((em == 0 || em == 1));
    CHECK(f1 >= 0.0);
    CHECK(f1 <= 1.0);
    if (em == 1) CHECK(f1 == doctest::Approx(1.0));
  }
}

TEST_CASE("evaluate_method aggregates mean and population std across seeds") {
  std::vector<std::vector<std::string>> golds_one{{"a"}, {"b"}};
  std::vector<std::vector<std::string>> one_seed{{"a", "b"}};
  auto row = eval::evaluate_method("m", "d", one_seed, golds_one);
  CHECK(row.f1_mean == doctest::Approx(100.0));
  CHECK(row.f1_std == doctest::Approx(0.0));
  CHECK(row.em_mean == doctest::Approx(100.0));
  CHECK(row.seed_count == 1);

  // three seeds with per-seed means 70, 71, 72
  CHECK(eval::mean({70.0, 71.0, 72.0}) == doctest::Approx(71.0));
  CHECK(eval::population_std({70.0, 71.0, 72.0}) == doctest::Approx(std::sqrt(2.0 / 3.0)));

  CHECK_THROWS_AS(eval::evaluate_method("m", "d", {{"a"}}, golds_one), DataError);
  CHECK_THROWS_AS(eval::evaluate_method("m", "d", {}, golds_one), DataError);
}

namespace {

eval::BaselineInputs one_agent_pool() {
  eval::BaselineInputs in;
  in.dataset = "toy";
  in.agent_ids = {"BACKBONE::solo::AGENT::raw"};
  in.backbones = {"solo"};
  in.designs = {"raw"};
  in.train_answers = {{"gold"}, {"off"}};
  in.train_golds = {{"gold"}, {"gold"}};
  in.test_answers = {{"gold"}, {"gold"}};
  in.test_golds = {{"gold"}, {"gold"}};
  return in;
}

}  // namespace

TEST_CASE("degenerate single-agent pool makes all baselines coincide") {
  auto report = eval::baselines(one_agent_pool());
  REQUIRE(report.rows.size() == 5);
  for (const auto& row : report.rows) {
    CHECK(row.f1_mean == doctest::Approx(100.0));
    CHECK(row.em_mean == doctest::Approx(100.0));
  }
  CHECK(report.rows[0].method == "average");
  CHECK(report.rows[1].method == "majority_vote");
  CHECK(report.rows[2].method == "best_llm");
  CHECK(report.rows[3].method == "best_agent");
  CHECK(report.rows[4].method == "oracle");
}

TEST_CASE("oracle dominates every other baseline row") {
  eval::BaselineInputs in;
  in.dataset = "toy";
  in.agent_ids = {"BACKBONE::a::AGENT::cot", "BACKBONE::a::AGENT::raw",
                  "BACKBONE::b::AGENT::raw"};
  in.backbones = {"a", "a", "b"};
  in.designs = {"cot", "raw", "raw"};
  in.train_answers = {{"gold", "off", "gold"}, {"off", "gold", "off"}};
  in.train_golds = {{"gold"}, {"gold"}};
  in.test_answers = {{"gold", "off", "off"}, {"off", "off", "gold"}, {"off", "gold", "off"}};
  in.test_golds = {{"gold"}, {"gold"}, {"gold"}};
  auto report = eval::baselines(in);
  double oracle_f1 = 0.0;
  for (const auto& row : report.rows) {
    if (row.method == "oracle") oracle_f1 = row.f1_mean;
  }
  CHECK(oracle_f1 == doctest::Approx(100.0));
  for (const auto& row : report.rows) {
    CHECK(row.f1_mean <= oracle_f1 + 1e-12);
    CHECK(row.em_mean <= oracle_f1 + 1e-12);
  }
}

TEST_CASE("transfer drop formula and identity") {
  CHECK(eval::drop_percent(70.0, 70.43) == doctest::Approx(-0.6142857142857143));
  CHECK(std::round(eval::drop_percent(70.0, 70.43) * 100.0) / 100.0 == doctest::Approx(-0.61));
  CHECK(eval::drop_percent(50.0, 40.0) == doctest::Approx(20.0));
  CHECK(eval::drop_percent(50.0, 40.0, eval::DropMode::Absolute) == doctest::Approx(10.0));
  CHECK(eval::drop_percent(0.0, 10.0) == doctest::Approx(0.0));

  std::vector<int> ks = {3, 24};
  std::vector<std::pair<double, double>> same = {{61.2, 61.2}, {58.0, 58.0}};
  auto table = eval::transfer_report("src", "src", ks, same, same);
  for (const auto& cell : table.cells) {
    CHECK(cell.f1_drop == doctest::Approx(0.0));
    CHECK(cell.em_drop == doctest::Approx(0.0));
  }
  CHECK_THROWS_AS(eval::transfer_report("a", "b", ks, {{1, 1}}, same), DataError);
}
