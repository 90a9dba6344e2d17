#include "agentrouter/dataio.hpp"

#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>

using namespace agentrouter;

namespace {

std::filesystem::path temp_file(const std::string& name, const std::string& content) {
  auto dir = std::filesystem::temp_directory_path() / "agentrouter-dataio-tests";
  std::filesystem::create_directories(dir);
  auto path = dir / name;
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << content;
  return path;
}

std::vector<dataio::DatasetRecord> synth_records(int n, const std::string& prefix) {
  std::vector<dataio::DatasetRecord> records;
  for (int i = 0; i < n; ++i) {
    dataio::DatasetRecord rec;
    rec.id = prefix + "-" + std::to_string(i);
    rec.question = "Who holds item " + std::to_string(i) + "?";
    rec.context = "Holder Alpha keeps item " + std::to_string(i) + ".";
    rec.gold_answers = {"Holder Alpha"};
    rec.source_dataset = prefix;
    records.push_back(std::move(rec));
  }
  return records;
}

}  // namespace

TEST_CASE("default agent pool: 24 profiles in canonical order") {
  auto pool = dataio::default_agent_pool();
  REQUIRE(pool.size() == 24);
  for (size_t i = 1; i < pool.size(); ++i) {
    CHECK(pool[i - 1].agent_id < pool[i].agent_id);
  }
  CHECK(pool.front().agent_id == "BACKBONE::gpt_oss_20b::AGENT::cot");
  for (const auto& p : pool) {
    CHECK(p.agent_id == dataio::make_agent_id(p.backbone, p.design));
    CHECK(!p.description_text.empty());
  }
}

TEST_CASE("load_dataset keeps file order and synthesizes ids") {
  auto path = temp_file("ok.jsonl",
                        R"({"question":"Q0?","context":"C0.","answers":["a0"]})"
                        "\n"
                        R"({"question":"Q1?","context":"C1.","answers":["a1","alias"]})"
                        "\n"
                        R"({"question":"Q2?","context":"C2.","answers":["a2"],"type":"person"})"
                        "\n");
  auto records = dataio::load_dataset(path, "demo");
  REQUIRE(records.size() == 3);
  CHECK(records[0].id == "demo-0");
  CHECK(records[1].id == "demo-1");
  CHECK(records[1].gold_answers.size() == 2);
  CHECK(records[2].question_type.has_value());
  CHECK(*records[2].question_type == "person");
  CHECK(!records[0].question_type.has_value());
}

TEST_CASE("load_dataset reports the offending line") {
  auto path = temp_file("bad.jsonl",
                        R"({"question":"Q0?","context":"C0.","answers":["a0"]})"
                        "\n"
                        R"({"question":"Q1?","context":"C1."})"
                        "\n");
  CHECK_THROWS_WITH_AS(dataio::load_dataset(path, "demo"),
                       doctest::Contains("line 2: missing gold answers"), DataError);

  auto empty_answers = temp_file("bad2.jsonl",
                                 R"({"question":"Q?","context":"C.","answers":[]})"
                                 "\n");
  CHECK_THROWS_AS(dataio::load_dataset(empty_answers, "demo"), DataError);

  auto garbage = temp_file("bad3.jsonl", "not json\n");
  CHECK_THROWS_WITH_AS(dataio::load_dataset(garbage, "demo"), doctest::Contains("line 1"),
                       DataError);

  // wrong field types also report the line
  auto numeric_id = temp_file("bad4.jsonl",
                              R"({"question":"Q?","context":"C.","answers":["a"],"id":7})"
                              "\n");
  CHECK_THROWS_WITH_AS(dataio::load_dataset(numeric_id, "demo"), doctest::Contains("line 1"),
                       DataError);
}

TEST_CASE("make_splits slices by index without shuffling") {
  auto train_records = synth_records(600, "train");
  auto val_records = synth_records(200, "val");
  auto splits = dataio::make_splits(train_records, val_records);
  REQUIRE(splits.train.size() == 500);
  CHECK(splits.train.front().id == "train-0");
  REQUIRE(splits.val.size() == 100);
  CHECK(splits.val.front().id == "val-0");
  CHECK(splits.val.back().id == "val-99");
  REQUIRE(splits.test.size() == 100);
  CHECK(splits.test.front().id == "val-100");
  CHECK(splits.test.back().id == "val-199");
}

TEST_CASE("make_splits reports the available count when short") {
  auto train_records = synth_records(600, "train");
  auto short_val = synth_records(150, "val");
  CHECK_THROWS_WITH_AS(dataio::make_splits(train_records, short_val),
                       doctest::Contains("test range needs 200, have 150"), DataError);
}

TEST_CASE("splits are deterministic across loads") {
  std::string content;
  for (int i = 0; i < 210; ++i) {
    content += R"({"question":"Q)" + std::to_string(i) + R"(?","context":"C.","answers":["a"]})" +
               "\n";
  }
  auto path = temp_file("det.jsonl", content);
  auto first = dataio::load_dataset(path, "demo");
  auto second = dataio::load_dataset(path, "demo");
  dataio::SplitSpec spec;
  spec.train_range = {0, 210};
  auto s1 = dataio::make_splits(first, first, spec);
  auto s2 = dataio::make_splits(second, second, spec);
  REQUIRE(s1.test.size() == s2.test.size());
  for (size_t i = 0; i < s1.test.size(); ++i) {
    CHECK(s1.test[i].id == s2.test[i].id);
  }
}

namespace {

std::string cache_line(const std::string& record, const std::string& agent,
                       const std::string& answer) {
  return R"({"record_id":")" + record + R"(","agent_id":")" + agent + R"(","answer":")" + answer +
         R"("})";
}

}  // namespace

TEST_CASE("load_agent_cache sizes, duplicates, unknown agents") {
  auto pool = dataio::default_agent_pool();
  std::string content;
  for (const auto& rec : {"r0", "r1"}) {
    for (const auto& p : pool) content += cache_line(rec, p.agent_id, "ans") + "\n";
  }
  auto path = temp_file("cache.jsonl", content);
  auto cache = dataio::load_agent_cache(path, &pool);
  CHECK(cache.entries.size() == 48);
  CHECK(cache.duplicate_count == 0);
  CHECK(cache.warnings.empty());

  // duplicate key: last line wins, counted once
  std::string dup = cache_line("r0", pool[0].agent_id, "first") + "\n" +
                    cache_line("r0", pool[1].agent_id, "other") + "\n" +
                    cache_line("r0", pool[0].agent_id, "second") + "\n";
  auto dup_cache = dataio::load_agent_cache(temp_file("dup.jsonl", dup), &pool);
  CHECK(dup_cache.duplicate_count == 1);
  CHECK(dup_cache.find("r0", pool[0].agent_id)->answer == "second");

  // unknown agent kept but flagged
  std::string unknown = cache_line("r0", "BACKBONE::ghost::AGENT::raw", "x") + "\n";
  auto unknown_cache = dataio::load_agent_cache(temp_file("unknown.jsonl", unknown), &pool);
  CHECK(unknown_cache.entries.size() == 1);
  REQUIRE(unknown_cache.warnings.size() == 1);
  CHECK(unknown_cache.warnings[0].find("unknown agent") != std::string::npos);

  // out-of-range f1 rejected
  auto bad_f1 = temp_file("badf1.jsonl",
                          R"({"record_id":"r","agent_id":"a","answer":"x","f1":1.5})"
                          "\n");
  CHECK_THROWS_AS(dataio::load_agent_cache(bad_f1, &pool), DataError);
}

TEST_CASE("join_for_training aligns answers to the canonical order") {
  auto pool = dataio::default_agent_pool();
  auto records = synth_records(3, "rec");
  std::string content;
  for (const auto& p : pool) content += cache_line("rec-0", p.agent_id, "full") + "\n";
  for (size_t a = 1; a < pool.size(); ++a) {
    content += cache_line("rec-1", pool[a].agent_id, "partial") + "\n";
  }
  // rec-2 has no answers at all
  auto cache = dataio::load_agent_cache(temp_file("join.jsonl", content), &pool);
  auto result = dataio::join_for_training(records, cache, pool);

  REQUIRE(result.joined.size() == 2);
  CHECK(result.excluded_record_ids == std::vector<std::string>{"rec-2"});
  CHECK(result.joined[0].answers.size() == 24);
  CHECK(std::count(result.joined[0].missing.begin(), result.joined[0].missing.end(), true) == 0);
  CHECK(std::count(result.joined[1].missing.begin(), result.joined[1].missing.end(), true) == 1);
  CHECK(result.joined[1].missing[0]);
  CHECK(result.joined[1].answers[0].empty());
  // length invariant: joined + excluded == input records
  CHECK(result.joined.size() + result.excluded_record_ids.size() == records.size());
}

TEST_CASE("profiles round-trip through the JSONL loader") {
  std::string content =
      R"({"backbone":"toy_model","design":"cot","description":"steps"})"
      "\n"
      R"({"backbone":"toy_model","design":"raw"})"
      "\n";
  auto profiles = dataio::load_agent_profiles(temp_file("profiles.jsonl", content));
  REQUIRE(profiles.size() == 2);
  CHECK(profiles[0].agent_id == "BACKBONE::toy_model::AGENT::cot");
  CHECK(profiles[0].description_text == "steps");
  CHECK(profiles[1].design == AgentDesign::Raw);

  std::string dup =
      R"({"backbone":"toy_model","design":"cot"})"
      "\n"
      R"({"backbone":"toy_model","design":"cot"})"
      "\n";
  CHECK_THROWS_WITH_AS(dataio::load_agent_profiles(temp_file("dup_profiles.jsonl", dup)),
                       doctest::Contains("duplicate agent_id"), DataError);
}
