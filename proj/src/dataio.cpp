#include "agentrouter/dataio.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <fstream>
#include <set>

namespace agentrouter::dataio {

using nlohmann::json;

namespace {

json parse_line(const std::filesystem::path& path, int lineno, const std::string& line) {
  json j = json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    throw DataError(path.filename().string() + ": line " + std::to_string(lineno) +
                    ": malformed JSON object");
  }
  return j;
}

// Re-labels nlohmann type errors (e.g. a numeric "id") with the line number.
template <class Fn>
void with_line_context(const std::filesystem::path& path, int lineno, Fn&& fn) {
  try {
    fn();
  } catch (const json::exception& e) {
    throw DataError(path.filename().string() + ": line " + std::to_string(lineno) + ": " +
                    e.what());
  }
}

std::string design_description(AgentDesign design) {
  switch (design) {
    case AgentDesign::Raw:
      return "Directly answers the question from the context in a single pass.";
    case AgentDesign::Cot:
      return "Thinks step-by-step, writing intermediate reasoning before the final answer.";
    case AgentDesign::Sc:
      return "Samples several independent reasoning chains and keeps the most consistent answer.";
    case AgentDesign::ReactReflect:
      return "Drafts an answer, then a reviewer critiques it and requests revisions until final.";
    case AgentDesign::Mad:
      return "Two debaters argue for candidate answers and a judge settles the final answer.";
    case AgentDesign::Summary:
      return "Independent solvers propose answers that a summarizer fuses into one final answer.";
  }
  return {};
}

}  // namespace

std::string make_agent_id(const std::string& backbone, AgentDesign design) {
  return "BACKBONE::" + backbone + "::AGENT::" + std::string(design_name(design));
}

std::vector<AgentProfile> default_agent_pool() {
  static const char* kBackbones[] = {"gpt_oss_20b", "llama3_8b", "mixtral_8x7b",
                                     "qwen2p5_7b_turbo"};
  std::vector<AgentProfile> pool;
  for (const char* backbone : kBackbones) {
    for (int d = 0; d < kAgentDesignCount; ++d) {
      auto design = static_cast<AgentDesign>(d);
      AgentProfile p;
      p.agent_id = make_agent_id(backbone, design);
      p.backbone = backbone;
      p.design = design;
      p.description_text = design_description(design) + " Backbone: " + backbone + ".";
      pool.push_back(std::move(p));
    }
  }
  sort_canonical(pool);
  return pool;
}

void sort_canonical(std::vector<AgentProfile>& profiles) {
  std::sort(profiles.begin(), profiles.end(),
            [](const AgentProfile& a, const AgentProfile& b) { return a.agent_id < b.agent_id; });
}

std::vector<AgentProfile> load_agent_profiles(const std::filesystem::path& path) {
  std::vector<AgentProfile> profiles;
  for_each_line(path, [&](int lineno, const std::string& line) {
    json j = parse_line(path, lineno, line);
    AgentProfile p;
    if (!j.contains("backbone") || !j.contains("design")) {
      throw DataError(path.filename().string() + ": line " + std::to_string(lineno) +
                      ": profile needs backbone and design");
    }
    with_line_context(path, lineno, [&] {
      p.backbone = j.at("backbone").get<std::string>();
      p.design = design_from_name(j.at("design").get<std::string>());
      p.agent_id = j.value("agent_id", make_agent_id(p.backbone, p.design));
      p.description_text = j.value("description", design_description(p.design) +
                                                      " Backbone: " + p.backbone + ".");
    });
    profiles.push_back(std::move(p));
  });
  std::set<std::string> ids;
  for (const auto& p : profiles) {
    if (!ids.insert(p.agent_id).second) {
      throw DataError("duplicate agent_id in profiles: " + p.agent_id);
    }
  }
  sort_canonical(profiles);
  return profiles;
}

std::vector<std::string> design_keywords(AgentDesign design) {
  switch (design) {
    case AgentDesign::Raw:
      return {"direct", "single", "answer"};
    case AgentDesign::Cot:
      return {"chain", "thought", "step", "reasoning"};
    case AgentDesign::Sc:
      return {"consistency", "sample", "vote", "reasoning"};
    case AgentDesign::ReactReflect:
      return {"reflect", "revise", "critique", "plan"};
    case AgentDesign::Mad:
      return {"debate", "judge", "claim", "argue"};
    case AgentDesign::Summary:
      return {"summary", "fuse", "signals", "combine"};
  }
  return {};
}

std::vector<DatasetRecord> load_dataset(const std::filesystem::path& path,
                                        const std::string& source_dataset) {
  std::vector<DatasetRecord> records;
  std::set<std::string> seen_ids;
  for_each_line(path, [&](int lineno, const std::string& line) {
    json j = parse_line(path, lineno, line);
    DatasetRecord rec;
    rec.source_dataset = source_dataset;
    if (!j.contains("question") || !j.at("question").is_string()) {
      throw DataError(path.filename().string() + ": line " + std::to_string(lineno) +
                      ": missing question");
    }
    rec.question = j.at("question").get<std::string>();
    if (!j.contains("context") || !j.at("context").is_string()) {
      throw DataError(path.filename().string() + ": line " + std::to_string(lineno) +
                      ": missing context");
    }
    rec.context = j.at("context").get<std::string>();
    if (!j.contains("answers") || !j.at("answers").is_array() || j.at("answers").empty()) {
      throw DataError(path.filename().string() + ": line " + std::to_string(lineno) +
                      ": missing gold answers");
    }
    with_line_context(path, lineno, [&] {
      for (const auto& a : j.at("answers")) rec.gold_answers.push_back(a.get<std::string>());
      rec.id = j.value("id", source_dataset + "-" + std::to_string(lineno - 1));
      if (j.contains("type") && j.at("type").is_string()) {
        rec.question_type = j.at("type").get<std::string>();
      }
    });
    if (rec.question.empty() || rec.context.empty()) {
      throw DataError(path.filename().string() + ": line " + std::to_string(lineno) +
                      ": question and context must be non-empty");
    }
    if (j.contains("entities") || j.contains("triples")) {
      json extra;
      if (j.contains("entities")) extra["entities"] = j.at("entities");
      if (j.contains("triples")) extra["triples"] = j.at("triples");
      rec.extra_json = extra.dump();
    }
    if (!seen_ids.insert(rec.id).second) {
      throw DataError(path.filename().string() + ": line " + std::to_string(lineno) +
                      ": duplicate record id " + rec.id);
    }
    records.push_back(std::move(rec));
  });
  return records;
}

namespace {

std::vector<DatasetRecord> slice(const std::vector<DatasetRecord>& records,
                                 const IndexInterval& range, const std::string& name) {
  if (static_cast<int>(records.size()) < range.end) {
    throw DataError(name + " range needs " + std::to_string(range.end) + ", have " +
                    std::to_string(records.size()));
  }
  return {records.begin() + range.begin, records.begin() + range.end};
}

}  // namespace

Splits make_splits(const std::vector<DatasetRecord>& train_file_records,
                   const std::vector<DatasetRecord>& val_file_records, const SplitSpec& spec) {
  Splits splits;
  splits.train = slice(train_file_records, spec.train_range, "train");
  splits.val = slice(val_file_records, spec.val_range, "val");
  splits.test = slice(val_file_records, spec.test_range, "test");
  return splits;
}

AgentCache load_agent_cache(const std::filesystem::path& path,
                            const std::vector<AgentProfile>* profiles) {
  AgentCache cache;
  std::set<std::string> known;
  if (profiles != nullptr) {
    for (const auto& p : *profiles) known.insert(p.agent_id);
  }
  for_each_line(path, [&](int lineno, const std::string& line) {
    json j = parse_line(path, lineno, line);
    AgentAnswerRecord row;
    if (!j.contains("record_id") || !j.contains("agent_id") || !j.contains("answer")) {
      throw DataError(path.filename().string() + ": line " + std::to_string(lineno) +
                      ": cache row needs record_id, agent_id, answer");
    }
    with_line_context(path, lineno, [&] {
      row.record_id = j.at("record_id").get<std::string>();
      row.agent_id = j.at("agent_id").get<std::string>();
      row.answer = j.at("answer").get<std::string>();
      if (j.contains("raw_output") && j.at("raw_output").is_string()) {
        row.raw_output = j.at("raw_output").get<std::string>();
      }
    });
    if (j.contains("f1") && j.at("f1").is_number()) {
      double f1 = j.at("f1").get<double>();
      if (f1 < 0.0 || f1 > 1.0) {
        throw DataError(path.filename().string() + ": line " + std::to_string(lineno) +
                        ": f1 outside [0,1]");
      }
      row.f1 = f1;
    }
    if (profiles != nullptr && known.count(row.agent_id) == 0) {
      cache.warnings.push_back("line " + std::to_string(lineno) + ": unknown agent " +
                               row.agent_id);
    }
    std::string key = AgentCache::key(row.record_id, row.agent_id);
    auto [it, inserted] = cache.entries.insert_or_assign(key, std::move(row));
    if (!inserted) {
      ++cache.duplicate_count;
      cache.warnings.push_back("line " + std::to_string(lineno) + ": duplicate entry for (" +
                               it->second.record_id + ", " + it->second.agent_id +
                               "), last line wins");
    }
  });
  return cache;
}

void append_cache_rows(const std::filesystem::path& path,
                       const std::vector<AgentAnswerRecord>& rows) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::app | std::ios::binary);
  if (!out) throw DataError("cannot open cache for append: " + path.string());
  for (const auto& row : rows) {
    json j;
    j["record_id"] = row.record_id;
    j["agent_id"] = row.agent_id;
    j["answer"] = row.answer;
    if (row.raw_output) j["raw_output"] = *row.raw_output;
    if (row.f1) j["f1"] = *row.f1;
    out << j.dump() << '\n';
  }
}

JoinResult join_for_training(const std::vector<DatasetRecord>& records, const AgentCache& cache,
                             const std::vector<AgentProfile>& profiles) {
  JoinResult result;
  for (const auto& rec : records) {
    JoinedRecord joined;
    joined.record = &rec;
    joined.answers.resize(profiles.size());
    joined.missing.resize(profiles.size(), false);
    joined.cached_f1.resize(profiles.size());
    int present = 0;
    for (size_t a = 0; a < profiles.size(); ++a) {
      const AgentAnswerRecord* row = cache.find(rec.id, profiles[a].agent_id);
      if (row == nullptr) {
        joined.missing[a] = true;
        result.warnings.push_back("record " + rec.id + ": missing answer for " +
                                  profiles[a].agent_id);
      } else {
        joined.answers[a] = row->answer;
        joined.cached_f1[a] = row->f1;
        ++present;
      }
    }
    if (present == 0) {
      result.excluded_record_ids.push_back(rec.id);
      continue;
    }
    result.joined.push_back(std::move(joined));
  }
  return result;
}

}  // namespace agentrouter::dataio
