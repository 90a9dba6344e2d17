#pragma once

#include "agentrouter/common.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace agentrouter::dataio {

struct DatasetRecord {
  std::string id;
  std::string question;
  std::string context;
  std::vector<std::string> gold_answers;
  std::optional<std::string> question_type;
  std::string source_dataset;
  // Optional pre-extracted inputs carried through from the JSONL record;
  // when present the extraction stage is bypassed.
  std::string extra_json;
};

struct AgentProfile {
  std::string agent_id;  // BACKBONE::<name>::AGENT::<design>
  std::string backbone;
  AgentDesign design = AgentDesign::Raw;
  std::string description_text;
};

struct AgentAnswerRecord {
  std::string record_id;
  std::string agent_id;
  std::string answer;
  std::optional<std::string> raw_output;
  std::optional<double> f1;
};

struct IndexInterval {
  int begin = 0;
  int end = 0;  // exclusive
  int size() const { return end - begin; }
};

struct SplitSpec {
  IndexInterval train_range{0, 500};
  IndexInterval val_range{0, 100};
  IndexInterval test_range{100, 200};
};

std::string make_agent_id(const std::string& backbone, AgentDesign design);

/// The default pool: 4 backbones x 6 designs = 24 profiles, with short
/// strategy descriptions used for the agent-node embeddings.
std::vector<AgentProfile> default_agent_pool();

/// Loads profiles from JSONL {agent_id?, backbone, design, description?} and
/// returns them in canonical (lexicographic agent_id) order.
std::vector<AgentProfile> load_agent_profiles(const std::filesystem::path& path);

/// Sorts profiles into the canonical order shared by every per-agent vector.
void sort_canonical(std::vector<AgentProfile>& profiles);

/// Keyword tokens per design, used by the lexical agent-entity fallback.
std::vector<std::string> design_keywords(AgentDesign design);

std::vector<DatasetRecord> load_dataset(const std::filesystem::path& path,
                                        const std::string& source_dataset);

struct Splits {
  std::vector<DatasetRecord> train;
  std::vector<DatasetRecord> val;
  std::vector<DatasetRecord> test;
};

Splits make_splits(const std::vector<DatasetRecord>& train_file_records,
                   const std::vector<DatasetRecord>& val_file_records,
                   const SplitSpec& spec = {});

struct AgentCache {
  // key: record_id + '\x1f' + agent_id
  std::map<std::string, AgentAnswerRecord> entries;
  int duplicate_count = 0;
  std::vector<std::string> warnings;

  static std::string key(const std::string& record_id, const std::string& agent_id) {
    return record_id + '\x1f' + agent_id;
  }
  const AgentAnswerRecord* find(const std::string& record_id, const std::string& agent_id) const {
    auto it = entries.find(key(record_id, agent_id));
    return it == entries.end() ? nullptr : &it->second;
  }
};

AgentCache load_agent_cache(const std::filesystem::path& path,
                            const std::vector<AgentProfile>* profiles = nullptr);

void append_cache_rows(const std::filesystem::path& path,
                       const std::vector<AgentAnswerRecord>& rows);

struct JoinedRecord {
  const DatasetRecord* record = nullptr;
  std::vector<std::string> answers;        // aligned to canonical agent order
  std::vector<bool> missing;               // true where the cache had no row
  std::vector<std::optional<double>> cached_f1;
};

struct JoinResult {
  std::vector<JoinedRecord> joined;
  std::vector<std::string> excluded_record_ids;  // records with zero cached answers
  std::vector<std::string> warnings;
};

JoinResult join_for_training(const std::vector<DatasetRecord>& records,
                             const AgentCache& cache,
                             const std::vector<AgentProfile>& profiles);

}  // namespace agentrouter::dataio
