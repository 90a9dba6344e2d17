#include "agentrouter/cli.hpp"

#include "agentrouter/agents.hpp"
#include "agentrouter/dataio.hpp"
#include "agentrouter/embed.hpp"
#include "agentrouter/eval.hpp"
#include "agentrouter/extract.hpp"
#include "agentrouter/graph.hpp"
#include "agentrouter/route.hpp"
#include "agentrouter/train.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <memory>
#include <set>
#include <sstream>

namespace agentrouter::cli {

using nlohmann::json;

namespace {

// ---- value parsing ----

int parse_int(const std::string& v) {
  try {
    size_t used = 0;
    int out = std::stoi(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw UsageError("expected an integer, got '" + v + "'");
  }
}

std::uint64_t parse_u64(const std::string& v) {
  try {
    size_t used = 0;
    auto out = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw UsageError("expected a non-negative integer, got '" + v + "'");
  }
}

double parse_double(const std::string& v) {
  try {
    size_t used = 0;
    double out = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw UsageError("expected a number, got '" + v + "'");
  }
}

bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw UsageError("expected true/false, got '" + v + "'");
}

std::vector<int> parse_int_list(const std::string& v) {
  std::vector<int> out;
  for (const auto& part : split(v, ',')) {
    std::string t = trim(part);
    if (!t.empty()) out.push_back(parse_int(t));
  }
  if (out.empty()) throw UsageError("expected a comma-separated integer list, got '" + v + "'");
  return out;
}

std::vector<std::uint64_t> parse_u64_list(const std::string& v) {
  std::vector<std::uint64_t> out;
  for (const auto& part : split(v, ',')) {
    std::string t = trim(part);
    if (!t.empty()) out.push_back(parse_u64(t));
  }
  if (out.empty()) throw UsageError("expected a comma-separated list, got '" + v + "'");
  return out;
}

template <class T>
std::string join_list(const std::vector<T>& xs) {
  std::string out;
  for (const auto& x : xs) {
    if (!out.empty()) out += ',';
    out += std::to_string(x);
  }
  return out;
}

std::string format_double(double v) {
  std::ostringstream ss;
  ss << std::setprecision(17) << v;
  return ss.str();
}

// ---- config key table ----

struct KeyHandler {
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

const std::map<std::string, KeyHandler>& key_table() {
  static const std::map<std::string, KeyHandler> kTable = [] {
    std::map<std::string, KeyHandler> t;
    auto str = [&](const std::string& key, std::string RunConfig::* field) {
      t[key] = {[field](RunConfig& c, const std::string& v) { c.*field = v; },
                [field](const RunConfig& c) { return c.*field; }};
    };
    auto num_i = [&](const std::string& key, int RunConfig::* field) {
      t[key] = {[field](RunConfig& c, const std::string& v) { c.*field = parse_int(v); },
                [field](const RunConfig& c) { return std::to_string(c.*field); }};
    };
    auto num_d = [&](const std::string& key, double RunConfig::* field) {
      t[key] = {[field](RunConfig& c, const std::string& v) { c.*field = parse_double(v); },
                [field](const RunConfig& c) { return format_double(c.*field); }};
    };

    str("dataset_name", &RunConfig::dataset_name);
    str("train_file", &RunConfig::train_file);
    str("val_file", &RunConfig::val_file);
    str("cache_file", &RunConfig::cache_file);
    str("graphs_dir", &RunConfig::graphs_dir);
    str("profiles_file", &RunConfig::profiles_file);
    str("embeddings_file", &RunConfig::embeddings_file);
    str("agent_entity_map_file", &RunConfig::agent_entity_map_file);
    str("checkpoint_dir", &RunConfig::checkpoint_dir);
    num_i("train_count", &RunConfig::train_count);
    num_i("val_count", &RunConfig::val_count);
    num_i("test_begin", &RunConfig::test_begin);
    num_i("test_end", &RunConfig::test_end);
    num_i("d_text", &RunConfig::d_text);
    t["embed_seed"] = {[](RunConfig& c, const std::string& v) { c.embed_seed = parse_u64(v); },
                       [](const RunConfig& c) { return std::to_string(c.embed_seed); }};
    num_d("lr", &RunConfig::lr);
    num_d("weight_decay", &RunConfig::weight_decay);
    num_d("clip_norm", &RunConfig::clip_norm);
    num_d("tau", &RunConfig::tau);
    num_d("eps", &RunConfig::eps);
    num_i("epochs", &RunConfig::epochs);
    num_i("hidden", &RunConfig::hidden);
    num_i("layers", &RunConfig::layers);
    t["seeds"] = {[](RunConfig& c, const std::string& v) { c.seeds = parse_u64_list(v); },
                  [](const RunConfig& c) { return join_list(c.seeds); }};
    num_i("k", &RunConfig::k);
    t["k_list"] = {[](RunConfig& c, const std::string& v) { c.k_list = parse_int_list(v); },
                   [](const RunConfig& c) { return join_list(c.k_list); }};
    t["trust_cache_f1"] = {
        [](RunConfig& c, const std::string& v) { c.trust_cache_f1 = parse_bool(v); },
        [](const RunConfig& c) { return c.trust_cache_f1 ? "true" : "false"; }};
    t["drop_mode"] = {[](RunConfig& c, const std::string& v) {
                        if (v != "relative" && v != "absolute") {
                          throw UsageError("drop_mode must be relative or absolute");
                        }
                        c.drop_mode = v;
                      },
                      [](const RunConfig& c) { return c.drop_mode; }};
    str("backend_endpoint", &RunConfig::backend_endpoint);
    str("backend_model_map", &RunConfig::backend_model_map);
    str("backend_api_key_env", &RunConfig::backend_api_key_env);
    num_d("backend_temperature", &RunConfig::backend_temperature);
    num_i("backend_max_tokens", &RunConfig::backend_max_tokens);
    num_i("backend_retry_max", &RunConfig::backend_retry_max);
    num_i("backend_backoff_ms", &RunConfig::backend_backoff_ms);
    num_i("backend_timeout_s", &RunConfig::backend_timeout_s);
    num_i("concurrency", &RunConfig::concurrency);
    str("transcripts_dir", &RunConfig::transcripts_dir);
    num_i("judge_cutoff", &RunConfig::judge_cutoff);
    num_i("sc_samples", &RunConfig::sc_samples);
    num_i("reflect_max_revisions", &RunConfig::reflect_max_revisions);
    return t;
  }();
  return kTable;
}

}  // namespace

RunConfig RunConfig::load(const std::filesystem::path& path) {
  RunConfig config;
  for_each_line(path, [&](int lineno, const std::string& line) {
    std::string trimmed = trim(line);
    if (trimmed.empty() || trimmed[0] == '#') return;
    size_t pos = trimmed.find('=');
    if (pos == std::string::npos) {
      throw UsageError(path.filename().string() + ":" + std::to_string(lineno) +
                       ": expected key = value");
    }
    try {
      config.set(trim(trimmed.substr(0, pos)), trim(trimmed.substr(pos + 1)));
    } catch (const UsageError& e) {
      throw UsageError(path.filename().string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  });
  return config;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  auto it = key_table().find(key);
  if (it == key_table().end()) throw UsageError("unknown config key: " + key);
  it->second.set(*this, value);
}

std::string RunConfig::echo() const {
  std::string out;
  for (const auto& [key, handler] : key_table()) {
    out += key + " = " + handler.get(*this) + "\n";
  }
  return out;
}

std::filesystem::path resolve_out_dir(const std::optional<std::string>& out_flag,
                                      const std::string& command) {
  if (out_flag) return *out_flag;
  std::time_t now = std::time(nullptr);
  std::tm tm_buf{};
  localtime_r(&now, &tm_buf);
  std::ostringstream name;
  name << "runs/" << command << "-" << std::put_time(&tm_buf, "%Y%m%d-%H%M%S");
  return name.str();
}

namespace {

void write_echo(const RunConfig& config, const std::filesystem::path& out_dir) {
  write_text_file(out_dir / "config.echo", config.echo());
}

// ---- shared pipeline ----

std::vector<dataio::AgentProfile> load_profiles(const RunConfig& config) {
  if (!config.profiles_file.empty()) return dataio::load_agent_profiles(config.profiles_file);
  return dataio::default_agent_pool();
}

dataio::SplitSpec split_spec(const RunConfig& config) {
  dataio::SplitSpec spec;
  spec.train_range = {0, config.train_count};
  spec.val_range = {0, config.val_count};
  spec.test_range = {config.test_begin, config.test_end};
  return spec;
}

struct LoadedData {
  std::vector<dataio::AgentProfile> profiles;
  dataio::Splits splits;
  dataio::AgentCache cache;
};

LoadedData load_data(const RunConfig& config, bool need_cache) {
  if (config.train_file.empty() || config.val_file.empty()) {
    throw UsageError("config needs train_file and val_file");
  }
  LoadedData data;
  data.profiles = load_profiles(config);
  auto train_records = dataio::load_dataset(config.train_file, config.dataset_name);
  auto val_records = dataio::load_dataset(config.val_file, config.dataset_name);
  data.splits = dataio::make_splits(train_records, val_records, split_spec(config));
  if (need_cache) {
    if (config.cache_file.empty()) throw UsageError("config needs cache_file");
    data.cache = dataio::load_agent_cache(config.cache_file, &data.profiles);
  }
  return data;
}

std::vector<std::string> canonical_agent_ids(const std::vector<dataio::AgentProfile>& profiles) {
  std::vector<std::string> ids;
  for (const auto& p : profiles) ids.push_back(p.agent_id);
  return ids;
}

struct Extraction {
  std::vector<extract::EntityMention> mentions;
  std::vector<extract::RelationTriple> triples;
};

Extraction extract_record(const dataio::DatasetRecord& record) {
  Extraction out;
  if (!record.extra_json.empty()) {
    json extra = json::parse(record.extra_json);
    if (extra.contains("entities")) {
      for (const auto& je : extra["entities"]) {
        extract::EntityMention m;
        m.surface = je.at("surface").get<std::string>();
        m.kind = extract::mention_kind_from_name(je.value("kind", "named"));
        for (const auto& span : je.value("spans", json::array())) {
          m.spans.emplace_back(span[0].get<int>(), span[1].get<int>());
        }
        if (m.spans.empty()) m.spans.emplace_back(0, 0);
        m.frequency = static_cast<int>(m.spans.size());
        out.mentions.push_back(std::move(m));
      }
    }
    if (extra.contains("triples")) {
      for (const auto& jt : extra["triples"]) {
        extract::RelationTriple t;
        t.head_surface = jt.at("head").get<std::string>();
        t.relation_label = jt.at("relation").get<std::string>();
        t.tail_surface = jt.at("tail").get<std::string>();
        if (jt.contains("span")) {
          t.provenance_span = {jt["span"][0].get<int>(), jt["span"][1].get<int>()};
        }
        out.triples.push_back(std::move(t));
      }
    }
    return out;
  }
  out.mentions = extract::extract_entities(record.context);
  out.triples = extract::extract_triples(record.context, out.mentions);
  return out;
}

std::set<extract::CueCategory> record_cues(const dataio::DatasetRecord& record) {
  auto cues = extract::question_type_cues(record.question);
  if (record.question_type) {
    auto merged = extract::cues_from_type_string(*record.question_type);
    cues.insert(merged.begin(), merged.end());
  }
  return cues;
}

std::map<std::string, graph::AgentEntityMap> load_agent_entity_maps(
    const std::filesystem::path& path) {
  std::map<std::string, graph::AgentEntityMap> maps;
  for_each_line(path, [&](int lineno, const std::string& line) {
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      throw DataError(path.filename().string() + ": line " + std::to_string(lineno) +
                      ": malformed map row");
    }
    auto& per_agent = maps[j.at("record_id").get<std::string>()];
    auto& set = per_agent[j.at("agent_id").get<std::string>()];
    for (const auto& e : j.at("entities")) set.insert(e.get<std::string>());
  });
  return maps;
}

embed::EmbeddingProvider make_embedder(const RunConfig& config) {
  embed::EmbeddingProvider provider(config.d_text, config.embed_seed);
  if (!config.embeddings_file.empty()) provider.load_imports(config.embeddings_file);
  return provider;
}

graph::KnowledgeGraph load_graph_for(const RunConfig& config,
                                     const dataio::DatasetRecord& record,
                                     const std::vector<dataio::AgentProfile>& profiles) {
  if (config.graphs_dir.empty()) throw UsageError("config needs graphs_dir");
  std::filesystem::path file =
      std::filesystem::path(config.graphs_dir) / (record.id + ".graph.json");
  if (!std::filesystem::exists(file)) {
    throw DataError("missing graph file " + file.string() + " (run build-graphs first)");
  }
  auto g = graph::load_graph(file);
  if (g.agent_order() != canonical_agent_ids(profiles)) {
    throw DataError("agent order in graph " + file.string() +
                    " does not match the profile pool");
  }
  return g;
}

struct ExampleSet {
  std::vector<std::unique_ptr<graph::KnowledgeGraph>> graphs;  // stable addresses
  std::vector<train::TrainExample> examples;
  std::vector<std::string> excluded;
};

ExampleSet make_examples(const RunConfig& config, const std::vector<dataio::DatasetRecord>& records,
                         const dataio::AgentCache& cache,
                         const std::vector<dataio::AgentProfile>& profiles,
                         const embed::EmbeddingProvider& embedder) {
  ExampleSet set;
  auto join = dataio::join_for_training(records, cache, profiles);
  set.excluded = join.excluded_record_ids;
  for (const auto& joined : join.joined) {
    const auto& record = *joined.record;
    auto g = std::make_unique<graph::KnowledgeGraph>(load_graph_for(config, record, profiles));
    std::set<extract::CueCategory> cues;
    for (auto cue : g->nodes[g->query_node()].aux.cues) cues.insert(cue);

    train::TrainExample ex;
    ex.record_id = record.id;
    ex.features = embed::featurize(*g, embedder, cues);
    ex.answers = joined.answers;
    ex.golds = record.gold_answers;
    ex.f1 = Vector::Zero(static_cast<int>(profiles.size()));
    for (size_t a = 0; a < profiles.size(); ++a) {
      if (config.trust_cache_f1 && joined.cached_f1[a].has_value()) {
        ex.f1[static_cast<int>(a)] = *joined.cached_f1[a];
      } else {
        ex.f1[static_cast<int>(a)] = eval::token_f1(joined.answers[a], record.gold_answers);
      }
    }
    ex.graph = g.get();
    set.graphs.push_back(std::move(g));
    set.examples.push_back(std::move(ex));
  }
  return set;
}

gnn::ModelParams load_seed_checkpoint(const std::filesystem::path& dir, std::uint64_t seed,
                                      const std::vector<dataio::AgentProfile>& profiles) {
  std::filesystem::path file = dir / ("seed-" + std::to_string(seed)) / "checkpoint.bin";
  if (!std::filesystem::exists(file)) {
    throw DataError("missing checkpoint " + file.string() + " (run train first)");
  }
  auto params = gnn::load_checkpoint(file);
  if (params.agent_order != canonical_agent_ids(profiles)) {
    throw DataError("agent order in checkpoint " + file.string() +
                    " does not match the cache/profile pool");
  }
  return params;
}

// Mean-over-seeds F1/EM of the routed answers at each requested k. The
// forward pass runs once per (seed, record); only clipping varies with k.
std::map<int, std::pair<double, double>> routed_metrics_by_k(
    const std::vector<train::TrainExample>& examples,
    const std::vector<gnn::ModelParams>& per_seed_params, const std::vector<int>& k_values) {
  std::map<int, std::pair<double, double>> out;  // k -> (f1, em)
  if (examples.empty()) throw DataError("no examples to evaluate");
  std::map<int, std::vector<double>> f1_by_k, em_by_k;  // per-seed means
  for (const auto& params : per_seed_params) {
    std::map<int, std::vector<double>> record_f1, record_em;
    for (const auto& ex : examples) {
      auto trace = gnn::forward(*ex.graph, ex.features, params);
      for (int k : k_values) {
        auto routed = route::fuse_distribution(ex.record_id, trace.probs,
                                               params.agent_order, ex.answers, k);
        record_f1[k].push_back(eval::token_f1(routed.fused_answer, ex.golds));
        record_em[k].push_back(
            static_cast<double>(eval::exact_match(routed.fused_answer, ex.golds)));
      }
    }
    for (int k : k_values) {
      f1_by_k[k].push_back(100.0 * eval::mean(record_f1[k]));
      em_by_k[k].push_back(100.0 * eval::mean(record_em[k]));
    }
  }
  for (int k : k_values) {
    out[k] = {eval::mean(f1_by_k[k]), eval::mean(em_by_k[k])};
  }
  return out;
}

std::string format_row(const eval::MethodRow& row) {
  std::ostringstream ss;
  ss.setf(std::ios::fixed);
  ss << std::left << std::setw(16) << row.method;
  ss << std::right << std::setw(7) << std::setprecision(2) << row.f1_mean << " +/- "
     << std::setw(5) << row.f1_std;
  ss << std::right << std::setw(9) << row.em_mean << " +/- " << std::setw(5) << row.em_std;
  return ss.str();
}

json row_to_json(const eval::MethodRow& row) {
  json j;
  j["method"] = row.method;
  j["dataset"] = row.dataset;
  if (row.k > 0) j["k"] = row.k;
  j["f1_mean"] = row.f1_mean;
  j["f1_std"] = row.f1_std;
  j["em_mean"] = row.em_mean;
  j["em_std"] = row.em_std;
  j["seeds"] = row.seed_count;
  return j;
}

}  // namespace

void cmd_build_graphs(const RunConfig& config, const std::filesystem::path& out_dir) {
  if (config.graphs_dir.empty()) throw UsageError("config needs graphs_dir");
  LoadedData data = load_data(config, false);
  std::map<std::string, graph::AgentEntityMap> maps;
  if (!config.agent_entity_map_file.empty()) {
    maps = load_agent_entity_maps(config.agent_entity_map_file);
  }

  std::vector<const dataio::DatasetRecord*> records;
  std::set<std::string> seen;
  for (const auto* split : {&data.splits.train, &data.splits.val, &data.splits.test}) {
    for (const auto& rec : *split) {
      if (seen.insert(rec.id).second) records.push_back(&rec);
    }
  }

  std::vector<graph::KnowledgeGraph> graphs;
  std::vector<std::string> warnings;
  std::vector<std::string> failures;
  for (const auto* rec : records) {
    try {
      auto extraction = extract_record(*rec);
      graph::AgentEntityMap agent_map;
      if (auto it = maps.find(rec->id); it != maps.end()) agent_map = it->second;
      auto g = graph::build_graph(*rec, extraction.mentions, extraction.triples, data.profiles,
                                  agent_map, record_cues(*rec), &warnings);
      graph::save_graph(g, config.graphs_dir);
      graphs.push_back(std::move(g));
    } catch (const std::exception& e) {
      failures.push_back(rec->id + ": " + e.what());
    }
  }

  if (!graphs.empty()) {
    auto stats = graph::graph_stats(graphs);
    std::string table = graph::format_stats(stats);
    std::cout << table;
    write_text_file(out_dir / "stats.txt", table);
    json j;
    j["graphs"] = stats.graph_count;
    j["avg_query_nodes"] = stats.query_nodes;
    j["avg_agent_nodes"] = stats.agent_nodes;
    j["avg_entity_nodes"] = stats.entity_nodes;
    j["avg_entity_entity_edges"] = stats.entity_entity_edges;
    j["avg_agent_entity_edges"] = stats.agent_entity_edges;
    j["avg_query_entity_edges"] = stats.query_entity_edges;
    write_text_file(out_dir / "stats.json", j.dump(2) + "\n");
  }
  if (!warnings.empty()) {
    std::string text;
    for (const auto& w : warnings) text += w + "\n";
    write_text_file(out_dir / "warnings.txt", text);
  }
  write_echo(config, out_dir);
  if (!failures.empty()) {
    std::string text;
    for (const auto& f : failures) text += f + "\n";
    write_text_file(out_dir / "failures.txt", text);
    throw DataError(std::to_string(failures.size()) + " record(s) failed graph construction; see " +
                    (out_dir / "failures.txt").string());
  }
}

void cmd_train(const RunConfig& config, const std::filesystem::path& out_dir) {
  train::TrainConfig base;
  base.lr = config.lr;
  base.weight_decay = config.weight_decay;
  base.clip_norm = config.clip_norm;
  base.tau = config.tau;
  base.eps = config.eps;
  base.epochs = config.epochs;
  base.hidden = config.hidden;
  base.layers = config.layers;
  base.vote_k = config.k;
  base.validate();

  LoadedData data = load_data(config, true);
  auto embedder = make_embedder(config);
  ExampleSet train_set = make_examples(config, data.splits.train, data.cache, data.profiles,
                                       embedder);
  ExampleSet val_set = make_examples(config, data.splits.val, data.cache, data.profiles, embedder);

  for (std::uint64_t seed : config.seeds) {
    train::TrainConfig tc = base;
    tc.seed = seed;
    std::filesystem::path seed_dir = out_dir / ("seed-" + std::to_string(seed));
    auto result = train::fit(train_set.examples, val_set.examples, tc,
                             seed_dir / "checkpoint.bin");
    std::string log_text;
    for (const auto& entry : result.log) log_text += train::format_log_line(entry) + "\n";
    write_text_file(seed_dir / "train_log.jsonl", log_text);
    std::cout << "seed " << seed << ": best val F1 " << std::fixed << std::setprecision(2)
              << result.best_val_f1 << " over " << config.epochs << " epochs\n";
  }
  write_echo(config, out_dir);
}

void cmd_eval(const RunConfig& config, const std::filesystem::path& out_dir,
              const std::filesystem::path& checkpoint_dir, int k) {
  LoadedData data = load_data(config, true);
  auto embedder = make_embedder(config);

  auto train_join = dataio::join_for_training(data.splits.train, data.cache, data.profiles);
  auto test_join = dataio::join_for_training(data.splits.test, data.cache, data.profiles);
  if (test_join.joined.empty()) throw DataError("no test records with cached answers");

  eval::BaselineInputs inputs;
  inputs.dataset = config.dataset_name;
  inputs.seed_count = static_cast<int>(config.seeds.size());
  inputs.agent_ids = canonical_agent_ids(data.profiles);
  for (const auto& p : data.profiles) {
    inputs.backbones.push_back(p.backbone);
    inputs.designs.push_back(std::string(design_name(p.design)));
  }
  for (const auto& joined : train_join.joined) {
    inputs.train_answers.push_back(joined.answers);
    inputs.train_golds.push_back(joined.record->gold_answers);
  }
  for (const auto& joined : test_join.joined) {
    inputs.test_answers.push_back(joined.answers);
    inputs.test_golds.push_back(joined.record->gold_answers);
  }
  auto baseline_report = eval::baselines(inputs);

  // router row across seeds; per-record routing results go to one JSONL per seed
  ExampleSet test_set = make_examples(config, data.splits.test, data.cache, data.profiles,
                                      embedder);
  std::vector<std::vector<std::string>> per_seed_preds;
  for (std::uint64_t seed : config.seeds) {
    auto params = load_seed_checkpoint(checkpoint_dir, seed, data.profiles);
    std::vector<std::string> preds;
    std::string routing_jsonl;
    for (const auto& ex : test_set.examples) {
      auto routed = route::route_record(ex.record_id, *ex.graph, ex.features, params,
                                        ex.answers, k);
      json jr;
      jr["record_id"] = routed.record_id;
      jr["probs"] = std::vector<double>(routed.probs.data(),
                                        routed.probs.data() + routed.probs.size());
      json selected = json::array();
      for (const auto& [agent_id, weight] : routed.selected) {
        selected.push_back({{"agent_id", agent_id}, {"weight", weight}});
      }
      jr["selected"] = selected;
      jr["fused_answer"] = routed.fused_answer;
      json tally = json::array();
      for (const auto& [answer, weight] : routed.tally) {
        tally.push_back({{"answer", answer}, {"weight", weight}});
      }
      jr["tally"] = tally;
      routing_jsonl += jr.dump() + "\n";
      preds.push_back(routed.fused_answer);
    }
    write_text_file(out_dir / ("routing-seed-" + std::to_string(seed) + ".jsonl"),
                    routing_jsonl);
    per_seed_preds.push_back(std::move(preds));
  }
  std::vector<std::vector<std::string>> golds;
  for (const auto& ex : test_set.examples) golds.push_back(ex.golds);
  auto router_row = eval::evaluate_method("router", config.dataset_name, per_seed_preds, golds);
  router_row.k = k;

  std::vector<eval::MethodRow> rows;
  for (const auto& row : baseline_report.rows) {
    if (row.method == "oracle") continue;
    rows.push_back(row);
  }
  rows.push_back(router_row);
  for (const auto& row : baseline_report.rows) {
    if (row.method == "oracle") rows.push_back(row);
  }

  std::ostringstream table;
  table << "dataset: " << config.dataset_name << "  k=" << k << "  seeds=" << config.seeds.size()
        << "\n";
  table << std::left << std::setw(16) << "method" << std::right << std::setw(16) << "F1"
        << std::setw(18) << "EM" << "\n";
  std::string jsonl;
  for (const auto& row : rows) {
    table << format_row(row) << "\n";
    jsonl += row_to_json(row).dump() + "\n";
  }
  for (const auto& note : baseline_report.notes) table << "# " << note << "\n";

  std::cout << table.str();
  write_text_file(out_dir / "report.txt", table.str());
  write_text_file(out_dir / "report.jsonl", jsonl);
  write_echo(config, out_dir);
}

void cmd_sweep_topk(const RunConfig& config, const std::filesystem::path& out_dir,
                    const std::filesystem::path& checkpoint_dir) {
  LoadedData data = load_data(config, true);
  auto embedder = make_embedder(config);
  ExampleSet test_set = make_examples(config, data.splits.test, data.cache, data.profiles,
                                      embedder);

  std::vector<gnn::ModelParams> per_seed_params;
  for (std::uint64_t seed : config.seeds) {
    per_seed_params.push_back(load_seed_checkpoint(checkpoint_dir, seed, data.profiles));
  }

  const int ref_k = static_cast<int>(data.profiles.size());
  std::vector<int> k_values = config.k_list;
  if (std::find(k_values.begin(), k_values.end(), ref_k) == k_values.end()) {
    k_values.push_back(ref_k);
  }
  auto metrics = routed_metrics_by_k(test_set.examples, per_seed_params, k_values);
  const auto [ref_f1, ref_em] = metrics.at(ref_k);

  auto delta = [](double value, double reference) {
    if (reference == 0.0) return 0.0;
    return 100.0 * (value - reference) / reference;
  };

  std::ostringstream csv;
  std::ostringstream table;
  csv << "k,f1_mean,em_mean,f1_delta_pct,em_delta_pct\n";
  table << "dataset: " << config.dataset_name << "  base k=" << ref_k << "\n";
  table << std::left << std::setw(6) << "k" << std::right << std::setw(10) << "F1"
        << std::setw(10) << "EM" << std::setw(12) << "dF1%" << std::setw(12) << "dEM%" << "\n";
  for (int k : config.k_list) {
    const auto [f1, em] = metrics.at(k);
    const double df1 = k == ref_k ? 0.0 : delta(f1, ref_f1);
    const double dem = k == ref_k ? 0.0 : delta(em, ref_em);
    csv << k << ',' << format_double(f1) << ',' << format_double(em) << ','
        << format_double(df1) << ',' << format_double(dem) << "\n";
    table << std::left << std::setw(6) << k << std::right << std::fixed << std::setprecision(2)
          << std::setw(10) << f1 << std::setw(10) << em << std::setw(12) << df1 << std::setw(12)
          << dem << "\n";
  }
  std::cout << table.str();
  write_text_file(out_dir / "sweep.csv", csv.str());
  write_text_file(out_dir / "sweep.txt", table.str());
  write_echo(config, out_dir);
}

void cmd_transfer(const RunConfig& source_config, const std::filesystem::path& source_ckpt_dir,
                  const std::vector<std::string>& target_config_paths,
                  const std::filesystem::path& out_dir) {
  if (target_config_paths.empty()) throw UsageError("transfer needs at least one --target config");
  const auto mode = source_config.drop_mode == "absolute" ? eval::DropMode::Absolute
                                                          : eval::DropMode::Relative;

  for (const auto& target_path : target_config_paths) {
    RunConfig target_config = RunConfig::load(target_path);
    LoadedData target = load_data(target_config, true);
    auto embedder = make_embedder(target_config);
    ExampleSet test_set = make_examples(target_config, target.splits.test, target.cache,
                                        target.profiles, embedder);

    if (target_config.checkpoint_dir.empty()) {
      throw DataError("transfer: target " + target_config.dataset_name +
                      " has no in-domain reference; set checkpoint_dir in " + target_path);
    }
    std::vector<gnn::ModelParams> in_domain, transferred;
    for (std::uint64_t seed : target_config.seeds) {
      in_domain.push_back(
          load_seed_checkpoint(target_config.checkpoint_dir, seed, target.profiles));
    }
    for (std::uint64_t seed : source_config.seeds) {
      transferred.push_back(load_seed_checkpoint(source_ckpt_dir, seed, target.profiles));
    }

    const std::vector<int>& k_list = source_config.k_list;
    auto m_in = routed_metrics_by_k(test_set.examples, in_domain, k_list);
    auto m_xfer = routed_metrics_by_k(test_set.examples, transferred, k_list);

    std::vector<std::pair<double, double>> f1_pairs, em_pairs;
    for (int k : k_list) {
      f1_pairs.emplace_back(m_in.at(k).first, m_xfer.at(k).first);
      em_pairs.emplace_back(m_in.at(k).second, m_xfer.at(k).second);
    }
    auto table = eval::transfer_report(source_config.dataset_name, target_config.dataset_name,
                                       k_list, f1_pairs, em_pairs, mode);

    std::ostringstream text;
    std::string jsonl;
    text << "transfer " << table.source_dataset << " -> " << table.target_dataset
         << "  (drop mode: " << source_config.drop_mode << ")\n";
    text << std::left << std::setw(6) << "k" << std::right << std::setw(12) << "F1 Drop%"
         << std::setw(12) << "EM Drop%" << "\n";
    for (const auto& cell : table.cells) {
      text << std::left << std::setw(6) << cell.k << std::right << std::fixed
           << std::setprecision(2) << std::setw(12) << cell.f1_drop << std::setw(12)
           << cell.em_drop << "\n";
      json j;
      j["source"] = table.source_dataset;
      j["target"] = table.target_dataset;
      j["k"] = cell.k;
      j["f1_drop"] = cell.f1_drop;
      j["em_drop"] = cell.em_drop;
      jsonl += j.dump() + "\n";
    }
    std::cout << text.str();
    std::string stem = "transfer_" + table.source_dataset + "_to_" + table.target_dataset;
    write_text_file(out_dir / (stem + ".txt"), text.str());
    write_text_file(out_dir / (stem + ".jsonl"), jsonl);
  }
  write_echo(source_config, out_dir);
}

namespace {

std::map<std::string, std::string> parse_model_map(const std::string& spec) {
  std::map<std::string, std::string> out;
  for (const auto& part : split(spec, ',')) {
    std::string t = trim(part);
    if (t.empty()) continue;
    size_t pos = t.find('=');
    if (pos == std::string::npos) {
      throw UsageError("backend_model_map entries must look like backbone=model");
    }
    out[trim(t.substr(0, pos))] = trim(t.substr(pos + 1));
  }
  return out;
}

std::vector<dataio::DatasetRecord> all_split_records(const dataio::Splits& splits) {
  std::vector<dataio::DatasetRecord> records;
  std::set<std::string> seen;
  for (const auto* split : {&splits.train, &splits.val, &splits.test}) {
    for (const auto& rec : *split) {
      if (seen.insert(rec.id).second) records.push_back(rec);
    }
  }
  return records;
}

agents::BackendConfig backend_config_for(const RunConfig& config, const std::string& endpoint,
                                         const std::string& model) {
  agents::BackendConfig bc;
  bc.endpoint = endpoint;
  bc.model = model;
  bc.temperature = config.backend_temperature;
  bc.max_tokens = config.backend_max_tokens;
  bc.api_key_env = config.backend_api_key_env;
  bc.timeout_s = config.backend_timeout_s;
  bc.retry.max_attempts = config.backend_retry_max;
  bc.retry.backoff_ms = config.backend_backoff_ms;
  return bc;
}

}  // namespace

void cmd_agents_run(const RunConfig& config, const std::filesystem::path& out_dir,
                    bool mock_backend) {
  if (config.cache_file.empty()) throw UsageError("config needs cache_file");
  LoadedData data = load_data(config, false);
  auto records = all_split_records(data.splits);

  std::unique_ptr<agents::MockBackendServer> mock;
  std::string endpoint = config.backend_endpoint;
  if (mock_backend) {
    mock = std::make_unique<agents::MockBackendServer>();
    std::map<std::string, std::string> truth;
    for (const auto& rec : records) truth[rec.question] = rec.gold_answers.front();
    mock->set_ground_truth(std::move(truth));
    endpoint = mock->base_url();
  } else if (std::getenv(config.backend_api_key_env.c_str()) == nullptr) {
    std::cerr << "note: environment variable " << config.backend_api_key_env
              << " is not set; requests go out unauthenticated\n";
  }

  auto model_map = parse_model_map(config.backend_model_map);
  agents::BackendFactory factory = [&](const dataio::AgentProfile& profile) {
    auto it = model_map.find(profile.backbone);
    std::string model = it != model_map.end() ? it->second : profile.backbone;
    return std::make_shared<agents::HttpChatBackend>(backend_config_for(config, endpoint, model));
  };

  agents::RunAgentsOptions options;
  options.concurrency = config.concurrency;
  options.design.sc_samples = config.sc_samples;
  options.design.reflect_max_revisions = config.reflect_max_revisions;
  if (!config.transcripts_dir.empty()) options.transcript_dir = config.transcripts_dir;

  auto report = agents::run_agents(records, data.profiles, factory, config.cache_file, options);
  json j;
  j["fetched"] = report.fetched;
  j["skipped"] = report.skipped;
  j["failed"] = report.failed;
  j["errors"] = report.errors;
  write_text_file(out_dir / "run_report.json", j.dump(2) + "\n");
  write_echo(config, out_dir);
  std::cout << "agents run: fetched " << report.fetched << ", skipped " << report.skipped
            << ", failed " << report.failed << "\n";
}

void cmd_agents_judge(const RunConfig& config, const std::filesystem::path& out_dir,
                      bool mock_backend) {
  LoadedData data = load_data(config, false);
  auto records = all_split_records(data.splits);

  std::unique_ptr<agents::MockBackendServer> mock;
  std::string endpoint = config.backend_endpoint;
  if (mock_backend) {
    mock = std::make_unique<agents::MockBackendServer>();
    endpoint = mock->base_url();
  }
  auto model_map = parse_model_map(config.backend_model_map);
  std::string model = model_map.empty() ? "default" : model_map.begin()->second;
  agents::HttpChatBackend backend(backend_config_for(config, endpoint, model));

  std::string jsonl;
  std::vector<std::string> warnings;
  for (const auto& rec : records) {
    auto extraction = extract_record(rec);
    auto map = agents::judge_agent_entities(rec, extraction.mentions, data.profiles, backend,
                                            config.judge_cutoff, &warnings);
    for (const auto& [agent_id, entities] : map) {
      json j;
      j["record_id"] = rec.id;
      j["agent_id"] = agent_id;
      j["entities"] = entities;
      jsonl += j.dump() + "\n";
    }
  }
  write_text_file(out_dir / "agent_entity_map.jsonl", jsonl);
  if (!warnings.empty()) {
    std::string text;
    for (const auto& w : warnings) text += w + "\n";
    write_text_file(out_dir / "warnings.txt", text);
  }
  write_echo(config, out_dir);
  std::cout << "agents judge: wrote manage-edge map for " << records.size() << " record(s)\n";
}

void cmd_report_variance(const RunConfig& config, const std::filesystem::path& out_dir) {
  LoadedData data = load_data(config, true);
  auto records = all_split_records(data.splits);

  std::ostringstream table;
  std::string jsonl;
  table << std::left << std::setw(48) << "agent" << std::right << std::setw(6) << "n"
        << std::setw(9) << "meanF1" << std::setw(9) << "stdF1" << std::setw(9) << "minF1"
        << std::setw(9) << "maxF1" << "\n";
  for (const auto& profile : data.profiles) {
    std::vector<double> scores;
    for (const auto& rec : records) {
      const auto* row = data.cache.find(rec.id, profile.agent_id);
      if (row == nullptr) continue;
      scores.push_back(eval::token_f1(row->answer, rec.gold_answers));
    }
    if (scores.empty()) continue;
    double lo = *std::min_element(scores.begin(), scores.end());
    double hi = *std::max_element(scores.begin(), scores.end());
    table << std::left << std::setw(48) << profile.agent_id << std::right << std::setw(6)
          << scores.size() << std::fixed << std::setprecision(3) << std::setw(9)
          << eval::mean(scores) << std::setw(9) << eval::population_std(scores) << std::setw(9)
          << lo << std::setw(9) << hi << "\n";
    json j;
    j["agent_id"] = profile.agent_id;
    j["n"] = scores.size();
    j["mean_f1"] = eval::mean(scores);
    j["std_f1"] = eval::population_std(scores);
    j["min_f1"] = lo;
    j["max_f1"] = hi;
    jsonl += j.dump() + "\n";
  }
  std::cout << table.str();
  write_text_file(out_dir / "variance.txt", table.str());
  write_text_file(out_dir / "variance.jsonl", jsonl);
  write_echo(config, out_dir);
}

}  // namespace agentrouter::cli
