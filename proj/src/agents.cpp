#include "agentrouter/agents.hpp"

#include "agentrouter/graph.hpp"
#include "agentrouter/route.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <mutex>
#include <thread>

namespace agentrouter::agents {

using nlohmann::json;

namespace {

constexpr std::string_view kRawModel =
    "Given a question, a news context, and retrieved documents, answer the question.\n"
    "The final answer must appear on the last line in the format: \\boxed{<answer>}";

constexpr std::string_view kCotModel =
    "You are a multi-hop reasoning expert and an expert QA agent. Given a question, and the "
    "context, think step-by-step. The final answer must appear on the last line in the format: "
    "\\boxed{<answer>}";

constexpr std::string_view kDebaterA =
    "You are Debater A. Your goal is to propose the most plausible answer using the provided "
    "context.\n"
    "- Make ONE clear claim (the candidate answer).\n"
    "- Support it with 1-2 ultra-short quotes (verbatim substrings) and name the hops.\n"
    "- Explain the link between the quotes in <=2 sentences.\n"
    "Do NOT use outside knowledge and do NOT output the final boxed answer. Make your answer "
    "really short and concise.";

constexpr std::string_view kDebaterB =
    "You are Debater B. Your goal is to stress-test A's claim using ONLY the provided context.\n"
    "- If A's quotes or hops are weak, inconsistent, or incomplete, point it out and give "
    "corrected quotes/hops.\n"
    "- If a better candidate exists, state ONE alternative with 1-2 short quotes and <=2 "
    "sentences of reasoning.\n"
    "- If A is already well-supported, briefly confirm but add one missing check.\n"
    "Do NOT use outside knowledge and do NOT output the final boxed answer. Make your answer "
    "really short and concise.";

constexpr std::string_view kDebateJudge =
    "You are the Judge. Read A and B as supporting analyses and decide the best final answer "
    "using ONLY the given context.\n"
    "If evidence is thin, still make your best context-based guess.\n"
    "Output MUST include nothing but brief final answer in the format: \\boxed{}.";

constexpr std::string_view kReact =
    "You are a multi-hop reasoning expert and an expert QA agent.\n"
    "Given a question, a news context, and retrieved documents, think step-by-step, silently "
    "chain facts to derive a thinking plan,\n"
    "then use this plan to derive the final brief answer.\n"
    "Your output format MUST be a brief final answer on the last line in the format: "
    "\\boxed{<answer>}.";

constexpr std::string_view kReflect =
    "You are a judge overseeing a multi-hop reasoning expert and an expert QA agent.\n"
    "Given a question, a news context, and retrieved documents, you will evaluate the agent's "
    "answer based on the correctness and notes.\n"
    "If the answer is incorrect or incomplete, provide constructive feedback and suggest "
    "specific revisions to improve the answer.\n"
    "If the answer is correct and complete, indicate that no further revisions are needed.\n"
    "Your output MUST end with either:\n"
    "- \"Status: revise\" followed by specific feedback and revision suggestions, if the answer "
    "needs improvement.\n"
    "- \"Status: final\" if the answer is correct and complete.\n"
    "If you indicate \"Status: revise\", also include a short \"Feedback: <your feedback here>\" "
    "section before the final answer.";

constexpr std::string_view kThinkA =
    "You are a multi-hop reasoning expert and an expert QA agent.\n"
    "Given a question, a news context, and retrieved documents, think step-by-step, chain facts "
    "to derive the answer.\n"
    "Give your final answer as a single entity, and a concise reasoning process that leads to "
    "the answer.";

constexpr std::string_view kSummarize =
    "You are the multi-hop reasoning expert and an expert QA agent. You receive outputs from "
    "other agents. Use them as supporting signals.\n"
    "If A and B agree on the same short span, return it. If they differ, pick the best answer "
    "with your own reasoning.\n"
    "Your output format MUST end with the brief final answer on the last line in the format: "
    "\\boxed{<answer>}.";

constexpr std::string_view kNote =
    "Here are the rules you must STRICTLY follow:\n"
    "1. Always return the answer as the SHORTEST exact entity only. The answer is always within "
    "10 words, and usually within 5 words.\n"
    "2. If the question is yes/no, respond strictly with yes or no only.\n"
    "3. For year ranges, never use hyphens; instead, use \"from XXXX to YYYY\" or \"XXXX until "
    "YYYY\".\n"
    "4. Do not output sentences, explanations, or phrases with verbs; the answer must be a "
    "single entity expression only.\n"
    "5. One way or another, you must return your best guess, and the final answer must be in "
    "the format: \\boxed{<answer>}.";

constexpr std::string_view kEntityJudge =
    "You are a judge assigning context entities to an agent. Given the question, the entity "
    "list, and the agent's strategy, reply with the entities this agent should attend to, best "
    "first, as exact surfaces separated by semicolons on one line starting with 'Entities:'.";

std::string render_user(const dataio::DatasetRecord& record) {
  return "Question: " + record.question + "\n\nContext: " + record.context;
}

std::string with_note(std::string_view system) {
  return std::string(system) + "\n\n" + std::string(kNote);
}

std::string strip_markup(std::string line) {
  auto strip = [&](std::string s) {
    size_t b = 0, e = s.size();
    auto junk = [](char c) {
      return c == '*' || c == '`' || c == '#' || c == '>' || c == '-' ||
             std::isspace(static_cast<unsigned char>(c));
    };
    while (b < e && junk(s[b])) ++b;
    while (e > b && (s[e - 1] == '*' || s[e - 1] == '`' ||
                     std::isspace(static_cast<unsigned char>(s[e - 1])))) {
      --e;
    }
    return s.substr(b, e - b);
  };
  return strip(std::move(line));
}

struct Transcript {
  std::string text;
  int calls = 0;

  std::string call(ChatBackend& backend, const std::vector<ChatMessage>& messages) {
    std::string response = backend.complete(messages);
    ++calls;
    text += "=== call " + std::to_string(calls) + " ===\n";
    for (const auto& m : messages) text += "[" + m.role + "]\n" + m.content + "\n";
    text += "[response]\n" + response + "\n";
    return response;
  }
};

}  // namespace

std::string_view prompt_text(std::string_view role) {
  if (role == "raw_model") return kRawModel;
  if (role == "cot_model") return kCotModel;
  if (role == "debate_debater_a") return kDebaterA;
  if (role == "debate_debater_b") return kDebaterB;
  if (role == "debate_judge") return kDebateJudge;
  if (role == "react") return kReact;
  if (role == "reflect") return kReflect;
  if (role == "think_a") return kThinkA;
  if (role == "think_b") return kThinkA;
  if (role == "summarize") return kSummarize;
  if (role == "entity_judge") return kEntityJudge;
  throw DataError("unknown prompt role: " + std::string(role));
}

std::string_view note_rules() { return kNote; }

PromptBundle render_prompt(AgentDesign design, const dataio::DatasetRecord& record) {
  PromptBundle bundle;
  bundle.design = design;
  bundle.note_rules = std::string(kNote);
  bundle.user_text = render_user(record);
  switch (design) {
    case AgentDesign::Raw:
      bundle.system_text = with_note(kRawModel);
      break;
    case AgentDesign::Cot:
    case AgentDesign::Sc:
      bundle.system_text = with_note(kCotModel);
      break;
    case AgentDesign::ReactReflect:
      bundle.system_text = with_note(kReact);
      break;
    case AgentDesign::Mad:
      bundle.system_text = with_note(kDebateJudge);
      break;
    case AgentDesign::Summary:
      bundle.system_text = with_note(kSummarize);
      break;
  }
  return bundle;
}

BoxedAnswer parse_boxed(const std::string& raw) {
  constexpr std::string_view kMarker = "\\boxed{";
  size_t pos = raw.rfind(kMarker);
  while (pos != std::string::npos) {
    size_t start = pos + kMarker.size();
    int depth = 1;
    for (size_t i = start; i < raw.size(); ++i) {
      if (raw[i] == '{') {
        ++depth;
      } else if (raw[i] == '}') {
        --depth;
        if (depth == 0) return {trim(raw.substr(start, i - start)), true};
      }
    }
    // unbalanced; try an earlier box
    pos = pos == 0 ? std::string::npos : raw.rfind(kMarker, pos - 1);
  }
  // fallback: last non-empty line, stripped of markup
  std::string last;
  for (const auto& line : split(raw, '\n')) {
    std::string stripped = strip_markup(line);
    if (!stripped.empty()) last = stripped;
  }
  return {last, false};
}

std::string HttpChatBackend::complete(const std::vector<ChatMessage>& messages) {
  json body;
  body["model"] = config_.model;
  body["temperature"] = config_.temperature;
  body["max_tokens"] = config_.max_tokens;
  body["messages"] = json::array();
  for (const auto& m : messages) {
    body["messages"].push_back({{"role", m.role}, {"content", m.content}});
  }
  const std::string payload = body.dump();

  httplib::Headers headers;
  if (!config_.api_key_env.empty()) {
    if (const char* key = std::getenv(config_.api_key_env.c_str()); key != nullptr && *key) {
      headers.emplace("Authorization", std::string("Bearer ") + key);
    }
  }

  std::string last_error;
  for (int attempt = 1; attempt <= config_.retry.max_attempts; ++attempt) {
    if (attempt > 1) {
      double ms = config_.retry.backoff_ms *
                  std::pow(config_.retry.backoff_factor, attempt - 2);
      std::this_thread::sleep_for(std::chrono::milliseconds(static_cast<long>(ms)));
    }
    httplib::Client client(config_.endpoint);
    client.set_connection_timeout(config_.timeout_s, 0);
    client.set_read_timeout(config_.timeout_s, 0);
    auto res = client.Post("/v1/chat/completions", headers, payload, "application/json");
    if (!res) {
      last_error = "connection error (" + httplib::to_string(res.error()) + ")";
      continue;
    }
    if (res->status == 200) {
      json reply = json::parse(res->body, nullptr, false);
      if (reply.is_discarded() || !reply.contains("choices") || reply["choices"].empty()) {
        throw BackendError("backend returned an unparseable completion body");
      }
      return reply["choices"][0]["message"]["content"].get<std::string>();
    }
    if (res->status == 429 || res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    throw BackendError("backend rejected request with HTTP " + std::to_string(res->status));
  }
  throw BackendError("backend unavailable after " + std::to_string(config_.retry.max_attempts) +
                     " attempts: " + last_error);
}

AgentRunOutput execute_design(AgentDesign design, const dataio::DatasetRecord& record,
                              ChatBackend& backend, const DesignRunConfig& config) {
  const std::string user = render_user(record);
  Transcript transcript;
  AgentRunOutput out;

  switch (design) {
    case AgentDesign::Raw:
    case AgentDesign::Cot: {
      std::string_view system = design == AgentDesign::Raw ? kRawModel : kCotModel;
      std::string response =
          transcript.call(backend, {{"system", with_note(system)}, {"user", user}});
      auto boxed = parse_boxed(response);
      out.answer = boxed.value;
      out.boxed = boxed.boxed;
      out.raw_output = response;
      break;
    }
    case AgentDesign::Sc: {
      std::vector<std::string> answers;
      std::vector<std::string> raws;
      std::vector<bool> boxed_flags;
      for (int s = 0; s < config.sc_samples; ++s) {
        std::string response =
            transcript.call(backend, {{"system", with_note(kCotModel)}, {"user", user}});
        auto boxed = parse_boxed(response);
        answers.push_back(boxed.value);
        boxed_flags.push_back(boxed.boxed);
        raws.push_back(response);
      }
      std::vector<double> uniform(answers.size(), 1.0);
      auto vote = route::weighted_vote(answers, uniform);
      out.answer = vote.winner;
      for (size_t i = 0; i < answers.size(); ++i) {
        if (answers[i] == vote.winner) {
          out.boxed = boxed_flags[i];
          out.raw_output = raws[i];
          break;
        }
      }
      if (out.raw_output.empty() && !raws.empty()) out.raw_output = raws.back();
      break;
    }
    case AgentDesign::ReactReflect: {
      std::string draft =
          transcript.call(backend, {{"system", with_note(kReact)}, {"user", user}});
      for (int revision = 0; revision < config.reflect_max_revisions; ++revision) {
        std::string verdict = transcript.call(
            backend, {{"system", std::string(kReflect)},
                      {"user", user + "\n\nAgent's answer:\n" + draft}});
        if (verdict.find("Status: revise") == std::string::npos) break;
        std::string feedback = "revise the answer";
        if (size_t fb = verdict.find("Feedback:"); fb != std::string::npos) {
          std::string rest = verdict.substr(fb + 9);
          size_t eol = rest.find('\n');
          feedback = trim(eol == std::string::npos ? rest : rest.substr(0, eol));
        }
        draft = transcript.call(
            backend, {{"system", with_note(kReact)},
                      {"user", user},
                      {"assistant", draft},
                      {"user", "Feedback: " + feedback + "\nRevise your answer accordingly."}});
      }
      auto boxed = parse_boxed(draft);
      out.answer = boxed.value;
      out.boxed = boxed.boxed;
      out.raw_output = draft;
      break;
    }
    case AgentDesign::Mad: {
      std::string a = transcript.call(backend, {{"system", std::string(kDebaterA)}, {"user", user}});
      std::string b = transcript.call(
          backend,
          {{"system", std::string(kDebaterB)}, {"user", user + "\n\nDebater A's analysis:\n" + a}});
      std::string verdict = transcript.call(
          backend, {{"system", with_note(kDebateJudge)},
                    {"user", user + "\n\nDebater A:\n" + a + "\n\nDebater B:\n" + b}});
      auto boxed = parse_boxed(verdict);
      out.answer = boxed.value;
      out.boxed = boxed.boxed;
      out.raw_output = verdict;
      break;
    }
    case AgentDesign::Summary: {
      std::string a = transcript.call(backend, {{"system", std::string(kThinkA)}, {"user", user}});
      std::string b = transcript.call(backend, {{"system", std::string(kThinkA)}, {"user", user}});
      std::string fused = transcript.call(
          backend, {{"system", with_note(kSummarize)},
                    {"user", user + "\n\nAgent A output:\n" + a + "\n\nAgent B output:\n" + b}});
      auto boxed = parse_boxed(fused);
      out.answer = boxed.value;
      out.boxed = boxed.boxed;
      out.raw_output = fused;
      break;
    }
  }
  out.transcript = std::move(transcript.text);
  out.calls = transcript.calls;
  return out;
}

RunAgentsReport run_agents(const std::vector<dataio::DatasetRecord>& records,
                           const std::vector<dataio::AgentProfile>& profiles,
                           const BackendFactory& backend_factory,
                           const std::filesystem::path& cache_path,
                           const RunAgentsOptions& options) {
  dataio::AgentCache existing;
  if (std::filesystem::exists(cache_path)) {
    existing = dataio::load_agent_cache(cache_path);
  }

  struct Task {
    size_t record_index;
    size_t profile_index;
  };
  std::vector<Task> tasks;
  RunAgentsReport report;
  for (size_t r = 0; r < records.size(); ++r) {
    for (size_t a = 0; a < profiles.size(); ++a) {
      if (existing.find(records[r].id, profiles[a].agent_id) != nullptr) {
        ++report.skipped;
      } else {
        tasks.push_back({r, a});
      }
    }
  }

  std::vector<dataio::AgentAnswerRecord> rows(tasks.size());
  std::vector<std::string> transcripts(tasks.size());
  std::vector<std::optional<std::string>> failures(tasks.size());
  std::atomic<size_t> cursor{0};

  auto worker = [&]() {
    while (true) {
      size_t i = cursor.fetch_add(1);
      if (i >= tasks.size()) break;
      const auto& task = tasks[i];
      const auto& record = records[task.record_index];
      const auto& profile = profiles[task.profile_index];
      dataio::AgentAnswerRecord row;
      row.record_id = record.id;
      row.agent_id = profile.agent_id;
      try {
        auto backend = backend_factory(profile);
        auto result = execute_design(profile.design, record, *backend, options.design);
        row.answer = result.answer;
        row.raw_output = result.raw_output;
        transcripts[i] = std::move(result.transcript);
      } catch (const BackendError& e) {
        row.answer = "";
        row.raw_output = std::string("ERROR: ") + e.what();
        failures[i] = e.what();
      }
      rows[i] = std::move(row);
    }
  };

  const int thread_count =
      std::max(1, std::min<int>(options.concurrency, static_cast<int>(tasks.size())));
  std::vector<std::thread> threads;
  threads.reserve(thread_count);
  for (int t = 0; t < thread_count; ++t) threads.emplace_back(worker);
  for (auto& t : threads) t.join();

  // single writer, canonical (record, agent) order
  dataio::append_cache_rows(cache_path, rows);
  if (options.transcript_dir) {
    for (size_t i = 0; i < tasks.size(); ++i) {
      if (transcripts[i].empty()) continue;
      const auto& task = tasks[i];
      std::string name = records[task.record_index].id + "__" +
                         profiles[task.profile_index].agent_id + ".txt";
      for (char& c : name) {
        if (c == ':' || c == '/') c = '_';
      }
      write_text_file(*options.transcript_dir / name, transcripts[i]);
    }
  }
  for (size_t i = 0; i < tasks.size(); ++i) {
    if (failures[i]) {
      ++report.failed;
      report.errors.push_back(rows[i].record_id + "/" + rows[i].agent_id + ": " + *failures[i]);
    } else {
      ++report.fetched;
    }
  }
  return report;
}

std::map<std::string, std::set<std::string>> judge_agent_entities(
    const dataio::DatasetRecord& record, const std::vector<extract::EntityMention>& mentions,
    const std::vector<dataio::AgentProfile>& profiles, ChatBackend& backend, int cutoff,
    std::vector<std::string>* warnings) {
  std::map<std::string, const extract::EntityMention*> canon;
  for (const auto& m : mentions) canon.emplace(to_lower(m.surface), &m);

  std::map<std::string, std::set<std::string>> out;
  for (const auto& profile : profiles) {
    std::string entity_list;
    for (const auto& m : mentions) {
      if (!entity_list.empty()) entity_list += "; ";
      entity_list += m.surface;
    }
    std::vector<ChatMessage> messages = {
        {"system", std::string(kEntityJudge)},
        {"user", "Question: " + record.question + "\nEntities: " + entity_list +
                     "\nAgent strategy: " + profile.description_text}};
    std::set<std::string> chosen;
    bool fallback = false;
    try {
      std::string response = backend.complete(messages);
      if (size_t pos = response.find("Entities:"); pos != std::string::npos) {
        response = response.substr(pos + 9);
      }
      for (auto& part : split(response, ';')) {
        for (auto& piece : split(part, '\n')) {
          std::string name = trim(piece);
          while (!name.empty() && (name.front() == '-' || name.front() == '*')) {
            name = trim(name.substr(1));
          }
          if (name.empty()) continue;
          auto it = canon.find(to_lower(name));
          if (it == canon.end()) {
            if (warnings != nullptr) {
              warnings->push_back("judge named unknown entity '" + name + "' for " +
                                  profile.agent_id + ", skipped");
            }
            continue;
          }
          if (static_cast<int>(chosen.size()) < cutoff) chosen.insert(it->second->surface);
        }
      }
    } catch (const BackendError& e) {
      fallback = true;
      if (warnings != nullptr) {
        warnings->push_back("judge call failed for " + profile.agent_id + " (" + e.what() +
                            "), lexical fallback used");
      }
    }
    if (chosen.empty() && !fallback) {
      fallback = true;
      if (warnings != nullptr) {
        warnings->push_back("judge returned no usable entities for " + profile.agent_id +
                            ", lexical fallback used");
      }
    }
    if (fallback) {
      for (const auto& surface :
           graph::lexical_entity_ranking(record, mentions, profile, cutoff)) {
        chosen.insert(surface);
      }
    }
    out[profile.agent_id] = std::move(chosen);
  }
  return out;
}

// ---- mock backend ----

struct MockBackendServer::Impl {
  httplib::Server server;
  std::thread thread;
  mutable std::mutex mutex;
  std::map<std::string, std::string> ground_truth;
  int rate_limit_remaining = 0;
  int requests = 0;
};

std::string MockBackendServer::respond(const std::map<std::string, std::string>& ground_truth,
                                       const std::vector<ChatMessage>& messages) {
  std::string system;
  std::string user;
  bool has_feedback = false;
  for (const auto& m : messages) {
    if (m.role == "system") {
      system += m.content;
    } else {
      user += m.content + "\n";
    }
    if (m.content.find("Feedback:") != std::string::npos) has_feedback = true;
  }

  std::string gold = "unknown";
  for (const auto& [question, answer] : ground_truth) {
    if (user.find(question) != std::string::npos) {
      gold = answer;
      break;
    }
  }

  auto has = [&](std::string_view needle) { return system.find(needle) != std::string::npos; };
  if (has("You are Debater A")) {
    return "Claim: " + gold + ". Quote: \"" + gold + "\". One hop links the quote to the question.";
  }
  if (has("You are Debater B")) {
    return "A's claim matches the context span. No stronger candidate found.";
  }
  if (has("You are the Judge")) {
    return "\\boxed{" + gold + "}";
  }
  if (has("judge overseeing")) {
    if (user.find("PRELIMINARY") != std::string::npos) {
      return "Status: revise\nFeedback: remove the preliminary marker and state the exact entity.";
    }
    return "Status: final";
  }
  if (has("silently chain facts")) {
    if (has_feedback) return "Plan applied.\n\\boxed{" + gold + "}";
    return "Plan drafted.\n\\boxed{PRELIMINARY " + gold + "}";
  }
  if (has("You receive outputs from other agents")) {
    return "A and B agree.\n\\boxed{" + gold + "}";
  }
  if (has("single entity, and a concise reasoning")) {
    return "Answer: " + gold + ". Reasoning: stated directly in the context.";
  }
  if (has("assigning context entities")) {
    std::string list;
    if (size_t pos = user.find("Entities: "); pos != std::string::npos) {
      size_t eol = user.find('\n', pos);
      list = user.substr(pos + 10, eol == std::string::npos ? std::string::npos : eol - pos - 10);
    }
    auto names = split(list, ';');
    std::string reply = "Entities:";
    int taken = 0;
    for (auto& name : names) {
      if (taken >= 3) break;
      std::string t = trim(name);
      if (t.empty()) continue;
      reply += (taken == 0 ? " " : "; ") + t;
      ++taken;
    }
    return reply;
  }
  if (has("think step-by-step")) {
    return "Step 1: scan the context. Step 2: locate the entity.\nFinal: \\boxed{" + gold + "}";
  }
  return "\\boxed{" + gold + "}";
}

MockBackendServer::MockBackendServer() : impl_(std::make_unique<Impl>()) {
  impl_->server.Post("/v1/chat/completions",
                     [impl = impl_.get()](const httplib::Request& req, httplib::Response& res) {
                       std::map<std::string, std::string> truth;
                       {
                         std::lock_guard lock(impl->mutex);
                         ++impl->requests;
                         if (impl->rate_limit_remaining > 0) {
                           --impl->rate_limit_remaining;
                           res.status = 429;
                           res.set_content(R"({"error":"rate limited"})", "application/json");
                           return;
                         }
                         truth = impl->ground_truth;
                       }
                       json body = json::parse(req.body, nullptr, false);
                       std::vector<ChatMessage> messages;
                       if (!body.is_discarded() && body.contains("messages")) {
                         for (const auto& m : body["messages"]) {
                           messages.push_back({m.value("role", ""), m.value("content", "")});
                         }
                       }
                       json reply;
                       reply["choices"] = json::array();
                       reply["choices"].push_back(
                           {{"message",
                             {{"role", "assistant"}, {"content", respond(truth, messages)}}}});
                       res.set_content(reply.dump(), "application/json");
                     });
  port_ = impl_->server.bind_to_any_port("127.0.0.1");
  if (port_ <= 0) throw DataError("mock backend: failed to bind a port");
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
}

MockBackendServer::~MockBackendServer() {
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

void MockBackendServer::set_ground_truth(std::map<std::string, std::string> question_to_answer) {
  std::lock_guard lock(impl_->mutex);
  impl_->ground_truth = std::move(question_to_answer);
}

void MockBackendServer::set_rate_limit_first(int n) {
  std::lock_guard lock(impl_->mutex);
  impl_->rate_limit_remaining = n;
}

std::string MockBackendServer::base_url() const {
  return "http://127.0.0.1:" + std::to_string(port_);
}

int MockBackendServer::request_count() const {
  std::lock_guard lock(impl_->mutex);
  return impl_->requests;
}

}  // namespace agentrouter::agents
