#include "agentrouter/extract.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <map>
#include <optional>
#include <unordered_map>
#include <unordered_set>

namespace agentrouter::extract {

namespace {

constexpr std::string_view kMentionKindNames[] = {"named", "temporal", "numeric"};

constexpr std::string_view kCueNames[kCueCategoryCount] = {
    "entity_choice", "location", "person", "time", "reason", "manner", "yes_no"};

const std::unordered_set<std::string>& stopwords() {
  static const std::unordered_set<std::string> kSet = {
      "the", "a",    "an",   "and",  "or",   "but",  "if",   "of",   "in",
      "on",  "at",   "to",   "for",  "with", "by",   "from", "as",   "is",
      "was", "are",  "were", "be",   "been", "this", "that", "these",
      "those", "it", "its",  "he",   "she",  "his",  "her",  "they", "their",
      "them", "we",  "our",  "you",  "your", "i",    "not",  "no",   "so"};
  return kSet;
}

const std::unordered_set<std::string>& month_names() {
  static const std::unordered_set<std::string> kSet = {
      "january", "february", "march",     "april",   "may",      "june",
      "july",    "august",   "september", "october", "november", "december"};
  return kSet;
}

const std::unordered_set<std::string>& weekday_names() {
  static const std::unordered_set<std::string> kSet = {
      "monday", "tuesday", "wednesday", "thursday", "friday", "saturday", "sunday"};
  return kSet;
}

const std::unordered_set<std::string>& prepositions() {
  static const std::unordered_set<std::string> kSet = {
      "of", "in", "on", "at", "by", "for", "with", "from", "as", "about",
      "into", "over", "under", "between", "against", "during", "after",
      "before", "through", "following", "near", "within"};
  return kSet;
}

const std::unordered_set<std::string>& common_verbs() {
  static const std::unordered_set<std::string> kSet = {
      "is",   "was",  "are",   "were",  "be",    "been",  "has",   "have",
      "had",  "met",  "won",   "died",  "wrote", "made",  "said",  "became",
      "led",  "star", "stars", "beat",  "held",  "ran",   "sang",  "built",
      "took", "gave", "plays", "knows", "knew",  "hosts", "lives", "runs"};
  return kSet;
}

const std::unordered_set<std::string>& copulas() {
  static const std::unordered_set<std::string> kSet = {"is", "was", "are", "were", "be", "been"};
  return kSet;
}

// words that look like past participles but are not verbs here
const std::unordered_set<std::string>& morphology_exceptions() {
  static const std::unordered_set<std::string> kSet = {
      "need", "speed", "hundred", "thousand", "indeed", "sacred", "red",
      "united", "beloved", "wicked", "thing", "king", "ring", "spring",
      "string", "during", "evening", "morning", "something", "nothing",
      "anything", "everything", "being"};
  return kSet;
}

bool is_upper(char c) { return c >= 'A' && c <= 'Z'; }
bool is_digit_c(char c) { return c >= '0' && c <= '9'; }
bool is_alnum_c(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

struct Token {
  std::string text;
  int start = 0;
  int end = 0;
  int sentence = 0;
  bool sentence_initial = false;
};

bool all_digits(const std::string& s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return is_digit_c(c); });
}

bool is_number_token(const std::string& s) {
  if (s.empty()) return false;
  bool seen_digit = false;
  for (char c : s) {
    if (is_digit_c(c)) {
      seen_digit = true;
    } else if (c != '.') {
      return false;
    }
  }
  return seen_digit;
}

// Tokens are runs of alphanumerics plus apostrophes; '.' joins digit pairs
// ("3.14") and '-' joins alphanumeric pairs ("black-and-white").
std::vector<Token> tokenize(const std::string& text) {
  std::vector<Token> tokens;
  const int n = static_cast<int>(text.size());
  int i = 0;
  while (i < n) {
    char c = text[i];
    bool starts = is_alnum_c(c);
    if (!starts) {
      ++i;
      continue;
    }
    int start = i;
    while (i < n) {
      char cur = text[i];
      if (is_alnum_c(cur) || cur == '\'') {
        ++i;
        continue;
      }
      bool joiner = (cur == '.' || cur == '-') && i > start && i + 1 < n &&
                    is_alnum_c(text[i - 1]) && is_alnum_c(text[i + 1]) &&
                    !(cur == '.' && !is_digit_c(text[i - 1]));
      if (joiner) {
        ++i;
        continue;
      }
      break;
    }
    tokens.push_back({text.substr(start, i - start), start, i, 0, false});
  }
  return tokens;
}

// Sentence boundaries: '.', '!' or '?' (plus trailing quotes/parens) followed
// by whitespace and an upper-case letter, digit, or opening quote/paren.
std::vector<int> sentence_starts(const std::string& text) {
  std::vector<int> starts = {0};
  const int n = static_cast<int>(text.size());
  for (int i = 0; i < n; ++i) {
    char c = text[i];
    if (c != '.' && c != '!' && c != '?') continue;
    int j = i + 1;
    while (j < n && (text[j] == '"' || text[j] == '\'' || text[j] == ')')) ++j;
    int ws = j;
    while (ws < n && std::isspace(static_cast<unsigned char>(text[ws]))) ++ws;
    if (ws == j || ws >= n) continue;
    char next = text[ws];
    if (is_upper(next) || is_digit_c(next) || next == '"' || next == '\'' || next == '(') {
      starts.push_back(ws);
    }
  }
  return starts;
}

void assign_sentences(std::vector<Token>& tokens, const std::vector<int>& starts) {
  size_t s = 0;
  int prev_sentence = -1;
  for (auto& tok : tokens) {
    while (s + 1 < starts.size() && tok.start >= starts[s + 1]) ++s;
    tok.sentence = static_cast<int>(s);
    tok.sentence_initial = (tok.sentence != prev_sentence);
    prev_sentence = tok.sentence;
  }
}

struct Hit {
  std::string surface;
  MentionKind kind = MentionKind::Named;
  int start = 0;
  int end = 0;
  int sentence = 0;
  bool parenthesized = false;
  bool quoted = false;
};

bool is_stopword(const std::string& token) {
  return stopwords().count(to_lower(token)) > 0;
}

bool token_followed_by_colon(const std::string& text, const Token& tok) {
  return tok.end < static_cast<int>(text.size()) && text[tok.end] == ':';
}

int sentence_of_offset(const std::vector<int>& starts, int offset) {
  int s = 0;
  while (s + 1 < static_cast<int>(starts.size()) && offset >= starts[s + 1]) ++s;
  return s;
}

void mark_wrapping(const std::string& text, Hit& hit) {
  int before = hit.start - 1;
  int after = hit.end;
  while (before >= 0 && (text[before] == '"' || text[before] == '\'')) --before;
  while (after < static_cast<int>(text.size()) && (text[after] == '"' || text[after] == '\'')) ++after;
  hit.parenthesized = before >= 0 && text[before] == '(' &&
                      after < static_cast<int>(text.size()) && text[after] == ')';
}

class ClaimSet {
 public:
  bool overlaps(int start, int end) const {
    for (const auto& [s, e] : claims_) {
      if (start < e && s < end) return true;
    }
    return false;
  }
  void add(int start, int end) { claims_.emplace_back(start, end); }

 private:
  std::vector<std::pair<int, int>> claims_;
};

bool quote_opens(const std::string& text, int i) {
  char c = text[i];
  if (c == '"') return true;
  if (c != '\'') return false;
  bool prev_ok = i == 0 || !is_alnum_c(text[i - 1]);
  bool next_ok = i + 1 < static_cast<int>(text.size()) && is_alnum_c(text[i + 1]);
  return prev_ok && next_ok;
}

bool quote_closes(const std::string& text, int i, char open) {
  char c = text[i];
  if (open == '"') return c == '"';
  if (c != '\'') return false;
  bool prev_ok = i > 0 && is_alnum_c(text[i - 1]);
  bool next_ok = i + 1 >= static_cast<int>(text.size()) || !is_alnum_c(text[i + 1]);
  return prev_ok && next_ok;
}

// Quoted title spans: 1..8 tokens with at least one capitalized word.
void collect_quoted(const std::string& text, const std::vector<int>& starts,
                    std::vector<Hit>& hits, ClaimSet& claims) {
  const int n = static_cast<int>(text.size());
  for (int i = 0; i < n; ++i) {
    if (!quote_opens(text, i)) continue;
    char open = text[i];
    int j = i + 1;
    while (j < n && !quote_closes(text, j, open)) ++j;
    if (j >= n) continue;
    std::string content = trim(text.substr(i + 1, j - i - 1));
    if (content.empty()) {
      i = j;
      continue;
    }
    auto words = whitespace_tokens(content);
    bool has_cap = std::any_of(words.begin(), words.end(),
                               [](const std::string& w) { return is_upper(w[0]); });
    if (words.size() >= 1 && words.size() <= 8 && has_cap && !claims.overlaps(i + 1, j)) {
      Hit hit{content, MentionKind::Named, i + 1, j, sentence_of_offset(starts, i), false, true};
      mark_wrapping(text, hit);
      hit.quoted = true;
      hits.push_back(hit);
      claims.add(i + 1, j);
    }
    i = j;
  }
}

// Years 1000-2999, month and weekday names, and "<number> BC|AD".
void collect_temporal(const std::string& text, const std::vector<Token>& tokens,
                      std::vector<Hit>& hits, ClaimSet& claims) {
  for (size_t t = 0; t < tokens.size(); ++t) {
    const Token& tok = tokens[t];
    if (claims.overlaps(tok.start, tok.end)) continue;
    if (all_digits(tok.text)) {
      if (t + 1 < tokens.size() &&
          (tokens[t + 1].text == "BC" || tokens[t + 1].text == "AD") &&
          tok.text.size() <= 4 && !claims.overlaps(tokens[t + 1].start, tokens[t + 1].end)) {
        Hit hit{text.substr(tok.start, tokens[t + 1].end - tok.start), MentionKind::Temporal,
                tok.start, tokens[t + 1].end, tok.sentence, false, false};
        mark_wrapping(text, hit);
        hits.push_back(hit);
        claims.add(tok.start, tokens[t + 1].end);
        continue;
      }
      if (tok.text.size() == 4) {
        int year = std::stoi(tok.text);
        if (year >= 1000 && year <= 2999) {
          Hit hit{tok.text, MentionKind::Temporal, tok.start, tok.end, tok.sentence, false, false};
          mark_wrapping(text, hit);
          hits.push_back(hit);
          claims.add(tok.start, tok.end);
        }
      }
      continue;
    }
    if (is_upper(tok.text[0])) {
      std::string lower = to_lower(tok.text);
      if (month_names().count(lower) || weekday_names().count(lower)) {
        Hit hit{tok.text, MentionKind::Temporal, tok.start, tok.end, tok.sentence, false, false};
        mark_wrapping(text, hit);
        hits.push_back(hit);
        claims.add(tok.start, tok.end);
      }
    }
  }
}

bool adjacent_in_text(const std::string& text, const Token& a, const Token& b) {
  if (b.start < a.end) return false;
  for (int i = a.end; i < b.start; ++i) {
    if (!std::isspace(static_cast<unsigned char>(text[i]))) return false;
  }
  return true;
}

// Maximal capitalized token runs. Runs made only of stopwords or single
// letters are dropped, which also discards bare sentence-initial "The"/"He".
void collect_capitalized_runs(const std::string& text, const std::vector<Token>& tokens,
                              std::vector<Hit>& hits, ClaimSet& claims) {
  const size_t n = tokens.size();
  size_t t = 0;
  while (t < n) {
    const Token& tok = tokens[t];
    bool usable = is_upper(tok.text.empty() ? ' ' : tok.text[0]) &&
                  !claims.overlaps(tok.start, tok.end) &&
                  !token_followed_by_colon(text, tok);
    if (!usable) {
      ++t;
      continue;
    }
    size_t run_end = t + 1;
    while (run_end < n) {
      const Token& next = tokens[run_end];
      if (!is_upper(next.text[0]) || claims.overlaps(next.start, next.end) ||
          token_followed_by_colon(text, next) ||
          !adjacent_in_text(text, tokens[run_end - 1], next)) {
        break;
      }
      run_end = run_end + 1;
    }
    bool substantive = false;
    for (size_t k = t; k < run_end; ++k) {
      const std::string& w = tokens[k].text;
      if (w.size() > 1 && !is_stopword(w) && !is_number_token(w)) substantive = true;
    }
    if (substantive) {
      int start = tokens[t].start;
      int end = tokens[run_end - 1].end;
      Hit hit{text.substr(start, end - start), MentionKind::Named, start, end,
              tokens[t].sentence, false, false};
      mark_wrapping(text, hit);
      hits.push_back(hit);
      claims.add(start, end);
    }
    t = run_end;
  }
}

void collect_numeric(const std::string& text, const std::vector<Token>& tokens,
                     std::vector<Hit>& hits, ClaimSet& claims) {
  for (const Token& tok : tokens) {
    if (!is_number_token(tok.text)) continue;
    if (claims.overlaps(tok.start, tok.end)) continue;
    Hit hit{tok.text, MentionKind::Numeric, tok.start, tok.end, tok.sentence, false, false};
    mark_wrapping(text, hit);
    hits.push_back(hit);
    claims.add(tok.start, tok.end);
  }
}

std::vector<Hit> collect_hits(const std::string& text) {
  std::vector<Hit> hits;
  ClaimSet claims;
  auto tokens = tokenize(text);
  auto starts = sentence_starts(text);
  assign_sentences(tokens, starts);
  collect_quoted(text, starts, hits, claims);
  collect_temporal(text, tokens, hits, claims);
  collect_capitalized_runs(text, tokens, hits, claims);
  collect_numeric(text, tokens, hits, claims);
  std::sort(hits.begin(), hits.end(),
            [](const Hit& a, const Hit& b) { return std::tie(a.start, a.end) < std::tie(b.start, b.end); });
  return hits;
}

std::string strip_suffix_lemma(const std::string& verb) {
  static const std::unordered_map<std::string, std::string> kIrregular = {
      {"met", "met"},     {"won", "won"},     {"died", "die"},   {"wrote", "write"},
      {"made", "make"},   {"said", "say"},    {"became", "become"}, {"led", "led"},
      {"gave", "give"},   {"took", "take"},   {"ran", "run"},    {"held", "held"},
      {"sang", "sing"},   {"built", "built"}, {"beat", "beat"},  {"starred", "star"},
      {"starring", "star"}};
  auto it = kIrregular.find(verb);
  if (it != kIrregular.end()) return it->second;
  if (morphology_exceptions().count(verb)) return verb;
  if (verb.size() >= 5 && verb.ends_with("ing")) return verb.substr(0, verb.size() - 3);
  if (verb.size() >= 4 && verb.ends_with("ied")) return verb.substr(0, verb.size() - 3) + "y";
  if (verb.size() >= 4 && verb.ends_with("ed")) return verb.substr(0, verb.size() - 2);
  if (verb.size() >= 4 && verb.ends_with("s") && !verb.ends_with("ss"))
    return verb.substr(0, verb.size() - 1);
  return verb;
}

bool verb_like(const std::string& lower) {
  if (common_verbs().count(lower)) return true;
  if (morphology_exceptions().count(lower)) return false;
  if (is_stopword(lower)) return false;
  if (lower.size() >= 4 && lower.ends_with("ed")) return true;
  if (lower.size() >= 5 && lower.ends_with("ing")) return true;
  return false;
}

struct BetweenClassification {
  std::string label;       // empty when no relation
  bool verb_derived = false;
};

// Ordered rule lexicon over the text between two consecutive mentions.
BetweenClassification classify_between(const std::vector<std::string>& tokens,
                                       bool right_wrapped) {
  const size_t n = tokens.size();
  if (n > 10) return {};
  auto joined = [&] {
    std::string s;
    for (const auto& t : tokens) {
      if (!s.empty()) s += ' ';
      s += t;
    }
    return s;
  }();
  if (joined.find("known as") != std::string::npos || joined == "aka" ||
      joined.find(" aka ") != std::string::npos || joined.rfind("aka ", 0) == 0) {
    return {"dep:alias", false};
  }
  if (joined.find("known by") != std::string::npos) return {"dep:attr", false};
  if (n == 0) {
    if (right_wrapped) return {"appos", false};
    return {};
  }
  for (size_t i = 0; i + 1 < n; ++i) {
    if (tokens[i + 1] == "by" && verb_like(tokens[i]) && tokens[i].ends_with("ed")) {
      return {tokens[i] + "_by", true};
    }
  }
  for (size_t i = 0; i + 1 < n; ++i) {
    if (tokens[i] == "to" && !is_stopword(tokens[i + 1]) && !is_number_token(tokens[i + 1])) {
      return {strip_suffix_lemma(tokens[i + 1]), true};
    }
  }
  if (copulas().count(tokens[0])) return {"dep:attr", false};
  if (prepositions().count(tokens[0]) && n <= 4) return {"prep:" + tokens[0], false};
  for (const auto& tok : tokens) {
    if (verb_like(tok)) return {strip_suffix_lemma(tok), true};
  }
  return {};
}

std::vector<std::string> lower_tokens_between(const std::string& text, int start, int end) {
  std::vector<std::string> out;
  if (start >= end) return out;
  for (const auto& tok : whitespace_tokens(text.substr(start, end - start))) {
    std::string cleaned;
    for (char c : tok) {
      if (is_alnum_c(c) || c == '-' || c == '\'') cleaned += c;
    }
    if (!cleaned.empty()) out.push_back(to_lower(cleaned));
  }
  return out;
}

}  // namespace

std::string_view mention_kind_name(MentionKind kind) {
  return kMentionKindNames[static_cast<int>(kind)];
}

MentionKind mention_kind_from_name(std::string_view name) {
  for (int i = 0; i < 3; ++i) {
    if (kMentionKindNames[i] == name) return static_cast<MentionKind>(i);
  }
  throw DataError("unknown mention kind: " + std::string(name));
}

std::string_view cue_name(CueCategory cue) { return kCueNames[static_cast<int>(cue)]; }

CueCategory cue_from_name(std::string_view name) {
  for (int i = 0; i < kCueCategoryCount; ++i) {
    if (kCueNames[i] == name) return static_cast<CueCategory>(i);
  }
  throw DataError("unknown cue category: " + std::string(name));
}

std::vector<EntityMention> extract_entities(const std::string& text) {
  std::vector<EntityMention> mentions;
  std::unordered_map<std::string, size_t> by_key;
  for (const Hit& hit : collect_hits(text)) {
    std::string key = to_lower(hit.surface);
    auto it = by_key.find(key);
    if (it == by_key.end()) {
      by_key.emplace(key, mentions.size());
      mentions.push_back({hit.surface, hit.kind, 1, {{hit.start, hit.end}}});
    } else {
      EntityMention& m = mentions[it->second];
      m.frequency += 1;
      m.spans.emplace_back(hit.start, hit.end);
    }
  }
  return mentions;
}

std::vector<RelationTriple> extract_triples(const std::string& text,
                                            const std::vector<EntityMention>& entities) {
  std::unordered_map<std::string, const EntityMention*> canon;
  for (const auto& m : entities) canon.emplace(to_lower(m.surface), &m);

  auto hits = collect_hits(text);
  std::vector<Hit> kept;
  for (auto& h : hits) {
    if (canon.count(to_lower(h.surface))) kept.push_back(h);
  }

  // Pre-compute, per sentence, the first verb-like token offset and the first
  // named hit before it (the subject). Verb triples whose head is a temporal
  // or numeric mention are re-attached there, or to the document topic
  // (first named mention) when the sentence subject is not an entity.
  std::map<int, int> first_verb_offset;
  {
    auto tokens = tokenize(text);
    auto starts = sentence_starts(text);
    assign_sentences(tokens, starts);
    for (const auto& tok : tokens) {
      if (verb_like(to_lower(tok.text)) && !first_verb_offset.count(tok.sentence)) {
        first_verb_offset[tok.sentence] = tok.start;
      }
    }
  }
  const EntityMention* topic = nullptr;
  for (const auto& h : kept) {
    if (h.kind == MentionKind::Named) {
      topic = canon.at(to_lower(h.surface));
      break;
    }
  }
  auto sentence_subject = [&](int sentence) -> const EntityMention* {
    auto it = first_verb_offset.find(sentence);
    for (const auto& h : kept) {
      if (h.sentence != sentence || h.kind != MentionKind::Named) continue;
      if (it == first_verb_offset.end() || h.start < it->second) {
        return canon.at(to_lower(h.surface));
      }
      break;
    }
    return nullptr;
  };

  std::vector<RelationTriple> triples;
  std::unordered_set<std::string> seen;
  auto emit = [&](const std::string& head, const std::string& label, const std::string& tail,
                  std::pair<int, int> span) {
    if (to_lower(head) == to_lower(tail)) return;
    std::string key = to_lower(head) + "\x1f" + label + "\x1f" + to_lower(tail);
    if (!seen.insert(key).second) return;
    triples.push_back({head, label, tail, span});
  };

  for (size_t i = 0; i + 1 < kept.size(); ++i) {
    const Hit& left = kept[i];
    const Hit& right = kept[i + 1];
    if (left.sentence != right.sentence) continue;
    auto between = lower_tokens_between(text, left.end, right.start);
    bool wrapped = right.parenthesized || right.quoted;
    auto cls = classify_between(between, wrapped);
    if (cls.label.empty()) continue;

    const EntityMention* head = canon.at(to_lower(left.surface));
    const EntityMention* tail = canon.at(to_lower(right.surface));
    if (cls.verb_derived && head->kind != MentionKind::Named) {
      const EntityMention* subject = sentence_subject(left.sentence);
      if (subject == nullptr) subject = topic;
      if (subject == nullptr) continue;
      head = subject;
    }
    emit(head->surface, cls.label, tail->surface, {left.start, right.end});
  }
  return triples;
}

std::set<CueCategory> question_type_cues(const std::string& question) {
  static const std::pair<std::string_view, CueCategory> kCues[] = {
      {"which", CueCategory::EntityChoice}, {"where", CueCategory::Location},
      {"who", CueCategory::Person},         {"when", CueCategory::Time},
      {"why", CueCategory::Reason},         {"how", CueCategory::Manner},
      {"whether", CueCategory::YesNo},
  };
  std::set<CueCategory> out;
  for (const auto& tok : whitespace_tokens(to_lower(question))) {
    std::string word;
    for (char c : tok) {
      if (is_alnum_c(c)) word += c;
    }
    for (const auto& [cue, category] : kCues) {
      if (word == cue) out.insert(category);
    }
  }
  return out;
}

std::set<CueCategory> cues_from_type_string(const std::string& type_string) {
  std::set<CueCategory> out = question_type_cues(type_string);
  std::string lower = to_lower(type_string);
  for (int i = 0; i < kCueCategoryCount; ++i) {
    if (lower.find(std::string(kCueNames[i])) != std::string::npos) {
      out.insert(static_cast<CueCategory>(i));
    }
  }
  return out;
}

}  // namespace agentrouter::extract
