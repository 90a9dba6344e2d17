#pragma once

#include "agentrouter/common.hpp"

#include <set>
#include <string>
#include <vector>

namespace agentrouter::extract {

enum class MentionKind { Named, Temporal, Numeric };

std::string_view mention_kind_name(MentionKind kind);
MentionKind mention_kind_from_name(std::string_view name);

/// A deduplicated entity mention. The surface keeps the casing of the first
/// occurrence; matching is case-insensitive exact-string.
struct EntityMention {
  std::string surface;
  MentionKind kind = MentionKind::Named;
  int frequency = 0;  // == spans.size()
  std::vector<std::pair<int, int>> spans;  // [start, end) character offsets

  bool operator==(const EntityMention&) const = default;
};

struct RelationTriple {
  std::string head_surface;
  std::string relation_label;
  std::string tail_surface;
  std::pair<int, int> provenance_span{0, 0};

  bool operator==(const RelationTriple&) const = default;
};

/// Question-type cue categories, in the fixed multi-hot order used by the
/// feature layer.
enum class CueCategory {
  EntityChoice,  // which
  Location,      // where
  Person,        // who
  Time,          // when
  Reason,        // why
  Manner,        // how
  YesNo,         // whether
};

inline constexpr int kCueCategoryCount = 7;

std::string_view cue_name(CueCategory cue);
CueCategory cue_from_name(std::string_view name);

/// Named, temporal, and numeric mentions in first-occurrence order,
/// deduplicated case-insensitively with repeat counts.
std::vector<EntityMention> extract_entities(const std::string& text);

/// Relation triples between the given mentions, intra-sentence only.
/// Labels come from the rule lexicon: a verb between the entities, a
/// preposition pattern `prep:<word>`, apposition `appos`, alias `dep:alias`,
/// and attribute `dep:attr`.
std::vector<RelationTriple> extract_triples(const std::string& text,
                                            const std::vector<EntityMention>& entities);

/// Coarse categories derived from interrogative cue tokens in the question.
std::set<CueCategory> question_type_cues(const std::string& question);

/// Cue scan over a dataset-provided free-form type string (also accepts
/// category names verbatim). Used to merge dataset types into the cue set.
std::set<CueCategory> cues_from_type_string(const std::string& type_string);

}  // namespace agentrouter::extract
