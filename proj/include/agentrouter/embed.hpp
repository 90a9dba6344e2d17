#pragma once

#include "agentrouter/common.hpp"
#include "agentrouter/extract.hpp"

#include <map>
#include <set>
#include <string>

namespace agentrouter::graph {
class KnowledgeGraph;
}

namespace agentrouter::embed {

inline constexpr int kKindOnehotDim = 4;
// [log1p(frequency), mention-kind one-hot (3), question-cue multi-hot (7)]
inline constexpr int kAuxDim = 1 + 3 + extract::kCueCategoryCount;

inline constexpr int feature_dim(int d_text) { return d_text + kKindOnehotDim + kAuxDim; }

/// Signed feature hashing of character 3-5 grams of the case-folded text,
/// L2-normalized. Deterministic in (text, d_text, seed); empty text maps to
/// the zero vector.
Vector embed_text(const std::string& text, int d_text, std::uint64_t seed);

/// Tab-separated import file: `text<TAB>v1,v2,...,vd`. All rows must share
/// one dimension.
std::map<std::string, Vector> import_embeddings(const std::filesystem::path& path);

/// Text-embedding source: imported vectors win on exact payload match,
/// everything else is hashed.
class EmbeddingProvider {
 public:
  EmbeddingProvider(int d_text, std::uint64_t seed) : d_text_(d_text), seed_(seed) {}

  void load_imports(const std::filesystem::path& path);
  void set_imports(std::map<std::string, Vector> imports);

  Vector operator()(const std::string& text) const;
  int d_text() const { return d_text_; }

 private:
  int d_text_;
  std::uint64_t seed_;
  std::map<std::string, Vector> imports_;
};

/// One feature column per node: [text embedding | kind one-hot | aux].
/// Entity nodes carry frequency and mention-kind aux, the query node carries
/// the cue multi-hot, agent and relation aux stay zero.
Matrix featurize(const graph::KnowledgeGraph& g, const EmbeddingProvider& provider,
                 const std::set<extract::CueCategory>& cues);

}  // namespace agentrouter::embed
