#include "agentrouter/embed.hpp"

#include "agentrouter/graph.hpp"

#include <cmath>

namespace agentrouter::embed {

Vector embed_text(const std::string& text, int d_text, std::uint64_t seed) {
  if (d_text < 8) throw DataError("embed_text: d_text must be >= 8");
  Vector v = Vector::Zero(d_text);
  std::string folded = to_lower(text);
  if (folded.empty()) return v;

  auto add_gram = [&](std::string_view gram) {
    std::uint64_t h = fnv1a64(gram, seed);
    int bucket = static_cast<int>(h % static_cast<std::uint64_t>(d_text));
    double sign = (h >> 63) ? -1.0 : 1.0;
    v[bucket] += sign;
  };

  const size_t n = folded.size();
  bool any = false;
  for (size_t len = 3; len <= 5; ++len) {
    if (n < len) continue;
    for (size_t i = 0; i + len <= n; ++i) {
      add_gram(std::string_view(folded).substr(i, len));
      any = true;
    }
  }
  if (!any) add_gram(folded);  // strings shorter than 3 chars hash whole

  double norm = v.norm();
  if (norm > 0.0) v /= norm;
  return v;
}

std::map<std::string, Vector> import_embeddings(const std::filesystem::path& path) {
  std::map<std::string, Vector> out;
  int expected_dim = -1;
  for_each_line(path, [&](int lineno, const std::string& line) {
    size_t tab = line.find('\t');
    if (tab == std::string::npos) {
      throw DataError(path.filename().string() + ": row " + std::to_string(lineno) +
                      ": expected text<TAB>values");
    }
    std::string text = line.substr(0, tab);
    auto parts = split(line.substr(tab + 1), ',');
    Vector v(static_cast<int>(parts.size()));
    for (size_t i = 0; i < parts.size(); ++i) {
      try {
        v[static_cast<int>(i)] = std::stod(parts[i]);
      } catch (const std::exception&) {
        throw DataError(path.filename().string() + ": row " + std::to_string(lineno) +
                        ": bad number '" + parts[i] + "'");
      }
    }
    if (expected_dim < 0) {
      expected_dim = static_cast<int>(v.size());
    } else if (static_cast<int>(v.size()) != expected_dim) {
      throw DataError(path.filename().string() + ": row " + std::to_string(lineno) + ": dim " +
                      std::to_string(v.size()) + " != " + std::to_string(expected_dim));
    }
    out[text] = std::move(v);
  });
  return out;
}

void EmbeddingProvider::load_imports(const std::filesystem::path& path) {
  set_imports(import_embeddings(path));
}

void EmbeddingProvider::set_imports(std::map<std::string, Vector> imports) {
  for (const auto& [text, v] : imports) {
    if (static_cast<int>(v.size()) != d_text_) {
      throw DataError("imported embedding for '" + text + "': dim " + std::to_string(v.size()) +
                      " != " + std::to_string(d_text_));
    }
  }
  imports_ = std::move(imports);
}

Vector EmbeddingProvider::operator()(const std::string& text) const {
  auto it = imports_.find(text);
  if (it != imports_.end()) return it->second;
  return embed_text(text, d_text_, seed_);
}

Matrix featurize(const graph::KnowledgeGraph& g, const EmbeddingProvider& provider,
                 const std::set<extract::CueCategory>& cues) {
  const int d_text = provider.d_text();
  const int d_in = feature_dim(d_text);
  Matrix features = Matrix::Zero(d_in, static_cast<int>(g.nodes.size()));
  for (const auto& node : g.nodes) {
    Vector col = Vector::Zero(d_in);
    col.head(d_text) = provider(node.text);
    col[d_text + static_cast<int>(node.kind)] = 1.0;
    const int aux0 = d_text + kKindOnehotDim;
    if (node.kind == graph::NodeKind::Entity) {
      col[aux0] = std::log1p(static_cast<double>(node.aux.frequency));
      if (node.aux.mention_kind) {
        col[aux0 + 1 + static_cast<int>(*node.aux.mention_kind)] = 1.0;
      }
    } else if (node.kind == graph::NodeKind::Query) {
      for (auto cue : cues) {
        col[aux0 + 4 + static_cast<int>(cue)] = 1.0;
      }
    }
    features.col(node.id) = col;
  }
  return features;
}

}  // namespace agentrouter::embed
