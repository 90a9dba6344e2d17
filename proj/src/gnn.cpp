#include "agentrouter/gnn.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <random>

namespace agentrouter::gnn {

using nlohmann::json;

namespace {

constexpr std::string_view kMessageKindNames[kMessageKindCount] = {
    "query_entity", "inc_src", "inc_tgt", "agent_entity",
    "query_agent",  "entity_query", "entity_agent", "agent_query"};

constexpr std::uint32_t kCheckpointVersion = 1;
constexpr char kMagic[8] = {'A', 'R', 'T', 'R', 'C', 'K', 'P', 'T'};

double glorot_bound(int fan_in, int fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

void fill_glorot(Matrix& m, std::mt19937_64& rng) {
  const double bound = glorot_bound(static_cast<int>(m.cols()), static_cast<int>(m.rows()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      m(r, c) = (2.0 * uniform_unit(rng()) - 1.0) * bound;
    }
  }
}

}  // namespace

std::string_view message_kind_name(MessageKind kind) {
  return kMessageKindNames[static_cast<int>(kind)];
}

ModelParams ModelParams::zeros_like() const {
  ModelParams out;
  out.dims = dims;
  out.agent_order = agent_order;
  for (int k = 0; k < graph::kNodeKindCount; ++k) {
    out.input_proj[k] = Matrix::Zero(dims.d_h, dims.d_in);
  }
  out.message_weight.resize(dims.layers);
  out.gate.resize(dims.layers);
  out.update_weight.resize(dims.layers);
  out.update_bias.resize(dims.layers);
  for (int l = 0; l < dims.layers; ++l) {
    for (int m = 0; m < kMessageKindCount; ++m) {
      out.message_weight[l][m] = Matrix::Zero(dims.d_h, dims.d_h);
    }
    out.gate[l] = Vector::Zero(kMessageKindCount);
    for (int k = 0; k < graph::kNodeKindCount; ++k) {
      out.update_weight[l][k] = Matrix::Zero(dims.d_h, 2 * dims.d_h);
      out.update_bias[l][k] = Vector::Zero(dims.d_h);
    }
  }
  out.head_w1 = Matrix::Zero(dims.d_h, 2 * dims.d_h);
  out.head_b1 = Vector::Zero(dims.d_h);
  out.head_w2 = Matrix::Zero(1, dims.d_h);
  out.head_b2 = Vector::Zero(1);
  return out;
}

std::size_t ModelParams::parameter_count() const {
  std::size_t count = 0;
  for_each_tensor(const_cast<ModelParams&>(*this),
                  [&](const std::string&, Eigen::Ref<Matrix> t) { count += t.size(); });
  return count;
}

ModelParams init_params(std::uint64_t seed, const Dims& dims,
                        std::vector<std::string> agent_order) {
  if (dims.d_in <= 0 || dims.d_h <= 0 || dims.layers <= 0) {
    throw DataError("init_params: dims must be positive");
  }
  ModelParams params;
  params.dims = dims;
  params.agent_order = std::move(agent_order);
  ModelParams zero = params.zeros_like();
  params.input_proj = zero.input_proj;
  params.message_weight = zero.message_weight;
  params.gate = zero.gate;
  params.update_weight = zero.update_weight;
  params.update_bias = zero.update_bias;
  params.head_w1 = zero.head_w1;
  params.head_b1 = zero.head_b1;
  params.head_w2 = zero.head_w2;
  params.head_b2 = zero.head_b2;

  std::mt19937_64 rng(seed);
  for (int k = 0; k < graph::kNodeKindCount; ++k) fill_glorot(params.input_proj[k], rng);
  for (int l = 0; l < dims.layers; ++l) {
    for (int m = 0; m < kMessageKindCount; ++m) fill_glorot(params.message_weight[l][m], rng);
    params.gate[l].setOnes();
    for (int k = 0; k < graph::kNodeKindCount; ++k) fill_glorot(params.update_weight[l][k], rng);
  }
  fill_glorot(params.head_w1, rng);
  fill_glorot(params.head_w2, rng);
  return params;
}

Adjacency build_adjacency(const graph::KnowledgeGraph& g) {
  Adjacency adj;
  const int n = static_cast<int>(g.nodes.size());
  for (auto& per_kind : adj.in) per_kind.assign(n, {});
  auto add = [&](MessageKind kind, int src, int dst) {
    adj.in[static_cast<int>(kind)][dst].push_back(src);
  };
  for (const auto& e : g.edges) {
    switch (e.kind) {
      case graph::EdgeKind::QueryEntity:
        add(MessageKind::QueryEntity, e.src, e.dst);
        add(MessageKind::EntityQuery, e.dst, e.src);
        break;
      case graph::EdgeKind::IncSrc:
        add(MessageKind::IncSrc, e.src, e.dst);
        break;
      case graph::EdgeKind::IncTgt:
        add(MessageKind::IncTgt, e.src, e.dst);
        break;
      case graph::EdgeKind::AgentEntity:
        add(MessageKind::AgentEntity, e.src, e.dst);
        add(MessageKind::EntityAgent, e.dst, e.src);
        break;
      case graph::EdgeKind::QueryAgent:
        add(MessageKind::QueryAgent, e.src, e.dst);
        add(MessageKind::AgentQuery, e.dst, e.src);
        break;
    }
  }
  for (auto& per_kind : adj.in) {
    for (auto& sources : per_kind) std::sort(sources.begin(), sources.end());
  }
  return adj;
}

namespace {

// Shared layer computation; fills the per-kind neighbor means and the gated
// aggregate when trace buffers are supplied.
Matrix run_layer(const graph::KnowledgeGraph& g, const Adjacency& adj, const Matrix& h_prev,
                 const ModelParams& params, int layer,
                 std::array<Matrix, kMessageKindCount>* neighbor_mean_out,
                 Matrix* aggregate_out) {
  const int n = static_cast<int>(g.nodes.size());
  const int d_h = params.dims.d_h;

  Matrix aggregate = Matrix::Zero(d_h, n);
  for (int m = 0; m < kMessageKindCount; ++m) {
    Matrix mean = Matrix::Zero(d_h, n);
    bool any = false;
    for (int v = 0; v < n; ++v) {
      const auto& sources = adj.in[m][v];
      if (sources.empty()) continue;
      any = true;
      Vector acc = Vector::Zero(d_h);
      for (int u : sources) acc += h_prev.col(u);
      mean.col(v) = acc / static_cast<double>(sources.size());
    }
    if (any) {
      aggregate.noalias() += params.gate[layer][m] * (params.message_weight[layer][m] * mean);
    }
    if (neighbor_mean_out != nullptr) (*neighbor_mean_out)[m] = std::move(mean);
  }
  if (aggregate_out != nullptr) *aggregate_out = aggregate;

  Matrix h_next(d_h, n);
  Vector concat(2 * d_h);
  for (int v = 0; v < n; ++v) {
    concat.head(d_h) = h_prev.col(v);
    concat.tail(d_h) = aggregate.col(v);
    const int kind = static_cast<int>(g.nodes[v].kind);
    h_next.col(v) =
        (params.update_weight[layer][kind] * concat + params.update_bias[layer][kind])
            .cwiseMax(0.0);
  }
  return h_next;
}

}  // namespace

Matrix message_pass_layer(const graph::KnowledgeGraph& g, const Matrix& h_prev,
                          const ModelParams& params, int layer) {
  if (layer < 0 || layer >= params.dims.layers) throw DataError("message_pass_layer: bad layer");
  Adjacency adj = build_adjacency(g);
  return run_layer(g, adj, h_prev, params, layer, nullptr, nullptr);
}

ForwardTrace forward(const graph::KnowledgeGraph& g, const Matrix& features,
                     const ModelParams& params) {
  const int n = static_cast<int>(g.nodes.size());
  if (features.cols() != n || features.rows() != params.dims.d_in) {
    throw DataError("forward: feature matrix must be d_in x node-count");
  }
  if (!params.agent_order.empty() && params.agent_order != g.agent_order()) {
    throw DataError("forward: graph agent order does not match model agent order");
  }
  const int d_h = params.dims.d_h;
  Adjacency adj = build_adjacency(g);

  ForwardTrace trace;
  trace.hidden.resize(params.dims.layers + 1);
  trace.neighbor_mean.resize(params.dims.layers);
  trace.gated_aggregate.resize(params.dims.layers);

  Matrix h0(d_h, n);
  for (int v = 0; v < n; ++v) {
    h0.col(v) = params.input_proj[static_cast<int>(g.nodes[v].kind)] * features.col(v);
  }
  if (!h0.allFinite()) throw NumericError("forward: non-finite values at input projection");
  trace.hidden[0] = std::move(h0);

  for (int l = 0; l < params.dims.layers; ++l) {
    trace.hidden[l + 1] = run_layer(g, adj, trace.hidden[l], params, l,
                                    &trace.neighbor_mean[l], &trace.gated_aggregate[l]);
    if (!trace.hidden[l + 1].allFinite()) {
      throw NumericError("forward: non-finite values at layer " + std::to_string(l + 1));
    }
  }

  const auto agents = g.agent_nodes();
  const int query = g.query_node();
  const Matrix& h_final = trace.hidden[params.dims.layers];
  trace.head_pre.resize(d_h, static_cast<int>(agents.size()));
  trace.scores.resize(static_cast<int>(agents.size()));
  Vector concat(2 * d_h);
  for (size_t j = 0; j < agents.size(); ++j) {
    concat.head(d_h) = h_final.col(query);
    concat.tail(d_h) = h_final.col(agents[j]);
    Vector pre = params.head_w1 * concat + params.head_b1;
    trace.head_pre.col(static_cast<int>(j)) = pre;
    trace.scores[static_cast<int>(j)] =
        (params.head_w2 * pre.cwiseMax(0.0))(0) + params.head_b2(0);
  }
  if (!trace.scores.allFinite()) {
    throw NumericError("forward: non-finite values at scoring head");
  }
  trace.probs = score_to_distribution(trace.scores);
  return trace;
}

Vector score_to_distribution(const Vector& scores) {
  if (scores.size() == 0) throw DataError("score_to_distribution: empty score vector");
  Vector shifted = scores.array() - scores.maxCoeff();
  Vector exps = shifted.array().exp();
  return exps / exps.sum();
}

namespace {

void write_u32(std::ofstream& out, std::uint32_t v) {
  unsigned char bytes[4];
  for (int i = 0; i < 4; ++i) bytes[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(bytes), 4);
}

void write_u64(std::ofstream& out, std::uint64_t v) {
  unsigned char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(bytes), 8);
}

void write_f64(std::ofstream& out, double d) {
  std::uint64_t bits;
  std::memcpy(&bits, &d, 8);
  write_u64(out, bits);
}

std::uint32_t read_u32(std::ifstream& in) {
  unsigned char bytes[4];
  in.read(reinterpret_cast<char*>(bytes), 4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[i]) << (8 * i);
  return v;
}

std::uint64_t read_u64(std::ifstream& in) {
  unsigned char bytes[8];
  in.read(reinterpret_cast<char*>(bytes), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return v;
}

double read_f64(std::ifstream& in) {
  std::uint64_t bits = read_u64(in);
  double d;
  std::memcpy(&d, &bits, 8);
  return d;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint: " + path.string());
  out.write(kMagic, 8);
  write_u32(out, kCheckpointVersion);

  json header;
  header["format_version"] = kCheckpointVersion;
  header["layers"] = params.dims.layers;
  header["d_h"] = params.dims.d_h;
  header["d_in"] = params.dims.d_in;
  header["node_kinds"] = json::array();
  for (int k = 0; k < graph::kNodeKindCount; ++k) {
    header["node_kinds"].push_back(std::string(graph::node_kind_name(static_cast<graph::NodeKind>(k))));
  }
  header["edge_kinds"] = json::array();
  for (int m = 0; m < kMessageKindCount; ++m) {
    header["edge_kinds"].push_back(std::string(message_kind_name(static_cast<MessageKind>(m))));
  }
  header["agent_order"] = params.agent_order;
  std::string header_text = header.dump();
  write_u64(out, header_text.size());
  out.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));

  std::uint32_t tensor_count = 0;
  for_each_tensor(const_cast<ModelParams&>(params),
                  [&](const std::string&, Eigen::Ref<Matrix>) { ++tensor_count; });
  write_u32(out, tensor_count);
  for_each_tensor(const_cast<ModelParams&>(params),
                  [&](const std::string& name, Eigen::Ref<Matrix> t) {
                    write_u32(out, static_cast<std::uint32_t>(name.size()));
                    out.write(name.data(), static_cast<std::streamsize>(name.size()));
                    write_u64(out, static_cast<std::uint64_t>(t.rows()));
                    write_u64(out, static_cast<std::uint64_t>(t.cols()));
                    for (Eigen::Index r = 0; r < t.rows(); ++r) {
                      for (Eigen::Index c = 0; c < t.cols(); ++c) write_f64(out, t(r, c));
                    }
                  });
  if (!out) throw DataError("short write on checkpoint: " + path.string());
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path.string());
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0) {
    throw DataError("not a checkpoint file: " + path.string());
  }
  std::uint32_t version = read_u32(in);
  if (version != kCheckpointVersion) {
    throw DataError("unsupported checkpoint version " + std::to_string(version));
  }
  std::uint64_t header_size = read_u64(in);
  std::string header_text(header_size, '\0');
  in.read(header_text.data(), static_cast<std::streamsize>(header_size));
  json header = json::parse(header_text, nullptr, false);
  if (header.is_discarded()) throw DataError("checkpoint header is malformed");

  Dims dims;
  dims.layers = header.at("layers").get<int>();
  dims.d_h = header.at("d_h").get<int>();
  dims.d_in = header.at("d_in").get<int>();
  ModelParams params;
  params.dims = dims;
  params.agent_order = header.at("agent_order").get<std::vector<std::string>>();
  params = params.zeros_like();

  std::uint32_t tensor_count = read_u32(in);
  std::uint32_t seen = 0;
  for_each_tensor(params, [&](const std::string& name, Eigen::Ref<Matrix> t) {
    std::uint32_t name_size = read_u32(in);
    std::string stored(name_size, '\0');
    in.read(stored.data(), name_size);
    if (stored != name) {
      throw DataError("checkpoint tensor mismatch: expected " + name + ", found " + stored);
    }
    auto rows = static_cast<Eigen::Index>(read_u64(in));
    auto cols = static_cast<Eigen::Index>(read_u64(in));
    if (rows != t.rows() || cols != t.cols()) {
      throw DataError("checkpoint tensor " + name + " has unexpected shape");
    }
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) t(r, c) = read_f64(in);
    }
    ++seen;
  });
  if (!in || seen != tensor_count) {
    throw DataError("checkpoint is truncated or has extra tensors: " + path.string());
  }
  return params;
}

}  // namespace agentrouter::gnn
