#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "ftaed/errors.hpp"
#include "ftaed/graph.hpp"
#include "ftaed/sensor_data.hpp"
#include "ftaed/tensor.hpp"

namespace ftaed {

enum class ModelKind { Mlp, Gcn, StgGcn, StgGat, StgRgcn };

inline const char* model_kind_name(ModelKind k) {
  switch (k) {
    case ModelKind::Mlp: return "mlp";
    case ModelKind::Gcn: return "gcn";
    case ModelKind::StgGcn: return "stg_gcn";
    case ModelKind::StgGat: return "stg_gat";
    case ModelKind::StgRgcn: return "stg_rgcn";
  }
  return "?";
}

inline ModelKind parse_model_kind(const std::string& s) {
  if (s == "mlp") return ModelKind::Mlp;
  if (s == "gcn") return ModelKind::Gcn;
  if (s == "stg_gcn") return ModelKind::StgGcn;
  if (s == "stg_gat") return ModelKind::StgGat;
  if (s == "stg_rgcn") return ModelKind::StgRgcn;
  fail(ErrorKind::ConfigError, "unknown model '" + s + "'");
}

enum class Activation { ReLU, Sigmoid, Tanh };

inline const char* activation_name(Activation a) {
  switch (a) {
    case Activation::ReLU: return "relu";
    case Activation::Sigmoid: return "sigmoid";
    case Activation::Tanh: return "tanh";
  }
  return "?";
}

inline Activation parse_activation(const std::string& s) {
  if (s == "relu") return Activation::ReLU;
  if (s == "sigmoid") return Activation::Sigmoid;
  if (s == "tanh") return Activation::Tanh;
  fail(ErrorKind::ConfigError, "unknown activation '" + s + "'");
}

struct ModelConfig {
  ModelKind architecture = ModelKind::Gcn;
  int hidden_dim = 64;
  int latent_dim = 128;
  int n_layers = 2;
  double dropout = 0.0;
  double learning_rate = 1e-3;
  int gat_heads = 1;       // GAT only
  int timesteps = 0;       // history length k, STG variants only
  Activation activation = Activation::ReLU;
  bool gat_self_loops = true;
  bool rgcn_learned_norm = false;

  bool is_stg() const {
    return architecture == ModelKind::StgGcn ||
           architecture == ModelKind::StgGat ||
           architecture == ModelKind::StgRgcn;
  }

  // Tuned values per architecture; these are the fixed defaults.
  static ModelConfig defaults_for(ModelKind kind) {
    ModelConfig c;
    c.architecture = kind;
    switch (kind) {
      case ModelKind::Mlp:
        c.hidden_dim = 128;
        c.latent_dim = 2;
        c.learning_rate = 0.0023;
        c.n_layers = 2;
        c.dropout = 0.0;
        break;
      case ModelKind::Gcn:
        c.hidden_dim = 64;
        c.latent_dim = 128;
        c.learning_rate = 0.0047;
        c.n_layers = 2;
        c.dropout = 0.03;
        break;
      case ModelKind::StgGcn:
        // Same tuning as the static GCN, on a 2-step history graph.
        c.hidden_dim = 64;
        c.latent_dim = 128;
        c.learning_rate = 0.0047;
        c.n_layers = 2;
        c.dropout = 0.03;
        c.timesteps = 2;
        break;
      case ModelKind::StgGat:
        c.hidden_dim = 128;
        c.latent_dim = 256;
        c.learning_rate = 0.0004;
        c.n_layers = 1;
        c.dropout = 0.09;
        c.gat_heads = 4;
        c.timesteps = 2;
        break;
      case ModelKind::StgRgcn:
        c.hidden_dim = 128;
        c.latent_dim = 32;
        c.learning_rate = 0.0017;
        c.n_layers = 1;
        c.dropout = 0.45;
        c.timesteps = 8;
        break;
    }
    return c;
  }
};

inline void validate_config(const ModelConfig& c) {
  if (c.latent_dim < 1)
    fail(ErrorKind::ConfigMismatch, "latent_dim must be >= 1");
  if (c.architecture == ModelKind::Mlp && c.latent_dim > 2)
    fail(ErrorKind::ConfigMismatch,
         "mlp latent_dim must be 1 or 2, got " + std::to_string(c.latent_dim));
  if (c.architecture == ModelKind::Mlp && c.n_layers < 2)
    fail(ErrorKind::ConfigMismatch, "mlp needs at least 2 layers");
  if (c.hidden_dim < 1 || c.n_layers < 1)
    fail(ErrorKind::ConfigMismatch, "hidden_dim and n_layers must be >= 1");
  if (c.architecture == ModelKind::StgGat && c.gat_heads < 1)
    fail(ErrorKind::ConfigMismatch, "gat_heads must be >= 1");
  if (c.is_stg() && c.timesteps < 0)
    fail(ErrorKind::ConfigMismatch, "timesteps must be >= 0");
  if (!(c.dropout >= 0.0 && c.dropout < 1.0))
    fail(ErrorKind::ConfigMismatch, "dropout must be in [0, 1)");
}

struct NamedTensor {
  std::string name;
  ad::Tensor t;
};

// A trained or untrained autoencoder: configuration, the graph it runs on
// (spatiotemporal for STG variants) and its parameter tensors in a fixed
// declaration order that the checkpoint format relies on.
struct AutoencoderModel {
  ModelConfig config;
  GraphTopology topo;  // static for MLP/GCN, spatiotemporal otherwise
  std::vector<NamedTensor> params;

  int n_base_nodes() const { return topo.n_base_nodes(); }
  int n_all_nodes() const { return topo.n_nodes; }
  int window_len() const { return config.is_stg() ? config.timesteps + 1 : 1; }

  const ad::Tensor& param(const std::string& name) const {
    for (const auto& p : params)
      if (p.name == name) return p.t;
    fail(ErrorKind::ConfigMismatch, "no parameter named " + name);
  }
};

namespace detail {

inline ad::Tensor glorot(int rows, int cols, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / (rows + cols));
  std::uniform_real_distribution<double> u(-limit, limit);
  ad::Tensor t(rows, cols);
  for (auto& v : t.data) v = static_cast<float>(u(rng));
  return t;
}

// Per-layer feature widths. Graph encoders go input -> hidden -> ... hidden;
// decoders go latent -> hidden -> ... -> output. For GAT the concatenated
// width between layers is heads * hidden.
inline int gat_concat(const ModelConfig& c) {
  return c.gat_heads * c.hidden_dim;
}

}  // namespace detail

// Fresh model with Glorot-uniform weights. `base` must be the static
// freeway topology; STG variants replicate it over timesteps internally.
inline AutoencoderModel init_model(const ModelConfig& config,
                                   const GraphTopology& base,
                                   std::uint64_t seed) {
  validate_config(config);
  if (!base.is_static())
    fail(ErrorKind::ConfigMismatch, "init_model expects the static topology");
  AutoencoderModel m;
  m.config = config;
  m.topo = config.is_stg() ? build_st_topology(base, config.timesteps) : base;

  std::mt19937_64 rng(seed);
  auto add = [&](const std::string& name, int r, int c) {
    m.params.push_back({name, detail::glorot(r, c, rng)});
  };
  auto add_zero = [&](const std::string& name, int r, int c) {
    m.params.push_back({name, ad::Tensor(r, c)});
  };
  const int h = config.hidden_dim;
  const int l = config.latent_dim;
  const int n_all = m.topo.n_nodes;

  switch (config.architecture) {
    case ModelKind::Mlp: {
      int in = kNumFeatures;
      for (int i = 0; i + 1 < config.n_layers; ++i) {
        add("enc" + std::to_string(i) + ".W", in, h);
        add_zero("enc" + std::to_string(i) + ".b", 1, h);
        in = h;
      }
      add("enc" + std::to_string(config.n_layers - 1) + ".W", in, l);
      add_zero("enc" + std::to_string(config.n_layers - 1) + ".b", 1, l);
      int din = l;
      for (int i = 0; i + 1 < config.n_layers; ++i) {
        add("dec" + std::to_string(i) + ".W", din, h);
        add_zero("dec" + std::to_string(i) + ".b", 1, h);
        din = h;
      }
      add("dec" + std::to_string(config.n_layers - 1) + ".W", din, kNumFeatures);
      add_zero("dec" + std::to_string(config.n_layers - 1) + ".b", 1, kNumFeatures);
      break;
    }
    case ModelKind::Gcn:
    case ModelKind::StgGcn: {
      int in = kNumFeatures;
      for (int i = 0; i < config.n_layers; ++i) {
        add("enc" + std::to_string(i) + ".W", in, h);
        in = h;
      }
      add("latent.W", h, l);
      add("expand.W", l, l * n_all);
      int din = l;
      for (int i = 0; i < config.n_layers; ++i) {
        const bool last = i + 1 == config.n_layers;
        add("dec" + std::to_string(i) + ".W", din, last ? kNumFeatures : h);
        din = h;
      }
      break;
    }
    case ModelKind::StgGat: {
      int in = kNumFeatures;
      for (int i = 0; i < config.n_layers; ++i) {
        add("enc" + std::to_string(i) + ".W", in, h);
        for (int g = 0; g < config.gat_heads; ++g)
          add("enc" + std::to_string(i) + ".h" + std::to_string(g) + ".a",
              2 * h, 1);
        in = detail::gat_concat(config);
      }
      add("latent.W", detail::gat_concat(config), l);
      add("expand.W", l, l * n_all);
      int din = l;
      for (int i = 0; i < config.n_layers; ++i) {
        const bool last = i + 1 == config.n_layers;
        const int fout = last ? kNumFeatures : h;
        add("dec" + std::to_string(i) + ".W", din, fout);
        for (int g = 0; g < config.gat_heads; ++g)
          add("dec" + std::to_string(i) + ".h" + std::to_string(g) + ".a",
              2 * fout, 1);
        din = detail::gat_concat(config);
      }
      break;
    }
    case ModelKind::StgRgcn: {
      const int R = m.topo.n_relations;
      int in = kNumFeatures;
      for (int i = 0; i < config.n_layers; ++i) {
        for (int r = 0; r < R; ++r)
          add("enc" + std::to_string(i) + ".rel" + std::to_string(r) + ".W",
              in, h);
        add("enc" + std::to_string(i) + ".self.W", in, h);
        if (config.rgcn_learned_norm)
          for (int r = 0; r < R; ++r)
            m.params.push_back({"enc" + std::to_string(i) + ".norm" +
                                    std::to_string(r),
                                ad::tensor_from(1, 1, {1.0f})});
        in = h;
      }
      add("latent.W", h, l);
      add("expand.W", l, l * n_all);
      int din = l;
      for (int i = 0; i < config.n_layers; ++i) {
        const bool last = i + 1 == config.n_layers;
        const int fout = last ? kNumFeatures : h;
        for (int r = 0; r < R; ++r)
          add("dec" + std::to_string(i) + ".rel" + std::to_string(r) + ".W",
              din, fout);
        add("dec" + std::to_string(i) + ".self.W", din, fout);
        if (config.rgcn_learned_norm)
          for (int r = 0; r < R; ++r)
            m.params.push_back({"dec" + std::to_string(i) + ".norm" +
                                    std::to_string(r),
                                ad::tensor_from(1, 1, {1.0f})});
        din = h;
      }
      break;
    }
  }
  return m;
}

// ---------------------------------------------------------------------------
// Forward plan: graph index structures replicated over a batch
// ---------------------------------------------------------------------------

// Index arrays for message passing over `batch` stacked copies of the graph.
// These depend only on the topology and batch size, so training builds one
// per batch size and reuses it.
struct ForwardPlan {
  int batch = 1;
  int n_all = 0;
  int n_base = 0;

  // Degree-normalized convolution: messages sorted by (center, neighbor).
  std::vector<int> center;
  std::vector<int> neighbor;
  ad::Tensor msg_coeff;   // [M x 1] 1/sqrt(d~i d~j)
  ad::Tensor self_coeff;  // [N x 1] 1/d~i

  // Attention: message list incl. self loops, contiguous per center.
  std::vector<int> att_center;
  std::vector<int> att_neighbor;
  std::vector<int> att_offsets;

  // Relational: per relation class, messages sorted by center.
  std::vector<std::vector<int>> rel_center;
  std::vector<std::vector<int>> rel_neighbor;
  std::vector<ad::Tensor> rel_inv_count;  // [N x 1] 1/|N_i^r|, 0 if empty

  std::vector<int> sample_of_row;  // row -> sample, for pooled means
  std::vector<int> current_rows;   // rows of the current slice, per sample
};

inline ForwardPlan build_forward_plan(const AutoencoderModel& m, int batch) {
  if (batch < 1) fail(ErrorKind::EmptyInput, "batch must be >= 1");
  const GraphTopology& topo = m.topo;
  const int n = topo.n_nodes;
  const int N = n * batch;
  ForwardPlan plan;
  plan.batch = batch;
  plan.n_all = n;
  plan.n_base = topo.n_base_nodes();

  const DirectedMessages msgs = directed_messages(topo);
  const std::vector<int> deg = node_degrees(topo);

  const ModelKind kind = m.config.architecture;
  if (kind == ModelKind::Gcn || kind == ModelKind::StgGcn) {
    const std::size_t M = msgs.size();
    plan.center.resize(M * batch);
    plan.neighbor.resize(M * batch);
    plan.msg_coeff = ad::Tensor(static_cast<int>(M * batch), 1);
    plan.self_coeff = ad::Tensor(N, 1);
    for (int s = 0; s < batch; ++s) {
      for (std::size_t e = 0; e < M; ++e) {
        const int c = msgs.center[e], nb = msgs.neighbor[e];
        plan.center[s * M + e] = c + s * n;
        plan.neighbor[s * M + e] = nb + s * n;
        plan.msg_coeff.data[s * M + e] = static_cast<float>(
            1.0 / std::sqrt(double(deg[c] + 1) * double(deg[nb] + 1)));
      }
      for (int i = 0; i < n; ++i)
        plan.self_coeff.data[s * n + i] =
            static_cast<float>(1.0 / double(deg[i] + 1));
    }
  } else if (kind == ModelKind::StgGat) {
    struct P {
      int c, nb;
    };
    std::vector<P> base;
    for (std::size_t e = 0; e < msgs.size(); ++e)
      base.push_back({msgs.center[e], msgs.neighbor[e]});
    if (m.config.gat_self_loops)
      for (int i = 0; i < n; ++i) base.push_back({i, i});
    std::sort(base.begin(), base.end(), [](const P& a, const P& b) {
      return std::tie(a.c, a.nb) < std::tie(b.c, b.nb);
    });
    for (int s = 0; s < batch; ++s) {
      for (const auto& p : base) {
        plan.att_center.push_back(p.c + s * n);
        plan.att_neighbor.push_back(p.nb + s * n);
      }
    }
    plan.att_offsets.push_back(0);
    for (std::size_t i = 1; i <= plan.att_center.size(); ++i)
      if (i == plan.att_center.size() ||
          plan.att_center[i] != plan.att_center[i - 1])
        plan.att_offsets.push_back(static_cast<int>(i));
  } else if (kind == ModelKind::StgRgcn) {
    const int R = topo.n_relations;
    plan.rel_center.resize(R);
    plan.rel_neighbor.resize(R);
    std::vector<std::vector<int>> count(R, std::vector<int>(n, 0));
    for (std::size_t e = 0; e < msgs.size(); ++e)
      ++count[msgs.relation[e]][msgs.center[e]];
    for (int r = 0; r < R; ++r) {
      plan.rel_inv_count.emplace_back(N, 1);
      for (int s = 0; s < batch; ++s)
        for (int i = 0; i < n; ++i)
          plan.rel_inv_count[r].data[s * n + i] =
              count[r][i] > 0 ? static_cast<float>(1.0 / count[r][i]) : 0.0f;
    }
    for (int s = 0; s < batch; ++s)
      for (std::size_t e = 0; e < msgs.size(); ++e) {
        const int r = msgs.relation[e];
        plan.rel_center[r].push_back(msgs.center[e] + s * n);
        plan.rel_neighbor[r].push_back(msgs.neighbor[e] + s * n);
      }
  }

  plan.sample_of_row.resize(N);
  for (int s = 0; s < batch; ++s)
    for (int i = 0; i < n; ++i) plan.sample_of_row[s * n + i] = s;
  const int cur0 = topo.current_slice_begin();
  for (int s = 0; s < batch; ++s)
    for (int i = 0; i < plan.n_base; ++i)
      plan.current_rows.push_back(s * n + cur0 + i);
  return plan;
}

// Deterministic stream of per-layer dropout seeds.
struct DropoutState {
  bool enabled = false;
  double p = 0.0;
  std::uint64_t seed = 0;
  std::uint64_t counter = 0;

  std::uint64_t next() {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * ++counter;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }
};

namespace detail {

inline ad::Var activate(ad::Tape& tape, ad::Var x, Activation act) {
  switch (act) {
    case Activation::ReLU: return tape.relu(x);
    case Activation::Sigmoid: return tape.sigmoid(x);
    case Activation::Tanh: return tape.tanh_op(x);
  }
  return x;
}

inline ad::Var maybe_dropout(ad::Tape& tape, ad::Var x, DropoutState* drop) {
  if (!drop || !drop->enabled || drop->p <= 0.0) return x;
  return tape.dropout(x, drop->p, drop->next());
}

// One degree-normalized convolution given precomputed coefficient columns.
inline ad::Var conv_pass(ad::Tape& tape, ad::Var HW, const ForwardPlan& plan,
                         ad::Var msg_coeff, ad::Var self_coeff) {
  ad::Var gathered = tape.gather_rows(HW, plan.neighbor);
  ad::Var scaled = tape.mul(gathered, msg_coeff);
  ad::Var summed = tape.scatter_add_rows(scaled, plan.center, HW.rows);
  ad::Var self = tape.mul(HW, self_coeff);
  return tape.add(summed, self);
}

// Attention pass for one head: W is shared across heads, `a` is this head's
// attention vector [2 f x 1].
inline ad::Var gat_head(ad::Tape& tape, ad::Var HW, ad::Var a, int fout,
                        const ForwardPlan& plan) {
  std::vector<int> lo(fout), hi(fout);
  for (int i = 0; i < fout; ++i) {
    lo[i] = i;
    hi[i] = fout + i;
  }
  ad::Var a_center = tape.gather_rows(a, lo);
  ad::Var a_neighbor = tape.gather_rows(a, hi);
  ad::Var s = tape.matmul(HW, a_center);    // [N x 1]
  ad::Var t = tape.matmul(HW, a_neighbor);  // [N x 1]
  ad::Var logits = tape.add(tape.gather_rows(s, plan.att_center),
                            tape.gather_rows(t, plan.att_neighbor));
  ad::Var act = ad::leaky_relu(tape, logits, 0.2);
  ad::Var alpha = tape.segment_softmax(act, plan.att_offsets);
  ad::Var contrib = tape.mul(tape.gather_rows(HW, plan.att_neighbor), alpha);
  return tape.scatter_add_rows(contrib, plan.att_center, HW.rows);
}

// Column-concatenates equally shaped blocks by stacking them vertically and
// re-gathering rows in interleaved order; costs O(N f) and stays on tape.
inline ad::Var concat_cols(ad::Tape& tape, const std::vector<ad::Var>& blocks) {
  if (blocks.size() == 1) return blocks[0];
  const int n = blocks[0].rows;
  const int f = blocks[0].cols;
  const int H = static_cast<int>(blocks.size());
  ad::Var stacked{};
  for (int h = 0; h < H; ++h) {
    std::vector<int> where(n);
    for (int i = 0; i < n; ++i) where[i] = h * n + i;
    ad::Var placed = tape.scatter_add_rows(blocks[h], where, H * n);
    stacked = h == 0 ? placed : tape.add(stacked, placed);
  }
  std::vector<int> order;
  order.reserve(static_cast<std::size_t>(n) * H);
  for (int i = 0; i < n; ++i)
    for (int h = 0; h < H; ++h) order.push_back(h * n + i);
  ad::Var inter = tape.gather_rows(stacked, order);
  return ad::reshape(inter, n, H * f);
}

}  // namespace detail

// Everything the training loop needs back from one forward construction.
struct ForwardVars {
  std::vector<ad::Var> params;  // aligned with model.params
  ad::Var recon;                // [batch * n_base x 3], current slice only
};

// Builds the autoencoder forward graph on `tape` for a stack of `plan.batch`
// input windows X [batch * n_all x 3]. Parameters become grad-requiring
// leaves when `train` is set; pass `external_params` (aligned with
// model.params) to wire in caller-owned variables instead, e.g. for
// finite-difference checks.
inline ForwardVars model_forward_tape(
    const AutoencoderModel& m, ad::Tape& tape, ad::Var X,
    const ForwardPlan& plan, bool train, DropoutState* drop,
    const std::vector<ad::Var>* external_params = nullptr) {
  if (X.rows != plan.batch * plan.n_all || X.cols != kNumFeatures)
    fail(ErrorKind::ConfigMismatch,
         "input shape does not match topology and batch");
  if (external_params && external_params->size() != m.params.size())
    fail(ErrorKind::ConfigMismatch, "external parameter count mismatch");
  ForwardVars out;
  out.params.reserve(m.params.size());
  std::map<std::string, ad::Var> P;
  for (std::size_t i = 0; i < m.params.size(); ++i) {
    const auto& p = m.params[i];
    ad::Var v;
    if (external_params) {
      v = (*external_params)[i];
      if (v.rows != p.t.rows || v.cols != p.t.cols)
        fail(ErrorKind::ConfigMismatch,
             "external parameter shape mismatch at " + p.name);
    } else {
      v = tape.leaf(p.t, train);
    }
    out.params.push_back(v);
    P[p.name] = v;
  }
  const ModelConfig& c = m.config;
  const Activation act = c.activation;
  const int N = X.rows;

  auto pooled_mean = [&](ad::Var H) {
    if (plan.batch == 1) return tape.mean_pool_rows(H);
    ad::Var sums = tape.scatter_add_rows(H, plan.sample_of_row, plan.batch);
    return tape.mul(sums, tape.scalar(1.0 / plan.n_all));
  };

  ad::Var recon{};
  switch (c.architecture) {
    case ModelKind::Mlp: {
      ad::Var h = X;
      for (int i = 0; i < c.n_layers; ++i) {
        const std::string k = "enc" + std::to_string(i);
        h = ad::linear(tape, h, P.at(k + ".W"), P.at(k + ".b"));
        if (i + 1 < c.n_layers) {
          h = detail::activate(tape, h, act);
          h = detail::maybe_dropout(tape, h, drop);
        }
      }
      for (int i = 0; i < c.n_layers; ++i) {
        const std::string k = "dec" + std::to_string(i);
        h = ad::linear(tape, h, P.at(k + ".W"), P.at(k + ".b"));
        if (i + 1 < c.n_layers) {
          h = detail::activate(tape, h, act);
          h = detail::maybe_dropout(tape, h, drop);
        }
      }
      recon = h;
      break;
    }
    case ModelKind::Gcn:
    case ModelKind::StgGcn: {
      ad::Var msg_coeff = tape.leaf(plan.msg_coeff);
      ad::Var self_coeff = tape.leaf(plan.self_coeff);
      ad::Var h = X;
      for (int i = 0; i < c.n_layers; ++i) {
        ad::Var hw = tape.matmul(h, P.at("enc" + std::to_string(i) + ".W"));
        h = detail::conv_pass(tape, hw, plan, msg_coeff, self_coeff);
        h = detail::activate(tape, h, act);
        h = detail::maybe_dropout(tape, h, drop);
      }
      ad::Var z = tape.matmul(pooled_mean(h), P.at("latent.W"));
      ad::Var expanded = tape.matmul(z, P.at("expand.W"));
      ad::Var hd = ad::reshape(expanded, N, c.latent_dim);
      for (int i = 0; i < c.n_layers; ++i) {
        const bool last = i + 1 == c.n_layers;
        ad::Var hw = tape.matmul(hd, P.at("dec" + std::to_string(i) + ".W"));
        hd = detail::conv_pass(tape, hw, plan, msg_coeff, self_coeff);
        if (!last) {
          hd = detail::activate(tape, hd, act);
          hd = detail::maybe_dropout(tape, hd, drop);
        }
      }
      recon = hd;
      break;
    }
    case ModelKind::StgGat: {
      ad::Var h = X;
      for (int i = 0; i < c.n_layers; ++i) {
        const std::string k = "enc" + std::to_string(i);
        ad::Var hw = tape.matmul(h, P.at(k + ".W"));
        std::vector<ad::Var> heads;
        for (int g = 0; g < c.gat_heads; ++g)
          heads.push_back(detail::gat_head(
              tape, hw, P.at(k + ".h" + std::to_string(g) + ".a"),
              c.hidden_dim, plan));
        h = detail::concat_cols(tape, heads);
        h = detail::activate(tape, h, act);
        h = detail::maybe_dropout(tape, h, drop);
      }
      ad::Var z = tape.matmul(pooled_mean(h), P.at("latent.W"));
      ad::Var expanded = tape.matmul(z, P.at("expand.W"));
      ad::Var hd = ad::reshape(expanded, N, c.latent_dim);
      for (int i = 0; i < c.n_layers; ++i) {
        const bool last = i + 1 == c.n_layers;
        const int fout = last ? kNumFeatures : c.hidden_dim;
        const std::string k = "dec" + std::to_string(i);
        ad::Var hw = tape.matmul(hd, P.at(k + ".W"));
        std::vector<ad::Var> heads;
        for (int g = 0; g < c.gat_heads; ++g)
          heads.push_back(detail::gat_head(
              tape, hw, P.at(k + ".h" + std::to_string(g) + ".a"), fout,
              plan));
        if (last) {
          // final layer averages heads instead of concatenating
          ad::Var acc = heads[0];
          for (std::size_t g = 1; g < heads.size(); ++g)
            acc = tape.add(acc, heads[g]);
          hd = tape.mul(acc, tape.scalar(1.0 / c.gat_heads));
        } else {
          hd = detail::concat_cols(tape, heads);
          hd = detail::activate(tape, hd, act);
          hd = detail::maybe_dropout(tape, hd, drop);
        }
      }
      recon = hd;
      break;
    }
    case ModelKind::StgRgcn: {
      const int R = m.topo.n_relations;
      std::vector<ad::Var> invc;
      for (int r = 0; r < R; ++r)
        invc.push_back(tape.leaf(plan.rel_inv_count[r]));
      auto rgcn_pass = [&](ad::Var h, const std::string& k, int fout,
                           bool apply_act) {
        ad::Var acc = tape.matmul(h, P.at(k + ".self.W"));
        for (int r = 0; r < R; ++r) {
          if (plan.rel_center[r].empty()) continue;
          ad::Var gathered = tape.gather_rows(h, plan.rel_neighbor[r]);
          ad::Var sums =
              tape.scatter_add_rows(gathered, plan.rel_center[r], h.rows);
          ad::Var mean = tape.mul(sums, invc[r]);
          ad::Var term = tape.matmul(mean, P.at(k + ".rel" + std::to_string(r) + ".W"));
          if (c.rgcn_learned_norm)
            term = tape.mul(term, P.at(k + ".norm" + std::to_string(r)));
          acc = tape.add(acc, term);
        }
        (void)fout;
        if (apply_act) {
          acc = detail::activate(tape, acc, act);
          acc = detail::maybe_dropout(tape, acc, drop);
        }
        return acc;
      };
      ad::Var h = X;
      for (int i = 0; i < c.n_layers; ++i)
        h = rgcn_pass(h, "enc" + std::to_string(i), c.hidden_dim, true);
      ad::Var z = tape.matmul(pooled_mean(h), P.at("latent.W"));
      ad::Var expanded = tape.matmul(z, P.at("expand.W"));
      ad::Var hd = ad::reshape(expanded, N, c.latent_dim);
      for (int i = 0; i < c.n_layers; ++i) {
        const bool last = i + 1 == c.n_layers;
        hd = rgcn_pass(hd, "dec" + std::to_string(i),
                       last ? kNumFeatures : c.hidden_dim, !last);
      }
      recon = hd;
      break;
    }
  }

  if (plan.n_all == plan.n_base) {
    out.recon = recon;
  } else {
    out.recon = tape.gather_rows(recon, plan.current_rows);
  }
  return out;
}

// Single-window inference: X is [n_all x 3] (one slice for MLP/GCN, k+1
// stacked slices for STG variants, oldest first). Dropout is off.
inline ad::Tensor model_forward(const AutoencoderModel& m, const ad::Tensor& X) {
  if (X.rows != m.n_all_nodes() || X.cols != kNumFeatures)
    fail(ErrorKind::ConfigMismatch,
         "expected [" + std::to_string(m.n_all_nodes()) + " x 3] input, got [" +
             std::to_string(X.rows) + " x " + std::to_string(X.cols) + "]");
  ForwardPlan plan = build_forward_plan(m, 1);
  ad::Tape tape;
  ad::Var x = tape.leaf(X);
  ForwardVars fv = model_forward_tape(m, tape, x, plan, false, nullptr);
  return tape.value(fv.recon);
}

// ---------------------------------------------------------------------------
// Standalone layer operations (used directly by tests and probes)
// ---------------------------------------------------------------------------

// Degree-normalized graph convolution over a static topology:
// H' = act(D~^-1/2 A~ D~^-1/2 H W) with self loops. Pass nullopt to skip
// the nonlinearity (output layers).
inline ad::Tensor gcn_layer(const ad::Tensor& H, const GraphTopology& topo,
                            const ad::Tensor& W,
                            std::optional<Activation> act = Activation::ReLU) {
  if (H.rows != topo.n_nodes || H.cols != W.rows)
    fail(ErrorKind::ShapeMismatch, "gcn_layer input shapes");
  const DirectedMessages msgs = directed_messages(topo);
  const std::vector<int> deg = node_degrees(topo);
  ad::Tensor mc(static_cast<int>(msgs.size()), 1);
  for (std::size_t e = 0; e < msgs.size(); ++e)
    mc.data[e] = static_cast<float>(
        1.0 / std::sqrt(double(deg[msgs.center[e]] + 1) *
                        double(deg[msgs.neighbor[e]] + 1)));
  ad::Tensor sc(topo.n_nodes, 1);
  for (int i = 0; i < topo.n_nodes; ++i)
    sc.data[i] = static_cast<float>(1.0 / double(deg[i] + 1));

  ForwardPlan plan;
  plan.batch = 1;
  plan.n_all = topo.n_nodes;
  plan.center = msgs.center;
  plan.neighbor = msgs.neighbor;

  ad::Tape tape;
  ad::Var h = tape.leaf(H);
  ad::Var hw = tape.matmul(h, tape.leaf(W));
  ad::Var y = detail::conv_pass(tape, hw, plan, tape.leaf(mc), tape.leaf(sc));
  if (act) y = detail::activate(tape, y, *act);
  return tape.value(y);
}

// Multi-head attention layer; W is shared across heads, `a` holds one
// [2 f_out x 1] attention vector per head. Heads are column-concatenated.
inline ad::Tensor gat_layer(const ad::Tensor& H, const GraphTopology& topo,
                            const ad::Tensor& W,
                            const std::vector<ad::Tensor>& a, int heads,
                            std::optional<Activation> act = Activation::ReLU,
                            bool self_loops = true) {
  if (heads < 1 || static_cast<int>(a.size()) != heads)
    fail(ErrorKind::ShapeMismatch, "gat_layer needs one attention vector per head");
  if (H.rows != topo.n_nodes || H.cols != W.rows)
    fail(ErrorKind::ShapeMismatch, "gat_layer input shapes");
  const int fout = W.cols;
  for (const auto& av : a)
    if (av.rows != 2 * fout || av.cols != 1)
      fail(ErrorKind::ShapeMismatch, "attention vector must be [2 f_out x 1]");

  const DirectedMessages msgs = directed_messages(topo);
  struct P {
    int c, nb;
  };
  std::vector<P> pairs;
  for (std::size_t e = 0; e < msgs.size(); ++e)
    pairs.push_back({msgs.center[e], msgs.neighbor[e]});
  if (self_loops)
    for (int i = 0; i < topo.n_nodes; ++i) pairs.push_back({i, i});
  std::sort(pairs.begin(), pairs.end(), [](const P& x, const P& y) {
    return std::tie(x.c, x.nb) < std::tie(y.c, y.nb);
  });
  ForwardPlan plan;
  plan.batch = 1;
  plan.n_all = topo.n_nodes;
  for (const auto& p : pairs) {
    plan.att_center.push_back(p.c);
    plan.att_neighbor.push_back(p.nb);
  }
  plan.att_offsets.push_back(0);
  for (std::size_t i = 1; i <= plan.att_center.size(); ++i)
    if (i == plan.att_center.size() ||
        plan.att_center[i] != plan.att_center[i - 1])
      plan.att_offsets.push_back(static_cast<int>(i));

  ad::Tape tape;
  ad::Var h = tape.leaf(H);
  ad::Var hw = tape.matmul(h, tape.leaf(W));
  std::vector<ad::Var> outs;
  for (int g = 0; g < heads; ++g) {
    ad::Var y = detail::gat_head(tape, hw, tape.leaf(a[g]), fout, plan);
    if (act) y = detail::activate(tape, y, *act);
    outs.push_back(y);
  }
  return tape.value(detail::concat_cols(tape, outs));
}

// Relational convolution: h'_i = act(sum_r mean_{j in N_i^r} W_r h_j + W_0 h_i).
inline ad::Tensor rgcn_layer(const ad::Tensor& H, const GraphTopology& topo,
                             const std::vector<ad::Tensor>& Wr,
                             const ad::Tensor& W0,
                             std::optional<Activation> act = Activation::ReLU) {
  if (static_cast<int>(Wr.size()) != topo.n_relations)
    fail(ErrorKind::MissingRelationWeight,
         "need " + std::to_string(topo.n_relations) + " relation weights, got " +
             std::to_string(Wr.size()));
  if (H.rows != topo.n_nodes || H.cols != W0.rows)
    fail(ErrorKind::ShapeMismatch, "rgcn_layer input shapes");
  for (const auto& w : Wr)
    if (w.rows != W0.rows || w.cols != W0.cols)
      fail(ErrorKind::ShapeMismatch, "relation weight shape mismatch");

  const DirectedMessages msgs = directed_messages(topo);
  const int R = topo.n_relations;
  const int n = topo.n_nodes;
  std::vector<std::vector<int>> rc(R), rn(R);
  std::vector<std::vector<int>> count(R, std::vector<int>(n, 0));
  for (std::size_t e = 0; e < msgs.size(); ++e) {
    const int r = msgs.relation[e];
    rc[r].push_back(msgs.center[e]);
    rn[r].push_back(msgs.neighbor[e]);
    ++count[r][msgs.center[e]];
  }

  ad::Tape tape;
  ad::Var h = tape.leaf(H);
  ad::Var acc = tape.matmul(h, tape.leaf(W0));
  for (int r = 0; r < R; ++r) {
    if (rc[r].empty()) continue;
    ad::Tensor inv(n, 1);
    for (int i = 0; i < n; ++i)
      inv.data[i] = count[r][i] > 0 ? static_cast<float>(1.0 / count[r][i]) : 0.0f;
    ad::Var gathered = tape.gather_rows(h, rn[r]);
    ad::Var sums = tape.scatter_add_rows(gathered, rc[r], n);
    ad::Var mean = tape.mul(sums, tape.leaf(inv));
    acc = tape.add(acc, tape.matmul(mean, tape.leaf(Wr[r])));
  }
  if (act) acc = detail::activate(tape, acc, *act);
  return tape.value(acc);
}

// ---------------------------------------------------------------------------
// Checkpoint I/O
// ---------------------------------------------------------------------------

inline void save_model(const std::string& path, const AutoencoderModel& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::IoError, "cannot write " + path);
  const ModelConfig& c = m.config;
  out << "FTAED-MODEL v1\n";
  out << "architecture=" << model_kind_name(c.architecture) << "\n";
  out << "hidden_dim=" << c.hidden_dim << "\n";
  out << "latent_dim=" << c.latent_dim << "\n";
  out << "n_layers=" << c.n_layers << "\n";
  out << "dropout=" << c.dropout << "\n";
  out << "learning_rate=" << c.learning_rate << "\n";
  out << "gat_heads=" << c.gat_heads << "\n";
  out << "timesteps=" << c.timesteps << "\n";
  out << "activation=" << activation_name(c.activation) << "\n";
  out << "gat_self_loops=" << (c.gat_self_loops ? 1 : 0) << "\n";
  out << "rgcn_learned_norm=" << (c.rgcn_learned_norm ? 1 : 0) << "\n";
  out << "milemarkers=" << m.topo.n_milemarkers << "\n";
  out << "lanes=" << m.topo.n_lanes << "\n";
  out << "tensors=" << m.params.size() << "\n";
  for (const auto& p : m.params)
    out << "tensor " << p.name << ' ' << p.t.rows << ' ' << p.t.cols << "\n";
  out << "data\n";
  for (const auto& p : m.params)
    out.write(reinterpret_cast<const char*>(p.t.data.data()),
              static_cast<std::streamsize>(p.t.data.size() * sizeof(float)));
  if (!out) fail(ErrorKind::IoError, "short write to " + path);
}

inline AutoencoderModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::IoError, "cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line != "FTAED-MODEL v1")
    fail(ErrorKind::MissingHeader, path + ": bad magic");
  std::map<std::string, std::string> kv;
  std::vector<std::pair<std::string, std::pair<int, int>>> shapes;
  while (std::getline(in, line)) {
    if (line == "data") break;
    if (line.rfind("tensor ", 0) == 0) {
      char name[256];
      int r, cc;
      if (std::sscanf(line.c_str(), "tensor %255s %d %d", name, &r, &cc) != 3)
        fail(ErrorKind::MalformedRow, path + ": bad tensor line '" + line + "'");
      shapes.emplace_back(name, std::make_pair(r, cc));
      continue;
    }
    auto eq = line.find('=');
    if (eq == std::string::npos)
      fail(ErrorKind::MalformedRow, path + ": bad header line '" + line + "'");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto need = [&](const std::string& k) -> const std::string& {
    auto it = kv.find(k);
    if (it == kv.end())
      fail(ErrorKind::MissingHeader, path + ": missing key " + k);
    return it->second;
  };
  ModelConfig c;
  c.architecture = parse_model_kind(need("architecture"));
  c.hidden_dim = std::stoi(need("hidden_dim"));
  c.latent_dim = std::stoi(need("latent_dim"));
  c.n_layers = std::stoi(need("n_layers"));
  c.dropout = std::stod(need("dropout"));
  c.learning_rate = std::stod(need("learning_rate"));
  c.gat_heads = std::stoi(need("gat_heads"));
  c.timesteps = std::stoi(need("timesteps"));
  c.activation = parse_activation(need("activation"));
  c.gat_self_loops = need("gat_self_loops") == "1";
  c.rgcn_learned_norm = need("rgcn_learned_norm") == "1";
  const int mm = std::stoi(need("milemarkers"));
  const int lanes = std::stoi(need("lanes"));

  AutoencoderModel fresh = init_model(c, build_static_topology(mm, lanes), 0);
  if (shapes.size() != fresh.params.size())
    fail(ErrorKind::ShapeMismatch,
         path + ": expected " + std::to_string(fresh.params.size()) +
             " tensors, header lists " + std::to_string(shapes.size()));
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    if (shapes[i].first != fresh.params[i].name ||
        shapes[i].second.first != fresh.params[i].t.rows ||
        shapes[i].second.second != fresh.params[i].t.cols)
      fail(ErrorKind::ShapeMismatch,
           path + ": tensor " + shapes[i].first + " does not match model layout");
  }
  for (auto& p : fresh.params) {
    in.read(reinterpret_cast<char*>(p.t.data.data()),
            static_cast<std::streamsize>(p.t.data.size() * sizeof(float)));
    if (!in) fail(ErrorKind::IoError, path + ": truncated tensor data");
  }
  char extra;
  if (in.read(&extra, 1))
    fail(ErrorKind::MalformedRow, path + ": trailing bytes after tensor data");
  return fresh;
}

}  // namespace ftaed
