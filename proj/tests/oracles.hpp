#pragma once

// Reference implementations the tests compare the library against. These
// are deliberately naive: O(n^2) pair enumeration, dense matrices, full
// rescans. Keeping them structurally different from the library is the
// point; agreement is then meaningful.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <set>
#include <tuple>
#include <vector>

#include "ftaed/detection.hpp"
#include "ftaed/graph.hpp"
#include "ftaed/models.hpp"
#include "ftaed/tensor.hpp"

namespace oracle {

using Matrix = std::vector<std::vector<double>>;

inline Matrix zeros(int r, int c) {
  return Matrix(r, std::vector<double>(c, 0.0));
}

inline Matrix from_tensor(const ftaed::ad::Tensor& t) {
  Matrix m = zeros(t.rows, t.cols);
  for (int i = 0; i < t.rows; ++i)
    for (int j = 0; j < t.cols; ++j) m[i][j] = t.at(i, j);
  return m;
}

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  const int m = static_cast<int>(a.size());
  const int k = static_cast<int>(b.size());
  const int n = static_cast<int>(b[0].size());
  Matrix c = zeros(m, n);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      for (int kk = 0; kk < k; ++kk) c[i][j] += a[i][kk] * b[kk][j];
  return c;
}

inline double apply_act(double x, ftaed::Activation a) {
  switch (a) {
    case ftaed::Activation::ReLU: return x > 0.0 ? x : 0.0;
    case ftaed::Activation::Sigmoid: return 1.0 / (1.0 + std::exp(-x));
    case ftaed::Activation::Tanh: return std::tanh(x);
  }
  return x;
}

inline void activate(Matrix& m, std::optional<ftaed::Activation> a) {
  if (!a) return;
  for (auto& row : m)
    for (auto& v : row) v = apply_act(v, *a);
}

inline double max_abs_diff(const Matrix& a, const ftaed::ad::Tensor& b) {
  double worst = 0.0;
  for (int i = 0; i < b.rows; ++i)
    for (int j = 0; j < b.cols; ++j)
      worst = std::max(worst, std::fabs(a[i][j] - double(b.at(i, j))));
  return worst;
}

// ---------------------------------------------------------------------------
// Graph enumeration
// ---------------------------------------------------------------------------

// Decides adjacency for every node pair from the coordinate definition
// alone. Nodes are slice-major, milemarker-major, lane-minor; relation
// classes follow the lateral/longitudinal/temporal taxonomy.
inline std::set<std::tuple<int, int, int>> enumerate_edges(int n_mm,
                                                           int n_lanes,
                                                           int n_slices) {
  std::set<std::tuple<int, int, int>> edges;
  const int nb = n_mm * n_lanes;
  const int n = nb * n_slices;
  auto coords = [&](int node) {
    int s = node / nb, b = node % nb;
    return std::tuple<int, int, int>{s, b / n_lanes, b % n_lanes};
  };
  for (int u = 0; u < n; ++u) {
    for (int v = u + 1; v < n; ++v) {
      auto [su, mu, lu] = coords(u);
      auto [sv, mv, lv] = coords(v);
      const int ds = sv - su;
      const int dm = std::abs(mu - mv);
      const int dl = std::abs(lu - lv);
      int rel = -1;
      if (ds == 0) {
        if (dm == 0 && dl == 1)
          rel = 0;  // lateral
        else if (dm == 1)
          rel = 1;  // longitudinal
      } else if (ds == 1) {
        if (dm == 0 && dl == 0)
          rel = 2;  // self across time
        else if (dm == 0 && dl == 1)
          rel = 3;
        else if (dm == 1)
          rel = 4;
      }
      if (rel >= 0) edges.insert({u, v, rel});
    }
  }
  return edges;
}

// ---------------------------------------------------------------------------
// Dense message-passing layers
// ---------------------------------------------------------------------------

inline std::vector<std::vector<int>> adjacency_lists(
    const ftaed::GraphTopology& topo) {
  std::vector<std::vector<int>> adj(topo.n_nodes);
  for (const auto& e : topo.edges) {
    adj[e.u].push_back(e.v);
    adj[e.v].push_back(e.u);
  }
  return adj;
}

// Symmetric-normalized convolution with self loops:
// Y = act(D~^-1/2 (A + I) D~^-1/2 H W), D~ = D + I.
inline Matrix gcn_dense(const Matrix& H, const ftaed::GraphTopology& topo,
                        const Matrix& W,
                        std::optional<ftaed::Activation> act) {
  const int n = topo.n_nodes;
  auto adj = adjacency_lists(topo);
  Matrix M = zeros(n, n);
  for (int i = 0; i < n; ++i) {
    M[i][i] = 1.0 / (adj[i].size() + 1.0);
    for (int j : adj[i])
      M[i][j] = 1.0 / std::sqrt((adj[i].size() + 1.0) * (adj[j].size() + 1.0));
  }
  Matrix out = matmul(M, matmul(H, W));
  activate(out, act);
  return out;
}

inline Matrix gat_dense(const Matrix& H, const ftaed::GraphTopology& topo,
                        const Matrix& W, const std::vector<Matrix>& a,
                        bool self_loops,
                        std::optional<ftaed::Activation> act) {
  const int n = topo.n_nodes;
  const int fout = static_cast<int>(W[0].size());
  auto adj = adjacency_lists(topo);
  if (self_loops)
    for (int i = 0; i < n; ++i) adj[i].push_back(i);
  for (auto& nb : adj) std::sort(nb.begin(), nb.end());
  Matrix HW = matmul(H, W);

  auto leaky = [](double x) { return x > 0.0 ? x : 0.2 * x; };
  Matrix out = zeros(n, fout * static_cast<int>(a.size()));
  for (std::size_t h = 0; h < a.size(); ++h) {
    for (int i = 0; i < n; ++i) {
      std::vector<double> logits;
      for (int j : adj[i]) {
        double e = 0.0;
        for (int f = 0; f < fout; ++f)
          e += a[h][f][0] * HW[i][f] + a[h][fout + f][0] * HW[j][f];
        logits.push_back(leaky(e));
      }
      double mx = *std::max_element(logits.begin(), logits.end());
      double z = 0.0;
      for (double& l : logits) {
        l = std::exp(l - mx);
        z += l;
      }
      for (std::size_t q = 0; q < adj[i].size(); ++q)
        for (int f = 0; f < fout; ++f)
          out[i][h * fout + f] += (logits[q] / z) * HW[adj[i][q]][f];
    }
  }
  activate(out, act);
  return out;
}

// h'_i = act(sum_r mean_{j in N_i^r} h_j W_r + h_i W_0)
inline Matrix rgcn_dense(const Matrix& H, const ftaed::GraphTopology& topo,
                         const std::vector<Matrix>& Wr, const Matrix& W0,
                         std::optional<ftaed::Activation> act) {
  const int n = topo.n_nodes;
  const int fout = static_cast<int>(W0[0].size());
  std::vector<std::vector<std::vector<int>>> rel_adj(
      topo.n_relations, std::vector<std::vector<int>>(n));
  for (const auto& e : topo.edges) {
    rel_adj[e.relation][e.u].push_back(e.v);
    rel_adj[e.relation][e.v].push_back(e.u);
  }
  Matrix out = matmul(H, W0);
  for (int r = 0; r < topo.n_relations; ++r) {
    for (int i = 0; i < n; ++i) {
      const auto& nb = rel_adj[r][i];
      if (nb.empty()) continue;
      std::vector<double> mean(H[0].size(), 0.0);
      for (int j : nb)
        for (std::size_t f = 0; f < mean.size(); ++f) mean[f] += H[j][f];
      for (auto& v : mean) v /= nb.size();
      for (int f = 0; f < fout; ++f)
        for (std::size_t g = 0; g < mean.size(); ++g)
          out[i][f] += mean[g] * Wr[r][g][f];
    }
  }
  activate(out, act);
  return out;
}

// ---------------------------------------------------------------------------
// Metric references
// ---------------------------------------------------------------------------

// Probability that a random positive outscores a random negative, ties 0.5.
inline double auc_pairs(const std::vector<double>& scores,
                        const std::vector<ftaed::TimeLabel>& labels,
                        const std::vector<std::uint8_t>& include) {
  std::vector<double> pos, neg;
  for (std::size_t t = 0; t < scores.size(); ++t) {
    if (!include[t] || labels[t] == ftaed::TimeLabel::Excluded) continue;
    (labels[t] == ftaed::TimeLabel::Positive ? pos : neg).push_back(scores[t]);
  }
  double acc = 0.0;
  for (double p : pos)
    for (double q : neg) acc += p > q ? 1.0 : (p == q ? 0.5 : 0.0);
  return acc / (double(pos.size()) * double(neg.size()));
}

// Smallest candidate alpha whose directly counted FPR stays within target.
// Candidates are the distinct scores plus one value below the minimum, the
// same sweep set the library uses.
inline std::optional<double> pick_alpha_scan(
    const std::vector<double>& scores,
    const std::vector<ftaed::TimeLabel>& labels,
    const std::vector<std::uint8_t>& include, double target) {
  std::vector<double> cand;
  for (std::size_t t = 0; t < scores.size(); ++t)
    if (include[t] && labels[t] != ftaed::TimeLabel::Excluded)
      cand.push_back(scores[t]);
  std::sort(cand.begin(), cand.end());
  cand.erase(std::unique(cand.begin(), cand.end()), cand.end());
  cand.insert(cand.begin(), cand.front() > 0.0 ? 0.0 : cand.front() - 1.0);

  std::optional<double> best;
  for (double a : cand) {
    std::size_t fp = 0, tn = 0;
    for (std::size_t t = 0; t < scores.size(); ++t) {
      if (!include[t] || labels[t] != ftaed::TimeLabel::Negative) continue;
      (scores[t] > a ? fp : tn)++;
    }
    const double fpr = double(fp) / double(fp + tn);
    if (fpr <= target && (!best || a < *best)) best = a;
  }
  return best;
}

}  // namespace oracle
