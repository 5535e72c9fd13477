#pragma once

// Independent reference computations used by the tests.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

// Exact optimal transport cost with uniform marginals. Masses are scaled to
// integers (lcm(n, m) units in total), so an integral min-cost flow found by
// successive shortest paths is an LP optimum.
inline double exact_uniform_ot(const Eigen::MatrixXd& cost) {
  const int n = static_cast<int>(cost.rows());
  const int m = static_cast<int>(cost.cols());
  const int total = std::lcm(n, m);
  const int supply = total / n;
  const int demand = total / m;
  // Nodes: 0 source, 1..n rows, n+1..n+m cols, n+m+1 sink.
  const int nodes = n + m + 2;
  const int sink = nodes - 1;
  struct Edge {
    int to;
    int cap;
    double cost;
    int rev;
  };
  std::vector<std::vector<Edge>> g(nodes);
  const auto add = [&](int a, int b, int cap, double c) {
    g[a].push_back({b, cap, c, static_cast<int>(g[b].size())});
    g[b].push_back({a, 0, -c, static_cast<int>(g[a].size()) - 1});
  };
  for (int i = 0; i < n; ++i) add(0, 1 + i, supply, 0.0);
  for (int j = 0; j < m; ++j) add(1 + n + j, sink, demand, 0.0);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < m; ++j) add(1 + i, 1 + n + j, total, cost(i, j));
  }
  double result = 0.0;
  int flow = 0;
  while (flow < total) {
    std::vector<double> dist(nodes, std::numeric_limits<double>::infinity());
    std::vector<int> prev_node(nodes, -1), prev_edge(nodes, -1);
    dist[0] = 0.0;
    for (int iter = 0; iter < nodes; ++iter) {
      bool changed = false;
      for (int u = 0; u < nodes; ++u) {
        if (!std::isfinite(dist[u])) continue;
        for (int k = 0; k < static_cast<int>(g[u].size()); ++k) {
          const Edge& e = g[u][k];
          if (e.cap > 0 && dist[u] + e.cost < dist[e.to] - 1e-15) {
            dist[e.to] = dist[u] + e.cost;
            prev_node[e.to] = u;
            prev_edge[e.to] = k;
            changed = true;
          }
        }
      }
      if (!changed) break;
    }
    int push = total - flow;
    for (int v = sink; v != 0; v = prev_node[v]) {
      push = std::min(push, g[prev_node[v]][prev_edge[v]].cap);
    }
    for (int v = sink; v != 0; v = prev_node[v]) {
      Edge& e = g[prev_node[v]][prev_edge[v]];
      e.cap -= push;
      g[v][e.rev].cap += push;
    }
    flow += push;
    result += push * dist[sink];
  }
  return result / total;
}

// Brute force over permutations for square problems: the uniform-marginal
// polytope's vertices are permutation matrices scaled by 1/n.
inline double permutation_ot(const Eigen::MatrixXd& cost) {
  const int n = static_cast<int>(cost.rows());
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += cost(i, perm[i]);
    best = std::min(best, s / n);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

inline double relative_error(double a, double b, double floor = 1e-8) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// Central difference of f along coordinate k of x.
inline double central_difference(const std::function<double(const Eigen::VectorXd&)>& f,
                                 Eigen::VectorXd x, Eigen::Index k, double h) {
  const double orig = x(k);
  x(k) = orig + h;
  const double up = f(x);
  x(k) = orig - h;
  const double down = f(x);
  return (up - down) / (2.0 * h);
}

inline double central_difference(const std::function<double(double)>& f, double x, double h) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

}  // namespace oracle
