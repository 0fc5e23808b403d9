#pragma once

// Brute-force reference implementations used to cross-check the library.
// Deliberately naive: loops over pairs, permutations and assignments.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

using Labels = std::vector<int>;

inline double ari(const Labels& g, const Labels& p) {
  const std::size_t n = g.size();
  double both = 0, same_g = 0, same_p = 0, pairs = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const bool sg = g[i] == g[j];
      const bool sp = p[i] == p[j];
      both += sg && sp;
      same_g += sg;
      same_p += sp;
      pairs += 1;
    }
  }
  const double expected = same_g * same_p / pairs;
  const double top = 0.5 * (same_g + same_p);
  if (top == expected) return 1.0;
  return (both - expected) / (top - expected);
}

inline double nmi(const Labels& g, const Labels& p) {
  const double n = static_cast<double>(g.size());
  std::map<int, double> cg, cp;
  std::map<std::pair<int, int>, double> joint;
  for (std::size_t i = 0; i < g.size(); ++i) {
    cg[g[i]] += 1;
    cp[p[i]] += 1;
    joint[{g[i], p[i]}] += 1;
  }
  auto h = [n](const std::map<int, double>& c) {
    double s = 0;
    for (const auto& [_, v] : c) s -= v / n * std::log(v / n);
    return s;
  };
  const double hg = h(cg), hp = h(cp);
  if (hg == 0 && hp == 0) return 1.0;
  if (hg == 0 || hp == 0) return 0.0;
  double mi = 0;
  for (const auto& [key, v] : joint) mi += v / n * std::log(v * n / (cg[key.first] * cp[key.second]));
  return mi / (0.5 * (hg + hp));
}

inline double loc3(const Labels& g, const Labels& p) {
  double agree = 0, total = 0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    for (std::size_t j = i + 1; j < g.size() && j <= i + 3; ++j) {
      agree += (g[i] == g[j]) == (p[i] == p[j]);
      total += 1;
    }
  }
  return agree / total;
}

/// Exhaustive search over injective maps from the smaller session set into the larger.
inline double one_to_one(const Labels& g, const Labels& p) {
  const int kg = *std::max_element(g.begin(), g.end()) + 1;
  const int kp = *std::max_element(p.begin(), p.end()) + 1;
  std::vector<std::vector<int>> overlap(static_cast<std::size_t>(kg), std::vector<int>(static_cast<std::size_t>(kp)));
  for (std::size_t i = 0; i < g.size(); ++i) ++overlap[static_cast<std::size_t>(g[i])][static_cast<std::size_t>(p[i])];
  const int big = std::max(kg, kp);
  std::vector<int> perm(static_cast<std::size_t>(big));
  std::iota(perm.begin(), perm.end(), 0);
  int best = 0;
  do {
    int s = 0;
    for (int a = 0; a < big; ++a) {
      const int b = perm[static_cast<std::size_t>(a)];
      if (a < kg && b < kp) s += overlap[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)];
    }
    best = std::max(best, s);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return static_cast<double>(best) / static_cast<double>(g.size());
}

inline double shen_f(const Labels& g, const Labels& p) {
  const double n = static_cast<double>(g.size());
  std::map<int, std::vector<std::size_t>> gs, ps;
  for (std::size_t i = 0; i < g.size(); ++i) {
    gs[g[i]].push_back(i);
    ps[p[i]].push_back(i);
  }
  double total = 0;
  for (const auto& [_, gi] : gs) {
    double best = 0;
    for (const auto& [__, pj] : ps) {
      double common = 0;
      for (auto a : gi) common += std::count(pj.begin(), pj.end(), a);
      const double precision = common / static_cast<double>(pj.size());
      const double recall = common / static_cast<double>(gi.size());
      if (common > 0) best = std::max(best, 2 * precision * recall / (precision + recall));
    }
    total += static_cast<double>(gi.size()) / n * best;
  }
  return total;
}

/// Uniform random labeling with values in [0, k), not necessarily canonical.
inline Labels random_labels(std::mt19937_64& rng, std::size_t n, int k) {
  Labels out(n);
  std::uniform_int_distribution<int> u(0, k - 1);
  for (auto& v : out) v = u(rng);
  return out;
}

/// Lowest k-means objective over every assignment of n points to k labels.
inline double best_inertia(const Eigen::MatrixXd& x, int k) {
  const auto n = static_cast<std::size_t>(x.rows());
  std::vector<int> assign(n, 0);
  double best = std::numeric_limits<double>::infinity();
  while (true) {
    double cost = 0;
    for (int c = 0; c < k; ++c) {
      Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(x.cols());
      int count = 0;
      for (std::size_t i = 0; i < n; ++i) {
        if (assign[i] == c) {
          mean += x.row(static_cast<Eigen::Index>(i));
          ++count;
        }
      }
      if (count == 0) continue;
      mean /= count;
      for (std::size_t i = 0; i < n; ++i) {
        if (assign[i] == c) cost += (x.row(static_cast<Eigen::Index>(i)) - mean).squaredNorm();
      }
    }
    best = std::min(best, cost);
    std::size_t pos = 0;
    while (pos < n && ++assign[pos] == k) assign[pos++] = 0;
    if (pos == n) break;
  }
  return best;
}

/// Plain-loop affinity propagation: the published responsibility and
/// availability updates with damping, median preference and exemplar
/// stability over a window. Returns exemplar index per point.
inline std::vector<int> affinity_propagation(const Eigen::MatrixXd& x, double damping, int max_iter, int window) {
  const int n = static_cast<int>(x.rows());
  std::vector<std::vector<double>> s(n, std::vector<double>(n)), r(n, std::vector<double>(n, 0.0)),
      a(n, std::vector<double>(n, 0.0));
  std::vector<double> off;
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < n; ++k) {
      s[i][k] = -(x.row(i) - x.row(k)).squaredNorm();
      if (i != k) off.push_back(s[i][k]);
    }
  }
  std::sort(off.begin(), off.end());
  const double pref =
      off.size() % 2 ? off[off.size() / 2] : 0.5 * (off[off.size() / 2 - 1] + off[off.size() / 2]);
  for (int i = 0; i < n; ++i) s[i][i] = pref;

  std::vector<bool> last;
  int stable = 0;
  for (int it = 0; it < max_iter; ++it) {
    for (int i = 0; i < n; ++i) {
      for (int k = 0; k < n; ++k) {
        double m = -std::numeric_limits<double>::infinity();
        for (int kk = 0; kk < n; ++kk) {
          if (kk != k) m = std::max(m, a[i][kk] + s[i][kk]);
        }
        r[i][k] = damping * r[i][k] + (1 - damping) * (s[i][k] - m);
      }
    }
    for (int i = 0; i < n; ++i) {
      for (int k = 0; k < n; ++k) {
        double sum = 0;
        for (int ii = 0; ii < n; ++ii) {
          if (ii != i && ii != k) sum += std::max(0.0, r[ii][k]);
        }
        const double value = i == k ? sum : std::min(0.0, r[k][k] + sum);
        a[i][k] = damping * a[i][k] + (1 - damping) * value;
      }
    }
    std::vector<bool> ex(n);
    for (int k = 0; k < n; ++k) ex[k] = a[k][k] + r[k][k] > 0;
    stable = ex == last ? stable + 1 : 1;
    last = ex;
    if (stable >= window && std::count(ex.begin(), ex.end(), true) > 0) break;
  }
  std::vector<int> centers;
  for (int k = 0; k < n; ++k) {
    if (last[k]) centers.push_back(k);
  }
  std::vector<int> out(n);
  for (int i = 0; i < n; ++i) {
    int best = centers.front();
    for (int c : centers) {
      if (c == i) {
        best = i;
        break;
      }
      if (s[i][c] > s[i][best]) best = c;
    }
    out[i] = best;
  }
  return out;
}

}  // namespace oracle
