#pragma once

// Session clustering of representation rows: k-means, diagonal GMM, DBSCAN
// and affinity propagation.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "clucdd/corpus.hpp"
#include "clucdd/error.hpp"

namespace clucdd {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class ClusterMethod { kmeans, gmm, dbscan, ap };

inline std::string to_string(ClusterMethod m) {
  switch (m) {
    case ClusterMethod::kmeans: return "kmeans";
    case ClusterMethod::gmm: return "gmm";
    case ClusterMethod::dbscan: return "dbscan";
    case ClusterMethod::ap: return "ap";
  }
  return "kmeans";
}

inline ClusterMethod cluster_method_from_string(const std::string& s) {
  if (s == "kmeans") return ClusterMethod::kmeans;
  if (s == "gmm") return ClusterMethod::gmm;
  if (s == "dbscan") return ClusterMethod::dbscan;
  if (s == "ap") return ClusterMethod::ap;
  throw ConfigError("unknown clustering method '" + s + "'");
}

inline bool method_needs_k(ClusterMethod m) { return m == ClusterMethod::kmeans || m == ClusterMethod::gmm; }

struct ClusteringResult {
  SessionLabeling labels;
  int iterations = 0;
  double objective = 0.0;  // inertia, log-likelihood, noise count or net similarity
  bool converged = false;
  std::vector<double> objective_trace;  // one entry per iteration
  Matrix centers;                       // k x d where the method has centers
};

namespace detail {

inline void check_k(Eigen::Index n, int k, const char* method) {
  if (k < 1 || k > n) {
    throw ValidationError(std::string(method) + ": k = " + std::to_string(k) + " must lie in 1.." +
                          std::to_string(n));
  }
}

inline double sq_dist(const Matrix& a, Eigen::Index i, const Matrix& b, Eigen::Index j) {
  return (a.row(i) - b.row(j)).squaredNorm();
}

inline int nearest_center(const Matrix& points, Eigen::Index i, const Matrix& centers) {
  int best = 0;
  double best_d = sq_dist(points, i, centers, 0);
  for (Eigen::Index c = 1; c < centers.rows(); ++c) {
    const double d = sq_dist(points, i, centers, c);
    if (d < best_d) best_d = d, best = static_cast<int>(c);
  }
  return best;
}

template <typename Rng>
Matrix kmeans_plus_plus(const Matrix& points, int k, Rng& rng) {
  const Eigen::Index n = points.rows();
  Matrix centers(k, points.cols());
  std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
  centers.row(0) = points.row(pick(rng));
  Vector closest(n);
  for (Eigen::Index i = 0; i < n; ++i) closest[i] = sq_dist(points, i, centers, 0);
  for (int c = 1; c < k; ++c) {
    const double total = closest.sum();
    Eigen::Index chosen = n - 1;
    if (total > 0.0) {
      double target = std::uniform_real_distribution<double>(0.0, total)(rng);
      for (Eigen::Index i = 0; i < n; ++i) {
        target -= closest[i];
        if (target < 0.0) {
          chosen = i;
          break;
        }
      }
    } else {
      chosen = pick(rng);
    }
    centers.row(c) = points.row(chosen);
    for (Eigen::Index i = 0; i < n; ++i) closest[i] = std::min(closest[i], sq_dist(points, i, centers, c));
  }
  return centers;
}

inline double inertia(const Matrix& points, const std::vector<int>& assign, const Matrix& centers) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < points.rows(); ++i) s += sq_dist(points, i, centers, assign[static_cast<std::size_t>(i)]);
  return s;
}

inline void recompute_center(const Matrix& points, const std::vector<int>& assign, int c, Matrix& centers) {
  Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(points.cols());
  int count = 0;
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    if (assign[static_cast<std::size_t>(i)] == c) sum += points.row(i), ++count;
  }
  if (count > 0) centers.row(c) = sum / count;
}

/// Mean update; an empty cluster takes the point farthest from its center in
/// the currently largest cluster.
inline void update_centers(const Matrix& points, std::vector<int>& assign, Matrix& centers) {
  const int k = static_cast<int>(centers.rows());
  for (int c = 0; c < k; ++c) recompute_center(points, assign, c, centers);
  for (;;) {
    std::vector<int> sizes(static_cast<std::size_t>(k), 0);
    for (int a : assign) ++sizes[static_cast<std::size_t>(a)];
    auto empty = std::find(sizes.begin(), sizes.end(), 0);
    if (empty == sizes.end()) return;
    const int target = static_cast<int>(empty - sizes.begin());
    const int largest = static_cast<int>(std::max_element(sizes.begin(), sizes.end()) - sizes.begin());
    Eigen::Index far = -1;
    double far_d = -1.0;
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
      if (assign[static_cast<std::size_t>(i)] != largest) continue;
      const double d = sq_dist(points, i, centers, largest);
      if (d > far_d) far_d = d, far = i;
    }
    assign[static_cast<std::size_t>(far)] = target;
    centers.row(target) = points.row(far);
    recompute_center(points, assign, largest, centers);
  }
}

}  // namespace detail

struct KMeansOptions {
  int restarts = 10;
  int max_iter = 300;
};

/// Lloyd iterations from seeded k-means++ starts; the restart with the lowest
/// inertia wins (earliest on ties). Nearest-center ties go to the lower index.
inline ClusteringResult kmeans(const Matrix& points, int k, std::uint64_t seed, const KMeansOptions& opt = {}) {
  detail::check_k(points.rows(), k, "kmeans");
  std::mt19937_64 rng(seed);
  ClusteringResult best;
  bool have_best = false;
  for (int restart = 0; restart < opt.restarts; ++restart) {
    Matrix centers = detail::kmeans_plus_plus(points, k, rng);
    std::vector<int> assign(static_cast<std::size_t>(points.rows()), -1);
    ClusteringResult run;
    for (int it = 0; it < opt.max_iter; ++it) {
      bool changed = false;
      for (Eigen::Index i = 0; i < points.rows(); ++i) {
        const int c = detail::nearest_center(points, i, centers);
        if (c != assign[static_cast<std::size_t>(i)]) assign[static_cast<std::size_t>(i)] = c, changed = true;
      }
      if (!changed) {
        run.converged = true;
        break;
      }
      detail::update_centers(points, assign, centers);
      run.objective_trace.push_back(detail::inertia(points, assign, centers));
      ++run.iterations;
    }
    run.objective = detail::inertia(points, assign, centers);
    if (!have_best || run.objective < best.objective) {
      run.labels = canonicalize(assign);
      run.centers = centers;
      best = std::move(run);
      have_best = true;
    }
  }
  return best;
}

/// Diagonal-covariance mixture. `responsibilities` gives the posterior over
/// components for one point.
struct GaussianMixture {
  Vector weights;    // k
  Matrix means;      // k x d
  Matrix variances;  // k x d

  Vector log_joint(const Eigen::RowVectorXd& x) const {
    const Eigen::Index k = weights.size();
    Vector out(k);
    const double log2pi = std::log(2.0 * std::numbers::pi);
    for (Eigen::Index c = 0; c < k; ++c) {
      const auto diff = (x - means.row(c)).array();
      out[c] = std::log(weights[c]) -
               0.5 * (variances.row(c).array().log() + log2pi + diff.square() / variances.row(c).array()).sum();
    }
    return out;
  }

  Vector responsibilities(const Eigen::RowVectorXd& x) const {
    Vector lj = log_joint(x);
    const double top = lj.maxCoeff();
    Vector r = (lj.array() - top).exp();
    return r / r.sum();
  }
};

struct GmmOptions {
  int max_iter = 100;
  double tolerance = 1e-6;
  double variance_floor = 1e-6;
  KMeansOptions init;
};

struct GmmFit {
  GaussianMixture model;
  ClusteringResult result;
};

/// EM from the k-means solution. Stops when the log-likelihood gains less than
/// `tolerance` or after `max_iter` M-steps; labels are argmax responsibilities.
inline GmmFit gmm_fit(const Matrix& points, int k, std::uint64_t seed, const GmmOptions& opt = {}) {
  detail::check_k(points.rows(), k, "gmm");
  const Eigen::Index n = points.rows();
  const Eigen::Index d = points.cols();
  const ClusteringResult init = kmeans(points, k, seed, opt.init);

  Matrix resp = Matrix::Zero(n, k);
  for (Eigen::Index i = 0; i < n; ++i) resp(i, init.labels.labels[static_cast<std::size_t>(i)]) = 1.0;

  GmmFit fit;
  GaussianMixture& g = fit.model;
  g.weights.resize(k);
  g.means.resize(k, d);
  g.variances.resize(k, d);

  auto m_step = [&] {
    for (Eigen::Index c = 0; c < k; ++c) {
      const double mass = resp.col(c).sum();
      g.weights[c] = mass / static_cast<double>(n);
      if (mass <= std::numeric_limits<double>::min()) continue;  // keep the previous shape
      g.means.row(c) = resp.col(c).transpose() * points / mass;
      Eigen::RowVectorXd var = Eigen::RowVectorXd::Zero(d);
      for (Eigen::Index i = 0; i < n; ++i) var += resp(i, c) * (points.row(i) - g.means.row(c)).array().square().matrix();
      g.variances.row(c) = (var / mass).cwiseMax(opt.variance_floor);
    }
  };
  auto e_step = [&] {
    double ll = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      Vector lj = g.log_joint(points.row(i));
      const double top = lj.maxCoeff();
      const double lse = top + std::log((lj.array() - top).exp().sum());
      resp.row(i) = (lj.array() - lse).exp().transpose();
      ll += lse;
    }
    return ll;
  };

  // Initial parameters are the hard k-means partition.
  g.variances.setConstant(opt.variance_floor);
  m_step();
  double ll = e_step();
  ClusteringResult& res = fit.result;
  res.objective_trace.push_back(ll);
  for (int it = 0; it < opt.max_iter; ++it) {
    m_step();
    const double next = e_step();
    res.objective_trace.push_back(next);
    ++res.iterations;
    const double gain = next - ll;
    ll = next;
    if (gain < opt.tolerance) {
      res.converged = true;
      break;
    }
  }
  res.objective = ll;
  std::vector<int> labels(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Index c;
    resp.row(i).maxCoeff(&c);
    labels[static_cast<std::size_t>(i)] = static_cast<int>(c);
  }
  res.labels = canonicalize(labels);
  res.centers = g.means;
  return fit;
}

inline ClusteringResult gmm(const Matrix& points, int k, std::uint64_t seed, const GmmOptions& opt = {}) {
  return gmm_fit(points, k, seed, opt).result;
}

/// Density clustering with neighborhoods ||x_i - x_j|| <= eps (self included).
/// Border points join the first cluster that reaches them; noise points become
/// singleton sessions. `objective` is the noise count.
inline ClusteringResult dbscan(const Matrix& points, double eps, int min_pts) {
  if (!(eps > 0.0)) throw ConfigError("dbscan: eps must be positive");
  if (min_pts < 1) throw ConfigError("dbscan: min_pts must be at least 1");
  const Eigen::Index n = points.rows();
  const double eps2 = eps * eps;
  std::vector<std::vector<Eigen::Index>> neighbors(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (detail::sq_dist(points, i, points, j) <= eps2) neighbors[static_cast<std::size_t>(i)].push_back(j);
    }
  }
  auto is_core = [&](Eigen::Index i) {
    return static_cast<int>(neighbors[static_cast<std::size_t>(i)].size()) >= min_pts;
  };

  constexpr int kUnassigned = -1;
  std::vector<int> label(static_cast<std::size_t>(n), kUnassigned);
  int clusters = 0;
  for (Eigen::Index seed_point = 0; seed_point < n; ++seed_point) {
    if (label[static_cast<std::size_t>(seed_point)] != kUnassigned || !is_core(seed_point)) continue;
    const int id = clusters++;
    std::deque<Eigen::Index> frontier{seed_point};
    label[static_cast<std::size_t>(seed_point)] = id;
    while (!frontier.empty()) {
      const Eigen::Index p = frontier.front();
      frontier.pop_front();
      if (!is_core(p)) continue;
      for (Eigen::Index q : neighbors[static_cast<std::size_t>(p)]) {
        if (label[static_cast<std::size_t>(q)] != kUnassigned) continue;
        label[static_cast<std::size_t>(q)] = id;
        frontier.push_back(q);
      }
    }
  }
  ClusteringResult res;
  for (auto& l : label) {
    if (l == kUnassigned) {
      l = clusters++;
      res.objective += 1.0;
    }
  }
  res.labels = canonicalize(label);
  res.iterations = 1;
  res.converged = true;
  res.objective_trace.push_back(res.objective);
  return res;
}

struct AffinityPropagationOptions {
  double damping = 0.9;
  int max_iter = 200;
  int convergence_window = 15;
};

/// Message passing on s(i,j) = -||x_i - x_j||^2 with the median off-diagonal
/// similarity as preference. Converged once the exemplar set has stayed the
/// same for `convergence_window` consecutive iterations. Each point joins its
/// most similar exemplar; `objective` is the net similarity.
inline ClusteringResult affinity_propagation(const Matrix& points, const AffinityPropagationOptions& opt = {}) {
  if (!(opt.damping >= 0.5 && opt.damping < 1.0)) throw ConfigError("ap: damping must lie in [0.5, 1)");
  if (opt.max_iter < 1 || opt.convergence_window < 1) throw ConfigError("ap: iteration limits must be positive");
  const Eigen::Index n = points.rows();
  ClusteringResult res;
  if (n < 2) {
    res.labels = canonicalize(std::vector<int>(static_cast<std::size_t>(n), 0));
    res.converged = true;
    return res;
  }

  Matrix s(n, n);
  std::vector<double> off;
  off.reserve(static_cast<std::size_t>(n * (n - 1)));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      s(i, j) = -detail::sq_dist(points, i, points, j);
      if (i != j) off.push_back(s(i, j));
    }
  }
  if (*std::min_element(off.begin(), off.end()) == 0.0) {
    // Every point coincides.
    res.labels = canonicalize(std::vector<int>(static_cast<std::size_t>(n), 0));
    res.converged = true;
    return res;
  }
  std::sort(off.begin(), off.end());
  const std::size_t mid = off.size() / 2;
  const double preference = off.size() % 2 == 1 ? off[mid] : 0.5 * (off[mid - 1] + off[mid]);
  for (Eigen::Index i = 0; i < n; ++i) s(i, i) = preference;

  Matrix r = Matrix::Zero(n, n), a = Matrix::Zero(n, n);
  std::vector<bool> exemplar(static_cast<std::size_t>(n), false), previous;
  int stable = 0;
  const double lambda = opt.damping;
  for (int it = 0; it < opt.max_iter; ++it) {
    // Responsibilities.
    for (Eigen::Index i = 0; i < n; ++i) {
      double first = -std::numeric_limits<double>::infinity(), second = first;
      Eigen::Index arg = 0;
      for (Eigen::Index k = 0; k < n; ++k) {
        const double v = a(i, k) + s(i, k);
        if (v > first) {
          second = first, first = v, arg = k;
        } else if (v > second) {
          second = v;
        }
      }
      for (Eigen::Index k = 0; k < n; ++k) {
        const double fresh = s(i, k) - (k == arg ? second : first);
        r(i, k) = lambda * r(i, k) + (1.0 - lambda) * fresh;
      }
    }
    // Availabilities.
    for (Eigen::Index k = 0; k < n; ++k) {
      double positive = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (i != k) positive += std::max(0.0, r(i, k));
      }
      for (Eigen::Index i = 0; i < n; ++i) {
        const double fresh =
            i == k ? positive : std::min(0.0, r(k, k) + positive - std::max(0.0, r(i, k)));
        a(i, k) = lambda * a(i, k) + (1.0 - lambda) * fresh;
      }
    }
    int count = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      exemplar[static_cast<std::size_t>(i)] = a(i, i) + r(i, i) > 0.0;
      count += exemplar[static_cast<std::size_t>(i)] ? 1 : 0;
    }
    stable = exemplar == previous ? stable + 1 : 1;
    previous = exemplar;
    ++res.iterations;
    res.objective_trace.push_back(static_cast<double>(count));
    if (stable >= opt.convergence_window && count > 0) {
      res.converged = true;
      break;
    }
  }

  std::vector<Eigen::Index> centers;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (exemplar[static_cast<std::size_t>(i)]) centers.push_back(i);
  }
  if (centers.empty()) {
    Eigen::Index best;
    (a.diagonal() + r.diagonal()).maxCoeff(&best);
    centers.push_back(best);
  }
  std::vector<int> labels(static_cast<std::size_t>(n));
  res.objective = 0.0;
  res.centers.resize(static_cast<Eigen::Index>(centers.size()), points.cols());
  for (std::size_t c = 0; c < centers.size(); ++c) res.centers.row(static_cast<Eigen::Index>(c)) = points.row(centers[c]);
  for (Eigen::Index i = 0; i < n; ++i) {
    std::size_t best = 0;
    for (std::size_t c = 0; c < centers.size(); ++c) {
      if (centers[c] == i) {
        best = c;
        break;
      }
      if (s(i, centers[c]) > s(i, centers[best])) best = c;
    }
    labels[static_cast<std::size_t>(i)] = static_cast<int>(best);
    res.objective += s(i, centers[best]);
  }
  res.labels = canonicalize(labels);
  return res;
}

}  // namespace clucdd
