#include "carl/kmeans.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>

#include "carl/rng.hpp"

namespace carl {

namespace {

double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) s += (a[j] - b[j]) * (a[j] - b[j]);
  return s;
}

int nearest(const std::vector<double>& x, const Matrix& centroids, double& best) {
  int arg = 0;
  best = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.size(); ++c) {
    const double d = sq_dist(x, centroids[c]);
    if (d < best) {
      best = d;
      arg = static_cast<int>(c);
    }
  }
  return arg;
}

}  // namespace

double assign_clusters(const Matrix& data, const Matrix& centroids, std::vector<int>& out) {
  out.resize(data.size());
  std::vector<double> dist(data.size());
  const auto n = static_cast<long>(data.size());
#pragma omp parallel for schedule(static)
  for (long i = 0; i < n; ++i) {
    const auto u = static_cast<std::size_t>(i);
    out[u] = nearest(data[u], centroids, dist[u]);
  }
  double total = 0.0;
  for (double d : dist) total += d;
  return total;
}

double assign_clusters_serial(const Matrix& data, const Matrix& centroids, std::vector<int>& out) {
  out.resize(data.size());
  double total = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    double d = 0.0;
    out[i] = nearest(data[i], centroids, d);
    total += d;
  }
  return total;
}

KMeansResult kmeans(const Matrix& data, int k, std::uint64_t seed, const KMeansOptions& opt) {
  if (k < 1) throw std::invalid_argument("k must be >= 1");
  if (data.size() < static_cast<std::size_t>(k)) throw std::invalid_argument("need at least k points");
  const std::size_t n = data.size();
  const std::size_t dim = data.front().size();
  Rng rng(seed);
  KMeansResult r;

  // k-means++ seeding.
  r.centroids.push_back(data[rng.index(n)]);
  std::vector<double> d2(n);
  while (r.centroids.size() < static_cast<std::size_t>(k)) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      nearest(data[i], r.centroids, d2[i]);
      total += d2[i];
    }
    std::size_t pick = 0;
    if (total <= 0.0) {
      pick = rng.index(n);
    } else {
      double u = rng.uniform() * total;
      for (pick = 0; pick + 1 < n; ++pick) {
        u -= d2[pick];
        if (u < 0.0) break;
      }
    }
    r.centroids.push_back(data[pick]);
  }

  const auto assign = opt.parallel ? assign_clusters : assign_clusters_serial;
  std::vector<int> prev;
  for (r.iterations = 1; r.iterations <= opt.max_iterations; ++r.iterations) {
    r.inertia_history.push_back(assign(data, r.centroids, r.assignments));
    if (r.assignments == prev) {
      r.converged = true;
      break;
    }
    prev = r.assignments;
    Matrix sums(static_cast<std::size_t>(k), std::vector<double>(dim, 0.0));
    std::vector<std::size_t> counts(static_cast<std::size_t>(k), 0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto c = static_cast<std::size_t>(r.assignments[i]);
      ++counts[c];
      for (std::size_t j = 0; j < dim; ++j) sums[c][j] += data[i][j];
    }
    for (std::size_t c = 0; c < static_cast<std::size_t>(k); ++c) {
      if (counts[c] == 0) continue;
      for (std::size_t j = 0; j < dim; ++j) r.centroids[c][j] = sums[c][j] / static_cast<double>(counts[c]);
    }
    for (std::size_t c = 0; c < static_cast<std::size_t>(k); ++c) {
      if (counts[c] != 0) continue;
      std::size_t far = 0;
      double far_d = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double d = sq_dist(data[i], r.centroids[static_cast<std::size_t>(r.assignments[i])]);
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      r.centroids[c] = data[far];
      r.assignments[far] = static_cast<int>(c);
    }
  }
  r.iterations = std::min(r.iterations, opt.max_iterations);
  return r;
}

double silhouette(const Matrix& data, const std::vector<int>& assignments, int k) {
  const std::size_t n = data.size();
  if (n < 2 || k < 2) return 0.0;
  std::vector<std::size_t> sizes(static_cast<std::size_t>(k), 0);
  for (int a : assignments) ++sizes[static_cast<std::size_t>(a)];
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> mean(static_cast<std::size_t>(k), 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      if (i != j) mean[static_cast<std::size_t>(assignments[j])] += std::sqrt(sq_dist(data[i], data[j]));
    }
    const auto own = static_cast<std::size_t>(assignments[i]);
    if (sizes[own] <= 1) continue;
    const double a = mean[own] / static_cast<double>(sizes[own] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < static_cast<std::size_t>(k); ++c) {
      if (c != own && sizes[c] > 0) b = std::min(b, mean[c] / static_cast<double>(sizes[c]));
    }
    if (std::isfinite(b) && std::max(a, b) > 0.0) total += (b - a) / std::max(a, b);
  }
  return total / static_cast<double>(n);
}

double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("label vectors differ in length");
  std::map<std::pair<int, int>, double> table;
  std::map<int, double> rows, cols;
  for (std::size_t i = 0; i < a.size(); ++i) {
    table[{a[i], b[i]}] += 1.0;
    rows[a[i]] += 1.0;
    cols[b[i]] += 1.0;
  }
  auto c2 = [](double x) { return x * (x - 1.0) / 2.0; };
  double index = 0.0, sum_a = 0.0, sum_b = 0.0;
  for (const auto& [key, v] : table) index += c2(v);
  for (const auto& [key, v] : rows) sum_a += c2(v);
  for (const auto& [key, v] : cols) sum_b += c2(v);
  const double expected = sum_a * sum_b / c2(static_cast<double>(a.size()));
  const double max_index = 0.5 * (sum_a + sum_b);
  if (max_index == expected) return 1.0;
  return (index - expected) / (max_index - expected);
}

}  // namespace carl
