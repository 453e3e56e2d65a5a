#pragma once

#include <cstdint>
#include <vector>

#include "carl/nn.hpp"

namespace carl {

struct KMeansResult {
  std::vector<int> assignments;
  Matrix centroids;
  /// Inertia after each assignment step.
  std::vector<double> inertia_history;
  int iterations = 0;
  bool converged = false;

  double inertia() const { return inertia_history.empty() ? 0.0 : inertia_history.back(); }
};

struct KMeansOptions {
  int max_iterations = 300;
  bool parallel = true;
};

/// k-means++ seeding then Lloyd iterations until the assignment stops changing.
/// Empty clusters are re-seeded from the point farthest from its centroid.
KMeansResult kmeans(const Matrix& data, int k, std::uint64_t seed, const KMeansOptions& opt = {});

/// Nearest-centroid assignment; returns the summed squared distance.
double assign_clusters(const Matrix& data, const Matrix& centroids, std::vector<int>& out);
double assign_clusters_serial(const Matrix& data, const Matrix& centroids, std::vector<int>& out);

/// Mean silhouette coefficient (O(n^2)).
double silhouette(const Matrix& data, const std::vector<int>& assignments, int k);
double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b);

}  // namespace carl
