#pragma once

#include <vector>

#include "bmix/distributions.hpp"

namespace bmix {

struct KMeansResult {
  MatrixXd centers;        // k x d
  std::vector<int> labels;  // 0-based cluster index per point
  double inertia = 0.0;    // sum of squared distances to assigned centers
  int n_nonempty = 0;
  // Inertia after every assignment pass of the winning run.
  std::vector<double> inertia_history;
};

// Lloyd iterations from fixed initial centers. Stops when assignments are
// unchanged or after max_iter passes. Empty clusters are re-seeded with the
// point farthest from its current center.
KMeansResult lloyd(const MatrixXd& points, MatrixXd centers, int max_iter);

// k-means++ seeding with n_restarts independent Lloyd runs; returns the
// minimum-inertia run (ties go to the earliest restart).
KMeansResult kmeans(const MatrixXd& points, int k, Rng& rng, int max_iter = 100, int n_restarts = 10);

}  // namespace bmix
