#include "bmix/clustering.hpp"

#include <cstdint>
#include <limits>
#include <string>

#include "bmix/errors.hpp"

namespace bmix {

namespace {

// Returns the inertia of the assignment.
double assign(const MatrixXd& points, const MatrixXd& centers, std::vector<int>& labels,
              std::vector<double>& dist2) {
  const Eigen::Index n = points.rows();
  const Eigen::Index k = centers.rows();
  double inertia = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    int best_c = 0;
    for (Eigen::Index c = 0; c < k; ++c) {
      const double d = (points.row(i) - centers.row(c)).squaredNorm();
      if (d < best) {
        best = d;
        best_c = static_cast<int>(c);
      }
    }
    labels[static_cast<std::size_t>(i)] = best_c;
    dist2[static_cast<std::size_t>(i)] = best;
    inertia += best;
  }
  return inertia;
}

std::vector<int> cluster_sizes(const std::vector<int>& labels, Eigen::Index k) {
  std::vector<int> sizes(static_cast<std::size_t>(k), 0);
  for (int l : labels) {
    ++sizes[static_cast<std::size_t>(l)];
  }
  return sizes;
}

void reseed_empty(const MatrixXd& points, MatrixXd& centers, std::vector<int>& labels,
                  std::vector<double>& dist2) {
  auto sizes = cluster_sizes(labels, centers.rows());
  for (std::size_t c = 0; c < sizes.size(); ++c) {
    if (sizes[c] > 0) {
      continue;
    }
    double far = 0.0;
    std::size_t far_i = labels.size();
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (sizes[static_cast<std::size_t>(labels[i])] > 1 && dist2[i] > far) {
        far = dist2[i];
        far_i = i;
      }
    }
    if (far_i == labels.size()) {
      continue;  // every point already sits on a center
    }
    --sizes[static_cast<std::size_t>(labels[far_i])];
    ++sizes[c];
    labels[far_i] = static_cast<int>(c);
    dist2[far_i] = 0.0;
    centers.row(static_cast<Eigen::Index>(c)) = points.row(static_cast<Eigen::Index>(far_i));
  }
}

void update_centers(const MatrixXd& points, MatrixXd& centers, const std::vector<int>& labels) {
  MatrixXd sums = MatrixXd::Zero(centers.rows(), centers.cols());
  std::vector<int> sizes(static_cast<std::size_t>(centers.rows()), 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    sums.row(labels[i]) += points.row(static_cast<Eigen::Index>(i));
    ++sizes[static_cast<std::size_t>(labels[i])];
  }
  for (Eigen::Index c = 0; c < centers.rows(); ++c) {
    if (sizes[static_cast<std::size_t>(c)] > 0) {
      centers.row(c) = sums.row(c) / sizes[static_cast<std::size_t>(c)];
    }
  }
}

MatrixXd kmeanspp_seed(const MatrixXd& points, int k, Rng& rng) {
  const Eigen::Index n = points.rows();
  MatrixXd centers(k, points.cols());
  std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
  centers.row(0) = points.row(pick(rng));
  std::vector<double> d2(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    d2[static_cast<std::size_t>(i)] = (points.row(i) - centers.row(0)).squaredNorm();
  }
  for (int c = 1; c < k; ++c) {
    double total = 0.0;
    for (double v : d2) total += v;
    const Eigen::Index chosen =
        total > 0.0 ? static_cast<Eigen::Index>(sample_categorical(d2, rng)) : pick(rng);
    centers.row(c) = points.row(chosen);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double d = (points.row(i) - centers.row(c)).squaredNorm();
      auto& slot = d2[static_cast<std::size_t>(i)];
      if (d < slot) slot = d;
    }
  }
  return centers;
}

void check_points(const MatrixXd& points, int k) {
  if (points.rows() < 1 || points.cols() < 1 || k < 1) {
    throw InvalidParameter("kmeans: requires n >= 1, d >= 1, k >= 1");
  }
  if (!points.allFinite()) {
    throw InvalidData("kmeans: non-finite input");
  }
}

}  // namespace

KMeansResult lloyd(const MatrixXd& points, MatrixXd centers, int max_iter) {
  check_points(points, static_cast<int>(centers.rows()));
  if (centers.cols() != points.cols()) {
    throw InvalidParameter("kmeans: center dimension mismatch");
  }
  const auto n = static_cast<std::size_t>(points.rows());
  KMeansResult out;
  std::vector<int> labels(n), next(n);
  std::vector<double> dist2(n);
  out.inertia_history.push_back(assign(points, centers, labels, dist2));

  for (int it = 0; it < max_iter; ++it) {
    reseed_empty(points, centers, labels, dist2);
    update_centers(points, centers, labels);
    out.inertia_history.push_back(assign(points, centers, next, dist2));
    if (next == labels) {
      break;
    }
    labels.swap(next);
  }
  update_centers(points, centers, labels);
  double inertia = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    inertia += (points.row(static_cast<Eigen::Index>(i)) - centers.row(labels[i])).squaredNorm();
  }
  int nonempty = 0;
  for (int s : cluster_sizes(labels, centers.rows())) {
    nonempty += s > 0 ? 1 : 0;
  }
  out.centers = std::move(centers);
  out.labels = std::move(labels);
  out.inertia = inertia;
  out.n_nonempty = nonempty;
  return out;
}

KMeansResult kmeans(const MatrixXd& points, int k, Rng& rng, int max_iter, int n_restarts) {
  check_points(points, k);
  if (n_restarts < 1 || max_iter < 1) {
    throw InvalidParameter("kmeans: max_iter and n_restarts must be positive");
  }
  // Restart seeds are drawn up front so each restart is independent of the
  // order in which the others run.
  std::vector<std::uint64_t> seeds(static_cast<std::size_t>(n_restarts));
  for (auto& s : seeds) s = rng();

  KMeansResult best;
  bool have = false;
  for (const auto seed : seeds) {
    Rng local(seed);
    auto run = lloyd(points, kmeanspp_seed(points, k, local), max_iter);
    if (!have || run.inertia < best.inertia) {
      best = std::move(run);
      have = true;
    }
  }
  return best;
}

}  // namespace bmix
