#pragma once

#include <functional>
#include <map>
#include <span>
#include <vector>

#include "bmix/sampler.hpp"

namespace bmix {

// The component draws of one sweep that take part in identification.
// Labels in S index into eta/mu/Sigma.
struct ComponentSet {
  std::size_t record = 0;  // index into ChainOutput::records
  VectorXd eta;
  std::vector<VectorXd> mu;
  std::vector<MatrixXd> Sigma;
  std::vector<int> S;  // empty when assignments were not stored
};

struct SelectedDraws {
  int k_plus = 0;
  std::vector<ComponentSet> sweeps;
};

struct IdentifiedDraws {
  int k_plus = 0;
  std::vector<std::size_t> kept_sweeps;        // record indices
  std::vector<std::vector<int>> permutations;  // draw order -> identified label
  std::size_t n_eligible = 0;
  double non_permutation_rate = 0.0;
  std::vector<ComponentSet> relabeled;
};

// A partition with labels 0..n_groups-1, every label used.
struct Partition {
  std::vector<int> labels;
  int n_groups = 0;
};

// Relabels arbitrary integer labels to 0..G-1 in increasing label order.
Partition make_partition(std::span<const int> labels);

std::map<int, double> kplus_distribution(const ChainOutput& chain);

// Most frequent K_plus; ties go to the smaller value.
int kplus_mode(const std::map<int, double>& dist);

// Sweeps with exactly k_plus filled components, restricted to the filled
// components in slot order. Weights are kept as drawn.
SelectedDraws filter_to_kplus(const ChainOutput& chain, int k_plus);

// Every component of every sweep; used when K is fixed and equal to the
// requested number of clusters.
SelectedDraws all_components(const ChainOutput& chain);

// all_components when every sweep has K == k_plus, filter_to_kplus otherwise.
SelectedDraws select_for_identification(const ChainOutput& chain, int k_plus);

// Maps one component draw to the point clustered by ppr.
using PprFunctional = std::function<VectorXd(double eta, const VectorXd& mu, const MatrixXd& Sigma)>;

VectorXd ppr_means(double eta, const VectorXd& mu, const MatrixXd& Sigma);

// Clusters the pooled functional values into k_plus groups with k-means and
// keeps the sweeps whose draws fall into k_plus distinct groups. Identified
// labels are ordered by ascending posterior mean weight.
IdentifiedDraws ppr_identify(const SelectedDraws& draws, Rng& rng, const PprFunctional& functional = ppr_means);

struct PosteriorSummary {
  VectorXd eta;
  std::vector<VectorXd> mu;
  std::vector<MatrixXd> Sigma;
  std::size_t n_draws = 0;
};

PosteriorSummary posterior_summary(const IdentifiedDraws& identified);

// Per-observation modal label over sweeps (ties to the smaller label).
Partition map_partition(const std::vector<std::vector<int>>& assignments, int n_labels);
Partition map_partition(const IdentifiedDraws& identified);

// Group sizes of the modal label before relabeling to consecutive groups;
// index = identified label.
std::vector<int> modal_label_sizes(const IdentifiedDraws& identified);

MatrixXd coallocation_matrix(const std::vector<std::vector<int>>& assignments);

// Variation of information in nats.
double variation_of_information(std::span<const int> a, std::span<const int> b);

// Sampled partition minimizing the average VI to all sampled partitions.
// Candidates are thinned to at most max_candidates.
Partition vi_partition(const std::vector<std::vector<int>>& assignments, std::size_t max_candidates = 2000);

double adjusted_rand_index(std::span<const int> a, std::span<const int> b);
double ari(const Partition& a, const Partition& b);

struct Confusion {
  // rows = truth groups in ascending size order, columns = estimated
  // groups, matched columns first (aligned with their rows).
  Eigen::MatrixXi table;
  std::vector<int> truth_groups;      // group id per row
  std::vector<int> estimated_groups;  // group id per column
  double mcr = 0.0;
};

Confusion confusion_and_mcr(const Partition& estimated, const Partition& truth);

}  // namespace bmix
