#include "bmix/postprocess.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <string>

#include "bmix/clustering.hpp"
#include "bmix/errors.hpp"

namespace bmix {

namespace {

ComponentSet components_of(const SweepRecord& rec, std::size_t index, const std::vector<int>& slots) {
  ComponentSet set;
  set.record = index;
  set.eta.resize(static_cast<Eigen::Index>(slots.size()));
  std::vector<int> remap(static_cast<std::size_t>(rec.K), -1);
  for (std::size_t j = 0; j < slots.size(); ++j) {
    const auto k = static_cast<std::size_t>(slots[j]);
    set.eta[static_cast<Eigen::Index>(j)] = rec.eta[static_cast<Eigen::Index>(k)];
    set.mu.push_back(rec.mu[k]);
    set.Sigma.push_back(rec.Sigma[k]);
    remap[k] = static_cast<int>(j);
  }
  if (rec.S) {
    set.S.reserve(rec.S->size());
    for (int s : *rec.S) set.S.push_back(remap[static_cast<std::size_t>(s)]);
  }
  return set;
}

// n log n lookup for contingency entropies.
std::vector<double> nlogn_table(std::size_t n) {
  std::vector<double> t(n + 1, 0.0);
  for (std::size_t i = 1; i <= n; ++i) t[i] = static_cast<double>(i) * std::log(static_cast<double>(i));
  return t;
}

int label_count(std::span<const int> labels) {
  int m = -1;
  for (int l : labels) m = std::max(m, l);
  return m + 1;
}

// Entropy terms for partitions with labels in 0..G-1.
double vi_compact(std::span<const int> a, int ga, std::span<const int> b, int gb,
                  const std::vector<double>& nlogn, std::vector<int>& cells) {
  const std::size_t n = a.size();
  cells.assign(static_cast<std::size_t>(ga * gb + ga + gb), 0);
  int* joint = cells.data();
  int* ra = joint + ga * gb;
  int* rb = ra + ga;
  for (std::size_t i = 0; i < n; ++i) {
    ++joint[a[i] * gb + b[i]];
    ++ra[a[i]];
    ++rb[b[i]];
  }
  // VI = 2 H(a,b) - H(a) - H(b), with H = log n - (1/n) sum c log c
  double s_joint = 0.0, s_a = 0.0, s_b = 0.0;
  for (int c = 0; c < ga * gb; ++c) s_joint += nlogn[static_cast<std::size_t>(joint[c])];
  for (int c = 0; c < ga; ++c) s_a += nlogn[static_cast<std::size_t>(ra[c])];
  for (int c = 0; c < gb; ++c) s_b += nlogn[static_cast<std::size_t>(rb[c])];
  const double vi = (s_a + s_b - 2.0 * s_joint) / static_cast<double>(n);
  return std::max(vi, 0.0);
}

// Relabels in order of first appearance.
std::vector<int> canonical(std::span<const int> labels) {
  std::map<int, int> seen;
  std::vector<int> out;
  out.reserve(labels.size());
  for (int l : labels) {
    auto [it, inserted] = seen.try_emplace(l, static_cast<int>(seen.size()));
    out.push_back(it->second);
  }
  return out;
}

double choose2(double n) { return 0.5 * n * (n - 1.0); }

}  // namespace

Partition make_partition(std::span<const int> labels) {
  std::map<int, int> ids;
  for (int l : labels) ids.emplace(l, 0);
  int next = 0;
  for (auto& [label, id] : ids) id = next++;
  Partition p;
  p.labels.reserve(labels.size());
  for (int l : labels) p.labels.push_back(ids[l]);
  p.n_groups = next;
  return p;
}

std::map<int, double> kplus_distribution(const ChainOutput& chain) {
  if (chain.records.empty()) {
    throw EmptySelection("K_plus distribution: chain has no stored sweeps");
  }
  std::map<int, std::size_t> counts;
  for (const auto& rec : chain.records) ++counts[rec.K_plus];
  std::map<int, double> dist;
  const auto total = static_cast<double>(chain.records.size());
  for (const auto& [k, c] : counts) dist[k] = static_cast<double>(c) / total;
  return dist;
}

int kplus_mode(const std::map<int, double>& dist) {
  if (dist.empty()) {
    throw EmptySelection("K_plus mode: empty distribution");
  }
  int best = dist.begin()->first;
  double best_p = -1.0;
  for (const auto& [k, p] : dist) {
    if (p > best_p) {
      best = k;
      best_p = p;
    }
  }
  return best;
}

SelectedDraws filter_to_kplus(const ChainOutput& chain, int k_plus) {
  SelectedDraws out;
  out.k_plus = k_plus;
  for (std::size_t idx = 0; idx < chain.records.size(); ++idx) {
    const auto& rec = chain.records[idx];
    if (rec.K_plus != k_plus) continue;
    std::vector<int> slots;
    for (int k = 0; k < rec.K; ++k) {
      if (rec.counts[static_cast<std::size_t>(k)] > 0) slots.push_back(k);
    }
    out.sweeps.push_back(components_of(rec, idx, slots));
  }
  if (out.sweeps.empty()) {
    throw EmptySelection("no stored sweep has exactly " + std::to_string(k_plus) + " filled components");
  }
  return out;
}

SelectedDraws all_components(const ChainOutput& chain) {
  if (chain.records.empty()) {
    throw EmptySelection("chain has no stored sweeps");
  }
  SelectedDraws out;
  out.k_plus = chain.records.front().K;
  for (std::size_t idx = 0; idx < chain.records.size(); ++idx) {
    const auto& rec = chain.records[idx];
    if (rec.K != out.k_plus) {
      throw InvalidParameter("all_components: K varies across sweeps");
    }
    std::vector<int> slots(static_cast<std::size_t>(rec.K));
    std::iota(slots.begin(), slots.end(), 0);
    out.sweeps.push_back(components_of(rec, idx, slots));
  }
  return out;
}

SelectedDraws select_for_identification(const ChainOutput& chain, int k_plus) {
  const bool constant_k = !chain.records.empty() &&
                          std::all_of(chain.records.begin(), chain.records.end(),
                                      [&](const SweepRecord& r) { return r.K == k_plus; });
  return constant_k ? all_components(chain) : filter_to_kplus(chain, k_plus);
}

VectorXd ppr_means(double, const VectorXd& mu, const MatrixXd&) { return mu; }

IdentifiedDraws ppr_identify(const SelectedDraws& draws, Rng& rng, const PprFunctional& functional) {
  const int k = draws.k_plus;
  if (k < 1 || draws.sweeps.empty()) {
    throw IdentificationFailure("ppr: nothing to identify");
  }
  for (const auto& sw : draws.sweeps) {
    if (static_cast<int>(sw.mu.size()) != k) {
      throw IdentificationFailure("ppr: sweeps disagree on the number of components");
    }
  }
  const auto& first = draws.sweeps.front();
  const Eigen::Index d = functional(first.eta[0], first.mu[0], first.Sigma[0]).size();
  MatrixXd pool(static_cast<Eigen::Index>(draws.sweeps.size()) * k, d);
  Eigen::Index row = 0;
  for (const auto& sw : draws.sweeps) {
    for (int j = 0; j < k; ++j) {
      pool.row(row++) = functional(sw.eta[j], sw.mu[static_cast<std::size_t>(j)],
                                   sw.Sigma[static_cast<std::size_t>(j)])
                            .transpose();
    }
  }

  const auto km = kmeans(pool, k, rng);
  if (km.n_nonempty < k) {
    throw IdentificationFailure("ppr: k-means found only " + std::to_string(km.n_nonempty) +
                                " nonempty clusters for K_plus = " + std::to_string(k));
  }

  IdentifiedDraws out;
  out.k_plus = k;
  out.n_eligible = draws.sweeps.size();
  std::vector<std::size_t> kept_local;
  VectorXd weight_sum = VectorXd::Zero(k);
  for (std::size_t s = 0; s < draws.sweeps.size(); ++s) {
    std::vector<int> perm(static_cast<std::size_t>(k));
    std::vector<char> used(static_cast<std::size_t>(k), 0);
    bool ok = true;
    for (int j = 0; j < k && ok; ++j) {
      const int label = km.labels[s * static_cast<std::size_t>(k) + static_cast<std::size_t>(j)];
      ok = !used[static_cast<std::size_t>(label)];
      used[static_cast<std::size_t>(label)] = 1;
      perm[static_cast<std::size_t>(j)] = label;
    }
    if (!ok) continue;
    for (int j = 0; j < k; ++j) weight_sum[perm[static_cast<std::size_t>(j)]] += draws.sweeps[s].eta[j];
    kept_local.push_back(s);
    out.permutations.push_back(std::move(perm));
  }
  if (kept_local.empty()) {
    throw IdentificationFailure("ppr: no sweep could be uniquely labeled");
  }

  // Report order: ascending mean weight, ties by k-means label.
  std::vector<int> order(static_cast<std::size_t>(k));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return weight_sum[a] < weight_sum[b]; });
  std::vector<int> rank(static_cast<std::size_t>(k));
  for (int pos = 0; pos < k; ++pos) rank[static_cast<std::size_t>(order[static_cast<std::size_t>(pos)])] = pos;

  for (std::size_t t = 0; t < kept_local.size(); ++t) {
    auto& perm = out.permutations[t];
    for (int& p : perm) p = rank[static_cast<std::size_t>(p)];
    const auto& sw = draws.sweeps[kept_local[t]];
    ComponentSet rel;
    rel.record = sw.record;
    rel.eta.resize(k);
    rel.mu.resize(static_cast<std::size_t>(k));
    rel.Sigma.resize(static_cast<std::size_t>(k));
    for (int j = 0; j < k; ++j) {
      const auto to = static_cast<std::size_t>(perm[static_cast<std::size_t>(j)]);
      rel.eta[static_cast<Eigen::Index>(to)] = sw.eta[j];
      rel.mu[to] = sw.mu[static_cast<std::size_t>(j)];
      rel.Sigma[to] = sw.Sigma[static_cast<std::size_t>(j)];
    }
    rel.S.reserve(sw.S.size());
    for (int s : sw.S) rel.S.push_back(perm[static_cast<std::size_t>(s)]);
    out.kept_sweeps.push_back(sw.record);
    out.relabeled.push_back(std::move(rel));
  }
  out.non_permutation_rate =
      1.0 - static_cast<double>(out.kept_sweeps.size()) / static_cast<double>(out.n_eligible);
  return out;
}

PosteriorSummary posterior_summary(const IdentifiedDraws& identified) {
  if (identified.relabeled.empty()) {
    throw IdentificationFailure("posterior summary: no identified sweeps");
  }
  const int k = identified.k_plus;
  const auto& first = identified.relabeled.front();
  PosteriorSummary out;
  out.eta = VectorXd::Zero(k);
  out.mu.assign(static_cast<std::size_t>(k), VectorXd::Zero(first.mu.front().size()));
  out.Sigma.assign(static_cast<std::size_t>(k), MatrixXd::Zero(first.Sigma.front().rows(), first.Sigma.front().cols()));
  for (const auto& sw : identified.relabeled) {
    out.eta += sw.eta;
    for (std::size_t j = 0; j < static_cast<std::size_t>(k); ++j) {
      out.mu[j] += sw.mu[j];
      out.Sigma[j] += sw.Sigma[j];
    }
  }
  const auto n = static_cast<double>(identified.relabeled.size());
  out.eta /= n;
  for (auto& m : out.mu) m /= n;
  for (auto& s : out.Sigma) s /= n;
  out.n_draws = identified.relabeled.size();
  return out;
}

namespace {

std::vector<int> modal_labels(const std::vector<std::vector<int>>& assignments, int n_labels) {
  if (assignments.empty()) {
    throw EmptySelection("MAP partition: no assignment draws");
  }
  const std::size_t n = assignments.front().size();
  std::vector<int> tally(n * static_cast<std::size_t>(n_labels), 0);
  for (const auto& S : assignments) {
    if (S.size() != n) {
      throw InvalidParameter("MAP partition: assignment vectors differ in length");
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (S[i] < 0 || S[i] >= n_labels) throw InvalidParameter("MAP partition: label out of range");
      ++tally[i * static_cast<std::size_t>(n_labels) + static_cast<std::size_t>(S[i])];
    }
  }
  std::vector<int> modal(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto* row = &tally[i * static_cast<std::size_t>(n_labels)];
    modal[i] = static_cast<int>(std::max_element(row, row + n_labels) - row);  // first max wins
  }
  return modal;
}

std::vector<std::vector<int>> relabeled_assignments(const IdentifiedDraws& identified) {
  std::vector<std::vector<int>> out;
  out.reserve(identified.relabeled.size());
  for (const auto& sw : identified.relabeled) {
    if (sw.S.empty()) {
      throw EmptySelection("MAP partition: assignments were not stored");
    }
    out.push_back(sw.S);
  }
  return out;
}

}  // namespace

Partition map_partition(const std::vector<std::vector<int>>& assignments, int n_labels) {
  return make_partition(modal_labels(assignments, n_labels));
}

Partition map_partition(const IdentifiedDraws& identified) {
  return map_partition(relabeled_assignments(identified), identified.k_plus);
}

std::vector<int> modal_label_sizes(const IdentifiedDraws& identified) {
  std::vector<int> sizes(static_cast<std::size_t>(identified.k_plus), 0);
  for (int l : modal_labels(relabeled_assignments(identified), identified.k_plus)) {
    ++sizes[static_cast<std::size_t>(l)];
  }
  return sizes;
}

MatrixXd coallocation_matrix(const std::vector<std::vector<int>>& assignments) {
  if (assignments.empty()) {
    throw EmptySelection("co-allocation: no assignment draws");
  }
  const auto n = static_cast<Eigen::Index>(assignments.front().size());
  MatrixXd m = MatrixXd::Zero(n, n);
  for (const auto& S : assignments) {
    if (static_cast<Eigen::Index>(S.size()) != n) {
      throw InvalidParameter("co-allocation: assignment vectors differ in length");
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = i; j < n; ++j) {
        if (S[static_cast<std::size_t>(i)] == S[static_cast<std::size_t>(j)]) m(i, j) += 1.0;
      }
    }
  }
  m /= static_cast<double>(assignments.size());
  m.triangularView<Eigen::StrictlyLower>() = m.transpose();
  return m;
}

double variation_of_information(std::span<const int> a, std::span<const int> b) {
  if (a.size() != b.size()) {
    throw InvalidParameter("VI: partitions differ in length");
  }
  if (a.empty()) return 0.0;
  const auto pa = make_partition(a);
  const auto pb = make_partition(b);
  std::vector<int> cells;
  return vi_compact(pa.labels, pa.n_groups, pb.labels, pb.n_groups, nlogn_table(a.size()), cells);
}

Partition vi_partition(const std::vector<std::vector<int>>& assignments, std::size_t max_candidates) {
  if (assignments.empty()) {
    throw EmptySelection("VI partition: no assignment draws");
  }
  const std::size_t n = assignments.front().size();
  // Distinct partitions in order of first appearance, with multiplicities.
  std::map<std::vector<int>, std::size_t> index;
  std::vector<std::vector<int>> unique;
  std::vector<int> groups;
  std::vector<double> weight;
  for (const auto& S : assignments) {
    if (S.size() != n) throw InvalidParameter("VI partition: assignment vectors differ in length");
    auto c = canonical(S);
    auto [it, inserted] = index.try_emplace(c, unique.size());
    if (inserted) {
      groups.push_back(label_count(c));
      unique.push_back(std::move(c));
      weight.push_back(0.0);
    }
    weight[it->second] += 1.0;
  }

  std::vector<std::size_t> candidates;
  const std::size_t stride = max_candidates == 0 ? 1 : (unique.size() + max_candidates - 1) / max_candidates;
  for (std::size_t u = 0; u < unique.size(); u += std::max<std::size_t>(stride, 1)) candidates.push_back(u);

  const auto nlogn = nlogn_table(n);
  std::vector<int> cells;
  std::size_t best = candidates.front();
  double best_loss = std::numeric_limits<double>::infinity();
  for (std::size_t c : candidates) {
    double loss = 0.0;
    for (std::size_t u = 0; u < unique.size() && loss < best_loss * static_cast<double>(assignments.size()); ++u) {
      if (u == c) continue;
      loss += weight[u] * vi_compact(unique[c], groups[c], unique[u], groups[u], nlogn, cells);
    }
    loss /= static_cast<double>(assignments.size());
    if (loss < best_loss) {
      best_loss = loss;
      best = c;
    }
  }
  return make_partition(unique[best]);
}

double adjusted_rand_index(std::span<const int> a, std::span<const int> b) {
  if (a.size() != b.size()) {
    throw InvalidParameter("ARI: partitions differ in length");
  }
  const auto n = static_cast<double>(a.size());
  if (a.size() < 2) return 1.0;
  const auto pa = make_partition(a);
  const auto pb = make_partition(b);
  std::vector<double> joint(static_cast<std::size_t>(pa.n_groups * pb.n_groups), 0.0);
  std::vector<double> ra(static_cast<std::size_t>(pa.n_groups), 0.0), rb(static_cast<std::size_t>(pb.n_groups), 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    joint[static_cast<std::size_t>(pa.labels[i] * pb.n_groups + pb.labels[i])] += 1.0;
    ra[static_cast<std::size_t>(pa.labels[i])] += 1.0;
    rb[static_cast<std::size_t>(pb.labels[i])] += 1.0;
  }
  double index = 0.0, sum_a = 0.0, sum_b = 0.0;
  for (double v : joint) index += choose2(v);
  for (double v : ra) sum_a += choose2(v);
  for (double v : rb) sum_b += choose2(v);
  const double expected = sum_a * sum_b / choose2(n);
  const double max_index = 0.5 * (sum_a + sum_b);
  if (max_index == expected) return 1.0;
  return (index - expected) / (max_index - expected);
}

double ari(const Partition& a, const Partition& b) { return adjusted_rand_index(a.labels, b.labels); }

Confusion confusion_and_mcr(const Partition& estimated, const Partition& truth) {
  if (estimated.labels.size() != truth.labels.size()) {
    throw InvalidParameter("confusion: partitions differ in length");
  }
  const auto est = make_partition(estimated.labels);
  const auto tru = make_partition(truth.labels);
  const int gt = tru.n_groups, ge = est.n_groups;
  Eigen::MatrixXi counts = Eigen::MatrixXi::Zero(gt, ge);
  std::vector<int> size_truth(static_cast<std::size_t>(gt), 0), size_e(static_cast<std::size_t>(ge), 0);
  for (std::size_t i = 0; i < est.labels.size(); ++i) {
    ++counts(tru.labels[i], est.labels[i]);
    ++size_truth[static_cast<std::size_t>(tru.labels[i])];
    ++size_e[static_cast<std::size_t>(est.labels[i])];
  }
  auto by_size = [](const std::vector<int>& sizes) {
    std::vector<int> order(sizes.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return sizes[static_cast<std::size_t>(a)] < sizes[static_cast<std::size_t>(b)]; });
    return order;
  };
  const auto rows = by_size(size_truth);
  const auto cols_by_size = by_size(size_e);

  // Greedy alignment: repeatedly match the largest remaining cell.
  std::vector<int> match(static_cast<std::size_t>(gt), -1);
  std::vector<char> col_used(static_cast<std::size_t>(ge), 0);
  for (int step = 0; step < std::min(gt, ge); ++step) {
    int best_r = -1, best_c = -1, best_v = -1;
    for (int r : rows) {
      if (match[static_cast<std::size_t>(r)] >= 0) continue;
      for (int c : cols_by_size) {
        if (col_used[static_cast<std::size_t>(c)]) continue;
        if (counts(r, c) > best_v) {
          best_v = counts(r, c);
          best_r = r;
          best_c = c;
        }
      }
    }
    match[static_cast<std::size_t>(best_r)] = best_c;
    col_used[static_cast<std::size_t>(best_c)] = 1;
  }

  Confusion out;
  out.truth_groups = rows;
  for (int r : rows) {
    if (match[static_cast<std::size_t>(r)] >= 0) out.estimated_groups.push_back(match[static_cast<std::size_t>(r)]);
  }
  for (int c : cols_by_size) {
    if (!col_used[static_cast<std::size_t>(c)]) out.estimated_groups.push_back(c);
  }
  out.table.resize(gt, ge);
  for (int i = 0; i < gt; ++i) {
    for (int j = 0; j < ge; ++j) {
      out.table(i, j) = counts(rows[static_cast<std::size_t>(i)], out.estimated_groups[static_cast<std::size_t>(j)]);
    }
  }
  int diag = 0;
  for (int r = 0; r < gt; ++r) {
    if (match[static_cast<std::size_t>(r)] >= 0) diag += counts(r, match[static_cast<std::size_t>(r)]);
  }
  out.mcr = 1.0 - static_cast<double>(diag) / static_cast<double>(estimated.labels.size());
  return out;
}

}  // namespace bmix
