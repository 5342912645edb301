#include "pvhc/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

namespace pvhc::clustering {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double sq_dist(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

double dist(std::span<const double> a, std::span<const double> b) { return std::sqrt(sq_dist(a, b)); }

Matrix pairwise_distances(const Matrix& x) {
  const std::size_t n = x.rows();
  Matrix d(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) d(i, j) = d(j, i) = dist(x.row(i), x.row(j));
  return d;
}

Matrix centroids_of(const Matrix& x, const ClusterAssignment& a) {
  Matrix c(static_cast<std::size_t>(a.k), x.cols());
  std::vector<double> counts(static_cast<std::size_t>(a.k), 0.0);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const auto l = static_cast<std::size_t>(a.labels[i]);
    counts[l] += 1.0;
    auto row = c.row(l);
    const auto xi = x.row(i);
    for (std::size_t j = 0; j < x.cols(); ++j) row[j] += xi[j];
  }
  for (std::size_t l = 0; l < c.rows(); ++l)
    for (double& v : c.row(l)) v /= counts[l];
  return c;
}

void check_k(const Matrix& x, int k) {
  if (k < 1) throw Error("cluster count must be at least 1");
  if (static_cast<std::size_t>(k) > x.rows())
    throw Error("cluster count " + std::to_string(k) + " exceeds the number of profiles " +
                std::to_string(x.rows()));
}

}  // namespace

std::string to_string(Algorithm a) {
  switch (a) {
    case Algorithm::kKMeans: return "kmeans";
    case Algorithm::kGmm: return "gmm";
    case Algorithm::kAgglomerative: return "agglomerative";
  }
  return "unknown";
}

Algorithm algorithm_from_string(const std::string& name) {
  if (name == "kmeans") return Algorithm::kKMeans;
  if (name == "gmm") return Algorithm::kGmm;
  if (name == "agglomerative") return Algorithm::kAgglomerative;
  throw Error("unknown clustering algorithm '" + name + "'");
}

std::vector<std::vector<std::size_t>> ClusterAssignment::member_sets() const {
  std::vector<std::vector<std::size_t>> sets(static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < labels.size(); ++i) sets[static_cast<std::size_t>(labels[i])].push_back(i);
  return sets;
}

std::vector<std::size_t> ClusterAssignment::sizes() const {
  std::vector<std::size_t> s(static_cast<std::size_t>(k), 0);
  for (int l : labels) ++s[static_cast<std::size_t>(l)];
  return s;
}

void ClusterAssignment::validate(std::size_t rows) const {
  if (labels.size() != rows) throw Error("assignment does not cover every transformer");
  for (int l : labels)
    if (l < 0 || l >= k) throw Error("cluster label out of range");
  for (std::size_t s : sizes())
    if (s == 0) throw Error("assignment has an empty cluster");
}

RepresentativeProfileMatrix representative_profiles(const LoadProfileSet& data) {
  data.validate();
  const std::size_t steps = data.steps_per_day();
  RepresentativeProfileMatrix out;
  out.profiles = Matrix(data.transformers.size(), steps);
  for (std::size_t m = 0; m < data.transformers.size(); ++m) {
    const auto& tr = data.transformers[m];
    auto row = out.profiles.row(m);
    for (const auto& rec : tr.records)
      for (std::size_t t = 0; t < steps; ++t) row[t] += rec[t];
    const auto n = static_cast<double>(tr.records.size());
    for (double& v : row) v /= n;
    out.transformer_ids.push_back(tr.id);
  }
  return out;
}

Matrix normalize_rows_by_mean(const Matrix& x) {
  Matrix out = x;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto row = out.row(i);
    const double m = mean(row);
    if (m > 0.0)
      for (double& v : row) v /= m;
  }
  return out;
}

KMeansResult kmeans(const Matrix& x, int k, const RngStream& stream, int max_iter) {
  check_k(x, k);
  const std::size_t n = x.rows();
  const auto kk = static_cast<std::size_t>(k);
  auto rng = stream.engine();

  // k-means++ seeding.
  Matrix centroids(kk, x.cols());
  std::vector<double> d2(n, kInf);
  std::size_t first = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
  std::copy(x.row(first).begin(), x.row(first).end(), centroids.row(0).begin());
  for (std::size_t c = 1; c < kk; ++c) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], sq_dist(x.row(i), centroids.row(c - 1)));
      total += d2[i];
    }
    std::size_t pick = 0;
    if (total > 0.0) {
      double u = std::uniform_real_distribution<double>(0.0, total)(rng);
      for (pick = 0; pick + 1 < n; ++pick) {
        if (u < d2[pick]) break;
        u -= d2[pick];
      }
      // Never pick a point that already coincides with a centroid.
      while (d2[pick] == 0.0) pick = (pick + 1) % n;
    } else {
      pick = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
    }
    std::copy(x.row(pick).begin(), x.row(pick).end(), centroids.row(c).begin());
  }

  KMeansResult res;
  res.assignment.k = k;
  res.assignment.algorithm = Algorithm::kKMeans;
  auto& labels = res.assignment.labels;
  labels.assign(n, -1);
  std::vector<double> best_d(n, 0.0);

  for (int it = 0; it < max_iter; ++it) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      int best = 0;
      double bd = kInf;
      for (std::size_t c = 0; c < kk; ++c) {
        const double d = sq_dist(x.row(i), centroids.row(c));
        if (d < bd) {
          bd = d;
          best = static_cast<int>(c);
        }
      }
      best_d[i] = bd;
      if (labels[i] != best) {
        labels[i] = best;
        changed = true;
      }
    }

    // Re-seed empty clusters at the point farthest from its centroid.
    auto sizes = res.assignment.sizes();
    for (std::size_t c = 0; c < kk; ++c) {
      if (sizes[c] != 0) continue;
      std::size_t far = 0;
      double fd = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (sizes[static_cast<std::size_t>(labels[i])] > 1 && best_d[i] > fd) {
          fd = best_d[i];
          far = i;
        }
      }
      --sizes[static_cast<std::size_t>(labels[far])];
      labels[far] = static_cast<int>(c);
      best_d[far] = 0.0;
      sizes[c] = 1;
      changed = true;
    }

    res.iterations = it + 1;
    centroids = centroids_of(x, res.assignment);
    if (!changed) break;
  }

  res.centroids = std::move(centroids);
  res.inertia = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    res.inertia += sq_dist(x.row(i), res.centroids.row(static_cast<std::size_t>(labels[i])));
  return res;
}

namespace {

double log_sum_exp(std::span<const double> v) {
  const double m = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

// Per-component log(weight * N(x | mean, diag var)).
void component_log_densities(std::span<const double> xi, const GmmModel& model, std::span<double> out) {
  const std::size_t d = xi.size();
  constexpr double kLog2Pi = 1.8378770664093454835606594728112;
  for (std::size_t c = 0; c < out.size(); ++c) {
    double acc = std::log(model.weights[c]) - 0.5 * static_cast<double>(d) * kLog2Pi;
    const auto mu = model.means.row(c);
    const auto var = model.variances.row(c);
    for (std::size_t j = 0; j < d; ++j) {
      const double diff = xi[j] - mu[j];
      acc -= 0.5 * (std::log(var[j]) + diff * diff / var[j]);
    }
    out[c] = acc;
  }
}

}  // namespace

double gmm_loglik(const Matrix& x, const GmmModel& model) {
  std::vector<double> lp(model.weights.size());
  double ll = 0.0;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    component_log_densities(x.row(i), model, lp);
    ll += log_sum_exp(lp);
  }
  return ll;
}

GmmResult gmm_fit(const Matrix& x, int k, const RngStream& stream, const GmmOptions& opts) {
  check_k(x, k);
  const std::size_t n = x.rows();
  const std::size_t d = x.cols();
  const auto kk = static_cast<std::size_t>(k);

  GmmResult res;
  auto& model = res.model;

  // Initialise from k-means (a single component needs no seeding).
  ClusterAssignment init;
  if (k == 1) {
    init.k = 1;
    init.labels.assign(n, 0);
  } else {
    init = kmeans(x, k, stream.child(tag(StreamTag::kClustering))).assignment;
  }
  model.means = centroids_of(x, init);
  model.variances = Matrix(kk, d, 0.0);
  model.weights.assign(kk, 0.0);

  std::vector<double> global_var(d, 0.0);
  {
    std::vector<double> gm(d, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) gm[j] += x(i, j) / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) global_var[j] += (x(i, j) - gm[j]) * (x(i, j) - gm[j]) / static_cast<double>(n);
  }
  const auto sizes = init.sizes();
  for (std::size_t i = 0; i < n; ++i) {
    const auto c = static_cast<std::size_t>(init.labels[i]);
    for (std::size_t j = 0; j < d; ++j) {
      const double diff = x(i, j) - model.means(c, j);
      model.variances(c, j) += diff * diff / static_cast<double>(sizes[c]);
    }
  }
  for (std::size_t c = 0; c < kk; ++c) {
    model.weights[c] = static_cast<double>(sizes[c]) / static_cast<double>(n);
    for (std::size_t j = 0; j < d; ++j) {
      if (sizes[c] < 2) model.variances(c, j) = global_var[j];
      if (model.variances(c, j) < opts.variance_floor) {
        model.variances(c, j) = opts.variance_floor;
        res.variance_floored = true;
      }
    }
  }

  Matrix resp(n, kk);
  std::vector<double> lp(kk);
  double prev = -kInf;
  for (int it = 0; it < opts.max_iter; ++it) {
    // E-step.
    double ll = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      component_log_densities(x.row(i), model, lp);
      const double lse = log_sum_exp(lp);
      ll += lse;
      for (std::size_t c = 0; c < kk; ++c) resp(i, c) = std::exp(lp[c] - lse);
    }
    res.loglik_history.push_back(ll);
    res.loglik = ll;
    if (!std::isfinite(ll)) break;
    if (it > 0 && ll - prev < opts.tolerance) {
      res.converged = true;
      break;
    }
    prev = ll;

    // M-step; the floor keeps this the constrained maximizer.
    for (std::size_t c = 0; c < kk; ++c) {
      double nk = 0.0;
      for (std::size_t i = 0; i < n; ++i) nk += resp(i, c);
      if (nk <= 0.0) {
        // Dead component: keep parameters, vanishing weight.
        model.weights[c] = std::numeric_limits<double>::min();
        continue;
      }
      model.weights[c] = nk / static_cast<double>(n);
      for (std::size_t j = 0; j < d; ++j) {
        double mu = 0.0;
        for (std::size_t i = 0; i < n; ++i) mu += resp(i, c) * x(i, j);
        mu /= nk;
        double var = 0.0;
        for (std::size_t i = 0; i < n; ++i) var += resp(i, c) * (x(i, j) - mu) * (x(i, j) - mu);
        var /= nk;
        if (var < opts.variance_floor) {
          var = opts.variance_floor;
          res.variance_floored = true;
        }
        model.means(c, j) = mu;
        model.variances(c, j) = var;
      }
    }
  }

  res.assignment.k = k;
  res.assignment.algorithm = Algorithm::kGmm;
  res.assignment.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    component_log_densities(x.row(i), model, lp);
    res.assignment.labels[i] = static_cast<int>(std::max_element(lp.begin(), lp.end()) - lp.begin());
  }

  // Hardening can leave a component without members; relabel densely.
  auto sz = res.assignment.sizes();
  std::vector<int> remap(kk, -1);
  int next = 0;
  for (std::size_t c = 0; c < kk; ++c)
    if (sz[c] > 0) remap[c] = next++;
  if (next != k) {
    for (int& l : res.assignment.labels) l = remap[static_cast<std::size_t>(l)];
    res.assignment.k = next;
  }
  return res;
}

AgglomerativeResult agglomerative(const Matrix& x, int k) {
  check_k(x, k);
  const std::size_t n = x.rows();
  Matrix d = pairwise_distances(x);
  std::vector<double> size(n, 1.0);
  std::vector<bool> active(n, true);
  std::vector<std::size_t> owner(n);
  std::iota(owner.begin(), owner.end(), 0);

  AgglomerativeResult res;
  std::size_t clusters = n;
  while (clusters > static_cast<std::size_t>(k)) {
    std::size_t bi = 0, bj = 0;
    double bd = kInf;
    for (std::size_t i = 0; i < n; ++i) {
      if (!active[i]) continue;
      for (std::size_t j = i + 1; j < n; ++j) {
        if (active[j] && d(i, j) < bd) {
          bd = d(i, j);
          bi = i;
          bj = j;
        }
      }
    }
    // Lance-Williams update for average linkage.
    for (std::size_t m = 0; m < n; ++m) {
      if (!active[m] || m == bi || m == bj) continue;
      const double v = (size[bi] * d(bi, m) + size[bj] * d(bj, m)) / (size[bi] + size[bj]);
      d(bi, m) = d(m, bi) = v;
    }
    size[bi] += size[bj];
    active[bj] = false;
    for (auto& o : owner)
      if (o == bj) o = bi;
    res.merges.push_back({bi, bj, bd});
    --clusters;
  }

  std::vector<int> label_of(n, -1);
  int next = 0;
  for (std::size_t i = 0; i < n; ++i)
    if (active[i]) label_of[i] = next++;
  res.assignment.k = k;
  res.assignment.algorithm = Algorithm::kAgglomerative;
  res.assignment.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) res.assignment.labels[i] = label_of[owner[i]];
  return res;
}

ValidityScores validity_indices(const Matrix& x, const ClusterAssignment& a) {
  a.validate(x.rows());
  if (a.k < 2) throw Error("validity indices need at least two clusters");
  const std::size_t n = x.rows();
  const auto k = static_cast<std::size_t>(a.k);
  const Matrix d = pairwise_distances(x);
  const Matrix c = centroids_of(x, a);
  const auto members = a.member_sets();
  ValidityScores s;

  // Silhouette.
  double si_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto own = static_cast<std::size_t>(a.labels[i]);
    if (members[own].size() < 2) continue;
    std::vector<double> mean_to(k, 0.0);
    for (std::size_t j = 0; j < n; ++j) mean_to[static_cast<std::size_t>(a.labels[j])] += d(i, j);
    const double ai = mean_to[own] / static_cast<double>(members[own].size() - 1);
    double bi = kInf;
    for (std::size_t l = 0; l < k; ++l)
      if (l != own) bi = std::min(bi, mean_to[l] / static_cast<double>(members[l].size()));
    const double denom = std::max(ai, bi);
    if (denom > 0.0) si_sum += (bi - ai) / denom;
  }
  s.si = si_sum / static_cast<double>(n);

  // Calinski-Harabasz.
  std::vector<double> grand(x.cols(), 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < x.cols(); ++j) grand[j] += x(i, j) / static_cast<double>(n);
  double tr_b = 0.0, tr_w = 0.0;
  for (std::size_t l = 0; l < k; ++l) tr_b += static_cast<double>(members[l].size()) * sq_dist(c.row(l), grand);
  for (std::size_t i = 0; i < n; ++i) tr_w += sq_dist(x.row(i), c.row(static_cast<std::size_t>(a.labels[i])));
  if (tr_w > 0.0 && n > k)
    s.chi = (tr_b / static_cast<double>(k - 1)) / (tr_w / static_cast<double>(n - k));
  else
    s.chi = tr_b > 0.0 ? kInf : 0.0;

  // Davies-Bouldin.
  std::vector<double> scatter(k, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto l = static_cast<std::size_t>(a.labels[i]);
    scatter[l] += dist(x.row(i), c.row(l)) / static_cast<double>(members[l].size());
  }
  double dbi = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    double worst = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      if (i == j) continue;
      const double dij = dist(c.row(i), c.row(j));
      const double r = dij > 0.0 ? (scatter[i] + scatter[j]) / dij : kInf;
      worst = std::max(worst, r);
    }
    dbi += worst;
  }
  s.dbi = dbi / static_cast<double>(k);

  // Dunn: single-link separation over complete diameter.
  double min_sep = kInf, max_diam = 0.0, max_mean_intra = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      if (a.labels[i] == a.labels[j])
        max_diam = std::max(max_diam, d(i, j));
      else
        min_sep = std::min(min_sep, d(i, j));
    }
  if (max_diam > 0.0) {
    s.di = min_sep / max_diam;
  } else {
    s.di = kInf;
    s.di_infinite = true;
  }

  // Modified Dunn: centroid separation over mean pairwise intra-cluster distance.
  double min_centroid = kInf;
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = i + 1; j < k; ++j) min_centroid = std::min(min_centroid, dist(c.row(i), c.row(j)));
  for (std::size_t l = 0; l < k; ++l) {
    const auto& m = members[l];
    if (m.size() < 2) continue;
    double sum = 0.0;
    for (std::size_t p = 0; p < m.size(); ++p)
      for (std::size_t q = p + 1; q < m.size(); ++q) sum += d(m[p], m[q]);
    const double pairs = static_cast<double>(m.size() * (m.size() - 1) / 2);
    max_mean_intra = std::max(max_mean_intra, sum / pairs);
  }
  if (max_mean_intra > 0.0) {
    s.mdi = min_centroid / max_mean_intra;
  } else {
    s.mdi = kInf;
    s.mdi_infinite = true;
  }
  return s;
}

ClusterAssignment run_algorithm(const Matrix& x, Algorithm algorithm, int k, const RngStream& stream) {
  switch (algorithm) {
    case Algorithm::kKMeans: return kmeans(x, k, stream).assignment;
    case Algorithm::kGmm: return gmm_fit(x, k, stream).assignment;
    case Algorithm::kAgglomerative: return agglomerative(x, k).assignment;
  }
  throw Error("unknown clustering algorithm");
}

namespace {

// Index of the candidate each validity index prefers, then the vote winner.
std::size_t vote(const std::vector<ValidityScores>& cand) {
  const std::size_t n = cand.size();
  std::vector<int> votes(n, 0);
  auto best_by = [&](auto key) {
    std::size_t b = 0;
    for (std::size_t i = 1; i < n; ++i)
      if (key(cand[i]) > key(cand[b])) b = i;
    ++votes[b];
  };
  best_by([](const ValidityScores& s) { return s.si; });
  best_by([](const ValidityScores& s) { return s.chi; });
  best_by([](const ValidityScores& s) { return -s.dbi; });
  best_by([](const ValidityScores& s) { return s.di; });
  best_by([](const ValidityScores& s) { return s.mdi; });
  std::size_t win = 0;
  for (std::size_t i = 1; i < n; ++i) {
    if (votes[i] > votes[win] || (votes[i] == votes[win] && cand[i].si > cand[win].si)) win = i;
  }
  return win;
}

}  // namespace

SweepResult sweep_select(const Matrix& x, const SweepOptions& opts, const RngStream& stream) {
  if (opts.k_min < 2 || opts.k_max < opts.k_min) throw Error("invalid cluster-count range");
  if (opts.algorithms.empty()) throw Error("no clustering algorithms requested");
  const int k_hi = std::min<int>(opts.k_max, static_cast<int>(x.rows()) - 1);
  if (k_hi < opts.k_min) throw Error("too few profiles for the requested cluster-count range");

  SweepResult res;
  std::vector<ClusterAssignment> winners;
  std::vector<ValidityScores> winner_scores;
  for (Algorithm alg : opts.algorithms) {
    std::vector<ClusterAssignment> assignments;
    std::vector<ValidityScores> scores;
    for (int k = opts.k_min; k <= k_hi; ++k) {
      auto a = run_algorithm(x, alg, k,
                             stream.child({static_cast<std::uint64_t>(alg), static_cast<std::uint64_t>(k)}));
      if (a.k < 2) continue;  // a collapsed mixture cannot be scored
      auto sc = validity_indices(x, a);
      res.table.push_back({alg, k, sc, a.sizes()});
      assignments.push_back(std::move(a));
      scores.push_back(sc);
    }
    if (assignments.empty()) continue;
    const std::size_t w = vote(scores);
    res.selected_k.emplace_back(alg, assignments[w].k);
    winners.push_back(assignments[w]);
    winner_scores.push_back(scores[w]);
  }
  if (winners.empty()) throw Error("no clustering produced a scorable partition");
  const std::size_t w = vote(winner_scores);
  res.best = winners[w];
  res.low_confidence = winner_scores[w].si < opts.low_confidence_si;
  return res;
}

}  // namespace pvhc::clustering
