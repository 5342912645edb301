#pragma once

// Representative transformer profiles, partitioning algorithms and internal
// validity indices.

#include <optional>
#include <string>
#include <vector>

#include "pvhc/core.hpp"

namespace pvhc::clustering {

/// M x T matrix of mean daily profiles, one row per transformer.
struct RepresentativeProfileMatrix {
  Matrix profiles;
  std::vector<std::string> transformer_ids;
};

enum class Algorithm { kKMeans, kGmm, kAgglomerative };

std::string to_string(Algorithm a);
Algorithm algorithm_from_string(const std::string& name);

struct ClusterAssignment {
  int k = 0;
  Algorithm algorithm = Algorithm::kKMeans;
  std::vector<int> labels;  // 0-based cluster id per row

  /// Row indices of each cluster.
  std::vector<std::vector<std::size_t>> member_sets() const;
  std::vector<std::size_t> sizes() const;
  void validate(std::size_t rows) const;
};

struct ValidityScores {
  double si = 0.0;
  double chi = 0.0;
  double dbi = 0.0;
  double di = 0.0;
  double mdi = 0.0;
  bool di_infinite = false;
  bool mdi_infinite = false;
};

RepresentativeProfileMatrix representative_profiles(const LoadProfileSet& data);

/// Scales each row by its mean (rows with zero mean are left unchanged).
Matrix normalize_rows_by_mean(const Matrix& x);

struct KMeansResult {
  ClusterAssignment assignment;
  Matrix centroids;
  int iterations = 0;
  double inertia = 0.0;
};

/// Lloyd iterations from k-means++ seeding, at most 300 iterations.
KMeansResult kmeans(const Matrix& x, int k, const RngStream& stream, int max_iter = 300);

struct GmmModel {
  Matrix means;      // k x d
  Matrix variances;  // k x d, diagonal covariances
  std::vector<double> weights;
};

struct GmmResult {
  ClusterAssignment assignment;
  GmmModel model;
  double loglik = 0.0;
  std::vector<double> loglik_history;  // one entry per E-step
  bool converged = false;
  bool variance_floored = false;
};

struct GmmOptions {
  double variance_floor = 1e-6;
  double tolerance = 1e-6;
  int max_iter = 500;
};

/// Diagonal-covariance EM initialized from k-means.
GmmResult gmm_fit(const Matrix& x, int k, const RngStream& stream, const GmmOptions& opts = {});

/// Mixture log-likelihood of x under a fitted model.
double gmm_loglik(const Matrix& x, const GmmModel& model);

struct Merge {
  std::size_t a;  // smaller active cluster representative
  std::size_t b;
  double distance;
};

struct AgglomerativeResult {
  ClusterAssignment assignment;
  std::vector<Merge> merges;
};

/// Average-linkage bottom-up merging with ties broken by smallest pair index.
AgglomerativeResult agglomerative(const Matrix& x, int k);

ValidityScores validity_indices(const Matrix& x, const ClusterAssignment& assignment);

struct SweepRow {
  Algorithm algorithm;
  int k;
  ValidityScores scores;
  std::vector<std::size_t> sizes;
};

struct SweepResult {
  ClusterAssignment best;
  std::vector<SweepRow> table;
  /// k chosen per algorithm, in the order the algorithms were requested.
  std::vector<std::pair<Algorithm, int>> selected_k;
  bool low_confidence = false;
};

struct SweepOptions {
  int k_min = 2;
  int k_max = 12;
  std::vector<Algorithm> algorithms{Algorithm::kKMeans, Algorithm::kGmm, Algorithm::kAgglomerative};
  double low_confidence_si = 0.25;
};

/// Scores every (algorithm, k) cell and selects by majority vote of the five
/// indices (DBI inverted), ties broken by SI.
SweepResult sweep_select(const Matrix& x, const SweepOptions& opts, const RngStream& stream);

ClusterAssignment run_algorithm(const Matrix& x, Algorithm algorithm, int k, const RngStream& stream);

}  // namespace pvhc::clustering
