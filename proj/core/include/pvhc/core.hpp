#pragma once

// Shared numeric primitives and the load-profile data model.

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace pvhc {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kMinutesPerDay = 1440;
inline constexpr double kDaysPerYear = 365.0;

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  static Matrix from_rows(const std::vector<std::vector<double>>& rows);

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Daily active-power records of one distribution transformer.
struct TransformerProfiles {
  std::string id;
  std::vector<std::vector<double>> records;  // kW, one vector per day
  std::vector<double> annual_energy;         // GWh/year, aligned to records
};

/// Per-transformer daily profiles with annual-energy labels.
struct LoadProfileSet {
  int delta_t_min = 15;
  std::vector<TransformerProfiles> transformers;

  std::size_t steps_per_day() const;
  std::size_t record_count() const;
  /// Throws pvhc::Error describing the first violated invariant.
  void validate() const;
};

/// Deterministic, path-addressed random stream.
///
/// A stream is identified by (master_seed, path). Child streams extend the
/// path, so any work unit can derive its own stream without touching shared
/// state; identical identities give bitwise-identical engines.
class RngStream {
 public:
  using Engine = std::mt19937_64;

  explicit RngStream(std::uint64_t master_seed, std::vector<std::uint64_t> path = {})
      : master_seed_(master_seed), path_(std::move(path)) {}

  RngStream child(std::uint64_t tag) const;
  RngStream child(std::initializer_list<std::uint64_t> tags) const;

  Engine engine() const { return Engine(key()); }
  std::uint64_t key() const;

  std::uint64_t master_seed() const { return master_seed_; }
  const std::vector<std::uint64_t>& path() const { return path_; }

 private:
  std::uint64_t master_seed_;
  std::vector<std::uint64_t> path_;
};

/// Purpose tags used when deriving child streams.
enum class StreamTag : std::uint64_t {
  kClustering = 1,
  kTraining = 2,
  kSampling = 3,
  kLoad = 4,
  kIrradiance = 5,
};

inline std::uint64_t tag(StreamTag t) { return static_cast<std::uint64_t>(t); }

/// Linear interpolation between closest ranks (h = (n-1) q / 100).
double percentile(std::span<const double> values, double q);

/// Same as percentile() for input that is already sorted ascending.
double percentile_sorted(std::span<const double> sorted, double q);

/// Annualized energy of one daily profile: 365 * sum(P dt) in GWh/year.
double annual_energy_of(std::span<const double> profile_kw, int delta_t_min);

double mean(std::span<const double> values);

/// Pearson correlation coefficient.
double pearson(std::span<const double> x, std::span<const double> y);

/// Adjusted Rand index between two labelings of the same items.
double adjusted_rand_index(std::span<const int> a, std::span<const int> b);

}  // namespace pvhc
