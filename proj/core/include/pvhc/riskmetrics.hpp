#pragma once

// Duration-constrained voltage statistics and the intensity / duration /
// frequency risk metrics built on them.

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pvhc/core.hpp"

namespace pvhc::risk {

struct VoltageLimits {
  double v_max = 1.05;
  double v_caution = 1.047;
  double v_min = 0.94;

  void validate() const;
};

/// Ordered set of moving-window durations, all multiples of delta_t.
struct DurationGrid {
  int delta_t_min = 15;
  std::vector<int> durations_min{15, 30, 60, 120, 240, 360, 720, 1440};

  void validate(std::size_t steps_per_day) const;
  std::size_t window(int tau_min) const;
  std::size_t index_of(int tau_min) const;
};

enum class Direction { kOver, kUnder };

enum class Region { kSafe, kCaution, kOvervoltage, kUndervoltage, kBoth };

std::string to_string(Region r);
Region region_from_string(const std::string& s);

/// max over window starts of the window mean of node-wise maxima.
/// `v` is node x time; `window` is the window length in steps.
double phi_ov(const Matrix& v, std::size_t window);
/// min over window starts of the window mean of node-wise minima.
double phi_uv(const Matrix& v, std::size_t window);

double phi_ov(const Matrix& v, int tau_min, int delta_t_min);
double phi_uv(const Matrix& v, int tau_min, int delta_t_min);

/// Both statistics for every duration of the grid, computed in one pass.
struct PhiPair {
  std::vector<double> ov;  // indexed like DurationGrid::durations_min
  std::vector<double> uv;
};
PhiPair phi_all(const Matrix& v, const DurationGrid& grid);

/// Fraction of scenarios with phi > limit (over) or phi < limit (under).
double frequency(std::span<const double> phi, double limit, Direction dir);

/// q-th percentile of the statistic across scenarios.
double intensity(std::span<const double> phi, double q);

/// Largest duration whose q-th percentile still violates the limit
/// (>= v_max over, <= v_min under). `phi_by_duration` follows the grid order.
std::optional<int> representative_duration(const std::vector<std::vector<double>>& phi_by_duration, double q,
                                            const VoltageLimits& limits, const DurationGrid& grid, Direction dir);

Region classify_region(double intensity_ov, double intensity_uv, const VoltageLimits& limits);

/// Risk level r (%) evaluates the (100 - r)-th percentile for overvoltage and
/// the r-th percentile for undervoltage.
inline double over_percentile(double risk) { return 100.0 - risk; }
inline double under_percentile(double risk) { return risk; }

struct HostingCapacity {
  std::optional<double> percent;  // empty when growth 0 already violates
  bool full_range = false;
  bool non_monotone = false;

  double value_or_zero() const { return percent.value_or(0.0); }
  std::string flag() const;
};

/// Largest PV growth with intensity <= v_max, refined by linear interpolation
/// across the first upward crossing of the limit.
HostingCapacity hosting_capacity(std::span<const double> pv_growth_pct, std::span<const double> intensity_by_growth,
                                 double v_max);

/// Per-scenario statistics of one (energy, PV) grid cell.
struct CellPhi {
  std::vector<std::vector<double>> ov;  // [duration][scenario]
  std::vector<std::vector<double>> uv;
  std::size_t excluded = 0;             // scenarios dropped for non-convergence
};

struct CellSummary {
  std::vector<double> frequency_ov;  // [duration]
  std::vector<double> frequency_uv;
  std::vector<std::vector<double>> intensity_ov;  // [risk][duration]
  std::vector<std::vector<double>> intensity_uv;
  std::vector<std::vector<Region>> region;        // [risk][duration]
};

/// The queryable planning product: statistics per (energy step, PV step).
class RiskSurface {
 public:
  RiskSurface() = default;
  RiskSurface(std::size_t energy_steps, std::size_t pv_steps, DurationGrid grid);

  std::size_t energy_steps() const { return energy_steps_; }
  std::size_t pv_steps() const { return pv_steps_; }
  const DurationGrid& grid() const { return grid_; }

  CellPhi& cell(std::size_t e, std::size_t p) { return cells_.at(e * pv_steps_ + p); }
  const CellPhi& cell(std::size_t e, std::size_t p) const { return cells_.at(e * pv_steps_ + p); }

  /// Growth in % of the range for a step index.
  double energy_growth_pct(std::size_t e) const;
  double pv_growth_pct(std::size_t p) const;

  /// Computes cached frequencies, intensities and regions.
  void summarize(const VoltageLimits& limits, const std::vector<double>& risk_levels);
  bool summarized() const { return !summaries_.empty(); }
  const CellSummary& summary(std::size_t e, std::size_t p) const { return summaries_.at(e * pv_steps_ + p); }
  const std::vector<double>& risk_levels() const { return risk_levels_; }
  const VoltageLimits& limits() const { return limits_; }

  HostingCapacity hosting_capacity_at(std::size_t energy_step, double risk, int tau_min) const;

 private:
  std::size_t energy_steps_ = 0;
  std::size_t pv_steps_ = 0;
  DurationGrid grid_;
  std::vector<CellPhi> cells_;
  std::vector<CellSummary> summaries_;
  std::vector<double> risk_levels_;
  VoltageLimits limits_;
};

}  // namespace pvhc::risk
