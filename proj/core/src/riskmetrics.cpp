#include "pvhc/riskmetrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace pvhc::risk {

void VoltageLimits::validate() const {
  if (!(v_min < v_caution && v_caution < v_max)) throw Error("voltage limits must satisfy v_min < v_caution < v_max");
}

void DurationGrid::validate(std::size_t steps_per_day) const {
  if (delta_t_min <= 0) throw Error("delta_t must be positive");
  if (durations_min.empty()) throw Error("duration grid is empty");
  for (std::size_t i = 0; i < durations_min.size(); ++i) {
    const int tau = durations_min[i];
    if (tau <= 0 || tau % delta_t_min != 0)
      throw Error("duration " + std::to_string(tau) + " min is not a multiple of delta_t");
    if (static_cast<std::size_t>(tau / delta_t_min) > steps_per_day)
      throw Error("duration " + std::to_string(tau) + " min exceeds one day");
    if (i > 0 && tau <= durations_min[i - 1]) throw Error("durations must be strictly increasing");
  }
}

std::size_t DurationGrid::window(int tau_min) const {
  if (tau_min <= 0 || tau_min % delta_t_min != 0)
    throw Error("duration " + std::to_string(tau_min) + " min is not a multiple of delta_t");
  return static_cast<std::size_t>(tau_min / delta_t_min);
}

std::size_t DurationGrid::index_of(int tau_min) const {
  for (std::size_t i = 0; i < durations_min.size(); ++i)
    if (durations_min[i] == tau_min) return i;
  throw Error("duration " + std::to_string(tau_min) + " min is not part of the duration grid");
}

std::string to_string(Region r) {
  switch (r) {
    case Region::kSafe: return "safe";
    case Region::kCaution: return "caution";
    case Region::kOvervoltage: return "overvoltage";
    case Region::kUndervoltage: return "undervoltage";
    case Region::kBoth: return "both";
  }
  return "unknown";
}

Region region_from_string(const std::string& s) {
  for (Region r : {Region::kSafe, Region::kCaution, Region::kOvervoltage, Region::kUndervoltage, Region::kBoth})
    if (to_string(r) == s) return r;
  throw Error("unknown region '" + s + "'");
}

namespace {

void check_window(const Matrix& v, std::size_t window) {
  if (v.rows() == 0 || v.cols() == 0) throw Error("empty voltage slice");
  if (window < 1) throw Error("window must cover at least one step");
  if (window > v.cols()) throw Error("window longer than the day");
}

std::vector<double> column_extreme(const Matrix& v, bool take_max) {
  std::vector<double> out(v.cols());
  for (std::size_t t = 0; t < v.cols(); ++t) {
    double e = v(0, t);
    for (std::size_t b = 1; b < v.rows(); ++b) e = take_max ? std::max(e, v(b, t)) : std::min(e, v(b, t));
    out[t] = e;
  }
  return out;
}

double window_extreme(const std::vector<double>& series, std::size_t window, bool take_max) {
  double best = take_max ? -std::numeric_limits<double>::infinity() : std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t + window <= series.size(); ++t) {
    double sum = 0.0;
    for (std::size_t i = 0; i < window; ++i) sum += series[t + i];
    const double m = sum / static_cast<double>(window);
    best = take_max ? std::max(best, m) : std::min(best, m);
  }
  return best;
}

std::size_t window_for(int tau_min, int delta_t_min) {
  if (delta_t_min <= 0) throw Error("delta_t must be positive");
  if (tau_min <= 0 || tau_min % delta_t_min != 0)
    throw Error("duration " + std::to_string(tau_min) + " min is not a multiple of delta_t");
  return static_cast<std::size_t>(tau_min / delta_t_min);
}

}  // namespace

double phi_ov(const Matrix& v, std::size_t window) {
  check_window(v, window);
  return window_extreme(column_extreme(v, true), window, true);
}

double phi_uv(const Matrix& v, std::size_t window) {
  check_window(v, window);
  return window_extreme(column_extreme(v, false), window, false);
}

double phi_ov(const Matrix& v, int tau_min, int delta_t_min) { return phi_ov(v, window_for(tau_min, delta_t_min)); }

double phi_uv(const Matrix& v, int tau_min, int delta_t_min) { return phi_uv(v, window_for(tau_min, delta_t_min)); }

PhiPair phi_all(const Matrix& v, const DurationGrid& grid) {
  const auto hi = column_extreme(v, true);
  const auto lo = column_extreme(v, false);
  PhiPair out;
  for (int tau : grid.durations_min) {
    const std::size_t w = grid.window(tau);
    check_window(v, w);
    out.ov.push_back(window_extreme(hi, w, true));
    out.uv.push_back(window_extreme(lo, w, false));
  }
  return out;
}

double frequency(std::span<const double> phi, double limit, Direction dir) {
  if (phi.empty()) throw Error("empty sample");
  std::size_t hits = 0;
  for (double x : phi) hits += (dir == Direction::kOver ? x > limit : x < limit) ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(phi.size());
}

double intensity(std::span<const double> phi, double q) { return percentile(phi, q); }

std::optional<int> representative_duration(const std::vector<std::vector<double>>& phi_by_duration, double q,
                                            const VoltageLimits& limits, const DurationGrid& grid, Direction dir) {
  if (phi_by_duration.size() != grid.durations_min.size())
    throw Error("missing statistics for some durations of the grid");
  std::optional<int> best;
  for (std::size_t i = 0; i < grid.durations_min.size(); ++i) {
    if (phi_by_duration[i].empty()) throw Error("missing statistics for some durations of the grid");
    const double x = intensity(phi_by_duration[i], q);
    const bool violates = dir == Direction::kOver ? x >= limits.v_max : x <= limits.v_min;
    if (violates && (!best || grid.durations_min[i] > *best)) best = grid.durations_min[i];
  }
  return best;
}

Region classify_region(double intensity_ov, double intensity_uv, const VoltageLimits& limits) {
  const bool over = intensity_ov > limits.v_max;
  const bool under = intensity_uv < limits.v_min;
  if (over && under) return Region::kBoth;
  if (over) return Region::kOvervoltage;
  if (under) return Region::kUndervoltage;
  if (intensity_ov > limits.v_caution) return Region::kCaution;
  return Region::kSafe;
}

std::string HostingCapacity::flag() const {
  if (!percent) return "none";
  if (non_monotone) return "non_monotone";
  if (full_range) return "full_range";
  return "ok";
}

HostingCapacity hosting_capacity(std::span<const double> growth, std::span<const double> level, double v_max) {
  if (growth.size() != level.size() || growth.empty()) throw Error("hosting capacity needs one intensity per growth step");
  HostingCapacity hc;
  for (std::size_t i = 1; i < level.size(); ++i)
    if (level[i] < level[i - 1]) hc.non_monotone = true;
  if (level[0] > v_max) return hc;

  std::size_t j = 1;
  while (j < level.size() && level[j] <= v_max) ++j;
  if (j == level.size()) {
    hc.percent = growth.back();
    hc.full_range = true;
    return hc;
  }
  const double frac = (v_max - level[j - 1]) / (level[j] - level[j - 1]);
  hc.percent = growth[j - 1] + frac * (growth[j] - growth[j - 1]);
  return hc;
}

RiskSurface::RiskSurface(std::size_t energy_steps, std::size_t pv_steps, DurationGrid grid)
    : energy_steps_(energy_steps), pv_steps_(pv_steps), grid_(std::move(grid)), cells_(energy_steps * pv_steps) {
  if (energy_steps < 2 || pv_steps < 2) throw Error("planning grid needs at least 2 steps per axis");
  for (auto& c : cells_) {
    c.ov.resize(grid_.durations_min.size());
    c.uv.resize(grid_.durations_min.size());
  }
}

double RiskSurface::energy_growth_pct(std::size_t e) const {
  return 100.0 * static_cast<double>(e) / static_cast<double>(energy_steps_ - 1);
}

double RiskSurface::pv_growth_pct(std::size_t p) const {
  return 100.0 * static_cast<double>(p) / static_cast<double>(pv_steps_ - 1);
}

void RiskSurface::summarize(const VoltageLimits& limits, const std::vector<double>& risk_levels) {
  limits.validate();
  for (double r : risk_levels)
    if (!(r >= 0.0 && r <= 50.0)) throw Error("risk levels must lie in [0, 50]");
  limits_ = limits;
  risk_levels_ = risk_levels;
  summaries_.assign(cells_.size(), {});
  const std::size_t nd = grid_.durations_min.size();
  for (std::size_t c = 0; c < cells_.size(); ++c) {
    const auto& cell = cells_[c];
    auto& s = summaries_[c];
    s.frequency_ov.resize(nd);
    s.frequency_uv.resize(nd);
    s.intensity_ov.assign(risk_levels.size(), std::vector<double>(nd));
    s.intensity_uv.assign(risk_levels.size(), std::vector<double>(nd));
    s.region.assign(risk_levels.size(), std::vector<Region>(nd));
    for (std::size_t d = 0; d < nd; ++d) {
      if (cell.ov[d].empty()) throw Error("grid cell has no converged scenario");
      std::vector<double> ov = cell.ov[d];
      std::vector<double> uv = cell.uv[d];
      std::sort(ov.begin(), ov.end());
      std::sort(uv.begin(), uv.end());
      s.frequency_ov[d] = frequency(ov, limits.v_max, Direction::kOver);
      s.frequency_uv[d] = frequency(uv, limits.v_min, Direction::kUnder);
      for (std::size_t r = 0; r < risk_levels.size(); ++r) {
        s.intensity_ov[r][d] = percentile_sorted(ov, over_percentile(risk_levels[r]));
        s.intensity_uv[r][d] = percentile_sorted(uv, under_percentile(risk_levels[r]));
        s.region[r][d] = classify_region(s.intensity_ov[r][d], s.intensity_uv[r][d], limits);
      }
    }
  }
}

HostingCapacity RiskSurface::hosting_capacity_at(std::size_t energy_step, double risk, int tau_min) const {
  if (energy_step >= energy_steps_) throw Error("energy step outside the planning grid");
  const std::size_t d = grid_.index_of(tau_min);
  std::vector<double> growth(pv_steps_), level(pv_steps_);
  for (std::size_t p = 0; p < pv_steps_; ++p) {
    growth[p] = pv_growth_pct(p);
    level[p] = intensity(cell(energy_step, p).ov[d], over_percentile(risk));
  }
  return hosting_capacity(growth, level, limits_.v_max);
}

}  // namespace pvhc::risk
