#include "pvhc/core.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace pvhc {

Matrix Matrix::from_rows(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) return {};
  Matrix m(rows.size(), rows.front().size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != m.cols()) throw Error("ragged matrix rows");
    std::copy(rows[r].begin(), rows[r].end(), m.row(r).begin());
  }
  return m;
}

std::size_t LoadProfileSet::steps_per_day() const {
  for (const auto& tr : transformers)
    if (!tr.records.empty()) return tr.records.front().size();
  return 0;
}

std::size_t LoadProfileSet::record_count() const {
  std::size_t n = 0;
  for (const auto& tr : transformers) n += tr.records.size();
  return n;
}

void LoadProfileSet::validate() const {
  if (transformers.empty()) throw Error("load profile set has no transformers");
  if (delta_t_min <= 0) throw Error("delta_t must be positive");
  const std::size_t steps = steps_per_day();
  if (steps == 0 || steps * static_cast<std::size_t>(delta_t_min) != kMinutesPerDay)
    throw Error("profile length " + std::to_string(steps) + " x " + std::to_string(delta_t_min) +
                " min does not cover exactly one day");
  for (const auto& tr : transformers) {
    if (tr.records.empty()) throw Error("transformer " + tr.id + " has no records");
    if (tr.annual_energy.size() != tr.records.size())
      throw Error("transformer " + tr.id + " is missing annual energy labels");
    for (std::size_t n = 0; n < tr.records.size(); ++n) {
      if (tr.records[n].size() != steps)
        throw Error("transformer " + tr.id + " has a record of inconsistent length");
      for (double v : tr.records[n])
        if (!std::isfinite(v) || v < 0.0)
          throw Error("transformer " + tr.id + " has a non-finite or negative power value");
      if (!(tr.annual_energy[n] > 0.0))
        throw Error("transformer " + tr.id + " has a non-positive annual energy label");
    }
  }
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

RngStream RngStream::child(std::uint64_t t) const {
  auto p = path_;
  p.push_back(t);
  return RngStream(master_seed_, std::move(p));
}

RngStream RngStream::child(std::initializer_list<std::uint64_t> tags) const {
  auto p = path_;
  p.insert(p.end(), tags.begin(), tags.end());
  return RngStream(master_seed_, std::move(p));
}

std::uint64_t RngStream::key() const {
  // Length is mixed in so that {a} and {a, 0} differ.
  std::uint64_t h = splitmix64(master_seed_ ^ 0x5851f42d4c957f2dULL);
  h = splitmix64(h ^ static_cast<std::uint64_t>(path_.size()));
  for (std::uint64_t p : path_) h = splitmix64(h ^ splitmix64(p + 0x2545f4914f6cdd1dULL));
  return h;
}

double percentile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw Error("empty sample");
  if (!(q >= 0.0 && q <= 100.0)) throw Error("percentile rank outside [0, 100]");
  const std::size_t n = sorted.size();
  if (n == 1) return sorted[0];
  const double h = static_cast<double>(n - 1) * q / 100.0;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo >= n - 1) return sorted[n - 1];
  const double frac = h - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

double percentile(std::span<const double> values, double q) {
  if (values.empty()) throw Error("empty sample");
  for (double v : values)
    if (!std::isfinite(v)) throw Error("non-finite sample");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  return percentile_sorted(sorted, q);
}

double annual_energy_of(std::span<const double> profile_kw, int delta_t_min) {
  if (delta_t_min <= 0) throw Error("delta_t must be positive");
  double kwh = 0.0;
  for (double p : profile_kw) {
    if (p < 0.0) throw Error("negative power in energy accounting");
    kwh += p;
  }
  kwh *= static_cast<double>(delta_t_min) / 60.0;
  return kDaysPerYear * kwh / 1e6;
}

double mean(std::span<const double> values) {
  if (values.empty()) throw Error("empty sample");
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw Error("pearson needs two equal-length samples");
  const double mx = mean(x);
  const double my = mean(y);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

double adjusted_rand_index(std::span<const int> a, std::span<const int> b) {
  if (a.size() != b.size()) throw Error("label vectors differ in length");
  const auto n = static_cast<double>(a.size());
  std::map<std::pair<int, int>, double> joint;
  std::map<int, double> ca, cb;
  for (std::size_t i = 0; i < a.size(); ++i) {
    joint[{a[i], b[i]}] += 1.0;
    ca[a[i]] += 1.0;
    cb[b[i]] += 1.0;
  }
  auto comb2 = [](double x) { return x * (x - 1.0) / 2.0; };
  double index = 0.0, sa = 0.0, sb = 0.0;
  for (const auto& [k, v] : joint) index += comb2(v);
  for (const auto& [k, v] : ca) sa += comb2(v);
  for (const auto& [k, v] : cb) sb += comb2(v);
  const double expected = sa * sb / comb2(n);
  const double max_index = 0.5 * (sa + sb);
  if (max_index == expected) return 1.0;
  return (index - expected) / (max_index - expected);
}

}  // namespace pvhc
