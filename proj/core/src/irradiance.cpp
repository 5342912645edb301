#include "pvhc/irradiance.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>

#include "pvhc/csv.hpp"

namespace pvhc::irradiance {

void IrradianceLibrary::validate() const {
  if (days.empty()) throw Error("irradiance library is empty");
  if (delta_t_min <= 0 || kMinutesPerDay % delta_t_min != 0) throw Error("irradiance delta_t must divide a day");
  const auto steps = static_cast<std::size_t>(kMinutesPerDay / delta_t_min);
  for (const auto& d : days) {
    if (d.size() != steps) throw Error("irradiance day has the wrong number of samples");
    for (double g : d)
      if (!(g >= 0.0 && g <= kMaxIrradiance)) throw Error("irradiance value outside [0, 1500] W/m2");
  }
  if (!dates.empty() && dates.size() != days.size()) throw Error("irradiance dates misaligned");
  if (!months.empty() && months.size() != days.size()) throw Error("irradiance months misaligned");
}

long long parse_timestamp_minutes(const std::string& text) {
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, s = 0;
  char sep = 0;
  const int n = std::sscanf(text.c_str(), "%d-%d-%d%c%d:%d:%d", &y, &mo, &d, &sep, &h, &mi, &s);
  if (n < 6 || (sep != ' ' && sep != 'T')) throw Error("unparseable timestamp '" + text + "'");
  using namespace std::chrono;
  const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
  if (!ymd.ok() || h < 0 || h > 23 || mi < 0 || mi > 59) throw Error("invalid timestamp '" + text + "'");
  const auto days_since_epoch = sys_days{ymd}.time_since_epoch().count();
  return static_cast<long long>(days_since_epoch) * kMinutesPerDay + h * 60 + mi;
}

std::string format_date(long long minute) {
  using namespace std::chrono;
  const long long day_index = minute >= 0 ? minute / kMinutesPerDay : -((-minute + kMinutesPerDay - 1) / kMinutesPerDay);
  const year_month_day ymd{sys_days{days{day_index}}};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                static_cast<unsigned>(ymd.day()));
  return buf;
}

SegmentResult segment_daily(const std::vector<IrradianceSample>& series, int delta_t_min) {
  if (delta_t_min <= 0 || kMinutesPerDay % delta_t_min != 0) throw Error("irradiance delta_t must divide a day");
  const auto steps = static_cast<std::size_t>(kMinutesPerDay / delta_t_min);

  struct DayBucket {
    std::vector<double> values;
    std::vector<int> hits;
    std::size_t samples = 0;
    bool misaligned = false;
  };
  std::map<long long, DayBucket> buckets;
  for (const auto& smp : series) {
    const long long day = smp.minute >= 0 ? smp.minute / kMinutesPerDay : (smp.minute - kMinutesPerDay + 1) / kMinutesPerDay;
    const long long in_day = smp.minute - day * kMinutesPerDay;
    auto& b = buckets[day];
    if (b.values.empty()) {
      b.values.assign(steps, 0.0);
      b.hits.assign(steps, 0);
    }
    ++b.samples;
    if (in_day % delta_t_min != 0) {
      b.misaligned = true;
      continue;
    }
    const auto slot = static_cast<std::size_t>(in_day / delta_t_min);
    b.values[slot] = smp.ghi;
    ++b.hits[slot];
  }

  SegmentResult res;
  res.library.delta_t_min = delta_t_min;
  for (auto& [day, b] : buckets) {
    const bool complete =
        !b.misaligned && std::all_of(b.hits.begin(), b.hits.end(), [](int h) { return h == 1; });
    if (!complete) {
      res.dropped_samples += b.samples;
      ++res.dropped_days;
      continue;
    }
    const auto date = format_date(day * kMinutesPerDay);
    res.library.days.push_back(std::move(b.values));
    res.library.dates.push_back(date);
    res.library.months.push_back(std::stoi(date.substr(5, 2)));
  }
  if (res.library.days.empty()) throw Error("irradiance series contains no complete day");
  res.library.validate();
  return res;
}

SegmentResult segment_daily(const std::vector<double>& values, int delta_t_min) {
  if (delta_t_min <= 0 || kMinutesPerDay % delta_t_min != 0) throw Error("irradiance delta_t must divide a day");
  const auto steps = static_cast<std::size_t>(kMinutesPerDay / delta_t_min);
  SegmentResult res;
  res.library.delta_t_min = delta_t_min;
  const std::size_t full = values.size() / steps;
  for (std::size_t d = 0; d < full; ++d)
    res.library.days.emplace_back(values.begin() + static_cast<std::ptrdiff_t>(d * steps),
                                  values.begin() + static_cast<std::ptrdiff_t>((d + 1) * steps));
  res.dropped_samples = values.size() - full * steps;
  res.dropped_days = res.dropped_samples > 0 ? 1 : 0;
  if (res.library.days.empty()) throw Error("irradiance series contains no complete day");
  res.library.validate();
  return res;
}

BootstrapDraw bootstrap_sample(const IrradianceLibrary& lib, RngStream::Engine& rng) {
  if (lib.days.empty()) throw Error("irradiance library is empty");
  const std::size_t d = std::uniform_int_distribution<std::size_t>(0, lib.days.size() - 1)(rng);
  return {d, &lib.days[d]};
}

BootstrapDraw bootstrap_sample(const IrradianceLibrary& lib, const RngStream& stream) {
  auto rng = stream.engine();
  return bootstrap_sample(lib, rng);
}

BootstrapDraw bootstrap_sample_in_month(const IrradianceLibrary& lib, int month, RngStream::Engine& rng) {
  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < lib.months.size(); ++i)
    if (lib.months[i] == month) pool.push_back(i);
  if (pool.empty()) throw Error("irradiance library has no day in month " + std::to_string(month));
  const std::size_t d = pool[std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng)];
  return {d, &lib.days[d]};
}

std::vector<double> pv_power(std::span<const double> ghi, double capacity_kwp, double g_stc) {
  if (capacity_kwp < 0.0) throw Error("PV capacity must be non-negative");
  if (!(g_stc > 0.0)) throw Error("STC irradiance must be positive");
  std::vector<double> p(ghi.size());
  for (std::size_t t = 0; t < ghi.size(); ++t) p[t] = capacity_kwp * std::min(ghi[t] / g_stc, 1.0);
  return p;
}

std::vector<IrradianceSample> read_irradiance_csv(const std::filesystem::path& path) {
  const CsvTable table = read_csv(path);
  const int ts = table.require_column("timestamp");
  const int g = table.require_column("ghi_wm2");
  std::vector<IrradianceSample> out;
  out.reserve(table.rows.size());
  for (const auto& row : table.rows) out.push_back({parse_timestamp_minutes(row[ts]), parse_double(row[g])});
  return out;
}

void write_library_csv(const IrradianceLibrary& lib, const std::filesystem::path& path) {
  std::vector<std::string> header{"date"};
  for (std::size_t t = 1; t <= lib.steps_per_day(); ++t) header.push_back("t" + std::to_string(t));
  CsvWriter w(std::move(header));
  for (std::size_t d = 0; d < lib.days.size(); ++d) {
    w.add(d < lib.dates.size() ? lib.dates[d] : "day" + std::to_string(d + 1));
    for (double v : lib.days[d]) w.add(v);
    w.end_row();
  }
  w.write(path);
}

IrradianceLibrary read_library_csv(const std::filesystem::path& path, int delta_t_min) {
  const CsvTable table = read_csv(path);
  const int dc = table.require_column("date");
  IrradianceLibrary lib;
  lib.delta_t_min = delta_t_min;
  for (const auto& row : table.rows) {
    std::vector<double> day;
    for (std::size_t c = 0; c < row.size(); ++c)
      if (static_cast<int>(c) != dc) day.push_back(parse_double(row[c]));
    lib.days.push_back(std::move(day));
    lib.dates.push_back(row[dc]);
    const auto& date = row[dc];
    lib.months.push_back(date.size() >= 7 && date[4] == '-' ? std::stoi(date.substr(5, 2)) : 0);
  }
  lib.validate();
  return lib;
}

}  // namespace pvhc::irradiance
