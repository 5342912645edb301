#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "pvhc/core.hpp"

namespace pvhc::irradiance {

inline constexpr double kMaxIrradiance = 1500.0;  // W/m2
inline constexpr double kStcIrradiance = 1000.0;

struct IrradianceSample {
  long long minute = 0;  // minutes since 1970-01-01 00:00
  double ghi = 0.0;      // W/m2
};

/// Library of complete historical days.
struct IrradianceLibrary {
  int delta_t_min = 15;
  std::vector<std::vector<double>> days;
  std::vector<std::string> dates;  // YYYY-MM-DD, aligned to days
  std::vector<int> months;         // 1..12, aligned to days

  std::size_t steps_per_day() const { return days.empty() ? 0 : days.front().size(); }
  bool below_recommended_size() const { return days.size() < 30; }
  void validate() const;
};

struct SegmentResult {
  IrradianceLibrary library;
  std::size_t dropped_samples = 0;
  std::size_t dropped_days = 0;
};

/// Keeps only calendar days that have every one of the T slots exactly once.
SegmentResult segment_daily(const std::vector<IrradianceSample>& series, int delta_t_min);

/// Splits an untimed series that starts at midnight into whole days; the
/// trailing partial day is dropped.
SegmentResult segment_daily(const std::vector<double>& values, int delta_t_min);

struct BootstrapDraw {
  std::size_t day = 0;
  const std::vector<double>* profile = nullptr;
};

/// Uniform draw of one day with replacement.
BootstrapDraw bootstrap_sample(const IrradianceLibrary& lib, RngStream::Engine& rng);
BootstrapDraw bootstrap_sample(const IrradianceLibrary& lib, const RngStream& stream);

/// Uniform draw restricted to days of the given month (seasonal option).
BootstrapDraw bootstrap_sample_in_month(const IrradianceLibrary& lib, int month, RngStream::Engine& rng);

/// p_t = capacity * min(g_t / g_stc, 1), in kW for capacity in kWp.
std::vector<double> pv_power(std::span<const double> ghi, double capacity_kwp, double g_stc = kStcIrradiance);

/// Parses `YYYY-MM-DD HH:MM[:SS]` or with a `T` separator.
long long parse_timestamp_minutes(const std::string& text);
std::string format_date(long long minute);

/// Reads `timestamp,ghi_wm2`.
std::vector<IrradianceSample> read_irradiance_csv(const std::filesystem::path& path);
void write_library_csv(const IrradianceLibrary& lib, const std::filesystem::path& path);
IrradianceLibrary read_library_csv(const std::filesystem::path& path, int delta_t_min);

}  // namespace pvhc::irradiance
