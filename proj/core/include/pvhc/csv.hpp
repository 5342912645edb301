#pragma once

// Minimal CSV reading/writing (no quoting; fields never contain commas).

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "pvhc/core.hpp"

namespace pvhc {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Index of a named column, or -1.
  int column(std::string_view name) const;
  int require_column(std::string_view name) const;
};

CsvTable read_csv(const std::filesystem::path& path);
CsvTable parse_csv(std::istream& in);

double parse_double(std::string_view field);
long long parse_int(std::string_view field);

/// Shortest stable decimal form used for every emitted CSV value.
std::string format_number(double v);

class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header);

  CsvWriter& add(std::string field);
  CsvWriter& add(double v);
  CsvWriter& add(long long v);
  CsvWriter& add(int v) { return add(static_cast<long long>(v)); }
  CsvWriter& add(std::size_t v) { return add(static_cast<long long>(v)); }
  void end_row();

  std::string str() const;
  void write(const std::filesystem::path& path) const;

 private:
  std::size_t columns_;
  std::string text_;
  std::vector<std::string> pending_;
};

/// Reads `transformer_id,date,t1..tT[,annual_energy_gwh]`. Missing labels are
/// computed from each record with annual_energy_of().
LoadProfileSet read_load_profiles(const std::filesystem::path& path, int delta_t_min);
void write_load_profiles(const LoadProfileSet& data, const std::filesystem::path& path);

/// Writes text atomically (temp file + rename).
void write_text_file(const std::filesystem::path& path, std::string_view text);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace pvhc
