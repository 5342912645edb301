#include "pvhc/csv.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace pvhc {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string> split_line(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.emplace_back(trim(line.substr(start, pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

}  // namespace

int CsvTable::column(std::string_view name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return static_cast<int>(i);
  return -1;
}

int CsvTable::require_column(std::string_view name) const {
  const int c = column(name);
  if (c < 0) throw Error("missing CSV column '" + std::string(name) + "'");
  return c;
}

CsvTable parse_csv(std::istream& in) {
  CsvTable table;
  std::string line;
  bool have_header = false;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    auto fields = split_line(t);
    if (!have_header) {
      table.header = std::move(fields);
      have_header = true;
      continue;
    }
    if (fields.size() != table.header.size())
      throw Error("CSV line " + std::to_string(line_no) + " has " + std::to_string(fields.size()) +
                  " fields, expected " + std::to_string(table.header.size()));
    table.rows.push_back(std::move(fields));
  }
  if (!have_header) throw Error("CSV input has no header");
  return table;
}

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  try {
    return parse_csv(in);
  } catch (const Error& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

double parse_double(std::string_view field) {
  field = trim(field);
  double v = 0.0;
  const auto* end = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(field.data(), end, v);
  if (ec != std::errc() || ptr != end) throw Error("not a number: '" + std::string(field) + "'");
  return v;
}

long long parse_int(std::string_view field) {
  field = trim(field);
  long long v = 0;
  const auto* end = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(field.data(), end, v);
  if (ec != std::errc() || ptr != end) throw Error("not an integer: '" + std::string(field) + "'");
  return v;
}

std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

CsvWriter::CsvWriter(std::vector<std::string> header) : columns_(header.size()) {
  pending_ = std::move(header);
  end_row();
}

CsvWriter& CsvWriter::add(std::string field) {
  pending_.push_back(std::move(field));
  return *this;
}

CsvWriter& CsvWriter::add(double v) { return add(format_number(v)); }

CsvWriter& CsvWriter::add(long long v) { return add(std::to_string(v)); }

void CsvWriter::end_row() {
  if (pending_.size() != columns_)
    throw Error("CSV row has " + std::to_string(pending_.size()) + " fields, expected " +
                std::to_string(columns_));
  for (std::size_t i = 0; i < pending_.size(); ++i) {
    if (i) text_ += ',';
    text_ += pending_[i];
  }
  text_ += '\n';
  pending_.clear();
}

std::string CsvWriter::str() const { return text_; }

void CsvWriter::write(const std::filesystem::path& path) const { write_text_file(path, text_); }

LoadProfileSet read_load_profiles(const std::filesystem::path& path, int delta_t_min) {
  const CsvTable table = read_csv(path);
  const int id_col = table.require_column("transformer_id");
  table.require_column("date");
  const int energy_col = table.column("annual_energy_gwh");

  std::vector<int> step_cols;
  for (int t = 1;; ++t) {
    const int c = table.column("t" + std::to_string(t));
    if (c < 0) break;
    step_cols.push_back(c);
  }
  if (step_cols.empty()) throw Error(path.string() + ": no t1..tT columns");

  LoadProfileSet data;
  data.delta_t_min = delta_t_min;
  std::map<std::string, std::size_t> index;
  for (const auto& row : table.rows) {
    const std::string& id = row[id_col];
    auto [it, inserted] = index.try_emplace(id, data.transformers.size());
    if (inserted) data.transformers.push_back({id, {}, {}});
    auto& tr = data.transformers[it->second];
    std::vector<double> rec;
    rec.reserve(step_cols.size());
    for (int c : step_cols) rec.push_back(parse_double(row[c]));
    const double w = energy_col >= 0 ? parse_double(row[energy_col]) : annual_energy_of(rec, delta_t_min);
    tr.records.push_back(std::move(rec));
    tr.annual_energy.push_back(w);
  }
  data.validate();
  return data;
}

void write_load_profiles(const LoadProfileSet& data, const std::filesystem::path& path) {
  const std::size_t steps = data.steps_per_day();
  std::vector<std::string> header{"transformer_id", "date"};
  for (std::size_t t = 1; t <= steps; ++t) header.push_back("t" + std::to_string(t));
  header.emplace_back("annual_energy_gwh");
  CsvWriter w(std::move(header));
  for (const auto& tr : data.transformers) {
    for (std::size_t n = 0; n < tr.records.size(); ++n) {
      w.add(tr.id).add("d" + std::to_string(n + 1));
      for (double v : tr.records[n]) w.add(v);
      w.add(tr.annual_energy[n]);
      w.end_row();
    }
  }
  w.write(path);
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw Error("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace pvhc
