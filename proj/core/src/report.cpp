#include "pvhc/report.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>

#include "pvhc/csv.hpp"
#include "pvhc/genflow.hpp"

namespace pvhc::report {

namespace {

namespace fs = std::filesystem;

constexpr std::array<risk::Region, 5> kRegions{risk::Region::kSafe, risk::Region::kCaution, risk::Region::kOvervoltage,
                                               risk::Region::kUndervoltage, risk::Region::kBoth};

std::string direction_name(risk::Direction d) { return d == risk::Direction::kOver ? "over" : "under"; }

double case_percentile(risk::Direction d, double r) {
  return d == risk::Direction::kOver ? risk::over_percentile(r) : risk::under_percentile(r);
}

const std::vector<std::vector<double>>& phi_lists(const risk::CellPhi& cell, risk::Direction d) {
  return d == risk::Direction::kOver ? cell.ov : cell.uv;
}

void require_summary(const risk::RiskSurface& s) {
  if (!s.summarized()) throw Error("risk surface has not been summarized");
}

}  // namespace

std::string clustering_report_csv(const pipeline::ClusterOutput& clusters) {
  CsvWriter w({"algorithm", "k", "si", "chi", "dbi", "di", "mdi", "sizes", "selected"});
  for (const auto& r : clusters.table) {
    std::string sizes;
    for (auto s : r.sizes) sizes += (sizes.empty() ? "" : ";") + std::to_string(s);
    const bool selected = r.algorithm == clusters.assignment.algorithm && r.k == clusters.assignment.k;
    w.add(clustering::to_string(r.algorithm)).add(r.k).add(r.scores.si).add(r.scores.chi).add(r.scores.dbi);
    w.add(r.scores.di_infinite ? std::string("inf") : format_number(r.scores.di));
    w.add(r.scores.mdi_infinite ? std::string("inf") : format_number(r.scores.mdi));
    w.add(sizes).add(selected ? 1 : 0);
    w.end_row();
  }
  return w.str();
}

std::string assignment_csv(const pipeline::ClusterOutput& clusters) {
  CsvWriter w({"transformer_id", "cluster"});
  for (std::size_t i = 0; i < clusters.transformer_ids.size(); ++i) {
    w.add(clusters.transformer_ids[i]).add(clusters.assignment.labels[i]);
    w.end_row();
  }
  return w.str();
}

std::string risk_surface_csv(const risk::RiskSurface& s) {
  require_summary(s);
  const auto& grid = s.grid();
  CsvWriter w({"energy_step", "pv_step", "tau_min", "q", "phi_stat", "frequency", "intensity", "region"});
  for (std::size_t e = 0; e < s.energy_steps(); ++e)
    for (std::size_t p = 0; p < s.pv_steps(); ++p) {
      const auto& sum = s.summary(e, p);
      for (std::size_t d = 0; d < grid.durations_min.size(); ++d)
        for (std::size_t r = 0; r < s.risk_levels().size(); ++r) {
          const auto region = risk::to_string(sum.region[r][d]);
          w.add(e).add(p).add(grid.durations_min[d]).add(risk::over_percentile(s.risk_levels()[r])).add(std::string("ov"));
          w.add(sum.frequency_ov[d]).add(sum.intensity_ov[r][d]).add(region);
          w.end_row();
          w.add(e).add(p).add(grid.durations_min[d]).add(risk::under_percentile(s.risk_levels()[r])).add(std::string("uv"));
          w.add(sum.frequency_uv[d]).add(sum.intensity_uv[r][d]).add(region);
          w.end_row();
        }
    }
  return w.str();
}

std::string hc_table_csv(const risk::RiskSurface& s, const PipelineConfig& cfg) {
  require_summary(s);
  CsvWriter w({"energy_step", "risk", "tau_min", "hc_percent", "flag"});
  for (double pct : cfg.report_energy_pct) {
    const auto e = static_cast<std::size_t>(cfg.energy_step_for(pct));
    for (double r : s.risk_levels())
      for (int tau : s.grid().durations_min) {
        const auto hc = s.hosting_capacity_at(e, r, tau);
        w.add(e).add(r).add(tau).add(hc.value_or_zero()).add(hc.flag());
        w.end_row();
      }
  }
  return w.str();
}

std::string extreme_heatmap_csv(const risk::RiskSurface& s) {
  CsvWriter w({"energy_step", "pv_step", "energy_pct", "pv_pct", "tau_min", "ov_max", "uv_min"});
  const auto& grid = s.grid();
  for (std::size_t e = 0; e < s.energy_steps(); ++e)
    for (std::size_t p = 0; p < s.pv_steps(); ++p)
      for (std::size_t d = 0; d < grid.durations_min.size(); ++d) {
        const auto& cell = s.cell(e, p);
        w.add(e).add(p).add(s.energy_growth_pct(e)).add(s.pv_growth_pct(p)).add(grid.durations_min[d]);
        w.add(risk::intensity(cell.ov[d], 100.0)).add(risk::intensity(cell.uv[d], 0.0));
        w.end_row();
      }
  return w.str();
}

std::string region_grid_csv(const risk::RiskSurface& s) {
  require_summary(s);
  CsvWriter w({"risk", "tau_min", "energy_step", "pv_step", "energy_pct", "pv_pct", "region"});
  const auto& grid = s.grid();
  for (std::size_t r = 0; r < s.risk_levels().size(); ++r)
    for (std::size_t d = 0; d < grid.durations_min.size(); ++d)
      for (std::size_t e = 0; e < s.energy_steps(); ++e)
        for (std::size_t p = 0; p < s.pv_steps(); ++p) {
          w.add(s.risk_levels()[r]).add(grid.durations_min[d]).add(e).add(p);
          w.add(s.energy_growth_pct(e)).add(s.pv_growth_pct(p)).add(risk::to_string(s.summary(e, p).region[r][d]));
          w.end_row();
        }
  return w.str();
}

std::string region_counts_csv(const risk::RiskSurface& s) {
  require_summary(s);
  std::vector<std::string> header{"risk", "tau_min"};
  for (auto reg : kRegions) header.push_back(risk::to_string(reg));
  CsvWriter w(header);
  const auto& grid = s.grid();
  for (std::size_t r = 0; r < s.risk_levels().size(); ++r)
    for (std::size_t d = 0; d < grid.durations_min.size(); ++d) {
      std::map<risk::Region, std::size_t> counts;
      for (std::size_t e = 0; e < s.energy_steps(); ++e)
        for (std::size_t p = 0; p < s.pv_steps(); ++p) ++counts[s.summary(e, p).region[r][d]];
      w.add(s.risk_levels()[r]).add(grid.durations_min[d]);
      for (auto reg : kRegions) w.add(counts[reg]);
      w.end_row();
    }
  return w.str();
}

std::string phi_histogram_csv(const risk::RiskSurface& s, const std::vector<OperatingPoint>& cases, int bins) {
  if (bins < 1) throw Error("histogram needs at least one bin");
  CsvWriter w({"case", "direction", "tau_min", "bin", "lower", "upper", "count", "density"});
  const auto& grid = s.grid();
  for (const auto& c : cases) {
    const auto& lists = phi_lists(s.cell(static_cast<std::size_t>(c.energy_step), static_cast<std::size_t>(c.pv_step)),
                                  c.direction);
    // One shared axis per case so the per-duration densities overlay.
    double lo = lists.front().front(), hi = lo;
    for (const auto& l : lists)
      for (double v : l) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    if (hi - lo < 1e-9) {
      lo -= 1e-3;
      hi += 1e-3;
    }
    const double width = (hi - lo) / bins;
    for (std::size_t d = 0; d < grid.durations_min.size(); ++d) {
      std::vector<std::size_t> count(static_cast<std::size_t>(bins), 0);
      for (double v : lists[d]) {
        auto b = static_cast<std::size_t>(std::floor((v - lo) / width));
        count[std::min(b, count.size() - 1)]++;
      }
      const double n = static_cast<double>(lists[d].size());
      for (std::size_t b = 0; b < count.size(); ++b) {
        w.add(c.name).add(direction_name(c.direction)).add(grid.durations_min[d]).add(b);
        w.add(lo + width * static_cast<double>(b)).add(lo + width * static_cast<double>(b + 1));
        w.add(count[b]).add(static_cast<double>(count[b]) / (n * width));
        w.end_row();
      }
    }
  }
  return w.str();
}

std::string idf_case_csv(const risk::RiskSurface& s, const std::vector<OperatingPoint>& cases) {
  require_summary(s);
  CsvWriter w({"case", "energy_step", "pv_step", "direction", "risk", "q", "tau_min", "frequency_pct", "intensity",
               "duration_min"});
  const auto& grid = s.grid();
  const int tau0 = grid.durations_min.front();
  for (const auto& c : cases) {
    const auto& cell = s.cell(static_cast<std::size_t>(c.energy_step), static_cast<std::size_t>(c.pv_step));
    const auto& lists = phi_lists(cell, c.direction);
    const double limit = c.direction == risk::Direction::kOver ? s.limits().v_max : s.limits().v_min;
    const double freq = risk::frequency(lists.front(), limit, c.direction);
    for (double r : s.risk_levels()) {
      const double q = case_percentile(c.direction, r);
      const auto dur = risk::representative_duration(lists, q, s.limits(), grid, c.direction);
      w.add(c.name).add(c.energy_step).add(c.pv_step).add(direction_name(c.direction)).add(r).add(q).add(tau0);
      w.add(100.0 * freq).add(risk::intensity(lists.front(), q));
      w.add(dur ? std::to_string(*dur) : std::string("none"));
      w.end_row();
    }
  }
  return w.str();
}

void write_report(const PipelineConfig& cfg, const pipeline::RunManifest& manifest) {
  const auto dir = pipeline::report_dir(cfg);
  if (fs::exists(dir)) fs::remove_all(dir);
  fs::create_directories(dir);

  const auto clusters = pipeline::load_cluster_output(cfg);
  write_text_file(dir / "clustering_report.csv", clustering_report_csv(clusters));
  write_text_file(dir / "assignment.csv", assignment_csv(clusters));

  // Fidelity: one sample per original record, conditioned on its label.
  const auto models = pipeline::load_models(cfg);
  const auto data = read_load_profiles(cfg.profiles_csv, cfg.delta_t_min);
  std::map<std::string, int> label_of;
  for (std::size_t i = 0; i < clusters.transformer_ids.size(); ++i)
    label_of[clusters.transformer_ids[i]] = clusters.assignment.labels[i];
  const RngStream base = RngStream(cfg.master_seed).child(tag(StreamTag::kSampling));
  for (const auto& [c, model] : models) {
    std::vector<std::vector<double>> original, sampled;
    for (const auto& tr : data.transformers) {
      if (label_of.at(tr.id) != c) continue;
      for (std::size_t d = 0; d < tr.records.size(); ++d) {
        original.push_back(tr.records[d]);
        const auto stream = base.child({static_cast<std::uint64_t>(c), original.size()});
        sampled.push_back(genflow::sample(model, tr.annual_energy[d], 1, stream).profiles.front());
      }
    }
    write_text_file(dir / ("fidelity_cluster" + std::to_string(c) + ".csv"), genflow::fidelity_csv(original, sampled));
  }

  auto surface = pipeline::load_risk_surface(cfg);
  surface.summarize(cfg.limits, cfg.risk_levels);
  write_text_file(dir / "risk_surface.csv", risk_surface_csv(surface));
  write_text_file(dir / "hc_table.csv", hc_table_csv(surface, cfg));
  write_text_file(dir / "extreme_heatmap.csv", extreme_heatmap_csv(surface));
  write_text_file(dir / "region_grid.csv", region_grid_csv(surface));
  write_text_file(dir / "region_counts.csv", region_counts_csv(surface));
  write_text_file(dir / "phi_histogram.csv", phi_histogram_csv(surface, cfg.cases, cfg.histogram_bins));
  write_text_file(dir / "idf_case.csv", idf_case_csv(surface, cfg.cases));

  CsvWriter w({"key", "value"});
  auto row = [&](const std::string& k, const std::string& v) {
    w.add(k).add(v);
    w.end_row();
  };
  row("master_seed", std::to_string(manifest.master_seed));
  row("algorithm", clustering::to_string(clusters.assignment.algorithm));
  row("k", std::to_string(clusters.assignment.k));
  row("low_confidence", clusters.low_confidence ? "1" : "0");
  row("energy_steps", std::to_string(cfg.energy_steps));
  row("pv_steps", std::to_string(cfg.pv_steps));
  row("scenarios", std::to_string(cfg.scenarios));
  row("total_snapshots", std::to_string(manifest.total_snapshots));
  row("nonconverged_snapshots", std::to_string(manifest.nonconverged_snapshots));
  row("excluded_scenarios", std::to_string(manifest.excluded_scenarios));
  row("clipping_warnings", std::to_string(manifest.clipping_warnings));
  row("condition_warnings", std::to_string(manifest.condition_warnings));
  write_text_file(dir / "summary.csv", w.str());
}

}  // namespace pvhc::report
