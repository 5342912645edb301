#pragma once

// CSV emitters for the report bundle. Every function returns the full file
// text so callers and tests can compare bytes directly.

#include <filesystem>
#include <string>
#include <vector>

#include "pvhc/config.hpp"
#include "pvhc/pipeline.hpp"
#include "pvhc/riskmetrics.hpp"

namespace pvhc::report {

/// algorithm,k,si,chi,dbi,di,mdi,sizes,selected
std::string clustering_report_csv(const pipeline::ClusterOutput& clusters);
/// transformer_id,cluster
std::string assignment_csv(const pipeline::ClusterOutput& clusters);

/// energy_step,pv_step,tau_min,q,phi_stat,frequency,intensity,region
std::string risk_surface_csv(const risk::RiskSurface& surface);
/// energy_step,risk,tau_min,hc_percent,flag for the configured energy levels.
std::string hc_table_csv(const risk::RiskSurface& surface, const PipelineConfig& cfg);
/// Deterministic extremes (q = 100 over, q = 0 under) per cell and duration.
std::string extreme_heatmap_csv(const risk::RiskSurface& surface);
/// risk,tau_min,energy_step,pv_step,energy_pct,pv_pct,region
std::string region_grid_csv(const risk::RiskSurface& surface);
/// risk,tau_min plus one count column per region class.
std::string region_counts_csv(const risk::RiskSurface& surface);
/// Histogram of the Phi lists at each configured operating point.
std::string phi_histogram_csv(const risk::RiskSurface& surface, const std::vector<OperatingPoint>& cases, int bins);
/// Frequency, intensity and representative duration per operating point.
std::string idf_case_csv(const risk::RiskSurface& surface, const std::vector<OperatingPoint>& cases);

/// Writes the full bundle into pipeline::report_dir(cfg).
void write_report(const PipelineConfig& cfg, const pipeline::RunManifest& manifest);

}  // namespace pvhc::report
