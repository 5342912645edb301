#pragma once

// Stage orchestration: cluster -> train -> scenario -> simulate -> metrics.
//
// Every stage writes its artifacts under <output>/<stage>/ and finishes with a
// stage.json marker carrying a SHA-256 over its inputs (upstream stage hash,
// input files, relevant config subsection). A stage whose marker hash matches
// is skipped. Chunked stages (scenario, simulate) write one file per work unit
// tagged with the stage hash, so an interrupted run can be resumed.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pvhc/clustering.hpp"
#include "pvhc/config.hpp"
#include "pvhc/genflow.hpp"
#include "pvhc/riskmetrics.hpp"

namespace pvhc::pipeline {

enum class Stage { kCluster = 0, kTrain, kScenario, kSimulate, kMetrics };

inline constexpr int kStageCount = 5;

std::string to_string(Stage s);
Stage stage_from_string(const std::string& name);

/// A stage failed; the run can be resumed after fixing the cause.
class StageError : public Error {
 public:
  StageError(Stage stage, const std::string& what);
  Stage stage() const { return stage_; }

 private:
  Stage stage_;
};

struct RunOptions {
  int workers = 1;
  bool resume = false;
  Stage until = Stage::kMetrics;
  bool write_report = true;
  std::function<void(const std::string&)> log;
};

struct StageRecord {
  std::string name;
  std::string hash;
  std::string status;  // "ran", "cached" or "resumed"
  std::size_t units = 0;
  std::size_t reused_units = 0;
  double seconds = 0.0;
};

struct RunManifest {
  std::string version;
  std::uint64_t master_seed = 0;
  std::vector<StageRecord> stages;
  bool cached = false;  // every stage was skipped
  std::size_t total_snapshots = 0;
  std::size_t nonconverged_snapshots = 0;
  std::size_t excluded_scenarios = 0;
  std::size_t clipping_warnings = 0;
  std::size_t condition_warnings = 0;

  std::string to_json() const;
};

/// Runs the stages up to `opts.until`, then regenerates the report bundle
/// when `opts.write_report` is set and every stage has completed.
RunManifest run_pipeline(const PipelineConfig& cfg, const RunOptions& opts = {});

/// Stage directory and artifact locations.
std::filesystem::path stage_dir(const PipelineConfig& cfg, Stage s);
std::filesystem::path report_dir(const PipelineConfig& cfg);
std::filesystem::path manifest_path(const PipelineConfig& cfg);

/// Clustering result with clusters relabeled in a canonical order.
struct ClusterOutput {
  clustering::ClusterAssignment assignment;
  std::vector<std::string> transformer_ids;
  std::vector<clustering::SweepRow> table;
  std::vector<std::pair<clustering::Algorithm, int>> selected_k;
  bool low_confidence = false;
};

/// Relabels clusters in ascending order of the time-weighted centre of their
/// mean row, ties broken by the mean row level and then by the original label.
clustering::ClusterAssignment canonical_labels(const Matrix& profiles, const clustering::ClusterAssignment& a);

ClusterOutput load_cluster_output(const PipelineConfig& cfg);
std::map<int, genflow::FlowModel> load_models(const PipelineConfig& cfg);
/// Rebuilds the Phi lists of every grid cell from the simulate stage.
risk::RiskSurface load_risk_surface(const PipelineConfig& cfg);

/// Runs `fn(i)` for i in [0, n) on up to `workers` threads. The exception of
/// the lowest failing index is rethrown after all threads finish.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn);

std::string sha256_hex(std::string_view data);

}  // namespace pvhc::pipeline
