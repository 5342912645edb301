#include "pvhc/pipeline.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <numeric>
#include <thread>

#include "json.hpp"
#include "pvhc/csv.hpp"
#include "pvhc/irradiance.hpp"
#include "pvhc/powerflow.hpp"
#include "pvhc/report.hpp"
#include "pvhc/scenario.hpp"
#include "pvhc/tensor_io.hpp"

namespace pvhc::pipeline {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr const char* kVersion = "0.1.0";

const char* const kStageNames[kStageCount] = {"cluster", "train", "scenario", "simulate", "metrics"};

void log(const RunOptions& opts, const std::string& msg) {
  if (opts.log) opts.log(msg);
}

std::string file_digest(const fs::path& p) { return sha256_hex(read_text_file(p)); }

std::string hash_of(std::initializer_list<std::string> parts) {
  std::string buf;
  for (const auto& p : parts) {
    buf += std::to_string(p.size());
    buf += ':';
    buf += p;
  }
  return sha256_hex(buf);
}

fs::path marker_path(const fs::path& dir) { return dir / "stage.json"; }

std::optional<json> read_marker(const fs::path& dir) {
  const auto p = marker_path(dir);
  if (!fs::exists(p)) return std::nullopt;
  try {
    return json::parse(read_text_file(p));
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

bool is_cached(const fs::path& dir, const std::string& hash) {
  const auto m = read_marker(dir);
  return m && m->value("hash", "") == hash;
}

void write_marker(const fs::path& dir, const std::string& hash, json extra) {
  extra["hash"] = hash;
  write_text_file(marker_path(dir), extra.dump(2));
}

// Clears a stage directory before a fresh run. Under --resume the chunk files
// stay and are reused when their recorded stage hash matches.
void prepare_dir(const fs::path& dir, bool resume) {
  if (!resume && fs::exists(dir)) fs::remove_all(dir);
  fs::create_directories(dir);
  fs::remove(marker_path(dir));
}

bool chunk_reusable(const fs::path& path, const std::string& hash) {
  if (!fs::exists(path) || !fs::exists(sidecar_path(path))) return false;
  try {
    return json::parse(read_sidecar(path)).value("stage_hash", "") == hash;
  } catch (const std::exception&) {
    return false;
  }
}

std::string two_digits(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%02zu", i);
  return buf;
}

fs::path loads_path(const PipelineConfig& cfg, std::size_t e) {
  return stage_dir(cfg, Stage::kScenario) / ("loads_e" + two_digits(e) + ".bin");
}

fs::path cell_path(const PipelineConfig& cfg, std::size_t e, std::size_t p) {
  return stage_dir(cfg, Stage::kSimulate) / ("phi_e" + two_digits(e) + "_p" + two_digits(p) + ".bin");
}

powerflow::FeederNetwork load_network(const PipelineConfig& cfg) {
  auto net = powerflow::read_network(cfg.nodes_csv, cfg.branches_csv);
  net.base_kv = cfg.base_kv;
  net.base_mva = cfg.base_mva;
  net.slack_pu = cfg.slack_pu;
  net.thermal_limit_a = cfg.thermal_limit_a;
  return net;
}

irradiance::IrradianceLibrary load_library(const PipelineConfig& cfg) {
  auto seg = irradiance::segment_daily(irradiance::read_irradiance_csv(cfg.irradiance_csv), cfg.delta_t_min);
  seg.library.validate();
  return std::move(seg.library);
}

scenario::ScenarioBuilder make_builder(const PipelineConfig& cfg, const powerflow::FeederNetwork& net,
                                       irradiance::IrradianceLibrary lib) {
  auto energy = scenario::schedule_from_network(net, cfg.energy_steps - 1, cfg.energy_max_factor);
  auto pv = scenario::schedule_from_network(net, cfg.pv_steps - 1, cfg.energy_max_factor);
  return scenario::ScenarioBuilder(net, load_models(cfg), std::move(lib), std::move(energy), std::move(pv),
                                   cfg.power_factor, RngStream(cfg.master_seed));
}

json row_to_json(const clustering::SweepRow& r) {
  json j = {{"algorithm", clustering::to_string(r.algorithm)},
            {"k", r.k},
            {"si", r.scores.si},
            {"chi", r.scores.chi},
            {"dbi", r.scores.dbi},
            {"di_infinite", r.scores.di_infinite},
            {"mdi_infinite", r.scores.mdi_infinite},
            {"sizes", r.sizes}};
  j["di"] = r.scores.di_infinite ? 0.0 : r.scores.di;
  j["mdi"] = r.scores.mdi_infinite ? 0.0 : r.scores.mdi;
  return j;
}

clustering::SweepRow row_from_json(const json& j) {
  clustering::SweepRow r{};
  r.algorithm = clustering::algorithm_from_string(j.at("algorithm").get<std::string>());
  r.k = j.at("k").get<int>();
  r.scores.si = j.at("si").get<double>();
  r.scores.chi = j.at("chi").get<double>();
  r.scores.dbi = j.at("dbi").get<double>();
  r.scores.di_infinite = j.at("di_infinite").get<bool>();
  r.scores.mdi_infinite = j.at("mdi_infinite").get<bool>();
  r.scores.di = r.scores.di_infinite ? std::numeric_limits<double>::infinity() : j.at("di").get<double>();
  r.scores.mdi = r.scores.mdi_infinite ? std::numeric_limits<double>::infinity() : j.at("mdi").get<double>();
  r.sizes = j.at("sizes").get<std::vector<std::size_t>>();
  return r;
}

// ---- stages ----------------------------------------------------------------

struct StageContext {
  const PipelineConfig& cfg;
  const RunOptions& opts;
  std::string hash;
  fs::path dir;
  StageRecord record;
};

void run_cluster(StageContext& ctx) {
  const auto& cfg = ctx.cfg;
  auto data = read_load_profiles(cfg.profiles_csv, cfg.delta_t_min);
  data.validate();
  const auto rep = clustering::representative_profiles(data);
  const Matrix x = clustering::normalize_rows_by_mean(rep.profiles);
  const auto stream = RngStream(cfg.clustering_seed).child(tag(StreamTag::kClustering));

  ClusterOutput out;
  out.transformer_ids = rep.transformer_ids;
  if (cfg.k_fixed) {
    const auto alg = cfg.algorithms.front();
    const auto a = clustering::run_algorithm(x, alg, *cfg.k_fixed, stream.child({static_cast<std::uint64_t>(alg),
                                                                                 static_cast<std::uint64_t>(*cfg.k_fixed)}));
    out.assignment = canonical_labels(x, a);
    if (*cfg.k_fixed >= 2) {
      clustering::SweepRow row{alg, *cfg.k_fixed, clustering::validity_indices(x, a), a.sizes()};
      out.low_confidence = row.scores.si < 0.25;
      out.table.push_back(std::move(row));
    }
    out.selected_k.emplace_back(alg, *cfg.k_fixed);
  } else {
    clustering::SweepOptions so;
    so.k_min = cfg.k_min;
    so.k_max = cfg.k_max;
    so.algorithms = cfg.algorithms;
    const auto sweep = clustering::sweep_select(x, so, stream);
    out.assignment = canonical_labels(x, sweep.best);
    out.table = sweep.table;
    out.selected_k = sweep.selected_k;
    out.low_confidence = sweep.low_confidence;
  }

  json j;
  j["algorithm"] = clustering::to_string(out.assignment.algorithm);
  j["k"] = out.assignment.k;
  j["low_confidence"] = out.low_confidence;
  j["transformer_ids"] = out.transformer_ids;
  j["labels"] = out.assignment.labels;
  j["table"] = json::array();
  for (const auto& r : out.table) j["table"].push_back(row_to_json(r));
  j["selected_k"] = json::array();
  for (const auto& [alg, k] : out.selected_k) j["selected_k"].push_back({{"algorithm", clustering::to_string(alg)}, {"k", k}});
  write_text_file(ctx.dir / "clusters.json", j.dump(2));
  ctx.record.units = 1;
  log(ctx.opts, "cluster: selected " + clustering::to_string(out.assignment.algorithm) + " with k=" +
                    std::to_string(out.assignment.k) + (out.low_confidence ? " (low confidence)" : ""));
  write_marker(ctx.dir, ctx.hash, {{"k", out.assignment.k}});
}

void run_train(StageContext& ctx) {
  const auto& cfg = ctx.cfg;
  const auto clusters = load_cluster_output(cfg);
  auto data = read_load_profiles(cfg.profiles_csv, cfg.delta_t_min);

  std::map<std::string, int> label_of;
  for (std::size_t i = 0; i < clusters.transformer_ids.size(); ++i)
    label_of[clusters.transformer_ids[i]] = clusters.assignment.labels[i];

  const auto k = static_cast<std::size_t>(clusters.assignment.k);
  std::vector<std::vector<genflow::TrainingPair>> pairs(k);
  for (const auto& tr : data.transformers) {
    const auto c = static_cast<std::size_t>(label_of.at(tr.id));
    for (std::size_t d = 0; d < tr.records.size(); ++d) pairs[c].push_back({tr.records[d], tr.annual_energy[d]});
  }

  std::vector<json> summaries(k);
  const RngStream base = RngStream(cfg.training_seed).child(tag(StreamTag::kTraining));
  parallel_for(k, ctx.opts.workers, [&](std::size_t c) {
    const auto res = genflow::train(pairs[c], cfg.training, cfg.architecture, base.child(c), static_cast<int>(c));
    if (res.model.diverged)
      throw Error("flow training for cluster " + std::to_string(c) + " diverged");
    genflow::save_model(res.model, ctx.dir / ("flow_" + std::to_string(c) + ".json"));
    summaries[c] = {{"cluster", c},
                    {"profiles", pairs[c].size()},
                    {"best_epoch", res.best_epoch},
                    {"epochs", res.model.history.size()},
                    {"early_stopped", res.early_stopped}};
  });
  for (std::size_t c = 0; c < k; ++c)
    log(ctx.opts, "train: cluster " + std::to_string(c) + " best epoch " + summaries[c]["best_epoch"].dump());
  ctx.record.units = k;
  write_marker(ctx.dir, ctx.hash, {{"clusters", summaries}});
}

void run_scenario(StageContext& ctx) {
  const auto& cfg = ctx.cfg;
  const auto net = load_network(cfg);
  auto lib = load_library(cfg);
  if (lib.below_recommended_size())
    log(ctx.opts, "scenario: warning, irradiance library has only " + std::to_string(lib.days.size()) + " days");
  irradiance::write_library_csv(lib, ctx.dir / "library.csv");
  const auto dates = lib.dates;
  const auto builder = make_builder(cfg, net, std::move(lib));
  const auto S = static_cast<std::size_t>(cfg.scenarios);

  const auto days = builder.draw_irradiance_days(S);
  json dj;
  dj["days"] = days;
  std::vector<std::string> day_dates;
  for (auto d : days) day_dates.push_back(dates[d]);
  dj["dates"] = day_dates;
  write_text_file(ctx.dir / "irradiance_days.json", dj.dump());

  std::vector<std::string> load_ids;
  for (auto i : builder.load_nodes()) load_ids.push_back(net.nodes[i].id);

  const auto E = static_cast<std::size_t>(cfg.energy_steps);
  std::vector<char> reused(E, 0);
  std::vector<std::size_t> clip(E, 0), cond(E, 0);
  parallel_for(E, ctx.opts.workers, [&](std::size_t e) {
    const auto path = loads_path(cfg, e);
    if (ctx.opts.resume && chunk_reusable(path, ctx.hash)) {
      const auto side = json::parse(read_sidecar(path));
      clip[e] = side.at("clipping_warnings").get<std::size_t>();
      cond[e] = side.at("condition_warnings").get<std::size_t>();
      reused[e] = 1;
      return;
    }
    const auto draws = builder.draw_loads(static_cast<int>(e), S);
    Tensor t;
    t.dims = {S, load_ids.size(), builder.steps_per_day()};
    t.data.reserve(t.size());
    for (const auto& sc : draws.profiles)
      for (const auto& prof : sc) t.data.insert(t.data.end(), prof.begin(), prof.end());
    json side = {{"stage_hash", ctx.hash},
                 {"energy_step", e},
                 {"load_nodes", load_ids},
                 {"clipping_warnings", draws.clipping_warnings},
                 {"condition_warnings", draws.condition_warnings}};
    write_tensor(path, t, side.dump());
    clip[e] = draws.clipping_warnings;
    cond[e] = draws.condition_warnings;
  });
  ctx.record.units = E;
  ctx.record.reused_units = static_cast<std::size_t>(std::count(reused.begin(), reused.end(), 1));
  const auto clip_total = std::accumulate(clip.begin(), clip.end(), std::size_t{0});
  const auto cond_total = std::accumulate(cond.begin(), cond.end(), std::size_t{0});
  if (clip_total > 0) log(ctx.opts, "scenario: " + std::to_string(clip_total) + " sampled profiles clipped more than 1%");
  if (cond_total > 0)
    log(ctx.opts, "scenario: " + std::to_string(cond_total) + " draws conditioned outside the training range");
  write_marker(ctx.dir, ctx.hash, {{"clipping_warnings", clip_total}, {"condition_warnings", cond_total}});
}

scenario::LoadDraws read_loads(const fs::path& path) {
  const auto t = read_tensor(path);
  if (t.dims.size() != 3) throw Error("malformed load bank " + path.string());
  const auto side = json::parse(read_sidecar(path));
  scenario::LoadDraws d;
  d.energy_step = side.at("energy_step").get<int>();
  d.clipping_warnings = side.at("clipping_warnings").get<std::size_t>();
  d.condition_warnings = side.at("condition_warnings").get<std::size_t>();
  const auto S = t.dims[0], B = t.dims[1], T = t.dims[2];
  d.profiles.assign(S, std::vector<std::vector<double>>(B));
  auto it = t.data.begin();
  for (auto& sc : d.profiles)
    for (auto& prof : sc) {
      prof.assign(it, it + static_cast<std::ptrdiff_t>(T));
      it += static_cast<std::ptrdiff_t>(T);
    }
  return d;
}

void run_simulate(StageContext& ctx) {
  const auto& cfg = ctx.cfg;
  const auto net = load_network(cfg);
  const auto builder = make_builder(cfg, net, irradiance::read_library_csv(stage_dir(cfg, Stage::kScenario) / "library.csv",
                                                                          cfg.delta_t_min));
  const powerflow::RadialSolver solver(net, cfg.solver);
  const auto grid = cfg.duration_grid();
  grid.validate(builder.steps_per_day());

  const auto E = static_cast<std::size_t>(cfg.energy_steps);
  const auto P = static_cast<std::size_t>(cfg.pv_steps);
  const auto S = static_cast<std::size_t>(cfg.scenarios);
  const auto D = grid.durations_min.size();

  std::vector<scenario::LoadDraws> loads(E);
  for (std::size_t e = 0; e < E; ++e) loads[e] = read_loads(loads_path(cfg, e));
  const auto dj = json::parse(read_text_file(stage_dir(cfg, Stage::kScenario) / "irradiance_days.json"));
  const auto days = dj.at("days").get<std::vector<std::size_t>>();

  std::vector<std::size_t> nonconv(E * P, 0), excluded(E * P, 0);
  std::vector<char> reused(E * P, 0);
  std::atomic<std::size_t> done{0};
  std::mutex log_mutex;
  parallel_for(E * P, ctx.opts.workers, [&](std::size_t cell) {
    const std::size_t e = cell / P, p = cell % P;
    const auto path = cell_path(cfg, e, p);
    if (ctx.opts.resume && chunk_reusable(path, ctx.hash)) {
      const auto side = json::parse(read_sidecar(path));
      nonconv[cell] = side.at("nonconverged_snapshots").get<std::size_t>();
      excluded[cell] = side.at("excluded").size();
      reused[cell] = 1;
    } else {
      const auto set = builder.assemble(loads[e], days, static_cast<int>(p));
      Tensor t;
      t.dims = {2, D, S};
      t.data.assign(t.size(), 0.0);
      std::vector<std::size_t> excl;
      std::size_t nc = 0;
      for (std::size_t s = 0; s < S; ++s) {
        const auto [pk, qk] = builder.injection_matrices(set, s);
        const auto slice = powerflow::simulate_scenario(solver, pk, qk);
        nc += slice.nonconverged;
        if (slice.nonconverged > 0) excl.push_back(s);
        const auto phi = risk::phi_all(slice.v, grid);
        for (std::size_t d = 0; d < D; ++d) {
          t.data[d * S + s] = phi.ov[d];
          t.data[(D + d) * S + s] = phi.uv[d];
        }
      }
      json side = {{"stage_hash", ctx.hash},
                   {"energy_step", e},
                   {"pv_step", p},
                   {"durations_min", grid.durations_min},
                   {"excluded", excl},
                   {"nonconverged_snapshots", nc}};
      write_tensor(path, t, side.dump());
      nonconv[cell] = nc;
      excluded[cell] = excl.size();
    }
    const auto n = ++done;
    if (n % P == 0) {
      std::lock_guard lock(log_mutex);
      log(ctx.opts, "simulate: " + std::to_string(n) + "/" + std::to_string(E * P) + " cells");
    }
  });
  ctx.record.units = E * P;
  ctx.record.reused_units = static_cast<std::size_t>(std::count(reused.begin(), reused.end(), 1));
  write_marker(ctx.dir, ctx.hash,
               {{"snapshots", E * P * S * builder.steps_per_day()},
                {"nonconverged_snapshots", std::accumulate(nonconv.begin(), nonconv.end(), std::size_t{0})},
                {"excluded_scenarios", std::accumulate(excluded.begin(), excluded.end(), std::size_t{0})}});
}

void run_metrics(StageContext& ctx) {
  auto surface = load_risk_surface(ctx.cfg);
  surface.summarize(ctx.cfg.limits, ctx.cfg.risk_levels);
  write_text_file(ctx.dir / "risk_surface.csv", report::risk_surface_csv(surface));
  write_text_file(ctx.dir / "hc_table.csv", report::hc_table_csv(surface, ctx.cfg));
  ctx.record.units = 1;
  write_marker(ctx.dir, ctx.hash, json::object());
}

json section(const std::string& cfg_json, std::initializer_list<const char*> keys) {
  const auto full = json::parse(cfg_json);
  json out;
  for (const char* k : keys) out[k] = full.at(k);
  return out;
}

}  // namespace

std::string to_string(Stage s) { return kStageNames[static_cast<int>(s)]; }

Stage stage_from_string(const std::string& name) {
  for (int i = 0; i < kStageCount; ++i)
    if (name == kStageNames[i]) return static_cast<Stage>(i);
  throw Error("unknown stage '" + name + "'");
}

StageError::StageError(Stage stage, const std::string& what)
    : Error("stage '" + to_string(stage) + "' failed: " + what), stage_(stage) {}

fs::path stage_dir(const PipelineConfig& cfg, Stage s) { return cfg.output_dir / to_string(s); }
fs::path report_dir(const PipelineConfig& cfg) { return cfg.output_dir / "reports"; }
fs::path manifest_path(const PipelineConfig& cfg) { return cfg.output_dir / "manifest.json"; }

std::string sha256_hex(std::string_view data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1) throw Error("SHA-256 failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 0xf];
  }
  return out;
}

void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
  const auto threads = static_cast<std::size_t>(std::max(1, workers));
  if (threads == 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::vector<std::exception_ptr> errors(n);
  auto worker = [&] {
    for (;;) {
      const auto i = next++;
      if (i >= n || failed) return;
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
        failed = true;
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < std::min(threads, n); ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

clustering::ClusterAssignment canonical_labels(const Matrix& x, const clustering::ClusterAssignment& a) {
  const auto sets = a.member_sets();
  struct Key {
    double centre;  // time-weighted centre of the mean row
    double level;
    int label;
  };
  std::vector<Key> keys;
  for (std::size_t c = 0; c < sets.size(); ++c) {
    std::vector<double> m(x.cols(), 0.0);
    for (auto i : sets[c])
      for (std::size_t t = 0; t < x.cols(); ++t) m[t] += x(i, t);
    double mass = 0.0, moment = 0.0;
    for (std::size_t t = 0; t < x.cols(); ++t) {
      mass += m[t];
      moment += static_cast<double>(t) * m[t];
    }
    const double level = sets[c].empty() ? 0.0 : mass / static_cast<double>(sets[c].size() * x.cols());
    keys.push_back({mass > 0.0 ? moment / mass : 0.0, level, static_cast<int>(c)});
  }
  std::sort(keys.begin(), keys.end(), [](const Key& l, const Key& r) {
    if (l.centre != r.centre) return l.centre < r.centre;
    if (l.level != r.level) return l.level < r.level;
    return l.label < r.label;
  });
  std::vector<int> relabel(sets.size());
  for (std::size_t i = 0; i < keys.size(); ++i) relabel[static_cast<std::size_t>(keys[i].label)] = static_cast<int>(i);
  auto out = a;
  for (auto& l : out.labels) l = relabel[static_cast<std::size_t>(l)];
  return out;
}

ClusterOutput load_cluster_output(const PipelineConfig& cfg) {
  const auto path = stage_dir(cfg, Stage::kCluster) / "clusters.json";
  if (!fs::exists(path)) throw Error("missing cluster stage output " + path.string());
  const auto j = json::parse(read_text_file(path));
  ClusterOutput out;
  out.assignment.algorithm = clustering::algorithm_from_string(j.at("algorithm").get<std::string>());
  out.assignment.k = j.at("k").get<int>();
  out.assignment.labels = j.at("labels").get<std::vector<int>>();
  out.transformer_ids = j.at("transformer_ids").get<std::vector<std::string>>();
  out.low_confidence = j.at("low_confidence").get<bool>();
  for (const auto& r : j.at("table")) out.table.push_back(row_from_json(r));
  for (const auto& s : j.at("selected_k"))
    out.selected_k.emplace_back(clustering::algorithm_from_string(s.at("algorithm").get<std::string>()),
                                s.at("k").get<int>());
  out.assignment.validate(out.transformer_ids.size());
  return out;
}

std::map<int, genflow::FlowModel> load_models(const PipelineConfig& cfg) {
  const auto clusters = load_cluster_output(cfg);
  std::map<int, genflow::FlowModel> models;
  for (int c = 0; c < clusters.assignment.k; ++c) {
    const auto path = stage_dir(cfg, Stage::kTrain) / ("flow_" + std::to_string(c) + ".json");
    if (!fs::exists(path)) throw Error("missing train stage output " + path.string());
    models.emplace(c, genflow::load_model(path));
  }
  return models;
}

risk::RiskSurface load_risk_surface(const PipelineConfig& cfg) {
  const auto E = static_cast<std::size_t>(cfg.energy_steps);
  const auto P = static_cast<std::size_t>(cfg.pv_steps);
  const auto grid = cfg.duration_grid();
  const auto D = grid.durations_min.size();
  risk::RiskSurface surface(E, P, grid);
  for (std::size_t e = 0; e < E; ++e)
    for (std::size_t p = 0; p < P; ++p) {
      const auto path = cell_path(cfg, e, p);
      if (!fs::exists(path)) throw Error("missing simulate stage output " + path.string());
      const auto t = read_tensor(path);
      const auto side = json::parse(read_sidecar(path));
      if (t.dims.size() != 3 || t.dims[0] != 2 || t.dims[1] != D)
        throw Error("simulate output does not match the duration grid: " + path.string());
      const auto S = t.dims[2];
      const auto excl = side.at("excluded").get<std::vector<std::size_t>>();
      std::vector<char> drop(S, 0);
      for (auto s : excl) drop.at(s) = 1;
      auto& cell = surface.cell(e, p);
      cell.excluded = excl.size();
      for (std::size_t d = 0; d < D; ++d)
        for (std::size_t s = 0; s < S; ++s) {
          if (drop[s]) continue;
          cell.ov[d].push_back(t.data[d * S + s]);
          cell.uv[d].push_back(t.data[(D + d) * S + s]);
        }
    }
  return surface;
}

std::string RunManifest::to_json() const {
  json j;
  j["version"] = version;
  j["master_seed"] = master_seed;
  j["cached"] = cached;
  j["total_snapshots"] = total_snapshots;
  j["nonconverged_snapshots"] = nonconverged_snapshots;
  j["excluded_scenarios"] = excluded_scenarios;
  j["clipping_warnings"] = clipping_warnings;
  j["condition_warnings"] = condition_warnings;
  j["stages"] = json::array();
  for (const auto& s : stages)
    j["stages"].push_back({{"name", s.name},
                           {"hash", s.hash},
                           {"status", s.status},
                           {"units", s.units},
                           {"reused_units", s.reused_units},
                           {"seconds", s.seconds}});
  return j.dump(2);
}

RunManifest run_pipeline(const PipelineConfig& cfg, const RunOptions& opts) {
  cfg.validate();
  fs::create_directories(cfg.output_dir);
  const auto cfg_json = config_to_json(cfg);

  // Inputs each stage depends on, beyond its upstream stage.
  const std::string profiles = file_digest(cfg.profiles_csv);
  const std::string network = file_digest(cfg.nodes_csv) + file_digest(cfg.branches_csv);
  const std::string irr = file_digest(cfg.irradiance_csv);
  json seed = {{"seed", cfg.master_seed}};

  RunManifest manifest;
  manifest.version = kVersion;
  manifest.master_seed = cfg.master_seed;

  std::string upstream;
  bool all_cached = true;
  for (int i = 0; i <= static_cast<int>(opts.until); ++i) {
    const auto stage = static_cast<Stage>(i);
    std::string hash;
    switch (stage) {
      case Stage::kCluster:
        hash = hash_of({"cluster", profiles, section(cfg_json, {"delta_t_min", "clustering"}).dump()});
        break;
      case Stage::kTrain:
        hash = hash_of({"train", upstream, section(cfg_json, {"flow"}).dump()});
        break;
      case Stage::kScenario:
        hash = hash_of({"scenario", upstream, irr, network, seed.dump(), section(cfg_json, {"grid"}).dump()});
        break;
      case Stage::kSimulate:
        hash = hash_of({"simulate", upstream, section(cfg_json, {"network", "solver"}).dump(),
                        json(cfg.durations_min).dump()});
        break;
      case Stage::kMetrics:
        hash = hash_of({"metrics", upstream, section(cfg_json, {"metrics", "report"}).dump()});
        break;
    }
    upstream = hash;

    StageContext ctx{cfg, opts, hash, stage_dir(cfg, stage), {}};
    ctx.record.name = to_string(stage);
    ctx.record.hash = hash;
    const auto t0 = std::chrono::steady_clock::now();
    if (is_cached(ctx.dir, hash)) {
      ctx.record.status = "cached";
      log(opts, to_string(stage) + ": cached");
    } else {
      all_cached = false;
      log(opts, to_string(stage) + ": running");
      try {
        prepare_dir(ctx.dir, opts.resume);
        switch (stage) {
          case Stage::kCluster: run_cluster(ctx); break;
          case Stage::kTrain: run_train(ctx); break;
          case Stage::kScenario: run_scenario(ctx); break;
          case Stage::kSimulate: run_simulate(ctx); break;
          case Stage::kMetrics: run_metrics(ctx); break;
        }
      } catch (const std::exception& e) {
        throw StageError(stage, e.what());
      }
      ctx.record.status = ctx.record.reused_units > 0 ? "resumed" : "ran";
    }
    ctx.record.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const auto marker = read_marker(ctx.dir).value_or(json::object());
    if (stage == Stage::kScenario) {
      manifest.clipping_warnings = marker.value("clipping_warnings", std::size_t{0});
      manifest.condition_warnings = marker.value("condition_warnings", std::size_t{0});
    }
    if (stage == Stage::kSimulate) {
      manifest.total_snapshots = marker.value("snapshots", std::size_t{0});
      manifest.nonconverged_snapshots = marker.value("nonconverged_snapshots", std::size_t{0});
      manifest.excluded_scenarios = marker.value("excluded_scenarios", std::size_t{0});
    }
    if (ctx.record.units == 0) ctx.record.units = marker.value("units", std::size_t{0});
    manifest.stages.push_back(ctx.record);
  }
  manifest.cached = all_cached;

  if (opts.write_report && opts.until == Stage::kMetrics) {
    try {
      report::write_report(cfg, manifest);
    } catch (const std::exception& e) {
      throw Error(std::string("report failed: ") + e.what());
    }
  }
  write_text_file(manifest_path(cfg), manifest.to_json());
  return manifest;
}

}  // namespace pvhc::pipeline
