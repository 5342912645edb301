#include "pvhc/genflow.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "json.hpp"
#include "pvhc/csv.hpp"

namespace pvhc::genflow {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;
constexpr int kModelFormatVersion = 1;

// Activations of one conditioner evaluation, kept for the backward pass.
struct LayerTape {
  std::vector<double> u;
  std::vector<double> h1;
  std::vector<double> h2;
  std::vector<double> raw;
  std::vector<double> s;
  std::vector<double> t;
  std::vector<double> out_free;  // free half after the (inverse) layer
};

double standardize_condition(const FlowModel& m, double w) { return (w - m.cond_mean) / m.cond_std; }

void run_conditioner(const FlowModel& m, const CouplingLayer& layer, std::span<const double> x, double wstd,
                     LayerTape& tp) {
  const std::size_t c = layer.cond_idx.size();
  const std::size_t f = layer.free_idx.size();
  const std::size_t in = layer.in_dim();
  const auto hid = static_cast<std::size_t>(m.hidden);
  const double* p = m.params.data();

  tp.u.resize(in);
  for (std::size_t i = 0; i < c; ++i) tp.u[i] = x[layer.cond_idx[i]];
  tp.u[c] = wstd;

  tp.h1.resize(hid);
  for (std::size_t j = 0; j < hid; ++j) {
    const double* row = p + layer.w1 + j * in;
    double a = p[layer.b1 + j];
    for (std::size_t i = 0; i < in; ++i) a += row[i] * tp.u[i];
    tp.h1[j] = std::tanh(a);
  }
  tp.h2.resize(hid);
  for (std::size_t j = 0; j < hid; ++j) {
    const double* row = p + layer.w2 + j * hid;
    double a = p[layer.b2 + j];
    for (std::size_t i = 0; i < hid; ++i) a += row[i] * tp.h1[i];
    tp.h2[j] = std::tanh(a);
  }
  tp.raw.resize(f);
  tp.s.resize(f);
  tp.t.resize(f);
  for (std::size_t j = 0; j < 2 * f; ++j) {
    const double* row = p + layer.w3 + j * hid;
    double a = p[layer.b3 + j];
    for (std::size_t i = 0; i < hid; ++i) a += row[i] * tp.h2[i];
    if (j < f) {
      tp.raw[j] = a;
      tp.s[j] = kLogScaleBound * std::tanh(a / kLogScaleBound);
    } else {
      tp.t[j - f] = a;
    }
  }
}

void check_finite(std::span<const double> x, std::size_t layer) {
  for (double v : x)
    if (!std::isfinite(v)) throw Error("non-finite value in coupling layer " + std::to_string(layer));
}

void check_condition(double w) {
  if (!(w > 0.0) || !std::isfinite(w)) throw Error("annual energy condition must be positive and finite");
}

// Inverse pass with optional tape capture; returns log|det dz/dp|.
double inverse_pass(const FlowModel& m, std::span<const double> p, double w, std::vector<double>& x,
                    std::vector<LayerTape>* tapes) {
  if (p.size() != m.dim) throw Error("profile length does not match the flow dimension");
  const double wstd = standardize_condition(m, w);
  x.resize(m.dim);
  double logdet = 0.0;
  for (std::size_t i = 0; i < m.dim; ++i) {
    x[i] = (p[i] - m.data_mean[i]) / m.data_std[i];
    logdet -= std::log(m.data_std[i]);
  }
  LayerTape local;
  for (std::size_t li = m.layers.size(); li-- > 0;) {
    const auto& layer = m.layers[li];
    LayerTape& tp = tapes ? (*tapes)[li] : local;
    run_conditioner(m, layer, x, wstd, tp);
    tp.out_free.resize(layer.free_idx.size());
    for (std::size_t j = 0; j < layer.free_idx.size(); ++j) {
      double& v = x[layer.free_idx[j]];
      v = (v - tp.t[j]) * std::exp(-tp.s[j]);
      tp.out_free[j] = v;
      logdet -= tp.s[j];
    }
    check_finite(x, li);
  }
  return logdet;
}

std::vector<std::size_t> parity_indices(std::size_t dim, std::size_t parity) {
  std::vector<std::size_t> out;
  for (std::size_t i = parity; i < dim; i += 2) out.push_back(i);
  return out;
}

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0)) throw Error("learning rate must be non-negative");
  if (batch_size <= 0 || max_epochs <= 0 || patience <= 0) throw Error("training sizes must be positive");
  if (!(clip_norm > 0.0)) throw Error("gradient clip norm must be positive");
  if (!(validation_fraction > 0.0 && validation_fraction < 0.5))
    throw Error("validation fraction must lie in (0, 0.5)");
}

void FlowModel::validate() const {
  if (dim == 0) throw Error("flow dimension is zero");
  if (data_mean.size() != dim || data_std.size() != dim) throw Error("standardizer size mismatch");
  for (double s : data_std)
    if (!(s > 0.0)) throw Error("data standardizer std must be positive");
  if (!(cond_std > 0.0)) throw Error("condition standardizer std must be positive");
  if (!layers.empty() && layers.back().end != params.size()) throw Error("parameter vector size mismatch");
}

FlowModel make_flow(std::size_t dim, const FlowArchitecture& arch, const RngStream& stream) {
  if (dim == 0) throw Error("flow dimension is zero");
  if (arch.layers <= 0 || arch.hidden <= 0) throw Error("flow architecture sizes must be positive");
  FlowModel m;
  m.dim = dim;
  m.hidden = arch.hidden;
  m.data_mean.assign(dim, 0.0);
  m.data_std.assign(dim, 1.0);

  const auto hid = static_cast<std::size_t>(arch.hidden);
  std::size_t offset = 0;
  for (int l = 0; l < arch.layers; ++l) {
    CouplingLayer layer;
    const auto parity = static_cast<std::size_t>(l % 2);
    layer.free_idx = parity_indices(dim, parity);
    layer.cond_idx = parity_indices(dim, 1 - parity);
    if (layer.free_idx.empty()) continue;  // nothing to transform (dim == 1)
    const std::size_t in = layer.in_dim();
    layer.w1 = offset;
    layer.b1 = layer.w1 + hid * in;
    layer.w2 = layer.b1 + hid;
    layer.b2 = layer.w2 + hid * hid;
    layer.w3 = layer.b2 + hid;
    layer.b3 = layer.w3 + layer.out_dim() * hid;
    layer.end = layer.b3 + layer.out_dim();
    offset = layer.end;
    m.layers.push_back(std::move(layer));
  }
  m.params.assign(offset, 0.0);

  auto rng = stream.engine();
  for (const auto& layer : m.layers) {
    const double a1 = std::sqrt(6.0 / static_cast<double>(layer.in_dim() + hid));
    std::uniform_real_distribution<double> u1(-a1, a1);
    for (std::size_t i = layer.w1; i < layer.b1; ++i) m.params[i] = u1(rng);
    const double a2 = std::sqrt(6.0 / static_cast<double>(2 * hid));
    std::uniform_real_distribution<double> u2(-a2, a2);
    for (std::size_t i = layer.w2; i < layer.b2; ++i) m.params[i] = u2(rng);
  }
  return m;
}

ForwardResult flow_forward_logdet(const FlowModel& m, std::span<const double> z, double w) {
  check_condition(w);
  if (z.size() != m.dim) throw Error("latent length does not match the flow dimension");
  const double wstd = standardize_condition(m, w);
  ForwardResult r;
  r.p.assign(z.begin(), z.end());
  check_finite(r.p, 0);
  LayerTape tp;
  for (std::size_t li = 0; li < m.layers.size(); ++li) {
    const auto& layer = m.layers[li];
    run_conditioner(m, layer, r.p, wstd, tp);
    for (std::size_t j = 0; j < layer.free_idx.size(); ++j) {
      double& v = r.p[layer.free_idx[j]];
      v = v * std::exp(tp.s[j]) + tp.t[j];
      r.logdet += tp.s[j];
    }
    check_finite(r.p, li);
  }
  for (std::size_t i = 0; i < m.dim; ++i) {
    r.p[i] = r.p[i] * m.data_std[i] + m.data_mean[i];
    r.logdet += std::log(m.data_std[i]);
  }
  return r;
}

std::vector<double> flow_forward(const FlowModel& m, std::span<const double> z, double w) {
  return flow_forward_logdet(m, z, w).p;
}

InverseResult flow_inverse(const FlowModel& m, std::span<const double> p, double w) {
  check_condition(w);
  check_finite(p, m.layers.size());
  InverseResult r;
  r.logdet = inverse_pass(m, p, w, r.z, nullptr);
  return r;
}

double standard_normal_logpdf(std::span<const double> z) {
  double sq = 0.0;
  for (double v : z) sq += v * v;
  return -0.5 * sq - 0.5 * static_cast<double>(z.size()) * kLog2Pi;
}

double log_likelihood(const FlowModel& m, std::span<const double> p, double w) {
  const auto inv = flow_inverse(m, p, w);
  return standard_normal_logpdf(inv.z) + inv.logdet;
}

double nll_and_gradient(const FlowModel& m, std::span<const TrainingPair> data, std::span<const std::size_t> batch,
                        std::span<double> grad) {
  if (grad.size() != m.params.size()) throw Error("gradient buffer size mismatch");
  if (batch.empty()) throw Error("empty batch");
  std::fill(grad.begin(), grad.end(), 0.0);
  const auto hid = static_cast<std::size_t>(m.hidden);
  const double* p = m.params.data();
  double* gp = grad.data();

  std::vector<LayerTape> tapes(m.layers.size());
  std::vector<double> x, g, dout, dh2, dh1;
  double total = 0.0;

  for (std::size_t idx : batch) {
    const auto& pair = data[idx];
    check_condition(pair.w);
    const double logdet = inverse_pass(m, pair.profile, pair.w, x, &tapes);
    total += -(standard_normal_logpdf(x) + logdet);

    // dNLL/dz = z; walk the coupling stack in reverse of the inverse pass.
    g = x;
    for (std::size_t li = 0; li < m.layers.size(); ++li) {
      const auto& layer = m.layers[li];
      const auto& tp = tapes[li];
      const std::size_t c = layer.cond_idx.size();
      const std::size_t f = layer.free_idx.size();
      const std::size_t in = layer.in_dim();

      dout.assign(2 * f, 0.0);
      for (std::size_t j = 0; j < f; ++j) {
        const std::size_t k = layer.free_idx[j];
        const double e = std::exp(-tp.s[j]);
        const double gs = -g[k] * tp.out_free[j] + 1.0;
        const double th = std::tanh(tp.raw[j] / kLogScaleBound);
        dout[j] = gs * (1.0 - th * th);
        dout[f + j] = -g[k] * e;
        g[k] *= e;
      }

      dh2.assign(hid, 0.0);
      for (std::size_t j = 0; j < 2 * f; ++j) {
        const double d = dout[j];
        if (d == 0.0) continue;
        const double* row = p + layer.w3 + j * hid;
        double* grow = gp + layer.w3 + j * hid;
        for (std::size_t i = 0; i < hid; ++i) {
          grow[i] += d * tp.h2[i];
          dh2[i] += row[i] * d;
        }
        gp[layer.b3 + j] += d;
      }
      for (std::size_t i = 0; i < hid; ++i) dh2[i] *= 1.0 - tp.h2[i] * tp.h2[i];

      dh1.assign(hid, 0.0);
      for (std::size_t j = 0; j < hid; ++j) {
        const double d = dh2[j];
        const double* row = p + layer.w2 + j * hid;
        double* grow = gp + layer.w2 + j * hid;
        for (std::size_t i = 0; i < hid; ++i) {
          grow[i] += d * tp.h1[i];
          dh1[i] += row[i] * d;
        }
        gp[layer.b2 + j] += d;
      }
      for (std::size_t i = 0; i < hid; ++i) dh1[i] *= 1.0 - tp.h1[i] * tp.h1[i];

      for (std::size_t j = 0; j < hid; ++j) {
        const double d = dh1[j];
        const double* row = p + layer.w1 + j * in;
        double* grow = gp + layer.w1 + j * in;
        for (std::size_t i = 0; i < in; ++i) grow[i] += d * tp.u[i];
        // Conditioned inputs flow back into the unchanged half.
        for (std::size_t i = 0; i < c; ++i) g[layer.cond_idx[i]] += row[i] * d;
        gp[layer.b1 + j] += d;
      }
    }
  }

  const auto n = static_cast<double>(batch.size());
  for (double& v : grad) v /= n;
  return total / n;
}

void fit_standardizers(FlowModel& m, std::span<const TrainingPair> data) {
  if (data.empty()) throw Error("cannot fit standardizers to an empty dataset");
  const auto n = static_cast<double>(data.size());
  m.data_mean.assign(m.dim, 0.0);
  m.data_std.assign(m.dim, 0.0);
  for (const auto& d : data)
    for (std::size_t i = 0; i < m.dim; ++i) m.data_mean[i] += d.profile[i] / n;
  for (const auto& d : data)
    for (std::size_t i = 0; i < m.dim; ++i) {
      const double e = d.profile[i] - m.data_mean[i];
      m.data_std[i] += e * e / n;
    }
  for (double& s : m.data_std) s = std::max(std::sqrt(s), 1e-6);

  double wm = 0.0, wv = 0.0;
  for (const auto& d : data) wm += d.w / n;
  for (const auto& d : data) wv += (d.w - wm) * (d.w - wm) / n;
  m.cond_mean = wm;
  m.cond_std = wv > 0.0 ? std::sqrt(wv) : 1.0;
}

namespace {

void check_dataset(std::span<const TrainingPair> data, std::size_t dim) {
  if (data.size() < 50) throw Error("flow training needs at least 50 profiles, got " + std::to_string(data.size()));
  for (const auto& d : data) {
    if (d.profile.size() != dim) throw Error("training profiles have inconsistent length");
    check_condition(d.w);
  }
}

double mean_loglik(const FlowModel& m, std::span<const TrainingPair> data, std::span<const std::size_t> idx) {
  double s = 0.0;
  for (std::size_t i : idx) s += log_likelihood(m, data[i].profile, data[i].w);
  return s / static_cast<double>(idx.size());
}

}  // namespace

TrainResult train_from(FlowModel model, std::span<const TrainingPair> data, const TrainConfig& cfg,
                       const RngStream& stream) {
  cfg.validate();
  check_dataset(data, model.dim);
  model.validate();

  const std::size_t n = data.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  auto split_rng = stream.child(1).engine();
  std::shuffle(order.begin(), order.end(), split_rng);
  const auto n_val = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(cfg.validation_fraction * n)));
  std::vector<std::size_t> val(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> trn(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());

  model.label_min = data[0].w;
  model.label_max = data[0].w;
  for (const auto& d : data) {
    model.label_min = std::min(model.label_min, d.w);
    model.label_max = std::max(model.label_max, d.w);
  }
  model.history.clear();
  model.diverged = false;

  TrainResult res;
  res.best_epoch = 0;
  std::vector<double> best = model.params;
  double best_val = -std::numeric_limits<double>::infinity();
  try {
    best_val = mean_loglik(model, data, val);
  } catch (const Error&) {
  }

  const std::size_t np = model.params.size();
  std::vector<double> grad(np), m1(np, 0.0), m2(np, 0.0);
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
  long long step = 0;
  int stale = 0;
  auto shuffle_rng = stream.child(2).engine();

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::shuffle(trn.begin(), trn.end(), shuffle_rng);
    double loss_sum = 0.0;
    bool bad = false;
    for (std::size_t start = 0; start < trn.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t stop = std::min(trn.size(), start + static_cast<std::size_t>(cfg.batch_size));
      std::span<const std::size_t> batch(trn.data() + start, stop - start);
      double loss = 0.0;
      try {
        loss = nll_and_gradient(model, data, batch, grad);
      } catch (const Error&) {
        bad = true;
        break;
      }
      double norm2 = 0.0;
      for (double gv : grad) norm2 += gv * gv;
      if (!std::isfinite(loss) || !std::isfinite(norm2)) {
        bad = true;
        break;
      }
      loss_sum += loss * static_cast<double>(batch.size());
      const double norm = std::sqrt(norm2);
      const double scale = norm > cfg.clip_norm ? cfg.clip_norm / norm : 1.0;

      ++step;
      const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(step));
      for (std::size_t i = 0; i < np; ++i) {
        const double gv = grad[i] * scale;
        m1[i] = kBeta1 * m1[i] + (1.0 - kBeta1) * gv;
        m2[i] = kBeta2 * m2[i] + (1.0 - kBeta2) * gv * gv;
        model.params[i] -= cfg.learning_rate * (m1[i] / c1) / (std::sqrt(m2[i] / c2) + kEps);
      }
    }

    double val_ll = 0.0;
    if (!bad) {
      try {
        val_ll = mean_loglik(model, data, val);
      } catch (const Error&) {
        bad = true;
      }
      if (!std::isfinite(val_ll)) bad = true;
    }
    if (bad) {
      model.diverged = true;
      break;
    }

    model.history.push_back({epoch, -loss_sum / static_cast<double>(trn.size()), val_ll});
    if (val_ll > best_val) {
      best_val = val_ll;
      best = model.params;
      res.best_epoch = epoch;
      stale = 0;
    } else if (++stale >= cfg.patience) {
      res.early_stopped = true;
      break;
    }
  }

  model.params = std::move(best);
  res.model = std::move(model);
  return res;
}

TrainResult train(std::span<const TrainingPair> data, const TrainConfig& cfg, const FlowArchitecture& arch,
                  const RngStream& stream, int cluster_id) {
  if (data.empty()) throw Error("flow training needs at least 50 profiles, got 0");
  FlowModel model = make_flow(data[0].profile.size(), arch, stream.child(0));
  model.cluster_id = cluster_id;
  check_dataset(data, model.dim);
  fit_standardizers(model, data);
  return train_from(std::move(model), data, cfg, stream);
}

SampleResult sample(const FlowModel& model, double w, std::size_t count, const RngStream& stream,
                    bool clip_negative) {
  SampleResult res;
  res.condition_out_of_range = model.label_max > 0.0 && (w < 0.5 * model.label_min || w > 2.0 * model.label_max);
  auto rng = stream.engine();
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> z(model.dim);
  std::size_t clipped = 0;
  res.profiles.reserve(count);
  for (std::size_t s = 0; s < count; ++s) {
    for (double& v : z) v = normal(rng);
    auto p = flow_forward(model, z, w);
    if (clip_negative)
      for (double& v : p)
        if (v < 0.0) {
          v = 0.0;
          ++clipped;
        }
    res.profiles.push_back(std::move(p));
  }
  const double total = static_cast<double>(count * model.dim);
  res.clipped_fraction = total > 0.0 ? static_cast<double>(clipped) / total : 0.0;
  res.clipping_flag = res.clipped_fraction > 0.01;
  return res;
}

double reactive_factor(double pf) {
  if (!(pf > 0.0 && pf <= 1.0)) throw Error("power factor must lie in (0, 1]");
  return std::tan(std::acos(pf));
}

std::vector<double> reactive_from_active(std::span<const double> p, double pf) {
  const double k = reactive_factor(pf);
  std::vector<double> q(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) q[i] = p[i] * k;
  return q;
}

std::string model_to_text(const FlowModel& m) {
  nlohmann::json j;
  j["format"] = "pvhc-flow";
  j["version"] = kModelFormatVersion;
  j["cluster_id"] = m.cluster_id;
  j["dim"] = m.dim;
  j["hidden"] = m.hidden;
  auto layers = nlohmann::json::array();
  for (const auto& l : m.layers) layers.push_back({{"cond", l.cond_idx}, {"free", l.free_idx}});
  j["layers"] = layers;
  j["params"] = m.params;
  j["data_mean"] = m.data_mean;
  j["data_std"] = m.data_std;
  j["cond_mean"] = m.cond_mean;
  j["cond_std"] = m.cond_std;
  j["label_min"] = m.label_min;
  j["label_max"] = m.label_max;
  j["diverged"] = m.diverged;
  auto hist = nlohmann::json::array();
  for (const auto& h : m.history) hist.push_back({h.epoch, h.train_loglik, h.val_loglik});
  j["history"] = hist;
  return j.dump(1);
}

FlowModel model_from_text(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const std::exception& e) {
    throw Error(std::string("malformed flow model: ") + e.what());
  }
  if (j.value("format", "") != "pvhc-flow") throw Error("not a flow model file");
  if (j.value("version", 0) != kModelFormatVersion) throw Error("unsupported flow model version");

  FlowModel m;
  m.cluster_id = j.at("cluster_id").get<int>();
  m.dim = j.at("dim").get<std::size_t>();
  m.hidden = j.at("hidden").get<int>();
  const auto hid = static_cast<std::size_t>(m.hidden);
  std::size_t offset = 0;
  for (const auto& lj : j.at("layers")) {
    CouplingLayer l;
    l.cond_idx = lj.at("cond").get<std::vector<std::size_t>>();
    l.free_idx = lj.at("free").get<std::vector<std::size_t>>();
    for (auto i : l.cond_idx)
      if (i >= m.dim) throw Error("flow model mask index out of range");
    for (auto i : l.free_idx)
      if (i >= m.dim) throw Error("flow model mask index out of range");
    l.w1 = offset;
    l.b1 = l.w1 + hid * l.in_dim();
    l.w2 = l.b1 + hid;
    l.b2 = l.w2 + hid * hid;
    l.w3 = l.b2 + hid;
    l.b3 = l.w3 + l.out_dim() * hid;
    l.end = l.b3 + l.out_dim();
    offset = l.end;
    m.layers.push_back(std::move(l));
  }
  m.params = j.at("params").get<std::vector<double>>();
  if (m.params.size() != offset) throw Error("flow model parameter count mismatch");
  m.data_mean = j.at("data_mean").get<std::vector<double>>();
  m.data_std = j.at("data_std").get<std::vector<double>>();
  m.cond_mean = j.at("cond_mean").get<double>();
  m.cond_std = j.at("cond_std").get<double>();
  m.label_min = j.value("label_min", 0.0);
  m.label_max = j.value("label_max", 0.0);
  m.diverged = j.value("diverged", false);
  for (const auto& h : j.value("history", nlohmann::json::array()))
    m.history.push_back({h.at(0).get<int>(), h.at(1).get<double>(), h.at(2).get<double>()});
  m.validate();
  return m;
}

void save_model(const FlowModel& model, const std::filesystem::path& path) {
  write_text_file(path, model_to_text(model));
}

FlowModel load_model(const std::filesystem::path& path) { return model_from_text(read_text_file(path)); }

std::string fidelity_csv(const std::vector<std::vector<double>>& original,
                         const std::vector<std::vector<double>>& sampled) {
  if (original.empty() || sampled.empty()) throw Error("fidelity report needs both original and sampled profiles");
  const std::size_t steps = original.front().size();
  CsvWriter w({"t", "original_p5", "original_p50", "original_p95", "sampled_p5", "sampled_p50", "sampled_p95"});
  std::vector<double> col;
  for (std::size_t t = 0; t < steps; ++t) {
    w.add(static_cast<long long>(t + 1));
    for (const auto* set : {&original, &sampled}) {
      col.clear();
      for (const auto& prof : *set) col.push_back(prof.at(t));
      std::sort(col.begin(), col.end());
      for (double q : {5.0, 50.0, 95.0}) w.add(percentile_sorted(col, q));
    }
    w.end_row();
  }
  return w.str();
}

}  // namespace pvhc::genflow
