#pragma once

// Conditional affine-coupling normalizing flow over daily load profiles.
//
// The flow maps a standard-normal latent z to a standardized profile through
// a stack of affine coupling layers, then de-standardizes. Each layer keeps
// one parity class of time steps fixed and scales/shifts the other with a
// two-hidden-layer tanh perceptron fed by the fixed half and the
// standardized annual energy. Log-scales are soft-clamped to [-5, 5].

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "pvhc/core.hpp"

namespace pvhc::genflow {

inline constexpr double kLogScaleBound = 5.0;

struct FlowArchitecture {
  int layers = 6;
  int hidden = 64;
};

struct TrainConfig {
  double learning_rate = 1e-3;
  int batch_size = 64;
  int max_epochs = 200;
  double clip_norm = 5.0;
  double validation_fraction = 0.1;
  int patience = 20;

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;
  double train_loglik = 0.0;  // mean per profile
  double val_loglik = 0.0;
};

/// Offsets of one coupling layer's parameters in FlowModel::params.
struct CouplingLayer {
  std::vector<std::size_t> cond_idx;
  std::vector<std::size_t> free_idx;
  std::size_t w1 = 0, b1 = 0, w2 = 0, b2 = 0, w3 = 0, b3 = 0, end = 0;

  std::size_t in_dim() const { return cond_idx.size() + 1; }
  std::size_t out_dim() const { return 2 * free_idx.size(); }
};

struct FlowModel {
  int cluster_id = 0;
  std::size_t dim = 0;
  int hidden = 64;
  std::vector<CouplingLayer> layers;
  std::vector<double> params;

  std::vector<double> data_mean;
  std::vector<double> data_std;
  double cond_mean = 0.0;
  double cond_std = 1.0;
  double label_min = 0.0;  // annual-energy label range seen in training
  double label_max = 0.0;

  std::vector<EpochRecord> history;
  bool diverged = false;

  void validate() const;
};

/// Builds a flow whose output layers are zero, i.e. the identity map with an
/// identity standardizer. Hidden layers get Xavier-uniform weights from
/// `stream`.
FlowModel make_flow(std::size_t dim, const FlowArchitecture& arch, const RngStream& stream);

struct ForwardResult {
  std::vector<double> p;
  double logdet = 0.0;  // log|det dp/dz|
};

struct InverseResult {
  std::vector<double> z;
  double logdet = 0.0;  // log|det dz/dp|
};

std::vector<double> flow_forward(const FlowModel& model, std::span<const double> z, double w);
ForwardResult flow_forward_logdet(const FlowModel& model, std::span<const double> z, double w);
InverseResult flow_inverse(const FlowModel& model, std::span<const double> p, double w);

double standard_normal_logpdf(std::span<const double> z);
double log_likelihood(const FlowModel& model, std::span<const double> p, double w);

struct TrainingPair {
  std::vector<double> profile;
  double w = 0.0;
};

/// Mean negative log-likelihood over `batch` and its gradient with respect to
/// FlowModel::params, accumulated in reverse mode through the coupling stack.
/// `grad` must have params.size() entries and is overwritten.
double nll_and_gradient(const FlowModel& model, std::span<const TrainingPair> data,
                        std::span<const std::size_t> batch, std::span<double> grad);

/// Fits data and condition standardizers to a training set.
void fit_standardizers(FlowModel& model, std::span<const TrainingPair> data);

struct TrainResult {
  FlowModel model;  // best-validation checkpoint
  int best_epoch = -1;
  bool early_stopped = false;
};

/// Maximum-likelihood training with Adam and global-norm gradient clipping.
/// Keeps the parameters with the best validation log-likelihood.
TrainResult train(std::span<const TrainingPair> data, const TrainConfig& cfg, const FlowArchitecture& arch,
                  const RngStream& stream, int cluster_id = 0);

/// Same as train() but continues from an existing (possibly hand-built) model
/// without refitting its standardizers.
TrainResult train_from(FlowModel model, std::span<const TrainingPair> data, const TrainConfig& cfg,
                       const RngStream& stream);

struct SampleResult {
  std::vector<std::vector<double>> profiles;
  double clipped_fraction = 0.0;
  bool clipping_flag = false;        // more than 1 % of values clipped
  bool condition_out_of_range = false;
};

/// Draws `count` profiles conditioned on annual energy w. Negative values are
/// clipped at zero when `clip_negative` is set.
SampleResult sample(const FlowModel& model, double w, std::size_t count, const RngStream& stream,
                    bool clip_negative = true);

/// q_t = p_t tan(arccos pf).
std::vector<double> reactive_from_active(std::span<const double> p, double pf);
double reactive_factor(double pf);

void save_model(const FlowModel& model, const std::filesystem::path& path);
FlowModel load_model(const std::filesystem::path& path);
std::string model_to_text(const FlowModel& model);
FlowModel model_from_text(const std::string& text);

/// Per-time-step 5/50/95 percentile envelopes of original vs sampled profiles.
std::string fidelity_csv(const std::vector<std::vector<double>>& original,
                         const std::vector<std::vector<double>>& sampled);

}  // namespace pvhc::genflow
