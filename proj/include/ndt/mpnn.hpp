// SPDX-License-Identifier: Apache-2.0
//
// Message-passing neural network that classifies every directed edge of the
// core into one of four congestion classes.
//
// Layer l turns vertex states h into h':
//   m_e  = relu(W_phi [h_src(e), h_dst(e), x_e] + b_phi)      per directed edge
//   a_v  = sum of m_e over edges entering v                   (zero if none)
//   h'_v = relu(W_psi [h_v, a_v] + b_psi)
// with h = x_v for the first layer. The readout maps [h_u, h_v, x_e] of each
// directed edge (u, v) to four logits.
#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ndt/telemetry.hpp"

namespace ndt {

enum class CongestionClass : int {
  HighlyCongested = 1,
  ModeratelyCongested = 2,
  Balanced = 3,
  Uncongested = 4,
};

inline constexpr int kClassCount = 4;
inline constexpr int kHiddenWidth = 8;

inline int class_index(CongestionClass c) { return static_cast<int>(c) - 1; }
inline CongestionClass class_from_index(int i) { return static_cast<CongestionClass>(i + 1); }
inline bool is_congested(CongestionClass c) { return static_cast<int>(c) <= 2; }

/// Quartile labels: >= 75 highly, [50, 75) moderately, [25, 50) balanced, < 25 uncongested.
CongestionClass label_oracle(double congestion_pct);

/// Affine map stored row-major, out x in.
struct Dense {
  int in = 0;
  int out = 0;
  std::vector<double> weight;
  std::vector<double> bias;

  Dense() = default;
  Dense(int in_dim, int out_dim) : in(in_dim), out(out_dim), weight(in_dim * out_dim, 0.0), bias(out_dim, 0.0) {}
};

struct Weights {
  std::vector<Dense> phi;  // message maps, one per layer
  std::vector<Dense> psi;  // update maps, one per layer
  Dense readout;

  void for_each(const std::function<void(double&)>& fn);
  void for_each(const std::function<void(double)>& fn) const;
  std::size_t size() const;
  /// Same shapes, all zeros.
  Weights zeros_like() const;
};

struct LossPoint {
  int epoch = 0;
  double train_loss = 0.0;       // mean cross-entropy per edge
  double validation_loss = 0.0;  // NaN without a validation split
};

struct ModelParams {
  int layers = 2;
  std::uint64_t seed = 0;
  Weights weights;
  FeatureScaler scaler;
  std::vector<LossPoint> curve;
};

/// Uniform weights in [-scale, scale] from `seed`; biases zero.
ModelParams init_params(int layers, std::uint64_t seed, double scale = 0.1);

using Logits = std::vector<std::array<double, kClassCount>>;

/// Runs the network on already-scaled features. Throws ContractError naming
/// the offending dimension on shape mismatch.
Logits forward(const ModelParams& params, const FeatureBundle& input);

/// Sum over edges of softmax cross-entropy; optional per-class weights.
double loss(const Logits& logits, const std::vector<CongestionClass>& labels,
            const std::optional<std::array<double, kClassCount>>& class_weights = std::nullopt);

struct LossAndGrad {
  double loss = 0.0;
  Weights grad;
};

/// Exact reverse-mode gradient of `loss` with respect to every weight.
LossAndGrad grad(const ModelParams& params, const FeatureBundle& input,
                 const std::vector<CongestionClass>& labels,
                 const std::optional<std::array<double, kClassCount>>& class_weights = std::nullopt);

struct TrainingSample {
  FeatureBundle bundle;  // raw (unscaled) features
  std::vector<CongestionClass> labels;
  std::string model;
  int n = 0;
  std::uint64_t seed = 0;
  int iteration = 0;
};

struct TrainingSet {
  std::vector<TrainingSample> samples;
  std::size_t edge_count() const;
};

/// Labels every directed core edge of a window with label_oracle.
TrainingSample make_sample(const WindowMetrics& metrics);

enum class Optimizer { Sgd, Adam };

struct TrainConfig {
  double lr = 1e-2;
  int epochs = 200;
  int batch = 1;  // graphs per gradient step
  std::uint64_t seed = 1;
  int layers = 2;
  double init_scale = 0.1;
  double validation_fraction = 0.0;
  bool class_weighting = false;  // inverse-frequency class weights
  Optimizer optimizer = Optimizer::Sgd;
  double divergence_limit = 1e6;
};

/// Fits the feature scaler on the training samples, then runs gradient
/// descent. Throws Error if the mean loss exceeds the divergence limit.
ModelParams train(const TrainingSet& dataset, const TrainConfig& config);

/// Argmax per edge; ties go to the more congested class. Scales `raw` with
/// the model's scaler first.
std::vector<CongestionClass> classify(const ModelParams& params, const FeatureBundle& raw);
std::vector<CongestionClass> classify_logits(const Logits& logits);

double accuracy(const ModelParams& params, const TrainingSet& dataset);

nlohmann::json to_json(const ModelParams& params);
ModelParams model_from_json(const nlohmann::json& j);
nlohmann::json to_json(const TrainingSample& sample);
TrainingSample sample_from_json(const nlohmann::json& j);

}  // namespace ndt
