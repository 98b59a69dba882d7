// SPDX-License-Identifier: Apache-2.0
#include "ndt/mpnn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "ndt/error.hpp"

namespace ndt {

CongestionClass label_oracle(double pct) {
  if (!(pct >= 0.0 && pct <= 100.0))
    throw ContractError("congestion percentage " + std::to_string(pct) + " outside [0, 100]");
  if (pct >= 75.0) return CongestionClass::HighlyCongested;
  if (pct >= 50.0) return CongestionClass::ModeratelyCongested;
  if (pct >= 25.0) return CongestionClass::Balanced;
  return CongestionClass::Uncongested;
}

void Weights::for_each(const std::function<void(double&)>& fn) {
  auto visit = [&](Dense& d) {
    for (double& w : d.weight) fn(w);
    for (double& b : d.bias) fn(b);
  };
  for (auto& d : phi) visit(d);
  for (auto& d : psi) visit(d);
  visit(readout);
}

void Weights::for_each(const std::function<void(double)>& fn) const {
  auto visit = [&](const Dense& d) {
    for (double w : d.weight) fn(w);
    for (double b : d.bias) fn(b);
  };
  for (const auto& d : phi) visit(d);
  for (const auto& d : psi) visit(d);
  visit(readout);
}

std::size_t Weights::size() const {
  std::size_t n = 0;
  for_each([&](double) { ++n; });
  return n;
}

Weights Weights::zeros_like() const {
  Weights z = *this;
  z.for_each([](double& w) { w = 0.0; });
  return z;
}

ModelParams init_params(int layers, std::uint64_t seed, double scale) {
  if (layers < 1) throw ContractError("model needs at least one message-passing layer");
  ModelParams p;
  p.layers = layers;
  p.seed = seed;
  int state_dim = static_cast<int>(kFeatureWidth);
  for (int l = 0; l < layers; ++l) {
    p.weights.phi.emplace_back(2 * state_dim + static_cast<int>(kFeatureWidth), kHiddenWidth);
    p.weights.psi.emplace_back(state_dim + kHiddenWidth, kHiddenWidth);
    state_dim = kHiddenWidth;
  }
  p.weights.readout = Dense(2 * kHiddenWidth + static_cast<int>(kFeatureWidth), kClassCount);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-scale, scale);
  auto fill = [&](Dense& d) {
    for (double& w : d.weight) w = dist(rng);
  };
  for (auto& d : p.weights.phi) fill(d);
  for (auto& d : p.weights.psi) fill(d);
  fill(p.weights.readout);
  return p;
}

namespace {

// out[o] = b[o] + sum_i W[o][i] * in[i]
void affine(const Dense& d, const double* in, double* out) {
  for (int o = 0; o < d.out; ++o) {
    double acc = d.bias[o];
    const double* row = &d.weight[static_cast<std::size_t>(o) * d.in];
    for (int i = 0; i < d.in; ++i) acc += row[i] * in[i];
    out[o] = acc;
  }
}

// Accumulates parameter gradients for one input row and returns dL/d(in).
void affine_backward(const Dense& d, const double* in, const double* dout, Dense& g,
                     double* din) {
  std::fill(din, din + d.in, 0.0);
  for (int o = 0; o < d.out; ++o) {
    const double go = dout[o];
    if (go == 0.0) continue;
    g.bias[o] += go;
    const std::size_t base = static_cast<std::size_t>(o) * d.in;
    for (int i = 0; i < d.in; ++i) {
      g.weight[base + i] += go * in[i];
      din[i] += go * d.weight[base + i];
    }
  }
}

struct LayerCache {
  int state_dim = 0;
  std::vector<double> z_msg, pre_msg, msg, agg, z_upd, pre_upd;
};

struct ForwardCache {
  std::vector<std::vector<double>> h;  // h[0] = x_v, h[l+1] after layer l
  std::vector<LayerCache> layers;
  std::vector<double> z_read;
  Logits logits;
};

void check_shapes(const ModelParams& params, const FeatureBundle& b) {
  if (static_cast<int>(params.weights.phi.size()) != params.layers ||
      static_cast<int>(params.weights.psi.size()) != params.layers)
    throw ContractError("model layer count " + std::to_string(params.layers) +
                        " does not match its weights");
  if (b.edge_features.size() != b.edge_index.size())
    throw ContractError("edge dimension mismatch: " + std::to_string(b.edge_features.size()) +
                        " edge feature rows vs " + std::to_string(b.edge_index.size()) +
                        " edge_index columns");
  const int n = b.vertex_count();
  for (std::size_t e = 0; e < b.edge_index.size(); ++e) {
    const auto& de = b.edge_index[e];
    if (de.u < 0 || de.u >= n || de.v < 0 || de.v >= n)
      throw ContractError("vertex dimension mismatch: edge_index column " + std::to_string(e) +
                          " references a vertex outside [0, " + std::to_string(n) + ")");
  }
}

ForwardCache run_forward(const ModelParams& params, const FeatureBundle& b) {
  check_shapes(params, b);
  const std::size_t n = b.vertex_features.size();
  const std::size_t e_count = b.edge_features.size();
  constexpr int fw = static_cast<int>(kFeatureWidth);
  constexpr int hw = kHiddenWidth;

  ForwardCache c;
  c.h.emplace_back(n * fw);
  for (std::size_t v = 0; v < n; ++v)
    std::copy(b.vertex_features[v].begin(), b.vertex_features[v].end(), &c.h[0][v * fw]);

  int sd = fw;
  for (int l = 0; l < params.layers; ++l) {
    const Dense& phi = params.weights.phi[l];
    const Dense& psi = params.weights.psi[l];
    LayerCache lc;
    lc.state_dim = sd;
    const auto& h = c.h.back();
    const int in_msg = 2 * sd + fw;
    const int in_upd = sd + hw;
    lc.z_msg.resize(e_count * in_msg);
    lc.pre_msg.resize(e_count * hw);
    lc.msg.resize(e_count * hw);
    lc.agg.assign(n * hw, 0.0);
    for (std::size_t e = 0; e < e_count; ++e) {
      const auto [s, t] = b.edge_index[e];
      double* z = &lc.z_msg[e * in_msg];
      std::copy_n(&h[s * sd], sd, z);
      std::copy_n(&h[t * sd], sd, z + sd);
      std::copy(b.edge_features[e].begin(), b.edge_features[e].end(), z + 2 * sd);
      affine(phi, z, &lc.pre_msg[e * hw]);
      for (int k = 0; k < hw; ++k) {
        const double m = std::max(0.0, lc.pre_msg[e * hw + k]);
        lc.msg[e * hw + k] = m;
        lc.agg[static_cast<std::size_t>(t) * hw + k] += m;
      }
    }
    lc.z_upd.resize(n * in_upd);
    lc.pre_upd.resize(n * hw);
    std::vector<double> next(n * hw);
    for (std::size_t v = 0; v < n; ++v) {
      double* z = &lc.z_upd[v * in_upd];
      std::copy_n(&h[v * sd], sd, z);
      std::copy_n(&lc.agg[v * hw], hw, z + sd);
      affine(psi, z, &lc.pre_upd[v * hw]);
      for (int k = 0; k < hw; ++k) next[v * hw + k] = std::max(0.0, lc.pre_upd[v * hw + k]);
    }
    c.layers.push_back(std::move(lc));
    c.h.push_back(std::move(next));
    sd = hw;
  }

  const Dense& ro = params.weights.readout;
  const int in_read = 2 * sd + fw;
  if (ro.in != in_read)
    throw ContractError("readout input dimension " + std::to_string(ro.in) + " != " +
                        std::to_string(in_read));
  const auto& hk = c.h.back();
  c.z_read.resize(e_count * in_read);
  c.logits.resize(e_count);
  for (std::size_t e = 0; e < e_count; ++e) {
    const auto [s, t] = b.edge_index[e];
    double* z = &c.z_read[e * in_read];
    std::copy_n(&hk[s * sd], sd, z);
    std::copy_n(&hk[t * sd], sd, z + sd);
    std::copy(b.edge_features[e].begin(), b.edge_features[e].end(), z + 2 * sd);
    affine(ro, z, c.logits[e].data());
  }
  return c;
}

std::array<double, kClassCount> softmax(const std::array<double, kClassCount>& x) {
  const double mx = *std::max_element(x.begin(), x.end());
  std::array<double, kClassCount> p{};
  double sum = 0.0;
  for (int k = 0; k < kClassCount; ++k) sum += (p[k] = std::exp(x[k] - mx));
  for (auto& v : p) v /= sum;
  return p;
}

double log_sum_exp(const std::array<double, kClassCount>& x) {
  const double mx = *std::max_element(x.begin(), x.end());
  double sum = 0.0;
  for (double v : x) sum += std::exp(v - mx);
  return mx + std::log(sum);
}

}  // namespace

Logits forward(const ModelParams& params, const FeatureBundle& input) {
  return run_forward(params, input).logits;
}

double loss(const Logits& logits, const std::vector<CongestionClass>& labels,
            const std::optional<std::array<double, kClassCount>>& class_weights) {
  if (logits.size() != labels.size())
    throw ContractError("loss: " + std::to_string(logits.size()) + " logit rows vs " +
                        std::to_string(labels.size()) + " labels");
  double total = 0.0;
  for (std::size_t e = 0; e < logits.size(); ++e) {
    const int y = class_index(labels[e]);
    const double w = class_weights ? (*class_weights)[y] : 1.0;
    total += w * (log_sum_exp(logits[e]) - logits[e][y]);
  }
  return total;
}

LossAndGrad grad(const ModelParams& params, const FeatureBundle& input,
                 const std::vector<CongestionClass>& labels,
                 const std::optional<std::array<double, kClassCount>>& class_weights) {
  const ForwardCache c = run_forward(params, input);
  LossAndGrad out;
  out.loss = loss(c.logits, labels, class_weights);
  out.grad = params.weights.zeros_like();

  const std::size_t n = input.vertex_features.size();
  const std::size_t e_count = input.edge_features.size();
  constexpr int fw = static_cast<int>(kFeatureWidth);
  constexpr int hw = kHiddenWidth;
  const int sd_last = params.layers > 0 ? hw : fw;

  // Readout.
  std::vector<double> dh(n * sd_last, 0.0);
  const Dense& ro = params.weights.readout;
  std::vector<double> dz(ro.in);
  for (std::size_t e = 0; e < e_count; ++e) {
    const int y = class_index(labels[e]);
    const double w = class_weights ? (*class_weights)[y] : 1.0;
    auto p = softmax(c.logits[e]);
    std::array<double, kClassCount> dlogit{};
    for (int k = 0; k < kClassCount; ++k) dlogit[k] = w * (p[k] - (k == y ? 1.0 : 0.0));
    affine_backward(ro, &c.z_read[e * ro.in], dlogit.data(), out.grad.readout, dz.data());
    const auto [s, t] = input.edge_index[e];
    for (int k = 0; k < sd_last; ++k) {
      dh[s * sd_last + k] += dz[k];
      dh[t * sd_last + k] += dz[sd_last + k];
    }
  }

  for (int l = params.layers - 1; l >= 0; --l) {
    const LayerCache& lc = c.layers[l];
    const int sd = lc.state_dim;
    const Dense& phi = params.weights.phi[l];
    const Dense& psi = params.weights.psi[l];
    std::vector<double> dh_prev(n * sd, 0.0);
    std::vector<double> dagg(n * hw, 0.0);

    std::vector<double> dpre(hw), dz_upd(psi.in);
    for (std::size_t v = 0; v < n; ++v) {
      for (int k = 0; k < hw; ++k)
        dpre[k] = lc.pre_upd[v * hw + k] > 0.0 ? dh[v * hw + k] : 0.0;
      affine_backward(psi, &lc.z_upd[v * psi.in], dpre.data(), out.grad.psi[l], dz_upd.data());
      for (int k = 0; k < sd; ++k) dh_prev[v * sd + k] += dz_upd[k];
      for (int k = 0; k < hw; ++k) dagg[v * hw + k] = dz_upd[sd + k];
    }

    std::vector<double> dz_msg(phi.in);
    for (std::size_t e = 0; e < e_count; ++e) {
      const auto [s, t] = input.edge_index[e];
      for (int k = 0; k < hw; ++k)
        dpre[k] = lc.pre_msg[e * hw + k] > 0.0 ? dagg[static_cast<std::size_t>(t) * hw + k] : 0.0;
      affine_backward(phi, &lc.z_msg[e * phi.in], dpre.data(), out.grad.phi[l], dz_msg.data());
      for (int k = 0; k < sd; ++k) {
        dh_prev[s * sd + k] += dz_msg[k];
        dh_prev[t * sd + k] += dz_msg[sd + k];
      }
    }
    dh = std::move(dh_prev);
  }
  return out;
}

std::size_t TrainingSet::edge_count() const {
  std::size_t n = 0;
  for (const auto& s : samples) n += s.labels.size();
  return n;
}

TrainingSample make_sample(const WindowMetrics& metrics) {
  TrainingSample s;
  s.bundle = features_from_metrics(metrics);
  for (const auto& em : metrics.edges) s.labels.push_back(label_oracle(em.congestion));
  return s;
}

namespace {

std::array<double, kClassCount> inverse_frequency(const std::vector<const TrainingSample*>& set) {
  std::array<double, kClassCount> count{};
  for (const auto* s : set)
    for (auto l : s->labels) count[class_index(l)] += 1.0;
  const double total = std::accumulate(count.begin(), count.end(), 0.0);
  int present = 0;
  for (double c : count) present += c > 0.0;
  std::array<double, kClassCount> w{};
  for (int k = 0; k < kClassCount; ++k)
    w[k] = count[k] > 0.0 ? total / (present * count[k]) : 0.0;
  return w;
}

double mean_loss(const ModelParams& params, const std::vector<const TrainingSample*>& set,
                 const std::vector<FeatureBundle>& scaled) {
  double total = 0.0;
  std::size_t edges = 0;
  for (std::size_t i = 0; i < set.size(); ++i) {
    total += loss(forward(params, scaled[i]), set[i]->labels);
    edges += set[i]->labels.size();
  }
  return edges ? total / static_cast<double>(edges) : std::numeric_limits<double>::quiet_NaN();
}

}  // namespace

ModelParams train(const TrainingSet& dataset, const TrainConfig& config) {
  if (dataset.samples.empty()) throw ContractError("training set is empty");
  if (config.batch < 1) throw ContractError("batch must hold at least one graph");
  for (const auto& s : dataset.samples)
    if (s.labels.size() != s.bundle.edge_features.size())
      throw ContractError("sample has " + std::to_string(s.labels.size()) + " labels for " +
                          std::to_string(s.bundle.edge_features.size()) + " edges");

  ModelParams params = init_params(config.layers, config.seed, config.init_scale);
  std::mt19937_64 rng(config.seed);

  std::vector<std::size_t> order(dataset.samples.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<const TrainingSample*> train_set, valid_set;
  if (config.validation_fraction > 0.0) {
    std::shuffle(order.begin(), order.end(), rng);
    const auto n_valid = static_cast<std::size_t>(
        std::floor(config.validation_fraction * static_cast<double>(order.size())));
    for (std::size_t i = 0; i < order.size(); ++i)
      (i < n_valid && n_valid < order.size() ? valid_set : train_set)
          .push_back(&dataset.samples[order[i]]);
  } else {
    for (const auto& s : dataset.samples) train_set.push_back(&s);
  }

  std::vector<FeatureBundle> raw;
  for (const auto* s : train_set) raw.push_back(s->bundle);
  params.scaler = FeatureScaler::fit(raw);
  std::vector<FeatureBundle> train_scaled, valid_scaled;
  for (const auto* s : train_set) train_scaled.push_back(params.scaler.transform(s->bundle));
  for (const auto* s : valid_set) valid_scaled.push_back(params.scaler.transform(s->bundle));

  std::optional<std::array<double, kClassCount>> class_weights;
  if (config.class_weighting) class_weights = inverse_frequency(train_set);

  Weights adam_m = params.weights.zeros_like(), adam_v = params.weights.zeros_like();
  long long adam_t = 0;
  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

  auto step = [&](const Weights& g) {
    if (config.optimizer == Optimizer::Sgd) {
      std::vector<double> flat;
      g.for_each([&](double x) { flat.push_back(x); });
      std::size_t i = 0;
      params.weights.for_each([&](double& w) { w -= config.lr * flat[i++]; });
      return;
    }
    ++adam_t;
    std::vector<double> flat;
    g.for_each([&](double x) { flat.push_back(x); });
    std::size_t i = 0;
    adam_m.for_each([&](double& m) { m = beta1 * m + (1 - beta1) * flat[i]; ++i; });
    i = 0;
    adam_v.for_each([&](double& v) { v = beta2 * v + (1 - beta2) * flat[i] * flat[i]; ++i; });
    std::vector<double> ms, vs;
    adam_m.for_each([&](double m) { ms.push_back(m); });
    adam_v.for_each([&](double v) { vs.push_back(v); });
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(adam_t));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(adam_t));
    i = 0;
    params.weights.for_each([&](double& w) {
      w -= config.lr * (ms[i] / c1) / (std::sqrt(vs[i] / c2) + eps);
      ++i;
    });
  };

  std::vector<std::size_t> idx(train_set.size());
  std::iota(idx.begin(), idx.end(), 0);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(idx.begin(), idx.end(), rng);
    for (std::size_t start = 0; start < idx.size(); start += config.batch) {
      const std::size_t stop = std::min(idx.size(), start + config.batch);
      Weights acc = params.weights.zeros_like();
      for (std::size_t j = start; j < stop; ++j) {
        const std::size_t i = idx[j];
        const auto lg = grad(params, train_scaled[i], train_set[i]->labels, class_weights);
        std::vector<double> flat;
        lg.grad.for_each([&](double x) { flat.push_back(x); });
        std::size_t q = 0;
        acc.for_each([&](double& a) { a += flat[q++]; });
      }
      step(acc);
    }
    LossPoint point;
    point.epoch = epoch + 1;
    point.train_loss = mean_loss(params, train_set, train_scaled);
    point.validation_loss = valid_set.empty() ? std::numeric_limits<double>::quiet_NaN()
                                              : mean_loss(params, valid_set, valid_scaled);
    if (!std::isfinite(point.train_loss) || point.train_loss > config.divergence_limit)
      throw Error("training diverged at epoch " + std::to_string(point.epoch) +
                  ": mean loss " + std::to_string(point.train_loss) + " (lr " +
                  std::to_string(config.lr) + ")");
    params.curve.push_back(point);
  }
  return params;
}

std::vector<CongestionClass> classify_logits(const Logits& logits) {
  std::vector<CongestionClass> out;
  out.reserve(logits.size());
  for (const auto& row : logits) {
    int best = 0;
    for (int k = 1; k < kClassCount; ++k)
      if (row[k] > row[best]) best = k;
    out.push_back(class_from_index(best));
  }
  return out;
}

std::vector<CongestionClass> classify(const ModelParams& params, const FeatureBundle& raw) {
  return classify_logits(forward(params, params.scaler.transform(raw)));
}

double accuracy(const ModelParams& params, const TrainingSet& dataset) {
  std::size_t correct = 0, total = 0;
  for (const auto& s : dataset.samples) {
    const auto predicted = classify(params, s.bundle);
    for (std::size_t e = 0; e < predicted.size(); ++e) correct += predicted[e] == s.labels[e];
    total += predicted.size();
  }
  return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
}

namespace {

nlohmann::json dense_json(const Dense& d) {
  return {{"in", d.in}, {"out", d.out}, {"weight", d.weight}, {"bias", d.bias}};
}

Dense dense_from(const nlohmann::json& j) {
  Dense d;
  d.in = j.at("in").get<int>();
  d.out = j.at("out").get<int>();
  d.weight = j.at("weight").get<std::vector<double>>();
  d.bias = j.at("bias").get<std::vector<double>>();
  if (d.weight.size() != static_cast<std::size_t>(d.in) * d.out ||
      d.bias.size() != static_cast<std::size_t>(d.out))
    throw IoError("weight array size does not match declared shape");
  return d;
}

}  // namespace

nlohmann::json to_json(const ModelParams& params) {
  nlohmann::json j;
  j["format"] = "ndt-mpnn";
  j["version"] = 1;
  j["layers"] = params.layers;
  j["hidden"] = kHiddenWidth;
  j["seed"] = params.seed;
  j["scaler"] = to_json(params.scaler);
  auto& w = j["weights"];
  for (int l = 0; l < params.layers; ++l) {
    w["phi" + std::to_string(l + 1)] = dense_json(params.weights.phi[l]);
    w["psi" + std::to_string(l + 1)] = dense_json(params.weights.psi[l]);
  }
  w["readout"] = dense_json(params.weights.readout);
  return j;
}

ModelParams model_from_json(const nlohmann::json& j) {
  try {
    if (j.value("format", "") != "ndt-mpnn") throw IoError("not an ndt-mpnn weight file");
    if (j.value("version", 0) != 1)
      throw IoError("unsupported weight file version " + std::to_string(j.value("version", 0)));
    ModelParams p;
    p.layers = j.at("layers").get<int>();
    p.seed = j.value("seed", std::uint64_t{0});
    p.scaler = scaler_from_json(j.at("scaler"));
    const auto& w = j.at("weights");
    for (int l = 0; l < p.layers; ++l) {
      p.weights.phi.push_back(dense_from(w.at("phi" + std::to_string(l + 1))));
      p.weights.psi.push_back(dense_from(w.at("psi" + std::to_string(l + 1))));
    }
    p.weights.readout = dense_from(w.at("readout"));
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed weight file: ") + e.what());
  }
}

nlohmann::json to_json(const TrainingSample& s) {
  nlohmann::json j = to_json(s.bundle);
  std::vector<int> labels;
  for (auto l : s.labels) labels.push_back(static_cast<int>(l));
  j["labels"] = labels;
  j["provenance"] = {{"model", s.model}, {"n", s.n}, {"seed", s.seed}, {"iteration", s.iteration}};
  return j;
}

TrainingSample sample_from_json(const nlohmann::json& j) {
  TrainingSample s;
  s.bundle = bundle_from_json(j);
  try {
    for (int l : j.at("labels").get<std::vector<int>>()) {
      if (l < 1 || l > kClassCount) throw IoError("label " + std::to_string(l) + " out of range");
      s.labels.push_back(static_cast<CongestionClass>(l));
    }
    if (j.contains("provenance")) {
      const auto& p = j["provenance"];
      s.model = p.value("model", "");
      s.n = p.value("n", 0);
      s.seed = p.value("seed", std::uint64_t{0});
      s.iteration = p.value("iteration", 0);
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed training sample: ") + e.what());
  }
  return s;
}

}  // namespace ndt
