#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "qpi/datasets.hpp"
#include "qpi/hermite.hpp"
#include "qpi/model.hpp"
#include "qpi/rng.hpp"

namespace qpi {

enum class AblationMode { relu_bn, herpn_basiswise, hermite_preact, hermite_postact };

inline const char* ablation_mode_name(AblationMode m) {
  switch (m) {
    case AblationMode::relu_bn: return "relu-bn";
    case AblationMode::herpn_basiswise: return "herpn-basiswise";
    case AblationMode::hermite_preact: return "hermite-preact";
    case AblationMode::hermite_postact: return "hermite-postact";
  }
  throw std::invalid_argument("train: unknown ablation mode");
}

inline AblationMode ablation_mode_from_name(const std::string& s) {
  if (s == "relu-bn") return AblationMode::relu_bn;
  if (s == "herpn-basiswise") return AblationMode::herpn_basiswise;
  if (s == "hermite-preact") return AblationMode::hermite_preact;
  if (s == "hermite-postact") return AblationMode::hermite_postact;
  throw std::invalid_argument("train: unknown ablation mode '" + s + "'");
}

struct TrainConfig {
  unsigned epochs = 300;
  std::size_t batch = 32;
  double lr = 0.05;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  u64 seed = 1;
  AblationMode mode = AblationMode::relu_bn;
  unsigned stability_window = 20;
};

struct EpochRecord {
  unsigned epoch = 0;
  double loss = 0.0;
  double train_acc = 0.0;
  double test_acc = 0.0;
};

struct TrainReport {
  std::string mode;
  std::vector<EpochRecord> epochs;
  double final_loss = 0.0;
  double final_train_acc = 0.0;
  double final_test_acc = 0.0;
  double loss_stability = 0.0;
  unsigned stability_window = 20;
  bool diverged = false;
  unsigned diverge_epoch = 0;
  std::string diagnostic;

  std::string to_jsonl() const {
    std::string out;
    for (const EpochRecord& e : epochs) {
      nlohmann::ordered_json j;
      j["epoch"] = e.epoch;
      j["loss"] = e.loss;
      j["train_acc"] = e.train_acc;
      j["test_acc"] = e.test_acc;
      j["mode"] = mode;
      out += j.dump();
      out += '\n';
    }
    nlohmann::ordered_json s;
    s["summary"] = true;
    s["mode"] = mode;
    s["final_loss"] = final_loss;
    s["final_train_acc"] = final_train_acc;
    s["final_test_acc"] = final_test_acc;
    s["loss_stability"] = loss_stability;
    s["stability_window"] = stability_window;
    s["diverged"] = diverged;
    if (diverged) {
      s["diverge_epoch"] = diverge_epoch;
      s["diagnostic"] = diagnostic;
    }
    out += s.dump();
    out += '\n';
    return out;
  }

  std::string to_csv() const {
    std::string out = "epoch,loss,train_acc,test_acc,mode\n";
    char buf[160];
    for (const EpochRecord& e : epochs) {
      std::snprintf(buf, sizeof buf, "%u,%.17g,%.17g,%.17g,%s\n", e.epoch, e.loss, e.train_acc,
                    e.test_acc, mode.c_str());
      out += buf;
    }
    return out;
  }
};

// The four ablation nets share the 2 -> H -> H -> 2 linear skeleton and differ
// only in the activation/normalization blocks between linear layers:
//   relu-bn          Linear, BN, ReLU
//   herpn-basiswise  Linear, HerPN               (per-basis normalization)
//   hermite-preact   Linear, BN, HermiteAct      (normalize input once)
//   hermite-postact  Linear, HermiteAct, BN      (normalize the sum once)
inline ModelGraph build_ablation_mlp(AblationMode mode, u64 seed, unsigned hidden = 32,
                                     unsigned blocks = 2) {
  if (blocks == 0) throw std::invalid_argument("train: need at least one hidden block");
  ModelGraph m;
  m.name = std::string("ablation-") + ablation_mode_name(mode);
  m.input_shape = {2};
  Rng rng(seed);
  auto linear = [&](unsigned in, unsigned out) {
    LinearLayer l;
    l.in = in;
    l.out = out;
    double s = std::sqrt(6.0 / (in + out));
    l.W.resize(static_cast<std::size_t>(in) * out);
    l.b.assign(out, 0.0);
    for (double& w : l.W) w = rng.uniform(-s, s);
    return l;
  };
  auto block = [&](unsigned width) {
    switch (mode) {
      case AblationMode::relu_bn:
        m.layers.push_back({BatchNormLayer{make_batchnorm(width)}});
        m.layers.push_back({ReLULayer{}});
        break;
      case AblationMode::herpn_basiswise:
        m.layers.push_back({HerPNLayer{make_herpn(width, 2)}});
        break;
      case AblationMode::hermite_preact:
        m.layers.push_back({BatchNormLayer{make_batchnorm(width)}});
        m.layers.push_back({HermiteActLayer{2}});
        break;
      case AblationMode::hermite_postact:
        m.layers.push_back({HermiteActLayer{2}});
        m.layers.push_back({BatchNormLayer{make_batchnorm(width)}});
        break;
    }
  };
  m.layers.push_back({linear(2, hidden)});
  block(hidden);
  for (unsigned i = 1; i < blocks; ++i) {
    m.layers.push_back({linear(hidden, hidden)});
    block(hidden);
  }
  m.layers.push_back({linear(hidden, 2)});
  return m;
}

inline std::size_t trainable_param_count(const ModelGraph& m) {
  std::size_t n = 0;
  for (const LayerSpec& l : m.layers) {
    if (const auto* lin = std::get_if<LinearLayer>(&l.node))
      n += lin->W.size() + lin->b.size();
    else if (const auto* bn = std::get_if<BatchNormLayer>(&l.node))
      n += bn->params.gamma.size() + bn->params.beta.size();
    else if (const auto* hp = std::get_if<HerPNLayer>(&l.node))
      n += hp->params.gamma.size() + hp->params.beta.size();
  }
  return n;
}

namespace detail {

struct TrainLayerCache {
  std::vector<double> in;  // input batch (linear / relu / hermite)
  BatchNormCache bn;
  HerPNCache hp;
};

}  // namespace detail

struct BatchWork {
  std::vector<detail::TrainLayerCache> layers;
  std::vector<double> logits;  // {batch, classes}
};

// Per-layer parameter gradients; unused slots stay empty.
struct LayerGrads {
  std::vector<double> W, b;
  std::vector<double> gamma, beta;
};

// Training-mode batched forward over the 1-D layer set the trainer supports.
// x is row-major {batch, dim}. BatchNorm/HerPN layers must be in training
// mode; their running statistics are updated as a side effect.
inline void trainer_forward(ModelGraph& m, const std::vector<double>& x, std::size_t batch,
                            BatchWork& work) {
  work.layers.assign(m.layers.size(), {});
  std::vector<double> cur = x;
  for (std::size_t li = 0; li < m.layers.size(); ++li) {
    detail::TrainLayerCache& cache = work.layers[li];
    if (auto* lin = std::get_if<LinearLayer>(&m.layers[li].node)) {
      cache.in = cur;
      std::vector<double> next(batch * lin->out);
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t o = 0; o < lin->out; ++o) {
          double acc = lin->b[o];
          const double* row = lin->W.data() + o * lin->in;
          const double* xin = cur.data() + b * lin->in;
          for (std::size_t i = 0; i < lin->in; ++i) acc += row[i] * xin[i];
          next[b * lin->out + o] = acc;
        }
      cur = std::move(next);
    } else if (std::holds_alternative<ReLULayer>(m.layers[li].node)) {
      cache.in = cur;
      for (double& v : cur) v = v > 0.0 ? v : 0.0;
    } else if (auto* bn = std::get_if<BatchNormLayer>(&m.layers[li].node)) {
      cur = batchnorm_forward_train(cur, batch, 1, bn->params, &cache.bn);
    } else if (auto* hp = std::get_if<HerPNLayer>(&m.layers[li].node)) {
      cur = herpn_forward_train(cur, batch, 1, hp->params, &cache.hp);
    } else if (auto* ha = std::get_if<HermiteActLayer>(&m.layers[li].node)) {
      cache.in = cur;
      HermiteSeries g = HermiteSeries::relu(ha->degree);
      for (double& v : cur) v = g.eval(v);
    } else {
      throw std::invalid_argument("train: layer " + std::to_string(li) +
                                  " is not a trainable 1-D layer kind");
    }
  }
  work.logits = std::move(cur);
}

// Mean softmax cross-entropy over the batch; optionally emits dloss/dlogits.
inline double softmax_ce(const std::vector<double>& logits, const std::vector<int>& labels,
                         std::size_t batch, std::size_t classes, std::vector<double>* dlogits) {
  if (logits.size() != batch * classes || labels.size() < batch)
    throw std::invalid_argument("train: logits/labels shape mismatch");
  if (dlogits) dlogits->assign(batch * classes, 0.0);
  double loss = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    const double* row = logits.data() + b * classes;
    double mx = *std::max_element(row, row + classes);
    double denom = 0.0;
    for (std::size_t k = 0; k < classes; ++k) denom += std::exp(row[k] - mx);
    int y = labels[b];
    loss += -(row[y] - mx - std::log(denom));
    if (dlogits)
      for (std::size_t k = 0; k < classes; ++k) {
        double p = std::exp(row[k] - mx) / denom;
        (*dlogits)[b * classes + k] = (p - (static_cast<int>(k) == y ? 1.0 : 0.0)) /
                                      static_cast<double>(batch);
      }
  }
  return loss / static_cast<double>(batch);
}

inline std::vector<LayerGrads> trainer_backward(ModelGraph& m, const BatchWork& work,
                                                const std::vector<double>& dlogits,
                                                std::size_t batch) {
  std::vector<LayerGrads> grads(m.layers.size());
  std::vector<double> d = dlogits;
  for (std::size_t ri = m.layers.size(); ri-- > 0;) {
    const detail::TrainLayerCache& cache = work.layers[ri];
    if (auto* lin = std::get_if<LinearLayer>(&m.layers[ri].node)) {
      LayerGrads& g = grads[ri];
      g.W.assign(lin->W.size(), 0.0);
      g.b.assign(lin->b.size(), 0.0);
      std::vector<double> dx(batch * lin->in, 0.0);
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t o = 0; o < lin->out; ++o) {
          double dy = d[b * lin->out + o];
          g.b[o] += dy;
          const double* xin = cache.in.data() + b * lin->in;
          double* wrow = g.W.data() + o * lin->in;
          const double* row = lin->W.data() + o * lin->in;
          double* dxr = dx.data() + b * lin->in;
          for (std::size_t i = 0; i < lin->in; ++i) {
            wrow[i] += dy * xin[i];
            dxr[i] += dy * row[i];
          }
        }
      d = std::move(dx);
    } else if (std::holds_alternative<ReLULayer>(m.layers[ri].node)) {
      for (std::size_t k = 0; k < d.size(); ++k)
        if (cache.in[k] <= 0.0) d[k] = 0.0;
    } else if (auto* bn = std::get_if<BatchNormLayer>(&m.layers[ri].node)) {
      BatchNormGrads g = batchnorm_backward(d, cache.bn, bn->params);
      grads[ri].gamma = std::move(g.gamma);
      grads[ri].beta = std::move(g.beta);
      d = std::move(g.x);
    } else if (auto* hp = std::get_if<HerPNLayer>(&m.layers[ri].node)) {
      HerPNGrads g = herpn_backward(d, cache.hp, hp->params);
      grads[ri].gamma = std::move(g.gamma);
      grads[ri].beta = std::move(g.beta);
      d = std::move(g.x);
    } else if (auto* ha = std::get_if<HermiteActLayer>(&m.layers[ri].node)) {
      HermiteSeries g = HermiteSeries::relu(ha->degree);
      for (std::size_t k = 0; k < d.size(); ++k) d[k] *= g.derivative(cache.in[k]);
    } else {
      throw std::invalid_argument("train: layer " + std::to_string(ri) +
                                  " is not a trainable 1-D layer kind");
    }
  }
  return grads;
}

namespace detail {

inline void set_training(ModelGraph& m, bool training) {
  for (LayerSpec& l : m.layers) {
    if (auto* bn = std::get_if<BatchNormLayer>(&l.node)) bn->params.training = training;
    if (auto* hp = std::get_if<HerPNLayer>(&l.node)) hp->params.training = training;
  }
}

inline double accuracy(const std::vector<double>& logits, const std::vector<int>& labels,
                       std::size_t batch, std::size_t classes) {
  std::size_t hit = 0;
  for (std::size_t b = 0; b < batch; ++b) {
    const double* row = logits.data() + b * classes;
    std::size_t best = 0;
    for (std::size_t k = 1; k < classes; ++k)
      if (row[k] > row[best]) best = k;
    if (static_cast<int>(best) == labels[b]) ++hit;
  }
  return static_cast<double>(hit) / static_cast<double>(batch);
}

}  // namespace detail

// Inference-mode forward (running statistics) over the trainer layer set.
inline std::vector<double> trainer_infer(ModelGraph& m, const std::vector<double>& x,
                                         std::size_t batch) {
  std::vector<double> cur = x;
  for (std::size_t li = 0; li < m.layers.size(); ++li) {
    if (auto* lin = std::get_if<LinearLayer>(&m.layers[li].node)) {
      std::vector<double> next(batch * lin->out);
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t o = 0; o < lin->out; ++o) {
          double acc = lin->b[o];
          for (std::size_t i = 0; i < lin->in; ++i)
            acc += lin->W[o * lin->in + i] * cur[b * lin->in + i];
          next[b * lin->out + o] = acc;
        }
      cur = std::move(next);
    } else if (std::holds_alternative<ReLULayer>(m.layers[li].node)) {
      for (double& v : cur) v = v > 0.0 ? v : 0.0;
    } else if (auto* bn = std::get_if<BatchNormLayer>(&m.layers[li].node)) {
      cur = batchnorm_forward_infer(cur, batch, 1, bn->params);
    } else if (auto* hp = std::get_if<HerPNLayer>(&m.layers[li].node)) {
      cur = herpn_forward_infer(cur, batch, 1, hp->params);
    } else if (auto* ha = std::get_if<HermiteActLayer>(&m.layers[li].node)) {
      HermiteSeries g = HermiteSeries::relu(ha->degree);
      for (double& v : cur) v = g.eval(v);
    } else {
      throw std::invalid_argument("train: layer " + std::to_string(li) +
                                  " is not a trainable 1-D layer kind");
    }
  }
  return cur;
}

// SGD with momentum and weight decay, cosine learning-rate schedule. Weight
// decay applies to linear weights and biases; normalization scale/shift are
// exempt, the usual convention. Incomplete tail batches are dropped so every
// step sees a full batch (and batch-statistics layers never see batch 1).
//
// Divergence guard: a non-finite batch loss aborts the run; the report marks
// it diverged with the epoch and diagnostic rather than hiding the failure.
inline TrainReport train(ModelGraph& model, const LabeledSet& train_set,
                         const LabeledSet& test_set, const TrainConfig& cfg) {
  if (cfg.batch < 2) throw std::invalid_argument("train: batch size must be at least 2");
  if (cfg.epochs == 0) throw std::invalid_argument("train: zero epochs");
  const std::size_t n = train_set.y.size();
  if (n < cfg.batch) throw std::invalid_argument("train: training set smaller than one batch");
  const std::size_t classes = 2;

  TrainReport report;
  report.mode = ablation_mode_name(cfg.mode);
  report.stability_window = cfg.stability_window;

  std::vector<LayerGrads> velocity(model.layers.size());
  Rng rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  const double pi = 3.141592653589793238462643383279502884;
  for (unsigned epoch = 0; epoch < cfg.epochs; ++epoch) {
    double lr = 0.5 * cfg.lr * (1.0 + std::cos(pi * epoch / cfg.epochs));
    // Fisher-Yates with the run RNG: deterministic given the seed.
    for (std::size_t i = n - 1; i > 0; --i) {
      std::size_t j = rng.index(i + 1);
      std::swap(order[i], order[j]);
    }
    double epoch_loss = 0.0;
    std::size_t seen = 0, hits = 0;
    detail::set_training(model, true);
    for (std::size_t start = 0; start + cfg.batch <= n; start += cfg.batch) {
      std::vector<double> xb(cfg.batch * 2);
      std::vector<int> yb(cfg.batch);
      for (std::size_t k = 0; k < cfg.batch; ++k) {
        std::size_t src = order[start + k];
        xb[2 * k] = train_set.x.data[2 * src];
        xb[2 * k + 1] = train_set.x.data[2 * src + 1];
        yb[k] = train_set.y[src];
      }
      BatchWork work;
      trainer_forward(model, xb, cfg.batch, work);
      std::vector<double> dlogits;
      double loss = softmax_ce(work.logits, yb, cfg.batch, classes, &dlogits);
      if (!std::isfinite(loss)) {
        report.diverged = true;
        report.diverge_epoch = epoch;
        report.diagnostic = "non-finite loss at epoch " + std::to_string(epoch);
        break;
      }
      for (std::size_t b = 0; b < cfg.batch; ++b) {
        const double* row = work.logits.data() + b * classes;
        std::size_t best = 0;
        for (std::size_t k = 1; k < classes; ++k)
          if (row[k] > row[best]) best = k;
        if (static_cast<int>(best) == yb[b]) ++hits;
      }
      epoch_loss += loss * static_cast<double>(cfg.batch);
      seen += cfg.batch;
      std::vector<LayerGrads> grads = trainer_backward(model, work, dlogits, cfg.batch);
      for (std::size_t li = 0; li < model.layers.size(); ++li) {
        auto step = [&](std::vector<double>& p, std::vector<double>& v, std::vector<double>& g,
                        double wd) {
          if (g.empty()) return;
          if (v.size() != p.size()) v.assign(p.size(), 0.0);
          for (std::size_t k = 0; k < p.size(); ++k) {
            v[k] = cfg.momentum * v[k] - lr * (g[k] + wd * p[k]);
            p[k] += v[k];
          }
        };
        if (auto* lin = std::get_if<LinearLayer>(&model.layers[li].node)) {
          step(lin->W, velocity[li].W, grads[li].W, cfg.weight_decay);
          step(lin->b, velocity[li].b, grads[li].b, cfg.weight_decay);
        } else if (auto* bn = std::get_if<BatchNormLayer>(&model.layers[li].node)) {
          step(bn->params.gamma, velocity[li].gamma, grads[li].gamma, 0.0);
          step(bn->params.beta, velocity[li].beta, grads[li].beta, 0.0);
        } else if (auto* hp = std::get_if<HerPNLayer>(&model.layers[li].node)) {
          step(hp->params.gamma, velocity[li].gamma, grads[li].gamma, 0.0);
          step(hp->params.beta, velocity[li].beta, grads[li].beta, 0.0);
        }
      }
    }
    if (report.diverged) break;

    detail::set_training(model, false);
    std::vector<double> test_logits = trainer_infer(model, test_set.x.data, test_set.y.size());
    double test_acc = detail::accuracy(test_logits, test_set.y, test_set.y.size(), classes);
    detail::set_training(model, true);

    EpochRecord rec;
    rec.epoch = epoch;
    rec.loss = epoch_loss / static_cast<double>(seen);
    rec.train_acc = static_cast<double>(hits) / static_cast<double>(seen);
    rec.test_acc = test_acc;
    report.epochs.push_back(rec);
  }

  detail::set_training(model, false);
  if (!report.epochs.empty()) {
    const EpochRecord& last = report.epochs.back();
    report.final_loss = last.loss;
    report.final_train_acc = last.train_acc;
    report.final_test_acc = last.test_acc;
    std::size_t k = std::min<std::size_t>(report.stability_window, report.epochs.size());
    double mean = 0.0;
    for (std::size_t i = report.epochs.size() - k; i < report.epochs.size(); ++i)
      mean += report.epochs[i].loss;
    mean /= static_cast<double>(k);
    double var = 0.0;
    for (std::size_t i = report.epochs.size() - k; i < report.epochs.size(); ++i) {
      double dlt = report.epochs[i].loss - mean;
      var += dlt * dlt;
    }
    report.loss_stability = var / static_cast<double>(k);
  }
  // A diverged run hit a non-finite loss, so the loss variance over any
  // window containing it is unbounded.
  if (report.diverged || report.epochs.empty())
    report.loss_stability = std::numeric_limits<double>::infinity();
  return report;
}

}  // namespace qpi
