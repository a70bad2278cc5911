#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "drowsy/common.hpp"
#include "drowsy/model.hpp"
#include "drowsy/ops.hpp"
#include "drowsy/optim.hpp"
#include "drowsy/rng.hpp"
#include "drowsy/tape.hpp"
#include "drowsy/tensor.hpp"

namespace drowsy {

// ---------------------------------------------------------------------------
// Training configuration and bookkeeping
// ---------------------------------------------------------------------------

/// Optimizer settings shared by region pretraining and fusion training.
/// Adam runs with a polynomial learning-rate decay over the full step budget
/// and an L2 penalty on weight matrices/kernels (biases and channel-gate
/// bottlenecks are not decayed).
struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 8;
  double lr0 = 1e-4;
  double decay_power = 0.9;
  double l2 = 1e-4;
  std::uint64_t seed = 1;

  void validate() const {
    if (batch_size == 0) throw ValidationError("batch size must be positive");
    if (lr0 < 0.0) throw ValidationError("learning rate must be >= 0");
    if (decay_power < 0.0) throw ValidationError("decay power must be >= 0");
    if (l2 < 0.0) throw ValidationError("weight decay must be >= 0");
  }
};

/// Per-epoch training metrics. Loss is the optimized objective (mean
/// cross-entropy plus the L2 penalty of the trained weights); accuracy and
/// per-class recall come from the running predictions of the epoch.
struct EpochStats {
  std::size_t epoch = 0;
  double loss = 0.0;
  double accuracy = 0.0;
  std::vector<double> recall;
};

/// One training example for a single region sub-network.
struct LabeledClip {
  Tensor rgb;   // [1,T,S,S]
  Tensor flow;  // [2,T-1,S,S]
  std::size_t label = 0;
};
using ClipLoader = std::function<LabeledClip(std::size_t)>;

/// One training example for the fused model: aligned patch clips for every
/// participating sub-network plus the drowsiness label.
struct FusedClip {
  std::vector<Tensor> rgb;
  std::vector<Tensor> flow;
  std::size_t label = 0;
};
using FusedLoader = std::function<FusedClip(std::size_t)>;

/// Name and architecture of one sub-network taking part in fusion.
struct SubNetPlan {
  std::string prefix;
  SubNetConfig cfg;
};

struct TrainResult {
  ModelParams params;
  std::vector<EpochStats> epochs;
};

namespace train_detail {

inline std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t key) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  Rng rng(key);
  for (std::size_t i = n; i > 1; --i)
    std::swap(idx[i - 1], idx[static_cast<std::size_t>(rng.below(i))]);
  return idx;
}

inline std::size_t argmax(const Tensor& t) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < t.numel(); ++i)
    if (t[i] > t[best]) best = i;
  return best;
}

/// Weight matrices and conv kernels are decayed; biases and the
/// squeeze-excite bottlenecks are not.
inline bool decayed(const std::string& name) {
  static const std::string tail = ".weight";
  return name.size() >= tail.size() &&
         name.compare(name.size() - tail.size(), tail.size(), tail) == 0;
}

/// L2 penalty over the decayed subset of the given names.
inline double penalty_of(const ModelParams& params, const std::vector<std::string>& names,
                         double lambda) {
  double s = 0.0;
  for (const std::string& name : names)
    if (decayed(name)) s += sum_squares(params.require(name));
  return lambda * s;
}

struct ClassTally {
  std::vector<std::size_t> support;
  std::vector<std::size_t> hits;

  explicit ClassTally(std::size_t classes) : support(classes, 0), hits(classes, 0) {}

  void record(std::size_t truth, std::size_t pred) {
    ++support[truth];
    if (truth == pred) ++hits[truth];
  }

  double accuracy() const {
    std::size_t total = 0, right = 0;
    for (std::size_t c = 0; c < support.size(); ++c) {
      total += support[c];
      right += hits[c];
    }
    return total == 0 ? 0.0 : static_cast<double>(right) / static_cast<double>(total);
  }

  std::vector<double> recalls() const {
    std::vector<double> r(support.size(), 0.0);
    for (std::size_t c = 0; c < support.size(); ++c)
      if (support[c] > 0) r[c] = static_cast<double>(hits[c]) / static_cast<double>(support[c]);
    return r;
  }
};

}  // namespace train_detail

// ---------------------------------------------------------------------------
// Region sub-network pretraining
// ---------------------------------------------------------------------------

/// Train one region sub-network against its own label family through a
/// small linear probe. The returned parameter store still contains the
/// probe ("<prefix>.probe.*"); strip_probes() removes it before fusion.
inline TrainResult pretrain_subnet(const ClipLoader& load, std::size_t count,
                                   const SubNetConfig& cfg, const std::string& prefix,
                                   std::size_t probe_classes, const TrainConfig& tc) {
  cfg.validate();
  tc.validate();
  if (count == 0) throw ValidationError("pretraining needs at least one clip");
  if (probe_classes < 2) throw ValidationError("probe needs at least two classes");

  TrainResult result;
  add_subnet_params(result.params, cfg, prefix, probe_classes);
  result.params.he_init(tc.seed);
  auto& tensors = result.params.tensors;

  std::vector<std::string> names;
  for (const auto& [name, t] : tensors) names.push_back(name);

  const std::size_t batches = (count + tc.batch_size - 1) / tc.batch_size;
  const long total_steps = static_cast<long>(std::max<std::size_t>(1, tc.epochs * batches));
  std::map<std::string, AdamState> states;
  for (const std::string& name : names)
    states.emplace(name, AdamState::for_param(tensors.at(name), tc.lr0, tc.decay_power,
                                              total_steps));

  for (std::size_t epoch = 0; epoch < tc.epochs; ++epoch) {
    const auto order = train_detail::shuffled_indices(count, hash_combine(tc.seed, epoch + 1));
    train_detail::ClassTally tally(probe_classes);
    double loss_sum = 0.0;

    for (std::size_t b = 0; b < batches; ++b) {
      const std::size_t begin = b * tc.batch_size;
      const std::size_t m = std::min(tc.batch_size, count - begin);
      std::map<std::string, Tensor> grads;
      for (const std::string& name : names) grads.emplace(name, Tensor(tensors.at(name).shape()));

      double data_loss = 0.0;
      for (std::size_t i = 0; i < m; ++i) {
        const LabeledClip clip = load(order[begin + i]);
        if (clip.label >= probe_classes)
          throw ValidationError("clip label " + std::to_string(clip.label) +
                                " out of range for " + std::to_string(probe_classes) +
                                " classes");
        Tape tape;
        BoundParams bound = bind_params(tape, result.params, true);
        Value rgb = tape.leaf(clip.rgb, false);
        Value flow = tape.leaf(clip.flow, false);
        Value feature = subnet_forward_op(tape, rgb, flow, cfg, bound, prefix);
        Value probs = subnet_classify_op(tape, feature, bound, prefix);
        Value loss = cross_entropy_op(tape, probs, clip.label);
        tally.record(clip.label, train_detail::argmax(tape.val(probs)));
        data_loss += tape.val(loss)[0];
        tape.backward(loss);
        for (const std::string& name : names) {
          const Tensor& g = tape.grad(bound.at(name));
          Tensor& acc = grads.at(name);
          for (std::size_t k = 0; k < acc.numel(); ++k) acc[k] += g[k];
        }
      }

      const double inv = 1.0 / static_cast<double>(m);
      double penalty = 0.0;
      for (const std::string& name : names) {
        Tensor& g = grads.at(name);
        for (std::size_t k = 0; k < g.numel(); ++k) g[k] *= inv;
        if (train_detail::decayed(name)) {
          penalty += sum_squares(tensors.at(name));
          l2_grad_acc(tensors.at(name), tc.l2, g);
        }
      }
      loss_sum += data_loss * inv + tc.l2 * penalty;
      for (const std::string& name : names)
        adam_step(tensors.at(name), grads.at(name), states.at(name));
    }

    EpochStats es;
    es.epoch = epoch;
    es.loss = loss_sum / static_cast<double>(batches);
    es.accuracy = tally.accuracy();
    es.recall = tally.recalls();
    result.epochs.push_back(es);
  }
  return result;
}

/// Drop the pretraining probes, keeping only the tensors the fused model
/// actually consumes.
inline ModelParams strip_probes(const ModelParams& params) {
  ModelParams out;
  for (const auto& [name, t] : params.tensors)
    if (name.find(".probe.") == std::string::npos) out.tensors.emplace(name, t);
  return out;
}

// ---------------------------------------------------------------------------
// Fusion training
// ---------------------------------------------------------------------------

/// Train the fused classifier. With freeze=true the sub-network trunks are
/// kept bit-identical: every clip is pushed through them once up front and
/// only the fusion head sees gradient updates. With freeze=false the whole
/// stack trains end to end. params must already hold the sub-network tensors
/// for every plan plus the fusion head tensors.
inline std::vector<EpochStats> train_fusion(const FusedLoader& load, std::size_t count,
                                            const std::vector<SubNetPlan>& plans,
                                            const FusionConfig& fusion, ModelParams& params,
                                            const TrainConfig& tc, bool freeze) {
  fusion.validate();
  tc.validate();
  if (count == 0) throw ValidationError("fusion training needs at least one clip");
  if (plans.size() != fusion.parts)
    throw ValidationError("fusion head expects " + std::to_string(fusion.parts) +
                          " sub-networks, got " + std::to_string(plans.size()));
  for (const SubNetPlan& p : plans) p.cfg.validate();

  // The trainable set: just the head when frozen, everything otherwise.
  std::vector<std::string> names;
  for (const auto& [name, t] : params.tensors)
    if (!freeze || name.compare(0, 7, "fusion.") == 0) names.push_back(name);

  const std::size_t batches = (count + tc.batch_size - 1) / tc.batch_size;
  const long total_steps = static_cast<long>(std::max<std::size_t>(1, tc.epochs * batches));
  std::map<std::string, AdamState> states;
  for (const std::string& name : names)
    states.emplace(name, AdamState::for_param(params.require(name), tc.lr0, tc.decay_power,
                                              total_steps));

  // Frozen trunks: extract every feature once, then train on vectors.
  std::vector<std::vector<Tensor>> feats;
  std::vector<std::size_t> labels(count, 0);
  if (freeze) {
    feats.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
      const FusedClip clip = load(i);
      if (clip.rgb.size() != plans.size() || clip.flow.size() != plans.size())
        throw ValidationError("fused clip carries " + std::to_string(clip.rgb.size()) +
                              " patches for " + std::to_string(plans.size()) + " sub-networks");
      for (std::size_t j = 0; j < plans.size(); ++j)
        feats[i].push_back(
            subnet_forward(clip.rgb[j], clip.flow[j], plans[j].cfg, params, plans[j].prefix));
      labels[i] = clip.label;
    }
  }

  std::vector<EpochStats> history;
  for (std::size_t epoch = 0; epoch < tc.epochs; ++epoch) {
    const auto order = train_detail::shuffled_indices(count, hash_combine(tc.seed, epoch + 1));
    train_detail::ClassTally tally(fusion.classes);
    double loss_sum = 0.0;

    for (std::size_t b = 0; b < batches; ++b) {
      const std::size_t begin = b * tc.batch_size;
      const std::size_t m = std::min(tc.batch_size, count - begin);
      std::map<std::string, Tensor> grads;
      for (const std::string& name : names)
        grads.emplace(name, Tensor(params.require(name).shape()));

      double data_loss = 0.0;
      for (std::size_t i = 0; i < m; ++i) {
        const std::size_t at = order[begin + i];
        ForwardOpts opts;
        opts.training = true;
        opts.dropout_key = hash_combine(hash_combine(hash_combine(tc.seed, epoch), b), i);

        Tape tape;
        BoundParams bound;
        std::vector<Value> features;
        std::size_t label = 0;
        if (freeze) {
          // Feature vectors enter as data; only the head tensors are bound
          // with gradients on.
          for (const std::string& name : names)
            bound.values.emplace(name, tape.leaf(params.require(name), true));
          for (const Tensor& f : feats[at]) features.push_back(tape.leaf(f, false));
          label = labels[at];
        } else {
          bound = bind_params(tape, params, true);
          const FusedClip clip = load(at);
          if (clip.rgb.size() != plans.size() || clip.flow.size() != plans.size())
            throw ValidationError("fused clip carries " + std::to_string(clip.rgb.size()) +
                                  " patches for " + std::to_string(plans.size()) +
                                  " sub-networks");
          for (std::size_t j = 0; j < plans.size(); ++j) {
            Value rgb = tape.leaf(clip.rgb[j], false);
            Value flow = tape.leaf(clip.flow[j], false);
            features.push_back(
                subnet_forward_op(tape, rgb, flow, plans[j].cfg, bound, plans[j].prefix, opts));
          }
          label = clip.label;
        }
        if (label >= fusion.classes)
          throw ValidationError("clip label " + std::to_string(label) + " out of range for " +
                                std::to_string(fusion.classes) + " classes");
        Value probs = fusion_forward_op(tape, features, fusion, bound, opts);
        Value loss = cross_entropy_op(tape, probs, label);
        tally.record(label, train_detail::argmax(tape.val(probs)));
        data_loss += tape.val(loss)[0];
        tape.backward(loss);
        for (const std::string& name : names) {
          const Tensor& g = tape.grad(bound.at(name));
          Tensor& acc = grads.at(name);
          for (std::size_t k = 0; k < acc.numel(); ++k) acc[k] += g[k];
        }
      }

      const double inv = 1.0 / static_cast<double>(m);
      double penalty = 0.0;
      for (const std::string& name : names) {
        Tensor& g = grads.at(name);
        for (std::size_t k = 0; k < g.numel(); ++k) g[k] *= inv;
        if (train_detail::decayed(name)) {
          penalty += sum_squares(params.require(name));
          l2_grad_acc(params.require(name), tc.l2, g);
        }
      }
      loss_sum += data_loss * inv + tc.l2 * penalty;
      for (const std::string& name : names)
        adam_step(params.tensors.at(name), grads.at(name), states.at(name));
    }

    EpochStats es;
    es.epoch = epoch;
    es.loss = loss_sum / static_cast<double>(batches);
    es.accuracy = tally.accuracy();
    es.recall = tally.recalls();
    history.push_back(es);
  }
  return history;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

/// Held-out metrics of the fused classifier plus the raw per-clip outputs
/// (argmax class and positive-class probability) for reproducibility checks.
struct EvalResult {
  std::size_t count = 0;
  double accuracy = 0.0;
  std::vector<std::size_t> confusion;  // truth-major [classes x classes]
  std::vector<double> recall;
  std::vector<std::size_t> predictions;
  std::vector<double> positive_prob;
};

inline EvalResult evaluate_fused(const FusedLoader& load, std::size_t count,
                                 const std::vector<SubNetPlan>& plans,
                                 const FusionConfig& fusion, const ModelParams& params) {
  fusion.validate();
  if (plans.size() != fusion.parts)
    throw ValidationError("fusion head expects " + std::to_string(fusion.parts) +
                          " sub-networks, got " + std::to_string(plans.size()));
  EvalResult out;
  out.count = count;
  out.confusion.assign(fusion.classes * fusion.classes, 0);
  train_detail::ClassTally tally(fusion.classes);
  for (std::size_t i = 0; i < count; ++i) {
    const FusedClip clip = load(i);
    if (clip.rgb.size() != plans.size() || clip.flow.size() != plans.size())
      throw ValidationError("fused clip carries " + std::to_string(clip.rgb.size()) +
                            " patches for " + std::to_string(plans.size()) + " sub-networks");
    if (clip.label >= fusion.classes)
      throw ValidationError("clip label " + std::to_string(clip.label) + " out of range for " +
                            std::to_string(fusion.classes) + " classes");
    std::vector<Tensor> features;
    for (std::size_t j = 0; j < plans.size(); ++j)
      features.push_back(
          subnet_forward(clip.rgb[j], clip.flow[j], plans[j].cfg, params, plans[j].prefix));
    const Tensor probs = fusion_forward(features, fusion, params);
    const std::size_t pred = train_detail::argmax(probs);
    tally.record(clip.label, pred);
    out.confusion[clip.label * fusion.classes + pred] += 1;
    out.predictions.push_back(pred);
    out.positive_prob.push_back(probs[1]);
  }
  out.accuracy = tally.accuracy();
  out.recall = tally.recalls();
  return out;
}

// ---------------------------------------------------------------------------
// Metrics serialization
// ---------------------------------------------------------------------------

/// Write per-epoch metrics as CSV. The column set is fixed by the class
/// count so reruns with the same settings produce byte-identical files; an
/// empty history still writes the header line.
inline void write_metrics_csv(std::ostream& os, const std::vector<EpochStats>& stats,
                              std::size_t classes) {
  std::ostringstream line;
  line.precision(17);
  line << "epoch,loss,accuracy";
  for (std::size_t c = 0; c < classes; ++c) line << ",recall" << c;
  line << '\n';
  for (const EpochStats& s : stats) {
    line << s.epoch << ',' << s.loss << ',' << s.accuracy;
    for (std::size_t c = 0; c < classes; ++c)
      line << ',' << (c < s.recall.size() ? s.recall[c] : 0.0);
    line << '\n';
  }
  os << line.str();
  if (!os) throw IoError("failed writing metrics CSV");
}

}  // namespace drowsy
