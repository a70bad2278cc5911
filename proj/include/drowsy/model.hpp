#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "drowsy/common.hpp"
#include "drowsy/conv.hpp"
#include "drowsy/ops.hpp"
#include "drowsy/pool.hpp"
#include "drowsy/rng.hpp"
#include "drowsy/tape.hpp"
#include "drowsy/tensor.hpp"

namespace drowsy {

// ---------------------------------------------------------------------------
// Label taxonomy
// ---------------------------------------------------------------------------

/// Names for the integer labels stored in labels.csv. Drowsiness is the
/// binary target of the fused classifier; the eye, mouth and head families
/// label the behaviour visible in each facial region and drive sub-network
/// pretraining.
struct LabelTaxonomy {
  static constexpr std::size_t kDrowsinessClasses = 2;
  static constexpr std::size_t kEyeClasses = 2;
  static constexpr std::size_t kMouthClasses = 3;
  static constexpr std::size_t kHeadClasses = 3;

  static const char* drowsiness_name(std::size_t v) {
    static const char* names[kDrowsinessClasses] = {"stillness", "drowsy"};
    return pick(names, kDrowsinessClasses, v, "drowsiness");
  }
  static const char* eye_name(std::size_t v) {
    static const char* names[kEyeClasses] = {"stillness", "sleepy-eyes"};
    return pick(names, kEyeClasses, v, "eye");
  }
  static const char* mouth_name(std::size_t v) {
    static const char* names[kMouthClasses] = {"stillness", "yawning", "talking-laughing"};
    return pick(names, kMouthClasses, v, "mouth");
  }
  static const char* head_name(std::size_t v) {
    static const char* names[kHeadClasses] = {"stillness", "nodding", "looking-aside"};
    return pick(names, kHeadClasses, v, "head");
  }

 private:
  static const char* pick(const char* const* names, std::size_t n, std::size_t v,
                          const char* family) {
    if (v >= n)
      throw ValidationError(std::string(family) + " label " + std::to_string(v) +
                            " out of range [0," + std::to_string(n - 1) + "]");
    return names[v];
  }
};

// ---------------------------------------------------------------------------
// Sub-network configuration
// ---------------------------------------------------------------------------

/// One 3D conv layer of a sub-network stack.
struct ConvLayerSpec {
  std::size_t out_channels = 0;
  std::size_t kernel_t = 3, kernel_h = 3, kernel_w = 3;
  std::size_t stride_t = 1, stride_h = 1, stride_w = 1;
  std::size_t pad_t = 1, pad_h = 1, pad_w = 1;
};

/// Non-overlapping max-pool window applied after a conv layer. All-ones
/// means no pooling at that position.
struct PoolSpec {
  std::size_t t = 1, h = 1, w = 1;
};

/// Architecture of one region sub-network: an image stream and a motion
/// stream share this layer plan but own separate weights (the motion stream
/// has a two-channel first layer for the u/v flow planes). Stream outputs
/// are channel-concatenated, merged by a pointwise 3D conv and globally
/// average-pooled to a feature vector of length feature_dim.
struct SubNetConfig {
  std::size_t input_size = 112;  // square patch edge, 112 or 224
  std::vector<ConvLayerSpec> convs;
  std::vector<PoolSpec> pools;  // one per conv layer
  bool use_se = false;          // squeeze-and-excitation gate after each conv
  std::size_t se_reduction = 4;
  std::size_t feature_dim = 128;

  void validate() const {
    if (input_size != 112 && input_size != 224)
      throw ValidationError("sub-network input size must be 112 or 224, got " +
                            std::to_string(input_size));
    if (convs.empty()) throw ValidationError("sub-network needs at least one conv layer");
    if (pools.size() != convs.size())
      throw ValidationError("sub-network needs one pool spec per conv layer, got " +
                            std::to_string(pools.size()) + " pools for " +
                            std::to_string(convs.size()) + " convs");
    if (feature_dim == 0) throw ValidationError("feature_dim must be positive");
    for (std::size_t k = 0; k < convs.size(); ++k) {
      const ConvLayerSpec& c = convs[k];
      if (c.out_channels == 0)
        throw ValidationError("conv layer " + std::to_string(k) + " has zero channels");
      if (c.kernel_t == 0 || c.kernel_h == 0 || c.kernel_w == 0)
        throw ValidationError("conv layer " + std::to_string(k) + " has a zero kernel extent");
      if (c.stride_t == 0 || c.stride_h == 0 || c.stride_w == 0)
        throw ValidationError("conv layer " + std::to_string(k) + " has a zero stride");
      const PoolSpec& p = pools[k];
      if (p.t == 0 || p.h == 0 || p.w == 0)
        throw ValidationError("pool " + std::to_string(k) + " has a zero window extent");
    }
    if (use_se) {
      if (se_reduction == 0) throw ValidationError("se_reduction must be positive");
      for (std::size_t k = 0; k < convs.size(); ++k) {
        if (convs[k].out_channels % se_reduction != 0)
          throw ValidationError("se_reduction " + std::to_string(se_reduction) +
                                " must divide conv layer " + std::to_string(k) + " channels " +
                                std::to_string(convs[k].out_channels));
      }
      // Channel gating needs spatially rich early features, so downsampling
      // must wait: the first two conv layers keep stride 1.
      const std::size_t guard = convs.size() < 2 ? convs.size() : 2;
      for (std::size_t k = 0; k < guard; ++k) {
        const ConvLayerSpec& c = convs[k];
        if (c.stride_t != 1 || c.stride_h != 1 || c.stride_w != 1)
          throw ValidationError("channel gating requires stride 1 in conv layers 1-2, got a "
                                "strided layer at position " +
                                std::to_string(k));
      }
    }
  }
};

namespace model_detail {

inline SubNetConfig stock_config(std::size_t input_size, bool use_se) {
  SubNetConfig cfg;
  cfg.input_size = input_size;
  cfg.use_se = use_se;
  for (std::size_t ch : {8u, 16u, 32u, 64u}) {
    ConvLayerSpec c;
    c.out_channels = ch;
    cfg.convs.push_back(c);
  }
  // All downsampling happens in the pools; the temporal axis stops halving
  // once it reaches single digits so ten-frame clips survive four stages.
  cfg.pools = {{2, 2, 2}, {2, 2, 2}, {2, 2, 2}, {1, 2, 2}};
  cfg.validate();
  return cfg;
}

}  // namespace model_detail

/// Eye-region sub-network: 112 px patches with channel gating enabled.
inline SubNetConfig default_eye_config() { return model_detail::stock_config(112, true); }

/// Mouth-region sub-network: 112 px patches.
inline SubNetConfig default_mouth_config() { return model_detail::stock_config(112, false); }

/// Head sub-network: full face at 224 px.
inline SubNetConfig default_head_config() { return model_detail::stock_config(224, false); }

// ---------------------------------------------------------------------------
// Parameter store
// ---------------------------------------------------------------------------

/// Flat store of every learnable tensor, keyed by a hierarchical dotted name
/// such as "eye.image.conv0.weight" or "fusion.fc1.bias". The map keeps the
/// names unique and sorted, which fixes both the checkpoint layout and the
/// initialization order.
struct ModelParams {
  std::map<std::string, Tensor> tensors;

  bool has(const std::string& name) const { return tensors.count(name) != 0; }

  const Tensor& require(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end())
      throw ValidationError("model parameter '" + name + "' is missing");
    return it->second;
  }

  void add(const std::string& name, Tensor t) {
    if (!tensors.emplace(name, std::move(t)).second)
      throw ValidationError("duplicate model parameter '" + name + "'");
  }

  /// Absorb every tensor of another store; duplicate names are an error.
  void merge(const ModelParams& other) {
    for (const auto& [name, t] : other.tensors) add(name, t);
  }

  /// Copy of the entries whose names start with the given prefix.
  ModelParams subset(const std::string& prefix) const {
    ModelParams out;
    for (const auto& [name, t] : tensors)
      if (name.compare(0, prefix.size(), prefix) == 0) out.tensors.emplace(name, t);
    return out;
  }

  /// Fill weights with He-normal draws (std = sqrt(2 / fan_in)) and biases
  /// with zeros. Tensors are visited in name order, so the same seed and the
  /// same shape plan reproduce the same initialization. Linear classifier
  /// heads (region probes and the final fusion layer) start at zero so an
  /// untrained model emits uniform class probabilities; their incoming
  /// gradients are nonzero from the first step, so they train normally.
  void he_init(std::uint64_t seed) {
    Rng rng(seed);
    for (auto& [name, t] : tensors) {
      if (ends_with(name, ".bias") || ends_with(name, ".probe.weight") ||
          name == "fusion.fc2.weight") {
        t.fill(0.0);
        continue;
      }
      std::size_t fan_in = 0;
      if (t.rank() == 2) {
        fan_in = t.extent(1);
      } else if (t.rank() == 5) {
        fan_in = t.extent(1) * t.extent(2) * t.extent(3) * t.extent(4);
      } else {
        throw ValidationError("parameter '" + name + "' has unexpected rank " +
                              std::to_string(t.rank()));
      }
      const double std_dev = std::sqrt(2.0 / static_cast<double>(fan_in));
      for (std::size_t i = 0; i < t.numel(); ++i) t[i] = std_dev * rng.normal();
    }
  }

 private:
  static bool ends_with(const std::string& s, const std::string& tail) {
    return s.size() >= tail.size() && s.compare(s.size() - tail.size(), tail.size(), tail) == 0;
  }
};

/// Create zero tensors for one sub-network under the given name prefix.
/// probe_classes > 0 additionally creates the small linear classifier used
/// during region pretraining ("<prefix>.probe.*"); the fused model drops it.
inline void add_subnet_params(ModelParams& params, const SubNetConfig& cfg,
                              const std::string& prefix, std::size_t probe_classes = 0) {
  cfg.validate();
  for (const char* stream : {"image", "flow"}) {
    std::size_t in_channels = std::string(stream) == "image" ? 1 : 2;
    for (std::size_t k = 0; k < cfg.convs.size(); ++k) {
      const ConvLayerSpec& c = cfg.convs[k];
      const std::string base = prefix + "." + stream + ".conv" + std::to_string(k);
      params.add(base + ".weight",
                 Tensor({c.out_channels, in_channels, c.kernel_t, c.kernel_h, c.kernel_w}));
      params.add(base + ".bias", Tensor({c.out_channels}));
      if (cfg.use_se) {
        const std::string se = prefix + "." + stream + ".se" + std::to_string(k);
        const std::size_t mid = c.out_channels / cfg.se_reduction;
        params.add(se + ".w1", Tensor({mid, c.out_channels}));
        params.add(se + ".w2", Tensor({c.out_channels, mid}));
      }
      in_channels = c.out_channels;
    }
  }
  const std::size_t merged = 2 * cfg.convs.back().out_channels;
  params.add(prefix + ".merge.weight",
             Tensor({cfg.feature_dim, merged, std::size_t{1}, std::size_t{1}, std::size_t{1}}));
  params.add(prefix + ".merge.bias", Tensor({cfg.feature_dim}));
  if (probe_classes > 0) {
    params.add(prefix + ".probe.weight", Tensor({probe_classes, cfg.feature_dim}));
    params.add(prefix + ".probe.bias", Tensor({probe_classes}));
  }
}

// ---------------------------------------------------------------------------
// Fusion head configuration
// ---------------------------------------------------------------------------

/// Dense head that turns concatenated sub-network features into drowsiness
/// probabilities. parts is the number of concatenated feature vectors (3 for
/// the full model, 1 when only the head sub-network feeds the classifier).
struct FusionConfig {
  std::size_t feature_dim = 128;
  std::size_t parts = 3;
  std::size_t hidden = 128;
  std::size_t classes = 2;
  double dropout = 0.5;

  std::size_t input_dim() const { return feature_dim * parts; }

  void validate() const {
    if (feature_dim == 0 || parts == 0 || hidden == 0 || classes < 2)
      throw ValidationError("fusion head needs positive dims and at least two classes");
    if (dropout < 0.0 || dropout >= 1.0)
      throw ValidationError("fusion dropout must be in [0,1), got " + std::to_string(dropout));
  }
};

/// Create zero tensors for the fusion head ("fusion.fc1.*", "fusion.fc2.*").
inline void add_fusion_params(ModelParams& params, const FusionConfig& cfg) {
  cfg.validate();
  params.add("fusion.fc1.weight", Tensor({cfg.hidden, cfg.input_dim()}));
  params.add("fusion.fc1.bias", Tensor({cfg.hidden}));
  params.add("fusion.fc2.weight", Tensor({cfg.classes, cfg.hidden}));
  params.add("fusion.fc2.bias", Tensor({cfg.classes}));
}

// ---------------------------------------------------------------------------
// Tape binding
// ---------------------------------------------------------------------------

/// Parameter tensors registered as tape leaves for one forward/backward
/// pass. Lookup by name mirrors ModelParams::require.
struct BoundParams {
  std::map<std::string, Value> values;

  const Value& at(const std::string& name) const {
    auto it = values.find(name);
    if (it == values.end())
      throw ValidationError("model parameter '" + name + "' is missing");
    return it->second;
  }
};

/// Register every tensor of the store as a leaf on the tape. Training passes
/// bind with needs_grad=true and read gradients back per name after
/// backward(); inference passes bind with needs_grad=false.
inline BoundParams bind_params(Tape& tape, const ModelParams& params, bool needs_grad) {
  BoundParams bound;
  for (const auto& [name, t] : params.tensors)
    bound.values.emplace(name, tape.leaf(t, needs_grad));
  return bound;
}

// ---------------------------------------------------------------------------
// Forward passes
// ---------------------------------------------------------------------------

/// Knobs for a forward pass. force_se_identity bypasses the channel gates
/// (as if every gate were exactly 1) so tests can compare a gated network
/// against its ungated twin; dropout_key seeds the fusion dropout masks.
struct ForwardOpts {
  bool training = false;
  std::uint64_t dropout_key = 0;
  bool force_se_identity = false;
};

namespace model_detail {

inline Value stream_stack(Tape& tape, Value x, const SubNetConfig& cfg, const BoundParams& params,
                          const std::string& prefix, const std::string& stream,
                          bool se_identity) {
  for (std::size_t k = 0; k < cfg.convs.size(); ++k) {
    const ConvLayerSpec& c = cfg.convs[k];
    const std::string base = prefix + "." + stream + ".conv" + std::to_string(k);
    x = conv3d_op(tape, x, params.at(base + ".weight"), params.at(base + ".bias"),
                  static_cast<long>(c.stride_t), static_cast<long>(c.stride_h),
                  static_cast<long>(c.stride_w), static_cast<long>(c.pad_t),
                  static_cast<long>(c.pad_h), static_cast<long>(c.pad_w));
    x = relu_op(tape, x);
    if (cfg.use_se && !se_identity) {
      const std::string se = prefix + "." + stream + ".se" + std::to_string(k);
      x = se_block_op(tape, x, params.at(se + ".w1"), params.at(se + ".w2"));
    }
    const PoolSpec& p = cfg.pools[k];
    if (p.t != 1 || p.h != 1 || p.w != 1) {
      x = maxpool3d_op(tape, x, static_cast<long>(p.t), static_cast<long>(p.h),
                       static_cast<long>(p.w), static_cast<long>(p.t), static_cast<long>(p.h),
                       static_cast<long>(p.w));
    }
  }
  return x;
}

inline void check_stream_input(const Tensor& t, const char* stream, std::size_t channels,
                               std::size_t frames, std::size_t size) {
  const std::string want = "[" + std::to_string(channels) + "," + std::to_string(frames) + "," +
                           std::to_string(size) + "," + std::to_string(size) + "]";
  if (t.rank() != 4 || t.extent(0) != channels || t.extent(1) != frames ||
      t.extent(2) != size || t.extent(3) != size)
    throw ShapeError(std::string(stream) + " stream expects " + want + ", got " + t.shape_str());
}

}  // namespace model_detail

/// Taped sub-network forward: image clip [1,T,S,S] and flow clip [2,T-1,S,S]
/// through their stream stacks, channel concatenation, a pointwise merge
/// conv and global average pooling down to a feature vector [feature_dim].
inline Value subnet_forward_op(Tape& tape, Value rgb, Value flow, const SubNetConfig& cfg,
                               const BoundParams& params, const std::string& prefix,
                               const ForwardOpts& opts = {}) {
  cfg.validate();
  const Tensor& rt = tape.val(rgb);
  if (rt.rank() != 4 || rt.extent(1) < 2)
    throw ShapeError("image stream expects [1,T," + std::to_string(cfg.input_size) + "," +
                     std::to_string(cfg.input_size) + "] with T >= 2, got " + rt.shape_str());
  const std::size_t frames = rt.extent(1);
  model_detail::check_stream_input(rt, "image", 1, frames, cfg.input_size);
  model_detail::check_stream_input(tape.val(flow), "flow", 2, frames - 1, cfg.input_size);

  Value a = model_detail::stream_stack(tape, rgb, cfg, params, prefix, "image",
                                       opts.force_se_identity);
  Value b = model_detail::stream_stack(tape, flow, cfg, params, prefix, "flow",
                                       opts.force_se_identity);
  const Tensor& at = tape.val(a);
  const Tensor& bt = tape.val(b);
  if (at.extent(1) != bt.extent(1) || at.extent(2) != bt.extent(2) ||
      at.extent(3) != bt.extent(3))
    throw ShapeError("image and flow streams disagree after pooling: image " + at.shape_str() +
                     " vs flow " + bt.shape_str() +
                     "; pick pools that bring both temporal extents together");
  Value merged = concat_channels_op(tape, {a, b});
  Value mixed = conv3d_op(tape, merged, params.at(prefix + ".merge.weight"),
                          params.at(prefix + ".merge.bias"), 1, 1, 1, 0, 0, 0);
  return global_avg_pool_op(tape, mixed);
}

/// Convenience inference wrapper returning the feature vector as a tensor.
inline Tensor subnet_forward(const Tensor& rgb, const Tensor& flow, const SubNetConfig& cfg,
                             const ModelParams& params, const std::string& prefix,
                             const ForwardOpts& opts = {}) {
  Tape tape;
  BoundParams bound = bind_params(tape, params, false);
  Value r = tape.leaf(rgb, false);
  Value f = tape.leaf(flow, false);
  Value out = subnet_forward_op(tape, r, f, cfg, bound, prefix, opts);
  return tape.val(out);
}

/// Linear probe over a feature vector: softmax(W f + b).
inline Value subnet_classify_op(Tape& tape, Value feature, Value weight, Value bias) {
  return softmax_op(tape, dense_op(tape, feature, weight, bias));
}

/// Probe lookup by sub-network prefix ("<prefix>.probe.*").
inline Value subnet_classify_op(Tape& tape, Value feature, const BoundParams& params,
                                const std::string& prefix) {
  return subnet_classify_op(tape, feature, params.at(prefix + ".probe.weight"),
                            params.at(prefix + ".probe.bias"));
}

/// Tape-free probe: class probabilities for one feature vector.
inline Tensor subnet_classify(const Tensor& feature, const Tensor& weight, const Tensor& bias) {
  return softmax(dense(feature, weight, bias));
}

/// Taped fusion head: concatenated sub-features -> dense -> relu -> dropout
/// -> dense -> softmax over drowsiness classes.
inline Value fusion_forward_op(Tape& tape, const std::vector<Value>& features,
                               const FusionConfig& cfg, const BoundParams& params,
                               const ForwardOpts& opts = {}) {
  cfg.validate();
  if (features.size() != cfg.parts)
    throw ShapeError("fusion head expects " + std::to_string(cfg.parts) +
                     " feature vectors, got " + std::to_string(features.size()));
  for (std::size_t i = 0; i < features.size(); ++i) {
    const Tensor& f = tape.val(features[i]);
    if (f.rank() != 1 || f.extent(0) != cfg.feature_dim)
      throw ShapeError("fusion input " + std::to_string(i) + " must be [" +
                       std::to_string(cfg.feature_dim) + "], got " + f.shape_str());
  }
  Value x = features.size() == 1 ? features[0] : concat_vec_op(tape, features);
  x = dense_op(tape, x, params.at("fusion.fc1.weight"), params.at("fusion.fc1.bias"));
  x = relu_op(tape, x);
  if (opts.training && cfg.dropout > 0.0)
    x = dropout_op(tape, x, cfg.dropout, opts.dropout_key);
  x = dense_op(tape, x, params.at("fusion.fc2.weight"), params.at("fusion.fc2.bias"));
  return softmax_op(tape, x);
}

/// Tape-free fusion head over precomputed feature vectors.
inline Tensor fusion_forward(const std::vector<Tensor>& features, const FusionConfig& cfg,
                             const ModelParams& params, const ForwardOpts& opts = {}) {
  Tape tape;
  BoundParams bound = bind_params(tape, params, false);
  std::vector<Value> vals;
  vals.reserve(features.size());
  for (const Tensor& f : features) vals.push_back(tape.leaf(f, false));
  Value out = fusion_forward_op(tape, vals, cfg, bound, opts);
  return tape.val(out);
}

}  // namespace drowsy
