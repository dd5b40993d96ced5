#pragma once
// Desk-scale model zoo.
//
// Three 2x super-resolution families share one scaffold (head conv, family
// body, conv->pixel-shuffle tail, bicubic global input skip, output clamp):
//   EDSR_LITE: plain residual blocks + global body skip
//   CARN_LITE: residual blocks chained through cascading 1x1 convolutions
//   RCAN_LITE: residual blocks with channel attention + global body skip
//
// The classifier is a SMALL_CNN: conv/pool stages down to 4x4, then a
// dropout-regularized two-layer head emitting one logit per ship class.
//
// All models expose forward / backward / params in the explicit style; a
// backward call must directly follow the forward it differentiates.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "casr/nn.hpp"
#include "casr/resample.hpp"

namespace casr {

// ---------------------------------------------------------------------------
// Channel concat/split helpers (CARN cascade wiring)
// ---------------------------------------------------------------------------
template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 4 || b.rank() != 4 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) ||
      a.dim(3) != b.dim(3))
    throw ShapeError("concat_channels: incompatible shapes");
  const int n = a.dim(0), ca = a.dim(1), cb = b.dim(1), hw = a.dim(2) * a.dim(3);
  Tensor<T> y({n, ca + cb, a.dim(2), a.dim(3)});
  for (int img = 0; img < n; ++img) {
    const std::size_t ybase = static_cast<std::size_t>(img) * (ca + cb) * hw;
    std::copy_n(a.data() + static_cast<std::size_t>(img) * ca * hw, static_cast<std::size_t>(ca) * hw,
                y.data() + ybase);
    std::copy_n(b.data() + static_cast<std::size_t>(img) * cb * hw, static_cast<std::size_t>(cb) * hw,
                y.data() + ybase + static_cast<std::size_t>(ca) * hw);
  }
  return y;
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> split_channels(const Tensor<T>& x, int ca) {
  if (x.rank() != 4 || ca <= 0 || ca >= x.dim(1)) throw ShapeError("split_channels: bad split");
  const int n = x.dim(0), cb = x.dim(1) - ca, hw = x.dim(2) * x.dim(3);
  Tensor<T> a({n, ca, x.dim(2), x.dim(3)}), b({n, cb, x.dim(2), x.dim(3)});
  for (int img = 0; img < n; ++img) {
    const std::size_t xbase = static_cast<std::size_t>(img) * x.dim(1) * hw;
    std::copy_n(x.data() + xbase, static_cast<std::size_t>(ca) * hw,
                a.data() + static_cast<std::size_t>(img) * ca * hw);
    std::copy_n(x.data() + xbase + static_cast<std::size_t>(ca) * hw, static_cast<std::size_t>(cb) * hw,
                b.data() + static_cast<std::size_t>(img) * cb * hw);
  }
  return {std::move(a), std::move(b)};
}

template <typename T>
void add_inplace(Tensor<T>& dst, const Tensor<T>& src) {
  if (!dst.same_shape(src)) throw ShapeError("add_inplace: shape mismatch");
  for (std::size_t i = 0; i < dst.v.size(); ++i) dst.v[i] += src.v[i];
}

// ---------------------------------------------------------------------------
// SR model configuration
// ---------------------------------------------------------------------------
enum class SrFamily { EdsrLite, CarnLite, RcanLite };

inline std::string to_string(SrFamily f) {
  switch (f) {
    case SrFamily::EdsrLite: return "edsr_lite";
    case SrFamily::CarnLite: return "carn_lite";
    case SrFamily::RcanLite: return "rcan_lite";
  }
  throw DomainError("to_string(SrFamily): unknown value");
}

inline SrFamily sr_family_from_string(const std::string& s) {
  if (s == "edsr_lite") return SrFamily::EdsrLite;
  if (s == "carn_lite") return SrFamily::CarnLite;
  if (s == "rcan_lite") return SrFamily::RcanLite;
  throw ValidationError("unknown SR family '" + s + "' (expected edsr_lite|carn_lite|rcan_lite)");
}

struct SrModelConfig {
  SrFamily family = SrFamily::CarnLite;
  int scale = 2;
  int channels = 32;
  int blocks = 4;
  int attention_reduction = 8;  // RCAN gate bottleneck divisor
  double peak = 1.0;
  bool identity_init = false;   // zero tail: start exactly at the bicubic baseline

  void validate() const {
    if (scale != 2) throw ConfigError("SrModelConfig: only scale 2 is supported");
    if (channels < 8) throw ConfigError("SrModelConfig: channels must be >= 8");
    if (blocks < 1) throw ConfigError("SrModelConfig: blocks must be >= 1");
    if (attention_reduction < 1 || attention_reduction > channels)
      throw ConfigError("SrModelConfig: attention_reduction must be in [1, channels]");
    if (!(peak > 0.0)) throw ConfigError("SrModelConfig: peak must be positive");
  }
};

// ---------------------------------------------------------------------------
// SR model
// ---------------------------------------------------------------------------
template <typename T>
class SrModel {
 public:
  SrModel(const SrModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    const int c = cfg_.channels;
    head_ = Conv2d<T>(1, c, 3);
    for (int i = 0; i < cfg_.blocks; ++i) {
      Block blk;
      blk.c1 = Conv2d<T>(c, c, 3);
      blk.c2 = Conv2d<T>(c, c, 3);
      if (cfg_.family == SrFamily::CarnLite) blk.cascade = Conv2d<T>(2 * c, c, 1);
      if (cfg_.family == SrFamily::RcanLite) {
        const int mid = std::max(1, c / cfg_.attention_reduction);
        blk.fc1 = Linear<T>(c, mid);
        blk.fc2 = Linear<T>(mid, c);
      }
      blocks_.push_back(std::move(blk));
    }
    if (cfg_.family != SrFamily::CarnLite) body_final_ = Conv2d<T>(c, c, 3);
    tail_ = Conv2d<T>(c, 4, 3);
    init(seed);
  }

  const SrModelConfig& config() const { return cfg_; }

  void init(std::uint64_t seed) {
    Rng rng(sub_seed(seed, "sr-model-init"));
    head_.init(rng);
    for (auto& blk : blocks_) {
      blk.c1.init(rng);
      blk.c2.init(rng);
      if (cfg_.family == SrFamily::CarnLite) blk.cascade.init(rng);
      if (cfg_.family == SrFamily::RcanLite) {
        blk.fc1.init(rng);
        blk.fc2.init(rng);
      }
    }
    if (cfg_.family != SrFamily::CarnLite) body_final_.init(rng);
    // A small but non-zero tail keeps every parameter inside the gradient
    // path from step one while starting near the bicubic baseline.
    if (cfg_.identity_init) {
      tail_.w.zero();
      tail_.b.zero();
    } else {
      tail_.init(rng, 0.01);
    }
  }

  std::vector<ParamRef<T>> params() {
    std::vector<ParamRef<T>> out;
    head_.collect("head", out);
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
      const std::string p = "block" + std::to_string(i);
      blocks_[i].c1.collect(p + ".c1", out);
      blocks_[i].c2.collect(p + ".c2", out);
      if (cfg_.family == SrFamily::CarnLite) blocks_[i].cascade.collect(p + ".cascade", out);
      if (cfg_.family == SrFamily::RcanLite) {
        blocks_[i].fc1.collect(p + ".fc1", out);
        blocks_[i].fc2.collect(p + ".fc2", out);
      }
    }
    if (cfg_.family != SrFamily::CarnLite) body_final_.collect("body_final", out);
    tail_.collect("tail", out);
    return out;
  }

  void zero_grad() {
    auto ps = params();
    zero_grads(ps);
  }

  // x: [N,1,h,w] -> [N,1,2h,2w], clamped to [0, peak].
  Tensor<T> forward(const Tensor<T>& x) {
    if (x.rank() != 4 || x.dim(1) != 1)
      throw ShapeError("SrModel: expected [N,1,H,W], got " + x.shape_str());
    if (x.dim(2) < 4 || x.dim(3) < 4) throw ShapeError("SrModel: input smaller than 4x4");
    check_finite(x, "SrModel::forward input");
    base_ = upsample_2x_tensor(x, cfg_.peak);

    Tensor<T> f0 = head_.forward(x);
    Tensor<T> body;
    switch (cfg_.family) {
      case SrFamily::EdsrLite:
      case SrFamily::RcanLite: {
        Tensor<T> t = f0;
        for (auto& blk : blocks_) t = block_forward(blk, t);
        body = body_final_.forward(t);
        add_inplace(body, f0);
        break;
      }
      case SrFamily::CarnLite: {
        // Cascade: each block's output is concatenated with the running
        // feature and linearly recompressed by a 1x1 conv. Keeping the
        // compression linear preserves a zero-centered feature distribution,
        // so no channel starts ReLU-dead.
        Tensor<T> c = f0;
        for (auto& blk : blocks_) {
          Tensor<T> b = block_forward(blk, c);
          Tensor<T> cat = concat_channels(c, b);
          c = blk.cascade.forward(cat);
        }
        body = std::move(c);
        break;
      }
    }

    pre_ = ps_.forward(tail_.forward(body));
    add_inplace(pre_, base_);
    Tensor<T> out(pre_.shape);
    const T peak = static_cast<T>(cfg_.peak);
    for (std::size_t i = 0; i < pre_.v.size(); ++i)
      out.v[i] = std::min(std::max(pre_.v[i], T(0)), peak);
    check_finite(out, "SrModel::forward output");
    return out;
  }

  // Accumulates parameter gradients for the forward pass that just ran.
  // The gradient w.r.t. the LR input is not needed by any training stage.
  void backward(const Tensor<T>& grad_out) {
    require_shape(grad_out, pre_.shape, "SrModel::backward");
    Tensor<T> g(grad_out.shape);
    const T peak = static_cast<T>(cfg_.peak);
    for (std::size_t i = 0; i < g.v.size(); ++i)
      g.v[i] = (pre_.v[i] > T(0) && pre_.v[i] < peak) ? grad_out.v[i] : T(0);

    Tensor<T> gbody = tail_.backward(ps_.backward(g));
    Tensor<T> gf0;
    switch (cfg_.family) {
      case SrFamily::EdsrLite:
      case SrFamily::RcanLite: {
        Tensor<T> gt = body_final_.backward(gbody);
        for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it)
          gt = block_backward(*it, gt);
        gf0 = std::move(gt);
        add_inplace(gf0, gbody);  // the +f0 global body skip
        break;
      }
      case SrFamily::CarnLite: {
        Tensor<T> gc = std::move(gbody);
        for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it) {
          auto& blk = *it;
          Tensor<T> gcat = blk.cascade.backward(gc);
          auto [gc_direct, gb] = split_channels(gcat, cfg_.channels);
          Tensor<T> gc_res = block_backward(blk, gb);
          gc = std::move(gc_direct);
          add_inplace(gc, gc_res);
        }
        gf0 = std::move(gc);
        break;
      }
    }
    head_.backward(gf0);
  }

 private:
  struct Block {
    Conv2d<T> c1, c2;
    ReLU<T> r1;
    // CARN
    Conv2d<T> cascade;
    // RCAN
    GlobalAvgPool<T> gap;
    Linear<T> fc1, fc2;
    Sigmoid<T> sig;
    ChannelScale<T> cs;
  };

  // Residual unit: t + F(t); RCAN additionally gates F(t) by channel
  // attention. The gate is a linear bottleneck (no inner ReLU): channel
  // means barely vary across samples at init, so a rectified bottleneck
  // would start with most gate units structurally dead.
  Tensor<T> block_forward(Block& blk, const Tensor<T>& t) {
    Tensor<T> u = blk.c2.forward(blk.r1.forward(blk.c1.forward(t)));
    if (cfg_.family == SrFamily::RcanLite) {
      Tensor<T> gate = blk.sig.forward(blk.fc2.forward(blk.fc1.forward(blk.gap.forward(u))));
      u = blk.cs.forward(u, gate);
    }
    Tensor<T> y = t;
    add_inplace(y, u);
    return y;
  }

  Tensor<T> block_backward(Block& blk, const Tensor<T>& gy) {
    Tensor<T> gu = gy;
    if (cfg_.family == SrFamily::RcanLite) {
      Tensor<T> ggate;
      Tensor<T> gx = blk.cs.backward(gy, ggate);
      Tensor<T> ggap = blk.fc1.backward(blk.fc2.backward(blk.sig.backward(ggate)));
      gu = std::move(gx);
      add_inplace(gu, blk.gap.backward(ggap));
    }
    Tensor<T> gt = blk.c1.backward(blk.r1.backward(blk.c2.backward(gu)));
    add_inplace(gt, gy);  // residual connection
    return gt;
  }

  SrModelConfig cfg_;
  Conv2d<T> head_, body_final_, tail_;
  std::vector<Block> blocks_;
  PixelShuffle2<T> ps_;
  Tensor<T> base_, pre_;
};

// ---------------------------------------------------------------------------
// Classifier
// ---------------------------------------------------------------------------
struct ClassifierConfig {
  int input_size = 64;    // square input side; power of two, >= 8
  int base_channels = 8;  // channels of the first stage; doubles per stage
  int max_channels = 32;
  int head_hidden = 4096;
  double dropout = 0.5;

  void validate() const {
    if (input_size < 8 || (input_size & (input_size - 1)) != 0)
      throw ConfigError("ClassifierConfig: input_size must be a power of two >= 8");
    if (input_size > 512) throw ConfigError("ClassifierConfig: input_size too large");
    if (base_channels < 1 || max_channels < base_channels)
      throw ConfigError("ClassifierConfig: bad channel range");
    if (head_hidden < 8) throw ConfigError("ClassifierConfig: head_hidden must be >= 8");
    if (dropout < 0.0 || dropout >= 1.0)
      throw ConfigError("ClassifierConfig: dropout must be in [0,1)");
  }

  // Conv/pool stages until the spatial side reaches 4.
  int num_stages() const {
    int s = input_size, n = 0;
    while (s > 4) {
      s /= 2;
      ++n;
    }
    return n;
  }

  int stage_channels(int i) const {
    long long c = base_channels;
    for (int j = 0; j < i; ++j) c = std::min<long long>(c * 2, max_channels);
    return static_cast<int>(c);
  }

  int flat_features() const { return stage_channels(num_stages() - 1) * 16; }
};

template <typename T>
class Classifier {
 public:
  // Fixed multiplier on the output of the (RMS-normalized) head. With unit-
  // scale hidden features the raw head output moves slowly under a small
  // fixed learning rate; the scale brings logits to the O(1) range where
  // softmax probabilities actually commit.
  static constexpr double kLogitScale = 64.0;

  Classifier(const ClassifierConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    int cin = 1;
    for (int i = 0; i < cfg_.num_stages(); ++i) {
      Stage st;
      st.conv = Conv2d<T>(cin, cfg_.stage_channels(i), 3);
      cin = cfg_.stage_channels(i);
      stages_.push_back(std::move(st));
    }
    fc1_ = Linear<T>(cfg_.flat_features(), cfg_.head_hidden);
    fc2_ = Linear<T>(cfg_.head_hidden, kNumClasses);
    drop_ = Dropout<T>(cfg_.dropout);
    init(seed);
  }

  const ClassifierConfig& config() const { return cfg_; }

  void init(std::uint64_t seed) {
    Rng rng(sub_seed(seed, "classifier-init"));
    for (auto& st : stages_) st.conv.init(rng);
    fc1_.init(rng);
    // Zero output head: logits start at exactly uniform scores, so with a
    // small fixed learning rate every step moves the decision boundary
    // instead of first unlearning random logit offsets.
    fc2_.w.zero();
    fc2_.b.zero();
  }

  std::vector<ParamRef<T>> params() {
    std::vector<ParamRef<T>> out;
    for (std::size_t i = 0; i < stages_.size(); ++i)
      stages_[i].conv.collect("stage" + std::to_string(i) + ".conv", out);
    fc1_.collect("fc1", out);
    fc2_.collect("fc2", out);
    return out;
  }

  void zero_grad() {
    auto ps = params();
    zero_grads(ps);
  }

  // x: [N,1,S,S] -> logits [N,6]. Training mode applies dropout and needs an
  // RNG; eval mode is deterministic and RNG-free.
  Tensor<T> forward(const Tensor<T>& x, bool train = false, Rng* rng = nullptr) {
    if (x.rank() != 4 || x.dim(1) != 1 || x.dim(2) != cfg_.input_size || x.dim(3) != cfg_.input_size)
      throw ShapeError("Classifier: expected [N,1," + std::to_string(cfg_.input_size) + "," +
                       std::to_string(cfg_.input_size) + "], got " + x.shape_str());
    check_finite(x, "Classifier::forward input");
    Tensor<T> t = x;
    for (auto& st : stages_) t = st.pool.forward(st.relu.forward(st.conv.forward(t)));
    flat_shape_ = t.shape;
    Tensor<T> flat;
    flat.shape = {t.dim(0), cfg_.flat_features()};
    flat.v = std::move(t.v);
    Tensor<T> logits = fc2_.forward(
        drop_.forward(hnorm_.forward(relu_h_.forward(fc1_.forward(norm_.forward(flat)))), train, rng));
    for (auto& l : logits.v) l *= static_cast<T>(kLogitScale);
    check_finite(logits, "Classifier::forward logits");
    return logits;
  }

  // Returns the gradient w.r.t. the input image batch (needed when the
  // classifier guides SR fine-tuning).
  Tensor<T> backward(const Tensor<T>& grad_logits) {
    Tensor<T> gl = grad_logits;
    for (auto& g : gl.v) g *= static_cast<T>(kLogitScale);
    Tensor<T> g = norm_.backward(
        fc1_.backward(relu_h_.backward(hnorm_.backward(drop_.backward(fc2_.backward(gl))))));
    Tensor<T> t;
    t.shape = flat_shape_;
    t.v = std::move(g.v);
    for (auto it = stages_.rbegin(); it != stages_.rend(); ++it)
      t = it->conv.backward(it->relu.backward(it->pool.backward(t)));
    return t;
  }

  std::vector<int> predict(const Tensor<T>& x) {
    const Tensor<T> logits = forward(x, false, nullptr);
    std::vector<int> out(static_cast<std::size_t>(logits.dim(0)));
    for (int i = 0; i < logits.dim(0); ++i) {
      const T* row = logits.data() + static_cast<std::size_t>(i) * kNumClasses;
      int best = 0;
      for (int j = 1; j < kNumClasses; ++j)
        if (row[j] > row[best]) best = j;
      out[static_cast<std::size_t>(i)] = best;
    }
    return out;
  }

 private:
  struct Stage {
    Conv2d<T> conv;
    ReLU<T> relu;
    MaxPool2<T> pool;
  };

  ClassifierConfig cfg_;
  std::vector<Stage> stages_;
  RmsNorm<T> norm_, hnorm_;
  Linear<T> fc1_, fc2_;
  ReLU<T> relu_h_;
  Dropout<T> drop_{0.5};
  std::vector<int> flat_shape_;
};

// ---------------------------------------------------------------------------
// Parameter snapshots
// ---------------------------------------------------------------------------
template <typename T>
using ParameterSnapshot = std::map<std::string, Tensor<T>>;

template <typename T>
ParameterSnapshot<T> take_snapshot(const std::vector<ParamRef<T>>& params) {
  ParameterSnapshot<T> snap;
  for (const auto& p : params) {
    if (snap.count(p.name)) throw CheckpointError("take_snapshot: duplicate parameter " + p.name);
    snap[p.name] = *p.value;
  }
  return snap;
}

template <typename T>
void load_snapshot(std::vector<ParamRef<T>>& params, const ParameterSnapshot<T>& snap) {
  if (snap.size() != params.size())
    throw CheckpointError("load_snapshot: parameter count mismatch (" +
                          std::to_string(snap.size()) + " vs " + std::to_string(params.size()) +
                          ")");
  for (auto& p : params) {
    const auto it = snap.find(p.name);
    if (it == snap.end()) throw CheckpointError("load_snapshot: missing parameter " + p.name);
    if (it->second.shape != p.value->shape)
      throw CheckpointError("load_snapshot: shape mismatch for " + p.name);
    *p.value = it->second;
  }
}

template <typename T>
std::int64_t param_count(const std::vector<ParamRef<T>>& params) {
  std::int64_t n = 0;
  for (const auto& p : params) n += p.value->numel();
  return n;
}

// Order-stable digest of names and raw little-endian value bytes.
template <typename T>
std::uint64_t snapshot_digest(const ParameterSnapshot<T>& snap) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto& [name, tensor] : snap) {
    h = fnv1a64(name.data(), name.size(), h);
    h = fnv1a64(tensor.v.data(), tensor.v.size() * sizeof(T), h);
  }
  return h;
}

template <typename T>
double fraction_nonzero_grads(const std::vector<ParamRef<T>>& params) {
  std::int64_t nz = 0, total = 0;
  for (const auto& p : params) {
    total += p.grad->numel();
    for (const auto& g : p.grad->v)
      if (g != T(0)) ++nz;
  }
  return total > 0 ? static_cast<double>(nz) / static_cast<double>(total) : 0.0;
}

}  // namespace casr
