#pragma once
// Training loss family for the super-resolution stages.
//
//   l1      : mean absolute error over all pixels of the batch
//   psnr    : (psnr_max - psnr) / psnr_max, averaged over the batch
//   ssim    : mean over the batch of (1 - SSIM)
//   combo   : alpha * psnr + beta * ssim
//   hybrid  : w1 * l1 + w2 * ssim + w3 * psnr
//   cls     : MSE between classifier logits of SR and HR inputs
//   merged  : sr_loss + cls_loss (the fine-tuning objective)
//
// Values and component breakdowns are computed in double; gradients are
// emitted in the image scalar type so they can feed a float backward pass.

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "casr/common.hpp"
#include "casr/image.hpp"
#include "casr/metrics.hpp"

namespace casr {

enum class LossKind { L1, Combo, Hybrid };

inline std::string to_string(LossKind k) {
  switch (k) {
    case LossKind::L1: return "l1";
    case LossKind::Combo: return "combo";
    case LossKind::Hybrid: return "hybrid";
  }
  throw DomainError("to_string(LossKind): unknown value");
}

inline LossKind loss_kind_from_string(const std::string& s) {
  if (s == "l1") return LossKind::L1;
  if (s == "combo") return LossKind::Combo;
  if (s == "hybrid") return LossKind::Hybrid;
  throw ValidationError("unknown loss kind '" + s + "' (expected l1|combo|hybrid)");
}

struct LossSpec {
  LossKind kind = LossKind::Combo;
  double alpha = 0.5;                              // combo: PSNR-loss weight
  double beta = 0.5;                               // combo: SSIM-loss weight
  std::array<double, 3> hybrid_weights{0.7, 0.2, 0.1};  // l1, ssim, psnr
  double epsilon = kDefaultPsnrEpsilon;
  SsimParams ssim_params{};

  void validate() const {
    if (!(epsilon > 0.0)) throw ConfigError("LossSpec: epsilon must be positive");
    if (alpha < 0.0 || beta < 0.0) throw ConfigError("LossSpec: combo weights must be >= 0");
    for (double w : hybrid_weights)
      if (w < 0.0) throw ConfigError("LossSpec: hybrid weights must be >= 0");
    const double sum = hybrid_weights[0] + hybrid_weights[1] + hybrid_weights[2];
    if (std::abs(sum - 1.0) > 1e-12)
      throw ConfigError("LossSpec: hybrid weights must sum to 1");
  }
};

struct LossValue {
  double total = 0.0;
  std::map<std::string, double> components;
};

namespace detail {

template <typename T>
void check_batches(std::span<const Image<T>> sr, std::span<const Image<T>> hr, const char* who) {
  if (sr.empty()) throw DomainError(std::string(who) + ": empty batch");
  if (sr.size() != hr.size()) throw ShapeError(std::string(who) + ": batch lengths differ");
  for (std::size_t i = 0; i < sr.size(); ++i) {
    require_same_shape(sr[i], hr[i], who);
    require_same_peak(sr[i], hr[i], who);
  }
}

template <typename T>
void reset_grads(std::vector<Image<T>>* grad, std::span<const Image<T>> like) {
  if (!grad) return;
  grad->clear();
  grad->reserve(like.size());
  for (const auto& img : like) grad->emplace_back(img.height, img.width, img.peak);
}

template <typename T>
void axpy_grad(std::vector<Image<T>>* dst, const std::vector<Image<T>>& src, double scale) {
  if (!dst) return;
  for (std::size_t i = 0; i < src.size(); ++i)
    for (std::size_t j = 0; j < src[i].v.size(); ++j)
      (*dst)[i].v[j] += static_cast<T>(scale * static_cast<double>(src[i].v[j]));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Pixel losses
// ---------------------------------------------------------------------------
template <typename T>
LossValue l1_loss(std::span<const Image<T>> sr, std::span<const Image<T>> hr,
                  std::vector<Image<T>>* grad = nullptr) {
  detail::check_batches(sr, hr, "l1_loss");
  detail::reset_grads(grad, sr);
  std::size_t total_px = 0;
  for (const auto& img : sr) total_px += img.v.size();
  double acc = 0.0;
  for (std::size_t i = 0; i < sr.size(); ++i)
    for (std::size_t j = 0; j < sr[i].v.size(); ++j)
      acc += std::abs(static_cast<double>(sr[i].v[j]) - static_cast<double>(hr[i].v[j]));
  const double value = acc / static_cast<double>(total_px);
  if (grad) {
    const double g = 1.0 / static_cast<double>(total_px);
    for (std::size_t i = 0; i < sr.size(); ++i)
      for (std::size_t j = 0; j < sr[i].v.size(); ++j) {
        const double d = static_cast<double>(sr[i].v[j]) - static_cast<double>(hr[i].v[j]);
        (*grad)[i].v[j] = static_cast<T>(d > 0.0 ? g : (d < 0.0 ? -g : 0.0));
      }
  }
  LossValue v;
  v.total = value;
  v.components["l1"] = value;
  return v;
}

// (psnr_max - psnr) / psnr_max averaged over pairs; always in [0, 1].
template <typename T>
LossValue psnr_loss(std::span<const Image<T>> sr, std::span<const Image<T>> hr,
                    double epsilon = kDefaultPsnrEpsilon,
                    std::vector<Image<T>>* grad = nullptr) {
  detail::check_batches(sr, hr, "psnr_loss");
  detail::reset_grads(grad, sr);
  const double n = static_cast<double>(sr.size());
  double acc = 0.0;
  Image<T> g;
  for (std::size_t i = 0; i < sr.size(); ++i) {
    const double ceiling = psnr_max(static_cast<double>(sr[i].peak), epsilon);
    double p;
    if (grad) {
      p = psnr_with_grad(sr[i], hr[i], g, epsilon);
      const double scale = -1.0 / (ceiling * n);
      for (std::size_t j = 0; j < g.v.size(); ++j)
        (*grad)[i].v[j] = static_cast<T>(scale * static_cast<double>(g.v[j]));
    } else {
      p = psnr(sr[i], hr[i], epsilon);
    }
    acc += (ceiling - p) / ceiling;
  }
  LossValue v;
  v.total = acc / n;
  v.components["psnr_loss"] = v.total;
  return v;
}

// Mean over the batch of (1 - SSIM); always in [0, 1].
template <typename T>
LossValue ssim_loss(std::span<const Image<T>> sr, std::span<const Image<T>> hr,
                    const SsimParams& params = {}, std::vector<Image<T>>* grad = nullptr) {
  detail::check_batches(sr, hr, "ssim_loss");
  detail::reset_grads(grad, sr);
  const double n = static_cast<double>(sr.size());
  double acc = 0.0;
  Image<T> g;
  for (std::size_t i = 0; i < sr.size(); ++i) {
    double s;
    if (grad) {
      s = ssim_with_grad(sr[i], hr[i], g, params);
      const double scale = -1.0 / n;
      for (std::size_t j = 0; j < g.v.size(); ++j)
        (*grad)[i].v[j] = static_cast<T>(scale * static_cast<double>(g.v[j]));
    } else {
      s = ssim(sr[i], hr[i], params);
    }
    acc += 1.0 - s;
  }
  LossValue v;
  v.total = acc / n;
  v.components["ssim_loss"] = v.total;
  return v;
}

// ---------------------------------------------------------------------------
// Composite losses
// ---------------------------------------------------------------------------
template <typename T>
LossValue combo_loss(std::span<const Image<T>> sr, std::span<const Image<T>> hr,
                     const LossSpec& spec, std::vector<Image<T>>* grad = nullptr) {
  if (spec.kind != LossKind::Combo) throw ConfigError("combo_loss: spec.kind must be Combo");
  spec.validate();
  detail::reset_grads(grad, sr);
  std::vector<Image<T>> gp, gs;
  const LossValue lp = psnr_loss(sr, hr, spec.epsilon, grad ? &gp : nullptr);
  const LossValue ls = ssim_loss(sr, hr, spec.ssim_params, grad ? &gs : nullptr);
  if (grad) {
    detail::axpy_grad(grad, gp, spec.alpha);
    detail::axpy_grad(grad, gs, spec.beta);
  }
  LossValue v;
  v.components["psnr_loss"] = lp.total;
  v.components["ssim_loss"] = ls.total;
  v.total = spec.alpha * lp.total + spec.beta * ls.total;
  return v;
}

template <typename T>
LossValue hybrid_loss(std::span<const Image<T>> sr, std::span<const Image<T>> hr,
                      const LossSpec& spec, std::vector<Image<T>>* grad = nullptr) {
  if (spec.kind != LossKind::Hybrid) throw ConfigError("hybrid_loss: spec.kind must be Hybrid");
  spec.validate();
  detail::reset_grads(grad, sr);
  std::vector<Image<T>> g1, gs, gp;
  const LossValue l1 = l1_loss(sr, hr, grad ? &g1 : nullptr);
  const LossValue ls = ssim_loss(sr, hr, spec.ssim_params, grad ? &gs : nullptr);
  const LossValue lp = psnr_loss(sr, hr, spec.epsilon, grad ? &gp : nullptr);
  if (grad) {
    detail::axpy_grad(grad, g1, spec.hybrid_weights[0]);
    detail::axpy_grad(grad, gs, spec.hybrid_weights[1]);
    detail::axpy_grad(grad, gp, spec.hybrid_weights[2]);
  }
  LossValue v;
  v.components["l1"] = l1.total;
  v.components["ssim_loss"] = ls.total;
  v.components["psnr_loss"] = lp.total;
  v.total = spec.hybrid_weights[0] * l1.total + spec.hybrid_weights[1] * ls.total +
            spec.hybrid_weights[2] * lp.total;
  return v;
}

// Dispatch on spec.kind; the criterion used by both SR training stages.
template <typename T>
LossValue evaluate_sr_loss(const LossSpec& spec, std::span<const Image<T>> sr,
                           std::span<const Image<T>> hr,
                           std::vector<Image<T>>* grad = nullptr) {
  switch (spec.kind) {
    case LossKind::L1: {
      spec.validate();
      return l1_loss(sr, hr, grad);
    }
    case LossKind::Combo: return combo_loss(sr, hr, spec, grad);
    case LossKind::Hybrid: return hybrid_loss(sr, hr, spec, grad);
  }
  throw DomainError("evaluate_sr_loss: unknown loss kind");
}

// ---------------------------------------------------------------------------
// Classification-consistency loss (fine-tuning guidance)
// ---------------------------------------------------------------------------
// MSE over logits: mean over N * C entries of (logits_sr - logits_hr)^2.
// The gradient is taken w.r.t. logits_sr; the HR branch is a constant.
template <typename T>
LossValue classification_loss(const Tensor<T>& logits_sr, const Tensor<T>& logits_hr,
                              Tensor<T>* grad = nullptr) {
  if (logits_sr.shape != logits_hr.shape)
    throw ShapeError("classification_loss: logit shapes differ");
  if (logits_sr.rank() != 2)
    throw ShapeError("classification_loss: expected [N,C] logits, got " + logits_sr.shape_str());
  if (logits_sr.dim(0) == 0) throw DomainError("classification_loss: empty batch");
  const double n = static_cast<double>(logits_sr.numel());
  if (grad) *grad = Tensor<T>(logits_sr.shape);
  double acc = 0.0;
  for (std::int64_t i = 0; i < logits_sr.numel(); ++i) {
    const double d = static_cast<double>(logits_sr.v[static_cast<std::size_t>(i)]) -
                     static_cast<double>(logits_hr.v[static_cast<std::size_t>(i)]);
    acc += d * d;
    if (grad) grad->v[static_cast<std::size_t>(i)] = static_cast<T>(2.0 * d / n);
  }
  LossValue v;
  v.total = acc / n;
  v.components["cls_loss"] = v.total;
  return v;
}

// Fine-tuning objective: the SR criterion plus the classification term.
inline LossValue merged_loss(const LossValue& sr_loss, const LossValue& cls_loss) {
  LossValue v;
  v.components["sr_loss"] = sr_loss.total;
  v.components["cls_loss"] = cls_loss.total;
  v.total = sr_loss.total + cls_loss.total;
  return v;
}

inline void ensure_finite(const LossValue& v, const char* who) {
  if (!std::isfinite(v.total)) throw NumericError(std::string(who) + ": non-finite loss total");
  for (const auto& [k, x] : v.components)
    if (!std::isfinite(x))
      throw NumericError(std::string(who) + ": non-finite loss component '" + k + "'");
}

}  // namespace casr
