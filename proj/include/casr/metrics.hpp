#pragma once
// Image-quality metrics (MSE / PSNR / SSIM, with analytic gradients) and
// classification metrics (confusion matrix, per-class and macro F1).
//
// All metric arithmetic runs in double regardless of the image scalar type;
// gradients are cast back to the image's scalar on output.

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <vector>

#include "casr/common.hpp"
#include "casr/image.hpp"

namespace casr {

inline constexpr double kDefaultPsnrEpsilon = 1e-8;

// Smallest image side SSIM accepts; the 11-tap window shrinks down to this.
inline constexpr int kMinSsimSide = 8;

// ---------------------------------------------------------------------------
// MSE / PSNR
// ---------------------------------------------------------------------------
template <typename T>
double mse(const Image<T>& a, const Image<T>& b) {
  require_same_shape(a, b, "mse");
  require_same_peak(a, b, "mse");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.v.size(); ++i) {
    const double d = static_cast<double>(a.v[i]) - static_cast<double>(b.v[i]);
    acc += d * d;
  }
  return acc / static_cast<double>(a.v.size());
}

// Finite ceiling: PSNR of a perfect reconstruction under the epsilon floor.
inline double psnr_max(double peak, double epsilon = kDefaultPsnrEpsilon) {
  if (!(peak > 0.0)) throw DomainError("psnr_max: peak must be positive");
  if (!(epsilon > 0.0)) throw DomainError("psnr_max: epsilon must be positive");
  return 10.0 * std::log10(peak * peak / epsilon);
}

template <typename T>
double psnr(const Image<T>& a, const Image<T>& b, double epsilon = kDefaultPsnrEpsilon) {
  if (!(epsilon > 0.0)) throw DomainError("psnr: epsilon must be positive");
  const double m = mse(a, b);
  const double peak = static_cast<double>(a.peak);
  return 10.0 * std::log10(peak * peak / std::max(m, epsilon));
}

// PSNR plus d(psnr)/d(a). When the epsilon floor is active the metric is
// locally flat, so the gradient is exactly zero there.
template <typename T>
double psnr_with_grad(const Image<T>& a, const Image<T>& b, Image<T>& grad_a,
                      double epsilon = kDefaultPsnrEpsilon) {
  if (!(epsilon > 0.0)) throw DomainError("psnr: epsilon must be positive");
  require_same_shape(a, b, "psnr");
  require_same_peak(a, b, "psnr");
  grad_a = Image<T>(a.height, a.width, a.peak);
  const double n = static_cast<double>(a.v.size());
  double m = 0.0;
  for (std::size_t i = 0; i < a.v.size(); ++i) {
    const double d = static_cast<double>(a.v[i]) - static_cast<double>(b.v[i]);
    m += d * d;
  }
  m /= n;
  const double peak = static_cast<double>(a.peak);
  if (m <= epsilon) return 10.0 * std::log10(peak * peak / epsilon);
  static constexpr double kTenOverLn10 = 4.342944819032518276511289189166;
  const double scale = -kTenOverLn10 / m * 2.0 / n;
  for (std::size_t i = 0; i < a.v.size(); ++i) {
    const double d = static_cast<double>(a.v[i]) - static_cast<double>(b.v[i]);
    grad_a.v[i] = static_cast<T>(scale * d);
  }
  return 10.0 * std::log10(peak * peak / m);
}

// ---------------------------------------------------------------------------
// SSIM
// ---------------------------------------------------------------------------
struct SsimParams {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
};

namespace detail {

inline std::vector<double> gaussian_taps(int w, double sigma) {
  std::vector<double> g(static_cast<std::size_t>(w));
  const double c = 0.5 * (w - 1);
  double sum = 0.0;
  for (int i = 0; i < w; ++i) {
    g[static_cast<std::size_t>(i)] = std::exp(-(i - c) * (i - c) / (2.0 * sigma * sigma));
    sum += g[static_cast<std::size_t>(i)];
  }
  for (auto& x : g) x /= sum;
  return g;
}

// Valid separable correlation: out[i][j] = sum_{u,v} g[u] g[v] in[i+u][j+v].
// in is H x W; out is (H-w+1) x (W-w+1).
inline void sep_corr_valid(const std::vector<double>& in, int h, int w,
                           const std::vector<double>& g, std::vector<double>& tmp,
                           std::vector<double>& out) {
  const int k = static_cast<int>(g.size());
  const int ow = w - k + 1, oh = h - k + 1;
  tmp.assign(static_cast<std::size_t>(h) * ow, 0.0);
  for (int i = 0; i < h; ++i) {
    const double* row = in.data() + static_cast<std::size_t>(i) * w;
    double* trow = tmp.data() + static_cast<std::size_t>(i) * ow;
    for (int j = 0; j < ow; ++j) {
      double acc = 0.0;
      for (int u = 0; u < k; ++u) acc += g[static_cast<std::size_t>(u)] * row[j + u];
      trow[j] = acc;
    }
  }
  out.assign(static_cast<std::size_t>(oh) * ow, 0.0);
  for (int i = 0; i < oh; ++i) {
    double* orow = out.data() + static_cast<std::size_t>(i) * ow;
    for (int u = 0; u < k; ++u) {
      const double gu = g[static_cast<std::size_t>(u)];
      const double* trow = tmp.data() + static_cast<std::size_t>(i + u) * ow;
      for (int j = 0; j < ow; ++j) orow[j] += gu * trow[j];
    }
  }
}

// Adjoint of sep_corr_valid: scatters a map-sized field back to image size.
inline void sep_corr_valid_adjoint(const std::vector<double>& map, int h, int w,
                                   const std::vector<double>& g, std::vector<double>& tmp,
                                   std::vector<double>& out) {
  const int k = static_cast<int>(g.size());
  const int ow = w - k + 1, oh = h - k + 1;
  tmp.assign(static_cast<std::size_t>(h) * ow, 0.0);
  for (int i = 0; i < oh; ++i) {
    const double* mrow = map.data() + static_cast<std::size_t>(i) * ow;
    for (int u = 0; u < k; ++u) {
      const double gu = g[static_cast<std::size_t>(u)];
      double* trow = tmp.data() + static_cast<std::size_t>(i + u) * ow;
      for (int j = 0; j < ow; ++j) trow[j] += gu * mrow[j];
    }
  }
  out.assign(static_cast<std::size_t>(h) * w, 0.0);
  for (int i = 0; i < h; ++i) {
    const double* trow = tmp.data() + static_cast<std::size_t>(i) * ow;
    double* orow = out.data() + static_cast<std::size_t>(i) * w;
    for (int j = 0; j < ow; ++j) {
      const double m = trow[j];
      for (int u = 0; u < k; ++u) orow[j + u] += g[static_cast<std::size_t>(u)] * m;
    }
  }
}

template <typename T>
std::vector<double> to_double(const std::vector<T>& v) {
  return std::vector<double>(v.begin(), v.end());
}

// Shared SSIM forward pass. Fills the local-statistics maps and returns the
// mean of the clamped local SSIM values.
struct SsimCtx {
  int h = 0, w = 0, win = 0;
  std::vector<double> g;
  std::vector<double> a, b;                       // image-sized copies
  std::vector<double> m1, m2, v1, v2, v12;        // map-sized statistics
  std::vector<double> s;                          // clamped local values
  double c1 = 0, c2 = 0;
};

template <typename T>
double ssim_forward(const Image<T>& ia, const Image<T>& ib, const SsimParams& p, SsimCtx& ctx) {
  require_same_shape(ia, ib, "ssim");
  require_same_peak(ia, ib, "ssim");
  if (ia.height < kMinSsimSide || ia.width < kMinSsimSide)
    throw ShapeError("ssim: image smaller than the minimum " + std::to_string(kMinSsimSide) +
                     "x" + std::to_string(kMinSsimSide) + " window support");
  if (p.window < 2) throw ConfigError("ssim: window must be at least 2");
  if (!(p.sigma > 0.0)) throw ConfigError("ssim: sigma must be positive");

  ctx.h = ia.height;
  ctx.w = ia.width;
  ctx.win = std::min({p.window, ia.height, ia.width});
  ctx.g = gaussian_taps(ctx.win, p.sigma);
  ctx.a = to_double(ia.v);
  ctx.b = to_double(ib.v);

  const double peak = static_cast<double>(ia.peak);
  ctx.c1 = (p.k1 * peak) * (p.k1 * peak);
  ctx.c2 = (p.k2 * peak) * (p.k2 * peak);

  std::vector<double> tmp, aa(ctx.a.size()), bb(ctx.a.size()), ab(ctx.a.size());
  for (std::size_t i = 0; i < ctx.a.size(); ++i) {
    aa[i] = ctx.a[i] * ctx.a[i];
    bb[i] = ctx.b[i] * ctx.b[i];
    ab[i] = ctx.a[i] * ctx.b[i];
  }
  std::vector<double> ra, rb, rab;
  sep_corr_valid(ctx.a, ctx.h, ctx.w, ctx.g, tmp, ctx.m1);
  sep_corr_valid(ctx.b, ctx.h, ctx.w, ctx.g, tmp, ctx.m2);
  sep_corr_valid(aa, ctx.h, ctx.w, ctx.g, tmp, ra);
  sep_corr_valid(bb, ctx.h, ctx.w, ctx.g, tmp, rb);
  sep_corr_valid(ab, ctx.h, ctx.w, ctx.g, tmp, rab);

  const std::size_t nmap = ctx.m1.size();
  ctx.v1.resize(nmap);
  ctx.v2.resize(nmap);
  ctx.v12.resize(nmap);
  ctx.s.resize(nmap);
  double acc = 0.0;
  for (std::size_t q = 0; q < nmap; ++q) {
    ctx.v1[q] = ra[q] - ctx.m1[q] * ctx.m1[q];
    ctx.v2[q] = rb[q] - ctx.m2[q] * ctx.m2[q];
    ctx.v12[q] = rab[q] - ctx.m1[q] * ctx.m2[q];
    const double n1 = 2.0 * ctx.m1[q] * ctx.m2[q] + ctx.c1;
    const double n2 = 2.0 * ctx.v12[q] + ctx.c2;
    const double d1 = ctx.m1[q] * ctx.m1[q] + ctx.m2[q] * ctx.m2[q] + ctx.c1;
    const double d2 = ctx.v1[q] + ctx.v2[q] + ctx.c2;
    double s = (n1 * n2) / (d1 * d2);
    if (s < 0.0) s = 0.0;  // rare negative covariance windows do not count
    ctx.s[q] = s;
    acc += s;
  }
  const double mean = acc / static_cast<double>(nmap);
  return std::clamp(mean, 0.0, 1.0);
}

}  // namespace detail

template <typename T>
double ssim(const Image<T>& a, const Image<T>& b, const SsimParams& p = {}) {
  detail::SsimCtx ctx;
  return detail::ssim_forward(a, b, p, ctx);
}

// SSIM plus d(ssim)/d(a); windows clamped to zero contribute no gradient.
template <typename T>
double ssim_with_grad(const Image<T>& a, const Image<T>& b, Image<T>& grad_a,
                      const SsimParams& p = {}) {
  detail::SsimCtx ctx;
  const double value = detail::ssim_forward(a, b, p, ctx);

  const std::size_t nmap = ctx.m1.size();
  // Per-window partials of the local SSIM w.r.t. (m1, v1, v12), treating the
  // raw window sums as the independent quantities.
  std::vector<double> big_a(nmap), big_b(nmap), big_c(nmap), field(nmap);
  for (std::size_t q = 0; q < nmap; ++q) {
    if (ctx.s[q] <= 0.0) {  // clamped window: locally flat
      big_a[q] = big_b[q] = big_c[q] = field[q] = 0.0;
      continue;
    }
    const double m1 = ctx.m1[q], m2 = ctx.m2[q];
    const double n1 = 2.0 * m1 * m2 + ctx.c1;
    const double n2 = 2.0 * ctx.v12[q] + ctx.c2;
    const double d1 = m1 * m1 + m2 * m2 + ctx.c1;
    const double d2 = ctx.v1[q] + ctx.v2[q] + ctx.c2;
    const double da = 2.0 * (m2 * n2 * d1 - m1 * n1 * n2) / (d1 * d1 * d2);  // ds/dm1
    const double db = -n1 * n2 / (d1 * d2 * d2);                            // ds/dv1
    const double dc = 2.0 * n1 / (d1 * d2);                                 // ds/dv12
    big_a[q] = da;
    big_b[q] = db;
    big_c[q] = dc;
    field[q] = da - 2.0 * db * m1 - dc * m2;
  }

  std::vector<double> tmp, s1, s2, s3;
  detail::sep_corr_valid_adjoint(field, ctx.h, ctx.w, ctx.g, tmp, s1);
  detail::sep_corr_valid_adjoint(big_b, ctx.h, ctx.w, ctx.g, tmp, s2);
  detail::sep_corr_valid_adjoint(big_c, ctx.h, ctx.w, ctx.g, tmp, s3);

  grad_a = Image<T>(a.height, a.width, a.peak);
  const double inv_p = 1.0 / static_cast<double>(nmap);
  for (std::size_t i = 0; i < grad_a.v.size(); ++i)
    grad_a.v[i] = static_cast<T>(inv_p * (s1[i] + 2.0 * ctx.a[i] * s2[i] + ctx.b[i] * s3[i]));
  return value;
}

// ---------------------------------------------------------------------------
// Classification metrics
// ---------------------------------------------------------------------------
using Confusion = std::array<std::array<std::int64_t, kNumClasses>, kNumClasses>;

// Entry (i, j) counts samples whose truth is i and prediction is j.
inline Confusion confusion_matrix(std::span<const int> predictions, std::span<const int> truths) {
  if (predictions.size() != truths.size())
    throw ShapeError("confusion_matrix: prediction/truth lengths differ");
  Confusion m{};
  for (auto& row : m) row.fill(0);
  for (std::size_t i = 0; i < truths.size(); ++i) {
    const int t = truths[i], p = predictions[i];
    if (t < 0 || t >= kNumClasses || p < 0 || p >= kNumClasses)
      throw DomainError("confusion_matrix: label outside [0," + std::to_string(kNumClasses - 1) +
                        "]");
    m[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)] += 1;
  }
  return m;
}

struct F1Result {
  std::array<double, kNumClasses> per_class{};
  double macro = 0.0;
};

// Per-class F1 = 2*tp / (2*tp + fp + fn); a class never predicted and never
// present scores 0 by convention. Macro F1 is the unweighted mean.
inline F1Result f1_scores(const Confusion& m) {
  F1Result r;
  double acc = 0.0;
  for (int c = 0; c < kNumClasses; ++c) {
    const auto cc = static_cast<std::size_t>(c);
    std::int64_t tp = m[cc][cc], fp = 0, fn = 0;
    for (int o = 0; o < kNumClasses; ++o) {
      if (o == c) continue;
      fp += m[static_cast<std::size_t>(o)][cc];
      fn += m[cc][static_cast<std::size_t>(o)];
    }
    const std::int64_t denom = 2 * tp + fp + fn;
    r.per_class[cc] = denom > 0 ? 2.0 * static_cast<double>(tp) / static_cast<double>(denom) : 0.0;
    acc += r.per_class[cc];
  }
  r.macro = acc / kNumClasses;
  return r;
}

inline F1Result f1_scores(std::span<const int> predictions, std::span<const int> truths) {
  return f1_scores(confusion_matrix(predictions, truths));
}

// ---------------------------------------------------------------------------
// Aggregated report for one evaluation pass.
// ---------------------------------------------------------------------------
struct MetricReport {
  bool has_iq = false;
  double psnr_db = 0.0;
  double ssim = 0.0;
  bool has_cls = false;
  F1Result f1{};
  Confusion confusion{};
  std::int64_t sample_count = 0;
};

// Mean PSNR/SSIM over aligned batches.
template <typename T>
MetricReport iq_report(std::span<const Image<T>> outputs, std::span<const Image<T>> references,
                       double epsilon = kDefaultPsnrEpsilon, const SsimParams& p = {}) {
  if (outputs.size() != references.size())
    throw ShapeError("iq_report: batch lengths differ");
  if (outputs.empty()) throw DomainError("iq_report: empty batch");
  MetricReport r;
  r.has_iq = true;
  r.sample_count = static_cast<std::int64_t>(outputs.size());
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    r.psnr_db += psnr(outputs[i], references[i], epsilon);
    r.ssim += ssim(outputs[i], references[i], p);
  }
  r.psnr_db /= static_cast<double>(outputs.size());
  r.ssim /= static_cast<double>(outputs.size());
  return r;
}

inline MetricReport cls_report(std::span<const int> predictions, std::span<const int> truths) {
  MetricReport r;
  r.has_cls = true;
  r.sample_count = static_cast<std::int64_t>(truths.size());
  r.confusion = confusion_matrix(predictions, truths);
  r.f1 = f1_scores(r.confusion);
  return r;
}

}  // namespace casr
