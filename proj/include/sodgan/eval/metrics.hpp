#pragma once

// Saliency evaluation battery: MAE, thresholded precision/recall/F curves,
// ROC AUC, and the structure measure.
//
// Thresholding convention, shared with the brute-force test oracles: a pixel
// with probability p counts as predicted-positive at threshold k (k=0..255)
// iff p >= k/255.0, evaluated in double. The fast paths below locate the
// cutoff by binary search over the exact threshold values, which yields the
// same sets as direct comparison.
//
// Conventions for degenerate ratios: precision/recall/TPR 0/0 -> 0, and the
// F score is 0 whenever its denominator vanishes.

#include <array>
#include <cmath>
#include <vector>

#include "sodgan/types.hpp"

namespace sodgan {

inline const std::array<double, 256>& metric_thresholds() {
  static const std::array<double, 256> thr = [] {
    std::array<double, 256> t{};
    for (int k = 0; k < 256; ++k) t[k] = static_cast<double>(k) / 255.0;
    return t;
  }();
  return thr;
}

namespace detail {

// Largest k with thr[k] <= p, or -1 when p < 0 (probabilities never are).
inline int threshold_rank(double p) {
  const auto& thr = metric_thresholds();
  int lo = 0, hi = 255, ans = -1;
  while (lo <= hi) {
    const int mid = (lo + hi) / 2;
    if (thr[mid] <= p) {
      ans = mid;
      lo = mid + 1;
    } else {
      hi = mid - 1;
    }
  }
  return ans;
}

struct PairCounts {
  std::array<long long, 256> tp{}, pp{};  // true positives, predicted positives per threshold
  long long gp = 0;                       // ground-truth positives
  long long n = 0;                        // pixels
};

inline PairCounts count_pair(const Mask& pred, const Mask& gt) {
  require(pred.h == gt.h && pred.w == gt.w, ErrKind::invalid_argument,
          "metrics: prediction/ground-truth shape mismatch");
  PairCounts c;
  c.n = static_cast<long long>(pred.v.size());
  std::array<long long, 256> tp_hist{}, pp_hist{};
  for (std::size_t i = 0; i < pred.v.size(); ++i) {
    const int rank = threshold_rank(static_cast<double>(pred.v[i]));
    const bool pos = gt.v[i] > 0.5f;
    if (pos) ++c.gp;
    if (rank >= 0) {
      ++pp_hist[rank];
      if (pos) ++tp_hist[rank];
    }
  }
  long long tp_acc = 0, pp_acc = 0;
  for (int k = 255; k >= 0; --k) {
    tp_acc += tp_hist[k];
    pp_acc += pp_hist[k];
    c.tp[k] = tp_acc;
    c.pp[k] = pp_acc;
  }
  return c;
}

inline double ratio0(double num, double den) { return den == 0.0 ? 0.0 : num / den; }

}  // namespace detail

inline double mae(const Mask& pred, const Mask& gt) {
  require(pred.h == gt.h && pred.w == gt.w, ErrKind::invalid_argument,
          "mae: shape mismatch");
  double s = 0;
  for (std::size_t i = 0; i < pred.v.size(); ++i)
    s += std::fabs(static_cast<double>(pred.v[i]) - static_cast<double>(gt.v[i]));
  return s / static_cast<double>(pred.v.size());
}

struct FCurve {
  std::array<double, 256> f{};
  double max_f = 0, mean_f = 0;
};

// F over per-image-averaged precision/recall (the usual saliency convention
// for scalar max/mean F); 0/0 -> 0 throughout.
inline FCurve f_measure_curve(const std::vector<const Mask*>& preds,
                              const std::vector<const Mask*>& gts, double beta2 = 0.3) {
  require(!preds.empty() && preds.size() == gts.size(), ErrKind::empty_input,
          "f_measure_curve: empty or misaligned input lists");
  std::array<double, 256> psum{}, rsum{};
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const auto c = detail::count_pair(*preds[i], *gts[i]);
    for (int k = 0; k < 256; ++k) {
      psum[k] += detail::ratio0(static_cast<double>(c.tp[k]), static_cast<double>(c.pp[k]));
      rsum[k] += detail::ratio0(static_cast<double>(c.tp[k]), static_cast<double>(c.gp));
    }
  }
  FCurve out;
  const double n = static_cast<double>(preds.size());
  double acc = 0;
  for (int k = 0; k < 256; ++k) {
    const double p = psum[k] / n, r = rsum[k] / n;
    const double den = beta2 * p + r;
    out.f[k] = den == 0.0 ? 0.0 : (1.0 + beta2) * p * r / den;
    acc += out.f[k];
    if (out.f[k] > out.max_f) out.max_f = out.f[k];
  }
  out.mean_f = acc / 256.0;
  return out;
}

// Dataset-pooled precision/recall pairs, one per threshold.
inline std::vector<std::pair<double, double>> pr_curve(const std::vector<const Mask*>& preds,
                                                       const std::vector<const Mask*>& gts) {
  require(!preds.empty() && preds.size() == gts.size(), ErrKind::empty_input,
          "pr_curve: empty or misaligned input lists");
  std::array<long long, 256> tp{}, pp{};
  long long gp = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const auto c = detail::count_pair(*preds[i], *gts[i]);
    for (int k = 0; k < 256; ++k) {
      tp[k] += c.tp[k];
      pp[k] += c.pp[k];
    }
    gp += c.gp;
  }
  std::vector<std::pair<double, double>> out(256);
  for (int k = 0; k < 256; ++k) {
    out[k] = {detail::ratio0(static_cast<double>(tp[k]), static_cast<double>(pp[k])),
              detail::ratio0(static_cast<double>(tp[k]), static_cast<double>(gp))};
  }
  return out;
}

// Pooled ROC area, trapezoidal over the threshold sweep (descending k gives
// ascending FPR), anchored at (0,0).
inline double auc(const std::vector<const Mask*>& preds, const std::vector<const Mask*>& gts) {
  require(!preds.empty() && preds.size() == gts.size(), ErrKind::empty_input,
          "auc: empty or misaligned input lists");
  std::array<long long, 256> tp{}, pp{};
  long long gp = 0, n = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const auto c = detail::count_pair(*preds[i], *gts[i]);
    for (int k = 0; k < 256; ++k) {
      tp[k] += c.tp[k];
      pp[k] += c.pp[k];
    }
    gp += c.gp;
    n += c.n;
  }
  const long long gn = n - gp;
  double area = 0, prev_fpr = 0, prev_tpr = 0;
  for (int k = 255; k >= 0; --k) {
    const double tpr = detail::ratio0(static_cast<double>(tp[k]), static_cast<double>(gp));
    const double fpr = detail::ratio0(static_cast<double>(pp[k] - tp[k]), static_cast<double>(gn));
    area += (fpr - prev_fpr) * (tpr + prev_tpr) / 2.0;
    prev_fpr = fpr;
    prev_tpr = tpr;
  }
  return area;
}

// Structure measure (object + region similarity, alpha-weighted), with the
// usual fallbacks for all-background / all-foreground ground truth.
namespace detail {

constexpr double kSEps = 2.220446049250313e-16;

inline double s_object_score(const std::vector<double>& vals) {
  if (vals.empty()) return 0.0;
  double mean = 0;
  for (double v : vals) mean += v;
  mean /= static_cast<double>(vals.size());
  double var = 0;
  if (vals.size() > 1) {
    for (double v : vals) var += (v - mean) * (v - mean);
    var /= static_cast<double>(vals.size() - 1);
  }
  const double sd = std::sqrt(var);
  return 2.0 * mean / (mean * mean + 1.0 + sd + kSEps);
}

inline double s_ssim_block(const Mask& pred, const Mask& gt, int y0, int y1, int x0, int x1) {
  const long long n = static_cast<long long>(y1 - y0) * (x1 - x0);
  if (n <= 0) return 1.0;
  double mx = 0, my = 0;
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) {
      mx += pred.at(y, x);
      my += gt.at(y, x);
    }
  mx /= n;
  my /= n;
  double sx = 0, sy = 0, sxy = 0;
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) {
      const double dx = pred.at(y, x) - mx, dy = gt.at(y, x) - my;
      sx += dx * dx;
      sy += dy * dy;
      sxy += dx * dy;
    }
  const double denom_n = static_cast<double>(n) - 1.0 + kSEps;
  sx /= denom_n;
  sy /= denom_n;
  sxy /= denom_n;
  const double a = 4.0 * mx * my * sxy;
  const double b = (mx * mx + my * my) * (sx + sy);
  if (a != 0.0) return a / (b + kSEps);
  return b == 0.0 ? 1.0 : 0.0;
}

}  // namespace detail

inline double s_measure(const Mask& pred, const Mask& gt, double alpha = 0.5) {
  require(pred.h == gt.h && pred.w == gt.w, ErrKind::invalid_argument, "s_measure: shape mismatch");
  gt.check_binary();
  const int rows = gt.h, cols = gt.w;
  double gt_mean = 0;
  for (float v : gt.v) gt_mean += v;
  gt_mean /= static_cast<double>(gt.v.size());

  if (gt_mean == 0.0) {
    double pm = 0;
    for (float v : pred.v) pm += v;
    return 1.0 - pm / static_cast<double>(pred.v.size());
  }
  if (gt_mean == 1.0) {
    double pm = 0;
    for (float v : pred.v) pm += v;
    return pm / static_cast<double>(pred.v.size());
  }

  // Object term: foreground on pred, background on 1-pred.
  std::vector<double> fgvals, bgvals;
  for (std::size_t i = 0; i < gt.v.size(); ++i) {
    if (gt.v[i] > 0.5f)
      fgvals.push_back(pred.v[i]);
    else
      bgvals.push_back(1.0 - pred.v[i]);
  }
  const double s_obj =
      gt_mean * detail::s_object_score(fgvals) + (1.0 - gt_mean) * detail::s_object_score(bgvals);

  // Region term: SSIM over the four blocks around the gt centroid
  // (1-based arithmetic, round-half-away like the reference formulation).
  double total = 0, xsum = 0, ysum = 0;
  for (int y = 0; y < rows; ++y)
    for (int x = 0; x < cols; ++x)
      if (gt.at(y, x) > 0.5f) {
        total += 1;
        xsum += x + 1;
        ysum += y + 1;
      }
  const int cx = static_cast<int>(std::llround(xsum / total));
  const int cy = static_cast<int>(std::llround(ysum / total));
  const double area = static_cast<double>(rows) * cols;
  const double w1 = static_cast<double>(cx) * cy / area;
  const double w2 = static_cast<double>(cols - cx) * cy / area;
  const double w3 = static_cast<double>(cx) * (rows - cy) / area;
  const double w4 = 1.0 - w1 - w2 - w3;
  const double s_reg = w1 * detail::s_ssim_block(pred, gt, 0, cy, 0, cx) +
                       w2 * detail::s_ssim_block(pred, gt, 0, cy, cx, cols) +
                       w3 * detail::s_ssim_block(pred, gt, cy, rows, 0, cx) +
                       w4 * detail::s_ssim_block(pred, gt, cy, rows, cx, cols);

  const double q = alpha * s_obj + (1.0 - alpha) * s_reg;
  return q < 0.0 ? 0.0 : q;
}

inline double iou(const Mask& a, const Mask& b) {
  require(a.h == b.h && a.w == b.w, ErrKind::invalid_argument, "iou: shape mismatch");
  long long inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.v.size(); ++i) {
    const bool pa = a.v[i] > 0.5f, pb = b.v[i] > 0.5f;
    inter += pa && pb;
    uni += pa || pb;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace sodgan
