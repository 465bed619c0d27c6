#pragma once

// Dataset statistics shared by the corpus and the synthetic pipeline:
// center-bias heatmap, per-class counts, foreground/background color
// contrast, and the object-size histogram.

#include <map>
#include <vector>

#include <json.hpp>

#include "sodgan/types.hpp"

namespace sodgan {

struct PairView {
  const Image* image;
  const Mask* mask;
  ClassLabel class_id;
};

struct StatsReport {
  int h = 0, w = 0;
  std::vector<double> center_bias;       // (h*w) pixelwise mean of binary masks
  std::map<int, int> class_counts;
  std::vector<double> contrast;          // per-entry chi-square FG-vs-BG histogram distance
  std::vector<double> size_hist;         // 20 bins over foreground fraction in [0,1]
  static constexpr int kSizeBins = 20;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["h"] = h;
    j["w"] = w;
    j["center_bias"] = center_bias;
    nlohmann::json cc = nlohmann::json::object();
    for (const auto& [k, v] : class_counts) cc[std::to_string(k)] = v;
    j["class_counts"] = cc;
    j["contrast"] = contrast;
    j["size_hist"] = size_hist;
    return j;
  }

  static StatsReport from_json(const nlohmann::json& j) {
    StatsReport r;
    r.h = j.at("h").get<int>();
    r.w = j.at("w").get<int>();
    r.center_bias = j.at("center_bias").get<std::vector<double>>();
    for (const auto& [k, v] : j.at("class_counts").items())
      r.class_counts[std::stoi(k)] = v.get<int>();
    r.contrast = j.at("contrast").get<std::vector<double>>();
    r.size_hist = j.at("size_hist").get<std::vector<double>>();
    return r;
  }
};

// Chi-square distance between FG and BG color histograms (8x8x8 RGB bins,
// each histogram normalized to unit mass). 0 when the histograms coincide.
inline double color_contrast(const Image& img, const Mask& binary_mask) {
  constexpr int kBins = 8;
  std::vector<double> fg(kBins * kBins * kBins, 0.0), bg(kBins * kBins * kBins, 0.0);
  double nfg = 0, nbg = 0;
  for (int y = 0; y < img.h; ++y) {
    for (int x = 0; x < img.w; ++x) {
      auto bin_of = [](float v) { return std::min(kBins - 1, static_cast<int>(v * kBins)); };
      const int idx =
          (bin_of(img.at(0, y, x)) * kBins + bin_of(img.at(1, y, x))) * kBins + bin_of(img.at(2, y, x));
      if (binary_mask.at(y, x) > 0.5f) {
        fg[idx] += 1;
        nfg += 1;
      } else {
        bg[idx] += 1;
        nbg += 1;
      }
    }
  }
  if (nfg == 0 || nbg == 0) return 0.0;
  double chi2 = 0;
  for (std::size_t i = 0; i < fg.size(); ++i) {
    const double p = fg[i] / nfg, q = bg[i] / nbg;
    const double s = p + q;
    if (s > 0) chi2 += 0.5 * (p - q) * (p - q) / s;
  }
  return chi2;
}

inline StatsReport compute_stats(const std::vector<PairView>& pairs) {
  require(!pairs.empty(), ErrKind::empty_input, "stats: empty input");
  StatsReport r;
  r.h = pairs[0].mask->h;
  r.w = pairs[0].mask->w;
  r.center_bias.assign(static_cast<std::size_t>(r.h) * r.w, 0.0);
  r.size_hist.assign(StatsReport::kSizeBins, 0.0);
  for (const auto& p : pairs) {
    require(p.mask->h == r.h && p.mask->w == r.w, ErrKind::invalid_argument,
            "stats: inconsistent raster sizes");
    const Mask bin = p.mask->binary ? *p.mask : p.mask->binarize();
    for (std::size_t i = 0; i < bin.v.size(); ++i) r.center_bias[i] += bin.v[i];
    r.class_counts[p.class_id] += 1;
    r.contrast.push_back(color_contrast(*p.image, bin));
    const double f = bin.foreground_fraction();
    const int b = std::min(StatsReport::kSizeBins - 1,
                           static_cast<int>(f * StatsReport::kSizeBins));
    r.size_hist[b] += 1;
  }
  for (auto& v : r.center_bias) v /= static_cast<double>(pairs.size());
  return r;
}

}  // namespace sodgan
