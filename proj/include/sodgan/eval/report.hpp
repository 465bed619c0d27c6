#pragma once

// Metric battery report: scalar metrics plus the F and PR curves, JSON
// serialization (scalars quantized to 6 decimals) and curve emission as
// CSV (source of truth) + PNG.

#include <json.hpp>

#include "sodgan/eval/metrics.hpp"
#include "sodgan/io/plot.hpp"

namespace sodgan {

struct MetricReport {
  double mae = 0, max_f = 0, mean_f = 0, s_measure = 0, auc = 0;
  std::array<double, 256> f_curve{};
  std::vector<std::pair<double, double>> pr_curve;  // 256 (precision, recall)

  nlohmann::json to_json() const {
    auto q6 = [](double v) { return std::round(v * 1e6) / 1e6; };
    nlohmann::json j;
    j["mae"] = q6(mae);
    j["max_f"] = q6(max_f);
    j["mean_f"] = q6(mean_f);
    j["s_measure"] = q6(s_measure);
    j["auc"] = q6(auc);
    nlohmann::json fc = nlohmann::json::array();
    for (double v : f_curve) fc.push_back(q6(v));
    j["f_curve"] = fc;
    nlohmann::json pc = nlohmann::json::array();
    for (const auto& [p, r] : pr_curve) pc.push_back({q6(p), q6(r)});
    j["pr_curve"] = pc;
    return j;
  }

  static MetricReport from_json(const nlohmann::json& j) {
    MetricReport r;
    r.mae = j.at("mae").get<double>();
    r.max_f = j.at("max_f").get<double>();
    r.mean_f = j.at("mean_f").get<double>();
    r.s_measure = j.at("s_measure").get<double>();
    r.auc = j.at("auc").get<double>();
    const auto& fc = j.at("f_curve");
    for (int k = 0; k < 256; ++k) r.f_curve[k] = fc[k].get<double>();
    for (const auto& pr : j.at("pr_curve"))
      r.pr_curve.emplace_back(pr[0].get<double>(), pr[1].get<double>());
    return r;
  }
};

// Full battery over aligned prediction/ground-truth lists.
inline MetricReport evaluate_battery(const std::vector<const Mask*>& preds,
                                     const std::vector<const Mask*>& gts, double beta2 = 0.3,
                                     double s_alpha = 0.5) {
  require(!preds.empty() && preds.size() == gts.size(), ErrKind::empty_input,
          "evaluate: empty or misaligned inputs");
  MetricReport r;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    r.mae += mae(*preds[i], *gts[i]) / static_cast<double>(preds.size());
    r.s_measure += s_measure(*preds[i], *gts[i], s_alpha) / static_cast<double>(preds.size());
  }
  const auto fc = f_measure_curve(preds, gts, beta2);
  r.f_curve = fc.f;
  r.max_f = fc.max_f;
  r.mean_f = fc.mean_f;
  r.pr_curve = pr_curve(preds, gts);
  r.auc = auc(preds, gts);
  return r;
}

// pr_curve.csv / f_curve.csv hold exactly 256 rows at 6-decimal fixed
// precision; re-emission from the same report is byte-identical.
inline void emit_plots(const MetricReport& report, const fs::path& out_dir) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  require(fs::exists(out_dir), ErrKind::io, "emit_plots: cannot create " + out_dir.string());

  std::string pr_csv, f_csv;
  const auto& thr = metric_thresholds();
  for (int k = 0; k < 256; ++k) {
    pr_csv += fixed6(report.pr_curve[k].first) + "," + fixed6(report.pr_curve[k].second) + "\n";
    f_csv += fixed6(thr[k]) + "," + fixed6(report.f_curve[k]) + "\n";
  }
  write_text_file(out_dir / "pr_curve.csv", pr_csv);
  write_text_file(out_dir / "f_curve.csv", f_csv);

  std::vector<std::pair<double, double>> pr_pts;
  for (const auto& [p, rr] : report.pr_curve) pr_pts.emplace_back(rr, p);  // recall on x
  write_line_chart_png(out_dir / "pr_curve.png", pr_pts, 0, 1, 0, 1);
  std::vector<std::pair<double, double>> f_pts;
  for (int k = 0; k < 256; ++k) f_pts.emplace_back(thr[k], report.f_curve[k]);
  write_line_chart_png(out_dir / "f_curve.png", f_pts, 0, 1, 0, 1);
}

}  // namespace sodgan
