#pragma once

// Reconstruction-pathway evaluation: embed a held-out real image, regenerate
// through the frozen generator, predict its mask, and judge the prediction
// against the real ground truth. This is the level at which the few-shot
// claim is measurable without external datasets.

#include "sodgan/eval/report.hpp"
#include "sodgan/eval/saliency.hpp"
#include "sodgan/maskgen/maskgen.hpp"
#include "sodgan/threading.hpp"

namespace sodgan {

struct PathwayResult {
  MetricReport report;
  double mean_iou = 0;
  int count = 0;
};

inline PathwayResult eval_reconstruction_pathway(const std::vector<const CorpusEntry*>& entries,
                                                 const EmbeddingNet<float>& den,
                                                 const Generator<float>& g,
                                                 const MaskGeneratorNet<float>& mg, int cap = 0,
                                                 int threads = 1) {
  require(!entries.empty(), ErrKind::empty_input, "pathway eval: no entries");
  const int n = cap > 0 ? std::min<int>(cap, static_cast<int>(entries.size()))
                        : static_cast<int>(entries.size());
  std::vector<Mask> preds(n);
  std::vector<double> ious(n);
  parallel_for(n, threads, [&](int i) {
    const auto* e = entries[i];
    typename EmbeddingNet<float>::Acts ea;
    LatentCode z;
    z.v = den.embed(e->image.tensor(), e->class_id, ea);
    z.embedded = true;
    auto [img, prob] = generate_mask(g, mg, z, e->class_id);
    ious[i] = iou(prob.binarize(0.5f), e->mask);
    preds[i] = std::move(prob);
  });
  PathwayResult r;
  r.count = n;
  std::vector<const Mask*> pp, gg;
  for (int i = 0; i < n; ++i) {
    pp.push_back(&preds[i]);
    gg.push_back(&entries[i]->mask);
    r.mean_iou += ious[i] / n;
  }
  r.report = evaluate_battery(pp, gg);
  return r;
}

// Saliency-model evaluation against a corpus split.
inline PathwayResult eval_saliency_net(const std::vector<const CorpusEntry*>& entries,
                                       const SaliencyNet<float>& net, int cap = 0,
                                       int threads = 1) {
  require(!entries.empty(), ErrKind::empty_input, "saliency eval: no entries");
  const int n = cap > 0 ? std::min<int>(cap, static_cast<int>(entries.size()))
                        : static_cast<int>(entries.size());
  std::vector<Mask> preds(n);
  std::vector<double> ious(n);
  parallel_for(n, threads, [&](int i) {
    preds[i] = predict_saliency(net, entries[i]->image);
    ious[i] = iou(preds[i].binarize(0.5f), entries[i]->mask);
  });
  PathwayResult r;
  r.count = n;
  std::vector<const Mask*> pp, gg;
  for (int i = 0; i < n; ++i) {
    pp.push_back(&preds[i]);
    gg.push_back(&entries[i]->mask);
    r.mean_iou += ious[i] / n;
  }
  r.report = evaluate_battery(pp, gg);
  return r;
}

}  // namespace sodgan
