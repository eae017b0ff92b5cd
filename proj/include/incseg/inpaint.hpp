#pragma once

#include <map>
#include <span>

#include "incseg/common.hpp"
#include "incseg/ingest.hpp"
#include "incseg/model.hpp"
#include "incseg/scenario.hpp"
#include "incseg/taxonomy.hpp"

namespace incseg {

struct InpaintConfig {
  double tau1 = 0.2;  // margin between the two largest softmax entries
  double tau2 = 0.7;  // floor for the largest entry
};

struct InpaintStats {
  std::uint64_t candidates = 0;  // background-labeled points seen
  std::uint64_t inpainted = 0;   // candidates whose label changed to a class
  std::map<ClassId, std::uint64_t> per_class;
};

// 1 iff top1 - top2 > tau1 and top1 > tau2 (strict). The row must be a
// distribution (sum 1 within 1e-9).
int rho(std::span<const double> softmax_row, const InpaintConfig& cfg);

// Rewrites background labels with the previous model's argmax wherever the
// confidence rule fires. Non-background labels (including unlabeled) pass
// through untouched.
std::vector<ClassId> inpaint_labels(std::span<const ClassId> labels,
                                    const Prediction& prev_pred,
                                    const InpaintConfig& cfg,
                                    InpaintStats& stats);

// File-level pass over a materialized step (k > 0): runs the previous model
// on every scan, writes the rewritten label maps next to the originals with
// an extra ".ip" suffix, and widens active_classes to every class the
// previous model can emit. The input step dataset is not modified.
std::pair<StepDataset, InpaintStats> inpaint_step(const StepDataset& step,
                                                  const SegmenterState& prev,
                                                  const InpaintConfig& cfg);

}  // namespace incseg
