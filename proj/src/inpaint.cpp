#include "incseg/inpaint.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace incseg {

int rho(std::span<const double> softmax_row, const InpaintConfig& cfg) {
  if (softmax_row.empty()) throw ConfigError("rho: empty softmax row");
  double sum = 0;
  for (double p : softmax_row) sum += p;
  if (std::fabs(sum - 1.0) > 1e-9)
    throw NumericError("rho: softmax row sums to " + std::to_string(sum));
  double top1 = -1.0, top2 = -1.0;
  for (double p : softmax_row) {
    if (p > top1) {
      top2 = top1;
      top1 = p;
    } else if (p > top2) {
      top2 = p;
    }
  }
  if (softmax_row.size() == 1) top2 = 0.0;
  return (top1 - top2 > cfg.tau1 && top1 > cfg.tau2) ? 1 : 0;
}

std::vector<ClassId> inpaint_labels(std::span<const ClassId> labels,
                                    const Prediction& prev_pred,
                                    const InpaintConfig& cfg,
                                    InpaintStats& stats) {
  if (labels.size() != prev_pred.softmax.rows)
    throw DataError("inpaint: label count does not match predictions");
  const std::size_t c = prev_pred.class_list.size();
  std::vector<ClassId> out(labels.begin(), labels.end());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != kBackground) continue;
    ++stats.candidates;
    const double* row = prev_pred.softmax.row(i);
    if (!rho(std::span(row, c), cfg)) continue;
    std::size_t best = 0;
    for (std::size_t j = 1; j < c; ++j) {
      if (row[j] > row[best]) best = j;
    }
    const ClassId label = prev_pred.class_list[best];
    if (label == kBackground) continue;  // confident background stays put
    out[i] = label;
    ++stats.inpainted;
    ++stats.per_class[label];
  }
  return out;
}

std::pair<StepDataset, InpaintStats> inpaint_step(const StepDataset& step,
                                                  const SegmenterState& prev,
                                                  const InpaintConfig& cfg) {
  if (step.step == 0)
    throw ConfigError("labels of step 0 are never inpainted");
  if (cfg.tau1 < 0 || cfg.tau1 > 1 || cfg.tau2 < 0 || cfg.tau2 > 1)
    throw ConfigError("inpaint thresholds must lie in [0, 1]");

  StepDataset out = step;
  InpaintStats stats;
  // Raw scan bytes are read directly; labels come from the materialized step
  // files, which already store learning ids.
  for (auto& entry : out.scans) {
    const auto labels = [&] {
      // Step label files store plain learning ids; read them verbatim.
      const auto bytes = read_file_bytes(entry.step_label);
      if (bytes.size() % 4 != 0)
        throw DataError(entry.step_label.string() + ": truncated label file");
      std::vector<ClassId> v(bytes.size() / 4);
      for (std::size_t i = 0; i < v.size(); ++i)
        v[i] = static_cast<ClassId>(load_le_u32(bytes.data() + 4 * i) & 0xffffu);
      return v;
    }();
    const auto cloud_bytes = read_file_bytes(entry.bin);
    if (cloud_bytes.size() != labels.size() * 16)
      throw DataError(entry.bin.string() + ": scan/label size mismatch");
    std::vector<PointXYZI> points(labels.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
      const std::byte* rec = cloud_bytes.data() + 16 * i;
      points[i] = {load_le_f32(rec), load_le_f32(rec + 4), load_le_f32(rec + 8),
                   load_le_f32(rec + 12)};
    }
    const Prediction pred = forward(prev, points);
    const auto rewritten = inpaint_labels(labels, pred, cfg, stats);
    std::filesystem::path ip = entry.step_label;
    ip += ".ip";
    write_label_file(ip, rewritten);
    entry.step_label = ip;
  }

  // The inpainted set spans everything the previous model can predict plus
  // the step's own classes.
  std::set<ClassId> active(step.active_classes.begin(),
                           step.active_classes.end());
  active.insert(prev.class_list.begin(), prev.class_list.end());
  out.active_classes.assign(active.begin(), active.end());
  return {std::move(out), stats};
}

}  // namespace incseg
