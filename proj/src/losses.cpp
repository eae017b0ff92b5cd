#include "incseg/losses.hpp"

#include <algorithm>
#include <cmath>

#include "incseg/kernels.hpp"

namespace incseg {

namespace {

constexpr double kLogFloor = 1e-12;

double safe_log(double p) { return std::log(std::max(p, kLogFloor)); }

}  // namespace

KdMode parse_kd_mode(const std::string& name) {
  const std::string n = normalize_name(name);
  if (n == "none") return KdMode::None;
  if (n == "output") return KdMode::Output;
  if (n == "feature-l1") return KdMode::FeatureL1;
  if (n == "feature-l2") return KdMode::FeatureL2;
  if (n == "both") return KdMode::Both;
  throw ConfigError("unknown kd mode \"" + name + "\"");
}

const char* kd_mode_name(KdMode mode) {
  switch (mode) {
    case KdMode::None: return "none";
    case KdMode::Output: return "output";
    case KdMode::FeatureL1: return "feature-l1";
    case KdMode::FeatureL2: return "feature-l2";
    case KdMode::Both: return "both";
  }
  return "?";
}

OutputVariant parse_output_variant(const std::string& name) {
  const std::string n = normalize_name(name);
  if (n == "standard") return OutputVariant::Standard;
  if (n == "joined-unknowns" || n == "joined") return OutputVariant::JoinedUnknowns;
  if (n == "coarse-sum" || n == "coarse") return OutputVariant::CoarseSum;
  throw ConfigError("unknown output kd variant \"" + name + "\"");
}

const char* output_variant_name(OutputVariant v) {
  switch (v) {
    case OutputVariant::Standard: return "standard";
    case OutputVariant::JoinedUnknowns: return "joined-unknowns";
    case OutputVariant::CoarseSum: return "coarse-sum";
  }
  return "?";
}

double cross_entropy(const Prediction& pred, std::span<const ClassId> labels,
                     std::size_t* contributing) {
  if (labels.size() != pred.softmax.rows)
    throw DataError("label count does not match prediction rows");
  std::vector<int> row_of(kUnlabeled + 1, -1);
  for (std::size_t j = 0; j < pred.class_list.size(); ++j)
    row_of[pred.class_list[j]] = static_cast<int>(j);

  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const ClassId y = labels[i];
    if (y == kUnlabeled) continue;
    const int r = row_of[y];
    if (r < 0)
      throw DataError("label " + std::to_string(y) +
                      " is outside the model's class list");
    sum -= safe_log(pred.softmax.at(i, static_cast<std::size_t>(r)));
    ++n;
  }
  if (contributing) *contributing = n;
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

namespace {

// Maps every current class column to a slot of the previous model's class
// list (or -1: the slot receives no mass and the target there is zero).
std::vector<int> slot_map(const Prediction& prev, const Prediction& cur,
                          OutputVariant variant, const ClassTaxonomy* tax) {
  const std::size_t prev_c = prev.class_list.size();
  const std::size_t cur_c = cur.class_list.size();
  if (prev_c > cur_c ||
      !std::equal(prev.class_list.begin(), prev.class_list.end(),
                  cur.class_list.begin()))
    throw ConfigError(
        "output kd requires the previous class list to be a prefix of the "
        "current one");

  std::vector<int> slot(cur_c, -1);
  for (std::size_t j = 0; j < prev_c; ++j) slot[j] = static_cast<int>(j);
  switch (variant) {
    case OutputVariant::Standard:
      break;
    case OutputVariant::JoinedUnknowns: {
      int bg = -1;
      for (std::size_t j = 0; j < prev_c; ++j)
        if (prev.class_list[j] == kBackground) bg = static_cast<int>(j);
      if (bg < 0)
        throw ConfigError(
            "joined-unknowns kd needs a background slot in the previous model");
      for (std::size_t j = prev_c; j < cur_c; ++j) slot[j] = bg;
      break;
    }
    case OutputVariant::CoarseSum: {
      if (!tax || !tax->has_hierarchy())
        throw ConfigError("coarse-sum kd requires a taxonomy with a hierarchy");
      for (std::size_t j = prev_c; j < cur_c; ++j) {
        // Walk to coarser levels until an ancestor known to the previous
        // model is found.
        const ClassId c = cur.class_list[j];
        int found = -1;
        for (std::size_t level = tax->num_levels(); level-- > 0;) {
          ClassId a;
          try {
            a = tax->ancestor_of_any(c, level);
          } catch (const ConfigError&) {
            continue;
          }
          if (a == c) continue;
          for (std::size_t s = 0; s < prev_c; ++s) {
            if (prev.class_list[s] == a) {
              found = static_cast<int>(s);
              break;
            }
          }
          if (found >= 0) break;
        }
        if (found < 0)
          throw ConfigError("class \"" + tax->name_of(c) +
                            "\" has no ancestor in the previous model");
        slot[j] = found;
      }
      break;
    }
  }
  return slot;
}

// Per-point soft-target cross-entropy and (optionally) its gradient w.r.t.
// the current logits, scaled by `grad_scale` and accumulated into dlogits.
// Returns the sum over the selected points.
double output_kd_core(const Prediction& prev, const Prediction& cur,
                      const std::vector<int>& slot,
                      std::span<const ClassId> mask_labels, Mat* dlogits,
                      double grad_scale) {
  const std::size_t n = cur.softmax.rows;
  const std::size_t prev_c = prev.class_list.size();
  const std::size_t cur_c = cur.class_list.size();
  if (prev.softmax.rows != n)
    throw ConfigError("output kd: prediction row counts differ");

  double total = 0.0;
  std::vector<double> grouped(prev_c);
  for (std::size_t i = 0; i < n; ++i) {
    if (!mask_labels.empty() && mask_labels[i] == kUnlabeled) continue;
    const double* t = prev.softmax.row(i);
    const double* q = cur.softmax.row(i);
    std::fill(grouped.begin(), grouped.end(), 0.0);
    for (std::size_t j = 0; j < cur_c; ++j) {
      if (slot[j] >= 0) grouped[static_cast<std::size_t>(slot[j])] += q[j];
    }
    double point_loss = 0.0;
    for (std::size_t s = 0; s < prev_c; ++s)
      point_loss -= t[s] * safe_log(grouped[s]);
    total += point_loss;

    if (dlogits) {
      // d/dz_j of -sum_s t_s log q'_s = q_j (T - t_{G(j)}/q'_{G(j)}), T = 1.
      double* d = dlogits->row(i);
      for (std::size_t j = 0; j < cur_c; ++j) {
        double ratio = 0.0;
        if (slot[j] >= 0) {
          const auto s = static_cast<std::size_t>(slot[j]);
          ratio = t[s] / std::max(grouped[s], kLogFloor);
        }
        d[j] += grad_scale * q[j] * (1.0 - ratio);
      }
    }
  }
  return total;
}

std::size_t masked_count(std::span<const ClassId> labels, std::size_t n) {
  if (labels.empty()) return n;
  std::size_t c = 0;
  for (ClassId y : labels)
    if (y != kUnlabeled) ++c;
  return c;
}

}  // namespace

double output_kd(const Prediction& prev, const Prediction& cur,
                 OutputVariant variant, const ClassTaxonomy* tax) {
  const auto slot = slot_map(prev, cur, variant, tax);
  const std::size_t n = cur.softmax.rows;
  if (n == 0) return 0.0;
  const double sum = output_kd_core(prev, cur, slot, {}, nullptr, 0.0);
  return sum / static_cast<double>(n);
}

double feature_kd(const Mat& prev_features, const Mat& cur_features, int p) {
  if (p != 1 && p != 2) throw ConfigError("feature kd norm must be 1 or 2");
  if (prev_features.rows != cur_features.rows ||
      prev_features.cols != cur_features.cols)
    throw ConfigError("feature kd: feature shapes differ");
  const std::size_t n = cur_features.rows;
  if (n == 0) return 0.0;
  const double sum = kernels::active().lp_distance_sum(
      n, cur_features.cols, cur_features.data(), prev_features.data(), p);
  return sum / static_cast<double>(n);
}

namespace {

void feature_kd_grad(const Mat& prev_features, const Mat& cur_features, int p,
                     double scale, Mat& dfeatures) {
  const std::size_t n = cur_features.rows;
  const std::size_t dim = cur_features.cols;
  for (std::size_t i = 0; i < n; ++i) {
    const double* a = cur_features.row(i);
    const double* b = prev_features.row(i);
    double* d = dfeatures.row(i);
    if (p == 2) {
      double norm2 = 0;
      for (std::size_t j = 0; j < dim; ++j)
        norm2 += (a[j] - b[j]) * (a[j] - b[j]);
      const double norm = std::sqrt(norm2);
      if (norm > 0) {
        for (std::size_t j = 0; j < dim; ++j)
          d[j] += scale * (a[j] - b[j]) / norm;
      }
    } else {
      for (std::size_t j = 0; j < dim; ++j) {
        const double diff = a[j] - b[j];
        if (diff > 0) {
          d[j] += scale;
        } else if (diff < 0) {
          d[j] -= scale;
        }
      }
    }
  }
}

}  // namespace

LossValue combined_with_grad(const Prediction& cur, const Prediction* prev,
                             std::span<const ClassId> labels,
                             const LossConfig& cfg, const ClassTaxonomy* tax,
                             Mat* dlogits, Mat* dfeatures) {
  if (!std::isfinite(cfg.lambda) || cfg.lambda < 0)
    throw ConfigError("lambda must be finite and non-negative");
  if ((cfg.kd_mode != KdMode::None) != (prev != nullptr))
    throw ConfigError(
        "a previous prediction is required exactly when kd_mode is not none");
  const std::size_t n = cur.softmax.rows;
  const std::size_t c = cur.class_list.size();
  if (labels.size() != n) throw DataError("label count mismatch");

  if (dlogits) *dlogits = Mat(n, c);
  if (dfeatures) *dfeatures = Mat(n, kFeatureDim);

  LossValue out;

  // Cross-entropy part and its gradient.
  std::vector<int> row_of(kUnlabeled + 1, -1);
  for (std::size_t j = 0; j < c; ++j)
    row_of[cur.class_list[j]] = static_cast<int>(j);
  std::size_t n_ce = 0;
  for (ClassId y : labels) {
    if (y == kUnlabeled) continue;
    if (row_of[y] < 0)
      throw DataError("label " + std::to_string(y) +
                      " is outside the model's class list");
    ++n_ce;
  }
  out.ce_points = n_ce;
  if (n_ce > 0) {
    const double inv = 1.0 / static_cast<double>(n_ce);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const ClassId y = labels[i];
      if (y == kUnlabeled) continue;
      const auto r = static_cast<std::size_t>(row_of[y]);
      const double* q = cur.softmax.row(i);
      sum -= safe_log(q[r]);
      if (dlogits) {
        double* d = dlogits->row(i);
        for (std::size_t j = 0; j < c; ++j) d[j] += inv * q[j];
        d[r] -= inv;
      }
    }
    // Same rounding as cross_entropy(), so combined(lambda=0) == ce bitwise.
    out.ce_part = sum / static_cast<double>(n_ce);
  }

  // Distillation part.
  if (cfg.kd_mode == KdMode::Output || cfg.kd_mode == KdMode::Both) {
    const auto slot = slot_map(*prev, cur, cfg.output_variant, tax);
    const std::size_t n_kd = masked_count(labels, n);
    if (n_kd > 0) {
      const double inv = 1.0 / static_cast<double>(n_kd);
      // The gradient below is d(kd_mean)/dlogits scaled by lambda, matching
      // total = ce + lambda * kd.
      const double sum = output_kd_core(*prev, cur, slot, labels, dlogits,
                                        dlogits ? cfg.lambda * inv : 0.0);
      out.kd_part += sum * inv;
    }
  }
  if (cfg.kd_mode == KdMode::FeatureL1 || cfg.kd_mode == KdMode::FeatureL2 ||
      cfg.kd_mode == KdMode::Both) {
    const int p = cfg.kd_mode == KdMode::FeatureL1 ? 1 : 2;
    // In Both mode the feature term uses the L2 norm.
    out.kd_part += feature_kd(prev->features, cur.features, p);
    if (dfeatures && n > 0) {
      feature_kd_grad(prev->features, cur.features, p,
                      cfg.lambda / static_cast<double>(n), *dfeatures);
    }
  }

  out.total = out.ce_part + cfg.lambda * out.kd_part;
  return out;
}

LossValue combined(const Prediction& cur, const Prediction* prev,
                   std::span<const ClassId> labels, const LossConfig& cfg,
                   const ClassTaxonomy* tax) {
  return combined_with_grad(cur, prev, labels, cfg, tax, nullptr, nullptr);
}

std::pair<LossValue, ParamGrads> gradients(const SegmenterState& state,
                                           const SegmenterState* prev_state,
                                           std::span<const PointXYZI> points,
                                           std::span<const ClassId> labels,
                                           const LossConfig& cfg,
                                           const ClassTaxonomy* tax) {
  ForwardCache cache;
  const Prediction cur = forward(state, points, &cache);
  Prediction prev;
  if (prev_state) prev = forward(*prev_state, points);

  Mat dlogits, dfeatures;
  const bool wants_features = cfg.kd_mode == KdMode::FeatureL1 ||
                              cfg.kd_mode == KdMode::FeatureL2 ||
                              cfg.kd_mode == KdMode::Both;
  const LossValue value = combined_with_grad(
      cur, prev_state ? &prev : nullptr, labels, cfg, tax, &dlogits,
      wants_features ? &dfeatures : nullptr);
  if (!std::isfinite(value.total))
    throw NumericError("non-finite loss value");
  ParamGrads grads = backward(state, cache, dlogits,
                              wants_features ? &dfeatures : nullptr);
  return {value, std::move(grads)};
}

}  // namespace incseg
