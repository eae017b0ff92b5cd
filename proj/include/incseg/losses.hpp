#pragma once

#include <span>
#include <string>
#include <utility>

#include "incseg/common.hpp"
#include "incseg/model.hpp"
#include "incseg/taxonomy.hpp"

namespace incseg {

enum class KdMode { None, Output, FeatureL1, FeatureL2, Both };
enum class OutputVariant { Standard, JoinedUnknowns, CoarseSum };

KdMode parse_kd_mode(const std::string& name);
const char* kd_mode_name(KdMode mode);
OutputVariant parse_output_variant(const std::string& name);
const char* output_variant_name(OutputVariant v);

struct LossConfig {
  double lambda = 1.0;
  KdMode kd_mode = KdMode::None;
  OutputVariant output_variant = OutputVariant::Standard;
};

struct LossValue {
  double total = 0.0;
  double ce_part = 0.0;
  double kd_part = 0.0;
  // Points that entered the cross-entropy mean; a zero here flags a batch
  // with no labeled points (the loss is then 0 by definition).
  std::size_t ce_points = 0;
};

// Mean over non-unlabeled points of -log softmax[true class]. Softmax inputs
// to the log are clamped to >= 1e-12. Labels must be in pred.class_list.
double cross_entropy(const Prediction& pred, std::span<const ClassId> labels,
                     std::size_t* contributing = nullptr);

// Soft-target cross-entropy from a frozen previous model to the current one,
// mean over all points. prev.class_list must be a prefix of cur.class_list;
// the previous model assigns zero mass to the newer classes, so only its own
// classes contribute.
//   Standard:        current probabilities are compared slot by slot.
//   JoinedUnknowns:  current probabilities of classes unknown to the previous
//                    model are folded into its background slot first.
//   CoarseSum:       current probabilities are aggregated onto the previous
//                    model's classes along the hierarchy before the log.
double output_kd(const Prediction& prev, const Prediction& cur,
                 OutputVariant variant, const ClassTaxonomy* tax = nullptr);

// Mean over points of the per-point Lp distance (p in {1,2}) between the two
// feature matrices. L2 is the Euclidean norm.
double feature_kd(const Mat& prev_features, const Mat& cur_features, int p);

// total = ce + lambda * kd. Both KD levels can be combined, in which case
// they are summed into kd_part before the lambda scaling. The output-level
// term skips unlabeled points exactly like the cross-entropy; the feature
// term has no labels and averages over every point.
LossValue combined(const Prediction& cur, const Prediction* prev,
                   std::span<const ClassId> labels, const LossConfig& cfg,
                   const ClassTaxonomy* tax = nullptr);

// Same value as combined(); additionally writes the derivative of `total`
// with respect to the current logits and, for feature-level KD, the current
// features.
LossValue combined_with_grad(const Prediction& cur, const Prediction* prev,
                             std::span<const ClassId> labels,
                             const LossConfig& cfg, const ClassTaxonomy* tax,
                             Mat* dlogits, Mat* dfeatures);

// Forward + loss + exact parameter gradients in one call. The previous model
// is evaluated on the same points, frozen.
std::pair<LossValue, ParamGrads> gradients(const SegmenterState& state,
                                           const SegmenterState* prev_state,
                                           std::span<const PointXYZI> points,
                                           std::span<const ClassId> labels,
                                           const LossConfig& cfg,
                                           const ClassTaxonomy* tax = nullptr);

}  // namespace incseg
