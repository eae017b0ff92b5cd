#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "incseg/common.hpp"
#include "incseg/ingest.hpp"

namespace incseg {

// Per-point input features: (x, y, z, planar range, height, intensity),
// standardized with constants frozen when the model is created.
inline constexpr std::size_t kInputDim = 6;
inline constexpr std::size_t kHidden1 = 64;
inline constexpr std::size_t kFeatureDim = 32;

struct Standardizer {
  std::array<double, kInputDim> mean{};
  std::array<double, kInputDim> stdev{};

  void raw_features(const PointXYZI& p, double out[kInputDim]) const;
  void apply(const PointXYZI& p, double out[kInputDim]) const;
};

// Means/stds over all points of the given scans (typically the first step's
// training data; the constants never change afterwards so the feature space
// stays comparable across steps).
Standardizer fit_standardizer(std::span<const ScanRecord> scans,
                              const LearningMap& map);

// One parameter tensor with its Adam moment estimates.
struct ParamTensor {
  std::size_t rows = 0, cols = 0;  // cols == 1 for bias vectors
  std::vector<double> value;
  std::vector<double> m;
  std::vector<double> v;

  void init(std::size_t r, std::size_t c) {
    rows = r;
    cols = c;
    value.assign(r * c, 0.0);
    m.assign(r * c, 0.0);
    v.assign(r * c, 0.0);
  }
  std::size_t size() const { return value.size(); }
};

// Pointwise segmenter: two fully connected layers (64, 32) with a smooth
// sigmoid-shaped activation x/sqrt(1+x^2), then an affine head with one row
// per class in class_list. class_list only ever grows, by appending.
struct SegmenterState {
  Standardizer stdz;
  std::vector<ClassId> class_list;
  ParamTensor w1, b1, w2, b2, wh, bh;
  std::uint64_t adam_t = 0;
  std::uint64_t seed = 0;
  std::uint32_t step = 0;       // learning step that produced this state
  std::string scenario;         // echo for checkpoints/reports

  int row_of(ClassId c) const;  // -1 when absent
  std::size_t num_params() const;
  // Flat parameter access in a fixed tensor order, for optimizer-independent
  // inspection and the finite-difference tests.
  double get_param(std::size_t i) const;
  void set_param(std::size_t i, double value);
};

SegmenterState init_segmenter(const Standardizer& stdz,
                              std::vector<ClassId> class_list,
                              std::uint64_t seed);

struct ForwardCache {
  Mat x;     // standardized inputs, n x 6
  Mat pre1;  // n x 64
  Mat h1;    // n x 64
  Mat pre2;  // n x 32
};

struct Prediction {
  std::vector<ClassId> class_list;
  Mat logits;    // n x C
  Mat softmax;   // n x C
  Mat features;  // n x 32
};

// Deterministic and per-point independent. `cache` is only needed when the
// result feeds backward().
Prediction forward(const SegmenterState& state,
                   std::span<const PointXYZI> points,
                   ForwardCache* cache = nullptr);

struct ParamGrads {
  Mat w1, w2, wh;
  std::vector<double> b1, b2, bh;
};

// Exact gradients of a scalar loss given its derivatives with respect to the
// head logits and (optionally) the encoder features. Accumulation over points
// is sequential, so results are reproducible bit for bit.
ParamGrads backward(const SegmenterState& state, const ForwardCache& cache,
                    const Mat& dlogits, const Mat* dfeatures);

// Standard bias-corrected Adam over all tensors; increments adam_t.
void adam_step(SegmenterState& state, const ParamGrads& grads, double lr,
               double beta1, double beta2, double eps);

// Copies encoder and existing head rows bit-exactly (moments included) and
// appends one seeded row per new class, zero-mean with scale 1e-2.
SegmenterState expand_head(const SegmenterState& state,
                           std::span<const ClassId> new_classes);

void save_checkpoint(const SegmenterState& state,
                     const std::filesystem::path& path);
SegmenterState load_checkpoint(const std::filesystem::path& path);

}  // namespace incseg
