#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "incseg/common.hpp"
#include "incseg/taxonomy.hpp"

namespace incseg {

struct ScanId {
  std::string sequence;
  std::string frame;

  std::string str() const { return sequence + "/" + frame; }
  auto operator<=>(const ScanId&) const = default;
};

struct PointXYZI {
  float x = 0, y = 0, z = 0, intensity = 0;
};

struct LabeledCloud {
  ScanId id;
  std::vector<PointXYZI> points;
  std::vector<ClassId> labels;  // ClassId or kUnlabeled, one per point
};

// raw uint16 semantic id -> learning id. In strict mode an unmapped raw id is
// an error; in lenient mode it becomes kUnlabeled and is counted.
class LearningMap {
 public:
  LearningMap() = default;
  LearningMap(std::unordered_map<std::uint16_t, ClassId> table, bool strict);

  ClassId apply(std::uint16_t raw) const;
  bool strict() const { return strict_; }
  std::uint64_t unmapped_count() const { return unmapped_; }
  const std::unordered_map<std::uint16_t, ClassId>& table() const {
    return table_;
  }

 private:
  std::unordered_map<std::uint16_t, ClassId> table_;
  bool strict_ = true;
  mutable std::uint64_t unmapped_ = 0;
};

// Identity map over the taxonomy's ids plus the sentinels; used for datasets
// whose label files already store learning ids.
LearningMap identity_learning_map(const ClassTaxonomy& tax);
// JSON object raw-id(string) -> class-name, resolved against `tax`.
LearningMap load_learning_map(const std::filesystem::path& path,
                              const ClassTaxonomy& tax, bool strict);

// Raw binary scan: 4 little-endian float32 per point (x, y, z, remission).
// Raw binary labels: one little-endian uint32 per point; low 16 bits are the
// semantic id, high 16 bits an instance id that is discarded.
LabeledCloud read_scan(const std::filesystem::path& bin_path,
                       const std::filesystem::path& label_path,
                       const LearningMap& map);
void write_scan(const std::filesystem::path& bin_path,
                const std::filesystem::path& label_path,
                const LabeledCloud& cloud);
std::vector<ClassId> read_label_file(const std::filesystem::path& label_path,
                                     const LearningMap& map);
void write_label_file(const std::filesystem::path& label_path,
                      std::span<const ClassId> labels);

struct ScanRecord {
  ScanId id;
  std::filesystem::path bin;
  std::filesystem::path label;
};

// Scans of the requested sequences under root/sequences/<id>/{velodyne,labels},
// ordered lexicographically by (sequence, frame). A scan without a matching
// label file is an error.
std::vector<ScanRecord> enumerate_split(
    const std::filesystem::path& dataset_root,
    const std::vector<std::string>& sequences);

// A dataset resolved into per-step groups plus a validation split.
struct DatasetIndex {
  std::vector<std::vector<ScanRecord>> groups;
  std::vector<ScanRecord> validation;
  LearningMap map;
  std::filesystem::path root;
};

DatasetIndex open_real_dataset(const std::filesystem::path& root,
                               const std::vector<std::vector<std::string>>& groups,
                               const std::vector<std::string>& validation,
                               const LearningMap& map);
DatasetIndex open_synth_dataset(const std::filesystem::path& manifest_path,
                                const ClassTaxonomy& tax);

// Synthetic scene generation. Scenes are composed from four analytic
// primitives; each class must be assigned one (by name for the known class
// vocabulary, or explicitly in the config).
enum class PrimitiveKind { Annulus, Box, Pole, Blob };

struct SynthConfig {
  std::uint64_t seed = 1;
  std::size_t scans_per_group = 1;
  std::size_t points_per_scan = 1;
  std::size_t val_scans = 0;  // 0 = same as scans_per_group
  double home_boost = 3.0;    // weight multiplier for a step's own classes
  std::vector<double> class_mix;           // by class id, 1-based -> index id-1
  std::vector<PrimitiveKind> primitives;   // by class id, 1-based -> index id-1
};

SynthConfig parse_synth_config(const std::string& text,
                               const ClassTaxonomy& tax,
                               const std::string& origin);
SynthConfig default_synth_config(const ClassTaxonomy& tax);

// Deterministic in `cfg.seed`. Returned groups: one per taxonomy step, then
// one validation group (unskewed class mix). Labels are complete: kUnlabeled
// never appears.
std::vector<std::vector<LabeledCloud>> generate_synthetic(
    const ClassTaxonomy& tax, const SynthConfig& cfg);

// Persist a generated dataset in the binary scan/label formats plus a
// manifest.json, laid out like sequences/s<k>/{velodyne,labels}. Returns the
// manifest path.
std::filesystem::path write_synth_dataset(
    const ClassTaxonomy& tax, const SynthConfig& cfg,
    const std::vector<std::vector<LabeledCloud>>& groups,
    const std::filesystem::path& out_dir);

}  // namespace incseg
