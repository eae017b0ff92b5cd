#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "incseg/common.hpp"
#include "incseg/ingest.hpp"
#include "incseg/taxonomy.hpp"

namespace incseg {

enum class ScenarioKind {
  Sequential,
  SequentialMasked,
  Disjoint,
  Overlapped,
  CoarseToFine,
};

ScenarioKind parse_scenario(const std::string& name);
const char* scenario_name(ScenarioKind kind);

// Per-point label rewrite for step k. `truth` holds fine ground-truth ids
// (no sentinels). For a true class c:
//   Sequential:        c if c is in C_{0..k}, else unlabeled
//   Sequential masked: c if c in C_k; everything else unlabeled
//   Disjoint:          c if c in C_k; past classes background, future unlabeled
//   Overlapped:        c if c in C_k; everything else background
//   Coarse-to-fine:    ancestor of c at hierarchy level k
std::vector<ClassId> transform_labels(ScenarioKind kind,
                                      const ClassTaxonomy& tax, std::size_t k,
                                      std::span<const ClassId> truth);

// Labels a model trained at step k must predict. Includes kBackground for
// the kinds whose transform emits it (disjoint, overlapped).
std::vector<ClassId> active_classes_for(ScenarioKind kind,
                                        const ClassTaxonomy& tax,
                                        std::size_t k);

struct StepEntry {
  ScanId id;
  std::filesystem::path bin;
  std::filesystem::path truth_label;
  std::filesystem::path step_label;  // transformed labels (binary, uint32)
};

struct StepDataset {
  std::size_t step = 0;
  ScenarioKind kind = ScenarioKind::Sequential;
  std::vector<ClassId> active_classes;
  std::vector<StepEntry> scans;
};

// Applies the transform to every scan of the step's group (for Overlapped:
// every scan of the dataset containing at least one point of C_k) and
// materializes the rewritten labels under out_dir. Also writes
// out_dir/step<k>.json describing the result.
StepDataset build_step(ScenarioKind kind, const ClassTaxonomy& tax,
                       std::size_t k, const DatasetIndex& data,
                       const std::filesystem::path& out_dir);

StepDataset load_step_manifest(const std::filesystem::path& manifest_path);
void save_step_manifest(const StepDataset& step,
                        const std::filesystem::path& manifest_path);

struct StepSummary {
  std::size_t step = 0;
  std::size_t scans = 0;
  std::uint64_t points = 0;
  std::uint64_t labeled_points = 0;  // label != kUnlabeled after transform
  // Ground-truth class counts within the step's group (before transform).
  std::vector<std::uint64_t> truth_class_counts;  // by class id - 1
  double labeled_fraction() const {
    return points == 0 ? 0.0
                       : static_cast<double>(labeled_points) /
                             static_cast<double>(points);
  }
};

struct PlanSummary {
  std::vector<StepSummary> steps;
  // truth_class_counts summed over groups, for the normalized histogram.
  std::vector<std::uint64_t> dataset_class_counts;
};

PlanSummary summarize_plan(ScenarioKind kind, const ClassTaxonomy& tax,
                           const DatasetIndex& data);
std::string plan_summary_table(const PlanSummary& summary,
                               const ClassTaxonomy& tax);

}  // namespace incseg
