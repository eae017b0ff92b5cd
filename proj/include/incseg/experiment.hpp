#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "incseg/common.hpp"
#include "incseg/ingest.hpp"
#include "incseg/inpaint.hpp"
#include "incseg/losses.hpp"
#include "incseg/metrics.hpp"
#include "incseg/model.hpp"
#include "incseg/scenario.hpp"
#include "incseg/taxonomy.hpp"

namespace incseg {

struct TrainConfig {
  double initial_lr = 0.01;
  double lr_power = 0.95;
  std::size_t batch_size = 3;  // scans per optimizer update
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t seed = 1;
};

// Polynomial decay within a step: lr_carry * (1 - t/T)^power. The schedule
// ticks once per epoch (t = epoch index, T = epoch count); the carry for the
// next step is the last epoch's value, so the rate is continuous across step
// boundaries. The run log records the convention and every value used.
double lr_at(const TrainConfig& cfg, std::size_t k, std::uint64_t t,
             std::uint64_t total, double lr_carry);

enum class Strategy { FineTune, Kd, SelfInpaint, KdPlusInpaint };
Strategy parse_strategy(const std::string& name);
const char* strategy_name(Strategy s);

struct DatasetSource {
  // Exactly one of synth_manifest / real_root is set.
  std::filesystem::path synth_manifest;
  std::filesystem::path real_root;
  std::vector<std::vector<std::string>> groups;  // real data only
  std::vector<std::string> validation;           // real data only
  std::filesystem::path learning_map;            // real data only
  bool strict_map = true;
};

struct ExperimentSpec {
  ClassTaxonomy taxonomy;
  ScenarioKind scenario = ScenarioKind::Sequential;
  Strategy strategy = Strategy::FineTune;
  LossConfig loss;
  InpaintConfig inpaint;
  TrainConfig train;
  DatasetSource dataset;
  std::filesystem::path out_dir;
};

ExperimentSpec parse_experiment_spec(const std::string& text,
                                     const std::string& origin);
DatasetIndex open_dataset(const ExperimentSpec& spec);

// Forward pass over held-out scans, argmax restricted to the classes under
// evaluation (plus background when the model has a background row; background
// predictions land in the matrix but are never scored as a class).
StepReport evaluate(const SegmenterState& state, const ClassTaxonomy& tax,
                    ScenarioKind kind, std::size_t k,
                    std::span<const ScanRecord> scans, const LearningMap& map);

struct StepRunResult {
  SegmenterState state;
  StepReport report;
  double lr_carry = 0.0;
};

// One incremental step: expands the head from prev (k > 0), applies the
// strategy (inpainting before training, distillation during), trains
// 2*|C_k| epochs over the materialized step data with seeded shuffling, then
// evaluates on the validation split and persists checkpoint + report.
StepRunResult run_step(const ExperimentSpec& spec, std::size_t k,
                       const SegmenterState* prev, double lr_carry,
                       const DatasetIndex& data, std::ostream* log);

// All K steps, threading model state and learning-rate carry. Emits
// summary.csv / summary.txt in the cross-step layout plus a per-class CSV of
// the final step.
std::vector<StepReport> run_experiment(const ExperimentSpec& spec);

}  // namespace incseg
