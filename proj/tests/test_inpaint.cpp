#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "incseg/experiment.hpp"
#include "incseg/inpaint.hpp"

using namespace incseg;
namespace fs = std::filesystem;

namespace {

Prediction make_pred(std::vector<ClassId> classes,
                     std::vector<std::vector<double>> rows) {
  Prediction p;
  p.class_list = std::move(classes);
  p.softmax = Mat(rows.size(), p.class_list.size());
  p.logits = Mat(rows.size(), p.class_list.size());
  p.features = Mat(rows.size(), kFeatureDim);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < p.class_list.size(); ++j)
      p.softmax.at(i, j) = rows[i][j];
  return p;
}

}  // namespace

TEST_CASE("rho thresholds are strict") {
  const std::vector<double> confident{0.9, 0.05, 0.05};
  CHECK(rho(confident, {0.2, 0.7}) == 1);

  // top1 can never strictly exceed 1.
  CHECK(rho(confident, {0.2, 1.0}) == 0);
  const std::vector<double> certain{1.0, 0.0, 0.0};
  CHECK(rho(certain, {0.0, 1.0}) == 0);

  // Margin 0.05 is not strictly greater than 0.2.
  const std::vector<double> close{0.45, 0.40, 0.15};
  CHECK(rho(close, {0.2, 0.0}) == 0);

  // Ties fail the strict margin at tau1 = 0.
  const std::vector<double> tie{0.5, 0.5};
  CHECK(rho(tie, {0.0, 0.0}) == 0);

  const std::vector<double> junk{0.9, 0.3};
  CHECK_THROWS_AS((void)rho(junk, {0.2, 0.7}), NumericError);
}

TEST_CASE("inpaint_labels rewrites only confident background points") {
  // prev over [background, 4, 5].
  const auto pred = make_pred({kBackground, 4, 5}, {
                                     {0.05, 0.9, 0.05},   // confident class 4
                                     {0.05, 0.05, 0.9},   // confident class 5
                                     {0.34, 0.33, 0.33},  // unconfident
                                     {0.9, 0.05, 0.05},   // confident background
                                     {0.05, 0.9, 0.05},   // non-candidate
                                     {0.05, 0.05, 0.9},   // unlabeled stays
                                 });
  const std::vector<ClassId> labels{kBackground, kBackground, kBackground,
                                    kBackground, 7,           kUnlabeled};
  InpaintStats stats;
  const auto out = inpaint_labels(labels, pred, {0.2, 0.7}, stats);
  CHECK(out == std::vector<ClassId>{4, 5, kBackground, kBackground, 7,
                                    kUnlabeled});
  CHECK(stats.candidates == 4);
  CHECK(stats.inpainted == 2);
  CHECK(stats.per_class.at(4) == 1);
  CHECK(stats.per_class.at(5) == 1);

  // Inpainted labels always come from the previous model's classes.
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (out[i] != labels[i]) {
      bool known = false;
      for (ClassId c : pred.class_list) known |= (c == out[i]);
      CHECK(known);
    }
  }

  // tau2 = 1 inpaints nothing.
  InpaintStats none;
  CHECK(inpaint_labels(labels, pred, {0.0, 1.0}, none) == labels);
  CHECK(none.inpainted == 0);

  // tau = (0,0): every background point with strictly distinct top-2 values
  // fires, but a confident background prediction leaves the label in place.
  InpaintStats all;
  const auto loose = inpaint_labels(labels, pred, {0.0, 0.0}, all);
  CHECK(all.inpainted == 2);
  CHECK(loose[2] == kBackground);  // argmax of (0.34, 0.33, 0.33) is background
  CHECK(loose[3] == kBackground);
}

TEST_CASE("inpainted count is monotone in the thresholds") {
  Rng rng(7);
  std::vector<std::vector<double>> rows;
  std::vector<ClassId> labels;
  for (int i = 0; i < 300; ++i) {
    double a = rng.uniform() + 1e-3, b = rng.uniform() + 1e-3,
           c = rng.uniform() + 1e-3;
    const double s = a + b + c;
    rows.push_back({a / s, b / s, c / s});
    labels.push_back(kBackground);
  }
  const auto pred = make_pred({kBackground, 1, 2}, rows);

  std::uint64_t prev_count = ~0ull;
  for (double tau1 : {0.0, 0.1, 0.2, 0.4, 0.8, 1.0}) {
    InpaintStats stats;
    (void)inpaint_labels(labels, pred, {tau1, 0.0}, stats);
    CHECK(stats.inpainted <= prev_count);
    prev_count = stats.inpainted;
  }
  prev_count = ~0ull;
  for (double tau2 : {0.0, 0.3, 0.5, 0.7, 0.9, 1.0}) {
    InpaintStats stats;
    (void)inpaint_labels(labels, pred, {0.0, tau2}, stats);
    CHECK(stats.inpainted <= prev_count);
    prev_count = stats.inpainted;
  }
}

TEST_CASE("inpaint_step rewrites files and widens the active set") {
  const fs::path dir = fs::temp_directory_path() / "incseg_tests" / "inpaint";
  fs::remove_all(dir);
  const auto& tax = builtin_synth8();
  SynthConfig cfg = default_synth_config(tax);
  cfg.seed = 77;
  cfg.scans_per_group = 3;
  cfg.points_per_scan = 120;
  cfg.val_scans = 1;
  const auto groups = generate_synthetic(tax, cfg);
  const auto data =
      open_synth_dataset(write_synth_dataset(tax, cfg, groups, dir / "ds"), tax);

  const auto step1 =
      build_step(ScenarioKind::Disjoint, tax, 1, data, dir / "plan");

  // A step-0 disjoint model acts as the previous model.
  const auto active0 = active_classes_for(ScenarioKind::Disjoint, tax, 0);
  const Standardizer stdz = fit_standardizer(data.groups[0], data.map);
  const auto prev = init_segmenter(stdz, active0, 9);

  auto [painted, stats] = inpaint_step(step1, prev, {0.0, 0.0});
  CHECK(stats.candidates > 0);
  CHECK(stats.inpainted <= stats.candidates);
  for (const auto& e : painted.scans) {
    CHECK(e.step_label.extension() == ".ip");
    CHECK(fs::exists(e.step_label));
  }

  // Active classes now span the previous model's outputs too.
  std::set<ClassId> active(painted.active_classes.begin(),
                           painted.active_classes.end());
  for (ClassId c : active0) CHECK(active.count(c) == 1);
  for (ClassId c : tax.step_classes(1)) CHECK(active.count(c) == 1);

  // Non-background points are untouched; changed labels come from the
  // previous model's classes; the stats count exactly the changes.
  std::uint64_t changed = 0;
  for (std::size_t s = 0; s < step1.scans.size(); ++s) {
    const auto before = read_label_file(step1.scans[s].step_label, data.map);
    const auto after = read_label_file(painted.scans[s].step_label, data.map);
    REQUIRE(before.size() == after.size());
    for (std::size_t i = 0; i < before.size(); ++i) {
      if (before[i] != kBackground) {
        CHECK(after[i] == before[i]);
      } else if (after[i] != before[i]) {
        ++changed;
        CHECK(prev.row_of(after[i]) >= 0);
      }
    }
  }
  CHECK(changed == stats.inpainted);

  CHECK_THROWS_AS((void)inpaint_step(
                      build_step(ScenarioKind::Disjoint, tax, 0, data,
                                 dir / "plan0"),
                      prev, {0.2, 0.7}),
                  ConfigError);
}
