#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "incseg/experiment.hpp"

using namespace incseg;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const char* tag) {
  const fs::path p = fs::temp_directory_path() / "incseg_tests" / tag;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// Small synthetic dataset shared by the end-to-end cases.
const fs::path& shared_dataset() {
  static const fs::path manifest = [] {
    const fs::path dir = fresh_dir("exp_ds");
    SynthConfig cfg = default_synth_config(builtin_synth8());
    cfg.seed = 404;
    cfg.scans_per_group = 9;
    cfg.points_per_scan = 100;
    cfg.val_scans = 4;
    const auto groups = generate_synthetic(builtin_synth8(), cfg);
    return write_synth_dataset(builtin_synth8(), cfg, groups, dir);
  }();
  return manifest;
}

ExperimentSpec base_spec(const char* out_tag) {
  ExperimentSpec spec;
  spec.taxonomy = builtin_synth8();
  spec.scenario = ScenarioKind::Disjoint;
  spec.strategy = Strategy::FineTune;
  spec.train.seed = 12;
  spec.dataset.synth_manifest = shared_dataset();
  spec.out_dir = fresh_dir(out_tag);
  return spec;
}

}  // namespace

TEST_CASE("lr schedule endpoints, midpoint and carry") {
  TrainConfig cfg;
  CHECK(lr_at(cfg, 0, 0, 10, cfg.initial_lr) == 0.01);
  CHECK(lr_at(cfg, 0, 10, 10, cfg.initial_lr) == 0.0);
  const double mid = lr_at(cfg, 0, 5, 10, cfg.initial_lr);
  CHECK(std::fabs(mid - 0.01 * std::pow(0.5, 0.95)) < 1e-12);

  // Non-increasing within a step.
  double last = 1e9;
  for (std::uint64_t t = 0; t <= 10; ++t) {
    const double v = lr_at(cfg, 0, t, 10, cfg.initial_lr);
    CHECK(v <= last);
    last = v;
  }

  // Cross-step continuity: the next step resumes at the previous step's
  // final value.
  const double carry = lr_at(cfg, 0, 9, 10, cfg.initial_lr);
  CHECK(lr_at(cfg, 1, 0, 6, carry) == carry);

  CHECK_THROWS_AS((void)lr_at(cfg, 0, 0, 0, 0.01), ConfigError);
  CHECK_THROWS_AS((void)lr_at(cfg, 0, 11, 10, 0.01), ConfigError);
}

TEST_CASE("experiment spec parsing and validation") {
  const std::string good = R"({
    "taxonomy": "synth8",
    "scenario": "disjoint",
    "strategy": "kd",
    "loss": {"lambda": 0.5, "kd_mode": "output"},
    "train": {"seed": 7},
    "dataset": {"synth_manifest": "/tmp/m.json"},
    "out": "/tmp/out"
  })";
  const auto spec = parse_experiment_spec(good, "inline");
  CHECK(spec.scenario == ScenarioKind::Disjoint);
  CHECK(spec.strategy == Strategy::Kd);
  CHECK(spec.loss.lambda == 0.5);
  CHECK(spec.train.seed == 7);
  CHECK(spec.train.batch_size == 3);
  CHECK(spec.train.initial_lr == 0.01);

  // Inpainting needs a background-producing scenario.
  const std::string bad = R"({
    "taxonomy": "synth8",
    "scenario": "sequential",
    "strategy": "self-inpaint",
    "dataset": {"synth_manifest": "/tmp/m.json"},
    "out": "/tmp/out"
  })";
  CHECK_THROWS_AS((void)parse_experiment_spec(bad, "inline"), ConfigError);

  CHECK_THROWS_AS((void)parse_experiment_spec("{", "inline"), ConfigError);
}

TEST_CASE("fine-tune run: head growth, reports, step-0 shape") {
  auto spec = base_spec("exp_ft");
  const auto reports = run_experiment(spec);
  REQUIRE(reports.size() == 3);

  // Step 0 reports only its own group's mean.
  CHECK(reports[0].miou_steps.size() == 1);
  CHECK(reports[2].miou_steps.size() == 3);

  // Head growth follows the cumulative class sets; earlier class lists are
  // prefixes of later ones.
  const auto s0 = load_checkpoint(spec.out_dir / "checkpoints" / "step0.ckpt");
  const auto s1 = load_checkpoint(spec.out_dir / "checkpoints" / "step1.ckpt");
  const auto s2 = load_checkpoint(spec.out_dir / "checkpoints" / "step2.ckpt");
  CHECK(s0.class_list.size() == 4);  // background + 3
  CHECK(s1.class_list.size() == 6);
  CHECK(s2.class_list.size() == 9);
  CHECK(std::equal(s0.class_list.begin(), s0.class_list.end(),
                   s1.class_list.begin()));
  CHECK(std::equal(s1.class_list.begin(), s1.class_list.end(),
                   s2.class_list.begin()));

  // Run log exists and records per-epoch rates.
  std::ifstream log(spec.out_dir / "run.log");
  REQUIRE(log.good());
  std::string line;
  std::size_t lr_lines = 0;
  double last_lr = 1e9;
  bool non_increasing = true;
  while (std::getline(log, line)) {
    const auto at = line.find(" lr ");
    if (at == std::string::npos) continue;
    ++lr_lines;
    const double lr = std::stod(line.substr(at + 4));
    if (lr > last_lr + 1e-15 && line.find("epoch 0 ") == std::string::npos)
      non_increasing = false;
    last_lr = lr;
  }
  CHECK(lr_lines == 2 * (3 + 2 + 3));
  CHECK(non_increasing);

  // Summaries exist.
  CHECK(fs::exists(spec.out_dir / "summary.csv"));
  CHECK(fs::exists(spec.out_dir / "summary.txt"));
  CHECK(fs::exists(spec.out_dir / "per_class_final.csv"));

  // Report JSON regenerates identically from its confusion matrix.
  const auto text =
      read_text_file(spec.out_dir / "reports" / "step2.json");
  const auto rep = report_from_json(text, "step2");
  const auto again = make_report(rep.confusion, spec.taxonomy, 2, false);
  CHECK(again.miou == rep.miou);
  CHECK(again.pa == rep.pa);
}

TEST_CASE("identical spec and seed give bit-identical artifacts") {
  auto spec_a = base_spec("exp_det_a");
  auto spec_b = base_spec("exp_det_b");
  (void)run_experiment(spec_a);
  (void)run_experiment(spec_b);

  for (const char* rel :
       {"checkpoints/step0.ckpt", "checkpoints/step1.ckpt",
        "checkpoints/step2.ckpt", "reports/step0.json", "reports/step1.json",
        "reports/step2.json", "summary.csv", "summary.txt",
        "steps/step1/labels/s1_000000.label"}) {
    CAPTURE(rel);
    CHECK(read_file_bytes(spec_a.out_dir / rel) ==
          read_file_bytes(spec_b.out_dir / rel));
  }
}

TEST_CASE("kd and inpaint strategies run end to end") {
  auto kd = base_spec("exp_kd");
  kd.strategy = Strategy::Kd;
  kd.loss.kd_mode = KdMode::Output;
  const auto kd_reports = run_experiment(kd);
  REQUIRE(kd_reports.size() == 3);

  auto ip = base_spec("exp_ip");
  ip.strategy = Strategy::SelfInpaint;
  ip.inpaint = {0.2, 0.7};
  const auto ip_reports = run_experiment(ip);
  REQUIRE(ip_reports.size() == 3);
  // Steps beyond the first carry inpainting statistics.
  CHECK(ip_reports[1].inpaint_candidates > 0);
  CHECK(ip_reports[0].inpaint_candidates == 0);
}

TEST_CASE("coarse-to-fine run uses hierarchy levels") {
  const fs::path dir = fresh_dir("exp_c2f_ds");
  // Synthetic data labeled with the fine classes of the three-level
  // hierarchy taxonomy.
  const auto& tax = builtin_c2f();
  SynthConfig cfg;
  cfg.seed = 11;
  cfg.scans_per_group = 6;
  cfg.points_per_scan = 150;
  cfg.val_scans = 3;
  cfg.class_mix.assign(tax.num_classes(), 0.0);
  const auto& fine = tax.fine_classes();
  for (std::size_t i = 0; i < fine.size(); ++i)
    cfg.class_mix[fine[i] - 1] = 1.0 / static_cast<double>(fine.size());
  double acc = 0;
  for (std::size_t i = 0; i + 1 < fine.size(); ++i)
    acc += cfg.class_mix[fine[i] - 1];
  cfg.class_mix[fine.back() - 1] = 1.0 - acc;
  cfg.primitives.assign(tax.num_classes(), PrimitiveKind::Blob);
  const auto groups = generate_synthetic(tax, cfg);
  const auto manifest = write_synth_dataset(tax, cfg, groups, dir);

  ExperimentSpec spec;
  spec.taxonomy = tax;
  spec.scenario = ScenarioKind::CoarseToFine;
  spec.strategy = Strategy::FineTune;
  spec.train.seed = 3;
  spec.dataset.synth_manifest = manifest;
  spec.out_dir = fresh_dir("exp_c2f");
  const auto reports = run_experiment(spec);
  REQUIRE(reports.size() == 3);
  CHECK(reports[0].eval_classes.size() == 3);
  CHECK(reports[1].eval_classes.size() == 6);
  CHECK(reports[2].eval_classes.size() == 19);
  const auto s2 = load_checkpoint(spec.out_dir / "checkpoints" / "step2.ckpt");
  CHECK(s2.class_list.size() == 28);
}

TEST_CASE("single-step taxonomy degenerates to offline training") {
  const auto tax = parse_taxonomy_json(
      R"({"names":["ring-a","post-b","crate-c"],
          "steps":[["ring-a","post-b","crate-c"]]})",
      "inline");
  const fs::path dir = fresh_dir("exp_baseline_ds");
  SynthConfig cfg = default_synth_config(tax);
  cfg.seed = 77;
  cfg.scans_per_group = 12;
  cfg.points_per_scan = 120;
  cfg.val_scans = 6;
  const auto groups = generate_synthetic(tax, cfg);
  REQUIRE(groups.size() == 2);  // one training group + validation

  ExperimentSpec spec;
  spec.taxonomy = tax;
  spec.scenario = ScenarioKind::Sequential;
  spec.strategy = Strategy::FineTune;
  spec.train.seed = 6;
  spec.dataset.synth_manifest = write_synth_dataset(tax, cfg, groups, dir);
  spec.out_dir = fresh_dir("exp_baseline");
  const auto reports = run_experiment(spec);
  REQUIRE(reports.size() == 1);
  CHECK(reports[0].eval_classes.size() == 3);
  // Offline training on separable synthetic classes should be accurate.
  CHECK(reports[0].miou > 0.9);
}

TEST_CASE("evaluate restricts predictions to the evaluated classes") {
  auto spec = base_spec("exp_eval");
  const auto data = open_dataset(spec);
  const auto active = active_classes_for(ScenarioKind::Disjoint,
                                         spec.taxonomy, 0);
  const Standardizer stdz = fit_standardizer(data.groups[0], data.map);
  const auto state = init_segmenter(stdz, active, 5);
  const auto rep = evaluate(state, spec.taxonomy, ScenarioKind::Disjoint, 0,
                            data.validation, data.map);
  // Only step-0 classes are scored; the matrix carries background as well.
  CHECK(rep.eval_classes == spec.taxonomy.cumulative_classes(0));
  CHECK(rep.confusion.classes().front() == kBackground);
  CHECK(rep.miou_steps.size() == 1);
}
