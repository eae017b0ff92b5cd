#include <doctest.h>

#include <filesystem>
#include <set>

#include "incseg/ingest.hpp"
#include "incseg/scenario.hpp"
#include "incseg/taxonomy.hpp"

using namespace incseg;
namespace fs = std::filesystem;

namespace {

std::vector<ClassId> all_fine_labels(const ClassTaxonomy& tax) {
  std::vector<ClassId> v;
  for (ClassId c = 1; c <= tax.num_classes(); ++c) {
    if (!tax.has_hierarchy() || tax.is_fine_class(c)) v.push_back(c);
  }
  return v;
}

struct SynthFixture {
  ClassTaxonomy tax = builtin_synth8();
  fs::path dir;
  DatasetIndex data;

  SynthFixture() {
    dir = fs::temp_directory_path() / "incseg_tests" / "scenario_ds";
    fs::remove_all(dir);
    SynthConfig cfg = default_synth_config(tax);
    cfg.seed = 21;
    cfg.scans_per_group = 4;
    cfg.points_per_scan = 150;
    cfg.val_scans = 2;
    const auto groups = generate_synthetic(tax, cfg);
    data = open_synth_dataset(write_synth_dataset(tax, cfg, groups, dir), tax);
  }
};

}  // namespace

TEST_CASE("transform_labels per-kind rules") {
  const auto& cil = builtin_cil();
  const ClassId road = cil.id_of("road");      // step 0
  const ClassId trunk = cil.id_of("trunk");    // step 1
  const ClassId car = cil.id_of("car");        // step 2
  const std::vector<ClassId> truth{road, trunk, car};

  // Disjoint at k=1: past -> background, current kept, future -> unlabeled.
  const auto dis1 = transform_labels(ScenarioKind::Disjoint, cil, 1, truth);
  CHECK(dis1 == std::vector<ClassId>{kBackground, trunk, kUnlabeled});

  // Sequential at the last step keeps everything.
  const auto seq2 = transform_labels(ScenarioKind::Sequential, cil, 2, truth);
  CHECK(seq2 == truth);

  // Sequential at k=1: future classes become unlabeled.
  const auto seq1 = transform_labels(ScenarioKind::Sequential, cil, 1, truth);
  CHECK(seq1 == std::vector<ClassId>{road, trunk, kUnlabeled});

  // Sequential masked at k=1 keeps only the step's own classes.
  const auto sm1 =
      transform_labels(ScenarioKind::SequentialMasked, cil, 1, truth);
  CHECK(sm1 == std::vector<ClassId>{kUnlabeled, trunk, kUnlabeled});

  // Overlapped labels everything else background.
  const auto ov1 = transform_labels(ScenarioKind::Overlapped, cil, 1, truth);
  CHECK(ov1 == std::vector<ClassId>{kBackground, trunk, kBackground});

  // Coarse-to-fine at k=0 maps car to its coarse group.
  const auto& c2f = builtin_c2f();
  const std::vector<ClassId> fine{c2f.id_of("car")};
  const auto cf0 = transform_labels(ScenarioKind::CoarseToFine, c2f, 0, fine);
  CHECK(cf0[0] == c2f.ancestor(c2f.id_of("car"), 0));
  // ... and is the identity at the last level.
  const auto cf2 = transform_labels(ScenarioKind::CoarseToFine, c2f, 2, fine);
  CHECK(cf2[0] == c2f.id_of("car"));
}

TEST_CASE("sequential-masked and disjoint coincide at step 0") {
  const auto& cil = builtin_cil();
  const auto truth = all_fine_labels(cil);
  CHECK(transform_labels(ScenarioKind::SequentialMasked, cil, 0, truth) ==
        transform_labels(ScenarioKind::Disjoint, cil, 0, truth));
}

TEST_CASE("transform partition and agreement properties") {
  const auto& cil = builtin_cil();
  const auto truth = all_fine_labels(cil);
  const ScenarioKind kinds[] = {
      ScenarioKind::Sequential, ScenarioKind::SequentialMasked,
      ScenarioKind::Disjoint, ScenarioKind::Overlapped};
  for (std::size_t k = 0; k < cil.num_steps(); ++k) {
    std::set<ClassId> current(cil.step_classes(k).begin(),
                              cil.step_classes(k).end());
    for (const auto kind : kinds) {
      const auto out = transform_labels(kind, cil, k, truth);
      for (std::size_t i = 0; i < truth.size(); ++i) {
        // Every transformed label is the true class, background or unlabeled.
        const bool ok = out[i] == truth[i] || out[i] == kBackground ||
                        out[i] == kUnlabeled;
        CHECK(ok);
        // All kinds agree on the current step's classes.
        if (current.count(truth[i])) CHECK(out[i] == truth[i]);
      }
    }
  }

  // Sequential refinement monotonicity: once labeled, identical forever.
  for (std::size_t k = 0; k + 1 < cil.num_steps(); ++k) {
    const auto now = transform_labels(ScenarioKind::Sequential, cil, k, truth);
    for (std::size_t k2 = k + 1; k2 < cil.num_steps(); ++k2) {
      const auto later =
          transform_labels(ScenarioKind::Sequential, cil, k2, truth);
      for (std::size_t i = 0; i < truth.size(); ++i) {
        if (now[i] != kUnlabeled) CHECK(later[i] == now[i]);
      }
    }
  }
}

TEST_CASE("coarse-to-fine ancestor consistency across steps") {
  const auto& c2f = builtin_c2f();
  const auto truth = all_fine_labels(c2f);
  for (std::size_t k2 = 0; k2 < c2f.num_steps(); ++k2) {
    const auto at_k2 =
        transform_labels(ScenarioKind::CoarseToFine, c2f, k2, truth);
    for (std::size_t k = 0; k <= k2; ++k) {
      const auto at_k =
          transform_labels(ScenarioKind::CoarseToFine, c2f, k, truth);
      for (std::size_t i = 0; i < truth.size(); ++i)
        CHECK(c2f.ancestor_of_any(at_k2[i], k) == at_k[i]);
    }
  }
}

TEST_CASE("transform rejects sentinels and bad setups") {
  const auto& cil = builtin_cil();
  const std::vector<ClassId> bad{kUnlabeled};
  CHECK_THROWS_AS(
      (void)transform_labels(ScenarioKind::Sequential, cil, 0, bad), DataError);
  const std::vector<ClassId> bg{kBackground};
  CHECK_THROWS_AS((void)transform_labels(ScenarioKind::Disjoint, cil, 0, bg),
                  DataError);
  const std::vector<ClassId> ok{1};
  CHECK_THROWS_AS(
      (void)transform_labels(ScenarioKind::CoarseToFine, cil, 0, ok),
      ConfigError);
  CHECK_THROWS_AS((void)transform_labels(ScenarioKind::Sequential, cil, 9, ok),
                  ConfigError);
}

TEST_CASE("active classes per kind") {
  const auto& cil = builtin_cil();
  CHECK(active_classes_for(ScenarioKind::Sequential, cil, 1).size() == 11);
  CHECK(active_classes_for(ScenarioKind::SequentialMasked, cil, 1).size() == 5);
  const auto dis = active_classes_for(ScenarioKind::Disjoint, cil, 1);
  CHECK(dis.size() == 6);
  CHECK(dis.front() == kBackground);
  const auto& c2f = builtin_c2f();
  CHECK(active_classes_for(ScenarioKind::CoarseToFine, c2f, 1).size() == 6);
}

TEST_CASE("build_step materializes and overlapped draws from everywhere") {
  SynthFixture fx;
  const fs::path out = fx.dir / "plans";

  const auto dis2 =
      build_step(ScenarioKind::Disjoint, fx.tax, 2, fx.data, out / "disjoint");
  CHECK(dis2.scans.size() == fx.data.groups[2].size());
  for (const auto& e : dis2.scans) CHECK(fs::exists(e.step_label));

  const auto ov2 = build_step(ScenarioKind::Overlapped, fx.tax, 2, fx.data,
                              out / "overlapped");
  CHECK(ov2.scans.size() >= dis2.scans.size());

  // Brute-force qualification check: a scan participates iff it holds at
  // least one point of a current-step class.
  std::set<std::string> members;
  for (const auto& e : ov2.scans) members.insert(e.id.str());
  std::set<ClassId> current(fx.tax.step_classes(2).begin(),
                            fx.tax.step_classes(2).end());
  for (const auto& group : fx.data.groups) {
    for (const auto& rec : group) {
      const auto truth = read_label_file(rec.label, fx.data.map);
      const bool qualifies = std::any_of(
          truth.begin(), truth.end(),
          [&current](ClassId c) { return current.count(c) > 0; });
      CHECK(qualifies == (members.count(rec.id.str()) > 0));
    }
  }

  // Transformed files honor the active set.
  std::set<ClassId> allowed(dis2.active_classes.begin(),
                            dis2.active_classes.end());
  for (const auto& e : dis2.scans) {
    const auto labels = read_label_file(e.step_label, fx.data.map);
    for (ClassId c : labels) {
      CHECK((c == kUnlabeled || allowed.count(c) > 0));
    }
  }

  // Manifest round-trip.
  const auto back = load_step_manifest(out / "disjoint" / "step2.json");
  CHECK(back.step == 2);
  CHECK(back.kind == ScenarioKind::Disjoint);
  CHECK(back.active_classes == dis2.active_classes);
  CHECK(back.scans.size() == dis2.scans.size());
}

TEST_CASE("plan summary percentages") {
  SynthFixture fx;

  const auto seq = summarize_plan(ScenarioKind::Sequential, fx.tax, fx.data);
  // At the last step every class is active, so everything is labeled.
  CHECK(seq.steps.back().labeled_fraction() == doctest::Approx(1.0));

  // Normalized per-class histogram sums to 1 across groups.
  for (std::size_t i = 0; i < fx.tax.num_classes(); ++i) {
    double share = 0;
    for (const auto& s : seq.steps)
      share += static_cast<double>(s.truth_class_counts[i]) /
               static_cast<double>(seq.dataset_class_counts[i]);
    CHECK(share == doctest::Approx(1.0));
  }

  // Disjoint counts background points as labeled, masked does not.
  const auto dis = summarize_plan(ScenarioKind::Disjoint, fx.tax, fx.data);
  const auto msk =
      summarize_plan(ScenarioKind::SequentialMasked, fx.tax, fx.data);
  CHECK(dis.steps[1].labeled_fraction() > msk.steps[1].labeled_fraction());

  CHECK(!plan_summary_table(seq, fx.tax).empty());
}
