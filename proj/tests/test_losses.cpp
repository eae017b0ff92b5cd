#include <doctest.h>

#include <cmath>

#include "incseg/losses.hpp"

using namespace incseg;

namespace {

// Hand-built prediction: softmax rows given directly (logits filled with the
// log of the probabilities so argmax agreement holds).
Prediction make_pred(std::vector<ClassId> classes,
                     std::vector<std::vector<double>> rows) {
  Prediction p;
  p.class_list = std::move(classes);
  const std::size_t n = rows.size();
  const std::size_t c = p.class_list.size();
  p.softmax = Mat(n, c);
  p.logits = Mat(n, c);
  p.features = Mat(n, kFeatureDim);
  for (std::size_t i = 0; i < n; ++i) {
    REQUIRE(rows[i].size() == c);
    for (std::size_t j = 0; j < c; ++j) {
      p.softmax.at(i, j) = rows[i][j];
      p.logits.at(i, j) = std::log(std::max(rows[i][j], 1e-300));
    }
  }
  return p;
}

double entropy(std::span<const double> p) {
  double h = 0;
  for (double v : p) {
    if (v > 0) h -= v * std::log(v);
  }
  return h;
}

}  // namespace

TEST_CASE("cross entropy hand values") {
  // Uniform over four classes.
  const auto uniform =
      make_pred({1, 2, 3, 4}, {{0.25, 0.25, 0.25, 0.25}});
  const std::vector<ClassId> one{2};
  CHECK(std::fabs(cross_entropy(uniform, one) - std::log(4.0)) < 1e-12);

  // Near-certain prediction.
  const auto sure = make_pred({1, 2}, {{1.0 - 1e-9, 1e-9}});
  const std::vector<ClassId> y1{1};
  CHECK(cross_entropy(sure, y1) == doctest::Approx(0.0).epsilon(1e-8));

  // Two points: -(ln 0.7 + ln 0.8)/2.
  const auto two = make_pred({1, 2}, {{0.7, 0.3}, {0.2, 0.8}});
  const std::vector<ClassId> y{1, 2};
  const double expect = -(std::log(0.7) + std::log(0.8)) / 2.0;
  CHECK(cross_entropy(two, y) == doctest::Approx(expect).epsilon(1e-12));
  CHECK(expect == doctest::Approx(0.28990).epsilon(1e-4));
}

TEST_CASE("cross entropy masking and errors") {
  const auto pred = make_pred({1, 2}, {{0.7, 0.3}, {0.2, 0.8}});
  std::size_t contributing = 99;
  const std::vector<ClassId> masked{kUnlabeled, 2};
  const double v = cross_entropy(pred, masked, &contributing);
  CHECK(contributing == 1);
  CHECK(v == doctest::Approx(-std::log(0.8)).epsilon(1e-12));

  const std::vector<ClassId> none{kUnlabeled, kUnlabeled};
  CHECK(cross_entropy(pred, none, &contributing) == 0.0);
  CHECK(contributing == 0);

  const std::vector<ClassId> outside{3, 1};
  CHECK_THROWS_AS((void)cross_entropy(pred, outside), DataError);
}

TEST_CASE("output kd equals entropy at equality and hand value") {
  // prev == cur distribution (zero mass on any new class).
  const std::vector<double> row{0.6, 0.3, 0.1};
  const auto prev = make_pred({1, 2, 3}, {row});
  const auto cur = make_pred({1, 2, 3}, {row});
  CHECK(output_kd(prev, cur, OutputVariant::Standard) ==
        doctest::Approx(entropy(row)).epsilon(1e-12));

  // prev (1, 0), cur (0.5, 0.25, 0.25) over one extra class: -ln 0.5.
  const auto prev2 = make_pred({1, 2}, {{1.0, 0.0}});
  const auto cur2 = make_pred({1, 2, 3}, {{0.5, 0.25, 0.25}});
  CHECK(output_kd(prev2, cur2, OutputVariant::Standard) ==
        doctest::Approx(-std::log(0.5)).epsilon(1e-12));

  // Prefix precondition.
  const auto bad_prev = make_pred({2, 1}, {{0.5, 0.5}});
  CHECK_THROWS_AS((void)output_kd(bad_prev, cur2, OutputVariant::Standard),
                  ConfigError);
}

TEST_CASE("joined-unknowns folds new-class mass into background") {
  // prev over [background, 1]; cur adds classes 2 and 3.
  const auto prev = make_pred({kBackground, 1}, {{0.4, 0.6}});
  const auto cur =
      make_pred({kBackground, 1, 2, 3}, {{0.1, 0.5, 0.15, 0.25}});
  // grouped: background slot 0.1+0.15+0.25 = 0.5, class-1 slot 0.5.
  const double expect = -(0.4 * std::log(0.5) + 0.6 * std::log(0.5));
  CHECK(output_kd(prev, cur, OutputVariant::JoinedUnknowns) ==
        doctest::Approx(expect).epsilon(1e-12));

  // Without a background slot the variant is rejected.
  const auto no_bg = make_pred({1}, {{1.0}});
  const auto cur2 = make_pred({1, 2}, {{0.6, 0.4}});
  CHECK_THROWS_AS((void)output_kd(no_bg, cur2, OutputVariant::JoinedUnknowns),
                  ConfigError);
}

TEST_CASE("coarse-sum aggregates fine probabilities by ancestor") {
  // Two coarse classes (g: a+b, h: c), fine classes a, b, c.
  const auto tax = parse_taxonomy_json(
      R"({"names":["g","h","a","b","c"],"steps":[["g","h"],["a","b","c"]],
          "hierarchy":[{"a":"g","b":"g","c":"h"},{"a":"a","b":"b","c":"c"}]})",
      "inline");
  const ClassId g = tax.id_of("g"), h = tax.id_of("h");
  const ClassId a = tax.id_of("a"), b = tax.id_of("b"), c = tax.id_of("c");

  const auto prev = make_pred({g, h}, {{1.0, 0.0}});
  // All current mass on the fine classes: (0.2, 0.3 | 0.5) -> (0.5, 0.5).
  const auto cur = make_pred({g, h, a, b, c}, {{0.0, 0.0, 0.2, 0.3, 0.5}});
  CHECK(output_kd(prev, cur, OutputVariant::CoarseSum, &tax) ==
        doctest::Approx(-std::log(0.5)).epsilon(1e-12));

  // Residual mass on the stale coarse rows stays in their own slots.
  const auto cur2 = make_pred({g, h, a, b, c}, {{0.1, 0.0, 0.2, 0.3, 0.4}});
  CHECK(output_kd(prev, cur2, OutputVariant::CoarseSum, &tax) ==
        doctest::Approx(-std::log(0.6)).epsilon(1e-12));

  CHECK_THROWS_AS((void)output_kd(prev, cur, OutputVariant::CoarseSum, nullptr),
                  ConfigError);
}

TEST_CASE("coarse-sum aggregation preserves probability mass") {
  const auto tax = parse_taxonomy_json(
      R"({"names":["g","h","a","b","c"],"steps":[["g","h"],["a","b","c"]],
          "hierarchy":[{"a":"g","b":"g","c":"h"},{"a":"a","b":"b","c":"c"}]})",
      "inline");
  const ClassId g = tax.id_of("g"), h = tax.id_of("h");
  const ClassId a = tax.id_of("a"), b = tax.id_of("b"), c = tax.id_of("c");
  Rng rng(211);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> q(5);
    double s = 0;
    for (auto& v : q) s += (v = rng.uniform() + 1e-9);
    for (auto& v : q) v /= s;
    const auto cur = make_pred({g, h, a, b, c}, {q});
    // One-hot targets per slot recover the aggregated entries; a valid
    // aggregation makes them sum to one.
    double mass = 0;
    for (const ClassId target : {g, h}) {
      const auto prev =
          make_pred({g, h}, {{target == g ? 1.0 : 0.0, target == h ? 1.0 : 0.0}});
      mass += std::exp(-output_kd(prev, cur, OutputVariant::CoarseSum, &tax));
    }
    CHECK(mass == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("gibbs inequality on random distribution pairs") {
  Rng rng(101);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t prev_c = 2 + rng.below(4);
    const std::size_t extra = rng.below(3);
    std::vector<double> t(prev_c), q(prev_c + extra);
    double ts = 0, qs = 0;
    for (auto& v : t) ts += (v = rng.uniform() + 1e-6);
    for (auto& v : q) qs += (v = rng.uniform() + 1e-6);
    for (auto& v : t) v /= ts;
    for (auto& v : q) v /= qs;

    std::vector<ClassId> prev_cl, cur_cl;
    for (std::size_t j = 0; j < prev_c + extra; ++j) {
      if (j < prev_c) prev_cl.push_back(static_cast<ClassId>(j + 1));
      cur_cl.push_back(static_cast<ClassId>(j + 1));
    }
    const auto prev = make_pred(prev_cl, {t});
    const auto cur = make_pred(cur_cl, {q});
    const double kd = output_kd(prev, cur, OutputVariant::Standard);
    CHECK(kd >= entropy(t) - 1e-12);
  }
}

TEST_CASE("feature kd hand values and errors") {
  Mat a(1, 2), b(1, 2);
  a.at(0, 0) = 3.0;
  a.at(0, 1) = 4.0;
  CHECK(feature_kd(b, a, 2) == doctest::Approx(5.0).epsilon(1e-12));
  a.at(0, 0) = 1.0;
  a.at(0, 1) = -1.0;
  CHECK(feature_kd(b, a, 1) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(feature_kd(a, a, 2) == 0.0);

  Mat c(2, 2);
  CHECK_THROWS_AS((void)feature_kd(a, c, 2), ConfigError);
  CHECK_THROWS_AS((void)feature_kd(a, a, 3), ConfigError);

  // Mean semantics: duplicating a batch leaves the value unchanged.
  Mat a2(2, 2), b2(2, 2);
  a2.at(0, 0) = 3.0;
  a2.at(0, 1) = 4.0;
  a2.at(1, 0) = 3.0;
  a2.at(1, 1) = 4.0;
  CHECK(feature_kd(b2, a2, 2) == doctest::Approx(5.0).epsilon(1e-12));
}

TEST_CASE("combined loss identities") {
  const auto cur = make_pred({1, 2}, {{0.7, 0.3}, {0.2, 0.8}});
  const auto prev = make_pred({1}, {{1.0}, {1.0}});
  const std::vector<ClassId> labels{1, 2};

  LossConfig plain;
  const auto base = combined(cur, nullptr, labels, plain);
  CHECK(base.kd_part == 0.0);
  CHECK(base.total == base.ce_part);
  CHECK(base.ce_part == cross_entropy(cur, labels));

  LossConfig kd0;
  kd0.kd_mode = KdMode::Output;
  kd0.lambda = 0.0;
  const auto with0 = combined(cur, &prev, labels, kd0);
  CHECK(with0.total == with0.ce_part);
  CHECK(with0.ce_part == base.ce_part);

  LossConfig kd1;
  kd1.kd_mode = KdMode::Output;
  kd1.lambda = 1.0;
  const auto with1 = combined(cur, &prev, labels, kd1);
  const double kd_expect = -(std::log(0.7) + std::log(0.2)) / 2.0;
  CHECK(with1.kd_part == doctest::Approx(kd_expect).epsilon(1e-12));
  CHECK(with1.total ==
        doctest::Approx(with1.ce_part + with1.kd_part).epsilon(1e-12));

  // lambda = 0.5 keeps the identity total = ce + lambda * kd.
  kd1.lambda = 0.5;
  const auto half = combined(cur, &prev, labels, kd1);
  CHECK(half.total == half.ce_part + 0.5 * half.kd_part);

  // A previous prediction is required exactly when kd is on.
  CHECK_THROWS_AS((void)combined(cur, nullptr, labels, kd1), ConfigError);
  CHECK_THROWS_AS((void)combined(cur, &prev, labels, plain), ConfigError);
}

TEST_CASE("combined loss is permutation invariant") {
  Rng rng(151);
  std::vector<std::vector<double>> rows;
  std::vector<ClassId> labels;
  for (int i = 0; i < 20; ++i) {
    double a = rng.uniform() + 0.01, b = rng.uniform() + 0.01,
           c = rng.uniform() + 0.01;
    const double s = a + b + c;
    rows.push_back({a / s, b / s, c / s});
    labels.push_back(static_cast<ClassId>(1 + rng.below(3)));
  }
  const auto pred = make_pred({1, 2, 3}, rows);
  const double fwd = cross_entropy(pred, labels);

  std::vector<std::vector<double>> rrows(rows.rbegin(), rows.rend());
  std::vector<ClassId> rlabels(labels.rbegin(), labels.rend());
  const auto rpred = make_pred({1, 2, 3}, rrows);
  CHECK(cross_entropy(rpred, rlabels) == doctest::Approx(fwd).epsilon(1e-12));
}

TEST_CASE("unlabeled points are excluded from the output-kd mean") {
  const auto cur = make_pred({1, 2}, {{0.7, 0.3}, {0.2, 0.8}});
  const auto prev = make_pred({1, 2}, {{1.0, 0.0}, {1.0, 0.0}});
  LossConfig cfg;
  cfg.kd_mode = KdMode::Output;
  cfg.lambda = 1.0;
  const std::vector<ClassId> labels{1, kUnlabeled};
  const auto v = combined(cur, &prev, labels, cfg);
  // Only the first point contributes: kd = -ln 0.7.
  CHECK(v.kd_part == doctest::Approx(-std::log(0.7)).epsilon(1e-12));
  CHECK(v.ce_points == 1);
}
