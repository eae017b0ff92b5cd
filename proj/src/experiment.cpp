#include "incseg/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include <json.hpp>

namespace incseg {

using nlohmann::json;

double lr_at(const TrainConfig& cfg, std::size_t k, std::uint64_t t,
             std::uint64_t total, double lr_carry) {
  (void)k;
  if (total == 0) throw ConfigError("lr schedule needs at least one tick");
  if (t > total) throw ConfigError("lr tick past the end of the step");
  const double progress =
      static_cast<double>(t) / static_cast<double>(total);
  return lr_carry * std::pow(1.0 - progress, cfg.lr_power);
}

Strategy parse_strategy(const std::string& name) {
  const std::string n = normalize_name(name);
  if (n == "fine-tune" || n == "finetune") return Strategy::FineTune;
  if (n == "kd") return Strategy::Kd;
  if (n == "self-inpaint" || n == "inpaint") return Strategy::SelfInpaint;
  if (n == "kd-inpaint" || n == "kd-plus-inpaint") return Strategy::KdPlusInpaint;
  throw ConfigError("unknown strategy \"" + name + "\"");
}

const char* strategy_name(Strategy s) {
  switch (s) {
    case Strategy::FineTune: return "fine-tune";
    case Strategy::Kd: return "kd";
    case Strategy::SelfInpaint: return "self-inpaint";
    case Strategy::KdPlusInpaint: return "kd-plus-inpaint";
  }
  return "?";
}

ExperimentSpec parse_experiment_spec(const std::string& text,
                                     const std::string& origin) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(origin + ": JSON parse error: " + e.what());
  }
  ExperimentSpec spec;
  try {
    spec.taxonomy = resolve_taxonomy(doc.at("taxonomy").get<std::string>());
    spec.scenario = parse_scenario(doc.at("scenario").get<std::string>());
    spec.strategy = parse_strategy(doc.value("strategy", "fine-tune"));
    if (doc.contains("loss")) {
      const auto& l = doc.at("loss");
      spec.loss.lambda = l.value("lambda", spec.loss.lambda);
      spec.loss.kd_mode = parse_kd_mode(l.value("kd_mode", "none"));
      spec.loss.output_variant =
          parse_output_variant(l.value("output_variant", "standard"));
    }
    if (doc.contains("inpaint")) {
      const auto& i = doc.at("inpaint");
      spec.inpaint.tau1 = i.value("tau1", spec.inpaint.tau1);
      spec.inpaint.tau2 = i.value("tau2", spec.inpaint.tau2);
    }
    if (doc.contains("train")) {
      const auto& t = doc.at("train");
      spec.train.initial_lr = t.value("initial_lr", spec.train.initial_lr);
      spec.train.lr_power = t.value("lr_power", spec.train.lr_power);
      spec.train.batch_size = t.value("batch_size", spec.train.batch_size);
      spec.train.beta1 = t.value("beta1", spec.train.beta1);
      spec.train.beta2 = t.value("beta2", spec.train.beta2);
      spec.train.eps = t.value("eps", spec.train.eps);
      spec.train.seed = t.value("seed", spec.train.seed);
    }
    const auto& d = doc.at("dataset");
    if (d.contains("synth_manifest")) {
      spec.dataset.synth_manifest = d.at("synth_manifest").get<std::string>();
    } else {
      spec.dataset.real_root = d.at("root").get<std::string>();
      if (d.contains("groups")) {
        spec.dataset.groups =
            d.at("groups").get<std::vector<std::vector<std::string>>>();
        spec.dataset.validation =
            d.at("validation").get<std::vector<std::string>>();
      } else {
        spec.dataset.groups = cil_sequence_groups();
        spec.dataset.validation = cil_validation_sequences();
      }
      spec.dataset.learning_map = d.at("learning_map").get<std::string>();
      spec.dataset.strict_map = d.value("strict", true);
    }
    spec.out_dir = doc.at("out").get<std::string>();
  } catch (const json::exception& e) {
    throw ConfigError(origin + ": malformed experiment spec: " + e.what());
  }

  if (spec.train.initial_lr <= 0 || spec.train.lr_power <= 0 ||
      spec.train.batch_size < 1)
    throw ConfigError("train config values must be positive");
  if (spec.strategy == Strategy::Kd || spec.strategy == Strategy::KdPlusInpaint) {
    if (spec.loss.kd_mode == KdMode::None)
      spec.loss.kd_mode = KdMode::Output;
  }
  const bool wants_inpaint = spec.strategy == Strategy::SelfInpaint ||
                             spec.strategy == Strategy::KdPlusInpaint;
  if (wants_inpaint && spec.scenario != ScenarioKind::Disjoint &&
      spec.scenario != ScenarioKind::Overlapped)
    throw ConfigError(
        "self-inpainting needs a scenario that produces background labels "
        "(disjoint or overlapped)");
  return spec;
}

DatasetIndex open_dataset(const ExperimentSpec& spec) {
  if (!spec.dataset.synth_manifest.empty())
    return open_synth_dataset(spec.dataset.synth_manifest, spec.taxonomy);
  const LearningMap map = load_learning_map(
      spec.dataset.learning_map, spec.taxonomy, spec.dataset.strict_map);
  return open_real_dataset(spec.dataset.real_root, spec.dataset.groups,
                           spec.dataset.validation, map);
}

namespace {

std::size_t new_class_count(const ClassTaxonomy& tax, ScenarioKind kind,
                            std::size_t k) {
  return kind == ScenarioKind::CoarseToFine ? tax.level_classes(k).size()
                                            : tax.step_classes(k).size();
}

LabeledCloud load_step_scan(const StepEntry& entry) {
  LabeledCloud cloud;
  cloud.id = entry.id;
  const auto bytes = read_file_bytes(entry.bin);
  if (bytes.size() % 16 != 0)
    throw DataError(entry.bin.string() + ": truncated scan record");
  cloud.points.resize(bytes.size() / 16);
  for (std::size_t i = 0; i < cloud.points.size(); ++i) {
    const std::byte* rec = bytes.data() + 16 * i;
    cloud.points[i] = {load_le_f32(rec), load_le_f32(rec + 4),
                       load_le_f32(rec + 8), load_le_f32(rec + 12)};
  }
  const auto lbytes = read_file_bytes(entry.step_label);
  if (lbytes.size() != cloud.points.size() * 4)
    throw DataError(entry.step_label.string() + ": label/scan size mismatch");
  cloud.labels.resize(cloud.points.size());
  for (std::size_t i = 0; i < cloud.labels.size(); ++i)
    cloud.labels[i] =
        static_cast<ClassId>(load_le_u32(lbytes.data() + 4 * i) & 0xffffu);
  return cloud;
}

}  // namespace

StepReport evaluate(const SegmenterState& state, const ClassTaxonomy& tax,
                    ScenarioKind kind, std::size_t k,
                    std::span<const ScanRecord> scans, const LearningMap& map) {
  const bool c2f = kind == ScenarioKind::CoarseToFine;
  std::vector<ClassId> eval_classes =
      c2f ? tax.level_classes(k) : tax.cumulative_classes(k);
  std::sort(eval_classes.begin(), eval_classes.end());

  // Matrix classes: background first when the model can emit it.
  std::vector<ClassId> matrix_classes = eval_classes;
  const bool model_has_bg = state.row_of(kBackground) >= 0;
  if (model_has_bg) matrix_classes.insert(matrix_classes.begin(), kBackground);
  ConfusionMatrix cm(matrix_classes);

  // Rows of the model's head the argmax may pick.
  std::vector<std::size_t> allowed_rows;
  std::vector<ClassId> allowed_ids;
  for (ClassId c : matrix_classes) {
    const int r = state.row_of(c);
    if (r >= 0) {
      allowed_rows.push_back(static_cast<std::size_t>(r));
      allowed_ids.push_back(c);
    }
  }
  if (allowed_rows.empty())
    throw ConfigError("model predicts none of the evaluated classes");

  std::set<ClassId> eval_set(eval_classes.begin(), eval_classes.end());
  for (const auto& rec : scans) {
    const auto cloud = read_scan(rec.bin, rec.label, map);
    const Prediction pred = forward(state, cloud.points);
    for (std::size_t i = 0; i < cloud.points.size(); ++i) {
      ClassId truth = cloud.labels[i];
      if (truth == kUnlabeled || truth == kBackground) continue;
      if (c2f) truth = tax.ancestor(truth, k);
      // Future classes are outside the evaluated set at this step.
      if (!eval_set.count(truth)) continue;
      const double* z = pred.logits.row(i);
      std::size_t best = 0;
      for (std::size_t j = 1; j < allowed_rows.size(); ++j) {
        if (z[allowed_rows[j]] > z[allowed_rows[best]]) best = j;
      }
      cm.add(truth, allowed_ids[best]);
    }
  }

  StepReport rep = make_report(cm, tax, k, c2f);
  rep.scenario = scenario_name(kind);
  return rep;
}

StepRunResult run_step(const ExperimentSpec& spec, std::size_t k,
                       const SegmenterState* prev, double lr_carry,
                       const DatasetIndex& data, std::ostream* log) {
  const ClassTaxonomy& tax = spec.taxonomy;
  if (k == 0 && prev)
    throw ConfigError("step 0 cannot start from a previous model");
  if (k > 0 && !prev)
    throw ConfigError("step " + std::to_string(k) + " needs a previous model");

  const std::filesystem::path steps_dir = spec.out_dir / "steps";
  StepDataset step_data = build_step(spec.scenario, tax, k, data, steps_dir);

  // Model for this step: fresh at k = 0, expanded head afterwards.
  SegmenterState state = [&] {
    const auto active = active_classes_for(spec.scenario, tax, k);
    if (k == 0) {
      const Standardizer stdz = fit_standardizer(data.groups[0], data.map);
      return init_segmenter(stdz, active, spec.train.seed);
    }
    std::vector<ClassId> fresh;
    for (ClassId c : active)
      if (prev->row_of(c) < 0) fresh.push_back(c);
    return expand_head(*prev, fresh);
  }();
  state.step = static_cast<std::uint32_t>(k);
  state.scenario = scenario_name(spec.scenario);

  // Strategy for this step. Distillation and inpainting are defined only
  // against a previous model, so step 0 always reduces to plain fine-tuning.
  const bool use_inpaint = k > 0 && (spec.strategy == Strategy::SelfInpaint ||
                                     spec.strategy == Strategy::KdPlusInpaint);
  const bool use_kd = k > 0 && (spec.strategy == Strategy::Kd ||
                                spec.strategy == Strategy::KdPlusInpaint);
  LossConfig step_loss = spec.loss;
  if (!use_kd) step_loss.kd_mode = KdMode::None;

  InpaintStats ip_stats;
  if (use_inpaint) {
    auto [painted, stats] = inpaint_step(step_data, *prev, spec.inpaint);
    step_data = std::move(painted);
    ip_stats = stats;
    save_step_manifest(step_data,
                       steps_dir / ("step" + std::to_string(k) + ".ip.json"));
  }

  const std::size_t epochs = 2 * new_class_count(tax, spec.scenario, k);
  const std::size_t n_scans = step_data.scans.size();
  if (n_scans == 0) throw DataError("step has no scans");
  if (log) {
    *log << "step " << k << " scenario " << scenario_name(spec.scenario)
         << " strategy " << strategy_name(spec.strategy) << " scans "
         << n_scans << " epochs " << epochs
         << " classes " << state.class_list.size()
         << " (lr ticks per epoch; carry = last epoch's rate)\n";
    if (use_inpaint)
      *log << "step " << k << " inpainted " << ip_stats.inpainted << " of "
           << ip_stats.candidates << " background points\n";
  }

  std::vector<std::size_t> order(n_scans);
  for (std::size_t i = 0; i < n_scans; ++i) order[i] = i;

  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    const double lr = lr_at(spec.train, k, epoch, epochs, lr_carry);
    Rng shuffle_rng(derive_seed(spec.train.seed, 0x5u, k, epoch));
    shuffle_rng.shuffle(order);

    double epoch_loss = 0;
    std::size_t batches = 0;
    for (std::size_t at = 0; at < n_scans; at += spec.train.batch_size) {
      std::vector<PointXYZI> points;
      std::vector<ClassId> labels;
      const std::size_t end = std::min(at + spec.train.batch_size, n_scans);
      for (std::size_t s = at; s < end; ++s) {
        const auto cloud = load_step_scan(step_data.scans[order[s]]);
        points.insert(points.end(), cloud.points.begin(), cloud.points.end());
        labels.insert(labels.end(), cloud.labels.begin(), cloud.labels.end());
      }
      auto [value, grads] = gradients(state, use_kd ? prev : nullptr, points,
                                      labels, step_loss, &tax);
      adam_step(state, grads, lr, spec.train.beta1, spec.train.beta2,
                spec.train.eps);
      epoch_loss += value.total;
      ++batches;
    }
    if (log) {
      *log << "step " << k << " epoch " << epoch << " lr " << std::setprecision(17)
           << lr << " mean_loss "
           << (batches ? epoch_loss / static_cast<double>(batches) : 0.0)
           << "\n";
    }
  }

  StepRunResult out;
  out.lr_carry = lr_at(spec.train, k, epochs - 1, epochs, lr_carry);
  out.report = evaluate(state, tax, spec.scenario, k, data.validation, data.map);
  out.report.inpaint_candidates = ip_stats.candidates;
  out.report.inpaint_inpainted = ip_stats.inpainted;
  out.state = std::move(state);

  const auto ckpt_dir = spec.out_dir / "checkpoints";
  const auto report_dir = spec.out_dir / "reports";
  std::filesystem::create_directories(ckpt_dir);
  std::filesystem::create_directories(report_dir);
  save_checkpoint(out.state, ckpt_dir / ("step" + std::to_string(k) + ".ckpt"));
  write_text_file(report_dir / ("step" + std::to_string(k) + ".json"),
                  report_to_json(out.report, tax));
  return out;
}

std::vector<StepReport> run_experiment(const ExperimentSpec& spec) {
  const DatasetIndex data = open_dataset(spec);
  std::filesystem::create_directories(spec.out_dir);
  std::ofstream log(spec.out_dir / "run.log", std::ios::trunc);

  std::vector<StepReport> reports;
  std::optional<SegmenterState> state;
  double lr_carry = spec.train.initial_lr;
  for (std::size_t k = 0; k < spec.taxonomy.num_steps(); ++k) {
    StepRunResult res = run_step(spec, k, state ? &*state : nullptr, lr_carry,
                                 data, &log);
    reports.push_back(res.report);
    state = std::move(res.state);
    lr_carry = res.lr_carry;

    // Partial results stay on disk even if a later step fails; the summary
    // always reflects the finished steps.
    std::ostringstream csv;
    csv << report_csv_row_header(spec.taxonomy.num_steps()) << "\n";
    for (const auto& r : reports)
      csv << report_csv_row(r, spec.taxonomy.num_steps()) << "\n";
    write_text_file(spec.out_dir / "summary.csv", csv.str());
    write_text_file(spec.out_dir / "summary.txt",
                    report_text_table(reports, spec.taxonomy));
    write_text_file(spec.out_dir / "per_class_final.csv",
                    per_class_csv(reports.back(), spec.taxonomy));
  }
  return reports;
}

}  // namespace incseg
