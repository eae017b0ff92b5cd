#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "incseg/experiment.hpp"
#include "incseg/ingest.hpp"
#include "incseg/kernels.hpp"
#include "incseg/metrics.hpp"
#include "incseg/scenario.hpp"
#include "incseg/taxonomy.hpp"

namespace fs = std::filesystem;
using namespace incseg;

namespace {

struct DatasetFlags {
  std::string synth_manifest;
  std::string real_root;
  std::string learning_map;
  bool lenient = false;

  void attach(CLI::App* cmd) {
    cmd->add_option("--synth-manifest", synth_manifest,
                    "manifest.json of a generated synthetic dataset");
    cmd->add_option("--root", real_root, "real dataset root (sequences/...)");
    cmd->add_option("--learning-map", learning_map,
                    "raw-id -> class-name JSON (real data)");
    cmd->add_flag("--lenient", lenient,
                  "map unknown raw label ids to unlabeled instead of failing");
  }

  DatasetSource resolve() const {
    DatasetSource src;
    if (!synth_manifest.empty()) {
      src.synth_manifest = synth_manifest;
      return src;
    }
    if (real_root.empty())
      throw ConfigError("either --synth-manifest or --root is required");
    if (learning_map.empty())
      throw ConfigError("--learning-map is required with --root");
    src.real_root = real_root;
    src.learning_map = learning_map;
    src.strict_map = !lenient;
    src.groups = cil_sequence_groups();
    src.validation = cil_validation_sequences();
    return src;
  }
};

DatasetIndex open_from_flags(const DatasetFlags& flags,
                             const ClassTaxonomy& tax) {
  if (!flags.synth_manifest.empty())
    return open_synth_dataset(flags.synth_manifest, tax);
  const DatasetSource src = flags.resolve();
  const LearningMap map =
      load_learning_map(src.learning_map, tax, src.strict_map);
  return open_real_dataset(src.real_root, src.groups, src.validation, map);
}

int run_synth(const std::string& taxonomy, const std::string& config_path,
              std::optional<std::uint64_t> seed,
              std::optional<std::size_t> scans,
              std::optional<std::size_t> points, const std::string& out) {
  const ClassTaxonomy tax = resolve_taxonomy(taxonomy);
  SynthConfig cfg = config_path.empty()
                        ? default_synth_config(tax)
                        : parse_synth_config(read_text_file(config_path), tax,
                                             config_path);
  if (seed) cfg.seed = *seed;
  if (scans) cfg.scans_per_group = *scans;
  if (points) cfg.points_per_scan = *points;
  const auto groups = generate_synthetic(tax, cfg);
  const auto manifest = write_synth_dataset(tax, cfg, groups, out);
  std::uint64_t total = 0;
  for (const auto& g : groups)
    for (const auto& c : g) total += c.points.size();
  std::cout << "wrote " << manifest.string() << " (" << total << " points, "
            << groups.size() << " groups incl. validation)\n";
  return kExitOk;
}

int run_plan(const std::string& taxonomy, const std::string& scenario,
             const DatasetFlags& data_flags, const std::string& out) {
  const ClassTaxonomy tax = resolve_taxonomy(taxonomy);
  const ScenarioKind kind = parse_scenario(scenario);
  const DatasetIndex data = open_from_flags(data_flags, tax);
  for (std::size_t k = 0; k < tax.num_steps(); ++k)
    build_step(kind, tax, k, data, fs::path(out) / "steps");
  const PlanSummary summary = summarize_plan(kind, tax, data);
  const std::string table = plan_summary_table(summary, tax);
  write_text_file(fs::path(out) / "plan_summary.txt", table);
  std::cout << table;
  return kExitOk;
}

int run_train(const std::string& spec_path, const std::string& taxonomy,
              const std::string& scenario, const std::string& strategy,
              std::optional<std::uint64_t> seed, std::optional<double> lambda,
              const std::string& kd_mode, const std::string& kd_variant,
              std::optional<double> tau1, std::optional<double> tau2,
              const DatasetFlags& data_flags, const std::string& out) {
  ExperimentSpec spec;
  if (!spec_path.empty()) {
    spec = parse_experiment_spec(read_text_file(spec_path), spec_path);
  } else {
    if (taxonomy.empty() || scenario.empty())
      throw ConfigError("--taxonomy and --scenario are required without --spec");
    spec.taxonomy = resolve_taxonomy(taxonomy);
    spec.scenario = parse_scenario(scenario);
    spec.dataset = data_flags.resolve();
  }
  if (!spec_path.empty() && !taxonomy.empty())
    spec.taxonomy = resolve_taxonomy(taxonomy);
  if (!spec_path.empty() && !scenario.empty())
    spec.scenario = parse_scenario(scenario);
  if (!strategy.empty()) spec.strategy = parse_strategy(strategy);
  if (seed) spec.train.seed = *seed;
  if (lambda) spec.loss.lambda = *lambda;
  if (!kd_mode.empty()) spec.loss.kd_mode = parse_kd_mode(kd_mode);
  if (!kd_variant.empty())
    spec.loss.output_variant = parse_output_variant(kd_variant);
  if (tau1) spec.inpaint.tau1 = *tau1;
  if (tau2) spec.inpaint.tau2 = *tau2;
  if (!out.empty()) spec.out_dir = out;
  if (spec.out_dir.empty()) throw ConfigError("--out is required");

  const bool kd_like =
      spec.strategy == Strategy::Kd || spec.strategy == Strategy::KdPlusInpaint;
  if (kd_like && spec.loss.kd_mode == KdMode::None)
    spec.loss.kd_mode = KdMode::Output;
  const bool wants_inpaint = spec.strategy == Strategy::SelfInpaint ||
                             spec.strategy == Strategy::KdPlusInpaint;
  if (wants_inpaint && spec.scenario != ScenarioKind::Disjoint &&
      spec.scenario != ScenarioKind::Overlapped)
    throw ConfigError(
        "self-inpainting needs a scenario that produces background labels");

  const auto reports = run_experiment(spec);
  std::cout << report_text_table(reports, spec.taxonomy);
  std::cout << "artifacts in " << spec.out_dir.string() << " ("
            << kernels::describe_active() << ")\n";
  return kExitOk;
}

int run_eval(const std::string& checkpoint, const std::string& taxonomy,
             const DatasetFlags& data_flags, const std::string& out) {
  const ClassTaxonomy tax = resolve_taxonomy(taxonomy);
  const SegmenterState state = load_checkpoint(checkpoint);
  const DatasetIndex data = open_from_flags(data_flags, tax);
  const ScenarioKind kind = parse_scenario(state.scenario);
  StepReport rep =
      evaluate(state, tax, kind, state.step, data.validation, data.map);
  const std::string text = report_to_json(rep, tax);
  if (!out.empty()) {
    write_text_file(out, text);
  } else {
    std::cout << text;
  }
  std::vector<StepReport> one{std::move(rep)};
  std::cout << report_text_table(one, tax);
  return kExitOk;
}

int run_report(const std::vector<std::string>& runs,
               const std::string& taxonomy, const std::string& out) {
  const ClassTaxonomy tax = resolve_taxonomy(taxonomy);
  for (const auto& run : runs) {
    const fs::path dir = fs::path(run) / "reports";
    std::vector<StepReport> reports;
    for (std::size_t k = 0;; ++k) {
      const fs::path p = dir / ("step" + std::to_string(k) + ".json");
      if (!fs::exists(p)) break;
      StepReport from_disk = report_from_json(read_text_file(p), p.string());
      // Re-derive every metric from the persisted confusion matrix; the
      // stored numbers must match the pure derivation.
      StepReport rederived =
          make_report(from_disk.confusion, tax, from_disk.step,
                      parse_scenario(from_disk.scenario) ==
                          ScenarioKind::CoarseToFine);
      if (std::abs(rederived.miou - from_disk.miou) > 1e-12)
        throw DataError(p.string() +
                        ": stored mIoU disagrees with its confusion matrix");
      rederived.scenario = from_disk.scenario;
      rederived.inpaint_candidates = from_disk.inpaint_candidates;
      rederived.inpaint_inpainted = from_disk.inpaint_inpainted;
      reports.push_back(std::move(rederived));
    }
    if (reports.empty())
      throw DataError("no step reports under " + dir.string());
    std::ostringstream csv;
    csv << report_csv_row_header(tax.num_steps()) << "\n";
    for (const auto& r : reports)
      csv << report_csv_row(r, tax.num_steps()) << "\n";
    const std::string table = report_text_table(reports, tax);
    std::cout << run << ":\n" << table << "\n";
    if (!out.empty()) {
      const fs::path base = fs::path(out) / fs::path(run).filename();
      write_text_file(base.string() + "_summary.csv", csv.str());
      write_text_file(base.string() + "_summary.txt", table);
      write_text_file(base.string() + "_per_class.csv",
                      per_class_csv(reports.back(), tax));
    }
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"class-incremental continual learning harness for point-cloud "
               "semantic segmentation"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  std::string synth_tax = "synth8", synth_cfg, synth_out;
  std::optional<std::uint64_t> synth_seed;
  std::optional<std::size_t> synth_scans, synth_points;
  synth->add_option("--taxonomy", synth_tax, "cil | c2f | synth8 | file path");
  synth->add_option("--config", synth_cfg, "SynthConfig JSON file");
  synth->add_option("--seed", synth_seed, "override the config seed");
  synth->add_option("--scans-per-group", synth_scans);
  synth->add_option("--points-per-scan", synth_points);
  synth->add_option("--out", synth_out, "output directory")->required();

  // plan
  auto* plan = app.add_subcommand(
      "plan", "materialize per-step label transforms and summarize them");
  std::string plan_tax, plan_scenario, plan_out;
  DatasetFlags plan_data;
  plan->add_option("--taxonomy", plan_tax)->required();
  plan->add_option("--scenario", plan_scenario)->required();
  plan_data.attach(plan);
  plan->add_option("--out", plan_out)->required();

  // train
  auto* train = app.add_subcommand("train", "run an incremental experiment");
  std::string train_spec, train_tax, train_scenario, train_strategy;
  std::string train_kd_mode, train_kd_variant, train_out;
  std::optional<std::uint64_t> train_seed;
  std::optional<double> train_lambda, train_tau1, train_tau2;
  DatasetFlags train_data;
  train->add_option("--spec", train_spec, "ExperimentSpec JSON file");
  train->add_option("--taxonomy", train_tax);
  train->add_option("--scenario", train_scenario);
  train->add_option("--strategy", train_strategy,
                    "fine-tune | kd | self-inpaint | kd-plus-inpaint");
  train->add_option("--seed", train_seed);
  train->add_option("--lambda", train_lambda, "distillation weight");
  train->add_option("--kd-mode", train_kd_mode,
                    "none | output | feature-l1 | feature-l2 | both");
  train->add_option("--kd-variant", train_kd_variant,
                    "standard | joined-unknowns | coarse-sum");
  train->add_option("--tau1", train_tau1, "inpainting margin threshold");
  train->add_option("--tau2", train_tau2, "inpainting confidence threshold");
  train_data.attach(train);
  train->add_option("--out", train_out);

  // eval
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a split");
  std::string eval_ckpt, eval_tax, eval_out;
  DatasetFlags eval_data;
  eval->add_option("--checkpoint", eval_ckpt)->required();
  eval->add_option("--taxonomy", eval_tax)->required();
  eval_data.attach(eval);
  eval->add_option("--out", eval_out, "write the report JSON here");

  // report
  auto* report = app.add_subcommand(
      "report", "regenerate summary tables from persisted step reports");
  std::vector<std::string> report_runs;
  std::string report_tax, report_out;
  report->add_option("--run", report_runs, "run directory (repeatable)")
      ->required();
  report->add_option("--taxonomy", report_tax)->required();
  report->add_option("--out", report_out, "directory for CSV/text output");

  try {
    app.parse(argc, argv);
    if (synth->parsed())
      return run_synth(synth_tax, synth_cfg, synth_seed, synth_scans,
                       synth_points, synth_out);
    if (plan->parsed())
      return run_plan(plan_tax, plan_scenario, plan_data, plan_out);
    if (train->parsed())
      return run_train(train_spec, train_tax, train_scenario, train_strategy,
                       train_seed, train_lambda, train_kd_mode,
                       train_kd_variant, train_tau1, train_tau2, train_data,
                       train_out);
    if (eval->parsed()) return run_eval(eval_ckpt, eval_tax, eval_data, eval_out);
    if (report->parsed()) return run_report(report_runs, report_tax, report_out);
    return kExitConfig;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const NumericError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
}
