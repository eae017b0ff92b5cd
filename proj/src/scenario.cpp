#include "incseg/scenario.hpp"

#include <algorithm>
#include <iomanip>
#include <set>
#include <sstream>

#include <json.hpp>

namespace incseg {

using nlohmann::json;
using nlohmann::ordered_json;

ScenarioKind parse_scenario(const std::string& name) {
  const std::string n = normalize_name(name);
  if (n == "sequential") return ScenarioKind::Sequential;
  if (n == "sequential-masked") return ScenarioKind::SequentialMasked;
  if (n == "disjoint") return ScenarioKind::Disjoint;
  if (n == "overlapped") return ScenarioKind::Overlapped;
  if (n == "coarse-to-fine" || n == "c2f") return ScenarioKind::CoarseToFine;
  throw ConfigError("unknown scenario \"" + name + "\"");
}

const char* scenario_name(ScenarioKind kind) {
  switch (kind) {
    case ScenarioKind::Sequential: return "sequential";
    case ScenarioKind::SequentialMasked: return "sequential-masked";
    case ScenarioKind::Disjoint: return "disjoint";
    case ScenarioKind::Overlapped: return "overlapped";
    case ScenarioKind::CoarseToFine: return "coarse-to-fine";
  }
  return "?";
}

namespace {

void check_step(const ClassTaxonomy& tax, ScenarioKind kind, std::size_t k) {
  if (k >= tax.num_steps())
    throw ConfigError("step " + std::to_string(k) + " out of range (K=" +
                      std::to_string(tax.num_steps()) + ")");
  if (kind == ScenarioKind::CoarseToFine) {
    if (!tax.has_hierarchy())
      throw ConfigError("coarse-to-fine requires a taxonomy with a hierarchy");
    if (tax.num_levels() != tax.num_steps())
      throw ConfigError("coarse-to-fine requires one hierarchy level per step");
  }
}

}  // namespace

std::vector<ClassId> transform_labels(ScenarioKind kind,
                                      const ClassTaxonomy& tax, std::size_t k,
                                      std::span<const ClassId> truth) {
  check_step(tax, kind, k);
  // step_of lookup table; sentinel entries trap invalid input.
  std::vector<int> step_of(tax.num_classes() + 1, -1);
  for (std::size_t j = 0; j < tax.num_steps(); ++j)
    for (ClassId c : tax.step_classes(j)) step_of[c] = static_cast<int>(j);

  std::vector<ClassId> out(truth.size());
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const ClassId c = truth[i];
    if (c == kBackground || c == kUnlabeled)
      throw DataError("ground truth contains sentinel label " +
                      std::to_string(c) + " at point " + std::to_string(i));
    if (kind == ScenarioKind::CoarseToFine) {
      out[i] = tax.ancestor(c, k);
      continue;
    }
    if (c > tax.num_classes() || step_of[c] < 0)
      throw DataError("ground truth contains unknown class id " +
                      std::to_string(c));
    const auto step = static_cast<std::size_t>(step_of[c]);
    switch (kind) {
      case ScenarioKind::Sequential:
        out[i] = (step <= k) ? c : kUnlabeled;
        break;
      case ScenarioKind::SequentialMasked:
        out[i] = (step == k) ? c : kUnlabeled;
        break;
      case ScenarioKind::Disjoint:
        out[i] = (step == k) ? c : (step < k ? kBackground : kUnlabeled);
        break;
      case ScenarioKind::Overlapped:
        out[i] = (step == k) ? c : kBackground;
        break;
      case ScenarioKind::CoarseToFine:
        break;  // handled above
    }
  }
  return out;
}

std::vector<ClassId> active_classes_for(ScenarioKind kind,
                                        const ClassTaxonomy& tax,
                                        std::size_t k) {
  check_step(tax, kind, k);
  std::vector<ClassId> active;
  switch (kind) {
    case ScenarioKind::Sequential:
      active = tax.cumulative_classes(k);
      break;
    case ScenarioKind::SequentialMasked:
      active = tax.step_classes(k);
      break;
    case ScenarioKind::Disjoint:
    case ScenarioKind::Overlapped:
      active.push_back(kBackground);
      for (ClassId c : tax.step_classes(k)) active.push_back(c);
      break;
    case ScenarioKind::CoarseToFine:
      active = tax.level_classes(k);
      break;
  }
  std::sort(active.begin(), active.end());
  return active;
}

StepDataset build_step(ScenarioKind kind, const ClassTaxonomy& tax,
                       std::size_t k, const DatasetIndex& data,
                       const std::filesystem::path& out_dir) {
  check_step(tax, kind, k);
  if (k >= data.groups.size())
    throw DataError("dataset has no group for step " + std::to_string(k));

  // Overlapped draws from the whole dataset: every scan with at least one
  // point of C_k. Other kinds use the step's own group.
  std::vector<ScanRecord> sources;
  if (kind == ScenarioKind::Overlapped) {
    std::set<ClassId> current(tax.step_classes(k).begin(),
                              tax.step_classes(k).end());
    for (const auto& group : data.groups) {
      for (const auto& rec : group) {
        const auto truth = read_label_file(rec.label, data.map);
        const bool qualifies =
            std::any_of(truth.begin(), truth.end(),
                        [&current](ClassId c) { return current.count(c) > 0; });
        if (qualifies) sources.push_back(rec);
      }
    }
    std::sort(sources.begin(), sources.end(),
              [](const ScanRecord& a, const ScanRecord& b) { return a.id < b.id; });
  } else {
    sources = data.groups[k];
  }

  StepDataset step;
  step.step = k;
  step.kind = kind;
  step.active_classes = active_classes_for(kind, tax, k);
  const std::filesystem::path label_dir =
      out_dir / ("step" + std::to_string(k)) / "labels";
  for (const auto& rec : sources) {
    const auto truth = read_label_file(rec.label, data.map);
    const auto transformed = transform_labels(kind, tax, k, truth);
    const std::filesystem::path out_label =
        label_dir / (rec.id.sequence + "_" + rec.id.frame + ".label");
    write_label_file(out_label, transformed);
    step.scans.push_back(StepEntry{rec.id, rec.bin, rec.label, out_label});
  }
  save_step_manifest(step, out_dir / ("step" + std::to_string(k) + ".json"));
  return step;
}

void save_step_manifest(const StepDataset& step,
                        const std::filesystem::path& manifest_path) {
  // Transformed-label paths are stored relative to the manifest so a plan
  // directory can be moved (and so reruns into different directories write
  // identical bytes). Source scan paths are kept as given.
  const std::filesystem::path base = manifest_path.parent_path();
  ordered_json doc;
  doc["step"] = step.step;
  doc["scenario"] = scenario_name(step.kind);
  doc["active_classes"] = step.active_classes;
  ordered_json scans = ordered_json::array();
  for (const auto& e : step.scans) {
    ordered_json s;
    s["sequence"] = e.id.sequence;
    s["frame"] = e.id.frame;
    s["bin"] = e.bin.string();
    s["truth_label"] = e.truth_label.string();
    s["step_label"] =
        std::filesystem::relative(e.step_label, base).generic_string();
    scans.push_back(std::move(s));
  }
  doc["scans"] = std::move(scans);
  write_text_file(manifest_path, doc.dump(2) + "\n");
}

StepDataset load_step_manifest(const std::filesystem::path& manifest_path) {
  json doc;
  try {
    doc = json::parse(read_text_file(manifest_path));
  } catch (const json::parse_error& e) {
    throw DataError(manifest_path.string() + ": JSON parse error: " + e.what());
  }
  StepDataset step;
  step.step = doc.at("step").get<std::size_t>();
  step.kind = parse_scenario(doc.at("scenario").get<std::string>());
  step.active_classes = doc.at("active_classes").get<std::vector<ClassId>>();
  const std::filesystem::path base = manifest_path.parent_path();
  for (const auto& s : doc.at("scans")) {
    std::filesystem::path step_label = s.at("step_label").get<std::string>();
    if (step_label.is_relative()) step_label = base / step_label;
    step.scans.push_back(StepEntry{
        {s.at("sequence").get<std::string>(), s.at("frame").get<std::string>()},
        s.at("bin").get<std::string>(),
        s.at("truth_label").get<std::string>(),
        std::move(step_label)});
  }
  return step;
}

PlanSummary summarize_plan(ScenarioKind kind, const ClassTaxonomy& tax,
                           const DatasetIndex& data) {
  PlanSummary out;
  out.dataset_class_counts.assign(tax.num_classes(), 0);
  for (std::size_t k = 0; k < tax.num_steps(); ++k) {
    if (k >= data.groups.size())
      throw DataError("dataset has no group for step " + std::to_string(k));
    StepSummary s;
    s.step = k;
    s.truth_class_counts.assign(tax.num_classes(), 0);
    s.scans = data.groups[k].size();
    for (const auto& rec : data.groups[k]) {
      const auto truth = read_label_file(rec.label, data.map);
      const auto transformed = transform_labels(kind, tax, k, truth);
      s.points += truth.size();
      for (std::size_t i = 0; i < truth.size(); ++i) {
        if (transformed[i] != kUnlabeled) ++s.labeled_points;
        if (truth[i] != kUnlabeled && truth[i] != kBackground)
          ++s.truth_class_counts[truth[i] - 1];
      }
    }
    for (std::size_t i = 0; i < tax.num_classes(); ++i)
      out.dataset_class_counts[i] += s.truth_class_counts[i];
    out.steps.push_back(std::move(s));
  }
  return out;
}

std::string plan_summary_table(const PlanSummary& summary,
                               const ClassTaxonomy& tax) {
  std::ostringstream os;
  os << std::left << std::setw(6) << "step" << std::right << std::setw(8)
     << "scans" << std::setw(12) << "points" << std::setw(12) << "labeled%"
     << "\n";
  for (const auto& s : summary.steps) {
    os << std::left << std::setw(6) << s.step << std::right << std::setw(8)
       << s.scans << std::setw(12) << s.points << std::setw(12) << std::fixed
       << std::setprecision(2) << 100.0 * s.labeled_fraction() << "\n";
  }
  os << "\nper-class share of points by group (each class sums to 1):\n";
  os << std::left << std::setw(16) << "class";
  for (const auto& s : summary.steps)
    os << std::right << std::setw(10) << ("D" + std::to_string(s.step));
  os << "\n";
  for (std::size_t i = 0; i < tax.num_classes(); ++i) {
    os << std::left << std::setw(16) << tax.names()[i];
    for (const auto& s : summary.steps) {
      const double denom =
          static_cast<double>(summary.dataset_class_counts[i]);
      const double share =
          denom > 0 ? static_cast<double>(s.truth_class_counts[i]) / denom : 0;
      os << std::right << std::setw(10) << std::fixed << std::setprecision(3)
         << share;
    }
    os << "\n";
  }
  return os.str();
}

}  // namespace incseg
