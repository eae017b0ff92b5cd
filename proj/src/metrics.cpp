#include "incseg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include <json.hpp>

namespace incseg {

using nlohmann::json;
using nlohmann::ordered_json;

ConfusionMatrix::ConfusionMatrix(std::vector<ClassId> classes)
    : classes_(std::move(classes)),
      counts_(classes_.size() * classes_.size(), 0) {
  index_.fill(0);
  for (std::size_t i = 0; i < classes_.size(); ++i) {
    if (classes_[i] == kUnlabeled)
      throw ConfigError("the unlabeled sentinel cannot be an evaluated class");
    if (index_[classes_[i]] != 0)
      throw ConfigError("duplicate class in confusion matrix");
    index_[classes_[i]] = static_cast<int>(i) + 1;
  }
}

std::uint64_t ConfusionMatrix::count(ClassId truth, ClassId pred) const {
  const int t = index_of(truth), p = index_of(pred);
  if (t < 0 || p < 0) throw DataError("class not tracked by confusion matrix");
  return counts_[static_cast<std::size_t>(t) * classes_.size() +
                 static_cast<std::size_t>(p)];
}

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t s = 0;
  for (auto c : counts_) s += c;
  return s;
}

void ConfusionMatrix::add(ClassId truth, ClassId pred, std::uint64_t n) {
  if (truth == kUnlabeled) return;
  const int t = index_of(truth), p = index_of(pred);
  if (t < 0)
    throw DataError("ground-truth class " + std::to_string(truth) +
                    " is outside the evaluation class set");
  if (p < 0)
    throw DataError("predicted class " + std::to_string(pred) +
                    " is outside the evaluation class set");
  counts_[static_cast<std::size_t>(t) * classes_.size() +
          static_cast<std::size_t>(p)] += n;
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  if (other.classes_ != classes_)
    throw ConfigError("cannot merge confusion matrices over different classes");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
}

std::uint64_t ConfusionMatrix::row_sum(ClassId c) const {
  const int t = index_of(c);
  if (t < 0) throw DataError("class not tracked by confusion matrix");
  std::uint64_t s = 0;
  for (std::size_t j = 0; j < classes_.size(); ++j)
    s += counts_[static_cast<std::size_t>(t) * classes_.size() + j];
  return s;
}

std::uint64_t ConfusionMatrix::col_sum(ClassId c) const {
  const int p = index_of(c);
  if (p < 0) throw DataError("class not tracked by confusion matrix");
  std::uint64_t s = 0;
  for (std::size_t i = 0; i < classes_.size(); ++i)
    s += counts_[i * classes_.size() + static_cast<std::size_t>(p)];
  return s;
}

std::uint64_t ConfusionMatrix::diagonal(ClassId c) const {
  const int i = index_of(c);
  if (i < 0) throw DataError("class not tracked by confusion matrix");
  return counts_[static_cast<std::size_t>(i) * classes_.size() +
                 static_cast<std::size_t>(i)];
}

ConfusionMatrix ConfusionMatrix::aggregate(
    const std::vector<ClassId>& target_classes,
    const std::vector<ClassId>& class_of_source) const {
  if (class_of_source.size() != classes_.size())
    throw ConfigError("aggregate: mapping does not cover the source classes");
  ConfusionMatrix out(target_classes);
  for (std::size_t t = 0; t < classes_.size(); ++t) {
    for (std::size_t p = 0; p < classes_.size(); ++p) {
      const std::uint64_t n = counts_[t * classes_.size() + p];
      if (n > 0) out.add(class_of_source[t], class_of_source[p], n);
    }
  }
  return out;
}

void accumulate(ConfusionMatrix& cm, std::span<const ClassId> truth,
                std::span<const ClassId> pred) {
  if (truth.size() != pred.size())
    throw DataError("accumulate: truth and prediction lengths differ");
  for (std::size_t i = 0; i < truth.size(); ++i) cm.add(truth[i], pred[i]);
}

std::optional<double> iou(const ConfusionMatrix& cm, ClassId c) {
  const std::uint64_t tp = cm.diagonal(c);
  const std::uint64_t denom = cm.row_sum(c) + cm.col_sum(c) - tp;
  if (denom == 0) return std::nullopt;
  return static_cast<double>(tp) / static_cast<double>(denom);
}

namespace {

double mean_defined_iou(const ConfusionMatrix& cm,
                        std::span<const ClassId> classes) {
  double sum = 0;
  std::size_t n = 0;
  for (ClassId c : classes) {
    if (!cm.has_class(c)) continue;
    if (const auto v = iou(cm, c)) {
      sum += *v;
      ++n;
    }
  }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

}  // namespace

StepReport make_report(const ConfusionMatrix& cm, const ClassTaxonomy& tax,
                       std::size_t step, bool coarse_to_fine) {
  if (cm.classes().empty()) throw ConfigError("report on an empty matrix");
  StepReport rep;
  rep.step = step;
  rep.confusion = cm;

  for (ClassId c : cm.classes()) {
    if (c == kBackground) continue;  // never scored
    rep.eval_classes.push_back(c);
    rep.per_class_iou.push_back(iou(cm, c));
  }

  // Headline mean and its spread over the defined per-class values.
  double sum = 0;
  std::size_t n_defined = 0;
  for (const auto& v : rep.per_class_iou) {
    if (v) {
      sum += *v;
      ++n_defined;
    }
  }
  rep.miou = n_defined == 0 ? 0.0 : sum / static_cast<double>(n_defined);
  double var = 0;
  for (const auto& v : rep.per_class_iou) {
    if (v) var += (*v - rep.miou) * (*v - rep.miou);
  }
  rep.sigma =
      n_defined == 0 ? 0.0 : std::sqrt(var / static_cast<double>(n_defined));

  // Per-step means. In a coarse-to-fine run the evaluated classes belong to
  // hierarchy level `step`; earlier levels are scored on the aggregated
  // matrix, which is exact on counts.
  for (std::size_t j = 0; j <= step; ++j) {
    if (!coarse_to_fine) {
      rep.miou_steps.push_back(mean_defined_iou(cm, tax.step_classes(j)));
    } else if (j == step) {
      rep.miou_steps.push_back(rep.miou);
    } else {
      std::vector<ClassId> targets = tax.level_classes(j);
      std::vector<ClassId> mapping;
      mapping.reserve(cm.classes().size());
      bool has_bg = false;
      for (ClassId c : cm.classes()) {
        if (c == kBackground) {
          mapping.push_back(kBackground);
          has_bg = true;
        } else {
          mapping.push_back(tax.ancestor_of_any(c, j));
        }
      }
      if (has_bg) targets.insert(targets.begin(), kBackground);
      const ConfusionMatrix up = cm.aggregate(targets, mapping);
      rep.miou_steps.push_back(mean_defined_iou(up, tax.level_classes(j)));
    }
  }

  // Point accuracy and precision on the native matrix.
  const std::uint64_t total = cm.total();
  std::uint64_t trace = 0;
  for (ClassId c : cm.classes()) trace += cm.diagonal(c);
  rep.pa = total == 0 ? 0.0
                      : static_cast<double>(trace) / static_cast<double>(total);
  double pp_sum = 0;
  std::size_t pp_n = 0;
  for (ClassId c : rep.eval_classes) {
    const std::uint64_t col = cm.col_sum(c);
    if (col == 0) continue;
    pp_sum += static_cast<double>(cm.diagonal(c)) / static_cast<double>(col);
    ++pp_n;
  }
  rep.pp = pp_n == 0 ? 0.0 : pp_sum / static_cast<double>(pp_n);
  return rep;
}

std::string report_to_json(const StepReport& rep, const ClassTaxonomy& tax) {
  ordered_json doc;
  doc["step"] = rep.step;
  doc["scenario"] = rep.scenario;
  ordered_json per_class = ordered_json::object();
  for (std::size_t i = 0; i < rep.eval_classes.size(); ++i) {
    const auto& v = rep.per_class_iou[i];
    if (v) {
      per_class[tax.name_of(rep.eval_classes[i])] = *v;
    } else {
      per_class[tax.name_of(rep.eval_classes[i])] = nullptr;
    }
  }
  doc["per_class_iou"] = std::move(per_class);
  doc["miou_steps"] = rep.miou_steps;
  doc["miou"] = rep.miou;
  doc["pa"] = rep.pa;
  doc["pp"] = rep.pp;
  doc["sigma"] = rep.sigma;
  doc["sigma_kind"] = "population";
  ordered_json confusion;
  confusion["classes"] = rep.confusion.classes();
  ordered_json rows = ordered_json::array();
  for (ClassId t : rep.confusion.classes()) {
    ordered_json row = ordered_json::array();
    for (ClassId p : rep.confusion.classes())
      row.push_back(rep.confusion.count(t, p));
    rows.push_back(std::move(row));
  }
  confusion["counts"] = std::move(rows);
  doc["confusion"] = std::move(confusion);
  ordered_json ip;
  ip["candidates"] = rep.inpaint_candidates;
  ip["inpainted"] = rep.inpaint_inpainted;
  doc["inpaint"] = std::move(ip);
  return doc.dump(2) + "\n";
}

StepReport report_from_json(const std::string& text,
                            const std::string& origin) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw DataError(origin + ": JSON parse error: " + e.what());
  }
  StepReport rep;
  rep.step = doc.at("step").get<std::size_t>();
  rep.scenario = doc.value("scenario", "");
  rep.miou_steps = doc.at("miou_steps").get<std::vector<double>>();
  rep.miou = doc.at("miou").get<double>();
  rep.pa = doc.at("pa").get<double>();
  rep.pp = doc.at("pp").get<double>();
  rep.sigma = doc.at("sigma").get<double>();
  rep.inpaint_candidates = doc.at("inpaint").at("candidates").get<std::uint64_t>();
  rep.inpaint_inpainted = doc.at("inpaint").at("inpainted").get<std::uint64_t>();
  const auto classes =
      doc.at("confusion").at("classes").get<std::vector<ClassId>>();
  ConfusionMatrix cm(classes);
  const auto& rows = doc.at("confusion").at("counts");
  for (std::size_t t = 0; t < classes.size(); ++t) {
    for (std::size_t p = 0; p < classes.size(); ++p) {
      const auto n = rows.at(t).at(p).get<std::uint64_t>();
      if (n > 0) cm.add(classes[t], classes[p], n);
    }
  }
  rep.confusion = std::move(cm);
  for (ClassId c : classes) {
    if (c == kBackground) continue;
    rep.eval_classes.push_back(c);
    rep.per_class_iou.push_back(iou(rep.confusion, c));
  }
  return rep;
}

std::string report_csv_row_header(std::size_t num_steps) {
  std::ostringstream os;
  os << "step";
  for (std::size_t j = 0; j < num_steps; ++j) os << ",miou_" << j;
  os << ",miou,pa,pp,sigma";
  return os.str();
}

std::string report_csv_row(const StepReport& rep, std::size_t num_steps) {
  std::ostringstream os;
  os << rep.step << std::fixed << std::setprecision(6);
  for (std::size_t j = 0; j < num_steps; ++j) {
    os << ",";
    if (j < rep.miou_steps.size()) os << rep.miou_steps[j];
  }
  os << "," << rep.miou << "," << rep.pa << "," << rep.pp << "," << rep.sigma;
  return os.str();
}

std::string report_text_table(std::span<const StepReport> reports,
                              const ClassTaxonomy& tax) {
  const std::size_t k_steps = tax.num_steps();
  std::ostringstream os;
  os << std::left << std::setw(6) << "step";
  for (std::size_t j = 0; j < k_steps; ++j)
    os << std::right << std::setw(9) << ("mIoU_" + std::to_string(j));
  os << std::right << std::setw(9) << "mIoU" << std::setw(9) << "PA"
     << std::setw(9) << "PP" << std::setw(9) << "sigma" << "\n";
  for (const auto& rep : reports) {
    os << std::left << std::setw(6) << rep.step << std::fixed
       << std::setprecision(1);
    for (std::size_t j = 0; j < k_steps; ++j) {
      if (j < rep.miou_steps.size()) {
        os << std::right << std::setw(9) << 100.0 * rep.miou_steps[j];
      } else {
        os << std::right << std::setw(9) << "-";
      }
    }
    os << std::right << std::setw(9) << 100.0 * rep.miou << std::setw(9)
       << 100.0 * rep.pa << std::setw(9) << 100.0 * rep.pp << std::setw(9)
       << 100.0 * rep.sigma << "\n";
  }
  return os.str();
}

std::string per_class_csv(const StepReport& rep, const ClassTaxonomy& tax) {
  std::ostringstream os;
  os << "class,iou\n" << std::fixed << std::setprecision(6);
  for (std::size_t i = 0; i < rep.eval_classes.size(); ++i) {
    os << tax.name_of(rep.eval_classes[i]) << ",";
    if (rep.per_class_iou[i]) {
      os << *rep.per_class_iou[i];
    } else {
      os << "undefined";
    }
    os << "\n";
  }
  os << "miou," << rep.miou << "\n";
  os << "sigma," << rep.sigma << "\n";
  os << "pa," << rep.pa << "\n";
  os << "pp," << rep.pp << "\n";
  return os.str();
}

}  // namespace incseg
