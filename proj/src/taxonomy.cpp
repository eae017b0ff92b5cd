#include "incseg/taxonomy.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

namespace incseg {

using nlohmann::json;
using nlohmann::ordered_json;

ClassTaxonomy::ClassTaxonomy(
    std::vector<std::string> names, std::vector<std::vector<ClassId>> steps,
    std::optional<std::vector<std::vector<ClassId>>> hierarchy)
    : names_(std::move(names)),
      steps_(std::move(steps)),
      hierarchy_(std::move(hierarchy)) {
  rebuild_fine_classes();
  validate();
}

void ClassTaxonomy::rebuild_fine_classes() {
  fine_classes_.clear();
  if (hierarchy_.has_value()) {
    // The hierarchy maps are stored aligned with the finest step's classes,
    // sorted ascending by id.
    if (!steps_.empty()) {
      fine_classes_ = steps_.back();
      std::sort(fine_classes_.begin(), fine_classes_.end());
    }
  }
}

std::size_t ClassTaxonomy::num_levels() const {
  return hierarchy_ ? hierarchy_->size() : 0;
}

const std::string& ClassTaxonomy::name_of(ClassId c) const {
  static const std::string kBackgroundName = "background";
  static const std::string kUnlabeledName = "unlabeled";
  if (c == kBackground) return kBackgroundName;
  if (c == kUnlabeled) return kUnlabeledName;
  if (c == 0 || c > names_.size())
    throw ConfigError("unknown class id " + std::to_string(c));
  return names_[c - 1];
}

ClassId ClassTaxonomy::id_of(std::string_view name) const {
  const std::string key = normalize_name(name);
  if (key == "background") return kBackground;
  if (key == "unlabeled") return kUnlabeled;
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (normalize_name(names_[i]) == key) return static_cast<ClassId>(i + 1);
  }
  throw ConfigError("unknown class name \"" + std::string(name) + "\"");
}

const std::vector<ClassId>& ClassTaxonomy::step_classes(std::size_t k) const {
  if (k >= steps_.size())
    throw ConfigError("step index " + std::to_string(k) + " out of range (K=" +
                      std::to_string(steps_.size()) + ")");
  return steps_[k];
}

std::size_t ClassTaxonomy::step_of(ClassId c) const {
  for (std::size_t k = 0; k < steps_.size(); ++k) {
    for (ClassId s : steps_[k]) {
      if (s == c) return k;
    }
  }
  throw ConfigError("class id " + std::to_string(c) + " is in no step");
}

std::vector<ClassId> ClassTaxonomy::cumulative_classes(std::size_t k) const {
  if (k >= steps_.size())
    throw ConfigError("step index " + std::to_string(k) + " out of range (K=" +
                      std::to_string(steps_.size()) + ")");
  std::vector<ClassId> out;
  for (std::size_t j = 0; j <= k; ++j)
    out.insert(out.end(), steps_[j].begin(), steps_[j].end());
  std::sort(out.begin(), out.end());
  return out;
}

const std::vector<ClassId>& ClassTaxonomy::fine_classes() const {
  if (!hierarchy_) throw ConfigError("taxonomy has no hierarchy");
  return fine_classes_;
}

bool ClassTaxonomy::is_fine_class(ClassId c) const {
  return hierarchy_ &&
         std::binary_search(fine_classes_.begin(), fine_classes_.end(), c);
}

std::vector<ClassId> ClassTaxonomy::level_classes(std::size_t level) const {
  if (!hierarchy_) throw ConfigError("taxonomy has no hierarchy");
  if (level >= hierarchy_->size())
    throw ConfigError("hierarchy level " + std::to_string(level) +
                      " out of range");
  std::set<ClassId> uniq((*hierarchy_)[level].begin(),
                         (*hierarchy_)[level].end());
  return {uniq.begin(), uniq.end()};
}

ClassId ClassTaxonomy::ancestor(ClassId fine, std::size_t level) const {
  if (fine == kBackground || fine == kUnlabeled) return fine;
  if (!hierarchy_)
    throw ConfigError("ancestor query on a taxonomy without a hierarchy");
  if (level >= hierarchy_->size())
    throw ConfigError("hierarchy level " + std::to_string(level) +
                      " out of range");
  const auto it =
      std::lower_bound(fine_classes_.begin(), fine_classes_.end(), fine);
  if (it == fine_classes_.end() || *it != fine)
    throw ConfigError("class id " + std::to_string(fine) +
                      " is not a fine class");
  const auto idx = static_cast<std::size_t>(it - fine_classes_.begin());
  return (*hierarchy_)[level][idx];
}

ClassId ClassTaxonomy::ancestor_of_any(ClassId c, std::size_t level) const {
  if (c == kBackground || c == kUnlabeled) return c;
  if (!hierarchy_)
    throw ConfigError("ancestor query on a taxonomy without a hierarchy");
  if (is_fine_class(c)) return ancestor(c, level);
  // Find the deepest level where c appears and any fine descendant of it.
  for (std::size_t l = hierarchy_->size(); l-- > 0;) {
    for (std::size_t idx = 0; idx < fine_classes_.size(); ++idx) {
      if ((*hierarchy_)[l][idx] == c) {
        if (level > l)
          throw ConfigError("class " + name_of(c) + " has no ancestor at level " +
                            std::to_string(level));
        return (*hierarchy_)[level][idx];
      }
    }
  }
  throw ConfigError("class id " + std::to_string(c) +
                    " does not appear in the hierarchy");
}

void ClassTaxonomy::validate() const {
  if (names_.empty()) throw ConfigError("taxonomy has no classes");
  if (names_.size() > kMaxClassId)
    throw ConfigError("too many classes (max " + std::to_string(kMaxClassId) +
                      ")");
  std::set<std::string> seen;
  for (const auto& n : names_) {
    const std::string key = normalize_name(n);
    if (key.empty()) throw ConfigError("empty class name");
    if (key == "background" || key == "unlabeled")
      throw ConfigError("class name \"" + n + "\" is reserved");
    if (!seen.insert(key).second)
      throw ConfigError("duplicate class name \"" + n + "\"");
  }

  if (steps_.empty()) throw ConfigError("taxonomy has no steps");
  std::vector<int> step_of_id(names_.size() + 1, -1);
  for (std::size_t k = 0; k < steps_.size(); ++k) {
    if (steps_[k].empty())
      throw ConfigError("step " + std::to_string(k) + " is empty");
    for (ClassId c : steps_[k]) {
      if (c == 0 || c > names_.size())
        throw ConfigError("step " + std::to_string(k) + " contains invalid id " +
                          std::to_string(c));
      if (step_of_id[c] >= 0)
        throw ConfigError("class \"" + name_of(c) + "\" appears in steps " +
                          std::to_string(step_of_id[c]) + " and " +
                          std::to_string(k));
      step_of_id[c] = static_cast<int>(k);
    }
  }
  for (ClassId c = 1; c <= names_.size(); ++c) {
    if (step_of_id[c] < 0)
      throw ConfigError("class \"" + name_of(c) + "\" belongs to no step");
  }

  if (!hierarchy_) return;
  const auto& levels = *hierarchy_;
  if (levels.empty()) throw ConfigError("hierarchy present but has no levels");
  if (fine_classes_.empty())
    throw ConfigError("hierarchy present but the fine class set is empty");
  for (std::size_t l = 0; l < levels.size(); ++l) {
    if (levels[l].size() != fine_classes_.size())
      throw ConfigError("hierarchy level " + std::to_string(l) +
                        " is not total over the fine classes");
    for (ClassId c : levels[l]) {
      if (c == 0 || c > names_.size())
        throw ConfigError("hierarchy level " + std::to_string(l) +
                          " maps to invalid id " + std::to_string(c));
    }
  }
  // Finest level must be the identity.
  const auto& last = levels.back();
  for (std::size_t idx = 0; idx < fine_classes_.size(); ++idx) {
    if (last[idx] != fine_classes_[idx])
      throw ConfigError("finest hierarchy level is not the identity on \"" +
                        name_of(fine_classes_[idx]) + "\"");
  }
  // Composition consistency: two fine classes sharing an ancestor at a finer
  // level must share ancestors at every coarser level.
  for (std::size_t lo = 0; lo < levels.size(); ++lo) {
    for (std::size_t hi = lo + 1; hi < levels.size(); ++hi) {
      std::map<ClassId, ClassId> coarse_of;
      for (std::size_t idx = 0; idx < fine_classes_.size(); ++idx) {
        const ClassId at_hi = levels[hi][idx];
        const ClassId at_lo = levels[lo][idx];
        auto [it, inserted] = coarse_of.emplace(at_hi, at_lo);
        if (!inserted && it->second != at_lo)
          throw ConfigError("hierarchy is inconsistent: class \"" +
                            name_of(at_hi) + "\" at level " +
                            std::to_string(hi) + " has two ancestors at level " +
                            std::to_string(lo));
      }
    }
  }
  // When levels align with steps, level-l classes must come from step l.
  if (levels.size() == steps_.size()) {
    for (std::size_t l = 0; l < levels.size(); ++l) {
      std::set<ClassId> allowed(steps_[l].begin(), steps_[l].end());
      for (ClassId c : levels[l]) {
        if (!allowed.count(c))
          throw ConfigError("hierarchy level " + std::to_string(l) +
                            " uses class \"" + name_of(c) +
                            "\" which is not in step " + std::to_string(l));
      }
    }
  }
}

namespace {

std::size_t line_of_offset(const std::string& text, std::size_t byte) {
  std::size_t line = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') ++line;
  }
  return line;
}

}  // namespace

ClassTaxonomy parse_taxonomy_json(const std::string& text,
                                  const std::string& origin) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(origin + ":" +
                      std::to_string(line_of_offset(text, e.byte)) +
                      ": JSON parse error: " + e.what());
  }
  try {
    if (!doc.is_object() || !doc.contains("names") || !doc.contains("steps"))
      throw ConfigError("taxonomy file must contain \"names\" and \"steps\"");
    std::vector<std::string> names =
        doc.at("names").get<std::vector<std::string>>();

    // Resolve step entries by name against the declared id order.
    auto id_by_name = [&names](const std::string& n) -> ClassId {
      const std::string key = normalize_name(n);
      for (std::size_t i = 0; i < names.size(); ++i) {
        if (normalize_name(names[i]) == key)
          return static_cast<ClassId>(i + 1);
      }
      throw ConfigError("unknown class name \"" + n + "\"");
    };

    std::vector<std::vector<ClassId>> steps;
    for (const auto& step : doc.at("steps")) {
      std::vector<ClassId> ids;
      for (const auto& n : step) ids.push_back(id_by_name(n.get<std::string>()));
      steps.push_back(std::move(ids));
    }

    std::optional<std::vector<std::vector<ClassId>>> hierarchy;
    if (doc.contains("hierarchy")) {
      // Determine the fine class set from the finest step, ids ascending,
      // then read every level as a total fine-name -> level-name map.
      std::vector<ClassId> fine = steps.back();
      std::sort(fine.begin(), fine.end());
      std::vector<std::vector<ClassId>> levels;
      std::size_t level_idx = 0;
      for (const auto& level : doc.at("hierarchy")) {
        std::vector<ClassId> mapped(fine.size(), 0);
        std::vector<bool> found(fine.size(), false);
        for (const auto& [k, v] : level.items()) {
          const ClassId f = id_by_name(k);
          const auto it = std::lower_bound(fine.begin(), fine.end(), f);
          if (it == fine.end() || *it != f)
            throw ConfigError("hierarchy level " + std::to_string(level_idx) +
                              ": \"" + k + "\" is not a fine class");
          const auto idx = static_cast<std::size_t>(it - fine.begin());
          mapped[idx] = id_by_name(v.get<std::string>());
          found[idx] = true;
        }
        for (std::size_t i = 0; i < fine.size(); ++i) {
          if (!found[i])
            throw ConfigError("hierarchy level " + std::to_string(level_idx) +
                              " lacks an entry for fine class \"" +
                              names[fine[i] - 1] + "\"");
        }
        levels.push_back(std::move(mapped));
        ++level_idx;
      }
      hierarchy = std::move(levels);
    }
    return ClassTaxonomy(std::move(names), std::move(steps),
                         std::move(hierarchy));
  } catch (const json::exception& e) {
    throw ConfigError(origin + ": malformed taxonomy: " + e.what());
  }
}

ClassTaxonomy load_taxonomy(const std::filesystem::path& path) {
  return parse_taxonomy_json(read_text_file(path), path.string());
}

std::string taxonomy_to_json(const ClassTaxonomy& tax) {
  ordered_json doc;
  doc["names"] = tax.names();
  ordered_json steps = ordered_json::array();
  for (std::size_t k = 0; k < tax.num_steps(); ++k) {
    ordered_json step = ordered_json::array();
    for (ClassId c : tax.step_classes(k)) step.push_back(tax.name_of(c));
    steps.push_back(std::move(step));
  }
  doc["steps"] = std::move(steps);
  if (tax.has_hierarchy()) {
    ordered_json levels = ordered_json::array();
    for (std::size_t l = 0; l < tax.num_levels(); ++l) {
      ordered_json level = ordered_json::object();
      for (ClassId f : tax.fine_classes())
        level[tax.name_of(f)] = tax.name_of(tax.ancestor(f, l));
      levels.push_back(std::move(level));
    }
    doc["hierarchy"] = std::move(levels);
  }
  return doc.dump(2) + "\n";
}

void save_taxonomy(const ClassTaxonomy& tax,
                   const std::filesystem::path& path) {
  write_text_file(path, taxonomy_to_json(tax));
}

namespace {

ClassTaxonomy make_cil() {
  // 19 SemanticKITTI classes split into three steps by point frequency.
  std::vector<std::string> names{
      "road",        "parking",      "sidewalk", "other-ground", "vegetation",
      "terrain",     "building",     "fence",    "trunk",        "pole",
      "traffic-sign", "bicycle",     "motorcycle", "truck",      "other-vehicle",
      "person",      "bicyclist",    "motorcyclist", "car"};
  std::vector<std::vector<ClassId>> steps{
      {1, 2, 3, 4, 5, 6},
      {7, 8, 9, 10, 11},
      {12, 13, 14, 15, 16, 17, 18, 19}};
  return ClassTaxonomy(std::move(names), std::move(steps), std::nullopt);
}

ClassTaxonomy make_c2f() {
  // Same 19 fine classes, refined in three levels: 3 coarse groups (one per
  // CIL step), 6 mid groups, then the fine classes themselves.
  std::vector<std::string> names{
      // level 0
      "ground", "structure", "object",
      // level 1
      "flat-ground", "rough-ground", "construction", "thin-structure",
      "vehicle", "human",
      // level 2 (fine)
      "road", "parking", "sidewalk", "other-ground", "vegetation", "terrain",
      "building", "fence", "trunk", "pole", "traffic-sign", "bicycle",
      "motorcycle", "truck", "other-vehicle", "person", "bicyclist",
      "motorcyclist", "car"};
  std::vector<std::vector<ClassId>> steps{
      {1, 2, 3}, {4, 5, 6, 7, 8, 9},
      {10, 11, 12, 13, 14, 15, 16, 17, 18, 19, 20, 21, 22, 23, 24, 25, 26, 27,
       28}};

  auto tax_flat = ClassTaxonomy(names, steps, std::nullopt);
  auto mid = [&](const char* n) { return tax_flat.id_of(n); };

  // fine name -> mid name
  const std::vector<std::pair<const char*, const char*>> mid_of{
      {"road", "flat-ground"},        {"parking", "flat-ground"},
      {"sidewalk", "flat-ground"},    {"other-ground", "flat-ground"},
      {"vegetation", "rough-ground"}, {"terrain", "rough-ground"},
      {"building", "construction"},   {"fence", "construction"},
      {"trunk", "thin-structure"},    {"pole", "thin-structure"},
      {"traffic-sign", "thin-structure"},
      {"car", "vehicle"},             {"bicycle", "vehicle"},
      {"motorcycle", "vehicle"},      {"truck", "vehicle"},
      {"other-vehicle", "vehicle"},   {"person", "human"},
      {"bicyclist", "human"},         {"motorcyclist", "human"}};
  // mid name -> coarse name
  const std::vector<std::pair<const char*, const char*>> coarse_of{
      {"flat-ground", "ground"},    {"rough-ground", "ground"},
      {"construction", "structure"}, {"thin-structure", "structure"},
      {"vehicle", "object"},        {"human", "object"}};

  std::vector<ClassId> fine = steps.back();
  std::sort(fine.begin(), fine.end());
  std::vector<std::vector<ClassId>> levels(3,
                                           std::vector<ClassId>(fine.size()));
  for (std::size_t i = 0; i < fine.size(); ++i) {
    const std::string fname = tax_flat.name_of(fine[i]);
    ClassId m = 0;
    for (const auto& [f, g] : mid_of) {
      if (normalize_name(f) == normalize_name(fname)) m = mid(g);
    }
    ClassId c = 0;
    for (const auto& [mm, cc] : coarse_of) {
      if (mid(mm) == m) c = mid(cc);
    }
    levels[0][i] = c;
    levels[1][i] = m;
    levels[2][i] = fine[i];
  }
  return ClassTaxonomy(std::move(names), std::move(steps), std::move(levels));
}

ClassTaxonomy make_synth8() {
  std::vector<std::string> names{"ring-inner", "ring-outer", "mound",
                                 "wall",       "crate",      "post",
                                 "canopy",     "figure"};
  std::vector<std::vector<ClassId>> steps{{1, 2, 3}, {4, 5}, {6, 7, 8}};
  return ClassTaxonomy(std::move(names), std::move(steps), std::nullopt);
}

}  // namespace

const ClassTaxonomy& builtin_cil() {
  static const ClassTaxonomy tax = make_cil();
  return tax;
}

const ClassTaxonomy& builtin_c2f() {
  static const ClassTaxonomy tax = make_c2f();
  return tax;
}

const ClassTaxonomy& builtin_synth8() {
  static const ClassTaxonomy tax = make_synth8();
  return tax;
}

const std::vector<std::vector<std::string>>& cil_sequence_groups() {
  static const std::vector<std::vector<std::string>> groups{
      {"01", "02", "03"}, {"04", "05", "09", "10"}, {"00", "06", "07"}};
  return groups;
}

const std::vector<std::string>& cil_validation_sequences() {
  static const std::vector<std::string> val{"08"};
  return val;
}

ClassTaxonomy resolve_taxonomy(const std::string& name_or_path) {
  const std::string key = normalize_name(name_or_path);
  if (key == "cil") return builtin_cil();
  if (key == "c2f") return builtin_c2f();
  if (key == "synth8") return builtin_synth8();
  return load_taxonomy(name_or_path);
}

}  // namespace incseg
