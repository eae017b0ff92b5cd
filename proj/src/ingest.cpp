#include "incseg/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <set>

#include <json.hpp>

namespace incseg {

using nlohmann::json;
using nlohmann::ordered_json;

LearningMap::LearningMap(std::unordered_map<std::uint16_t, ClassId> table,
                         bool strict)
    : table_(std::move(table)), strict_(strict) {}

ClassId LearningMap::apply(std::uint16_t raw) const {
  const auto it = table_.find(raw);
  if (it != table_.end()) return it->second;
  if (strict_)
    throw DataError("raw label id " + std::to_string(raw) +
                    " missing from the learning map (strict mode)");
  ++unmapped_;
  return kUnlabeled;
}

LearningMap identity_learning_map(const ClassTaxonomy& tax) {
  std::unordered_map<std::uint16_t, ClassId> t;
  t.emplace(kBackground, kBackground);
  t.emplace(kUnlabeled, kUnlabeled);
  for (ClassId c = 1; c <= tax.num_classes(); ++c) t.emplace(c, c);
  return LearningMap(std::move(t), /*strict=*/true);
}

LearningMap load_learning_map(const std::filesystem::path& path,
                              const ClassTaxonomy& tax, bool strict) {
  json doc;
  try {
    doc = json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": JSON parse error: " + e.what());
  }
  if (!doc.is_object())
    throw ConfigError(path.string() + ": learning map must be an object");
  std::unordered_map<std::uint16_t, ClassId> t;
  for (const auto& [key, value] : doc.items()) {
    std::size_t pos = 0;
    unsigned long raw = 0;
    try {
      raw = std::stoul(key, &pos);
    } catch (const std::exception&) {
      throw ConfigError(path.string() + ": raw id \"" + key +
                        "\" is not a number");
    }
    if (pos != key.size() || raw > 0xffff)
      throw ConfigError(path.string() + ": raw id \"" + key +
                        "\" is out of range");
    const ClassId mapped = tax.id_of(value.get<std::string>());
    t.emplace(static_cast<std::uint16_t>(raw), mapped);
  }
  return LearningMap(std::move(t), strict);
}

std::vector<ClassId> read_label_file(const std::filesystem::path& label_path,
                                     const LearningMap& map) {
  const auto bytes = read_file_bytes(label_path);
  if (bytes.size() % 4 != 0)
    throw DataError(label_path.string() + ": truncated label record (" +
                    std::to_string(bytes.size()) + " bytes)");
  const std::size_t n = bytes.size() / 4;
  std::vector<ClassId> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint32_t word = load_le_u32(bytes.data() + 4 * i);
    // Low 16 bits: semantic id. High 16 bits: instance id, discarded.
    labels[i] = map.apply(static_cast<std::uint16_t>(word & 0xffffu));
  }
  return labels;
}

LabeledCloud read_scan(const std::filesystem::path& bin_path,
                       const std::filesystem::path& label_path,
                       const LearningMap& map) {
  const auto bytes = read_file_bytes(bin_path);
  if (bytes.size() % 16 != 0)
    throw DataError(bin_path.string() + ": truncated scan record (" +
                    std::to_string(bytes.size()) + " bytes)");
  const std::size_t n = bytes.size() / 16;
  if (n == 0) throw DataError(bin_path.string() + ": empty scan");

  LabeledCloud cloud;
  cloud.points.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::byte* rec = bytes.data() + 16 * i;
    auto& p = cloud.points[i];
    p.x = load_le_f32(rec);
    p.y = load_le_f32(rec + 4);
    p.z = load_le_f32(rec + 8);
    p.intensity = load_le_f32(rec + 12);
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z))
      throw DataError(bin_path.string() + ": non-finite coordinate at point " +
                      std::to_string(i));
  }
  cloud.labels = read_label_file(label_path, map);
  if (cloud.labels.size() != n)
    throw DataError(label_path.string() + ": " +
                    std::to_string(cloud.labels.size()) + " labels for " +
                    std::to_string(n) + " points in " + bin_path.string());
  return cloud;
}

void write_label_file(const std::filesystem::path& label_path,
                      std::span<const ClassId> labels) {
  std::vector<std::byte> bytes(labels.size() * 4);
  for (std::size_t i = 0; i < labels.size(); ++i)
    store_le_u32(bytes.data() + 4 * i, labels[i]);
  write_file_bytes(label_path, bytes);
}

void write_scan(const std::filesystem::path& bin_path,
                const std::filesystem::path& label_path,
                const LabeledCloud& cloud) {
  if (cloud.labels.size() != cloud.points.size())
    throw DataError("cloud " + cloud.id.str() + ": " +
                    std::to_string(cloud.labels.size()) + " labels for " +
                    std::to_string(cloud.points.size()) + " points");
  std::vector<std::byte> bytes(cloud.points.size() * 16);
  for (std::size_t i = 0; i < cloud.points.size(); ++i) {
    std::byte* rec = bytes.data() + 16 * i;
    const auto& p = cloud.points[i];
    store_le_f32(rec, p.x);
    store_le_f32(rec + 4, p.y);
    store_le_f32(rec + 8, p.z);
    store_le_f32(rec + 12, p.intensity);
  }
  write_file_bytes(bin_path, bytes);
  write_label_file(label_path, cloud.labels);
}

std::vector<ScanRecord> enumerate_split(
    const std::filesystem::path& dataset_root,
    const std::vector<std::string>& sequences) {
  namespace fs = std::filesystem;
  std::vector<std::string> ordered = sequences;
  std::sort(ordered.begin(), ordered.end());
  std::vector<ScanRecord> out;
  for (const auto& seq : ordered) {
    const fs::path vel = dataset_root / "sequences" / seq / "velodyne";
    const fs::path lab = dataset_root / "sequences" / seq / "labels";
    if (!fs::is_directory(vel))
      throw DataError("missing directory: " + vel.string());
    if (!fs::is_directory(lab))
      throw DataError("missing directory: " + lab.string());
    std::vector<fs::path> bins;
    for (const auto& e : fs::directory_iterator(vel)) {
      if (e.is_regular_file() && e.path().extension() == ".bin")
        bins.push_back(e.path());
    }
    std::sort(bins.begin(), bins.end());
    for (const auto& bin : bins) {
      fs::path label = lab / bin.filename();
      label.replace_extension(".label");
      if (!fs::is_regular_file(label))
        throw DataError("scan without label file: " + bin.string());
      out.push_back(ScanRecord{{seq, bin.stem().string()}, bin, label});
    }
  }
  return out;
}

DatasetIndex open_real_dataset(
    const std::filesystem::path& root,
    const std::vector<std::vector<std::string>>& groups,
    const std::vector<std::string>& validation, const LearningMap& map) {
  DatasetIndex idx;
  idx.root = root;
  idx.map = map;
  for (const auto& g : groups) idx.groups.push_back(enumerate_split(root, g));
  idx.validation = enumerate_split(root, validation);
  return idx;
}

DatasetIndex open_synth_dataset(const std::filesystem::path& manifest_path,
                                const ClassTaxonomy& tax) {
  json doc;
  try {
    doc = json::parse(read_text_file(manifest_path));
  } catch (const json::parse_error& e) {
    throw DataError(manifest_path.string() + ": JSON parse error: " + e.what());
  }
  if (doc.value("format", "") != "incseg-synth")
    throw DataError(manifest_path.string() + ": not a synthetic dataset manifest");
  const auto names = doc.at("taxonomy_names").get<std::vector<std::string>>();
  if (names != tax.names())
    throw DataError(manifest_path.string() +
                    ": manifest taxonomy does not match the requested taxonomy");

  const std::filesystem::path root = manifest_path.parent_path();
  auto records = [&root](const json& group) {
    const auto seq = group.at("sequence").get<std::string>();
    std::vector<ScanRecord> recs;
    for (const auto& frame : group.at("frames")) {
      const auto f = frame.get<std::string>();
      recs.push_back(
          ScanRecord{{seq, f},
                     root / "sequences" / seq / "velodyne" / (f + ".bin"),
                     root / "sequences" / seq / "labels" / (f + ".label")});
    }
    return recs;
  };

  DatasetIndex idx;
  idx.root = root;
  idx.map = identity_learning_map(tax);
  for (const auto& g : doc.at("groups")) idx.groups.push_back(records(g));
  idx.validation = records(doc.at("validation"));
  return idx;
}

namespace {

// Default primitive by class name, for the known vocabulary.
std::optional<PrimitiveKind> primitive_for_name(const std::string& name) {
  const std::string n = normalize_name(name);
  static const std::map<std::string, PrimitiveKind> table{
      {"road", PrimitiveKind::Annulus},
      {"parking", PrimitiveKind::Annulus},
      {"sidewalk", PrimitiveKind::Annulus},
      {"other-ground", PrimitiveKind::Annulus},
      {"terrain", PrimitiveKind::Annulus},
      {"ring-inner", PrimitiveKind::Annulus},
      {"ring-outer", PrimitiveKind::Annulus},
      {"lane-marking", PrimitiveKind::Annulus},
      {"building", PrimitiveKind::Box},
      {"fence", PrimitiveKind::Box},
      {"car", PrimitiveKind::Box},
      {"truck", PrimitiveKind::Box},
      {"other-vehicle", PrimitiveKind::Box},
      {"bicycle", PrimitiveKind::Box},
      {"motorcycle", PrimitiveKind::Box},
      {"wall", PrimitiveKind::Box},
      {"crate", PrimitiveKind::Box},
      {"pole", PrimitiveKind::Pole},
      {"trunk", PrimitiveKind::Pole},
      {"traffic-sign", PrimitiveKind::Pole},
      {"post", PrimitiveKind::Pole},
      {"vegetation", PrimitiveKind::Blob},
      {"person", PrimitiveKind::Blob},
      {"bicyclist", PrimitiveKind::Blob},
      {"motorcyclist", PrimitiveKind::Blob},
      {"canopy", PrimitiveKind::Blob},
      {"figure", PrimitiveKind::Blob},
      {"mound", PrimitiveKind::Blob},
  };
  if (n.rfind("ground", 0) == 0 || n.rfind("ring", 0) == 0)
    return PrimitiveKind::Annulus;
  const auto it = table.find(n);
  if (it != table.end()) return it->second;
  // Synthetic taxonomies often suffix a known family name ("post-b").
  for (const auto& [key, kind] : table) {
    if (n.rfind(key + "-", 0) == 0) return kind;
  }
  return std::nullopt;
}

PrimitiveKind parse_primitive(const std::string& s) {
  const std::string n = normalize_name(s);
  if (n == "annulus") return PrimitiveKind::Annulus;
  if (n == "box") return PrimitiveKind::Box;
  if (n == "pole") return PrimitiveKind::Pole;
  if (n == "blob") return PrimitiveKind::Blob;
  throw ConfigError("unknown primitive kind \"" + s + "\"");
}

const char* primitive_name(PrimitiveKind k) {
  switch (k) {
    case PrimitiveKind::Annulus: return "annulus";
    case PrimitiveKind::Box: return "box";
    case PrimitiveKind::Pole: return "pole";
    case PrimitiveKind::Blob: return "blob";
  }
  return "?";
}

void validate_synth_config(const SynthConfig& cfg, const ClassTaxonomy& tax) {
  if (cfg.scans_per_group < 1)
    throw ConfigError("scans_per_group must be >= 1");
  if (cfg.points_per_scan < 1)
    throw ConfigError("points_per_scan must be >= 1");
  if (cfg.home_boost <= 0) throw ConfigError("home_boost must be positive");
  if (cfg.class_mix.size() != tax.num_classes())
    throw ConfigError("class_mix does not cover every class");
  double sum = 0;
  for (std::size_t i = 0; i < cfg.class_mix.size(); ++i) {
    if (cfg.class_mix[i] < 0)
      throw ConfigError("class_mix for \"" + tax.names()[i] + "\" is negative");
    sum += cfg.class_mix[i];
  }
  if (std::fabs(sum - 1.0) > 1e-9)
    throw ConfigError("class_mix fractions sum to " + std::to_string(sum) +
                      ", expected 1");
  if (cfg.primitives.size() != tax.num_classes())
    throw ConfigError("primitive assignment does not cover every class");
}

// Integer allocation by largest remainder; `targets` need not be integral.
std::vector<std::size_t> largest_remainder(const std::vector<double>& targets,
                                           std::size_t total) {
  std::vector<std::size_t> out(targets.size(), 0);
  double tsum = 0;
  for (double t : targets) tsum += t;
  if (tsum <= 0) {
    if (total != 0) throw ConfigError("cannot allocate points to zero weights");
    return out;
  }
  std::vector<double> exact(targets.size());
  std::size_t allocated = 0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    exact[i] = static_cast<double>(total) * targets[i] / tsum;
    out[i] = static_cast<std::size_t>(exact[i]);
    allocated += out[i];
  }
  std::vector<std::size_t> order(targets.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return (exact[a] - std::floor(exact[a])) > (exact[b] - std::floor(exact[b]));
  });
  for (std::size_t i = 0; allocated < total; ++i)
    ++out[order[i % order.size()]], ++allocated;
  return out;
}

struct ClassGeometry {
  double radius;        // center of the class's radial band
  double band;          // band half-width
  double intensity;     // center of the class's intensity band
};

ClassGeometry geometry_for(std::size_t class_index, std::size_t n_classes) {
  ClassGeometry g;
  g.radius = 5.0 + 3.0 * static_cast<double>(class_index);
  g.band = 1.1;
  g.intensity =
      (static_cast<double>(class_index) + 0.5) / static_cast<double>(n_classes);
  return g;
}

float clampf(double v, double lo, double hi) {
  return static_cast<float>(std::min(std::max(v, lo), hi));
}

void emit_points(PrimitiveKind kind, const ClassGeometry& g, std::size_t count,
                 Rng& rng, std::vector<PointXYZI>& out) {
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  switch (kind) {
    case PrimitiveKind::Annulus: {
      for (std::size_t i = 0; i < count; ++i) {
        const double r = g.radius + rng.uniform(-g.band, g.band);
        const double a = rng.uniform(0, kTwoPi);
        out.push_back({static_cast<float>(r * std::cos(a)),
                       static_cast<float>(r * std::sin(a)),
                       static_cast<float>(rng.normal(0.0, 0.04)),
                       clampf(rng.normal(g.intensity, 0.02), 0, 1)});
      }
      break;
    }
    case PrimitiveKind::Box: {
      const std::size_t boxes = std::max<std::size_t>(1, count / 120);
      for (std::size_t i = 0; i < count; ++i) {
        const std::size_t b = i % boxes;
        const double base_angle =
            kTwoPi * static_cast<double>(b) / static_cast<double>(boxes);
        const double cx = g.radius * std::cos(base_angle);
        const double cy = g.radius * std::sin(base_angle);
        out.push_back({static_cast<float>(cx + rng.uniform(-1.0, 1.0)),
                       static_cast<float>(cy + rng.uniform(-0.6, 0.6)),
                       static_cast<float>(rng.uniform(0.0, 1.6)),
                       clampf(rng.normal(g.intensity, 0.02), 0, 1)});
      }
      break;
    }
    case PrimitiveKind::Pole: {
      const std::size_t poles = std::max<std::size_t>(1, count / 40);
      for (std::size_t i = 0; i < count; ++i) {
        const std::size_t p = i % poles;
        const double base_angle =
            kTwoPi * static_cast<double>(p) / static_cast<double>(poles);
        const double cx = g.radius * std::cos(base_angle);
        const double cy = g.radius * std::sin(base_angle);
        out.push_back({static_cast<float>(cx + rng.normal(0.0, 0.05)),
                       static_cast<float>(cy + rng.normal(0.0, 0.05)),
                       static_cast<float>(rng.uniform(0.0, 4.2)),
                       clampf(rng.normal(g.intensity, 0.02), 0, 1)});
      }
      break;
    }
    case PrimitiveKind::Blob: {
      const std::size_t blobs = std::max<std::size_t>(1, count / 80);
      for (std::size_t i = 0; i < count; ++i) {
        const std::size_t b = i % blobs;
        const double base_angle =
            kTwoPi * static_cast<double>(b) / static_cast<double>(blobs);
        const double cx = g.radius * std::cos(base_angle);
        const double cy = g.radius * std::sin(base_angle);
        out.push_back({static_cast<float>(cx + rng.normal(0.0, 0.5)),
                       static_cast<float>(cy + rng.normal(0.0, 0.5)),
                       static_cast<float>(2.0 + rng.normal(0.0, 0.5)),
                       clampf(rng.normal(g.intensity, 0.02), 0, 1)});
      }
      break;
    }
  }
}

}  // namespace

namespace {

std::vector<double> uniform_mix(std::size_t n) {
  std::vector<double> mix(n, 1.0 / static_cast<double>(n));
  // Exact unit sum regardless of n.
  double acc = 0;
  for (std::size_t i = 0; i + 1 < n; ++i) acc += mix[i];
  mix[n - 1] = 1.0 - acc;
  return mix;
}

// Classes with a positive fraction need a primitive, either from the name
// table or assigned explicitly.
std::vector<PrimitiveKind> resolve_primitives(
    const ClassTaxonomy& tax, const std::vector<double>& mix,
    const std::map<ClassId, PrimitiveKind>& explicit_assignments) {
  std::vector<PrimitiveKind> out(tax.num_classes(), PrimitiveKind::Blob);
  for (std::size_t i = 0; i < tax.num_classes(); ++i) {
    const auto it = explicit_assignments.find(static_cast<ClassId>(i + 1));
    if (it != explicit_assignments.end()) {
      out[i] = it->second;
      continue;
    }
    const auto p = primitive_for_name(tax.names()[i]);
    if (p) {
      out[i] = *p;
    } else if (mix[i] > 0) {
      throw ConfigError("infeasible mix: class \"" + tax.names()[i] +
                        "\" has no primitive assigned");
    }
  }
  return out;
}

}  // namespace

SynthConfig default_synth_config(const ClassTaxonomy& tax) {
  SynthConfig cfg;
  cfg.class_mix = uniform_mix(tax.num_classes());
  cfg.primitives = resolve_primitives(tax, cfg.class_mix, {});
  return cfg;
}

SynthConfig parse_synth_config(const std::string& text,
                               const ClassTaxonomy& tax,
                               const std::string& origin) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(origin + ": JSON parse error: " + e.what());
  }
  SynthConfig cfg;
  cfg.class_mix = uniform_mix(tax.num_classes());
  std::map<ClassId, PrimitiveKind> explicit_assignments;
  try {
    cfg.seed = doc.value("seed", cfg.seed);
    cfg.scans_per_group = doc.value("scans_per_group", cfg.scans_per_group);
    cfg.points_per_scan = doc.value("points_per_scan", cfg.points_per_scan);
    cfg.val_scans = doc.value("val_scans", cfg.val_scans);
    cfg.home_boost = doc.value("home_boost", cfg.home_boost);
    if (doc.contains("class_mix")) {
      cfg.class_mix.assign(tax.num_classes(), 0.0);
      for (const auto& [name, frac] : doc.at("class_mix").items()) {
        const ClassId c = tax.id_of(name);
        if (c == kBackground || c == kUnlabeled)
          throw ConfigError(origin + ": class_mix may not assign \"" + name +
                            "\"");
        cfg.class_mix[c - 1] = frac.get<double>();
      }
    }
    if (doc.contains("primitives")) {
      for (const auto& [name, prim] : doc.at("primitives").items()) {
        explicit_assignments[tax.id_of(name)] =
            parse_primitive(prim.get<std::string>());
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError(origin + ": malformed synth config: " + e.what());
  }
  cfg.primitives = resolve_primitives(tax, cfg.class_mix, explicit_assignments);
  validate_synth_config(cfg, tax);
  return cfg;
}

std::vector<std::vector<LabeledCloud>> generate_synthetic(
    const ClassTaxonomy& tax, const SynthConfig& cfg) {
  validate_synth_config(cfg, tax);
  const std::size_t k_steps = tax.num_steps();
  const std::size_t n_classes = tax.num_classes();
  const std::size_t val_scans =
      cfg.val_scans > 0 ? cfg.val_scans : cfg.scans_per_group;

  // Which step owns each class, for the per-group richness skew.
  std::vector<std::size_t> home(n_classes);
  for (ClassId c = 1; c <= n_classes; ++c) home[c - 1] = tax.step_of(c);

  // Per-class totals over the training groups follow class_mix exactly (up
  // to rounding); each class's quota is then split across groups with its
  // home group weighted by home_boost.
  const std::size_t train_total =
      k_steps * cfg.scans_per_group * cfg.points_per_scan;
  const auto quotas = largest_remainder(cfg.class_mix, train_total);
  for (std::size_t i = 0; i < n_classes; ++i) {
    if (cfg.class_mix[i] > 0 && quotas[i] == 0)
      throw ConfigError("class \"" + tax.names()[i] +
                        "\" has a positive fraction but would receive no "
                        "points; increase the dataset size");
  }

  // counts[group][class]
  std::vector<std::vector<std::size_t>> counts(
      k_steps + 1, std::vector<std::size_t>(n_classes, 0));
  for (std::size_t i = 0; i < n_classes; ++i) {
    std::vector<double> w(k_steps, 1.0);
    w[home[i]] = cfg.home_boost;
    const auto per_group = largest_remainder(w, quotas[i]);
    for (std::size_t g = 0; g < k_steps; ++g) counts[g][i] = per_group[g];
  }
  // Validation group: unskewed mix.
  const auto val_quota =
      largest_remainder(cfg.class_mix, val_scans * cfg.points_per_scan);
  counts[k_steps] = val_quota;

  std::vector<std::vector<LabeledCloud>> groups(k_steps + 1);
  for (std::size_t g = 0; g <= k_steps; ++g) {
    const std::size_t scans = (g == k_steps) ? val_scans : cfg.scans_per_group;
    const std::string seq = (g == k_steps) ? "val" : "s" + std::to_string(g);
    groups[g].resize(scans);
    for (std::size_t s = 0; s < scans; ++s) {
      auto& cloud = groups[g][s];
      char frame[24];
      std::snprintf(frame, sizeof frame, "%06zu", s);
      cloud.id = {seq, frame};
      for (std::size_t i = 0; i < n_classes; ++i) {
        // Scan s takes an even share of the group's class quota.
        const std::size_t base = counts[g][i] / scans;
        const std::size_t extra = (s < counts[g][i] % scans) ? 1 : 0;
        const std::size_t m = base + extra;
        if (m == 0) continue;
        Rng rng(derive_seed(cfg.seed, g, s, i));
        const auto geo = geometry_for(i, n_classes);
        emit_points(cfg.primitives[i], geo, m, rng, cloud.points);
        cloud.labels.insert(cloud.labels.end(), m,
                            static_cast<ClassId>(i + 1));
      }
      if (cloud.points.empty())
        throw ConfigError("scan " + cloud.id.str() +
                          " would be empty; increase points_per_scan");
    }
  }
  return groups;
}

std::filesystem::path write_synth_dataset(
    const ClassTaxonomy& tax, const SynthConfig& cfg,
    const std::vector<std::vector<LabeledCloud>>& groups,
    const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  ordered_json manifest;
  manifest["format"] = "incseg-synth";
  manifest["version"] = 1;
  manifest["seed"] = cfg.seed;
  ordered_json config;
  config["scans_per_group"] = cfg.scans_per_group;
  config["points_per_scan"] = cfg.points_per_scan;
  config["val_scans"] = cfg.val_scans;
  config["home_boost"] = cfg.home_boost;
  ordered_json mix = ordered_json::object();
  ordered_json prim = ordered_json::object();
  for (std::size_t i = 0; i < tax.num_classes(); ++i) {
    mix[tax.names()[i]] = cfg.class_mix[i];
    prim[tax.names()[i]] = primitive_name(cfg.primitives[i]);
  }
  config["class_mix"] = std::move(mix);
  config["primitives"] = std::move(prim);
  manifest["config"] = std::move(config);
  manifest["taxonomy_names"] = tax.names();

  ordered_json jgroups = ordered_json::array();
  ordered_json jval;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const bool is_val = (g + 1 == groups.size());
    ordered_json jg;
    jg["sequence"] = is_val ? "val" : "s" + std::to_string(g);
    ordered_json frames = ordered_json::array();
    for (const auto& cloud : groups[g]) {
      frames.push_back(cloud.id.frame);
      const fs::path dir = out_dir / "sequences" / cloud.id.sequence;
      write_scan(dir / "velodyne" / (cloud.id.frame + ".bin"),
                 dir / "labels" / (cloud.id.frame + ".label"), cloud);
    }
    jg["frames"] = std::move(frames);
    if (is_val) {
      jval = std::move(jg);
    } else {
      jgroups.push_back(std::move(jg));
    }
  }
  manifest["groups"] = std::move(jgroups);
  manifest["validation"] = std::move(jval);

  const fs::path manifest_path = out_dir / "manifest.json";
  write_text_file(manifest_path, manifest.dump(2) + "\n");
  return manifest_path;
}

}  // namespace incseg
