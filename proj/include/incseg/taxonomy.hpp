#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "incseg/common.hpp"

namespace incseg {

// Class sets, step partitions and the optional coarse-to-fine hierarchy.
// Class ids are 1..names.size() in name order; id 0 is the background class
// and 255 the unlabeled sentinel, neither of which appears in `names`.
// Immutable after construction; safe to share across threads.
class ClassTaxonomy {
 public:
  ClassTaxonomy() = default;
  ClassTaxonomy(std::vector<std::string> names,
                std::vector<std::vector<ClassId>> steps,
                std::optional<std::vector<std::vector<ClassId>>> hierarchy);

  std::size_t num_classes() const { return names_.size(); }
  std::size_t num_steps() const { return steps_.size(); }
  bool has_hierarchy() const { return hierarchy_.has_value(); }
  std::size_t num_levels() const;

  const std::vector<std::string>& names() const { return names_; }
  const std::string& name_of(ClassId c) const;
  // Lookup by normalized name; throws ConfigError for unknown names.
  ClassId id_of(std::string_view name) const;

  const std::vector<ClassId>& step_classes(std::size_t k) const;
  // Step index owning class c.
  std::size_t step_of(ClassId c) const;
  // C_0 u ... u C_k, ascending ids.
  std::vector<ClassId> cumulative_classes(std::size_t k) const;

  // Classes of the finest level (= domain of the hierarchy maps).
  const std::vector<ClassId>& fine_classes() const;
  bool is_fine_class(ClassId c) const;
  // Classes appearing as values of hierarchy level l, ascending.
  std::vector<ClassId> level_classes(std::size_t level) const;

  // Unique level-`level` class containing the fine class `fine`; sentinels
  // map to themselves. Throws if there is no hierarchy or `fine` is invalid.
  ClassId ancestor(ClassId fine, std::size_t level) const;
  // Ancestor of any class (fine or coarser) at a level at or above its own;
  // well defined by the composition-consistency invariant.
  ClassId ancestor_of_any(ClassId c, std::size_t level) const;

  // Checks all structural invariants; throws ConfigError naming the
  // offending class or level.
  void validate() const;

  bool operator==(const ClassTaxonomy& other) const = default;

 private:
  std::vector<std::string> names_;
  std::vector<std::vector<ClassId>> steps_;
  // hierarchy_[level][fine_index] = ancestor id, fine_index aligned with
  // fine_classes().
  std::optional<std::vector<std::vector<ClassId>>> hierarchy_;
  std::vector<ClassId> fine_classes_;

  void rebuild_fine_classes();
};

ClassTaxonomy parse_taxonomy_json(const std::string& text,
                                  const std::string& origin);
ClassTaxonomy load_taxonomy(const std::filesystem::path& path);
std::string taxonomy_to_json(const ClassTaxonomy& tax);
void save_taxonomy(const ClassTaxonomy& tax, const std::filesystem::path& path);

// The 19-class SemanticKITTI partition used throughout: three steps of
// 6/5/8 classes ordered by point frequency.
const ClassTaxonomy& builtin_cil();
// Three-level refinement of the same 19 classes: 3 coarse, 6 mid, 19 fine.
const ClassTaxonomy& builtin_c2f();
// Small 8-class taxonomy (3/2/3 steps) for synthetic desk-scale runs.
const ClassTaxonomy& builtin_synth8();

// Sequence groups of the CIL partition: {01,02,03}, {04,05,09,10},
// {00,06,07}; validation {08}.
const std::vector<std::vector<std::string>>& cil_sequence_groups();
const std::vector<std::string>& cil_validation_sequences();

// "cil", "c2f", "synth8" or a file path.
ClassTaxonomy resolve_taxonomy(const std::string& name_or_path);

}  // namespace incseg
