#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "scnn/image.hpp"

namespace scnn {

/// Two-level class layout: symptom classes (fine) each belonging to exactly
/// one parent class (coarse). Both lists are kept in sorted order.
class ClassTaxonomy {
 public:
  ClassTaxonomy() = default;
  /// `symptoms` are directory-style names "<parent>__<variant>".
  static ClassTaxonomy from_symptom_names(std::vector<std::string> symptoms);

  const std::vector<std::string>& parents() const { return parents_; }
  const std::vector<std::string>& symptoms() const { return symptoms_; }
  std::size_t parent_count() const { return parents_.size(); }
  std::size_t symptom_count() const { return symptoms_.size(); }

  std::size_t project(std::size_t symptom_id) const;
  std::size_t symptom_id(std::string_view name) const;
  std::size_t parent_id(std::string_view name) const;
  /// Symptom ids that map to the given parent.
  std::vector<std::size_t> symptoms_of(std::size_t parent_id) const;

  bool operator==(const ClassTaxonomy&) const = default;

 private:
  std::vector<std::string> parents_;
  std::vector<std::string> symptoms_;
  std::vector<std::size_t> projection_;
};

/// Splits "<parent>__<variant>"; throws DatasetError on any other format.
std::pair<std::string, std::string> split_class_directory(std::string_view name);

/// The nine-class rice taxonomy with its intra-class symptom variants, and
/// per-variant image counts of the collected field dataset (1426 images).
struct CanonicalClass {
  std::string directory;
  std::size_t images;
};
const std::vector<CanonicalClass>& rice_symptom_classes();
ClassTaxonomy rice_taxonomy();

struct Origin {
  bool augmented = false;
  std::size_t source = 0;   // id of the original sample
  std::size_t variant = 0;  // 1-based for augmented samples
};

struct Sample {
  std::size_t id = 0;
  std::filesystem::path path;
  std::size_t symptom = 0;
  std::size_t parent = 0;
  Origin origin;
};

struct LabeledImage {
  Image image;
  std::size_t symptom = 0;
  std::size_t parent = 0;
  Origin origin;
};

enum class LabelView { symptom, parent };

inline std::size_t label_of(const LabeledImage& s, LabelView view) {
  return view == LabelView::symptom ? s.symptom : s.parent;
}

struct Manifest {
  std::filesystem::path root;
  ClassTaxonomy taxonomy;
  std::vector<Sample> samples;
};

/// Scans `root` for `<parent>__<symptom>` directories of .ppm files. Samples
/// are numbered in lexicographic path order.
Manifest load_manifest(const std::filesystem::path& root);

struct FoldPlan;

/// Stable-key JSON of the taxonomy and sample list, plus fold assignments
/// when given.
std::string manifest_to_json(const Manifest& manifest, const FoldPlan* folds = nullptr);
Manifest manifest_from_json(std::string_view text);

/// Reads every sample's image, resizing to `size` x `size` when needed.
std::vector<LabeledImage> load_images(const Manifest& manifest, std::size_t size);

struct FoldPlan {
  std::size_t k = 0;
  /// Fold index per original sample, indexed by sample id.
  std::vector<std::size_t> assignment;

  std::vector<std::size_t> fold_members(std::size_t fold) const;
  std::size_t fold_of(const Origin& origin, std::size_t id) const;
};

/// Parent-stratified k-fold assignment of original samples. Within each
/// parent the samples are ordered by symptom and shuffled inside each symptom,
/// then the concatenation over parents is dealt round-robin, so both per-class
/// and per-fold counts differ by at most one.
FoldPlan stratified_kfold(std::span<const std::size_t> parent_labels,
                          std::span<const std::size_t> symptom_labels, std::size_t k,
                          std::uint64_t seed);
FoldPlan stratified_kfold(const std::vector<Sample>& samples, std::size_t k, std::uint64_t seed);

}  // namespace scnn
