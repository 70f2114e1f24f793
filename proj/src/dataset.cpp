#include "scnn/dataset.hpp"

#include <algorithm>
#include <set>

#include "json.hpp"
#include "scnn/augment.hpp"
#include "scnn/errors.hpp"
#include "scnn/rng.hpp"

namespace scnn {

namespace fs = std::filesystem;

ClassTaxonomy ClassTaxonomy::from_symptom_names(std::vector<std::string> symptoms) {
  std::sort(symptoms.begin(), symptoms.end());
  if (std::adjacent_find(symptoms.begin(), symptoms.end()) != symptoms.end()) {
    throw DatasetError("duplicate symptom class name");
  }
  ClassTaxonomy t;
  std::set<std::string> parents;
  for (const auto& s : symptoms) parents.insert(split_class_directory(s).first);
  t.parents_.assign(parents.begin(), parents.end());
  t.symptoms_ = std::move(symptoms);
  for (const auto& s : t.symptoms_) t.projection_.push_back(t.parent_id(split_class_directory(s).first));
  return t;
}

std::size_t ClassTaxonomy::project(std::size_t symptom_id) const {
  if (symptom_id >= symptoms_.size()) {
    throw DatasetError("unknown symptom id " + std::to_string(symptom_id));
  }
  return projection_[symptom_id];
}

std::size_t ClassTaxonomy::symptom_id(std::string_view name) const {
  auto it = std::lower_bound(symptoms_.begin(), symptoms_.end(), name);
  if (it == symptoms_.end() || *it != name) throw DatasetError("unknown symptom class '" + std::string(name) + "'");
  return static_cast<std::size_t>(it - symptoms_.begin());
}

std::size_t ClassTaxonomy::parent_id(std::string_view name) const {
  auto it = std::lower_bound(parents_.begin(), parents_.end(), name);
  if (it == parents_.end() || *it != name) throw DatasetError("unknown parent class '" + std::string(name) + "'");
  return static_cast<std::size_t>(it - parents_.begin());
}

std::vector<std::size_t> ClassTaxonomy::symptoms_of(std::size_t parent_id) const {
  std::vector<std::size_t> out;
  for (std::size_t s = 0; s < projection_.size(); ++s)
    if (projection_[s] == parent_id) out.push_back(s);
  return out;
}

std::pair<std::string, std::string> split_class_directory(std::string_view name) {
  const auto pos = name.find("__");
  if (pos == std::string_view::npos || pos == 0 || pos + 2 >= name.size() ||
      name.find("__", pos + 2) != std::string_view::npos) {
    throw DatasetError("class directory '" + std::string(name) + "' is not of the form <parent>__<symptom>");
  }
  return {std::string(name.substr(0, pos)), std::string(name.substr(pos + 2))};
}

const std::vector<CanonicalClass>& rice_symptom_classes() {
  static const std::vector<CanonicalClass> classes{
      {"BLB__default", 138},
      {"BPH__early_stage", 50},
      {"BPH__late_stage", 21},
      {"Brown Spot__default", 111},
      {"False Smut__brown_symptom", 66},
      {"False Smut__black_symptom", 27},
      {"Hispa__visible_pest_white_spot", 53},
      {"Hispa__no_pest_intense_spot", 20},
      {"Neck Blast__default", 286},
      {"Others__healthy_leaf_stem", 96},
      {"Others__healthy_yellow_grain", 71},
      {"Others__dead_leaf_stem", 67},
      {"Sheath Blight or Sheath Rot__black_stem", 70},
      {"Sheath Blight or Sheath Rot__white_spots", 77},
      {"Sheath Blight or Sheath Rot__black_white_mixed", 72},
      {"Stemborer__grain", 180},
      {"Stemborer__stem", 21},
  };
  return classes;
}

ClassTaxonomy rice_taxonomy() {
  std::vector<std::string> names;
  for (const auto& c : rice_symptom_classes()) names.push_back(c.directory);
  return ClassTaxonomy::from_symptom_names(std::move(names));
}

Manifest load_manifest(const fs::path& root) {
  if (!fs::is_directory(root)) throw DatasetError("dataset root not found: " + root.string());
  std::vector<std::string> dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory()) dirs.push_back(entry.path().filename().string());
  }
  if (dirs.empty()) throw DatasetError("no classes found under " + root.string());

  Manifest m;
  m.root = root;
  m.taxonomy = ClassTaxonomy::from_symptom_names(dirs);
  std::vector<std::pair<fs::path, std::size_t>> files;
  for (std::size_t s = 0; s < m.taxonomy.symptom_count(); ++s) {
    const fs::path dir = root / m.taxonomy.symptoms()[s];
    std::size_t count = 0;
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (!entry.is_regular_file() || entry.path().extension() != ".ppm") continue;
      files.emplace_back(entry.path(), s);
      ++count;
    }
    if (count == 0) throw DatasetError("class directory has no images: " + dir.string());
  }
  std::sort(files.begin(), files.end());
  for (const auto& [path, symptom] : files) {
    try {
      (void)read_ppm(path);
    } catch (const std::exception& e) {
      throw DatasetError("cannot read " + path.string() + ": " + e.what());
    }
    Sample s;
    s.id = m.samples.size();
    s.path = path;
    s.symptom = symptom;
    s.parent = m.taxonomy.project(symptom);
    s.origin = {false, s.id, 0};
    m.samples.push_back(std::move(s));
  }
  return m;
}

std::string manifest_to_json(const Manifest& manifest, const FoldPlan* folds) {
  nlohmann::json j;
  j["root"] = manifest.root.generic_string();
  j["parents"] = manifest.taxonomy.parents();
  nlohmann::json symptoms = nlohmann::json::array();
  for (std::size_t s = 0; s < manifest.taxonomy.symptom_count(); ++s) {
    symptoms.push_back({{"name", manifest.taxonomy.symptoms()[s]}, {"parent", manifest.taxonomy.project(s)}});
  }
  j["symptoms"] = symptoms;
  nlohmann::json samples = nlohmann::json::array();
  for (const auto& s : manifest.samples) {
    nlohmann::json e{{"id", s.id},
                     {"path", fs::relative(s.path, manifest.root).generic_string()},
                     {"symptom", s.symptom},
                     {"parent", s.parent}};
    if (folds) e["fold"] = folds->assignment.at(s.id);
    samples.push_back(e);
  }
  j["samples"] = samples;
  if (folds) j["folds"] = folds->k;
  return j.dump(2) + "\n";
}

Manifest manifest_from_json(std::string_view text) {
  try {
    const auto j = nlohmann::json::parse(text);
    Manifest m;
    m.root = j.at("root").get<std::string>();
    std::vector<std::string> names;
    for (const auto& s : j.at("symptoms")) names.push_back(s.at("name").get<std::string>());
    m.taxonomy = ClassTaxonomy::from_symptom_names(names);
    for (const auto& e : j.at("samples")) {
      Sample s;
      s.id = e.at("id").get<std::size_t>();
      if (s.id != m.samples.size()) throw DatasetError("manifest sample ids must be consecutive");
      s.path = m.root / e.at("path").get<std::string>();
      s.symptom = e.at("symptom").get<std::size_t>();
      s.parent = m.taxonomy.project(s.symptom);
      if (s.parent != e.at("parent").get<std::size_t>()) throw DatasetError("manifest parent label mismatch");
      s.origin = {false, s.id, 0};
      m.samples.push_back(std::move(s));
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw DatasetError(std::string("malformed manifest: ") + e.what());
  }
}

std::vector<LabeledImage> load_images(const Manifest& manifest, std::size_t size) {
  std::vector<LabeledImage> out;
  out.reserve(manifest.samples.size());
  for (const auto& s : manifest.samples) {
    LabeledImage li;
    li.image = read_ppm(s.path);
    if (li.image.height != size || li.image.width != size) li.image = resize(li.image, size, size);
    li.symptom = s.symptom;
    li.parent = s.parent;
    li.origin = s.origin;
    out.push_back(std::move(li));
  }
  return out;
}

std::vector<std::size_t> FoldPlan::fold_members(std::size_t fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < assignment.size(); ++i)
    if (assignment[i] == fold) out.push_back(i);
  return out;
}

std::size_t FoldPlan::fold_of(const Origin& origin, std::size_t id) const {
  return assignment.at(origin.augmented ? origin.source : id);
}

FoldPlan stratified_kfold(std::span<const std::size_t> parent_labels, std::span<const std::size_t> symptom_labels,
                          std::size_t k, std::uint64_t seed) {
  if (k < 2) throw ConfigError("k must be at least 2");
  if (parent_labels.size() != symptom_labels.size()) throw ShapeError("label lists differ in length");
  std::map<std::size_t, std::map<std::size_t, std::vector<std::size_t>>> groups;
  for (std::size_t i = 0; i < parent_labels.size(); ++i) groups[parent_labels[i]][symptom_labels[i]].push_back(i);

  Rng rng(seed);
  std::vector<std::size_t> order;
  order.reserve(parent_labels.size());
  for (auto& [parent, by_symptom] : groups) {
    std::size_t n = 0;
    for (auto& [symptom, ids] : by_symptom) n += ids.size();
    if (n < k) {
      throw DatasetError("parent class " + std::to_string(parent) + " has " + std::to_string(n) +
                         " samples, fewer than k=" + std::to_string(k));
    }
    for (auto& [symptom, ids] : by_symptom) {
      rng.shuffle(std::span<std::size_t>(ids));
      order.insert(order.end(), ids.begin(), ids.end());
    }
  }
  FoldPlan plan;
  plan.k = k;
  plan.assignment.assign(parent_labels.size(), 0);
  for (std::size_t pos = 0; pos < order.size(); ++pos) plan.assignment[order[pos]] = pos % k;
  return plan;
}

FoldPlan stratified_kfold(const std::vector<Sample>& samples, std::size_t k, std::uint64_t seed) {
  std::vector<std::size_t> parents, symptoms;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].id != i || samples[i].origin.augmented) {
      throw DatasetError("fold planning takes original samples numbered 0..N-1");
    }
    parents.push_back(samples[i].parent);
    symptoms.push_back(samples[i].symptom);
  }
  return stratified_kfold(parents, symptoms, k, seed);
}

}  // namespace scnn
