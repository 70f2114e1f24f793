#include <gtest/gtest.h>

#include <map>
#include <set>

#include "scnn/dataset.hpp"
#include "scnn/errors.hpp"
#include "test_support.hpp"

using namespace scnn;
using scnn::testing::TempDir;
using scnn::testing::write_class_dir;

namespace {

// Image counts per parent class of the rice field dataset.
const std::map<std::string, std::size_t> kParentCounts{
    {"False Smut", 93}, {"BPH", 71},        {"BLB", 138},
    {"Neck Blast", 286}, {"Stemborer", 201}, {"Hispa", 73},
    {"Sheath Blight or Sheath Rot", 219},    {"Brown Spot", 111}, {"Others", 234}};

// Symptom-variant counts per parent class.
const std::map<std::string, std::size_t> kVariantCounts{
    {"BPH", 2},       {"False Smut", 2}, {"Others", 3}, {"Hispa", 2}, {"Stemborer", 2},
    {"Sheath Blight or Sheath Rot", 3}, {"BLB", 1},    {"Brown Spot", 1}, {"Neck Blast", 1}};

std::vector<std::size_t> repeat_labels(const std::vector<std::size_t>& counts) {
  std::vector<std::size_t> out;
  for (std::size_t c = 0; c < counts.size(); ++c) out.insert(out.end(), counts[c], c);
  return out;
}

}  // namespace

TEST(Taxonomy, RiceClassesMatchTables) {
  const ClassTaxonomy t = rice_taxonomy();
  EXPECT_EQ(t.parent_count(), 9u);
  EXPECT_EQ(t.symptom_count(), 17u);
  std::map<std::string, std::size_t> images, variants;
  std::size_t total = 0;
  for (const auto& c : rice_symptom_classes()) {
    const auto parent = t.parents()[t.project(t.symptom_id(c.directory))];
    images[parent] += c.images;
    ++variants[parent];
    total += c.images;
  }
  EXPECT_EQ(images, kParentCounts);
  EXPECT_EQ(variants, kVariantCounts);
  EXPECT_EQ(total, 1426u);
}

TEST(Taxonomy, ProjectionExamples) {
  const ClassTaxonomy t = rice_taxonomy();
  EXPECT_EQ(t.parents()[t.project(t.symptom_id("BPH__early_stage"))], "BPH");
  EXPECT_EQ(t.parents()[t.project(t.symptom_id("Neck Blast__default"))], "Neck Blast");
  std::set<std::size_t> image;
  for (std::size_t s = 0; s < t.symptom_count(); ++s) image.insert(t.project(s));
  EXPECT_EQ(image.size(), 9u);
  EXPECT_THROW(t.project(17), DatasetError);
  EXPECT_EQ(t.symptoms_of(t.parent_id("Others")).size(), 3u);
}

TEST(Taxonomy, DirectoryNameFormat) {
  EXPECT_EQ(split_class_directory("Others__dead_leaf_stem"), (std::pair<std::string, std::string>{"Others", "dead_leaf_stem"}));
  EXPECT_THROW(split_class_directory("Others"), DatasetError);
  EXPECT_THROW(split_class_directory("__x"), DatasetError);
  EXPECT_THROW(split_class_directory("Others__"), DatasetError);
  EXPECT_THROW(split_class_directory("a__b__c"), DatasetError);
}

TEST(LoadManifest, RiceFieldLayout) {
  TempDir dir("rice_layout");
  std::uint64_t seed = 0;
  for (const auto& c : rice_symptom_classes()) write_class_dir(dir.path(), c.directory, c.images, 2, seed += 1000);
  const Manifest m = load_manifest(dir.path());
  EXPECT_EQ(m.taxonomy.symptom_count(), 17u);
  EXPECT_EQ(m.taxonomy.parent_count(), 9u);
  EXPECT_EQ(m.samples.size(), 1426u);
  EXPECT_EQ(m.taxonomy, rice_taxonomy());
  std::size_t dead = 0;
  for (const auto& s : m.samples) {
    ASSERT_EQ(s.parent, m.taxonomy.project(s.symptom));
    if (m.taxonomy.symptoms()[s.symptom] == "Others__dead_leaf_stem") {
      ++dead;
      EXPECT_EQ(m.taxonomy.parents()[s.parent], "Others");
    }
  }
  EXPECT_EQ(dead, 67u);
  for (std::size_t i = 1; i < m.samples.size(); ++i) ASSERT_LT(m.samples[i - 1].path, m.samples[i].path);

  const std::string json = manifest_to_json(m);
  const Manifest again = manifest_from_json(json);
  EXPECT_EQ(manifest_to_json(again), json);
  EXPECT_EQ(again.taxonomy, m.taxonomy);
}

TEST(LoadManifest, EmptyRootReportsNoClasses) {
  TempDir dir("empty_root");
  try {
    load_manifest(dir.path());
    FAIL();
  } catch (const DatasetError& e) {
    EXPECT_NE(std::string(e.what()).find("no classes found"), std::string::npos);
  }
}

TEST(LoadManifest, Errors) {
  EXPECT_THROW(load_manifest("/nonexistent/scnn/root"), DatasetError);
  {
    TempDir dir("bad_name");
    write_class_dir(dir.path(), "NoSeparator", 2, 2, 1);
    EXPECT_THROW(load_manifest(dir.path()), DatasetError);
  }
  {
    TempDir dir("bad_ppm");
    write_class_dir(dir.path(), "A__x", 2, 2, 1);
    scnn::testing::write_bytes(dir / "A__x/broken.ppm", {'P', '6', '\n', '9'});
    EXPECT_THROW(load_manifest(dir.path()), DatasetError);
  }
  {
    TempDir dir("empty_class");
    write_class_dir(dir.path(), "A__x", 2, 2, 1);
    std::filesystem::create_directories(dir / "B__y");
    EXPECT_THROW(load_manifest(dir.path()), DatasetError);
  }
}

TEST(LoadImages, ResizesToTarget) {
  TempDir dir("load_images");
  write_class_dir(dir.path(), "A__x", 2, 6, 1);
  write_class_dir(dir.path(), "B__x", 1, 8, 2);
  const Manifest m = load_manifest(dir.path());
  const auto images = load_images(m, 4);
  ASSERT_EQ(images.size(), 3u);
  for (const auto& li : images) {
    EXPECT_EQ(li.image.height, 4u);
    EXPECT_FALSE(li.origin.augmented);
  }
  EXPECT_EQ(images[2].parent, 1u);
}

TEST(KFold, ExactlyDivisibleGivesOnePerClassPerFold) {
  const auto parents = repeat_labels(std::vector<std::size_t>(9, 10));
  const FoldPlan plan = stratified_kfold(parents, parents, 10, 1);
  for (std::size_t f = 0; f < 10; ++f) {
    std::vector<std::size_t> per_class(9, 0);
    for (auto id : plan.fold_members(f)) ++per_class[parents[id]];
    EXPECT_EQ(per_class, std::vector<std::size_t>(9, 1));
  }
}

TEST(KFold, RiceCountsSpreadAtMostOne) {
  std::vector<std::size_t> parents, symptoms;
  const ClassTaxonomy t = rice_taxonomy();
  for (const auto& c : rice_symptom_classes()) {
    const std::size_t s = t.symptom_id(c.directory);
    for (std::size_t i = 0; i < c.images; ++i) {
      symptoms.push_back(s);
      parents.push_back(t.project(s));
    }
  }
  const FoldPlan plan = stratified_kfold(parents, symptoms, 10, 7);
  std::size_t total = 0;
  std::vector<std::vector<std::size_t>> count(10, std::vector<std::size_t>(9, 0));
  for (std::size_t f = 0; f < 10; ++f) {
    const auto members = plan.fold_members(f);
    EXPECT_TRUE(members.size() == 142 || members.size() == 143) << members.size();
    total += members.size();
    for (auto id : members) ++count[f][parents[id]];
  }
  EXPECT_EQ(total, 1426u);
  for (std::size_t c = 0; c < 9; ++c) {
    std::size_t lo = SIZE_MAX, hi = 0;
    for (std::size_t f = 0; f < 10; ++f) {
      lo = std::min(lo, count[f][c]);
      hi = std::max(hi, count[f][c]);
    }
    EXPECT_LE(hi - lo, 1u) << "class " << c;
  }
}

TEST(KFold, DeterministicInSeed) {
  const auto parents = repeat_labels({13, 17, 12});
  const auto a = stratified_kfold(parents, parents, 4, 3);
  const auto b = stratified_kfold(parents, parents, 4, 3);
  const auto c = stratified_kfold(parents, parents, 4, 4);
  EXPECT_EQ(a.assignment, b.assignment);
  EXPECT_NE(a.assignment, c.assignment);
}

TEST(KFold, Errors) {
  const auto parents = repeat_labels({13, 3});
  EXPECT_THROW(stratified_kfold(parents, parents, 4, 1), DatasetError);
  EXPECT_THROW(stratified_kfold(parents, parents, 1, 1), ConfigError);
}

TEST(KFold, AugmentedSamplesInheritSourceFold) {
  const auto parents = repeat_labels({10, 10});
  const FoldPlan plan = stratified_kfold(parents, parents, 5, 2);
  for (std::size_t src = 0; src < 20; ++src) {
    for (std::size_t k = 1; k <= 10; ++k) {
      EXPECT_EQ(plan.fold_of(Origin{true, src, k}, 999), plan.assignment[src]);
    }
    EXPECT_EQ(plan.fold_of(Origin{false, src, 0}, src), plan.assignment[src]);
  }
}

TEST(KFold, SymptomsAreSpreadWithinParents) {
  // One parent with two symptoms of 10 each: every fold of 5 gets 2 of each.
  std::vector<std::size_t> parents(20, 0), symptoms;
  for (std::size_t i = 0; i < 20; ++i) symptoms.push_back(i < 10 ? 0 : 1);
  const FoldPlan plan = stratified_kfold(parents, symptoms, 5, 3);
  for (std::size_t f = 0; f < 5; ++f) {
    std::size_t first = 0;
    for (auto id : plan.fold_members(f)) first += symptoms[id] == 0;
    EXPECT_EQ(first, 2u);
  }
}
