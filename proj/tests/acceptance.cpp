// Acceptance checks. Prints one PASS/FAIL line per criterion; exit status is
// the number of failures. Pass criterion numbers as arguments to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <string>

#include "scnn/augment.hpp"
#include "scnn/experiment.hpp"
#include "scnn/model.hpp"
#include "scnn/ops.hpp"
#include "scnn/reports.hpp"
#include "scnn/training.hpp"
#include "test_support.hpp"

using namespace scnn;
using scnn::testing::check_gradients;
using scnn::testing::random_tensor;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// ------------------------------------------------------------------ AC1

Outcome gradient_oracle() {
  std::map<std::string, double> err;
  {
    Tensor x = random_tensor({7, 6, 3}, 1), k = random_tensor({3, 3, 3, 4}, 2), b = random_tensor({4}, 3);
    err["conv"] = check_gradients({&x, &k, &b}, [](Tape& t, const auto& v) { return t.conv2d(v[0], v[1], v[2]); });
  }
  {
    Tensor x = random_tensor({7, 6, 3}, 4);
    err["pool"] = check_gradients({&x}, [](Tape& t, const auto& v) { return t.maxpool2x2(v[0]); });
  }
  {
    Tensor x = random_tensor({12}, 5), w = random_tensor({12, 5}, 6), b = random_tensor({5}, 7);
    err["dense"] = check_gradients({&x, &w, &b}, [](Tape& t, const auto& v) { return t.dense(v[0], v[1], v[2]); });
  }
  {
    Tensor x = random_tensor({40}, 8);
    for (auto& v : x.values())
      if (std::abs(v) < 1e-2) v = 0.5;
    err["relu"] = check_gradients({&x}, [](Tape& t, const auto& v) { return t.relu(v[0]); });
  }
  {
    Tensor x = random_tensor({9}, 9, -3, 3);
    err["softmax"] = check_gradients({&x}, [](Tape& t, const auto& v) { return t.softmax(v[0]); });
  }
  {
    Tensor x = random_tensor({30}, 10);
    Rng rng(11);
    const auto mask = ops::make_dropout_mask(30, 0.3, rng);
    err["dropout"] = check_gradients({&x}, [&](Tape& t, const auto& v) { return t.dropout(v[0], mask); });
  }
  {
    Tensor x = random_tensor({5}, 12, 0.05, 1.0);
    const Tensor target = ops::one_hot(5, 3);
    err["cross_entropy"] =
        check_gradients({&x}, [&](Tape& t, const auto& v) { return t.cross_entropy(v[0], target); });
  }
  {
    // Simple CNN shrunk to a 28x28x3 input: three valid convs with pooling,
    // dropout, dense-10 and a 3-way softmax, trained-mode forward with a
    // fixed dropout stream.
    SimpleCnnOptions o;
    o.input_size = 28;
    o.conv_filters = {4, 8, 8};
    o.hidden_units = 10;
    o.num_classes = 3;
    Rng rng(13);
    Model m = build_simple_cnn(o, rng, rng);
    Tensor image = random_tensor({28, 28, 3}, 14, 0.0, 1.0);
    const Tensor target = ops::one_hot(3, 2);
    const Rng dropout_seed(15);
    auto loss = [&] {
      Tape tape;
      Rng d = dropout_seed;
      auto r = forward(tape, m.spec, m.weights, image, Mode::train, &d);
      return tape.value(tape.cross_entropy(r.probabilities, target))[0];
    };
    m.weights.clear_grads();
    {
      Tape tape;
      Rng d = dropout_seed;
      auto r = forward(tape, m.spec, m.weights, image, Mode::train, &d);
      tape.backward(tape.cross_entropy(r.probabilities, target));
    }
    double worst = 0.0;
    for (auto& p : m.weights.params()) {
      const std::vector<double> g(p.value.grad().begin(), p.value.grad().end());
      worst = std::max(worst, scnn::testing::max_fd_error(p.value.values(), g, loss, 1e-5));
    }
    err["simple_cnn_28"] = worst;
  }
  double worst = 0.0;
  std::string detail = "max rel err";
  for (const auto& [name, e] : err) {
    worst = std::max(worst, e);
    detail += fmt(" %s=%.2e", name.c_str(), e);
  }
  return {worst <= 1e-4, detail + " (tol 1e-4)"};
}

// ------------------------------------------------------------------ AC2

Outcome architecture() {
  const ArchitectureSpec spec = simple_cnn_spec(9);
  const auto shapes = spec.output_shapes();
  const Shape first = shapes.at(*spec.first_conv_layer());
  const Shape last = shapes.at(*spec.last_conv_layer());
  const std::size_t count = spec.parameter_count();
  const double rel = std::abs(static_cast<double>(count) - 8e5) / 8e5;
  const bool ok = count == 738449 && first == Shape{222, 222, 16} && last == Shape{10, 10, 64} && rel <= 0.15;
  return {ok, fmt("params=%zu first_conv=%zux%zux%zu last_conv=%zux%zux%zu vs 0.8M: %.1f%%", count, first[0], first[1],
                  first[2], last[0], last[1], last[2], 100.0 * rel)};
}

// ------------------------------------------------------------------ AC3

Outcome head_swap() {
  Rng rng(1), head(2);
  const Model m17 = build_simple_cnn(17, rng);
  const Model m9 = replace_head(m17, 9, head);
  std::size_t identical = 0, body = 0;
  for (const auto& p : m17.weights.params()) {
    if (is_head_parameter(m17.spec, p)) continue;
    ++body;
    identical += p.value.same_values(m9.weights.at(p.name).value);
  }
  const long delta = static_cast<long>(m9.spec.parameter_count()) - static_cast<long>(m17.spec.parameter_count());
  return {identical == body && delta == -808, fmt("%zu/%zu non-head tensors identical, delta=%ld", identical, body, delta)};
}

// ------------------------------------------------------------------ AC4

std::vector<LabeledImage> random_set(std::size_t n, std::size_t size, std::size_t classes, std::uint64_t seed) {
  std::vector<LabeledImage> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i].image = scnn::testing::random_image(size, size, seed + i);
    out[i].symptom = i % classes;
    out[i].parent = i % classes;
    out[i].origin = {false, i, 0};
  }
  return out;
}

Outcome regime_semantics() {
  const auto data = random_set(5, 224, 9, 40);
  VectorSource src(data);
  TrainConfig cfg;
  cfg.batch_size = 1;  // 5 samples -> 5 steps
  cfg.epochs = 1;
  bool ok = true;
  std::string detail;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    Rng b(seed), h(seed + 100), db(seed + 200), dh(seed + 300);
    const Model m = build_simple_cnn(9, b);
    const Model donor9 = build_simple_cnn(9, db);
    const Model donor17 = build_simple_cnn(17, dh);
    cfg.seed = seed;
    for (Regime regime : {Regime::transfer, Regime::baseline, Regime::two_stage_stage2}) {
      const WeightStore* donor = regime == Regime::transfer ? &donor9.weights
                                 : regime == Regime::two_stage_stage2 ? &donor17.weights
                                                                      : nullptr;
      const WeightStore init = apply_freeze_policy(m.spec, m.weights, regime, donor);
      const auto r = train(m.spec, init, src, LabelView::parent, cfg, Rng(seed));
      if (r.report.steps != 5) ok = false;
      std::size_t bad = 0;
      for (const auto& p : r.weights.params()) {
        const bool same = p.value.same_values(init.at(p.name).value);
        if (regime == Regime::transfer && p.kind == LayerKind::conv) bad += !same;
        if (regime != Regime::transfer) bad += same;
      }
      if (bad) {
        ok = false;
        detail += fmt(" seed %llu %s: %zu violating tensors;", static_cast<unsigned long long>(seed),
                      std::string(to_string(regime)).c_str(), bad);
      }
    }
  }
  return {ok, "3 seeds x {transfer, baseline, two_stage_stage2}, 5 steps" + (detail.empty() ? std::string() : detail)};
}

// ------------------------------------------------------------------ AC5

Outcome two_stage_equivalence() {
  std::vector<LabeledImage> data = random_set(17, 224, 17, 50);
  const auto taxonomy = rice_taxonomy();
  for (auto& s : data) s.parent = taxonomy.project(s.symptom);
  VectorSource src(data);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 8;
  cfg.seed = 5;
  const NetworkOptions net;
  const auto two = two_stage_train(net, 17, 9, src, cfg, 0);
  const auto base = single_stage_train(net, Regime::baseline, 9, src, cfg);
  const bool same = two.model.weights.identical(base.model.weights) && two.model.spec == base.model.spec;
  return {same, same ? "two_stage(stage-one epochs 0) == baseline, all tensors bitwise equal"
                     : "weights differ between two_stage(0) and baseline"};
}

// ------------------------------------------------------------------ AC6

Outcome overfit_capacity() {
  std::vector<LabeledImage> data;
  Rng rng(60);
  for (std::size_t i = 0; i < 32; ++i) {
    LabeledImage s;
    s.image = Image(224, 224);
    const double mean = i % 2 ? 0.65 : 0.35;
    for (auto& v : s.image.pixels) v = static_cast<float>(mean + rng.uniform(-0.2, 0.2));
    s.symptom = s.parent = i % 2;
    s.origin = {false, i, 0};
    data.push_back(std::move(s));
  }
  VectorSource src(data);
  Rng b(61), h(62);
  const Model m = build_simple_cnn(network_options(NetworkOptions{}, 0.3, 2), b, h);
  TrainConfig cfg;
  cfg.learning_rate = 1e-4;
  cfg.epochs = 200;
  cfg.seed = 63;
  double best = 0.0;
  const auto r = train(m.spec, m.weights, src, LabelView::parent, cfg, Rng(64), "overfit",
                       [&](std::size_t, const EpochStats&, const WeightStore& w) -> std::optional<std::string> {
                         best = evaluate(m.spec, w, src, LabelView::parent).accuracy;
                         if (best == 1.0) return "100% training accuracy";
                         return std::nullopt;
                       });
  return {best == 1.0, fmt("training accuracy %.4f after %zu epochs (limit 200)", best, r.report.epochs.size())};
}

// ------------------------------------------------------------------ AC7

// Parent p is a noisy oriented grating (orientation p * 20 degrees); its two
// sub-variants differ in spatial frequency (2 vs 6 cycles).
std::vector<LabeledImage> hierarchical_set(std::size_t size, std::uint64_t seed, double amplitude, double noise) {
  std::vector<LabeledImage> out;
  Rng rng(seed);
  const double pi = 3.14159265358979323846;
  for (std::size_t p = 0; p < 9; ++p)
    for (std::size_t v = 0; v < 2; ++v)
      for (std::size_t i = 0; i < 40; ++i) {
        LabeledImage s;
        s.image = Image(size, size);
        const double theta = pi * static_cast<double>(p) / 9.0;
        const double cycles = v == 0 ? 2.0 : 6.0;
        const double phase = rng.uniform(0.0, 2.0 * pi);
        for (std::size_t y = 0; y < size; ++y)
          for (std::size_t x = 0; x < size; ++x) {
            const double u = (std::cos(theta) * x + std::sin(theta) * y) / static_cast<double>(size);
            const double g = 0.5 + amplitude * std::sin(2.0 * pi * cycles * u + phase);
            for (std::size_t c = 0; c < 3; ++c)
              s.image.at(y, x, c) = static_cast<float>(std::clamp(g + rng.uniform(-noise, noise), 0.0, 1.0));
          }
        s.symptom = 2 * p + v;
        s.parent = p;
        s.origin = {false, out.size(), 0};
        out.push_back(std::move(s));
      }
  return out;
}

Outcome two_stage_benefit() {
  const auto data = hierarchical_set(32, 70, 0.2, 0.4);
  CrossValSetup setup;
  setup.k = 3;
  setup.symptoms = 18;
  setup.parents = 9;
  setup.net.input_size = 32;
  setup.net.conv_filters = {8, 16, 16};
  setup.net.hidden_units = 32;
  setup.config.learning_rate = 1e-3;
  setup.config.batch_size = 16;
  setup.config.epochs = 20;
  setup.augment.variants_per_image = 0;
  std::map<Protocol, std::vector<double>> means, stds;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    setup.config.seed = 700 + seed;
    for (Protocol p : {Protocol::baseline, Protocol::two_stage}) {
      setup.protocol = p;
      const auto r = cross_validate(setup, data);
      means[p].push_back(r.mean);
      stds[p].push_back(r.std_dev);
      std::printf("  AC7 seed %llu %-9s mean %.4f std %.4f\n", static_cast<unsigned long long>(seed),
                  std::string(to_string(p)).c_str(), r.mean, r.std_dev);
      std::fflush(stdout);
    }
  }
  auto avg = [](const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); };
  const double tm = avg(means[Protocol::two_stage]), bm = avg(means[Protocol::baseline]);
  const double ts = avg(stds[Protocol::two_stage]), bs = avg(stds[Protocol::baseline]);
  return {tm >= bm - 0.01 && ts <= bs,
          fmt("5 seeds x 3 folds: two_stage mean %.4f std %.4f; baseline mean %.4f std %.4f", tm, ts, bm, bs)};
}

// ------------------------------------------------------------------ AC8

std::vector<LabeledImage> rice_sized_set() {
  std::vector<LabeledImage> out;
  const auto taxonomy = rice_taxonomy();
  for (const auto& c : rice_symptom_classes()) {
    const std::size_t symptom = taxonomy.symptom_id(c.directory);
    for (std::size_t i = 0; i < c.images; ++i) {
      LabeledImage s;
      s.image = scnn::testing::random_image(2, 2, out.size());
      s.symptom = symptom;
      s.parent = taxonomy.project(symptom);
      s.origin = {false, out.size(), 0};
      out.push_back(std::move(s));
    }
  }
  return out;
}

Outcome crossval_properties() {
  const auto data = rice_sized_set();
  const std::size_t k = 10;
  const FoldPlan plan = plan_folds(data, k, 3);
  std::vector<std::size_t> seen(data.size(), 0);
  std::size_t spread = 0;
  for (std::size_t f = 0; f < k; ++f)
    for (auto id : plan.fold_members(f)) ++seen[id];
  const bool partition = std::all_of(seen.begin(), seen.end(), [](std::size_t s) { return s == 1; });
  for (std::size_t p = 0; p < 9; ++p) {
    std::vector<std::size_t> per_fold(k, 0);
    for (std::size_t i = 0; i < data.size(); ++i)
      if (data[i].parent == p) ++per_fold[plan.assignment[i]];
    spread = std::max(spread, *std::max_element(per_fold.begin(), per_fold.end()) -
                                  *std::min_element(per_fold.begin(), per_fold.end()));
  }

  CrossValSetup setup;
  setup.k = k;
  setup.symptoms = 17;
  setup.parents = 9;
  setup.config.seed = 3;
  std::size_t crossings = 0, augmented_seen = 0;
  Rng guess(4);
  setup.trainer = [&](const SampleSource& train, std::size_t fold, std::vector<StageReport>&) {
    const auto& aug = dynamic_cast<const AugmentedSource&>(train);
    for (std::size_t i = 0; i < aug.size(); ++i) {
      const Origin o = aug.origin(i);
      augmented_seen += o.augmented;
      crossings += plan.assignment[o.source] == fold;
    }
    return Classifier([&](const Image&) {
      Tensor t({9});
      for (auto& v : t.values()) v = guess.uniform();
      return t;
    });
  };
  std::vector<FoldOutcome> outcomes;
  const CrossValReport report = cross_validate(setup, data, &outcomes);
  const CrossValReport again = CrossValReport::from_folds(report.fold_accuracy);
  double ss = 0.0;
  const double mean = std::accumulate(report.fold_accuracy.begin(), report.fold_accuracy.end(), 0.0) / k;
  for (double a : report.fold_accuracy) ss += (a - mean) * (a - mean);
  const double mean_err = std::abs(mean - report.mean), std_err = std::abs(std::sqrt(ss / (k - 1)) - report.std_dev);
  const auto parsed = parse_crossval_report(crossval_json(report, outcomes, rice_taxonomy().parents()));
  const bool recomputable = std::abs(again.mean - parsed.mean) <= 1e-12 && std::abs(again.std_dev - parsed.std_dev) <= 1e-12;
  return {partition && spread <= 1 && crossings == 0 && augmented_seen > 0 && mean_err <= 1e-12 && std_err <= 1e-12 &&
              recomputable,
          fmt("partition %s, parent spread %zu, %zu augmented train samples, %zu crossings, mean err %.1e, std err %.1e",
              partition ? "exact" : "BROKEN", spread, augmented_seen, crossings, mean_err, std_err)};
}

// ------------------------------------------------------------------ AC9

Outcome augmentation_suite() {
  std::size_t exact_failures = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Image img = scnn::testing::random_image(13, 13, 900 + seed);
    const Image rect = scnn::testing::random_image(9, 14, 950 + seed);
    auto hflip = [](const Image& i) { return apply_transform(i, TransformKind::horizontal_flip, TransformParams{}); };
    auto vflip = [](const Image& i) { return apply_transform(i, TransformKind::vertical_flip, TransformParams{}); };
    auto turn = [](const Image& i, int q) {
      TransformParams t;
      t.quarter_turns = q;
      return apply_transform(i, TransformKind::right_angle_rotation, t);
    };
    exact_failures += hflip(hflip(rect)).pixels != rect.pixels;
    exact_failures += vflip(vflip(rect)).pixels != rect.pixels;
    exact_failures += turn(turn(turn(turn(img, 1), 1), 1), 1).pixels != img.pixels;
    exact_failures += turn(img, 2).pixels != vflip(hflip(img)).pixels;
    exact_failures += turn(turn(img, 1), 3).pixels != img.pixels;
    exact_failures += turn(img, 3).pixels != turn(turn(img, 2), 1).pixels;
  }

  AugmentSpec spec;
  Rng rng(91);
  std::size_t out_of_range = 0;
  for (int t = 0; t < 300; ++t) {
    const Image img = scnn::testing::random_image(16, 16, 1000 + t);
    const Image out = augment_one(img, spec, rng);
    for (float v : out.pixels) out_of_range += !(v >= 0.0f && v <= 1.0f);
  }

  const auto originals = rice_sized_set();
  const auto expanded = expand_dataset(originals, spec, Rng(92));

  const int trials = 10000;
  std::array<int, kTransformCount> hits{};
  Rng mc(93);
  for (int t = 0; t < trials; ++t)
    for (const auto& step : plan_augmentation(spec, mc)) ++hits[static_cast<std::size_t>(step.kind)];
  double worst = 0.0;
  for (std::size_t i = 0; i < kTransformCount; ++i)
    worst = std::max(worst, std::abs(static_cast<double>(hits[i]) / trials - spec.probability[i]));

  const bool ok = exact_failures == 0 && out_of_range == 0 && originals.size() == 1426 && expanded.size() == 15686 &&
                  worst <= 0.02;
  return {ok, fmt("%zu identity mismatches, %zu out-of-range pixels, %zu -> %zu, max MC deviation %.4f (tol 0.02)",
                  exact_failures, out_of_range, originals.size(), expanded.size(), worst)};
}

// ------------------------------------------------------------------ AC10

Outcome end_to_end_determinism() {
  scnn::testing::TempDir dir("acceptance_determinism");
  const char* classes[] = {"Blast__leaf", "Blast__neck", "Smut__brown", "Smut__black"};
  for (std::size_t c = 0; c < 4; ++c) scnn::testing::write_class_dir(dir / "data", classes[c], 6, 40, 10 * c + 1);
  ExperimentConfig cfg;
  cfg.dataset_root = dir / "data";
  cfg.folds = 3;
  cfg.net.input_size = 32;
  cfg.net.conv_filters = {4, 8, 8};
  cfg.net.hidden_units = 16;
  cfg.train.epochs = 2;
  cfg.train.batch_size = 8;
  cfg.train.seed = 2024;
  cfg.augment.variants_per_image = 2;
  std::size_t compared = 0, differing = 0;
  for (const char* run : {"a", "b"}) {
    cfg.output_dir = dir / "train" / run;
    cmd_train(cfg);
    cfg.output_dir = dir / "cv" / run;
    cmd_crossval(cfg);
  }
  for (const char* sub : {"train", "cv"}) {
    for (const auto& e : std::filesystem::directory_iterator(dir / sub / "a")) {
      if (e.path().filename() == "config.lock.json") continue;  // records output_dir
      ++compared;
      differing += scnn::testing::read_bytes(e.path()) !=
                   scnn::testing::read_bytes(dir / sub / "b" / e.path().filename());
    }
  }
  return {compared == 9 && differing == 0,
          fmt("%zu weight/report/manifest files compared across two runs, %zu differ", compared, differing)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> checks{
      {"gradient oracle", gradient_oracle},
      {"architecture constraints", architecture},
      {"head-swap contract", head_swap},
      {"regime semantics", regime_semantics},
      {"two-stage equivalence", two_stage_equivalence},
      {"overfit capacity", overfit_capacity},
      {"scaled two-stage benefit", two_stage_benefit},
      {"cross-validation properties", crossval_properties},
      {"augmentation suite", augmentation_suite},
      {"end-to-end determinism", end_to_end_determinism},
  };
  std::set<std::size_t> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::stoul(argv[i]));
  int failures = 0;
  for (std::size_t i = 0; i < checks.size(); ++i) {
    if (!selected.empty() && !selected.count(i + 1)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = checks[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    failures += !o.pass;
    std::printf("AC%zu %s: %s: %s [%.1fs]\n", i + 1, o.pass ? "PASS" : "FAIL", checks[i].first, o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  return failures;
}
