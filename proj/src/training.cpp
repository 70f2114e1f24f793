#include "scnn/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "scnn/adam.hpp"
#include "scnn/errors.hpp"

namespace scnn {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be positive");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
}

AugmentedSource::AugmentedSource(std::vector<const LabeledImage*> originals, AugmentSpec spec, std::uint64_t seed)
    : originals_(std::move(originals)), spec_(spec), seed_(seed) {
  spec_.validate();
}

Image AugmentedSource::image(std::size_t i) const {
  const std::size_t k = i % (1 + spec_.variants_per_image);
  const LabeledImage& o = original(i);
  if (k == 0) return o.image;
  return make_variant(o.image, spec_, seed_, o.origin.source, k);
}

Origin AugmentedSource::origin(std::size_t i) const {
  const std::size_t k = i % (1 + spec_.variants_per_image);
  const LabeledImage& o = original(i);
  if (k == 0) return o.origin;
  return {true, o.origin.source, k};
}

TrainResult train(const ArchitectureSpec& spec, WeightStore weights, const SampleSource& data, LabelView view,
                  const TrainConfig& config, const Rng& stream, std::string stage, const EpochCallback& on_epoch) {
  config.validate();
  check_weights_match(spec, weights);
  const std::size_t n = data.size();
  if (n == 0) throw DatasetError("empty training set");
  const std::size_t classes = spec.num_classes();
  for (std::size_t i = 0; i < n; ++i) {
    if (data.label(i, view) >= classes) {
      throw DatasetError("label " + std::to_string(data.label(i, view)) + " of sample " + std::to_string(i) +
                         " is out of range for " + std::to_string(classes) + " classes");
    }
  }

  TrainResult result;
  result.report.stage = std::move(stage);
  result.report.configured_epochs = config.epochs;

  const auto shapes = weights.shapes();
  AdamState adam(shapes);
  std::vector<std::size_t> order(n);
  std::vector<AdamTarget> targets(weights.size());
  Tape tape;
  const Rng shuffle_root = stream.fork("shuffle");
  const Rng dropout_root = stream.fork("dropout");

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle_rng = shuffle_root.fork(static_cast<std::uint64_t>(epoch));
    shuffle_rng.shuffle(std::span<std::size_t>(order));
    Rng dropout_rng = dropout_root.fork(static_cast<std::uint64_t>(epoch));

    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::size_t end = std::min(n, start + config.batch_size);
      for (auto& p : weights.params())
        if (p.trainable) p.value.zero_grad();
      for (std::size_t b = start; b < end; ++b) {
        const std::size_t idx = order[b];
        const std::size_t label = data.label(idx, view);
        const Tensor input = to_tensor(data.image(idx));
        tape.clear();
        const auto fwd = forward(tape, spec, weights, input, Mode::train, &dropout_rng);
        const auto loss = tape.cross_entropy(fwd.probabilities, ops::one_hot(classes, label));
        loss_sum += tape.value(loss)[0];
        if (argmax(tape.value(fwd.probabilities).values()) == label) ++correct;
        tape.backward(loss, 1.0 / static_cast<double>(end - start));
      }
      for (std::size_t t = 0; t < weights.size(); ++t) {
        Parameter& p = weights.params()[t];
        if (p.trainable) {
          targets[t] = {p.value.values(), p.value.grad(), true};
        } else {
          targets[t] = {p.value.values(), {}, false};
        }
      }
      adam_step(targets, adam, config.learning_rate);
      ++result.report.steps;
    }
    for (auto& p : weights.params()) p.value.clear_grad();

    EpochStats stats{loss_sum / static_cast<double>(n), static_cast<double>(correct) / static_cast<double>(n)};
    result.report.epochs.push_back(stats);
    if (on_epoch) {
      if (auto reason = on_epoch(epoch, stats, weights)) {
        result.report.stopped_early = epoch + 1 < config.epochs;
        if (result.report.stopped_early) result.report.stop_reason = *reason;
        break;
      }
    }
  }
  result.weights = std::move(weights);
  return result;
}

std::size_t argmax(std::span<const double> probabilities) {
  if (probabilities.empty()) throw ShapeError("argmax of an empty vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < probabilities.size(); ++i)
    if (probabilities[i] > probabilities[best]) best = i;
  return best;
}

Metrics evaluate(const Classifier& classifier, std::size_t classes, const SampleSource& data, LabelView view) {
  if (data.size() == 0) throw DatasetError("cannot evaluate an empty sample list");
  Metrics m;
  m.classes = classes;
  m.count = data.size();
  m.confusion.assign(classes, std::vector<std::size_t>(classes, 0));
  double loss = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const std::size_t label = data.label(i, view);
    if (label >= classes) throw DatasetError("label out of range during evaluation");
    const Tensor probs = classifier(data.image(i));
    if (probs.size() != classes) throw ShapeError("classifier output size does not match class count");
    loss += ops::cross_entropy(probs, ops::one_hot(classes, label));
    ++m.confusion[label][argmax(probs.values())];
  }
  std::size_t trace = 0;
  m.precision.assign(classes, 0.0);
  m.recall.assign(classes, 0.0);
  for (std::size_t c = 0; c < classes; ++c) {
    trace += m.confusion[c][c];
    std::size_t row = 0, col = 0;
    for (std::size_t o = 0; o < classes; ++o) {
      row += m.confusion[c][o];
      col += m.confusion[o][c];
    }
    if (row) m.recall[c] = static_cast<double>(m.confusion[c][c]) / static_cast<double>(row);
    if (col) m.precision[c] = static_cast<double>(m.confusion[c][c]) / static_cast<double>(col);
  }
  m.accuracy = static_cast<double>(trace) / static_cast<double>(m.count);
  m.loss = loss / static_cast<double>(m.count);
  return m;
}

Metrics evaluate(const ArchitectureSpec& spec, const WeightStore& weights, const SampleSource& data,
                 LabelView view) {
  Tape tape;
  Classifier classify = [&](const Image& image) {
    tape.clear();
    const auto fwd = forward(tape, spec, weights, to_tensor(image));
    return tape.value(fwd.probabilities);
  };
  return evaluate(classify, spec.num_classes(), data, view);
}

std::string_view to_string(Protocol protocol) {
  switch (protocol) {
    case Protocol::two_stage: return "two_stage";
    case Protocol::baseline: return "baseline";
    case Protocol::transfer: return "transfer";
    case Protocol::fine_tune: return "fine_tune";
  }
  return "unknown";
}

Protocol parse_protocol(std::string_view name) {
  for (auto p : {Protocol::two_stage, Protocol::baseline, Protocol::transfer, Protocol::fine_tune})
    if (to_string(p) == name) return p;
  throw ConfigError("unknown protocol '" + std::string(name) + "'");
}

bool protocol_needs_donor(Protocol protocol) {
  return protocol == Protocol::transfer || protocol == Protocol::fine_tune;
}

SimpleCnnOptions network_options(const NetworkOptions& net, double dropout, std::size_t classes) {
  SimpleCnnOptions o;
  o.input_size = net.input_size;
  o.conv_filters = net.conv_filters;
  o.hidden_units = net.hidden_units;
  o.dropout = dropout;
  o.num_classes = classes;
  return o;
}

ProtocolSeeds::ProtocolSeeds(std::uint64_t seed)
    : backbone(Rng(seed).fork("backbone")),
      stage1_head(Rng(seed).fork("stage1 head")),
      stage2_head(Rng(seed).fork("stage2 head")),
      stage1_stream(Rng(seed).fork("stage1")),
      stage2_stream(Rng(seed).fork("stage2")) {}

ProtocolResult two_stage_train(const NetworkOptions& net, std::size_t symptoms, std::size_t parents,
                               const SampleSource& data, const TrainConfig& config,
                               std::optional<std::size_t> stage_one_epochs, const EpochCallback& on_epoch) {
  ProtocolSeeds seeds(config.seed);
  Model stage1 = build_simple_cnn(network_options(net, config.dropout, symptoms), seeds.backbone, seeds.stage1_head);
  stage1.weights = apply_freeze_policy(stage1.spec, std::move(stage1.weights), Regime::two_stage_stage1, nullptr);
  TrainConfig c1 = config;
  if (stage_one_epochs) c1.epochs = *stage_one_epochs;

  ProtocolResult out;
  auto r1 = train(stage1.spec, std::move(stage1.weights), data, LabelView::symptom, c1, seeds.stage1_stream,
                  "stage1", on_epoch);
  stage1.weights = std::move(r1.weights);
  out.reports.push_back(std::move(r1.report));

  Model stage2 = replace_head(stage1, parents, seeds.stage2_head);
  stage2.weights = apply_freeze_policy(stage2.spec, std::move(stage2.weights), Regime::two_stage_stage2,
                                       &stage1.weights);
  auto r2 = train(stage2.spec, std::move(stage2.weights), data, LabelView::parent, config, seeds.stage2_stream,
                  "stage2", on_epoch);
  stage2.weights = std::move(r2.weights);
  out.reports.push_back(std::move(r2.report));
  out.model = std::move(stage2);
  return out;
}

ProtocolResult single_stage_train(const NetworkOptions& net, Regime regime, std::size_t parents,
                                  const SampleSource& data, const TrainConfig& config, const WeightStore* donor,
                                  const EpochCallback& on_epoch) {
  if (regime != Regime::baseline && regime != Regime::transfer && regime != Regime::fine_tune) {
    throw ConfigError("single-stage training takes baseline, transfer or fine_tune");
  }
  ProtocolSeeds seeds(config.seed);
  Model model = build_simple_cnn(network_options(net, config.dropout, parents), seeds.backbone, seeds.stage2_head);
  model.weights = apply_freeze_policy(model.spec, std::move(model.weights), regime, donor);
  auto r = train(model.spec, std::move(model.weights), data, LabelView::parent, config, seeds.stage2_stream,
                 std::string(to_string(regime)), on_epoch);
  model.weights = std::move(r.weights);
  ProtocolResult out;
  out.model = std::move(model);
  out.reports.push_back(std::move(r.report));
  return out;
}

ProtocolResult run_protocol(Protocol protocol, const NetworkOptions& net, std::size_t symptoms, std::size_t parents,
                            const SampleSource& data, const TrainConfig& config, const WeightStore* donor) {
  switch (protocol) {
    case Protocol::two_stage:
      if (donor) throw ConfigError("two_stage trains from scratch; no donor allowed");
      return two_stage_train(net, symptoms, parents, data, config);
    case Protocol::baseline:
      return single_stage_train(net, Regime::baseline, parents, data, config, donor);
    case Protocol::transfer:
      return single_stage_train(net, Regime::transfer, parents, data, config, donor);
    case Protocol::fine_tune:
      return single_stage_train(net, Regime::fine_tune, parents, data, config, donor);
  }
  throw ConfigError("unknown protocol");
}

CrossValReport CrossValReport::from_folds(std::vector<double> accuracies) {
  CrossValReport r;
  r.fold_accuracy = std::move(accuracies);
  const auto n = static_cast<double>(r.fold_accuracy.size());
  if (r.fold_accuracy.empty()) return r;
  r.mean = std::accumulate(r.fold_accuracy.begin(), r.fold_accuracy.end(), 0.0) / n;
  if (r.fold_accuracy.size() > 1) {
    double ss = 0.0;
    for (double a : r.fold_accuracy) ss += (a - r.mean) * (a - r.mean);
    r.std_dev = std::sqrt(ss / (n - 1.0));
  }
  return r;
}

std::uint64_t fold_seed(std::uint64_t seed, std::size_t fold) {
  return derive_seed(seed, static_cast<std::uint64_t>(fold));
}

FoldPlan plan_folds(std::span<const LabeledImage> originals, std::size_t k, std::uint64_t seed) {
  std::vector<std::size_t> parents, symptoms;
  for (std::size_t i = 0; i < originals.size(); ++i) {
    if (originals[i].origin.augmented || originals[i].origin.source != i) {
      throw DatasetError("cross-validation takes original samples numbered 0..N-1");
    }
    parents.push_back(originals[i].parent);
    symptoms.push_back(originals[i].symptom);
  }
  return stratified_kfold(parents, symptoms, k, Rng(seed).fork("folds").seed());
}

FoldOutcome run_fold(const CrossValSetup& setup, std::span<const LabeledImage> originals, const FoldPlan& plan,
                     std::size_t fold) {
  if (fold >= plan.k) throw ConfigError("fold index out of range");
  std::vector<const LabeledImage*> train_set;
  std::vector<LabeledImage> validation;
  for (std::size_t i = 0; i < originals.size(); ++i) {
    if (plan.assignment[i] == fold) {
      validation.push_back(originals[i]);
    } else {
      train_set.push_back(&originals[i]);
    }
  }
  const std::uint64_t aug_seed = Rng(setup.config.seed).fork("augment").seed();
  AugmentedSource train_source(std::move(train_set), setup.augment, aug_seed);
  VectorSource validation_source(validation);

  FoldOutcome outcome;
  outcome.fold = fold;
  outcome.train_count = train_source.size();
  if (setup.trainer) {
    const Classifier classify = setup.trainer(train_source, fold, outcome.reports);
    outcome.metrics = evaluate(classify, setup.parents, validation_source, LabelView::parent);
  } else {
    TrainConfig config = setup.config;
    config.seed = fold_seed(setup.config.seed, fold);
    auto result = run_protocol(setup.protocol, setup.net, setup.symptoms, setup.parents, train_source, config,
                               setup.donor);
    outcome.reports = std::move(result.reports);
    outcome.metrics = evaluate(result.model.spec, result.model.weights, validation_source, LabelView::parent);
  }
  return outcome;
}

CrossValReport cross_validate(const CrossValSetup& setup, std::span<const LabeledImage> originals,
                              std::vector<FoldOutcome>* outcomes) {
  const FoldPlan plan = plan_folds(originals, setup.k, setup.config.seed);
  std::vector<double> accuracy;
  for (std::size_t f = 0; f < setup.k; ++f) {
    FoldOutcome o = run_fold(setup, originals, plan, f);
    accuracy.push_back(o.metrics.accuracy);
    if (outcomes) outcomes->push_back(std::move(o));
  }
  return CrossValReport::from_folds(std::move(accuracy));
}

}  // namespace scnn
