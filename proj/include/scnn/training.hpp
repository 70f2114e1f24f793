#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "scnn/augment.hpp"
#include "scnn/dataset.hpp"
#include "scnn/model.hpp"

namespace scnn {

struct TrainConfig {
  double learning_rate = 1e-4;
  std::size_t batch_size = 64;
  std::size_t epochs = 100;
  double dropout = 0.3;
  std::uint64_t seed = 0;

  /// Throws ConfigError unless learning rate and batch size are positive and
  /// dropout lies in [0, 1).
  void validate() const;
};

/// Random-access training data. Implementations may synthesize images on
/// demand, so image() returns by value.
class SampleSource {
 public:
  virtual ~SampleSource() = default;
  virtual std::size_t size() const = 0;
  virtual std::size_t symptom(std::size_t i) const = 0;
  virtual std::size_t parent(std::size_t i) const = 0;
  virtual Image image(std::size_t i) const = 0;

  std::size_t label(std::size_t i, LabelView view) const {
    return view == LabelView::symptom ? symptom(i) : parent(i);
  }
};

class VectorSource final : public SampleSource {
 public:
  explicit VectorSource(std::span<const LabeledImage> samples) : samples_(samples) {}
  std::size_t size() const override { return samples_.size(); }
  std::size_t symptom(std::size_t i) const override { return samples_[i].symptom; }
  std::size_t parent(std::size_t i) const override { return samples_[i].parent; }
  Image image(std::size_t i) const override { return samples_[i].image; }

 private:
  std::span<const LabeledImage> samples_;
};

/// Lazy view of expand_dataset(): the same samples in the same order, with
/// each variant generated when it is requested.
class AugmentedSource final : public SampleSource {
 public:
  AugmentedSource(std::vector<const LabeledImage*> originals, AugmentSpec spec, std::uint64_t seed);
  std::size_t size() const override { return originals_.size() * (1 + spec_.variants_per_image); }
  std::size_t symptom(std::size_t i) const override { return original(i).symptom; }
  std::size_t parent(std::size_t i) const override { return original(i).parent; }
  Image image(std::size_t i) const override;
  Origin origin(std::size_t i) const;

 private:
  const LabeledImage& original(std::size_t i) const { return *originals_[i / (1 + spec_.variants_per_image)]; }

  std::vector<const LabeledImage*> originals_;
  AugmentSpec spec_;
  std::uint64_t seed_;
};

struct EpochStats {
  double loss = 0.0;      // mean per-sample cross-entropy, train mode
  double accuracy = 0.0;  // of the train-mode predictions made during the epoch
};

struct StageReport {
  std::string stage;  // "stage1", "stage2" or a regime name
  std::size_t configured_epochs = 0;
  std::size_t steps = 0;
  std::vector<EpochStats> epochs;
  bool stopped_early = false;
  std::string stop_reason;
};

/// Called after every epoch; returning a reason ends training early.
using EpochCallback =
    std::function<std::optional<std::string>(std::size_t epoch, const EpochStats&, const WeightStore&)>;

struct TrainResult {
  WeightStore weights;
  StageReport report;
};

/// Mini-batch Adam on the batch-mean cross-entropy. Each epoch visits the
/// samples in a fresh seeded order; the last short batch is kept. Frozen
/// tensors are never touched. The dropout rate is the one stored in `spec`.
/// Randomness comes only from `stream`.
TrainResult train(const ArchitectureSpec& spec, WeightStore weights, const SampleSource& data, LabelView view,
                  const TrainConfig& config, const Rng& stream, std::string stage = "train",
                  const EpochCallback& on_epoch = {});

struct Metrics {
  std::size_t classes = 0;
  std::size_t count = 0;
  double accuracy = 0.0;
  double loss = 0.0;
  std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]
  std::vector<double> precision;                    // 0 for a never-predicted class
  std::vector<double> recall;                       // 0 for an absent class
};

/// Probability vector for one image.
using Classifier = std::function<Tensor(const Image&)>;

/// Predicted class = argmax, lowest index on ties.
std::size_t argmax(std::span<const double> probabilities);
Metrics evaluate(const Classifier& classifier, std::size_t classes, const SampleSource& data, LabelView view);
Metrics evaluate(const ArchitectureSpec& spec, const WeightStore& weights, const SampleSource& data,
                 LabelView view);

enum class Protocol { two_stage, baseline, transfer, fine_tune };
std::string_view to_string(Protocol protocol);
Protocol parse_protocol(std::string_view name);
bool protocol_needs_donor(Protocol protocol);

/// Network shape shared by every protocol; the head size is set per stage.
struct NetworkOptions {
  std::size_t input_size = 224;
  std::vector<std::size_t> conv_filters{16, 32, 64, 64, 64};
  std::size_t hidden_units = 100;
};

SimpleCnnOptions network_options(const NetworkOptions& net, double dropout, std::size_t classes);

struct ProtocolResult {
  Model model;
  std::vector<StageReport> reports;
};

/// Seed streams derived from config.seed. The backbone and the final
/// (parent-class) head draw from the same streams under every protocol, so a
/// two-stage run with zero stage-one epochs reproduces baseline exactly.
struct ProtocolSeeds {
  Rng backbone, stage1_head, stage2_head, stage1_stream, stage2_stream;
  explicit ProtocolSeeds(std::uint64_t seed);
};

/// Stage one on symptom labels with a `symptoms`-way head, then a fresh
/// `parents`-way head and stage two on parent labels from the stage-one
/// backbone. `stage_one_epochs` overrides config.epochs for stage one only.
ProtocolResult two_stage_train(const NetworkOptions& net, std::size_t symptoms, std::size_t parents,
                               const SampleSource& data, const TrainConfig& config,
                               std::optional<std::size_t> stage_one_epochs = {},
                               const EpochCallback& on_epoch = {});

/// Single-stage run of baseline, transfer or fine_tune on parent labels.
ProtocolResult single_stage_train(const NetworkOptions& net, Regime regime, std::size_t parents,
                                  const SampleSource& data, const TrainConfig& config,
                                  const WeightStore* donor = nullptr, const EpochCallback& on_epoch = {});

ProtocolResult run_protocol(Protocol protocol, const NetworkOptions& net, std::size_t symptoms,
                            std::size_t parents, const SampleSource& data, const TrainConfig& config,
                            const WeightStore* donor = nullptr);

struct CrossValReport {
  std::vector<double> fold_accuracy;
  double mean = 0.0;
  double std_dev = 0.0;  // sample standard deviation (n - 1)

  static CrossValReport from_folds(std::vector<double> accuracies);
};

struct FoldOutcome {
  std::size_t fold = 0;
  std::size_t train_count = 0;
  Metrics metrics;
  std::vector<StageReport> reports;
};

/// Produces a classifier from one fold's training data (parent labels are the
/// evaluation target). Replaceable for tests.
using FoldTrainer = std::function<Classifier(const SampleSource& train, std::size_t fold,
                                             std::vector<StageReport>& reports)>;

struct CrossValSetup {
  std::size_t k = 10;
  Protocol protocol = Protocol::two_stage;
  NetworkOptions net;
  TrainConfig config;
  AugmentSpec augment;
  const WeightStore* donor = nullptr;
  std::size_t symptoms = 0;
  std::size_t parents = 0;
  FoldTrainer trainer;  // empty: train `protocol`
};

/// Per-fold seed: the training seed of fold i depends on (seed, i) only.
std::uint64_t fold_seed(std::uint64_t seed, std::size_t fold);
FoldPlan plan_folds(std::span<const LabeledImage> originals, std::size_t k, std::uint64_t seed);

/// Trains on the originals outside `fold` (each expanded by augmentation) and
/// evaluates on the originals inside it, without augmentation.
FoldOutcome run_fold(const CrossValSetup& setup, std::span<const LabeledImage> originals, const FoldPlan& plan,
                     std::size_t fold);

CrossValReport cross_validate(const CrossValSetup& setup, std::span<const LabeledImage> originals,
                              std::vector<FoldOutcome>* outcomes = nullptr);

}  // namespace scnn
