#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "scnn/rng.hpp"
#include "scnn/tape.hpp"
#include "scnn/tensor.hpp"

namespace scnn {

enum class LayerKind : std::uint8_t { conv = 0, pool = 1, flatten = 2, dropout = 3, dense = 4 };
enum class Activation : std::uint8_t { none = 0, relu = 1, softmax = 2 };

std::string_view to_string(LayerKind kind);

struct LayerSpec {
  LayerKind kind = LayerKind::conv;
  std::size_t filters = 0;  // conv
  std::size_t kernel = 0;   // conv
  std::size_t units = 0;    // dense
  double rate = 0.0;        // dropout
  Activation activation = Activation::none;

  static LayerSpec conv(std::size_t filters, std::size_t kernel = 3);
  static LayerSpec pool();
  static LayerSpec flatten();
  static LayerSpec dropout(double rate);
  static LayerSpec dense(std::size_t units, Activation activation);

  bool has_parameters() const { return kind == LayerKind::conv || kind == LayerKind::dense; }
  bool operator==(const LayerSpec&) const = default;
};

/// Sequential network description: an H x W x C input followed by layers.
struct ArchitectureSpec {
  Shape input{224, 224, 3};
  std::vector<LayerSpec> layers;

  /// Output shape after every layer. Throws ShapeError if any layer does not fit.
  std::vector<Shape> output_shapes() const;
  /// Index of the final dense layer; throws ShapeError if the network does not end in one.
  std::size_t head_layer() const;
  std::size_t num_classes() const { return layers.at(head_layer()).units; }
  std::size_t parameter_count() const;
  std::optional<std::size_t> first_conv_layer() const;
  std::optional<std::size_t> last_conv_layer() const;

  bool operator==(const ArchitectureSpec&) const = default;
};

/// Knobs of the Simple CNN family. The defaults are the canonical 224 x 224
/// network: five valid 3x3 convolutions (16-32-64-64-64) with 2x2 pooling
/// between them, flatten (10x10x64 = 6400), dropout, dense-100, softmax head.
struct SimpleCnnOptions {
  std::size_t input_size = 224;
  std::vector<std::size_t> conv_filters{16, 32, 64, 64, 64};
  std::size_t kernel = 3;
  std::size_t hidden_units = 100;
  double dropout = 0.3;
  std::size_t num_classes = 9;
};

ArchitectureSpec simple_cnn_spec(const SimpleCnnOptions& options);
ArchitectureSpec simple_cnn_spec(std::size_t num_classes);

enum class ParamRole : std::uint8_t { weight = 0, bias = 1 };

struct Parameter {
  std::string name;  // e.g. "conv1.weight", "dense2.bias"
  std::size_t layer = 0;
  LayerKind kind = LayerKind::conv;
  ParamRole role = ParamRole::weight;
  Tensor value;
  bool trainable = true;
};

/// Learnable tensors of a network in layer order (weight before bias).
class WeightStore {
 public:
  std::vector<Parameter>& params() { return params_; }
  const std::vector<Parameter>& params() const { return params_; }
  std::size_t size() const { return params_.size(); }

  Parameter* find(std::string_view name);
  const Parameter* find(std::string_view name) const;
  Parameter& at(std::string_view name);
  const Parameter& at(std::string_view name) const;

  std::size_t parameter_count() const;
  std::vector<Shape> shapes() const;
  void zero_grad();
  void clear_grads();
  /// Bit-level equality of names, shapes, flags and values.
  bool identical(const WeightStore& other) const;

  void add(Parameter p) { params_.push_back(std::move(p)); }

 private:
  std::vector<Parameter> params_;
};

/// Name prefix of the parameters owned by layer `index` ("conv2", "dense1", ...).
std::string layer_param_prefix(const ArchitectureSpec& spec, std::size_t index);
bool is_head_parameter(const ArchitectureSpec& spec, const Parameter& p);

/// Checks that `weights` holds exactly the tensors `spec` calls for; the
/// ShapeError names the first offending tensor.
void check_weights_match(const ArchitectureSpec& spec, const WeightStore& weights);

struct Model {
  ArchitectureSpec spec;
  WeightStore weights;
};

/// He-uniform weights and zero biases. Backbone tensors draw from
/// `backbone_rng` in layer order; the head draws from `head_rng`, so networks
/// that differ only in their head share identical backbones.
Model build_model(const ArchitectureSpec& spec, Rng& backbone_rng, Rng& head_rng);
Model build_simple_cnn(const SimpleCnnOptions& options, Rng& backbone_rng, Rng& head_rng);
/// Single-stream convenience: the head draws from a fork of `rng`.
Model build_simple_cnn(std::size_t num_classes, Rng& rng);

void init_head(const ArchitectureSpec& spec, WeightStore& weights, Rng& rng);

enum class Mode { train, infer };

struct ForwardResult {
  Tape::Var probabilities;
  /// Tape variable after each layer, activation included.
  std::vector<Tape::Var> layer_outputs;
};

/// Records a forward pass on `tape`. Trainable tensors of `weights` receive
/// gradients on backward(). `dropout_rng` is required in train mode.
ForwardResult forward(Tape& tape, const ArchitectureSpec& spec, WeightStore& weights,
                      const Tensor& image, Mode mode, Rng* dropout_rng);
/// Inference-only pass; no tensor is touched.
ForwardResult forward(Tape& tape, const ArchitectureSpec& spec, const WeightStore& weights,
                      const Tensor& image);
Tensor predict(const ArchitectureSpec& spec, const WeightStore& weights, const Tensor& image);

/// New model whose head has `num_classes` freshly initialized outputs; every
/// other tensor is copied bit for bit.
Model replace_head(const Model& model, std::size_t num_classes, Rng& rng);

enum class Regime { baseline, transfer, fine_tune, two_stage_stage1, two_stage_stage2 };

std::string_view to_string(Regime regime);
Regime parse_regime(std::string_view name);
bool regime_needs_donor(Regime regime);

/// Sets trainability flags and, for donor-based regimes, copies the donor's
/// tensors:
///   baseline, two_stage_stage1   all trainable, no donor
///   transfer                     conv copied from donor and frozen, dense trainable
///   fine_tune                    conv copied from donor, all trainable
///   two_stage_stage2             everything but the head copied, all trainable
WeightStore apply_freeze_policy(const ArchitectureSpec& spec, WeightStore weights, Regime regime,
                                const WeightStore* donor);

}  // namespace scnn
