#include "scnn/model.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

#include "scnn/errors.hpp"
#include "scnn/ops.hpp"

namespace scnn {

std::string_view to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::conv: return "conv";
    case LayerKind::pool: return "pool";
    case LayerKind::flatten: return "flatten";
    case LayerKind::dropout: return "dropout";
    case LayerKind::dense: return "dense";
  }
  return "unknown";
}

LayerSpec LayerSpec::conv(std::size_t filters, std::size_t kernel) {
  LayerSpec l;
  l.kind = LayerKind::conv;
  l.filters = filters;
  l.kernel = kernel;
  l.activation = Activation::relu;
  return l;
}

LayerSpec LayerSpec::pool() {
  LayerSpec l;
  l.kind = LayerKind::pool;
  return l;
}

LayerSpec LayerSpec::flatten() {
  LayerSpec l;
  l.kind = LayerKind::flatten;
  return l;
}

LayerSpec LayerSpec::dropout(double rate) {
  LayerSpec l;
  l.kind = LayerKind::dropout;
  l.rate = rate;
  return l;
}

LayerSpec LayerSpec::dense(std::size_t units, Activation activation) {
  LayerSpec l;
  l.kind = LayerKind::dense;
  l.units = units;
  l.activation = activation;
  return l;
}

std::vector<Shape> ArchitectureSpec::output_shapes() const {
  if (input.size() != 3 || shape_size(input) == 0) {
    throw ShapeError("network input must be HxWxC, got " + shape_string(input));
  }
  std::vector<Shape> shapes;
  Shape cur = input;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerSpec& l = layers[i];
    const std::string where = "layer " + std::to_string(i) + " (" + std::string(to_string(l.kind)) + ")";
    switch (l.kind) {
      case LayerKind::conv:
        if (cur.size() != 3) throw ShapeError(where + " needs an HxWxC input");
        if (l.kernel == 0 || l.filters == 0) throw ShapeError(where + " has no filters");
        if (cur[0] < l.kernel || cur[1] < l.kernel) {
          throw ShapeError(where + ": kernel " + std::to_string(l.kernel) + " exceeds input " +
                           shape_string(cur));
        }
        cur = {cur[0] - l.kernel + 1, cur[1] - l.kernel + 1, l.filters};
        break;
      case LayerKind::pool:
        if (cur.size() != 3 || cur[0] < 2 || cur[1] < 2) {
          throw ShapeError(where + ": input " + shape_string(cur) + " smaller than 2x2");
        }
        cur = {cur[0] / 2, cur[1] / 2, cur[2]};
        break;
      case LayerKind::flatten:
        cur = {shape_size(cur)};
        break;
      case LayerKind::dropout:
        ops::check_dropout_rate(l.rate);
        break;
      case LayerKind::dense:
        if (cur.size() != 1) throw ShapeError(where + " needs a flat input");
        if (l.units == 0) throw ShapeError(where + " has no units");
        cur = {l.units};
        break;
    }
    shapes.push_back(cur);
  }
  return shapes;
}

std::size_t ArchitectureSpec::head_layer() const {
  if (layers.empty() || layers.back().kind != LayerKind::dense) {
    throw ShapeError("architecture does not end in a dense head");
  }
  return layers.size() - 1;
}

std::size_t ArchitectureSpec::parameter_count() const {
  const auto shapes = output_shapes();
  std::size_t count = 0;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const Shape& in = i == 0 ? input : shapes[i - 1];
    const LayerSpec& l = layers[i];
    if (l.kind == LayerKind::conv) count += l.kernel * l.kernel * in[2] * l.filters + l.filters;
    if (l.kind == LayerKind::dense) count += in[0] * l.units + l.units;
  }
  return count;
}

std::optional<std::size_t> ArchitectureSpec::first_conv_layer() const {
  for (std::size_t i = 0; i < layers.size(); ++i)
    if (layers[i].kind == LayerKind::conv) return i;
  return std::nullopt;
}

std::optional<std::size_t> ArchitectureSpec::last_conv_layer() const {
  for (std::size_t i = layers.size(); i-- > 0;)
    if (layers[i].kind == LayerKind::conv) return i;
  return std::nullopt;
}

ArchitectureSpec simple_cnn_spec(const SimpleCnnOptions& options) {
  if (options.conv_filters.empty()) throw ConfigError("Simple CNN needs at least one convolution");
  if (options.num_classes < 2) throw ConfigError("Simple CNN needs at least two classes");
  ArchitectureSpec spec;
  spec.input = {options.input_size, options.input_size, 3};
  for (std::size_t i = 0; i < options.conv_filters.size(); ++i) {
    if (i > 0) spec.layers.push_back(LayerSpec::pool());
    spec.layers.push_back(LayerSpec::conv(options.conv_filters[i], options.kernel));
  }
  spec.layers.push_back(LayerSpec::flatten());
  spec.layers.push_back(LayerSpec::dropout(options.dropout));
  spec.layers.push_back(LayerSpec::dense(options.hidden_units, Activation::relu));
  spec.layers.push_back(LayerSpec::dense(options.num_classes, Activation::softmax));
  spec.output_shapes();
  return spec;
}

ArchitectureSpec simple_cnn_spec(std::size_t num_classes) {
  SimpleCnnOptions options;
  options.num_classes = num_classes;
  return simple_cnn_spec(options);
}

// ---------------------------------------------------------------------------

Parameter* WeightStore::find(std::string_view name) {
  for (auto& p : params_)
    if (p.name == name) return &p;
  return nullptr;
}

const Parameter* WeightStore::find(std::string_view name) const {
  for (const auto& p : params_)
    if (p.name == name) return &p;
  return nullptr;
}

Parameter& WeightStore::at(std::string_view name) {
  if (auto* p = find(name)) return *p;
  throw std::out_of_range("no parameter named " + std::string(name));
}

const Parameter& WeightStore::at(std::string_view name) const {
  if (const auto* p = find(name)) return *p;
  throw std::out_of_range("no parameter named " + std::string(name));
}

std::size_t WeightStore::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

std::vector<Shape> WeightStore::shapes() const {
  std::vector<Shape> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p.value.shape());
  return out;
}

void WeightStore::zero_grad() {
  for (auto& p : params_) {
    if (p.value.has_grad()) p.value.zero_grad();
  }
}

void WeightStore::clear_grads() {
  for (auto& p : params_) p.value.clear_grad();
}

bool WeightStore::identical(const WeightStore& other) const {
  if (params_.size() != other.params_.size()) return false;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const auto& a = params_[i];
    const auto& b = other.params_[i];
    if (a.name != b.name || a.trainable != b.trainable || !a.value.same_values(b.value)) return false;
  }
  return true;
}

std::string layer_param_prefix(const ArchitectureSpec& spec, std::size_t index) {
  const LayerKind kind = spec.layers.at(index).kind;
  std::size_t ordinal = 0;
  for (std::size_t i = 0; i <= index; ++i)
    if (spec.layers[i].kind == kind) ++ordinal;
  return std::string(to_string(kind)) + std::to_string(ordinal);
}

bool is_head_parameter(const ArchitectureSpec& spec, const Parameter& p) {
  return p.layer == spec.head_layer();
}

namespace {

struct ExpectedParam {
  std::string name;
  std::size_t layer;
  LayerKind kind;
  ParamRole role;
  Shape shape;
  std::size_t fan_in;
};

std::vector<ExpectedParam> expected_params(const ArchitectureSpec& spec) {
  const auto shapes = spec.output_shapes();
  std::vector<ExpectedParam> out;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    if (!l.has_parameters()) continue;
    const Shape& in = i == 0 ? spec.input : shapes[i - 1];
    const std::string prefix = layer_param_prefix(spec, i);
    if (l.kind == LayerKind::conv) {
      const std::size_t fan_in = l.kernel * l.kernel * in[2];
      out.push_back({prefix + ".weight", i, l.kind, ParamRole::weight, {l.kernel, l.kernel, in[2], l.filters}, fan_in});
      out.push_back({prefix + ".bias", i, l.kind, ParamRole::bias, {l.filters}, fan_in});
    } else {
      out.push_back({prefix + ".weight", i, l.kind, ParamRole::weight, {in[0], l.units}, in[0]});
      out.push_back({prefix + ".bias", i, l.kind, ParamRole::bias, {l.units}, in[0]});
    }
  }
  return out;
}

Tensor he_uniform(const Shape& shape, std::size_t fan_in, Rng& rng) {
  Tensor t(shape);
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (double& v : t.values()) v = rng.uniform(-limit, limit);
  return t;
}

Parameter make_param(const ExpectedParam& e, Rng& rng) {
  Parameter p;
  p.name = e.name;
  p.layer = e.layer;
  p.kind = e.kind;
  p.role = e.role;
  p.value = e.role == ParamRole::weight ? he_uniform(e.shape, e.fan_in, rng) : Tensor(e.shape);
  return p;
}

}  // namespace

void check_weights_match(const ArchitectureSpec& spec, const WeightStore& weights) {
  const auto expected = expected_params(spec);
  for (const auto& e : expected) {
    const Parameter* p = weights.find(e.name);
    if (!p) throw ShapeError("missing tensor " + e.name);
    if (p->value.shape() != e.shape) {
      throw ShapeError("tensor " + e.name + " has shape " + shape_string(p->value.shape()) +
                       ", architecture expects " + shape_string(e.shape));
    }
  }
  if (weights.size() != expected.size()) {
    throw ShapeError("weight store holds " + std::to_string(weights.size()) + " tensors, architecture expects " +
                     std::to_string(expected.size()));
  }
}

Model build_model(const ArchitectureSpec& spec, Rng& backbone_rng, Rng& head_rng) {
  Model model{spec, {}};
  const std::size_t head = spec.head_layer();
  for (const auto& e : expected_params(spec)) {
    model.weights.add(make_param(e, e.layer == head ? head_rng : backbone_rng));
  }
  return model;
}

Model build_simple_cnn(const SimpleCnnOptions& options, Rng& backbone_rng, Rng& head_rng) {
  return build_model(simple_cnn_spec(options), backbone_rng, head_rng);
}

Model build_simple_cnn(std::size_t num_classes, Rng& rng) {
  Rng head_rng = rng.fork("head");
  return build_model(simple_cnn_spec(num_classes), rng, head_rng);
}

void init_head(const ArchitectureSpec& spec, WeightStore& weights, Rng& rng) {
  const std::size_t head = spec.head_layer();
  for (const auto& e : expected_params(spec)) {
    if (e.layer != head) continue;
    Parameter fresh = make_param(e, rng);
    if (Parameter* p = weights.find(e.name)) {
      p->value = std::move(fresh.value);
      p->trainable = true;
    } else {
      weights.add(std::move(fresh));
    }
  }
}

// ---------------------------------------------------------------------------

namespace {

template <typename Weights, typename ParamFn>
ForwardResult forward_impl(Tape& tape, const ArchitectureSpec& spec, Weights& weights,
                           const Tensor& image, Mode mode, Rng* dropout_rng, ParamFn&& param) {
  if (image.shape() != spec.input) {
    throw ShapeError("image shape " + shape_string(image.shape()) + " does not match network input " +
                     shape_string(spec.input));
  }
  ForwardResult result;
  result.layer_outputs.reserve(spec.layers.size());
  Tape::Var x = tape.input(image);
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    switch (l.kind) {
      case LayerKind::conv:
      case LayerKind::dense: {
        const std::string prefix = layer_param_prefix(spec, i);
        Tape::Var w = param(weights.at(prefix + ".weight"));
        Tape::Var b = param(weights.at(prefix + ".bias"));
        x = l.kind == LayerKind::conv ? tape.conv2d(x, w, b) : tape.dense(x, w, b);
        if (l.activation == Activation::relu) x = tape.relu(x);
        if (l.activation == Activation::softmax) x = tape.softmax(x);
        break;
      }
      case LayerKind::pool:
        x = tape.maxpool2x2(x);
        break;
      case LayerKind::flatten:
        x = tape.flatten(x);
        break;
      case LayerKind::dropout:
        if (mode == Mode::train && l.rate > 0.0) {
          if (!dropout_rng) throw std::invalid_argument("train-mode forward needs a dropout rng");
          x = tape.dropout(x, ops::make_dropout_mask(tape.value(x).size(), l.rate, *dropout_rng));
        }
        break;
    }
    result.layer_outputs.push_back(x);
  }
  result.probabilities = x;
  return result;
}

}  // namespace

ForwardResult forward(Tape& tape, const ArchitectureSpec& spec, WeightStore& weights,
                      const Tensor& image, Mode mode, Rng* dropout_rng) {
  return forward_impl(tape, spec, weights, image, mode, dropout_rng,
                      [&tape](Parameter& p) { return tape.parameter(p.value, p.trainable); });
}

ForwardResult forward(Tape& tape, const ArchitectureSpec& spec, const WeightStore& weights,
                      const Tensor& image) {
  return forward_impl(tape, spec, weights, image, Mode::infer, nullptr,
                      [&tape](const Parameter& p) { return tape.parameter(p.value); });
}

Tensor predict(const ArchitectureSpec& spec, const WeightStore& weights, const Tensor& image) {
  Tape tape;
  const auto result = forward(tape, spec, weights, image);
  return tape.value(result.probabilities);
}

Model replace_head(const Model& model, std::size_t num_classes, Rng& rng) {
  if (num_classes < 2) throw ConfigError("a classification head needs at least two outputs");
  Model out;
  out.spec = model.spec;
  const std::size_t head = out.spec.head_layer();
  out.spec.layers[head].units = num_classes;
  for (const auto& p : model.weights.params()) {
    if (p.layer == head) continue;
    Parameter copy = p;
    copy.value.clear_grad();
    out.weights.add(std::move(copy));
  }
  init_head(out.spec, out.weights, rng);
  return out;
}

// ---------------------------------------------------------------------------

std::string_view to_string(Regime regime) {
  switch (regime) {
    case Regime::baseline: return "baseline";
    case Regime::transfer: return "transfer";
    case Regime::fine_tune: return "fine_tune";
    case Regime::two_stage_stage1: return "two_stage_stage1";
    case Regime::two_stage_stage2: return "two_stage_stage2";
  }
  return "unknown";
}

Regime parse_regime(std::string_view name) {
  for (Regime r : {Regime::baseline, Regime::transfer, Regime::fine_tune, Regime::two_stage_stage1,
                   Regime::two_stage_stage2}) {
    if (to_string(r) == name) return r;
  }
  throw ConfigError("unknown training regime '" + std::string(name) + "'");
}

bool regime_needs_donor(Regime regime) {
  return regime == Regime::transfer || regime == Regime::fine_tune || regime == Regime::two_stage_stage2;
}

WeightStore apply_freeze_policy(const ArchitectureSpec& spec, WeightStore weights, Regime regime,
                                const WeightStore* donor) {
  check_weights_match(spec, weights);
  if (regime_needs_donor(regime) && !donor) {
    throw ConfigError("regime " + std::string(to_string(regime)) + " needs donor weights");
  }
  if (!regime_needs_donor(regime) && donor) {
    throw ConfigError("regime " + std::string(to_string(regime)) + " trains from scratch; no donor allowed");
  }
  const std::size_t head = spec.head_layer();
  for (auto& p : weights.params()) {
    bool copy_from_donor = false;
    switch (regime) {
      case Regime::baseline:
      case Regime::two_stage_stage1:
        p.trainable = true;
        break;
      case Regime::transfer:
        copy_from_donor = p.kind == LayerKind::conv;
        p.trainable = p.kind != LayerKind::conv;
        break;
      case Regime::fine_tune:
        copy_from_donor = p.kind == LayerKind::conv;
        p.trainable = true;
        break;
      case Regime::two_stage_stage2:
        copy_from_donor = p.layer != head;
        p.trainable = true;
        break;
    }
    if (!copy_from_donor) continue;
    const Parameter* src = donor->find(p.name);
    if (!src) throw ShapeError("donor weights lack tensor " + p.name);
    if (src->value.shape() != p.value.shape()) {
      throw ShapeError("donor tensor " + p.name + " has shape " + shape_string(src->value.shape()) +
                       ", expected " + shape_string(p.value.shape()));
    }
    p.value = src->value;
    p.value.clear_grad();
  }
  return weights;
}

}  // namespace scnn
