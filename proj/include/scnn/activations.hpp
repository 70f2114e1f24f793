#pragma once

#include <cstdint>
#include <filesystem>
#include <string_view>
#include <vector>

#include "scnn/image.hpp"
#include "scnn/model.hpp"

namespace scnn {

enum class LayerSelector { first_conv, last_conv };

LayerSelector parse_layer_selector(std::string_view name);
std::string_view to_string(LayerSelector selector);

/// One channel of a convolution output (after ReLU).
struct ActivationMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> values;
  double min = 0.0;
  double max = 0.0;

  /// Linear stretch of [min, max] to [0, 255]; a constant map renders black.
  std::vector<std::uint8_t> to_gray() const;
};

struct ActivationDump {
  LayerSelector layer = LayerSelector::first_conv;
  std::size_t layer_index = 0;
  std::vector<ActivationMap> maps;

  std::size_t grid_columns() const;
  std::size_t grid_rows() const;
  /// Tiles of every map in a near-square grid separated by one black pixel.
  GrayImage composite() const;
};

ActivationDump export_activations(const ArchitectureSpec& spec, const WeightStore& weights,
                                  const Tensor& image, LayerSelector layer);

/// Writes map_NN.pgm for every channel, composite.pgm, and activations.json
/// listing the per-map normalization range.
void write_activation_dump(const ActivationDump& dump, const std::filesystem::path& directory);

}  // namespace scnn
