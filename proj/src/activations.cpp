#include "scnn/activations.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include "json.hpp"

#include "scnn/errors.hpp"
#include "scnn/image.hpp"

namespace scnn {

LayerSelector parse_layer_selector(std::string_view name) {
  if (name == "first_conv") return LayerSelector::first_conv;
  if (name == "last_conv") return LayerSelector::last_conv;
  throw ConfigError("unknown layer selector '" + std::string(name) + "' (expected first_conv or last_conv)");
}

std::string_view to_string(LayerSelector selector) {
  return selector == LayerSelector::first_conv ? "first_conv" : "last_conv";
}

std::vector<std::uint8_t> ActivationMap::to_gray() const {
  std::vector<std::uint8_t> gray(values.size(), 0);
  const double range = max - min;
  if (!(range > 0.0)) return gray;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double t = (values[i] - min) / range;
    gray[i] = static_cast<std::uint8_t>(std::lround(std::clamp(t, 0.0, 1.0) * 255.0));
  }
  return gray;
}

std::size_t ActivationDump::grid_columns() const {
  const auto n = maps.size();
  std::size_t cols = 1;
  while (cols * cols < n) ++cols;
  return cols;
}

std::size_t ActivationDump::grid_rows() const {
  const auto cols = grid_columns();
  return (maps.size() + cols - 1) / cols;
}

GrayImage ActivationDump::composite() const {
  GrayImage out;
  if (maps.empty()) return out;
  const std::size_t h = maps.front().height, w = maps.front().width;
  const std::size_t cols = grid_columns(), rows = grid_rows();
  out.height = rows * h + (rows - 1);
  out.width = cols * w + (cols - 1);
  out.pixels.assign(out.height * out.width, 0);
  for (std::size_t i = 0; i < maps.size(); ++i) {
    const auto gray = maps[i].to_gray();
    const std::size_t oy = (i / cols) * (h + 1), ox = (i % cols) * (w + 1);
    for (std::size_t y = 0; y < h; ++y)
      std::copy_n(gray.begin() + static_cast<std::ptrdiff_t>(y * w), w,
                  out.pixels.begin() + static_cast<std::ptrdiff_t>((oy + y) * out.width + ox));
  }
  return out;
}

ActivationDump export_activations(const ArchitectureSpec& spec, const WeightStore& weights,
                                  const Tensor& image, LayerSelector layer) {
  const auto index = layer == LayerSelector::first_conv ? spec.first_conv_layer() : spec.last_conv_layer();
  if (!index) throw ShapeError("architecture has no convolution layer");
  Tape tape;
  const auto result = forward(tape, spec, weights, image);
  const Tensor& act = tape.value(result.layer_outputs[*index]);

  ActivationDump dump;
  dump.layer = layer;
  dump.layer_index = *index;
  const std::size_t h = act.dim(0), w = act.dim(1), channels = act.dim(2);
  dump.maps.resize(channels);
  for (std::size_t c = 0; c < channels; ++c) {
    ActivationMap& m = dump.maps[c];
    m.height = h;
    m.width = w;
    m.values.resize(h * w);
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) m.values[y * w + x] = act.at(y, x, c);
    const auto [lo, hi] = std::minmax_element(m.values.begin(), m.values.end());
    m.min = *lo;
    m.max = *hi;
  }
  return dump;
}

void write_activation_dump(const ActivationDump& dump, const std::filesystem::path& directory) {
  std::filesystem::create_directories(directory);
  nlohmann::ordered_json sidecar;
  sidecar["layer"] = std::string(to_string(dump.layer));
  sidecar["layer_index"] = dump.layer_index;
  sidecar["grid"] = {{"rows", dump.grid_rows()}, {"columns", dump.grid_columns()}};
  nlohmann::ordered_json maps = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < dump.maps.size(); ++i) {
    const auto& m = dump.maps[i];
    char name[32];
    std::snprintf(name, sizeof name, "map_%02zu.pgm", i);
    write_pgm(directory / name, m.height, m.width, m.to_gray());
    maps.push_back({{"file", name}, {"channel", i}, {"height", m.height}, {"width", m.width},
                    {"min", m.min}, {"max", m.max}});
  }
  sidecar["maps"] = std::move(maps);
  const GrayImage grid = dump.composite();
  write_pgm(directory / "composite.pgm", grid.height, grid.width, grid.pixels);
  sidecar["composite"] = {{"file", "composite.pgm"}, {"height", grid.height}, {"width", grid.width}};
  std::ofstream(directory / "activations.json") << sidecar.dump(2) << '\n';
}

}  // namespace scnn
