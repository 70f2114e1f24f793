#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "scnn/dataset.hpp"
#include "scnn/image.hpp"
#include "scnn/rng.hpp"

namespace scnn {

/// Listed in application order.
enum class TransformKind : std::uint8_t {
  small_rotation,
  right_angle_rotation,
  distortion,
  shear,
  vertical_flip,
  horizontal_flip,
  skew,
  intensity,
};

inline constexpr std::size_t kTransformCount = 8;
inline constexpr std::array<TransformKind, kTransformCount> kTransformOrder{
    TransformKind::small_rotation, TransformKind::right_angle_rotation, TransformKind::distortion,
    TransformKind::shear,          TransformKind::vertical_flip,        TransformKind::horizontal_flip,
    TransformKind::skew,           TransformKind::intensity};

std::string_view to_string(TransformKind kind);
TransformKind parse_transform(std::string_view name);
bool is_rotation(TransformKind kind);

/// Control-grid resolution of the elastic distortion.
inline constexpr std::size_t kDistortionGrid = 4;
inline constexpr double kMaxDistortion = 0.05;  // fraction of width
inline constexpr double kMaxShear = 0.2;
inline constexpr double kMaxSkew = 0.10;  // fraction of width
inline constexpr double kMinIntensity = 0.7;
inline constexpr double kMaxIntensity = 1.3;

struct TransformParams {
  double angle_degrees = 0.0;  // small_rotation, counter-clockwise on screen
  int quarter_turns = 0;       // right_angle_rotation, 0..3 counter-clockwise
  /// distortion: per control point (row-major 4x4) displacement, fraction of width
  std::array<double, kDistortionGrid * kDistortionGrid> grid_dx{};
  std::array<double, kDistortionGrid * kDistortionGrid> grid_dy{};
  double shear = 0.0;  // horizontal shear factor
  /// skew: displacement of the corners TL, TR, BR, BL as (dx, dy), fraction of width
  std::array<double, 8> corners{};
  double intensity = 1.0;  // multiplicative factor
};

struct AugmentSpec {
  /// Inclusion probability, indexed by TransformKind.
  std::array<double, kTransformCount> probability{0.7, 0.7, 0.3, 0.3, 0.3, 0.3, 0.3, 0.3};
  std::size_t variants_per_image = 10;
  double rotation_range_degrees = 15.0;

  double& p(TransformKind kind) { return probability[static_cast<std::size_t>(kind)]; }
  double p(TransformKind kind) const { return probability[static_cast<std::size_t>(kind)]; }

  /// Throws ConfigError on probabilities outside [0, 1] or a bad rotation range.
  void validate() const;
  /// True when every rotation-type probability exceeds every other probability.
  bool favors_rotation() const;
};

/// Draws parameters for one transform from their documented ranges.
TransformParams draw_params(TransformKind kind, const AugmentSpec& spec, Rng& rng);

/// Geometric transforms resample by inverse mapping with bilinear
/// interpolation and reflection at the borders; flips and quarter turns are
/// exact permutations. Output dimensions equal the input's. Throws ConfigError
/// for out-of-range parameters.
Image apply_transform(const Image& image, TransformKind kind, const TransformParams& params);
Image apply_transform(const Image& image, TransformKind kind, const AugmentSpec& spec, Rng& rng);

struct PlannedTransform {
  TransformKind kind;
  TransformParams params;
};
using AugmentPlan = std::vector<PlannedTransform>;

/// Includes each transform independently with its probability, in
/// application order, each with freshly drawn parameters.
AugmentPlan plan_augmentation(const AugmentSpec& spec, Rng& rng);
Image apply_plan(const Image& image, const AugmentPlan& plan);
Image augment_one(const Image& image, const AugmentSpec& spec, Rng& rng);

/// Bilinear resize with half-pixel centers; a same-size resize is an exact copy.
Image resize(const Image& image, std::size_t height, std::size_t width);

/// Variant `k` (1-based) of the original with id `source_id`; depends only on
/// (seed, source_id, k).
Image make_variant(const Image& original, const AugmentSpec& spec, std::uint64_t seed,
                   std::size_t source_id, std::size_t k);

/// Each original followed by its variants_per_image variants.
std::vector<LabeledImage> expand_dataset(std::span<const LabeledImage> originals, const AugmentSpec& spec,
                                         const Rng& rng);

}  // namespace scnn
