#include "scnn/augment.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "scnn/errors.hpp"

namespace scnn {

std::string_view to_string(TransformKind kind) {
  switch (kind) {
    case TransformKind::small_rotation: return "small_rotation";
    case TransformKind::right_angle_rotation: return "right_angle_rotation";
    case TransformKind::distortion: return "distortion";
    case TransformKind::shear: return "shear";
    case TransformKind::vertical_flip: return "vertical_flip";
    case TransformKind::horizontal_flip: return "horizontal_flip";
    case TransformKind::skew: return "skew";
    case TransformKind::intensity: return "intensity";
  }
  return "unknown";
}

TransformKind parse_transform(std::string_view name) {
  for (auto k : kTransformOrder)
    if (to_string(k) == name) return k;
  throw ConfigError("unknown transform '" + std::string(name) + "'");
}

bool is_rotation(TransformKind kind) {
  return kind == TransformKind::small_rotation || kind == TransformKind::right_angle_rotation;
}

void AugmentSpec::validate() const {
  for (auto k : kTransformOrder) {
    const double v = p(k);
    if (!(v >= 0.0 && v <= 1.0)) {
      throw ConfigError("probability of " + std::string(to_string(k)) + " must lie in [0, 1]");
    }
  }
  if (!(rotation_range_degrees >= 0.0 && rotation_range_degrees <= 180.0)) {
    throw ConfigError("rotation range must lie in [0, 180] degrees");
  }
}

bool AugmentSpec::favors_rotation() const {
  for (auto r : kTransformOrder) {
    if (!is_rotation(r)) continue;
    for (auto o : kTransformOrder) {
      if (!is_rotation(o) && !(p(r) > p(o))) return false;
    }
  }
  return true;
}

TransformParams draw_params(TransformKind kind, const AugmentSpec& spec, Rng& rng) {
  TransformParams params;
  switch (kind) {
    case TransformKind::small_rotation:
      params.angle_degrees = rng.uniform(-spec.rotation_range_degrees, spec.rotation_range_degrees);
      break;
    case TransformKind::right_angle_rotation:
      params.quarter_turns = 1 + static_cast<int>(rng.uniform_index(3));
      break;
    case TransformKind::distortion:
      for (auto& v : params.grid_dx) v = rng.uniform(-kMaxDistortion, kMaxDistortion);
      for (auto& v : params.grid_dy) v = rng.uniform(-kMaxDistortion, kMaxDistortion);
      break;
    case TransformKind::shear:
      params.shear = rng.uniform(-kMaxShear, kMaxShear);
      break;
    case TransformKind::skew: {
      // Pull the two corners of one side toward each other: a perspective tilt.
      const auto side = rng.uniform_index(4);
      const double t = rng.uniform(0.0, kMaxSkew);
      auto& c = params.corners;  // TL(0,1) TR(2,3) BR(4,5) BL(6,7)
      switch (side) {
        case 0: c[0] = t; c[2] = -t; break;   // top
        case 1: c[4] = -t; c[6] = t; break;   // bottom
        case 2: c[1] = t; c[7] = -t; break;   // left
        default: c[3] = t; c[5] = -t; break;  // right
      }
      break;
    }
    case TransformKind::intensity:
      params.intensity = rng.uniform(kMinIntensity, kMaxIntensity);
      break;
    case TransformKind::vertical_flip:
    case TransformKind::horizontal_flip:
      break;
  }
  return params;
}

namespace {

constexpr double kTolerance = 1e-12;

double reflect(double v, std::size_t n) {
  if (n == 1) return 0.0;
  const double last = static_cast<double>(n - 1);
  const double period = 2.0 * last;
  v = std::fmod(std::abs(v), period);
  return v > last ? period - v : v;
}

// Bilinear sample at continuous (x, y) with mirror reflection at the borders.
void sample(const Image& img, double x, double y, float* out) {
  x = reflect(x, img.width);
  y = reflect(y, img.height);
  const std::size_t x0 = std::min(static_cast<std::size_t>(x), img.width - 1);
  const std::size_t y0 = std::min(static_cast<std::size_t>(y), img.height - 1);
  const std::size_t x1 = std::min(x0 + 1, img.width - 1);
  const std::size_t y1 = std::min(y0 + 1, img.height - 1);
  const double fx = x - static_cast<double>(x0), fy = y - static_cast<double>(y0);
  for (std::size_t c = 0; c < 3; ++c) {
    const double top = img.at(y0, x0, c) * (1.0 - fx) + img.at(y0, x1, c) * fx;
    const double bottom = img.at(y1, x0, c) * (1.0 - fx) + img.at(y1, x1, c) * fx;
    out[c] = static_cast<float>(std::clamp(top * (1.0 - fy) + bottom * fy, 0.0, 1.0));
  }
}

// out(x, y) = in(map(x, y)).
template <typename Map>
Image inverse_map(const Image& in, Map&& map) {
  Image out(in.height, in.width);
  for (std::size_t y = 0; y < in.height; ++y) {
    for (std::size_t x = 0; x < in.width; ++x) {
      const auto [sx, sy] = map(static_cast<double>(x), static_cast<double>(y));
      sample(in, sx, sy, &out.pixels[(y * in.width + x) * 3]);
    }
  }
  return out;
}

Image rotate(const Image& in, double degrees) {
  const double a = degrees * std::numbers::pi / 180.0;
  const double c = std::cos(a), s = std::sin(a);
  const double cx = (static_cast<double>(in.width) - 1.0) / 2.0;
  const double cy = (static_cast<double>(in.height) - 1.0) / 2.0;
  return inverse_map(in, [&](double x, double y) {
    const double dx = x - cx, dy = y - cy;
    return std::pair{cx + c * dx - s * dy, cy + s * dx + c * dy};
  });
}

Image quarter_turns(const Image& in, int turns) {
  Image out = in;
  for (int t = 0; t < turns; ++t) {
    const Image src = std::move(out);
    out = Image(src.width, src.height);
    for (std::size_t y = 0; y < out.height; ++y)
      for (std::size_t x = 0; x < out.width; ++x)
        for (std::size_t c = 0; c < 3; ++c) out.at(y, x, c) = src.at(x, src.width - 1 - y, c);
  }
  return out;
}

Image distort(const Image& in, const TransformParams& p) {
  constexpr std::size_t G = kDistortionGrid;
  const double w = static_cast<double>(in.width);
  const double sx_scale = in.width > 1 ? static_cast<double>(G - 1) / (w - 1.0) : 0.0;
  const double sy_scale = in.height > 1 ? static_cast<double>(G - 1) / (static_cast<double>(in.height) - 1.0) : 0.0;
  return inverse_map(in, [&](double x, double y) {
    const double u = x * sx_scale, v = y * sy_scale;
    const std::size_t i0 = std::min(static_cast<std::size_t>(u), G - 2);
    const std::size_t j0 = std::min(static_cast<std::size_t>(v), G - 2);
    const double fu = u - static_cast<double>(i0), fv = v - static_cast<double>(j0);
    auto lerp_grid = [&](const auto& grid) {
      const double a = grid[j0 * G + i0], b = grid[j0 * G + i0 + 1];
      const double c = grid[(j0 + 1) * G + i0], d = grid[(j0 + 1) * G + i0 + 1];
      return ((a * (1 - fu) + b * fu) * (1 - fv) + (c * (1 - fu) + d * fu) * fv) * w;
    };
    return std::pair{x + lerp_grid(p.grid_dx), y + lerp_grid(p.grid_dy)};
  });
}

Image shear(const Image& in, double factor) {
  const double cy = (static_cast<double>(in.height) - 1.0) / 2.0;
  return inverse_map(in, [&](double x, double y) { return std::pair{x + factor * (y - cy), y}; });
}

// Homography taking the displaced corners back onto the original corners.
Image skew(const Image& in, const TransformParams& p) {
  const double w = static_cast<double>(in.width) - 1.0, h = static_cast<double>(in.height) - 1.0;
  const double scale = static_cast<double>(in.width);
  const double src[4][2] = {{0, 0}, {w, 0}, {w, h}, {0, h}};
  Eigen::Matrix<double, 8, 8> A;
  Eigen::Matrix<double, 8, 1> b;
  for (int i = 0; i < 4; ++i) {
    const double x = src[i][0] + p.corners[2 * i] * scale;
    const double y = src[i][1] + p.corners[2 * i + 1] * scale;
    const double u = src[i][0], v = src[i][1];
    A.row(2 * i) << x, y, 1, 0, 0, 0, -u * x, -u * y;
    A.row(2 * i + 1) << 0, 0, 0, x, y, 1, -v * x, -v * y;
    b(2 * i) = u;
    b(2 * i + 1) = v;
  }
  const Eigen::Matrix<double, 8, 1> hm = A.fullPivLu().solve(b);
  return inverse_map(in, [&](double x, double y) {
    const double d = hm(6) * x + hm(7) * y + 1.0;
    return std::pair{(hm(0) * x + hm(1) * y + hm(2)) / d, (hm(3) * x + hm(4) * y + hm(5)) / d};
  });
}

void check_params(const Image& image, TransformKind kind, const TransformParams& p) {
  auto fail = [kind](const std::string& what) {
    throw ConfigError(std::string(to_string(kind)) + ": " + what);
  };
  switch (kind) {
    case TransformKind::small_rotation:
      if (!(std::abs(p.angle_degrees) <= 180.0)) fail("angle must lie in [-180, 180] degrees");
      break;
    case TransformKind::right_angle_rotation:
      if (p.quarter_turns < 0 || p.quarter_turns > 3) fail("quarter turns must be 0..3");
      if (p.quarter_turns % 2 == 1 && image.height != image.width) fail("odd quarter turns need a square image");
      break;
    case TransformKind::distortion:
      for (std::size_t i = 0; i < p.grid_dx.size(); ++i) {
        if (!(std::abs(p.grid_dx[i]) <= kMaxDistortion + kTolerance) ||
            !(std::abs(p.grid_dy[i]) <= kMaxDistortion + kTolerance)) {
          fail("control-point displacement exceeds 5% of the width");
        }
      }
      break;
    case TransformKind::shear:
      if (!(std::abs(p.shear) <= kMaxShear + kTolerance)) fail("shear factor must lie in [-0.2, 0.2]");
      break;
    case TransformKind::skew:
      for (double c : p.corners)
        if (!(std::abs(c) <= kMaxSkew + kTolerance)) fail("corner displacement exceeds 10% of the width");
      break;
    case TransformKind::intensity:
      if (!(p.intensity >= kMinIntensity - kTolerance && p.intensity <= kMaxIntensity + kTolerance)) {
        fail("intensity factor must lie in [0.7, 1.3]");
      }
      break;
    case TransformKind::vertical_flip:
    case TransformKind::horizontal_flip:
      break;
  }
}

}  // namespace

Image apply_transform(const Image& image, TransformKind kind, const TransformParams& params) {
  check_params(image, kind, params);
  switch (kind) {
    case TransformKind::small_rotation:
      return rotate(image, params.angle_degrees);
    case TransformKind::right_angle_rotation:
      return quarter_turns(image, params.quarter_turns);
    case TransformKind::distortion:
      return distort(image, params);
    case TransformKind::shear:
      return shear(image, params.shear);
    case TransformKind::skew:
      return skew(image, params);
    case TransformKind::vertical_flip: {
      Image out(image.height, image.width);
      const std::size_t row = image.width * 3;
      for (std::size_t y = 0; y < image.height; ++y)
        std::copy_n(image.pixels.begin() + static_cast<std::ptrdiff_t>((image.height - 1 - y) * row), row,
                    out.pixels.begin() + static_cast<std::ptrdiff_t>(y * row));
      return out;
    }
    case TransformKind::horizontal_flip: {
      Image out(image.height, image.width);
      for (std::size_t y = 0; y < image.height; ++y)
        for (std::size_t x = 0; x < image.width; ++x)
          for (std::size_t c = 0; c < 3; ++c) out.at(y, x, c) = image.at(y, image.width - 1 - x, c);
      return out;
    }
    case TransformKind::intensity: {
      Image out = image;
      for (float& v : out.pixels) {
        v = static_cast<float>(std::clamp(static_cast<double>(v) * params.intensity, 0.0, 1.0));
      }
      return out;
    }
  }
  throw ConfigError("unknown transform kind");
}

Image apply_transform(const Image& image, TransformKind kind, const AugmentSpec& spec, Rng& rng) {
  return apply_transform(image, kind, draw_params(kind, spec, rng));
}

AugmentPlan plan_augmentation(const AugmentSpec& spec, Rng& rng) {
  spec.validate();
  AugmentPlan plan;
  for (auto kind : kTransformOrder) {
    if (rng.uniform() < spec.p(kind)) plan.push_back({kind, draw_params(kind, spec, rng)});
  }
  return plan;
}

Image apply_plan(const Image& image, const AugmentPlan& plan) {
  Image out = image;
  for (const auto& step : plan) out = apply_transform(out, step.kind, step.params);
  return out;
}

Image augment_one(const Image& image, const AugmentSpec& spec, Rng& rng) {
  return apply_plan(image, plan_augmentation(spec, rng));
}

Image resize(const Image& image, std::size_t height, std::size_t width) {
  if (height == 0 || width == 0) throw ConfigError("resize target must be positive");
  if (height == image.height && width == image.width) return image;
  Image out(height, width);
  const double sy = static_cast<double>(image.height) / static_cast<double>(height);
  const double sx = static_cast<double>(image.width) / static_cast<double>(width);
  const double max_y = static_cast<double>(image.height - 1), max_x = static_cast<double>(image.width - 1);
  for (std::size_t y = 0; y < height; ++y) {
    const double fy_src = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0, max_y);
    const std::size_t y0 = static_cast<std::size_t>(fy_src);
    const std::size_t y1 = std::min(y0 + 1, image.height - 1);
    const double fy = fy_src - static_cast<double>(y0);
    for (std::size_t x = 0; x < width; ++x) {
      const double fx_src = std::clamp((static_cast<double>(x) + 0.5) * sx - 0.5, 0.0, max_x);
      const std::size_t x0 = static_cast<std::size_t>(fx_src);
      const std::size_t x1 = std::min(x0 + 1, image.width - 1);
      const double fx = fx_src - static_cast<double>(x0);
      for (std::size_t c = 0; c < 3; ++c) {
        const double top = image.at(y0, x0, c) * (1.0 - fx) + image.at(y0, x1, c) * fx;
        const double bottom = image.at(y1, x0, c) * (1.0 - fx) + image.at(y1, x1, c) * fx;
        out.at(y, x, c) = static_cast<float>(std::clamp(top * (1.0 - fy) + bottom * fy, 0.0, 1.0));
      }
    }
  }
  return out;
}

Image make_variant(const Image& original, const AugmentSpec& spec, std::uint64_t seed,
                   std::size_t source_id, std::size_t k) {
  Rng rng(derive_seed(derive_seed(seed, static_cast<std::uint64_t>(source_id)), static_cast<std::uint64_t>(k)));
  return augment_one(original, spec, rng);
}

std::vector<LabeledImage> expand_dataset(std::span<const LabeledImage> originals, const AugmentSpec& spec,
                                         const Rng& rng) {
  spec.validate();
  std::vector<LabeledImage> out;
  out.reserve(originals.size() * (1 + spec.variants_per_image));
  for (const auto& s : originals) {
    out.push_back(s);
    for (std::size_t k = 1; k <= spec.variants_per_image; ++k) {
      LabeledImage v;
      v.image = make_variant(s.image, spec, rng.seed(), s.origin.source, k);
      v.symptom = s.symptom;
      v.parent = s.parent;
      v.origin = {true, s.origin.source, k};
      out.push_back(std::move(v));
    }
  }
  return out;
}

}  // namespace scnn
