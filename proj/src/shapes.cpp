#include "mlvae/shapes.hpp"

#include <cmath>
#include <numbers>
#include <utility>

namespace mlvae {

std::string to_string(ShapeKind k) {
  switch (k) {
    case ShapeKind::circle: return "circle";
    case ShapeKind::star: return "star";
    case ShapeKind::triangle: return "triangle";
    case ShapeKind::square: return "square";
  }
  return "unknown";
}

ShapeKind shape_kind_from_string(const std::string& s) {
  if (s == "circle") return ShapeKind::circle;
  if (s == "star") return ShapeKind::star;
  if (s == "triangle") return ShapeKind::triangle;
  if (s == "square") return ShapeKind::square;
  throw DatasetError("unknown shape '" + s + "'");
}

void ShapesSpec::validate() const {
  if (shapes.empty()) throw DatasetError("shapes spec: shape inventory is empty");
  if (colors.empty()) throw DatasetError("shapes spec: color inventory is empty");
  if (samples_per_group == 0) throw DatasetError("shapes spec: samples_per_group must be positive");
  if (image_size < 4) throw DatasetError("shapes spec: image_size too small");
  if (!(base_radius > 0.0) || position_jitter < 0.0 || scale_jitter < 0.0 || scale_jitter >= 1.0) {
    throw DatasetError("shapes spec: radius and jitter ranges must be positive");
  }
  const double reach = base_radius * (1.0 + scale_jitter) + position_jitter;
  if (reach > static_cast<double>(image_size) / 2.0) {
    throw DatasetError("shapes spec: radius " + std::to_string(base_radius) + " with jitter reaches " +
                       std::to_string(reach) + " pixels, beyond the half-canvas " +
                       std::to_string(static_cast<double>(image_size) / 2.0));
  }
  for (const auto& c : colors)
    for (float v : c.rgb)
      if (!(v >= 0.0f && v <= 1.0f)) throw DatasetError("shapes spec: color channels must lie in [0, 1]");
}

namespace {

using Point = std::pair<double, double>;

bool inside_polygon(const std::vector<Point>& poly, double x, double y) {
  bool inside = false;
  for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
    const auto [xi, yi] = poly[i];
    const auto [xj, yj] = poly[j];
    if ((yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi) inside = !inside;
  }
  return inside;
}

// Vertices on alternating radii, first vertex pointing up (image y grows down).
std::vector<Point> radial_polygon(double cx, double cy, std::size_t points, double outer, double inner) {
  std::vector<Point> poly;
  const bool starred = inner > 0.0;
  const std::size_t count = starred ? 2 * points : points;
  for (std::size_t k = 0; k < count; ++k) {
    const double angle = -std::numbers::pi / 2.0 + 2.0 * std::numbers::pi * static_cast<double>(k) / count;
    const double r = (starred && k % 2) ? inner : outer;
    poly.emplace_back(cx + r * std::cos(angle), cy + r * std::sin(angle));
  }
  return poly;
}

}  // namespace

std::vector<float> render_shape(ShapeKind kind, double center_x, double center_y, double radius,
                                const std::array<float, 3>& rgb, std::size_t image_size) {
  std::vector<Point> poly;
  switch (kind) {
    case ShapeKind::star: poly = radial_polygon(center_x, center_y, 5, radius, 0.5 * radius); break;
    case ShapeKind::triangle: poly = radial_polygon(center_x, center_y, 3, radius, 0.0); break;
    case ShapeKind::square: {
      const double h = radius / std::numbers::sqrt2;
      poly = {{center_x - h, center_y - h}, {center_x + h, center_y - h},
              {center_x + h, center_y + h}, {center_x - h, center_y + h}};
      break;
    }
    case ShapeKind::circle: break;
  }
  std::vector<float> image(image_size * image_size * 3, 0.0f);
  for (std::size_t y = 0; y < image_size; ++y) {
    for (std::size_t x = 0; x < image_size; ++x) {
      const double px = static_cast<double>(x) + 0.5;
      const double py = static_cast<double>(y) + 0.5;
      bool lit;
      if (kind == ShapeKind::circle) {
        const double dx = px - center_x, dy = py - center_y;
        lit = dx * dx + dy * dy <= radius * radius;
      } else {
        lit = inside_polygon(poly, px, py);
      }
      if (!lit) continue;
      float* pixel = image.data() + (y * image_size + x) * 3;
      pixel[0] = rgb[0];
      pixel[1] = rgb[1];
      pixel[2] = rgb[2];
    }
  }
  return image;
}

GroupedDataset generate_shapes_dataset(const ShapesSpec& spec) {
  spec.validate();
  CounterRng rng = CounterRng(spec.seed).fork("shapes");
  const std::size_t group_count = spec.group_by == GroupBy::shape ? spec.shapes.size() : spec.colors.size();
  const double half = static_cast<double>(spec.image_size) / 2.0;

  std::vector<float> pixels;
  std::vector<std::vector<std::size_t>> groups(group_count);
  std::vector<std::string> labels;
  std::size_t next = 0;
  for (std::size_t g = 0; g < group_count; ++g) {
    labels.push_back(spec.group_by == GroupBy::shape ? to_string(spec.shapes[g]) : spec.colors[g].name);
    for (std::size_t s = 0; s < spec.samples_per_group; ++s) {
      ShapeKind kind;
      const NamedColor* color;
      if (spec.group_by == GroupBy::shape) {
        kind = spec.shapes[g];
        color = &spec.colors[rng.uniform_index(spec.colors.size())];
      } else {
        kind = spec.shapes[rng.uniform_index(spec.shapes.size())];
        color = &spec.colors[g];
      }
      const double cx = half + spec.position_jitter * (2.0 * rng.uniform() - 1.0);
      const double cy = half + spec.position_jitter * (2.0 * rng.uniform() - 1.0);
      const double radius = spec.base_radius * (1.0 + spec.scale_jitter * (2.0 * rng.uniform() - 1.0));
      const auto image = render_shape(kind, cx, cy, radius, color->rgb, spec.image_size);
      pixels.insert(pixels.end(), image.begin(), image.end());
      groups[g].push_back(next++);
    }
  }
  return GroupedDataset(ImageFormat{spec.image_size, spec.image_size, 3}, std::move(pixels), std::move(groups),
                        std::move(labels));
}

}  // namespace mlvae
