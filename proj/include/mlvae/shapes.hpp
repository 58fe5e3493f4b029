#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "mlvae/dataset.hpp"

namespace mlvae {

enum class ShapeKind { circle, star, triangle, square };

std::string to_string(ShapeKind k);
ShapeKind shape_kind_from_string(const std::string& s);

struct NamedColor {
  std::string name;
  std::array<float, 3> rgb;
};

enum class GroupBy { shape, color };

// Procedural shapes-and-colors images. Shape and color are the two labelled
// factors; position and scale jitter are unlabelled nuisance.
struct ShapesSpec {
  std::size_t image_size = 32;
  std::vector<ShapeKind> shapes = {ShapeKind::circle, ShapeKind::star};
  std::vector<NamedColor> colors = {{"green", {0.0f, 1.0f, 0.0f}},
                                    {"yellow", {1.0f, 1.0f, 0.0f}},
                                    {"blue", {0.0f, 0.0f, 1.0f}}};
  std::size_t samples_per_group = 50;
  double base_radius = 9.0;
  double position_jitter = 3.0;  // max center offset in pixels, per axis
  double scale_jitter = 0.2;     // radius multiplier drawn from [1-s, 1+s]
  GroupBy group_by = GroupBy::shape;
  std::uint64_t seed = 0;

  // Throws DatasetError on empty inventories or jitter that can leave the canvas.
  void validate() const;
};

// Colored shape on a black canvas: pixel (x, y) is lit when its center
// (x + 0.5, y + 0.5) falls inside the shape. Returns HWC floats.
std::vector<float> render_shape(ShapeKind kind, double center_x, double center_y, double radius,
                                const std::array<float, 3>& rgb, std::size_t image_size);

// One group per shape (or per color, when grouping by color); the other
// factor and the jitter vary within each group. Group labels name the
// grouping factor's value.
GroupedDataset generate_shapes_dataset(const ShapesSpec& spec);

}  // namespace mlvae
