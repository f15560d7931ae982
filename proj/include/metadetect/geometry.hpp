#pragma once

namespace metadetect {

/// Axis-aligned box given by its row and column extents in pixel coordinates.
struct BBox {
    double r_min = 0.0;
    double r_max = 0.0;
    double c_min = 0.0;
    double c_max = 0.0;

    friend bool operator==(const BBox&, const BBox&) = default;
};

/// True when the extents are finite and ordered.
bool is_valid(const BBox& b) noexcept;

/// (r_max - r_min) * (c_max - c_min); continuous area, 0 for degenerate boxes.
double area(const BBox& b) noexcept;

double circumference(const BBox& b) noexcept;

/// Intersection over union under the continuous-area convention.
/// Class-agnostic; returns 0 when the union has zero area.
double iou(const BBox& a, const BBox& b) noexcept;

}  // namespace metadetect
