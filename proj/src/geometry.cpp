#include "metadetect/geometry.hpp"
#include "metadetect/error.hpp"

#include <algorithm>
#include <cmath>

namespace metadetect {

std::string_view to_string(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::io: return "io error";
        case ErrorKind::format: return "format error";
        case ErrorKind::schema: return "schema error";
        case ErrorKind::config: return "config error";
        case ErrorKind::data: return "data error";
    }
    return "error";
}

bool is_valid(const BBox& b) noexcept {
    return std::isfinite(b.r_min) && std::isfinite(b.r_max) && std::isfinite(b.c_min) &&
           std::isfinite(b.c_max) && b.r_min <= b.r_max && b.c_min <= b.c_max;
}

double area(const BBox& b) noexcept {
    return (b.r_max - b.r_min) * (b.c_max - b.c_min);
}

double circumference(const BBox& b) noexcept {
    return 2.0 * (b.r_max - b.r_min) + 2.0 * (b.c_max - b.c_min);
}

double iou(const BBox& a, const BBox& b) noexcept {
    const double dr = std::min(a.r_max, b.r_max) - std::max(a.r_min, b.r_min);
    const double dc = std::min(a.c_max, b.c_max) - std::max(a.c_min, b.c_min);
    const double inter = (dr > 0.0 && dc > 0.0) ? dr * dc : 0.0;
    const double uni = area(a) + area(b) - inter;
    if (!(uni > 0.0)) return 0.0;
    return std::clamp(inter / uni, 0.0, 1.0);
}

}  // namespace metadetect
