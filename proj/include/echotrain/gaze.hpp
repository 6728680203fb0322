#pragma once

// Point-of-gaze samples and the on-screen cell grid they are mapped onto.

#include <cmath>
#include <cstddef>
#include <optional>

#include "echotrain/errors.hpp"

namespace echotrain::session {

struct GazeSample {
    double t = 0.0; // s since session start
    double x = 0.0; // normalized screen coordinates, [0, 1]
    double y = 0.0;
    bool valid = true;

    bool operator==(const GazeSample&) const = default;
};

/// cols x rows cells covering the normalized rectangle [left, left+width) x
/// [top, top+height). Row 0 is at the top, as in mask text.
struct GridLayout {
    std::size_t cols = 1;
    std::size_t rows = 1;
    double left = 0.0;
    double top = 0.0;
    double width = 1.0;
    double height = 1.0;

    bool operator==(const GridLayout&) const = default;

    std::size_t cell_count() const { return cols * rows; }

    void validate() const
    {
        if (cols == 0 || rows == 0) {
            throw ConfigError("grid layout needs at least one column and one row");
        }
        if (!(width > 0.0) || !(height > 0.0) || !std::isfinite(left) || !std::isfinite(top)) {
            throw ConfigError("grid layout rectangle must have positive size");
        }
    }
};

/// Row-major cell under the sample, or nothing when the sample is invalid or
/// falls outside the grid. Cells are half-open: a point on a shared boundary
/// belongs to the cell whose interval starts there.
inline std::optional<std::size_t> map_pog_to_cell(const GazeSample& s, const GridLayout& g)
{
    if (!s.valid || !std::isfinite(s.x) || !std::isfinite(s.y)) {
        return std::nullopt;
    }
    double u = (s.x - g.left) / g.width;
    double v = (s.y - g.top) / g.height;
    if (u < 0.0 || v < 0.0 || u >= 1.0 || v >= 1.0) {
        return std::nullopt;
    }
    auto col = std::min(static_cast<std::size_t>(std::floor(u * static_cast<double>(g.cols))), g.cols - 1);
    auto row = std::min(static_cast<std::size_t>(std::floor(v * static_cast<double>(g.rows))), g.rows - 1);
    return row * g.cols + col;
}

} // namespace echotrain::session
