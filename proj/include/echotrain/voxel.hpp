#pragma once

// Rasterization of triangle meshes onto the solver lattice.
//
// Voxel (i, j, k) covers [origin + i*h, origin + (i+1)*h) along x (likewise y,
// z); its center is origin + (i + 0.5) * h.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "echotrain/errors.hpp"
#include "echotrain/geometry.hpp"

namespace echotrain::geometry {

struct Dims {
    std::size_t nx = 0;
    std::size_t ny = 0;
    std::size_t nz = 0;

    std::size_t count() const { return nx * ny * nz; }
    std::size_t operator[](int axis) const { return axis == 0 ? nx : (axis == 1 ? ny : nz); }
    bool operator==(const Dims&) const = default;
};

struct GridSpec {
    Dims dims;
    double spacing = 0.0;
    Vec3 origin{};

    void validate() const
    {
        if (dims.nx == 0 || dims.ny == 0 || dims.nz == 0) {
            throw ValidationError("grid dimensions must be positive");
        }
        if (!(spacing > 0.0)) {
            throw ValidationError("grid spacing must be positive");
        }
    }

    Vec3 extent() const
    {
        return {spacing * static_cast<double>(dims.nx), spacing * static_cast<double>(dims.ny),
                spacing * static_cast<double>(dims.nz)};
    }

    Vec3 center_of(std::size_t i, std::size_t j, std::size_t k) const
    {
        return origin + Vec3{(static_cast<double>(i) + 0.5) * spacing, (static_cast<double>(j) + 0.5) * spacing,
                             (static_cast<double>(k) + 0.5) * spacing};
    }

    /// Continuous lattice coordinates: voxel i spans [i, i+1).
    Vec3 to_lattice(const Vec3& p) const { return (p - origin) / spacing; }
};

struct VoxelGrid {
    GridSpec spec;
    std::vector<std::uint8_t> occupancy;

    VoxelGrid() = default;
    explicit VoxelGrid(const GridSpec& s) : spec(s), occupancy(s.dims.count(), 0) { s.validate(); }

    const Dims& dims() const { return spec.dims; }
    std::size_t index(std::size_t i, std::size_t j, std::size_t k) const
    {
        return (i * spec.dims.ny + j) * spec.dims.nz + k;
    }
    bool rigid(std::size_t i, std::size_t j, std::size_t k) const { return occupancy[index(i, j, k)] != 0; }
    void set(std::size_t i, std::size_t j, std::size_t k, bool v = true) { occupancy[index(i, j, k)] = v ? 1 : 0; }

    std::size_t occupied_count() const
    {
        return static_cast<std::size_t>(std::count(occupancy.begin(), occupancy.end(), std::uint8_t{1}));
    }

    /// Union in place; grids must share their spec.
    void merge(const VoxelGrid& other)
    {
        if (!(other.spec.dims == spec.dims)) {
            throw ValidationError("cannot merge voxel grids of different dimensions");
        }
        for (std::size_t n = 0; n < occupancy.size(); ++n) {
            occupancy[n] |= other.occupancy[n];
        }
    }

    std::size_t overlap_count(const VoxelGrid& other) const
    {
        std::size_t n = 0;
        for (std::size_t c = 0; c < occupancy.size() && c < other.occupancy.size(); ++c) {
            n += (occupancy[c] & other.occupancy[c]);
        }
        return n;
    }
};

namespace detail {

struct LatticeTriangle {
    std::array<Vec3, 3> v;
};

/// Separating-axis test between a triangle and an axis-aligned cube of half
/// size 0.5 centered at c. With open_box the cube interior is open, so mere
/// contact does not count as overlap.
inline bool triangle_box_overlap(const LatticeTriangle& tri, const Vec3& c, bool open_box)
{
    const double half = 0.5;
    const std::array<Vec3, 3> p{tri.v[0] - c, tri.v[1] - c, tri.v[2] - c};
    const std::array<Vec3, 3> e{p[1] - p[0], p[2] - p[1], p[0] - p[2]};

    auto separated = [&](const Vec3& axis) {
        double len2 = dot(axis, axis);
        if (len2 < 1e-24) {
            return false;
        }
        double d0 = dot(p[0], axis), d1 = dot(p[1], axis), d2 = dot(p[2], axis);
        double lo = std::min({d0, d1, d2});
        double hi = std::max({d0, d1, d2});
        double r = half * (std::abs(axis.x) + std::abs(axis.y) + std::abs(axis.z));
        return open_box ? (lo >= r || hi <= -r) : (lo > r || hi < -r);
    };

    const std::array<Vec3, 3> box_axes{Vec3{1, 0, 0}, Vec3{0, 1, 0}, Vec3{0, 0, 1}};
    for (const auto& a : box_axes) {
        if (separated(a)) {
            return false;
        }
    }
    if (separated(cross(e[0], e[1]))) {
        return false;
    }
    for (const auto& a : box_axes) {
        for (const auto& ed : e) {
            if (separated(cross(a, ed))) {
                return false;
            }
        }
    }
    return true;
}

/// Edge function of point (py, pz) against the directed edge a->b in the yz
/// plane, evaluated in a canonical endpoint order so that two triangles sharing
/// the edge see exactly negated values.
inline double edge_function(double ay, double az, double by, double bz, double py, double pz)
{
    bool swap = (by < ay) || (by == ay && bz < az);
    if (swap) {
        return -((ay - by) * (pz - bz) - (az - bz) * (py - by));
    }
    return (by - ay) * (pz - az) - (bz - az) * (py - ay);
}

/// Tie rule for points exactly on an edge of a counter-clockwise triangle:
/// claim the edge iff it is a "top" or "left" edge in (y, z).
inline bool owns_edge(double ay, double az, double by, double bz)
{
    double dy = by - ay;
    double dz = bz - az;
    return (dz == 0.0 && dy < 0.0) || dz > 0.0;
}

} // namespace detail

struct VoxelizeReport {
    bool watertight = false;
    std::vector<std::string> warnings;
};

/// Conservative surface rasterization followed by a parity fill along x for
/// closed meshes. A triangle lying exactly on a voxel boundary is attributed to
/// the voxel behind it (opposite its normal). Non-watertight meshes are
/// rasterized as surfaces only and reported.
inline VoxelGrid voxelize(const TriangleMesh& mesh, const GridSpec& spec, VoxelizeReport* report = nullptr)
{
    spec.validate();
    mesh.validate();
    VoxelGrid grid(spec);
    if (report) {
        *report = {};
    }
    if (mesh.empty()) {
        if (report) {
            report->watertight = false;
        }
        return grid;
    }

    const auto& d = spec.dims;
    auto [lo, hi] = mesh.bounds();
    Vec3 llo = spec.to_lattice(lo);
    Vec3 lhi = spec.to_lattice(hi);
    static constexpr const char* axis_name[3] = {"x", "y", "z"};
    std::string bad;
    for (int a = 0; a < 3; ++a) {
        if (llo[a] < 0.0 || lhi[a] > static_cast<double>(d[a])) {
            bad += bad.empty() ? axis_name[a] : std::string(", ") + axis_name[a];
        }
    }
    if (!bad.empty()) {
        throw GeometryError("mesh '" + mesh.name + "' exceeds the grid bounds along axis " + bad);
    }

    auto clamp_index = [](double v, std::size_t n) {
        if (v < 0.0) {
            return std::size_t{0};
        }
        auto i = static_cast<std::size_t>(v);
        return std::min(i, n - 1);
    };

    constexpr double nudge = 1e-7; // lattice units

    std::vector<detail::LatticeTriangle> tris;
    tris.reserve(mesh.triangles.size());
    // Coordinates within rounding error of a lattice plane are put on it, so
    // faces meant to lie on voxel boundaries are classified consistently.
    auto lattice = [&](const Vec3& p) {
        Vec3 q = spec.to_lattice(p);
        auto snap = [](double x) {
            double r = std::round(x);
            return std::abs(x - r) < 1e-9 * std::max(1.0, std::abs(x)) ? r : x;
        };
        return Vec3{snap(q.x), snap(q.y), snap(q.z)};
    };
    for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
        tris.push_back({{lattice(mesh.corner(t, 0)), lattice(mesh.corner(t, 1)), lattice(mesh.corner(t, 2))}});
    }

    for (const auto& tri : tris) {
        Vec3 n = normalized(cross(tri.v[1] - tri.v[0], tri.v[2] - tri.v[0]));
        detail::LatticeTriangle shifted = tri;
        for (auto& v : shifted.v) {
            v = v - n * nudge;
        }
        std::array<std::size_t, 3> i0{}, i1{};
        for (int a = 0; a < 3; ++a) {
            double mn = std::min({tri.v[0][a], tri.v[1][a], tri.v[2][a]});
            double mx = std::max({tri.v[0][a], tri.v[1][a], tri.v[2][a]});
            i0[static_cast<std::size_t>(a)] = clamp_index(std::floor(mn) - 1.0, d[a]);
            i1[static_cast<std::size_t>(a)] = clamp_index(std::floor(mx) + 1.0, d[a]);
        }
        bool any = false;
        auto sweep = [&](const detail::LatticeTriangle& t, bool open_box) {
            for (std::size_t i = i0[0]; i <= i1[0]; ++i) {
                for (std::size_t j = i0[1]; j <= i1[1]; ++j) {
                    for (std::size_t k = i0[2]; k <= i1[2]; ++k) {
                        Vec3 c{static_cast<double>(i) + 0.5, static_cast<double>(j) + 0.5,
                               static_cast<double>(k) + 0.5};
                        if (detail::triangle_box_overlap(t, c, open_box)) {
                            grid.set(i, j, k);
                            any = true;
                        }
                    }
                }
            }
        };
        sweep(shifted, true);
        if (!any) {
            // Degenerate or sliver triangle: fall back to plain closed contact.
            sweep(tri, false);
        }
    }

    bool closed = is_watertight(mesh);
    if (report) {
        report->watertight = closed;
    }
    if (!closed) {
        if (report) {
            report->warnings.push_back("mesh '" + mesh.name +
                                       "' is not watertight; voxelized as a surface without interior fill");
        }
        return grid;
    }

    // Parity fill: rays along +x through voxel centers (j + 0.5, k + 0.5).
    std::vector<std::vector<double>> hits(d.ny * d.nz);
    for (const auto& tri : tris) {
        std::array<Vec3, 3> v = tri.v;
        Vec3 n = cross(v[1] - v[0], v[2] - v[0]);
        if (n.x == 0.0) {
            continue;
        }
        // Counter-clockwise in (y, z).
        if (n.x < 0.0) {
            std::swap(v[1], v[2]);
        }
        double ymin = std::min({v[0].y, v[1].y, v[2].y}), ymax = std::max({v[0].y, v[1].y, v[2].y});
        double zmin = std::min({v[0].z, v[1].z, v[2].z}), zmax = std::max({v[0].z, v[1].z, v[2].z});
        long j0 = std::max(0L, static_cast<long>(std::ceil(ymin - 0.5)));
        long j1 = std::min(static_cast<long>(d.ny) - 1, static_cast<long>(std::floor(ymax - 0.5)));
        long k0 = std::max(0L, static_cast<long>(std::ceil(zmin - 0.5)));
        long k1 = std::min(static_cast<long>(d.nz) - 1, static_cast<long>(std::floor(zmax - 0.5)));
        for (long j = j0; j <= j1; ++j) {
            for (long k = k0; k <= k1; ++k) {
                double py = static_cast<double>(j) + 0.5;
                double pz = static_cast<double>(k) + 0.5;
                bool inside = true;
                for (int e = 0; e < 3 && inside; ++e) {
                    const Vec3& a = v[static_cast<std::size_t>(e)];
                    const Vec3& b = v[static_cast<std::size_t>((e + 1) % 3)];
                    double w = detail::edge_function(a.y, a.z, b.y, b.z, py, pz);
                    inside = w > 0.0 || (w == 0.0 && detail::owns_edge(a.y, a.z, b.y, b.z));
                }
                if (!inside) {
                    continue;
                }
                // Plane: n . (p - v0) = 0 solved for x.
                double x = v[0].x - (n.y * (py - v[0].y) + n.z * (pz - v[0].z)) / n.x;
                hits[static_cast<std::size_t>(j) * d.nz + static_cast<std::size_t>(k)].push_back(x);
            }
        }
    }
    for (std::size_t j = 0; j < d.ny; ++j) {
        for (std::size_t k = 0; k < d.nz; ++k) {
            auto& h = hits[j * d.nz + k];
            if (h.size() < 2) {
                continue;
            }
            std::sort(h.begin(), h.end());
            for (std::size_t s = 0; s + 1 < h.size(); s += 2) {
                // Voxel centers i + 0.5 in [h[s], h[s+1]).
                double first = std::ceil(h[s] - 0.5);
                double last = std::ceil(h[s + 1] - 0.5) - 1.0;
                for (double fi = std::max(first, 0.0); fi <= last && fi < static_cast<double>(d.nx); fi += 1.0) {
                    grid.set(static_cast<std::size_t>(fi), j, k);
                }
            }
        }
    }
    return grid;
}

} // namespace echotrain::geometry
