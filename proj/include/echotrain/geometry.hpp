#pragma once

// Meshes, cell masks, target panels and the parametric head.

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

#include "echotrain/errors.hpp"

namespace echotrain::geometry {

struct Vec3 {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    constexpr Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    constexpr Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    constexpr Vec3 operator-() const { return {-x, -y, -z}; }
    constexpr Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    constexpr Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
    Vec3& operator+=(const Vec3& o)
    {
        x += o.x;
        y += o.y;
        z += o.z;
        return *this;
    }
    constexpr bool operator==(const Vec3&) const = default;

    constexpr double operator[](int axis) const { return axis == 0 ? x : (axis == 1 ? y : z); }
};

constexpr Vec3 operator*(double s, const Vec3& v) { return v * s; }
constexpr double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
constexpr Vec3 cross(const Vec3& a, const Vec3& b)
{
    return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
inline double norm(const Vec3& v) { return std::sqrt(dot(v, v)); }
inline Vec3 normalized(const Vec3& v)
{
    double n = norm(v);
    return n > 0.0 ? v / n : Vec3{};
}

inline bool is_finite(const Vec3& v) { return std::isfinite(v.x) && std::isfinite(v.y) && std::isfinite(v.z); }

struct TriangleMesh {
    std::vector<Vec3> vertices;
    std::vector<std::array<std::uint32_t, 3>> triangles;
    std::string name;

    bool empty() const { return triangles.empty(); }

    void validate() const
    {
        for (const auto& v : vertices) {
            if (!is_finite(v)) {
                throw GeometryError("mesh '" + name + "' has a non-finite vertex coordinate");
            }
        }
        for (const auto& t : triangles) {
            for (auto i : t) {
                if (i >= vertices.size()) {
                    throw GeometryError("mesh '" + name + "' has a triangle index out of range");
                }
            }
        }
    }

    Vec3 corner(std::size_t tri, int k) const { return vertices[triangles[tri][static_cast<std::size_t>(k)]]; }

    /// Unnormalized face normal (right-hand rule over the stored winding).
    Vec3 face_normal(std::size_t tri) const
    {
        return cross(corner(tri, 1) - corner(tri, 0), corner(tri, 2) - corner(tri, 0));
    }

    double surface_area() const
    {
        double a = 0.0;
        for (std::size_t t = 0; t < triangles.size(); ++t) {
            a += 0.5 * norm(face_normal(t));
        }
        return a;
    }

    std::pair<Vec3, Vec3> bounds() const
    {
        Vec3 lo{INFINITY, INFINITY, INFINITY};
        Vec3 hi{-INFINITY, -INFINITY, -INFINITY};
        for (const auto& t : triangles) {
            for (auto i : t) {
                const auto& v = vertices[i];
                lo = {std::min(lo.x, v.x), std::min(lo.y, v.y), std::min(lo.z, v.z)};
                hi = {std::max(hi.x, v.x), std::max(hi.y, v.y), std::max(hi.z, v.z)};
            }
        }
        return {lo, hi};
    }

    TriangleMesh translated(const Vec3& d) const
    {
        TriangleMesh out = *this;
        for (auto& v : out.vertices) {
            v += d;
        }
        return out;
    }

    void append(const TriangleMesh& other)
    {
        auto base = static_cast<std::uint32_t>(vertices.size());
        vertices.insert(vertices.end(), other.vertices.begin(), other.vertices.end());
        for (auto t : other.triangles) {
            triangles.push_back({t[0] + base, t[1] + base, t[2] + base});
        }
    }
};

/// Closed, consistently oriented surface check on exactly-welded vertices:
/// every directed edge is matched by as many reverse edges. Edges shared by
/// four faces (cells touching only at a corner) are allowed.
inline bool is_watertight(const TriangleMesh& mesh)
{
    if (mesh.triangles.empty()) {
        return false;
    }
    std::map<std::tuple<double, double, double>, std::uint32_t> weld;
    std::vector<std::uint32_t> id(mesh.vertices.size());
    for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
        const auto& v = mesh.vertices[i];
        auto [it, _] = weld.try_emplace({v.x, v.y, v.z}, static_cast<std::uint32_t>(weld.size()));
        id[i] = it->second;
    }
    std::map<std::pair<std::uint32_t, std::uint32_t>, int> edges;
    for (const auto& t : mesh.triangles) {
        std::uint32_t a = id[t[0]], b = id[t[1]], c = id[t[2]];
        if (a == b || b == c || a == c) {
            continue;
        }
        for (auto [u, w] : {std::pair{a, b}, std::pair{b, c}, std::pair{c, a}}) {
            ++edges[{u, w}];
        }
    }
    for (const auto& [e, n] : edges) {
        auto it = edges.find({e.second, e.first});
        if (it == edges.end() || it->second != n) {
            return false;
        }
    }
    return true;
}

/// Binary cell-grid silhouette, row-major, row 0 at the top.
class ShapeMask {
public:
    ShapeMask() = default;
    ShapeMask(std::size_t cols, std::size_t rows) : cols_(cols), rows_(rows), cells_(cols * rows, 0) {}
    ShapeMask(std::size_t cols, std::size_t rows, std::vector<std::uint8_t> cells)
        : cols_(cols), rows_(rows), cells_(std::move(cells))
    {
        if (cells_.size() != cols_ * rows_) {
            throw ValidationError("mask cell count does not match cols*rows");
        }
        for (auto& c : cells_) {
            c = c ? 1 : 0;
        }
    }

    std::size_t cols() const { return cols_; }
    std::size_t rows() const { return rows_; }
    std::size_t size() const { return cells_.size(); }

    bool at(std::size_t col, std::size_t row) const { return cells_[row * cols_ + col] != 0; }
    bool operator[](std::size_t index) const { return cells_[index] != 0; }
    void set(std::size_t col, std::size_t row, bool v = true) { cells_[row * cols_ + col] = v ? 1 : 0; }

    /// Out-of-range coordinates read as empty.
    bool occupied(long col, long row) const
    {
        if (col < 0 || row < 0 || col >= static_cast<long>(cols_) || row >= static_cast<long>(rows_)) {
            return false;
        }
        return at(static_cast<std::size_t>(col), static_cast<std::size_t>(row));
    }

    std::size_t count() const
    {
        std::size_t n = 0;
        for (auto c : cells_) {
            n += c;
        }
        return n;
    }

    bool same_dims(const ShapeMask& o) const { return cols_ == o.cols_ && rows_ == o.rows_; }
    bool operator==(const ShapeMask&) const = default;

    /// Occupied cell indices in increasing order.
    std::vector<std::size_t> occupied_indices() const
    {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < cells_.size(); ++i) {
            if (cells_[i]) {
                out.push_back(i);
            }
        }
        return out;
    }

    /// Occupied cells 4-adjacent to an empty or out-of-bounds cell.
    bool is_edge(std::size_t col, std::size_t row) const
    {
        if (!at(col, row)) {
            return false;
        }
        auto c = static_cast<long>(col);
        auto r = static_cast<long>(row);
        return !occupied(c - 1, r) || !occupied(c + 1, r) || !occupied(c, r - 1) || !occupied(c, r + 1);
    }

    /// Rotates 90 degrees clockwise.
    ShapeMask rotated90() const
    {
        ShapeMask out(rows_, cols_);
        for (std::size_t r = 0; r < rows_; ++r) {
            for (std::size_t c = 0; c < cols_; ++c) {
                out.set(rows_ - 1 - r, c, at(c, r));
            }
        }
        return out;
    }

    /// Each cell becomes a factor x factor block.
    ShapeMask upsampled(std::size_t factor) const
    {
        ShapeMask out(cols_ * factor, rows_ * factor);
        for (std::size_t r = 0; r < out.rows_; ++r) {
            for (std::size_t c = 0; c < out.cols_; ++c) {
                out.set(c, r, at(c / factor, r / factor));
            }
        }
        return out;
    }

    /// Copy placed at (dc, dr) inside a larger canvas.
    ShapeMask padded(std::size_t cols, std::size_t rows, std::size_t dc, std::size_t dr) const
    {
        ShapeMask out(cols, rows);
        for (std::size_t r = 0; r < rows_; ++r) {
            for (std::size_t c = 0; c < cols_; ++c) {
                if (at(c, r)) {
                    out.set(c + dc, r + dr);
                }
            }
        }
        return out;
    }

    /// '#' occupied, '.' empty, one line per row.
    std::string to_text() const
    {
        std::string s;
        s.reserve(rows_ * (cols_ + 1));
        for (std::size_t r = 0; r < rows_; ++r) {
            for (std::size_t c = 0; c < cols_; ++c) {
                s.push_back(at(c, r) ? '#' : '.');
            }
            s.push_back('\n');
        }
        return s;
    }

    static ShapeMask from_text(std::string_view text)
    {
        std::vector<std::string> lines;
        std::string cur;
        for (char ch : text) {
            if (ch == '\r') {
                continue;
            }
            if (ch == '\n') {
                lines.push_back(std::move(cur));
                cur.clear();
            } else {
                cur.push_back(ch);
            }
        }
        if (!cur.empty()) {
            lines.push_back(std::move(cur));
        }
        while (!lines.empty() && lines.back().empty()) {
            lines.pop_back();
        }
        if (lines.empty()) {
            throw ValidationError("mask text has no rows");
        }
        std::size_t cols = lines.front().size();
        if (cols == 0) {
            throw ValidationError("mask row 0 is empty");
        }
        ShapeMask m(cols, lines.size());
        for (std::size_t r = 0; r < lines.size(); ++r) {
            if (lines[r].size() != cols) {
                throw ValidationError("mask row " + std::to_string(r) + " has length " +
                                      std::to_string(lines[r].size()) + ", expected " + std::to_string(cols));
            }
            for (std::size_t c = 0; c < cols; ++c) {
                char ch = lines[r][c];
                if (ch == '#') {
                    m.set(c, r);
                } else if (ch != '.') {
                    throw ValidationError("mask row " + std::to_string(r) + " has invalid character '" +
                                          std::string(1, ch) + "'");
                }
            }
        }
        return m;
    }

private:
    std::size_t cols_ = 0;
    std::size_t rows_ = 0;
    std::vector<std::uint8_t> cells_;
};

/// Rigid placement of a planar panel: origin is the center of the front face,
/// u runs along mask columns, v runs up the mask (towards row 0). The front face
/// normal is u x v; thickness extends along its opposite.
struct Pose {
    Vec3 origin{};
    Vec3 u{1.0, 0.0, 0.0};
    Vec3 v{0.0, 0.0, 1.0};

    Vec3 normal() const { return cross(u, v); }
};

enum class TargetRole { trained, untrained };

inline std::string_view to_string(TargetRole r) { return r == TargetRole::trained ? "trained" : "untrained"; }

inline constexpr double default_cell_size = 0.05;

struct TargetSpec {
    std::string id;
    ShapeMask mask;
    double cell_size = default_cell_size;
    /// 0 selects two grid spacings when the panel is placed in a scene.
    double panel_thickness = 0.0;
    Pose placement{};
    TargetRole role = TargetRole::trained;

    void validate() const
    {
        if (mask.count() == 0) {
            throw ValidationError("target '" + id + "' has an empty mask");
        }
        if (!(cell_size > 0.0)) {
            throw ValidationError("target '" + id + "' cell_size must be positive");
        }
        if (panel_thickness < 0.0) {
            throw ValidationError("target '" + id + "' panel_thickness must be non-negative");
        }
        if (std::abs(norm(placement.u) - 1.0) > 1e-9 || std::abs(norm(placement.v) - 1.0) > 1e-9 ||
            std::abs(dot(placement.u, placement.v)) > 1e-9) {
            throw ValidationError("target '" + id + "' placement axes must be orthonormal");
        }
    }

    /// In-panel (u, v) of a cell center relative to the panel origin.
    std::pair<double, double> cell_offset(std::size_t col, std::size_t row) const
    {
        double u = (static_cast<double>(col) - 0.5 * static_cast<double>(mask.cols() - 1)) * cell_size;
        double v = (0.5 * static_cast<double>(mask.rows() - 1) - static_cast<double>(row)) * cell_size;
        return {u, v};
    }

    Vec3 to_world(double u, double v, double depth) const
    {
        return placement.origin + placement.u * u + placement.v * v - placement.normal() * depth;
    }
};

struct CellCenter {
    std::size_t index;
    Vec3 position;
};

/// World-space centers of the occupied cells on the panel front face, ordered
/// by row-major index.
inline std::vector<CellCenter> cell_centers(const TargetSpec& spec)
{
    spec.validate();
    std::vector<CellCenter> out;
    for (std::size_t idx : spec.mask.occupied_indices()) {
        auto [u, v] = spec.cell_offset(idx % spec.mask.cols(), idx / spec.mask.cols());
        out.push_back({idx, spec.to_world(u, v, 0.0)});
    }
    return out;
}

/// Extrudes every occupied cell into a cell_size x cell_size x thickness box.
/// Faces between two occupied cells are omitted and vertices are shared on the
/// cell lattice, so the result is closed.
inline TriangleMesh target_panel(const TargetSpec& spec)
{
    spec.validate();
    if (!(spec.panel_thickness > 0.0)) {
        throw ValidationError("target '" + spec.id + "' needs a positive panel thickness");
    }
    const auto cols = spec.mask.cols();
    const auto rows = spec.mask.rows();
    TriangleMesh mesh;
    mesh.name = spec.id;

    // Lattice corner (gc, gr) sits at the top-left of cell (gc, gr); layer 0 is the front face.
    std::map<std::tuple<std::size_t, std::size_t, int>, std::uint32_t> ids;
    auto vertex = [&](std::size_t gc, std::size_t gr, int layer) {
        auto key = std::make_tuple(gc, gr, layer);
        auto it = ids.find(key);
        if (it != ids.end()) {
            return it->second;
        }
        double u = (static_cast<double>(gc) - 0.5 * static_cast<double>(cols)) * spec.cell_size;
        double v = (0.5 * static_cast<double>(rows) - static_cast<double>(gr)) * spec.cell_size;
        auto id = static_cast<std::uint32_t>(mesh.vertices.size());
        mesh.vertices.push_back(spec.to_world(u, v, layer == 0 ? 0.0 : spec.panel_thickness));
        ids.emplace(key, id);
        return id;
    };
    // Quad wound counter-clockwise when viewed from outside.
    auto quad = [&](std::uint32_t a, std::uint32_t b, std::uint32_t c, std::uint32_t d) {
        mesh.triangles.push_back({a, b, c});
        mesh.triangles.push_back({a, c, d});
    };

    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            if (!spec.mask.at(c, r)) {
                continue;
            }
            auto lc = static_cast<long>(c);
            auto lr = static_cast<long>(r);
            // In panel coordinates u grows with c, v shrinks with r, and the
            // front normal n = u x v points out of layer 0.
            quad(vertex(c, r + 1, 0), vertex(c + 1, r + 1, 0), vertex(c + 1, r, 0), vertex(c, r, 0));
            quad(vertex(c, r + 1, 1), vertex(c, r, 1), vertex(c + 1, r, 1), vertex(c + 1, r + 1, 1));
            if (!spec.mask.occupied(lc - 1, lr)) {
                quad(vertex(c, r, 0), vertex(c, r, 1), vertex(c, r + 1, 1), vertex(c, r + 1, 0));
            }
            if (!spec.mask.occupied(lc + 1, lr)) {
                quad(vertex(c + 1, r + 1, 0), vertex(c + 1, r + 1, 1), vertex(c + 1, r, 1), vertex(c + 1, r, 0));
            }
            if (!spec.mask.occupied(lc, lr - 1)) {
                quad(vertex(c + 1, r, 0), vertex(c + 1, r, 1), vertex(c, r, 1), vertex(c, r, 0));
            }
            if (!spec.mask.occupied(lc, lr + 1)) {
                quad(vertex(c, r + 1, 0), vertex(c, r + 1, 1), vertex(c + 1, r + 1, 1), vertex(c + 1, r + 1, 0));
            }
        }
    }
    return mesh;
}

struct HeadParams {
    double radius = 0.0875;
    int subdivision = 3;
    Vec3 center{};
    std::string id = "sphere";
};

/// Rigid head with its acoustic markers. Marker directions are outward unit
/// vectors used to lift probes off the surface; a zero direction means the
/// marker is used as given.
struct HeadModel {
    std::string id;
    TriangleMesh mesh;
    Vec3 mouth{};
    Vec3 ear_left{};
    Vec3 ear_right{};
    Vec3 mouth_dir{};
    Vec3 ear_left_dir{};
    Vec3 ear_right_dir{};

    HeadModel translated(const Vec3& d) const
    {
        HeadModel h = *this;
        h.mesh = mesh.translated(d);
        h.mouth += d;
        h.ear_left += d;
        h.ear_right += d;
        return h;
    }
};

inline constexpr std::size_t icosphere_triangle_count(int level)
{
    return std::size_t{20} << (2 * level);
}

inline constexpr std::size_t icosphere_vertex_count(int level)
{
    return (std::size_t{10} << (2 * level)) + 2;
}

/// Unit icosphere; mirror symmetric about each coordinate plane and wound
/// outward.
inline TriangleMesh unit_icosphere(int level)
{
    const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
    TriangleMesh m;
    m.vertices = {{-1, phi, 0}, {1, phi, 0},  {-1, -phi, 0}, {1, -phi, 0}, {0, -1, phi}, {0, 1, phi},
                  {0, -1, -phi}, {0, 1, -phi}, {phi, 0, -1},  {phi, 0, 1},  {-phi, 0, -1}, {-phi, 0, 1}};
    for (auto& v : m.vertices) {
        v = normalized(v);
    }
    m.triangles = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
                   {11, 10, 2}, {10, 7, 6}, {7, 1, 8},   {3, 9, 4},  {3, 4, 2},   {3, 2, 6}, {3, 6, 8},
                   {3, 8, 9},  {4, 9, 5},  {2, 4, 11},  {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};
    for (int l = 0; l < level; ++l) {
        std::map<std::pair<std::uint32_t, std::uint32_t>, std::uint32_t> mid;
        auto midpoint = [&](std::uint32_t a, std::uint32_t b) {
            auto key = std::minmax(a, b);
            auto it = mid.find(key);
            if (it != mid.end()) {
                return it->second;
            }
            auto id = static_cast<std::uint32_t>(m.vertices.size());
            m.vertices.push_back(normalized((m.vertices[a] + m.vertices[b]) * 0.5));
            mid.emplace(key, id);
            return id;
        };
        std::vector<std::array<std::uint32_t, 3>> next;
        next.reserve(m.triangles.size() * 4);
        for (const auto& t : m.triangles) {
            auto a = midpoint(t[0], t[1]);
            auto b = midpoint(t[1], t[2]);
            auto c = midpoint(t[2], t[0]);
            next.push_back({t[0], a, c});
            next.push_back({t[1], b, a});
            next.push_back({t[2], c, b});
            next.push_back({a, b, c});
        }
        m.triangles = std::move(next);
    }
    for (std::size_t t = 0; t < m.triangles.size(); ++t) {
        Vec3 centroid = (m.corner(t, 0) + m.corner(t, 1) + m.corner(t, 2)) / 3.0;
        if (dot(m.face_normal(t), centroid) < 0.0) {
            std::swap(m.triangles[t][1], m.triangles[t][2]);
        }
    }
    return m;
}

/// Sphere head facing +y with z up: mouth on the front pole, ears at
/// +/-90 degrees azimuth on the equator (left ear at -x).
inline HeadModel build_head_model(const HeadParams& params)
{
    if (!(params.radius > 0.0) || !std::isfinite(params.radius)) {
        throw GeometryError("head radius must be positive");
    }
    if (params.subdivision < 0 || params.subdivision > 7) {
        throw GeometryError("head subdivision level must be in [0, 7]");
    }
    HeadModel h;
    h.id = params.id;
    h.mesh = unit_icosphere(params.subdivision);
    h.mesh.name = params.id;
    for (auto& v : h.mesh.vertices) {
        v = params.center + v * params.radius;
    }
    h.mouth_dir = {0.0, 1.0, 0.0};
    h.ear_left_dir = {-1.0, 0.0, 0.0};
    h.ear_right_dir = {1.0, 0.0, 0.0};
    h.mouth = params.center + h.mouth_dir * params.radius;
    h.ear_left = params.center + h.ear_left_dir * params.radius;
    h.ear_right = params.center + h.ear_right_dir * params.radius;
    return h;
}

} // namespace echotrain::geometry
