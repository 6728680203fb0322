#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "echotrain/geometry.hpp"

namespace testsupport {

using echotrain::geometry::ShapeMask;

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag = "echotrain")
    {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() / (tag + "-" + std::to_string(rd()) + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir()
    {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

private:
    std::filesystem::path path_;
};

/// Random non-empty mask; density in (0, 1].
inline ShapeMask random_mask(std::mt19937_64& rng, std::size_t cols, std::size_t rows, double density = 0.5)
{
    std::bernoulli_distribution on(density);
    ShapeMask m(cols, rows);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            m.set(c, r, on(rng));
        }
    }
    if (m.count() == 0) {
        m.set(cols / 2, rows / 2);
    }
    return m;
}

/// Random 4-connected blob grown from the centre.
inline ShapeMask random_blob(std::mt19937_64& rng, std::size_t cols, std::size_t rows, std::size_t cells)
{
    ShapeMask m(cols, rows);
    m.set(cols / 2, rows / 2);
    std::uniform_int_distribution<std::size_t> pick(0, cols * rows - 1);
    std::size_t guard = 0;
    while (m.count() < cells && guard++ < 100000) {
        auto idx = pick(rng);
        std::size_t c = idx % cols, r = idx / cols;
        if (m.at(c, r)) {
            continue;
        }
        auto ci = static_cast<long>(c), ri = static_cast<long>(r);
        if (m.occupied(ci - 1, ri) || m.occupied(ci + 1, ri) || m.occupied(ci, ri - 1) || m.occupied(ci, ri + 1)) {
            m.set(c, r);
        }
    }
    return m;
}

template <typename A, typename B>
double rms_diff(const A& a, const B& b)
{
    double s = 0.0;
    std::size_t n = std::min(a.size(), b.size());
    for (std::size_t i = 0; i < n; ++i) {
        double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        s += d * d;
    }
    return n ? std::sqrt(s / static_cast<double>(n)) : 0.0;
}

template <typename A>
double rms(const A& a)
{
    double s = 0.0;
    for (auto v : a) {
        s += static_cast<double>(v) * static_cast<double>(v);
    }
    return a.size() ? std::sqrt(s / static_cast<double>(a.size())) : 0.0;
}

template <typename A>
std::size_t argmax_abs(const A& a)
{
    std::size_t best = 0;
    for (std::size_t i = 1; i < a.size(); ++i) {
        if (std::abs(static_cast<double>(a[i])) > std::abs(static_cast<double>(a[best]))) {
            best = i;
        }
    }
    return best;
}

/// Axis-aligned closed box, outward winding.
inline echotrain::geometry::TriangleMesh box_mesh(const echotrain::geometry::Vec3& lo,
                                                  const echotrain::geometry::Vec3& hi, std::string name = "box")
{
    echotrain::geometry::TriangleMesh m;
    m.name = std::move(name);
    for (int i = 0; i < 8; ++i) {
        m.vertices.push_back({(i & 1) ? hi.x : lo.x, (i & 2) ? hi.y : lo.y, (i & 4) ? hi.z : lo.z});
    }
    m.triangles = {{0, 2, 3}, {0, 3, 1}, {4, 5, 7}, {4, 7, 6}, {0, 1, 5}, {0, 5, 4},
                   {2, 6, 7}, {2, 7, 3}, {0, 4, 6}, {0, 6, 2}, {1, 3, 7}, {1, 7, 5}};
    return m;
}

/// Direct O(N*M) linear convolution.
inline std::vector<double> direct_convolution(std::span<const double> a, std::span<const double> b)
{
    std::vector<double> out(a.size() + b.size() - 1, 0.0);
    for (std::size_t i = 0; i < a.size(); ++i) {
        for (std::size_t j = 0; j < b.size(); ++j) {
            out[i + j] += a[i] * b[j];
        }
    }
    return out;
}

} // namespace testsupport
