#include <gtest/gtest.h>

#include <cstring>
#include <random>

#include "echotrain/stl.hpp"
#include "echotrain/voxel.hpp"
#include "support.hpp"

using namespace echotrain;
using namespace echotrain::geometry;

namespace {

Bytes as_bytes(std::string_view s) { return Bytes(s.begin(), s.end()); }

GridSpec grid(std::size_t n, double h = 0.01, Vec3 origin = {})
{
    return {{n, n, n}, h, origin};
}

} // namespace

TEST(Stl, AsciiSingleTriangle)
{
    auto mesh = parse_stl(as_bytes("solid one\n"
                                   " facet normal 0 0 1\n"
                                   "  outer loop\n"
                                   "   vertex 0 0 0\n"
                                   "   vertex 1 0 0\n"
                                   "   vertex 0 1 0\n"
                                   "  endloop\n"
                                   " endfacet\n"
                                   "endsolid one\n"));
    EXPECT_EQ(mesh.vertices.size(), 3u);
    EXPECT_EQ(mesh.triangles.size(), 1u);
    EXPECT_EQ(mesh.vertices[1], (Vec3{1, 0, 0}));
}

TEST(Stl, BinaryCube)
{
    auto cube = testsupport::box_mesh({0, 0, 0}, {1, 1, 1});
    auto bytes = serialize_stl_binary(cube);
    EXPECT_EQ(bytes.size(), 84u + 50u * 12u);
    auto mesh = parse_stl(bytes);
    EXPECT_EQ(mesh.triangles.size(), 12u);
}

TEST(Stl, BinaryWhoseHeaderStartsWithSolid)
{
    auto cube = testsupport::box_mesh({0, 0, 0}, {1, 1, 1});
    auto bytes = serialize_stl_binary(cube);
    std::memcpy(bytes.data(), "solid cube", 10);
    EXPECT_EQ(parse_stl(bytes).triangles.size(), 12u);
}

TEST(Stl, HeaderOnlyIsTruncation)
{
    Bytes b(80, 0);
    try {
        parse_stl(b);
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find("80"), std::string::npos) << e.what();
    }
}

TEST(Stl, TruncatedFacetsAndZeroFacets)
{
    auto bytes = serialize_stl_binary(testsupport::box_mesh({0, 0, 0}, {1, 1, 1}));
    bytes.resize(bytes.size() - 10);
    EXPECT_THROW(parse_stl(bytes), ParseError);
    Bytes empty(84, 0);
    EXPECT_THROW(parse_stl(empty), ParseError);
    EXPECT_THROW(parse_stl(as_bytes("solid x\nendsolid x\n")), ParseError);
    EXPECT_THROW(parse_stl(as_bytes("solid x\nfacet normal 0 0 1\nouter loop\nvertex 0 0\n")), ParseError);
}

TEST(Stl, BinaryRoundTripIsBitExactForFloats)
{
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<float> u(-10.0f, 10.0f);
    TriangleMesh m;
    for (int t = 0; t < 40; ++t) {
        for (int k = 0; k < 3; ++k) {
            m.vertices.push_back({u(rng), u(rng), u(rng)});
        }
        auto b = static_cast<std::uint32_t>(3 * t);
        m.triangles.push_back({b, b + 1, b + 2});
    }
    auto back = parse_stl(serialize_stl_binary(m));
    ASSERT_EQ(back.triangles.size(), m.triangles.size());
    for (std::size_t t = 0; t < m.triangles.size(); ++t) {
        for (int k = 0; k < 3; ++k) {
            EXPECT_EQ(back.corner(t, k), m.corner(t, k));
        }
    }
}

TEST(Stl, AsciiRoundTrip)
{
    auto cube = testsupport::box_mesh({0.125, 0, -1}, {1, 2.5, 1});
    auto back = parse_stl(as_bytes(serialize_stl_ascii(cube)));
    ASSERT_EQ(back.triangles.size(), 12u);
    for (std::size_t t = 0; t < 12; ++t) {
        for (int k = 0; k < 3; ++k) {
            EXPECT_EQ(back.corner(t, k), cube.corner(t, k));
        }
    }
}

TEST(Voxelize, EmptyMeshIsEmpty)
{
    auto g = voxelize(TriangleMesh{}, grid(8));
    EXPECT_EQ(g.occupied_count(), 0u);
    EXPECT_EQ(g.occupancy.size(), 512u);
}

TEST(Voxelize, LatticeCubeVolume)
{
    const double h = 0.01;
    auto cube = testsupport::box_mesh({0.05, 0.05, 0.05}, {0.15, 0.15, 0.15});
    VoxelizeReport rep;
    auto g = voxelize(cube, grid(20, h), &rep);
    EXPECT_TRUE(rep.watertight);
    EXPECT_NEAR(static_cast<double>(g.occupied_count()), 1000.0, 20.0);
}

TEST(Voxelize, OffLatticeCubeWithinOneVoxelDilation)
{
    const double h = 0.01;
    auto cube = testsupport::box_mesh({0.053, 0.047, 0.0512}, {0.153, 0.147, 0.1512});
    auto g = voxelize(cube, grid(20, h));
    auto n = g.occupied_count();
    EXPECT_GE(n, 1000u);
    EXPECT_LE(n, 11u * 11u * 11u);
}

TEST(Voxelize, ThinPlateIsOneVoxelThick)
{
    const double h = 0.01;
    auto plate = testsupport::box_mesh({0.02, 0.053, 0.02}, {0.08, 0.054, 0.08});
    auto g = voxelize(plate, grid(10, h));
    for (std::size_t i = 3; i < 7; ++i) {
        for (std::size_t k = 3; k < 7; ++k) {
            std::size_t layers = 0;
            for (std::size_t j = 0; j < 10; ++j) {
                layers += g.rigid(i, j, k);
            }
            EXPECT_EQ(layers, 1u);
            EXPECT_TRUE(g.rigid(i, 5, k));
        }
    }
}

TEST(Voxelize, OutOfBoundsNamesAxis)
{
    auto cube = testsupport::box_mesh({0.01, 0.01, 0.05}, {0.05, 0.05, 0.2});
    try {
        voxelize(cube, grid(10));
        FAIL();
    } catch (const GeometryError& e) {
        std::string msg = e.what();
        EXPECT_NE(msg.find("axis z"), std::string::npos) << msg;
    }
}

TEST(Voxelize, OpenMeshWarnsAndKeepsSurface)
{
    auto cube = testsupport::box_mesh({0.02, 0.02, 0.02}, {0.08, 0.08, 0.08});
    cube.triangles.pop_back();
    VoxelizeReport rep;
    auto g = voxelize(cube, grid(10), &rep);
    EXPECT_FALSE(rep.watertight);
    ASSERT_EQ(rep.warnings.size(), 1u);
    EXPECT_GT(g.occupied_count(), 0u);
    EXPECT_FALSE(g.rigid(5, 5, 5));
}

TEST(Voxelize, TranslationByLatticeMultiples)
{
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> pos(0.02, 0.08);
    std::uniform_real_distribution<double> len(0.005, 0.05);
    std::uniform_int_distribution<int> shift(-2, 4);
    const double h = 0.01;
    for (int trial = 0; trial < 25; ++trial) {
        Vec3 lo{pos(rng), pos(rng), pos(rng)};
        Vec3 hi = lo + Vec3{len(rng), len(rng), len(rng)};
        auto mesh = testsupport::box_mesh(lo, hi);
        int si = shift(rng), sj = shift(rng), sk = shift(rng);
        auto a = voxelize(mesh, grid(24, h));
        // Translating by an exact lattice multiple is the same as moving the
        // grid origin the other way.
        auto b = voxelize(mesh, grid(24, h, Vec3{-si * h, -sj * h, -sk * h}));
        for (std::size_t i = 0; i < 24; ++i) {
            for (std::size_t j = 0; j < 24; ++j) {
                for (std::size_t k = 0; k < 24; ++k) {
                    long ii = static_cast<long>(i) + si, jj = static_cast<long>(j) + sj, kk = static_cast<long>(k) + sk;
                    if (ii < 0 || jj < 0 || kk < 0 || ii >= 24 || jj >= 24 || kk >= 24) {
                        continue;
                    }
                    ASSERT_EQ(a.rigid(i, j, k), b.rigid(static_cast<std::size_t>(ii), static_cast<std::size_t>(jj),
                                                        static_cast<std::size_t>(kk)));
                }
            }
        }
        EXPECT_EQ(a.occupied_count(), b.occupied_count());
    }
}

TEST(Voxelize, SurfaceRasterizationIsConservative)
{
    std::mt19937_64 rng(23);
    std::uniform_real_distribution<double> p(0.005, 0.155);
    std::uniform_real_distribution<double> w(0.0, 1.0);
    const double h = 0.01;
    for (int trial = 0; trial < 40; ++trial) {
        TriangleMesh m;
        m.name = "tri";
        m.vertices = {{p(rng), p(rng), p(rng)}, {p(rng), p(rng), p(rng)}, {p(rng), p(rng), p(rng)}};
        m.triangles = {{0, 1, 2}};
        auto g = voxelize(m, grid(16, h));
        for (int s = 0; s < 200; ++s) {
            double a = w(rng), b = w(rng);
            if (a + b > 1.0) {
                a = 1.0 - a;
                b = 1.0 - b;
            }
            Vec3 q = m.vertices[0] + (m.vertices[1] - m.vertices[0]) * a + (m.vertices[2] - m.vertices[0]) * b;
            // Some closed voxel cube containing q must be occupied.
            bool found = false;
            for (int di = -1; di <= 0 && !found; ++di) {
                for (int dj = -1; dj <= 0 && !found; ++dj) {
                    for (int dk = -1; dk <= 0 && !found; ++dk) {
                        auto idx = [&](double x, int d) {
                            double f = x / h;
                            long i = static_cast<long>(std::floor(f));
                            // Only step back when q sits on the shared face.
                            if (d < 0 && f - static_cast<double>(i) > 1e-9) {
                                return -1L;
                            }
                            return i + d;
                        };
                        long i = idx(q.x, di), j = idx(q.y, dj), k = idx(q.z, dk);
                        if (i < 0 || j < 0 || k < 0 || i >= 16 || j >= 16 || k >= 16) {
                            continue;
                        }
                        found = g.rigid(static_cast<std::size_t>(i), static_cast<std::size_t>(j),
                                        static_cast<std::size_t>(k));
                    }
                }
            }
            ASSERT_TRUE(found) << "trial " << trial;
        }
    }
}

TEST(Voxelize, PanelExtentMatchesMask)
{
    const double h = 0.01;
    TargetSpec t;
    t.mask = ShapeMask::from_text("####\n####\n####\n");
    t.panel_thickness = 2 * h;
    t.placement.origin = {0.15, 0.1, 0.15};
    auto g = voxelize(target_panel(t), grid(30, h));
    std::size_t lo[3] = {99, 99, 99}, hi[3] = {0, 0, 0};
    for (std::size_t i = 0; i < 30; ++i) {
        for (std::size_t j = 0; j < 30; ++j) {
            for (std::size_t k = 0; k < 30; ++k) {
                if (g.rigid(i, j, k)) {
                    std::size_t v[3] = {i, j, k};
                    for (int a = 0; a < 3; ++a) {
                        lo[a] = std::min(lo[a], v[a]);
                        hi[a] = std::max(hi[a], v[a]);
                    }
                }
            }
        }
    }
    EXPECT_NEAR(static_cast<double>(hi[0] - lo[0] + 1), 20.0, 2.0);
    EXPECT_NEAR(static_cast<double>(hi[2] - lo[2] + 1), 15.0, 2.0);
    // Solid cuboid: every voxel within the bounding box is filled.
    EXPECT_EQ(g.occupied_count(), (hi[0] - lo[0] + 1) * (hi[1] - lo[1] + 1) * (hi[2] - lo[2] + 1));
}

TEST(VoxelGrid, MergeAndOverlap)
{
    VoxelGrid a(grid(4)), b(grid(4));
    a.set(1, 1, 1);
    b.set(1, 1, 1);
    b.set(2, 2, 2);
    EXPECT_EQ(a.overlap_count(b), 1u);
    a.merge(b);
    EXPECT_EQ(a.occupied_count(), 2u);
    EXPECT_EQ(a.index(1, 2, 3), (1u * 4 + 2) * 4 + 3);
}

TEST(Voxelize, DiagonalContactPanelIsFilled)
{
    const double h = 0.01;
    TargetSpec t;
    t.mask = ShapeMask::from_text("#.\n.#\n");
    t.panel_thickness = 2 * h;
    t.placement.origin = {0.15, 0.1, 0.15};
    VoxelizeReport rep;
    auto g = voxelize(target_panel(t), grid(30, h), &rep);
    EXPECT_TRUE(rep.watertight);
    EXPECT_EQ(g.occupied_count(), 2u * 5u * 5u * 2u);
}
