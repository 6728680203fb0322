#include <gtest/gtest.h>

#include <numbers>
#include <random>

#include "echotrain/analytics.hpp"
#include "support.hpp"

using namespace echotrain;
using namespace echotrain::analytics;
using geometry::ShapeMask;
using session::GazeSample;
using session::GridLayout;

namespace {

ShapeMask disc(std::size_t n, double radius)
{
    ShapeMask m(n, n);
    double c = static_cast<double>(n) / 2.0;
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t k = 0; k < n; ++k) {
            double x = static_cast<double>(k) + 0.5 - c, y = static_cast<double>(r) + 0.5 - c;
            m.set(k, r, x * x + y * y <= radius * radius);
        }
    }
    return m;
}

// Hu invariants by the textbook route: discrete moments of cell centres in
// floating point. Independent of the exact-area implementation.
HuVector naive_hu(const ShapeMask& m, bool area_correction)
{
    double m00 = 0, m10 = 0, m01 = 0;
    for (std::size_t r = 0; r < m.rows(); ++r) {
        for (std::size_t c = 0; c < m.cols(); ++c) {
            if (m.at(c, r)) {
                m00 += 1;
                m10 += static_cast<double>(c);
                m01 += static_cast<double>(r);
            }
        }
    }
    double cx = m10 / m00, cy = m01 / m00;
    double mu[4][4] = {};
    for (std::size_t r = 0; r < m.rows(); ++r) {
        for (std::size_t c = 0; c < m.cols(); ++c) {
            if (!m.at(c, r)) {
                continue;
            }
            double x = static_cast<double>(c) - cx, y = static_cast<double>(r) - cy;
            for (int p = 0; p <= 3; ++p) {
                for (int q = 0; p + q <= 3; ++q) {
                    mu[p][q] += std::pow(x, p) * std::pow(y, q);
                }
            }
        }
    }
    if (area_correction) {
        // Integrating x^2 over a unit cell adds 1/12 per cell; odd orders gain x/4 terms.
        mu[2][0] += m00 / 12.0;
        mu[0][2] += m00 / 12.0;
    }
    auto eta = [&](int p, int q) { return mu[p][q] / std::pow(m00, 1.0 + (p + q) / 2.0); };
    double n20 = eta(2, 0), n02 = eta(0, 2), n11 = eta(1, 1), n30 = eta(3, 0), n03 = eta(0, 3), n21 = eta(2, 1),
           n12 = eta(1, 2);
    HuVector h{};
    h[0] = n20 + n02;
    h[1] = (n20 - n02) * (n20 - n02) + 4 * n11 * n11;
    h[2] = std::pow(n30 - 3 * n12, 2) + std::pow(3 * n21 - n03, 2);
    h[3] = std::pow(n30 + n12, 2) + std::pow(n21 + n03, 2);
    return h;
}

} // namespace

TEST(Hu, EmptyMaskRejected)
{
    EXPECT_THROW(hu_moments(ShapeMask(3, 3)), ValidationError);
    EXPECT_THROW(shape_difference(ShapeMask(3, 3), ShapeMask::from_text("#\n")), ValidationError);
}

TEST(Hu, PositiveFirstInvariant)
{
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 100; ++trial) {
        auto m = testsupport::random_mask(rng, 1 + rng() % 9, 1 + rng() % 9);
        auto h = hu_moments(m);
        EXPECT_GT(h[0], 0.0);
        for (double v : h) {
            EXPECT_TRUE(std::isfinite(v));
        }
    }
}

TEST(Hu, SingleCellIsUnitSquare)
{
    auto h = hu_moments(ShapeMask::from_text("#\n"));
    EXPECT_NEAR(h[0], 1.0 / 6.0, 1e-15);
    for (std::size_t i = 1; i < 7; ++i) {
        EXPECT_EQ(h[i], 0.0);
    }
}

TEST(Hu, AgreesWithTextbookMoments)
{
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 40; ++trial) {
        auto m = testsupport::random_blob(rng, 8, 8, 5 + rng() % 30);
        auto h = hu_moments(m);
        auto ref = naive_hu(m, true);
        // Second order matches exactly once the per-cell area term is added.
        EXPECT_NEAR(h[0], ref[0], 1e-12);
        EXPECT_NEAR(h[1], ref[1], 1e-12);
        // Third-order central moments of cells equal those of their centres.
        EXPECT_NEAR(h[2], ref[2], 1e-12);
        EXPECT_NEAR(h[3], ref[3], 1e-12);
    }
}

TEST(Hu, DiscFirstInvariant)
{
    auto h = hu_moments(disc(400, 190.0));
    EXPECT_NEAR(h[0], 1.0 / (2.0 * std::numbers::pi), 0.02 / (2.0 * std::numbers::pi));
    EXPECT_LT(std::abs(h[1]), 1e-6);
}

TEST(Hu, TranslationInvariance)
{
    std::mt19937_64 rng(6);
    for (int trial = 0; trial < 60; ++trial) {
        auto m = testsupport::random_mask(rng, 1 + rng() % 7, 1 + rng() % 7);
        auto moved = m.padded(m.cols() + 9, m.rows() + 9, rng() % 10, rng() % 10);
        auto a = hu_moments(m), b = hu_moments(moved);
        for (std::size_t i = 0; i < 7; ++i) {
            EXPECT_NEAR(a[i], b[i], 1e-12) << "h" << i + 1 << "\n" << m.to_text();
        }
        EXPECT_EQ(shape_difference(m, moved).value, 0.0);
    }
}

TEST(Hu, RotationInvariance)
{
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 60; ++trial) {
        auto m = testsupport::random_mask(rng, 1 + rng() % 8, 1 + rng() % 8);
        auto a = hu_moments(m);
        auto r = m;
        for (int turn = 0; turn < 3; ++turn) {
            r = r.rotated90();
            auto b = hu_moments(r);
            for (std::size_t i = 0; i < 7; ++i) {
                EXPECT_NEAR(a[i], b[i], 1e-10);
            }
            EXPECT_LT(shape_difference(m, r).value, 1e-3);
        }
    }
}

TEST(Hu, BlockScaling)
{
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 30; ++trial) {
        auto m = testsupport::random_mask(rng, 1 + rng() % 6, 1 + rng() % 6);
        auto a = hu_moments(m);
        for (std::size_t f : {2u, 3u}) {
            auto b = hu_moments(m.upsampled(f));
            for (std::size_t i = 0; i < 7; ++i) {
                EXPECT_NEAR(a[i], b[i], 1e-3);
            }
        }
    }
}

TEST(ShapeDifference, IdentityAndSymmetry)
{
    std::mt19937_64 rng(9);
    for (int trial = 0; trial < 80; ++trial) {
        auto a = testsupport::random_mask(rng, 5, 5);
        auto b = testsupport::random_mask(rng, 5, 5);
        EXPECT_EQ(shape_difference(a, a).value, 0.0);
        EXPECT_EQ(shape_difference(a, b).value, shape_difference(b, a).value);
        EXPECT_GE(shape_difference(a, b).value, 0.0);
        for (auto metric : {HuMetric::I2, HuMetric::I3}) {
            ShapeOptions o;
            o.metric = metric;
            EXPECT_EQ(shape_difference(a, a, o).value, 0.0);
        }
    }
}

TEST(ShapeDifference, SquareVersusBar)
{
    auto square = ShapeMask::from_text("####\n####\n####\n####\n");
    ShapeMask bar(16, 1);
    for (std::size_t c = 0; c < 16; ++c) {
        bar.set(c, 0);
    }
    auto d = shape_difference(square, bar);
    EXPECT_GT(d.value, 0.02);
    EXPECT_FALSE(classify_match(d));
}

TEST(ShapeDifference, HandComputedI1)
{
    // Unit square versus 1x2 bar. Only h1 and h2 can be non-zero; the square's
    // h2 vanishes, so that term contributes |0 - 1/m2(bar)|.
    auto sq = ShapeMask::from_text("#\n");
    auto bar = ShapeMask::from_text("##\n");
    double h1s = 1.0 / 6.0;
    // Bar of area 2 spanning x in [-1, 1]: mu20 = 2/3, mu02 = 1/6.
    double n20 = (2.0 / 3.0) / 4.0, n02 = (1.0 / 6.0) / 4.0;
    double h1b = n20 + n02, h2b = (n20 - n02) * (n20 - n02);
    double want = std::abs(1.0 / std::log10(h1s) - 1.0 / std::log10(h1b)) + std::abs(0.0 - 1.0 / std::log10(h2b));
    EXPECT_NEAR(shape_difference(sq, bar).value, want, 1e-12);
}

TEST(ShapeDifference, ContourModeFillsHoles)
{
    auto ring = ShapeMask::from_text("###\n#.#\n###\n");
    auto full = ShapeMask::from_text("###\n###\n###\n");
    ShapeOptions o;
    o.source = MomentSource::contour;
    EXPECT_EQ(shape_difference(ring, full, o).value, 0.0);
    EXPECT_GT(shape_difference(ring, full).value, 0.0);
    EXPECT_EQ(fill_holes(ring), full);
    auto open = ShapeMask::from_text("###\n#..\n###\n");
    EXPECT_EQ(fill_holes(open), open);
}

TEST(Classify, StrictThreshold)
{
    EXPECT_TRUE(classify_match({0.015, 0.02}));
    EXPECT_FALSE(classify_match({0.02, 0.02}));
    EXPECT_FALSE(classify_match({0.17, 0.02}));
    EXPECT_TRUE(classify_match({0.0, 0.02}));
}

TEST(Classify, MonotoneInValue)
{
    std::mt19937_64 rng(10);
    std::uniform_real_distribution<double> u(0.0, 0.05);
    for (int i = 0; i < 1000; ++i) {
        double a = u(rng), b = u(rng);
        if (a > b) {
            std::swap(a, b);
        }
        // Matching b implies matching the smaller a.
        EXPECT_TRUE(!classify_match({b, 0.02}) || classify_match({a, 0.02}));
    }
}

TEST(Metric, ParseAndPrint)
{
    EXPECT_EQ(parse_metric("I2"), HuMetric::I2);
    EXPECT_EQ(to_string(HuMetric::I3), "I3");
    EXPECT_EQ(parse_source("contour"), MomentSource::contour);
    EXPECT_THROW(parse_metric("I9"), Error);
}

TEST(GazeMap, CellsAndBoundaries)
{
    GridLayout g{3, 2, 0.0, 0.0, 1.0, 1.0};
    EXPECT_EQ(session::map_pog_to_cell({0, 1.0 / 6.0, 0.25, true}, g), 0u);
    EXPECT_EQ(session::map_pog_to_cell({0, 0.0, 0.0, true}, g), 0u);
    EXPECT_EQ(session::map_pog_to_cell({0, 0.5, 0.75, true}, g), 4u);
    EXPECT_EQ(session::map_pog_to_cell({0, 1.0 / 3.0, 0.5, true}, g), 4u);
    EXPECT_EQ(session::map_pog_to_cell({0, 1.0, 0.5, true}, g), std::nullopt);
    EXPECT_EQ(session::map_pog_to_cell({0, -0.01, 0.5, true}, g), std::nullopt);
    EXPECT_EQ(session::map_pog_to_cell({0, 0.5, 0.5, false}, g), std::nullopt);
    GridLayout inset{5, 5, 0.25, 0.1, 0.5, 0.8};
    EXPECT_EQ(session::map_pog_to_cell({0, 0.2, 0.5, true}, inset), std::nullopt);
    EXPECT_EQ(session::map_pog_to_cell({0, 0.74, 0.89, true}, inset), 24u);
}

TEST(GazeMap, MatchesBruteForceRectangles)
{
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> u(-0.1, 1.1);
    GridLayout g{5, 4, 0.1, 0.2, 0.7, 0.6};
    for (int i = 0; i < 5000; ++i) {
        GazeSample s{0, u(rng), u(rng), true};
        std::optional<std::size_t> want;
        for (std::size_t r = 0; r < 4; ++r) {
            for (std::size_t c = 0; c < 5; ++c) {
                double x0 = 0.1 + 0.7 * static_cast<double>(c) / 5, x1 = 0.1 + 0.7 * static_cast<double>(c + 1) / 5;
                double y0 = 0.2 + 0.6 * static_cast<double>(r) / 4, y1 = 0.2 + 0.6 * static_cast<double>(r + 1) / 4;
                if (s.x > x0 + 1e-9 && s.x < x1 - 1e-9 && s.y > y0 + 1e-9 && s.y < y1 - 1e-9) {
                    want = r * 5 + c;
                }
            }
        }
        if (want) {
            EXPECT_EQ(session::map_pog_to_cell(s, g), want);
        }
    }
}

TEST(Dwell, ConstantGaze)
{
    GridLayout g{3, 3, 0, 0, 1, 1};
    std::vector<GazeSample> log;
    for (int i = 0; i <= 16; ++i) {
        log.push_back({i * 0.125, 0.1, 0.5, true});
    }
    auto d = dwell_heatmap(log, g);
    EXPECT_EQ(d.cells[3], 2.0);
    EXPECT_EQ(d.total(), 2.0);
    EXPECT_EQ(d.outside, 0.0);
}

TEST(Dwell, EmptyLog)
{
    auto d = dwell_heatmap({}, GridLayout{2, 2, 0, 0, 1, 1});
    EXPECT_EQ(d.total(), 0.0);
    EXPECT_EQ(d.cells.size(), 4u);
}

TEST(Dwell, AlternatingCells)
{
    GridLayout g{2, 1, 0, 0, 1, 1};
    std::vector<GazeSample> log;
    const double dt = 1.0 / 150.0;
    for (int i = 0; i < 301; ++i) {
        log.push_back({i * dt, (i % 2) ? 0.75 : 0.25, 0.5, true});
    }
    auto d = dwell_heatmap(log, g);
    EXPECT_NEAR(d.cells[0], d.cells[1], dt);
    EXPECT_NEAR(d.cells[0] + d.cells[1], 2.0, 1e-12);
}

TEST(Dwell, PartitionsTheLogSpan)
{
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> u(-0.2, 1.2);
    std::uniform_int_distribution<int> step(0, 8);
    for (int trial = 0; trial < 50; ++trial) {
        GridLayout g{1 + rng() % 6, 1 + rng() % 6, 0.1, 0.1, 0.8, 0.8};
        std::vector<GazeSample> log;
        double t = 0.0;
        for (int i = 0; i < 300; ++i) {
            t += step(rng) / 256.0; // dyadic steps keep every sum exact
            log.push_back({t, u(rng), u(rng), rng() % 10 != 0});
        }
        auto d = dwell_heatmap(log, g);
        EXPECT_EQ(d.total(), log.back().t - log.front().t);
    }
}

TEST(Dwell, RejectsBackwardsTime)
{
    std::vector<GazeSample> log{{1.0, 0.5, 0.5, true}, {0.5, 0.5, 0.5, true}};
    EXPECT_THROW(dwell_heatmap(log, GridLayout{}), ValidationError);
}

TEST(EdgeDwell, Examples)
{
    auto square = ShapeMask::from_text("###\n###\n###\n");
    GridLayout g{3, 3, 0, 0, 1, 1};
    auto at = [](double t, std::size_t c, std::size_t r) {
        return GazeSample{t, (static_cast<double>(c) + 0.5) / 3, (static_cast<double>(r) + 0.5) / 3, true};
    };
    std::vector<GazeSample> edges{at(0, 0, 0), at(1, 2, 1), at(2, 1, 2), at(3, 1, 2)};
    EXPECT_EQ(edge_dwell_fraction(edges, square, g), 1.0);
    std::vector<GazeSample> centre{at(0, 1, 1), at(5, 1, 1)};
    EXPECT_EQ(edge_dwell_fraction(centre, square, g), 0.0);

    auto plus = ShapeMask::from_text(".#.\n###\n.#.\n");
    // The plus centre is interior; a corner is empty in-grid space.
    std::vector<GazeSample> half{at(0, 1, 1), at(1, 0, 0), at(2, 0, 0)};
    EXPECT_EQ(edge_dwell_fraction(half, plus, g), 0.5);
}

TEST(EdgeDwell, FractionBounds)
{
    std::mt19937_64 rng(14);
    std::uniform_real_distribution<double> u(-0.2, 1.2);
    for (int trial = 0; trial < 40; ++trial) {
        auto target = testsupport::random_mask(rng, 4, 4);
        GridLayout g{4, 4, 0, 0, 1, 1};
        std::vector<GazeSample> log;
        for (int i = 0; i < 100; ++i) {
            log.push_back({i * 0.01, u(rng), u(rng), true});
        }
        auto a = analyze_gaze(log, target, g, 1.5);
        EXPECT_GE(a.edge_dwell_fraction, 0.0);
        EXPECT_LE(a.edge_dwell_fraction, 1.0);
        EXPECT_GE(a.outside_fraction, 0.0);
        EXPECT_LE(a.outside_fraction, 1.0);
        EXPECT_LE(a.dwell.total(), a.sensing_time);
    }
}

TEST(Stats, MeansAndGrouping)
{
    std::vector<TrialRecord> two{{"s", 0, Condition::training, "T01", 0.1, false, 100.0, 0},
                                 {"s", 1, Condition::training, "T02", 0.3, false, 200.0, 0}};
    auto g = session_stats(two);
    ASSERT_EQ(g.size(), 1u);
    EXPECT_EQ(g[0].sensing_time.mean, 150.0);
    EXPECT_EQ(g[0].sensing_time.min, 100.0);
    EXPECT_EQ(g[0].sensing_time.max, 200.0);
    EXPECT_NEAR(g[0].difference.mean, 0.2, 1e-15);

    std::vector<TrialRecord> one{{"s", 0, Condition::test_untrained, "N01", 0.17, false, 155.0, 0.4}};
    auto s = session_stats(one);
    EXPECT_EQ(s[0].sensing_time.mean, 155.0);
    EXPECT_EQ(s[0].difference.mean, 0.17);

    std::vector<TrialRecord> full;
    for (std::size_t i = 0; i < 15; ++i) {
        Condition c = i < 8 ? Condition::training : (i % 2 ? Condition::test_trained : Condition::test_untrained);
        full.push_back({"s", i, c, "T", 0.0, true, 1.0, 0.0});
    }
    auto groups = session_stats(full);
    ASSERT_EQ(groups.size(), 3u);
    EXPECT_EQ(groups[0].count, 8u);
    EXPECT_EQ(groups[1].count + groups[2].count, 7u);
    EXPECT_THROW(session_stats({}), ValidationError);
}

TEST(Report, CsvAndJson)
{
    std::vector<TrialRecord> t{{"abc", 3, Condition::test_trained, "T04", 0.0, true, 12.5, 0.25}};
    auto csv = trials_csv(t);
    EXPECT_EQ(csv, "session,trial,condition,target,difference,matched,sensing_time,edge_dwell_fraction\n"
                   "abc,3,test_trained,T04,0,true,12.5,0.25\n");
    auto j = summary_json(session_stats(t));
    EXPECT_EQ(j["conditions"][0]["condition"], "test_trained");
    EXPECT_EQ(j["conditions"][0]["sensing_time_s"]["mean"], 12.5);
    EXPECT_NE(summary_table(session_stats(t)).find("test_trained"), std::string::npos);
}
