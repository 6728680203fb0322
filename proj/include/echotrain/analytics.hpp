#pragma once

// Shape scoring with Hu moment invariants, gaze dwell accounting and
// per-condition summaries.

#include <algorithm>
#include <array>
#include <cmath>
#include <deque>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "echotrain/errors.hpp"
#include "echotrain/gaze.hpp"
#include "echotrain/geometry.hpp"

namespace echotrain::analytics {

using geometry::ShapeMask;
using session::GazeSample;
using session::GridLayout;

inline constexpr double default_threshold = 0.02;

using HuVector = std::array<double, 7>;

enum class HuMetric { I1, I2, I3 };

/// region: moments of the occupied cells. contour: moments of the area the
/// outline encloses, i.e. the mask with its holes filled.
enum class MomentSource { region, contour };

inline HuMetric parse_metric(std::string_view s)
{
    if (s == "I1" || s == "i1") return HuMetric::I1;
    if (s == "I2" || s == "i2") return HuMetric::I2;
    if (s == "I3" || s == "i3") return HuMetric::I3;
    throw ConfigError("unknown shape metric '" + std::string(s) + "' (expected I1, I2 or I3)");
}

inline std::string_view to_string(HuMetric m)
{
    switch (m) {
    case HuMetric::I1: return "I1";
    case HuMetric::I2: return "I2";
    case HuMetric::I3: return "I3";
    }
    return "I1";
}

inline MomentSource parse_source(std::string_view s)
{
    if (s == "region") return MomentSource::region;
    if (s == "contour") return MomentSource::contour;
    throw ConfigError("unknown moment source '" + std::string(s) + "' (expected region or contour)");
}

inline std::string_view to_string(MomentSource s) { return s == MomentSource::region ? "region" : "contour"; }

/// Empty cells not 4-connected to the outside become occupied.
inline ShapeMask fill_holes(const ShapeMask& m)
{
    const long cols = static_cast<long>(m.cols()), rows = static_cast<long>(m.rows());
    std::vector<std::uint8_t> outside(m.size(), 0);
    std::deque<std::pair<long, long>> queue;
    auto push = [&](long c, long r) {
        if (c < 0 || r < 0 || c >= cols || r >= rows) return;
        auto i = static_cast<std::size_t>(r * cols + c);
        if (outside[i] || m[i]) return;
        outside[i] = 1;
        queue.emplace_back(c, r);
    };
    for (long c = 0; c < cols; ++c) {
        push(c, 0);
        push(c, rows - 1);
    }
    for (long r = 0; r < rows; ++r) {
        push(0, r);
        push(cols - 1, r);
    }
    while (!queue.empty()) {
        auto [c, r] = queue.front();
        queue.pop_front();
        push(c - 1, r);
        push(c + 1, r);
        push(c, r - 1);
        push(c, r + 1);
    }
    ShapeMask out = m;
    for (std::size_t i = 0; i < m.size(); ++i) {
        if (!outside[i]) {
            out.set(i % m.cols(), i / m.cols());
        }
    }
    return out;
}

namespace detail {

// Central moments of the union of unit cells, each cell integrated over its
// area. Coordinates are scaled by 2n (n = cell count) so the centroid and all
// cell corners are integers; the sums are then exact in 128-bit integers for
// all but very large masks, which keeps the invariants of symmetric shapes
// exactly zero.
struct CentralMoments {
    // mu[p][q] for p + q <= 3, in scaled units.
    std::array<std::array<long double, 4>, 4> mu{};
};

template <typename Acc>
CentralMoments central_moments_as(const ShapeMask& m)
{
    auto cells = m.occupied_indices();
    const auto n = static_cast<long long>(cells.size());
    long long sx = 0, sy = 0;
    for (auto i : cells) {
        sx += 2 * static_cast<long long>(i % m.cols()) + 1;
        sy += 2 * static_cast<long long>(i / m.cols()) + 1;
    }
    // Scaled coordinate X = 2n x, centroid X = sum(2c + 1).
    std::array<std::array<Acc, 4>, 4> u{};
    for (auto i : cells) {
        Acc a = static_cast<Acc>(2 * n * static_cast<long long>(i % m.cols()) - sx);
        Acc c = static_cast<Acc>(2 * n * static_cast<long long>(i / m.cols()) - sy);
        Acc b = a + static_cast<Acc>(2 * n);
        Acc d = c + static_cast<Acc>(2 * n);
        std::array<Acc, 4> ix{}, iy{};
        Acc pa = a, pb = b, pc = c, pd = d;
        for (int p = 0; p < 4; ++p) {
            ix[static_cast<std::size_t>(p)] = pb - pa;
            iy[static_cast<std::size_t>(p)] = pd - pc;
            pa *= a;
            pb *= b;
            pc *= c;
            pd *= d;
        }
        for (std::size_t p = 0; p < 4; ++p) {
            for (std::size_t q = 0; p + q < 4; ++q) {
                u[p][q] += ix[p] * iy[q];
            }
        }
    }
    CentralMoments out;
    for (std::size_t p = 0; p < 4; ++p) {
        for (std::size_t q = 0; p + q < 4; ++q) {
            out.mu[p][q] = static_cast<long double>(u[p][q]) / static_cast<long double>((p + 1) * (q + 1));
        }
    }
    return out;
}

inline CentralMoments central_moments(const ShapeMask& m)
{
    // Largest term is about n * (2n * extent)^4 * 2n; stay well inside 2^127.
    long double n = static_cast<long double>(m.count());
    long double extent = static_cast<long double>(std::max(m.cols(), m.rows())) + 1.0L;
    long double bound = n * std::pow(2.0L * n * extent, 4.0L) * 2.0L * n;
    if (bound < 1e36L) {
        return central_moments_as<__int128>(m);
    }
    return central_moments_as<long double>(m);
}

} // namespace detail

/// The seven Hu invariants of the mask's occupied area.
inline HuVector hu_moments(const ShapeMask& mask)
{
    if (mask.count() == 0) {
        throw ValidationError("Hu moments need a non-empty mask");
    }
    auto cm = detail::central_moments(mask);
    const long double m00 = cm.mu[0][0];
    auto eta = [&](std::size_t p, std::size_t q) {
        return static_cast<double>(cm.mu[p][q] / std::pow(m00, 1.0L + static_cast<long double>(p + q) / 2.0L));
    };
    const double n20 = eta(2, 0), n02 = eta(0, 2), n11 = eta(1, 1);
    const double n30 = eta(3, 0), n03 = eta(0, 3), n21 = eta(2, 1), n12 = eta(1, 2);
    const double a = n30 + n12, b = n21 + n03;
    HuVector h{};
    h[0] = n20 + n02;
    h[1] = (n20 - n02) * (n20 - n02) + 4.0 * n11 * n11;
    h[2] = (n30 - 3.0 * n12) * (n30 - 3.0 * n12) + (3.0 * n21 - n03) * (3.0 * n21 - n03);
    h[3] = a * a + b * b;
    h[4] = (n30 - 3.0 * n12) * a * (a * a - 3.0 * b * b) + (3.0 * n21 - n03) * b * (3.0 * a * a - b * b);
    h[5] = (n20 - n02) * (a * a - b * b) + 4.0 * n11 * a * b;
    h[6] = (3.0 * n21 - n03) * a * (a * a - 3.0 * b * b) - (n30 - 3.0 * n12) * b * (3.0 * a * a - b * b);
    return h;
}

struct DifferenceScore {
    double value = 0.0;
    double threshold = default_threshold;
};

/// True iff value < threshold.
inline bool classify_match(const DifferenceScore& s) { return s.value < s.threshold; }

inline constexpr double hu_floor = 1e-30;

/// sign(h) log10|h|.
inline double log_hu(double h) { return std::copysign(std::log10(std::abs(h)), h); }

struct ShapeOptions {
    HuMetric metric = HuMetric::I1;
    MomentSource source = MomentSource::region;
    double threshold = default_threshold;
};

inline DifferenceScore shape_difference(const ShapeMask& a, const ShapeMask& b, const ShapeOptions& opt = {})
{
    if (a.count() == 0 || b.count() == 0) {
        throw ValidationError("shape difference needs two non-empty masks");
    }
    auto prep = [&](const ShapeMask& m) { return opt.source == MomentSource::contour ? fill_holes(m) : m; };
    auto ha = hu_moments(prep(a));
    auto hb = hu_moments(prep(b));
    double sum = 0.0;
    for (std::size_t i = 0; i < 7; ++i) {
        bool tiny_a = std::abs(ha[i]) < hu_floor, tiny_b = std::abs(hb[i]) < hu_floor;
        if (tiny_a && tiny_b) {
            continue;
        }
        // log10 of a vanishing invariant tends to -inf, so 1/m tends to 0.
        double ma = tiny_a ? -std::numeric_limits<double>::infinity() : log_hu(ha[i]);
        double mb = tiny_b ? -std::numeric_limits<double>::infinity() : log_hu(hb[i]);
        switch (opt.metric) {
        case HuMetric::I1:
            sum += std::abs((tiny_a ? 0.0 : 1.0 / ma) - (tiny_b ? 0.0 : 1.0 / mb));
            break;
        case HuMetric::I2:
            if (tiny_a || tiny_b) {
                return {std::numeric_limits<double>::infinity(), opt.threshold};
            }
            sum += std::abs(ma - mb);
            break;
        case HuMetric::I3:
            if (tiny_a || tiny_b) {
                return {std::numeric_limits<double>::infinity(), opt.threshold};
            }
            sum += std::abs(ma - mb) / std::abs(ma);
            break;
        }
    }
    return {sum, opt.threshold};
}

// ---------------------------------------------------------------------------
// Gaze

struct DwellMap {
    std::size_t cols = 0;
    std::size_t rows = 0;
    std::vector<double> cells;
    double outside = 0.0;

    double total() const
    {
        double s = outside;
        for (double v : cells) {
            s += v;
        }
        return s;
    }

    std::string to_csv() const
    {
        std::ostringstream out;
        out.precision(17);
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < cols; ++c) {
                out << (c ? "," : "") << cells[r * cols + c];
            }
            out << "\n";
        }
        return out.str();
    }
};

/// Each interval between consecutive samples goes to the cell of the earlier
/// sample; unmapped samples feed the outside bucket.
inline DwellMap dwell_heatmap(std::span<const GazeSample> log, const GridLayout& layout)
{
    layout.validate();
    DwellMap d;
    d.cols = layout.cols;
    d.rows = layout.rows;
    d.cells.assign(layout.cell_count(), 0.0);
    for (std::size_t i = 1; i < log.size(); ++i) {
        double dt = log[i].t - log[i - 1].t;
        if (!(dt >= 0.0)) {
            throw ValidationError("gaze timestamps decrease at sample " + std::to_string(i));
        }
        if (auto cell = session::map_pog_to_cell(log[i - 1], layout)) {
            d.cells[*cell] += dt;
        } else {
            d.outside += dt;
        }
    }
    return d;
}

/// (dwell on edge cells + dwell on empty in-grid cells) / total dwell, where
/// edge cells are occupied cells 4-adjacent to an empty or out-of-range cell.
inline double edge_dwell_fraction(const DwellMap& d, const ShapeMask& target)
{
    if (target.cols() != d.cols || target.rows() != d.rows) {
        throw ValidationError("target mask and gaze layout dimensions differ");
    }
    double total = d.total();
    if (!(total > 0.0)) {
        return 0.0;
    }
    double edge = 0.0;
    for (std::size_t i = 0; i < d.cells.size(); ++i) {
        std::size_t c = i % d.cols, r = i / d.cols;
        if (!target[i] || target.is_edge(c, r)) {
            edge += d.cells[i];
        }
    }
    return edge / total;
}

inline double edge_dwell_fraction(std::span<const GazeSample> log, const ShapeMask& target, const GridLayout& layout)
{
    return edge_dwell_fraction(dwell_heatmap(log, layout), target);
}

struct GazeAnalysis {
    DwellMap dwell;
    double edge_dwell_fraction = 0.0;
    double outside_fraction = 0.0;
    double sensing_time = 0.0;
};

inline GazeAnalysis analyze_gaze(std::span<const GazeSample> log, const ShapeMask& target, const GridLayout& layout,
                                 double sensing_time)
{
    GazeAnalysis g;
    g.dwell = dwell_heatmap(log, layout);
    g.edge_dwell_fraction = edge_dwell_fraction(g.dwell, target);
    double total = g.dwell.total();
    g.outside_fraction = total > 0.0 ? g.dwell.outside / total : 0.0;
    g.sensing_time = sensing_time;
    return g;
}

// ---------------------------------------------------------------------------
// Reports

enum class Condition { training, test_trained, test_untrained };

inline std::string_view to_string(Condition c)
{
    switch (c) {
    case Condition::training: return "training";
    case Condition::test_trained: return "test_trained";
    case Condition::test_untrained: return "test_untrained";
    }
    return "training";
}

inline Condition parse_condition(std::string_view s)
{
    if (s == "training") return Condition::training;
    if (s == "test_trained") return Condition::test_trained;
    if (s == "test_untrained") return Condition::test_untrained;
    throw ParseError("unknown condition '" + std::string(s) + "'", 0);
}

struct TrialRecord {
    std::string session;
    std::size_t trial = 0;
    Condition condition = Condition::training;
    std::string target;
    double difference = 0.0;
    bool matched = false;
    double sensing_time = 0.0;
    double edge_dwell_fraction = 0.0;
};

struct Range {
    double mean = 0.0;
    double min = 0.0;
    double max = 0.0;
};

struct ConditionSummary {
    Condition condition = Condition::training;
    std::size_t count = 0;
    std::size_t matched = 0;
    Range sensing_time;
    Range difference;
};

inline std::vector<ConditionSummary> session_stats(std::span<const TrialRecord> trials)
{
    if (trials.empty()) {
        throw ValidationError("no trials to summarize");
    }
    std::vector<ConditionSummary> out;
    for (auto cond : {Condition::training, Condition::test_trained, Condition::test_untrained}) {
        ConditionSummary s;
        s.condition = cond;
        double st = 0.0, df = 0.0;
        for (const auto& t : trials) {
            if (t.condition != cond) {
                continue;
            }
            if (s.count == 0) {
                s.sensing_time = {0.0, t.sensing_time, t.sensing_time};
                s.difference = {0.0, t.difference, t.difference};
            }
            ++s.count;
            s.matched += t.matched ? 1 : 0;
            st += t.sensing_time;
            df += t.difference;
            s.sensing_time.min = std::min(s.sensing_time.min, t.sensing_time);
            s.sensing_time.max = std::max(s.sensing_time.max, t.sensing_time);
            s.difference.min = std::min(s.difference.min, t.difference);
            s.difference.max = std::max(s.difference.max, t.difference);
        }
        if (s.count > 0) {
            s.sensing_time.mean = st / static_cast<double>(s.count);
            s.difference.mean = df / static_cast<double>(s.count);
            out.push_back(s);
        }
    }
    return out;
}

inline std::string trials_csv(std::span<const TrialRecord> trials)
{
    std::ostringstream out;
    out.precision(17);
    out << "session,trial,condition,target,difference,matched,sensing_time,edge_dwell_fraction\n";
    for (const auto& t : trials) {
        out << t.session << ',' << t.trial << ',' << to_string(t.condition) << ',' << t.target << ','
            << t.difference << ',' << (t.matched ? "true" : "false") << ',' << t.sensing_time << ','
            << t.edge_dwell_fraction << "\n";
    }
    return out.str();
}

inline nlohmann::json summary_json(std::span<const ConditionSummary> groups)
{
    auto range = [](const Range& r) { return nlohmann::json{{"mean", r.mean}, {"min", r.min}, {"max", r.max}}; };
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& g : groups) {
        arr.push_back({
            {"condition", to_string(g.condition)},
            {"count", g.count},
            {"matched", g.matched},
            {"sensing_time_s", range(g.sensing_time)},
            {"difference", range(g.difference)},
        });
    }
    return {{"conditions", arr}};
}

/// Fixed-width table for terminal output.
inline std::string summary_table(std::span<const ConditionSummary> groups)
{
    std::ostringstream out;
    char line[200];
    std::snprintf(line, sizeof line, "%-15s %5s %7s %10s %10s %10s %10s\n", "condition", "n", "matched",
                  "sense_mean", "sense_min", "sense_max", "diff_mean");
    out << line;
    for (const auto& g : groups) {
        std::snprintf(line, sizeof line, "%-15s %5zu %7zu %10.3f %10.3f %10.3f %10.4f\n",
                      std::string(to_string(g.condition)).c_str(), g.count, g.matched, g.sensing_time.mean,
                      g.sensing_time.min, g.sensing_time.max, g.difference.mean);
        out << line;
    }
    return out.str();
}

} // namespace echotrain::analytics
