#pragma once

// Explicit second-order wave-equation FDTD on a uniform lattice.
//
// Interior cells use the 7-point leapfrog update
//   p[n+1] = 2 p[n] - p[n-1] + C^2 (sum of 6 neighbours - 6 p[n]).
// Cells in the outer shell (the PML slabs) carry the pressure split into
// per-axis components p = px + py + pz advanced together with staggered face
// velocities:
//   (d/dt + s_a) p_a = -rho c^2 dv_a/da,   (d/dt + s_a) v_a = -(1/rho) dp/da
// with a quadratic damping profile s_a. Rigid voxels hold zero pressure and act
// as mirrors for their fluid neighbours.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "echotrain/bytes.hpp"
#include "echotrain/errors.hpp"
#include "echotrain/geometry.hpp"
#include "echotrain/voxel.hpp"

namespace echotrain::fdtd {

using geometry::Dims;
using geometry::GridSpec;
using geometry::Vec3;
using geometry::VoxelGrid;

/// Largest Courant number for which the 3D scheme is stable.
inline double max_stable_cfl() { return 1.0 / std::sqrt(3.0); }

/// dt = cfl * h / c.
inline double time_step(double sound_speed, double spacing, double cfl)
{
    return cfl * spacing / sound_speed;
}

struct SimConfig {
    double sound_speed = 344.0;             // m/s
    double spacing = 0.0015;                // m
    double cfl = 0.5;
    Vec3 domain_extent{1.5, 1.5, 1.5};      // m
    Vec3 origin{};                          // world position of the domain's minimum corner
    int pml_layers = 16;
    double pml_peak_damping = 0.0;          // 1/s; 0 selects 60 dB one-way attenuation
    double duration = 0.0;                  // s; 0 selects two domain diagonals of travel
    Vec3 source{};
    std::vector<Vec3> receivers;

    double dt() const { return time_step(sound_speed, spacing, cfl); }
    double sample_rate() const { return 1.0 / dt(); }

    Dims dims() const
    {
        auto n = [&](double extent) { return static_cast<std::size_t>(std::llround(extent / spacing)); };
        return {n(domain_extent.x), n(domain_extent.y), n(domain_extent.z)};
    }

    GridSpec grid() const { return {dims(), spacing, origin}; }

    double resolved_duration() const
    {
        if (duration > 0.0) {
            return duration;
        }
        return 2.0 * geometry::norm(domain_extent) / sound_speed;
    }

    std::size_t step_count() const
    {
        double steps = resolved_duration() / dt();
        // Ceil, tolerant of durations that are an exact multiple of dt.
        auto rounded = std::llround(steps);
        if (std::abs(steps - static_cast<double>(rounded)) < 1e-9 * std::max(1.0, steps)) {
            return static_cast<std::size_t>(rounded);
        }
        return static_cast<std::size_t>(std::ceil(steps));
    }

    double pml_thickness() const { return spacing * pml_layers; }

    /// Peak of s(d) = peak * (d / L)^2; the default gives exp(-peak L / 3c) = 1e-3 one way.
    double resolved_peak_damping() const
    {
        if (pml_peak_damping > 0.0 || pml_layers == 0) {
            return pml_peak_damping;
        }
        return 3.0 * sound_speed * std::log(1000.0) / pml_thickness();
    }

    /// Shape checks only; point placement is checked against a concrete grid.
    void validate() const
    {
        if (!(sound_speed > 0.0) || !(spacing > 0.0) || !(cfl > 0.0)) {
            throw ConfigError("sound_speed, spacing and cfl must be positive");
        }
        if (cfl > max_stable_cfl()) {
            throw ConfigError("cfl " + std::to_string(cfl) + " exceeds the 3D stability bound 1/sqrt(3)");
        }
        if (pml_layers < 0) {
            throw ConfigError("pml_layers must be non-negative");
        }
        if (pml_peak_damping < 0.0 || duration < 0.0) {
            throw ConfigError("pml_peak_damping and duration must be non-negative");
        }
        auto d = dims();
        auto layers = static_cast<std::size_t>(pml_layers);
        std::size_t shell = std::max<std::size_t>(layers, 1);
        for (int a = 0; a < 3; ++a) {
            if (d[a] <= 2 * shell + 2) {
                throw ConfigError("domain too small for " + std::to_string(pml_layers) + " PML layers");
            }
        }
    }
};

template <typename Real>
struct FieldState {
    Dims dims;
    std::vector<Real> p_prev;
    std::vector<Real> p_curr;
    std::size_t step_index = 0;
    /// Boundary-region auxiliaries, three per cell (x, y, z interleaved):
    /// split pressure components and the scaled normal velocity on each
    /// cell's upper face.
    std::vector<Real> pml_split;
    std::vector<Real> pml_face;

    Real at(std::size_t i, std::size_t j, std::size_t k) const { return p_curr[(i * dims.ny + j) * dims.nz + k]; }
};

struct ReceiverTraces {
    double sample_rate = 0.0;
    std::vector<std::vector<double>> traces;
};

struct Snapshot {
    std::filesystem::path dir;
    std::vector<std::size_t> steps;
};

struct RunOptions {
    int threads = 1;
    /// Full-field finiteness scan interval in steps (receivers are checked every step).
    std::size_t scan_interval = 64;
    Snapshot snapshot{};
};

namespace detail {

enum : std::uint8_t {
    rigid_xm = 1 << 0,
    rigid_xp = 1 << 1,
    rigid_ym = 1 << 2,
    rigid_yp = 1 << 3,
    rigid_zm = 1 << 4,
    rigid_zp = 1 << 5,
    rigid_self = 1 << 7,
};

struct AxisCoefficients {
    // Cell i:  comp' = cell_keep[i] * comp - cell_gain[i] * (q[i+1/2] - q[i-1/2])
    // Face i+1/2 (stored at i): q' = face_keep[i] * q - face_gain[i] * (p[i+1] - p[i])
    std::vector<double> cell_keep, cell_gain, face_keep, face_gain;
};

struct Stencil {
    std::array<std::size_t, 8> index{};
    std::array<double, 8> weight{};
    std::size_t count = 0;
};

} // namespace detail

/// Time stepper bound to one scene and configuration. Owns the precomputed
/// neighbour flags and damping coefficients; state lives in FieldState.
///
/// The outer `shell` layers (the PML, or one layer when there is none) are
/// advanced with a staggered pressure/velocity split-field scheme; with zero
/// damping it is algebraically identical to the interior leapfrog, so the two
/// regions couple without an interface error. The domain is closed by a rigid
/// wall behind the PML.
template <typename Real = double>
class Propagator {
public:
    Propagator(const VoxelGrid& scene, const SimConfig& config) : config_(config)
    {
        config_.validate();
        dims_ = config_.dims();
        if (!(scene.dims() == dims_)) {
            throw ValidationError("scene dimensions do not match the simulation grid");
        }
        layers_ = static_cast<std::size_t>(config_.pml_layers);
        shell_ = std::max<std::size_t>(layers_, 1);
        band_ = shell_ + 1;
        courant2_ = config_.cfl * config_.cfl;
        build_flags(scene);
        build_coefficients();
        build_band_rows();
    }

    const Dims& dims() const { return dims_; }
    const SimConfig& config() const { return config_; }
    std::size_t band_cell_count() const { return band_cells_; }

    FieldState<Real> make_state() const
    {
        FieldState<Real> s;
        s.dims = dims_;
        s.p_prev.assign(dims_.count(), Real(0));
        s.p_curr.assign(dims_.count(), Real(0));
        s.pml_split.assign(3 * band_cells_, Real(0));
        s.pml_face.assign(3 * band_cells_, Real(0));
        return s;
    }

    void check_state(const FieldState<Real>& s) const
    {
        if (!(s.dims == dims_) || s.p_prev.size() != dims_.count() || s.p_curr.size() != dims_.count() ||
            s.pml_split.size() != 3 * band_cells_ || s.pml_face.size() != 3 * band_cells_) {
            throw ValidationError("field state dimensions do not match the propagator");
        }
    }

    bool is_rigid(std::size_t idx) const { return (flags_[idx] & detail::rigid_self) != 0; }

    /// True when (i, j, k) is updated by the plain interior stencil.
    bool is_interior(std::size_t i, std::size_t j, std::size_t k) const
    {
        return !in_layer(i, j, k, shell_);
    }

    /// Trilinear stencil of a world point over fluid voxels, weights renormalized
    /// over the fluid subset. Throws when the point is outside the interior or
    /// its containing voxel is rigid.
    detail::Stencil stencil_at(const Vec3& world, const std::string& what) const
    {
        Vec3 l = (world - config_.origin) / config_.spacing;
        std::array<double, 3> u{l.x - 0.5, l.y - 0.5, l.z - 0.5};
        std::array<std::size_t, 3> base{};
        std::array<double, 3> frac{};
        for (int a = 0; a < 3; ++a) {
            auto ua = u[static_cast<std::size_t>(a)];
            double f = std::floor(ua);
            if (!std::isfinite(ua) || f < static_cast<double>(shell_) ||
                f + 1.0 > static_cast<double>(dims_[a] - shell_ - 1)) {
                throw ValidationError(what + " lies outside the non-PML interior");
            }
            base[static_cast<std::size_t>(a)] = static_cast<std::size_t>(f);
            frac[static_cast<std::size_t>(a)] = ua - f;
        }
        auto ci = static_cast<std::size_t>(std::floor(l.x));
        auto cj = static_cast<std::size_t>(std::floor(l.y));
        auto ck = static_cast<std::size_t>(std::floor(l.z));
        if (is_rigid(index(ci, cj, ck))) {
            throw ValidationError(what + " lies inside a rigid voxel");
        }
        detail::Stencil st;
        double total = 0.0;
        for (int c = 0; c < 8; ++c) {
            std::size_t di = c & 1, dj = (c >> 1) & 1, dk = (c >> 2) & 1;
            double w = (di ? frac[0] : 1.0 - frac[0]) * (dj ? frac[1] : 1.0 - frac[1]) *
                       (dk ? frac[2] : 1.0 - frac[2]);
            std::size_t idx = index(base[0] + di, base[1] + dj, base[2] + dk);
            if (w == 0.0 || is_rigid(idx)) {
                continue;
            }
            st.index[st.count] = idx;
            st.weight[st.count] = w;
            total += w;
            ++st.count;
        }
        if (!(total > 0.0)) {
            throw ValidationError(what + " has no fluid neighbours");
        }
        for (std::size_t n = 0; n < st.count; ++n) {
            st.weight[n] /= total;
        }
        return st;
    }

    /// Adds value into the current pressure level (soft source).
    void inject(FieldState<Real>& s, const detail::Stencil& st, double value) const
    {
        for (std::size_t n = 0; n < st.count; ++n) {
            s.p_curr[st.index[n]] += static_cast<Real>(st.weight[n] * value);
        }
    }

    double sample(const FieldState<Real>& s, const detail::Stencil& st) const
    {
        double v = 0.0;
        for (std::size_t n = 0; n < st.count; ++n) {
            v += st.weight[n] * static_cast<double>(s.p_curr[st.index[n]]);
        }
        return v;
    }

    /// Advances one time level. The result is independent of the thread count.
    void step(FieldState<Real>& s, int threads = 1) const
    {
        check_state(s);
        threads = std::max(threads, 1);
        const auto rows = static_cast<long>(band_rows_.size());

        // Face velocities of the boundary band, from p[n].
#pragma omp parallel for schedule(static) num_threads(threads)
        for (long r = 0; r < rows; ++r) {
            for_each_band_cell(band_rows_[static_cast<std::size_t>(r)],
                               [&](std::size_t i, std::size_t j, std::size_t k, std::size_t slot) {
                                   update_faces(s, i, j, k, slot);
                               });
        }

        const Real c2 = static_cast<Real>(courant2_);
        const std::size_t ny = dims_.ny, nz = dims_.nz;
        const std::size_t sx = ny * nz, sy = nz;
        const Real* __restrict p = s.p_curr.data();
        Real* __restrict out = s.p_prev.data();
        const std::uint8_t* fl = flags_.data();
        const auto lo = static_cast<long>(shell_);
        const auto hi_i = static_cast<long>(dims_.nx - shell_);
        const std::size_t k0 = shell_, k1 = nz - shell_;

#pragma omp parallel for schedule(static) num_threads(threads)
        for (long li = lo; li < hi_i; ++li) {
            auto i = static_cast<std::size_t>(li);
            for (std::size_t j = shell_; j < ny - shell_; ++j) {
                std::size_t row = (i * ny + j) * nz;
                if (!row_flagged_[i * ny + j]) {
                    for (std::size_t k = k0; k < k1; ++k) {
                        std::size_t c = row + k;
                        Real pc = p[c];
                        Real lap = ((p[c - sx] + p[c + sx]) + (p[c - sy] + p[c + sy])) + (p[c - 1] + p[c + 1]);
                        out[c] = Real(2) * pc - out[c] + c2 * (lap - Real(6) * pc);
                    }
                    continue;
                }
                for (std::size_t k = k0; k < k1; ++k) {
                    std::size_t c = row + k;
                    std::uint8_t f = fl[c];
                    if (f & detail::rigid_self) {
                        continue;
                    }
                    Real pc = p[c];
                    Real xm = (f & detail::rigid_xm) ? pc : p[c - sx];
                    Real xp = (f & detail::rigid_xp) ? pc : p[c + sx];
                    Real ym = (f & detail::rigid_ym) ? pc : p[c - sy];
                    Real yp = (f & detail::rigid_yp) ? pc : p[c + sy];
                    Real zm = (f & detail::rigid_zm) ? pc : p[c - 1];
                    Real zp = (f & detail::rigid_zp) ? pc : p[c + 1];
                    Real lap = ((xm + xp) + (ym + yp)) + (zm + zp);
                    out[c] = Real(2) * pc - out[c] + c2 * (lap - Real(6) * pc);
                }
            }
        }

        // Split pressure in the shell, from the fresh face velocities.
#pragma omp parallel for schedule(static) num_threads(threads)
        for (long r = 0; r < rows; ++r) {
            for_each_band_cell(band_rows_[static_cast<std::size_t>(r)],
                               [&](std::size_t i, std::size_t j, std::size_t k, std::size_t slot) {
                                   if (in_layer(i, j, k, shell_)) {
                                       update_shell_pressure(s, i, j, k, slot);
                                   }
                               });
        }

        std::swap(s.p_prev, s.p_curr);
        ++s.step_index;
    }

    /// Largest |p| over the current level; NaN if any value is non-finite.
    double max_abs(const FieldState<Real>& s, int threads = 1) const
    {
        double m = 0.0;
        bool finite = true;
        const auto n = static_cast<long>(s.p_curr.size());
#pragma omp parallel for schedule(static) num_threads(std::max(threads, 1)) reduction(max : m) reduction(&& : finite)
        for (long c = 0; c < n; ++c) {
            double v = static_cast<double>(s.p_curr[static_cast<std::size_t>(c)]);
            finite = finite && std::isfinite(v);
            m = std::max(m, std::abs(v));
        }
        return finite ? m : std::numeric_limits<double>::quiet_NaN();
    }

private:
    struct BandRow {
        std::size_t i = 0;
        std::size_t j = 0;
        bool full = false;
        std::size_t base = 0;
    };

    std::size_t index(std::size_t i, std::size_t j, std::size_t k) const { return (i * dims_.ny + j) * dims_.nz + k; }

    /// Within `width` cells of the domain boundary.
    bool in_layer(std::size_t i, std::size_t j, std::size_t k, std::size_t width) const
    {
        return i < width || j < width || k < width || i >= dims_.nx - width || j >= dims_.ny - width ||
               k >= dims_.nz - width;
    }

    template <typename F>
    void for_each_band_cell(const BandRow& br, F&& f) const
    {
        const std::size_t nz = dims_.nz;
        if (br.full) {
            for (std::size_t k = 0; k < nz; ++k) {
                f(br.i, br.j, k, br.base + k);
            }
            return;
        }
        for (std::size_t k = 0; k < band_; ++k) {
            f(br.i, br.j, k, br.base + k);
        }
        for (std::size_t k = nz - band_; k < nz; ++k) {
            f(br.i, br.j, k, br.base + band_ + (k - (nz - band_)));
        }
    }

    /// Band slot of a cell known to lie in the band.
    std::size_t slot_of(std::size_t i, std::size_t j, std::size_t k) const
    {
        const BandRow& br = band_rows_[i * dims_.ny + j];
        if (br.full || k < band_) {
            return br.base + k;
        }
        return br.base + band_ + (k - (dims_.nz - band_));
    }

    void build_flags(const VoxelGrid& scene)
    {
        const std::size_t nx = dims_.nx, ny = dims_.ny, nz = dims_.nz;
        flags_.assign(dims_.count(), 0);
        row_flagged_.assign(nx * ny, 0);
        auto rigid = [&](long i, long j, long k) {
            if (i < 0 || j < 0 || k < 0 || i >= static_cast<long>(nx) || j >= static_cast<long>(ny) ||
                k >= static_cast<long>(nz)) {
                return false;
            }
            return scene.rigid(static_cast<std::size_t>(i), static_cast<std::size_t>(j), static_cast<std::size_t>(k));
        };
        for (std::size_t i = 0; i < nx; ++i) {
            for (std::size_t j = 0; j < ny; ++j) {
                for (std::size_t k = 0; k < nz; ++k) {
                    auto li = static_cast<long>(i), lj = static_cast<long>(j), lk = static_cast<long>(k);
                    std::uint8_t f = 0;
                    if (rigid(li, lj, lk)) {
                        f |= detail::rigid_self;
                    } else {
                        f |= rigid(li - 1, lj, lk) ? detail::rigid_xm : 0;
                        f |= rigid(li + 1, lj, lk) ? detail::rigid_xp : 0;
                        f |= rigid(li, lj - 1, lk) ? detail::rigid_ym : 0;
                        f |= rigid(li, lj + 1, lk) ? detail::rigid_yp : 0;
                        f |= rigid(li, lj, lk - 1) ? detail::rigid_zm : 0;
                        f |= rigid(li, lj, lk + 1) ? detail::rigid_zp : 0;
                    }
                    flags_[index(i, j, k)] = f;
                    if (f) {
                        row_flagged_[i * ny + j] = 1;
                    }
                }
            }
        }
    }

    /// Damping s(x) = peak * (depth / L)^2, depth measured from the PML's inner
    /// face in lattice units.
    double damping_at(double x, std::size_t n) const
    {
        if (layers_ == 0) {
            return 0.0;
        }
        auto L = static_cast<double>(layers_);
        double depth = std::max({0.0, L - x, x - (static_cast<double>(n) - L)}) / L;
        return config_.resolved_peak_damping() * depth * depth;
    }

    void build_coefficients()
    {
        const double dt = config_.dt();
        for (int a = 0; a < 3; ++a) {
            auto n = dims_[a];
            auto& co = coeff_[static_cast<std::size_t>(a)];
            co.cell_keep.resize(n);
            co.cell_gain.resize(n);
            co.face_keep.resize(n);
            co.face_gain.resize(n);
            for (std::size_t i = 0; i < n; ++i) {
                double sc = 0.5 * damping_at(static_cast<double>(i) + 0.5, n) * dt;
                co.cell_keep[i] = (1.0 - sc) / (1.0 + sc);
                co.cell_gain[i] = 1.0 / (1.0 + sc);
                double sf = 0.5 * damping_at(static_cast<double>(i) + 1.0, n) * dt;
                co.face_keep[i] = (1.0 - sf) / (1.0 + sf);
                co.face_gain[i] = courant2_ / (1.0 + sf);
            }
        }
    }

    void build_band_rows()
    {
        const std::size_t nx = dims_.nx, ny = dims_.ny, nz = dims_.nz;
        std::size_t base = 0;
        band_rows_.reserve(nx * ny);
        for (std::size_t i = 0; i < nx; ++i) {
            for (std::size_t j = 0; j < ny; ++j) {
                bool full = i < band_ || i >= nx - band_ || j < band_ || j >= ny - band_;
                band_rows_.push_back({i, j, full, base});
                base += full ? nz : 2 * band_;
            }
        }
        band_cells_ = base;
    }

    void update_faces(FieldState<Real>& s, std::size_t i, std::size_t j, std::size_t k, std::size_t slot) const
    {
        const std::size_t c = index(i, j, k);
        const bool self_shell = in_layer(i, j, k, shell_);
        const std::array<std::size_t, 3> pos{i, j, k};
        const std::array<std::size_t, 3> stride{dims_.ny * dims_.nz, dims_.nz, 1};
        const std::array<std::uint8_t, 3> rigid_up{detail::rigid_xp, detail::rigid_yp, detail::rigid_zp};
        for (std::size_t a = 0; a < 3; ++a) {
            Real& q = s.pml_face[3 * slot + a];
            if (pos[a] + 1 >= dims_[static_cast<int>(a)]) {
                q = Real(0);
                continue;
            }
            std::array<std::size_t, 3> up = pos;
            ++up[a];
            if (!self_shell && !in_layer(up[0], up[1], up[2], shell_)) {
                continue;
            }
            if ((flags_[c] & (detail::rigid_self | rigid_up[a])) != 0) {
                q = Real(0);
                continue;
            }
            const auto& co = coeff_[a];
            Real dp = s.p_curr[c + stride[a]] - s.p_curr[c];
            q = static_cast<Real>(co.face_keep[pos[a]]) * q - static_cast<Real>(co.face_gain[pos[a]]) * dp;
        }
    }

    void update_shell_pressure(FieldState<Real>& s, std::size_t i, std::size_t j, std::size_t k,
                               std::size_t slot) const
    {
        const std::size_t c = index(i, j, k);
        if (flags_[c] & detail::rigid_self) {
            return;
        }
        const std::array<std::size_t, 3> pos{i, j, k};
        Real total = 0;
        for (std::size_t a = 0; a < 3; ++a) {
            Real q_up = s.pml_face[3 * slot + a];
            Real q_down = 0;
            if (pos[a] > 0) {
                std::array<std::size_t, 3> dn = pos;
                --dn[a];
                q_down = s.pml_face[3 * slot_of(dn[0], dn[1], dn[2]) + a];
            }
            const auto& co = coeff_[a];
            Real& comp = s.pml_split[3 * slot + a];
            comp = static_cast<Real>(co.cell_keep[pos[a]]) * comp - static_cast<Real>(co.cell_gain[pos[a]]) * (q_up - q_down);
            total += comp;
        }
        s.p_prev[c] = total;
    }

    SimConfig config_;
    Dims dims_;
    std::size_t layers_ = 0;
    std::size_t shell_ = 1;
    std::size_t band_ = 2;
    double courant2_ = 0.0;
    std::vector<std::uint8_t> flags_;
    std::vector<std::uint8_t> row_flagged_;
    std::array<detail::AxisCoefficients, 3> coeff_;
    std::vector<BandRow> band_rows_;
    std::size_t band_cells_ = 0;
};

/// One time step of a standalone state against a scene. Builds a Propagator on
/// every call; long runs should hold a Propagator instead.
template <typename Real>
FieldState<Real> step(FieldState<Real> state, const VoxelGrid& scene, const SimConfig& config, int threads = 1)
{
    Propagator<Real> prop(scene, config);
    if (state.pml_split.empty() && state.pml_face.empty()) {
        state.pml_split.assign(3 * prop.band_cell_count(), Real(0));
        state.pml_face.assign(3 * prop.band_cell_count(), Real(0));
    }
    prop.step(state, threads);
    return state;
}

/// Raw little-endian f32 volume plus a JSON sidecar describing it.
template <typename Real>
void write_snapshot(const FieldState<Real>& s, const GridSpec& grid, const std::filesystem::path& dir)
{
    std::filesystem::create_directories(dir);
    std::string stem = "p_" + std::to_string(s.step_index);
    ByteWriter out;
    for (Real v : s.p_curr) {
        out.f32(static_cast<float>(v));
    }
    write_file(dir / (stem + ".f32"), out.bytes());
    nlohmann::json meta = {
        {"dims", {grid.dims.nx, grid.dims.ny, grid.dims.nz}},
        {"spacing_m", grid.spacing},
        {"origin_m", {grid.origin.x, grid.origin.y, grid.origin.z}},
        {"step", s.step_index},
        {"dtype", "f32le"},
        {"order", "z-fastest (index = (i*ny + j)*nz + k)"},
    };
    write_text_file(dir / (stem + ".json"), meta.dump(2));
}

/// Injects source_signal[n] at the source before step n, records every
/// receiver at that level, then advances. Traces have step_count() samples.
template <typename Real = double>
ReceiverTraces run(const VoxelGrid& scene, const SimConfig& config, std::span<const double> source_signal,
                   const RunOptions& options = {})
{
    Propagator<Real> prop(scene, config);
    auto state = prop.make_state();
    auto src = prop.stencil_at(config.source, "source");
    std::vector<detail::Stencil> rec;
    for (std::size_t r = 0; r < config.receivers.size(); ++r) {
        rec.push_back(prop.stencil_at(config.receivers[r], "receiver " + std::to_string(r)));
    }
    const std::size_t steps = config.step_count();
    ReceiverTraces out;
    out.sample_rate = config.sample_rate();
    out.traces.assign(rec.size(), std::vector<double>(steps, 0.0));

    for (std::size_t n = 0; n < steps; ++n) {
        if (n < source_signal.size() && source_signal[n] != 0.0) {
            prop.inject(state, src, source_signal[n]);
        }
        for (std::size_t r = 0; r < rec.size(); ++r) {
            double v = prop.sample(state, rec[r]);
            if (!std::isfinite(v)) {
                throw InstabilityError("non-finite pressure at receiver " + std::to_string(r), n);
            }
            out.traces[r][n] = v;
        }
        if (options.scan_interval > 0 && n > 0 && n % options.scan_interval == 0 &&
            std::isnan(prop.max_abs(state, options.threads))) {
            throw InstabilityError("non-finite pressure in field", n);
        }
        const auto& snaps = options.snapshot.steps;
        if (!snaps.empty() && std::find(snaps.begin(), snaps.end(), n) != snaps.end()) {
            write_snapshot(state, config.grid(), options.snapshot.dir);
        }
        prop.step(state, options.threads);
    }
    return out;
}

/// Band-limited source pulse: a Gaussian (or its second derivative, a Ricker
/// wavelet) centred `delay` samples in, whose spectrum is 40 dB down at f_max.
struct Pulse {
    std::vector<double> samples;
    std::size_t delay = 0;
};

/// f_max <= 0 selects ten cells per wavelength.
inline Pulse gaussian_pulse(const SimConfig& config, double f_max = 0.0, bool ricker = false)
{
    if (!(f_max > 0.0)) {
        f_max = config.sound_speed / (10.0 * config.spacing);
    }
    double sigma = std::sqrt(2.0 * std::log(100.0)) / (2.0 * std::numbers::pi * f_max) / config.dt();
    Pulse p;
    p.delay = static_cast<std::size_t>(std::ceil(5.0 * sigma));
    p.samples.resize(2 * p.delay + 1);
    for (std::size_t n = 0; n < p.samples.size(); ++n) {
        double x = (static_cast<double>(n) - static_cast<double>(p.delay)) / sigma;
        p.samples[n] = (ricker ? 1.0 - x * x : 1.0) * std::exp(-0.5 * x * x);
    }
    return p;
}

/// One-sample unit impulse of the given length.
inline std::vector<double> unit_impulse(std::size_t length = 1)
{
    std::vector<double> s(std::max<std::size_t>(length, 1), 0.0);
    s[0] = 1.0;
    return s;
}

} // namespace echotrain::fdtd
