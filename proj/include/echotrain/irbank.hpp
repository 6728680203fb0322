#pragma once

// Per-cell binaural echo impulse responses and their on-disk container.
//
// Container layout (little-endian):
//   "EIRB" u16 version=1 u16 flags u32 cols u32 rows u32 entry_count
//   f64 sample_rate_hz, 32-byte sim fingerprint,
//   entry_count x { u32 cell_index, u32 N, N x f32 left, N x f32 right },
//   u32 CRC32 of everything before it.
// flags bit 0: direct path removed. A JSON sidecar (<file>.json) carries the
// target id, head id and cell size.

#include <array>
#include <cmath>
#include <filesystem>
#include <functional>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <boost/crc.hpp>
#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "echotrain/bytes.hpp"
#include "echotrain/errors.hpp"
#include "echotrain/fdtd.hpp"
#include "echotrain/geometry.hpp"
#include "echotrain/stl.hpp"
#include "echotrain/voxel.hpp"

namespace echotrain::irbank {

using geometry::HeadModel;
using geometry::TargetSpec;
using geometry::Vec3;

using Fingerprint = std::array<std::uint8_t, 32>;

inline constexpr std::uint16_t bank_version = 1;
inline constexpr std::uint16_t flag_direct_removed = 1;

struct ImpulseResponsePair {
    std::uint32_t cell_index = 0;
    std::vector<float> left;
    std::vector<float> right;
    double sample_rate = 0.0;

    bool operator==(const ImpulseResponsePair&) const = default;
};

struct IRBank {
    std::string target_id;
    std::string head_id;
    std::uint32_t cols = 0;
    std::uint32_t rows = 0;
    double cell_size = geometry::default_cell_size;
    double sample_rate = 0.0;
    bool direct_removed = true;
    Fingerprint sim_fingerprint{};
    std::map<std::uint32_t, ImpulseResponsePair> entries;

    bool operator==(const IRBank&) const = default;

    const ImpulseResponsePair& at(std::uint32_t cell) const
    {
        auto it = entries.find(cell);
        if (it == entries.end()) {
            throw NotFoundError("bank '" + target_id + "' has no entry for cell " + std::to_string(cell));
        }
        return it->second;
    }

    /// Throws unless the entries are exactly the occupied cells of mask.
    void check_complete(const geometry::ShapeMask& mask) const
    {
        if (mask.cols() != cols || mask.rows() != rows) {
            throw ValidationError("bank grid " + std::to_string(cols) + "x" + std::to_string(rows) +
                                  " does not match the target mask");
        }
        auto cells = mask.occupied_indices();
        if (cells.size() != entries.size()) {
            throw ValidationError("bank has " + std::to_string(entries.size()) + " entries for " +
                                  std::to_string(cells.size()) + " occupied cells");
        }
        for (auto c : cells) {
            if (!entries.contains(static_cast<std::uint32_t>(c))) {
                throw ValidationError("bank is missing cell " + std::to_string(c));
            }
        }
    }
};

inline std::string to_hex(const Fingerprint& f)
{
    static constexpr char digits[] = "0123456789abcdef";
    std::string s;
    for (auto b : f) {
        s += digits[b >> 4];
        s += digits[b & 15];
    }
    return s;
}

inline Fingerprint sha256(std::span<const std::uint8_t> data)
{
    Fingerprint out{};
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), out.data(), &len, EVP_sha256(), nullptr) != 1 || len != out.size()) {
        throw Error("SHA-256 digest failed");
    }
    return out;
}

inline std::uint32_t crc32(std::span<const std::uint8_t> data)
{
    boost::crc_32_type crc;
    crc.process_bytes(data.data(), data.size());
    return crc.checksum();
}

// ---------------------------------------------------------------------------
// Generation

struct BankOptions {
    /// Probes sit this many grid spacings out from the head surface along the
    /// marker directions.
    double standoff_cells = 2.0;
    bool remove_direct = true;
    /// Empty selects a one-sample unit impulse.
    std::vector<double> source_signal;
    int threads = 1;
    std::function<void(std::size_t done, std::size_t total)> progress;
};

inline nlohmann::json to_json(const Vec3& v) { return nlohmann::json::array({v.x, v.y, v.z}); }

/// Canonical description hashed into the bank fingerprint.
inline nlohmann::json fingerprint_document(const TargetSpec& target, const HeadModel& head,
                                           const fdtd::SimConfig& config, const BankOptions& options)
{
    nlohmann::json sim = {
        {"sound_speed", config.sound_speed},
        {"spacing", config.spacing},
        {"cfl", config.cfl},
        {"domain_extent", to_json(config.domain_extent)},
        {"origin", to_json(config.origin)},
        {"pml_layers", config.pml_layers},
        {"pml_peak_damping", config.resolved_peak_damping()},
        {"steps", config.step_count()},
    };
    nlohmann::json tgt = {
        {"id", target.id},
        {"mask", target.mask.to_text()},
        {"cell_size", target.cell_size},
        {"panel_thickness", target.panel_thickness},
        {"origin", to_json(target.placement.origin)},
        {"u", to_json(target.placement.u)},
        {"v", to_json(target.placement.v)},
    };
    nlohmann::json hd = {
        {"id", head.id},
        {"mouth", to_json(head.mouth)},
        {"ear_left", to_json(head.ear_left)},
        {"ear_right", to_json(head.ear_right)},
        {"mouth_dir", to_json(head.mouth_dir)},
        {"ear_left_dir", to_json(head.ear_left_dir)},
        {"ear_right_dir", to_json(head.ear_right_dir)},
    };
    nlohmann::json opt = {
        {"standoff_cells", options.standoff_cells},
        {"remove_direct", options.remove_direct},
        {"source_signal", options.source_signal},
    };
    return {{"sim", sim}, {"target", tgt}, {"head", hd}, {"options", opt}};
}

inline Fingerprint compute_fingerprint(const TargetSpec& target, const HeadModel& head, const fdtd::SimConfig& config,
                                       const BankOptions& options)
{
    Bytes data;
    auto doc = fingerprint_document(target, head, config, options).dump();
    data.insert(data.end(), doc.begin(), doc.end());
    if (!head.mesh.empty()) {
        auto mesh = geometry::serialize_stl_binary(head.mesh);
        data.insert(data.end(), mesh.begin() + 80, mesh.end());
    }
    return sha256(data);
}

/// Resolved panel thickness: zero means two grid spacings.
inline TargetSpec with_thickness(TargetSpec target, double spacing)
{
    if (!(target.panel_thickness > 0.0)) {
        target.panel_thickness = 2.0 * spacing;
    }
    return target;
}

/// Places a target and a head in the domain: the panel faces -y with columns
/// along +x and rows down -z, its centre on the domain's x/z mid-planes, and the
/// head sits `distance` metres in front of it with the mouth on the panel centre
/// line. Everything is snapped to lattice planes so mirror symmetry about the
/// mid-plane is exact.
inline std::pair<TargetSpec, HeadModel> arrange_scene(TargetSpec target, const HeadModel& head,
                                                      const fdtd::SimConfig& config, double distance)
{
    config.validate();
    if (!(distance > 0.0)) {
        throw ConfigError("head-to-target distance must be positive");
    }
    target = with_thickness(std::move(target), config.spacing);
    const double h = config.spacing;
    const auto dims = config.dims();
    auto lattice = [&](double value) { return std::round(value / h) * h; };
    Vec3 lo = config.origin;
    double cx = lo.x + 0.5 * static_cast<double>(dims.nx) * h;
    double cz = lo.z + 0.5 * static_cast<double>(dims.nz) * h;

    double behind = head.mesh.empty() ? 0.0 : head.mouth.y - head.mesh.bounds().first.y;
    double span = behind + distance + target.panel_thickness;
    double ymid = lo.y + 0.5 * static_cast<double>(dims.ny) * h;
    double face_y = lo.y + lattice(ymid - lo.y - 0.5 * span + behind + distance);

    target.placement.u = {1.0, 0.0, 0.0};
    target.placement.v = {0.0, 0.0, 1.0};
    target.placement.origin = {cx, face_y, cz};
    Vec3 mouth_at{cx, face_y - distance, cz};
    return {target, head.translated(mouth_at - head.mouth)};
}

namespace detail {

inline Vec3 probe(const Vec3& marker, const Vec3& dir, double lift)
{
    double n = geometry::norm(dir);
    return n > 0.0 ? marker + dir * (lift / n) : marker;
}

inline std::string fmt_vec(const Vec3& v)
{
    return "(" + std::to_string(v.x) + ", " + std::to_string(v.y) + ", " + std::to_string(v.z) + ")";
}

} // namespace detail

/// Voxelized scene for one cell: the head is translated within the panel
/// plane so its mouth faces the cell centre, and the probes are placed.
struct CellScene {
    HeadModel head;
    geometry::VoxelGrid head_voxels;
    geometry::VoxelGrid scene;
    fdtd::SimConfig config;
};

inline CellScene cell_scene(const TargetSpec& target_in, const HeadModel& head, const fdtd::SimConfig& config,
                            const BankOptions& options, std::uint32_t cell)
{
    config.validate();
    TargetSpec target = with_thickness(target_in, config.spacing);
    target.validate();
    auto col = cell % target.mask.cols();
    auto row = cell / target.mask.cols();
    if (cell >= target.mask.size() || !target.mask.at(col, row)) {
        throw ValidationError("cell " + std::to_string(cell) + " is not an occupied cell of target '" +
                              target.id + "'");
    }
    auto [u, v] = target.cell_offset(col, row);
    Vec3 center = target.to_world(u, v, 0.0);
    Vec3 n = geometry::normalized(target.placement.normal());
    Vec3 d = center - head.mouth;
    d = d - n * geometry::dot(d, n);

    const auto grid = config.grid();
    const std::string where = "cell " + std::to_string(cell) + ": ";
    CellScene cs{head.translated(d), geometry::VoxelGrid(grid), geometry::VoxelGrid(grid), config};
    try {
        cs.head_voxels = geometry::voxelize(cs.head.mesh, grid);
        cs.scene = geometry::voxelize(geometry::target_panel(target), grid);
    } catch (const GeometryError& e) {
        throw GeometryError(where + e.what());
    }
    if (auto overlap = cs.scene.overlap_count(cs.head_voxels); overlap > 0) {
        throw GeometryError(where + "head intersects target '" + target.id + "' in " + std::to_string(overlap) +
                            " voxels");
    }
    cs.scene.merge(cs.head_voxels);

    const double lift = options.standoff_cells * config.spacing;
    cs.config.source = detail::probe(cs.head.mouth, cs.head.mouth_dir, lift);
    cs.config.receivers = {detail::probe(cs.head.ear_left, cs.head.ear_left_dir, lift),
                           detail::probe(cs.head.ear_right, cs.head.ear_right_dir, lift)};
    return cs;
}

/// Simulates one cell. Left/right traces come from the left/right ear probes;
/// with remove_direct the head-only run is subtracted. Samples are rounded to
/// float, the container precision.
inline ImpulseResponsePair generate_cell(const TargetSpec& target, const HeadModel& head,
                                         const fdtd::SimConfig& config, const BankOptions& options,
                                         std::uint32_t cell)
{
    auto cs = cell_scene(target, head, config, options, cell);
    const std::string where = "cell " + std::to_string(cell) + ": ";
    auto signal = options.source_signal.empty() ? fdtd::unit_impulse() : options.source_signal;
    fdtd::RunOptions ro;
    ro.threads = options.threads;

    fdtd::ReceiverTraces full, direct;
    try {
        full = fdtd::run(cs.scene, cs.config, signal, ro);
        if (options.remove_direct) {
            direct = fdtd::run(cs.head_voxels, cs.config, signal, ro);
        }
    } catch (const InstabilityError& e) {
        throw InstabilityError(where + e.message(), e.step());
    } catch (const ValidationError& e) {
        throw ValidationError(where + e.what() + " (source at " + detail::fmt_vec(cs.config.source) + ")");
    }

    ImpulseResponsePair ir;
    ir.cell_index = cell;
    ir.sample_rate = full.sample_rate;
    auto pack = [&](std::size_t r) {
        std::vector<float> out(full.traces[r].size());
        for (std::size_t i = 0; i < out.size(); ++i) {
            double v = full.traces[r][i] - (options.remove_direct ? direct.traces[r][i] : 0.0);
            out[i] = static_cast<float>(v);
        }
        return out;
    };
    ir.left = pack(0);
    ir.right = pack(1);
    return ir;
}

/// One entry per occupied cell, in row-major order.
inline IRBank generate_ir_bank(const TargetSpec& target_in, const HeadModel& head, const fdtd::SimConfig& config,
                               const BankOptions& options = {})
{
    config.validate();
    TargetSpec target = with_thickness(target_in, config.spacing);
    target.validate();
    IRBank bank;
    bank.target_id = target.id;
    bank.head_id = head.id;
    bank.cols = static_cast<std::uint32_t>(target.mask.cols());
    bank.rows = static_cast<std::uint32_t>(target.mask.rows());
    bank.cell_size = target.cell_size;
    bank.sample_rate = config.sample_rate();
    bank.direct_removed = options.remove_direct;
    bank.sim_fingerprint = compute_fingerprint(target, head, config, options);
    auto cells = target.mask.occupied_indices();
    for (std::size_t n = 0; n < cells.size(); ++n) {
        auto c = static_cast<std::uint32_t>(cells[n]);
        bank.entries.emplace(c, generate_cell(target, head, config, options, c));
        if (options.progress) {
            options.progress(n + 1, cells.size());
        }
    }
    return bank;
}

// ---------------------------------------------------------------------------
// Container

inline Bytes encode_bank(const IRBank& bank)
{
    if (bank.entries.empty()) {
        throw ValidationError("bank '" + bank.target_id + "' has no entries");
    }
    if (!(bank.sample_rate > 0.0)) {
        throw ValidationError("bank sample rate must be positive");
    }
    ByteWriter out;
    out.raw(std::string_view("EIRB"));
    out.u16(bank_version);
    out.u16(bank.direct_removed ? flag_direct_removed : 0);
    out.u32(bank.cols);
    out.u32(bank.rows);
    out.u32(static_cast<std::uint32_t>(bank.entries.size()));
    out.f64(bank.sample_rate);
    out.raw(bank.sim_fingerprint);
    std::uint64_t cells = std::uint64_t{bank.cols} * bank.rows;
    for (const auto& [cell, ir] : bank.entries) {
        if (cell >= cells) {
            throw ValidationError("cell index " + std::to_string(cell) + " outside the bank grid");
        }
        if (ir.left.size() != ir.right.size()) {
            throw ValidationError("cell " + std::to_string(cell) + " has unequal channel lengths");
        }
        out.u32(cell);
        out.u32(static_cast<std::uint32_t>(ir.left.size()));
        for (float v : ir.left) {
            out.f32(v);
        }
        for (float v : ir.right) {
            out.f32(v);
        }
    }
    out.u32(crc32(out.bytes()));
    return std::move(out).take();
}

/// Parses a container. Identity fields absent from the binary (target id, head
/// id, cell size) are left at their defaults.
inline IRBank decode_bank(std::span<const std::uint8_t> data)
{
    if (data.size() < 4) {
        throw ParseError("truncated bank header", data.size());
    }
    ByteReader in(data, data.size() - 4);
    auto magic = in.raw(4);
    if (std::string_view(reinterpret_cast<const char*>(magic.data()), 4) != "EIRB") {
        throw ParseError("bad magic, not an EIRB bank", 0);
    }
    IRBank bank;
    {
        auto version = in.u16();
        if (version != bank_version) {
            throw ParseError("unsupported bank version " + std::to_string(version), 4);
        }
        auto flags = in.u16();
        bank.direct_removed = (flags & flag_direct_removed) != 0;
        bank.cols = in.u32();
        bank.rows = in.u32();
        auto count = in.u32();
        bank.sample_rate = in.f64();
        auto fp = in.raw(32);
        std::copy(fp.begin(), fp.end(), bank.sim_fingerprint.begin());
        if (!(bank.sample_rate > 0.0) || !std::isfinite(bank.sample_rate)) {
            throw ParseError("invalid sample rate", 20);
        }
        if (count == 0) {
            throw ParseError("bank has no entries", 16);
        }
        std::uint64_t cells = std::uint64_t{bank.cols} * bank.rows;
        for (std::uint32_t e = 0; e < count; ++e) {
            std::size_t start = in.offset();
            std::optional<std::uint32_t> cell;
            try {
                cell = in.u32();
                auto n = in.u32();
                ImpulseResponsePair ir;
                ir.cell_index = *cell;
                ir.sample_rate = bank.sample_rate;
                ir.left.resize(n);
                ir.right.resize(n);
                if (!in.can_read(std::size_t{8} * n)) {
                    throw ParseError("unexpected end of data", in.offset());
                }
                for (auto& v : ir.left) {
                    v = in.f32();
                }
                for (auto& v : ir.right) {
                    v = in.f32();
                }
                if (*cell >= cells) {
                    throw ParseError("cell index " + std::to_string(*cell) + " outside the bank grid", start);
                }
                for (std::size_t i = 0; i < n; ++i) {
                    if (!std::isfinite(ir.left[i]) || !std::isfinite(ir.right[i])) {
                        throw ValidationError("non-finite sample " + std::to_string(i) + " in cell " +
                                              std::to_string(*cell));
                    }
                }
                if (!bank.entries.emplace(*cell, std::move(ir)).second) {
                    throw ParseError("duplicate entry for cell " + std::to_string(*cell), start);
                }
            } catch (const ParseError& err) {
                if (std::string_view(err.what()).find("unexpected end of data") == std::string_view::npos) {
                    throw;
                }
                std::string which = cell ? "cell " + std::to_string(*cell) : "entry " + std::to_string(e);
                throw ParseError("truncated bank: data for " + which + " is incomplete", err.offset());
            }
        }
    }
    if (in.remaining() != 0) {
        throw ParseError(std::to_string(in.remaining()) + " unexpected bytes after the last entry", in.offset());
    }
    ByteReader tail(data);
    tail.raw(data.size() - 4);
    auto stored = tail.u32();
    auto actual = crc32(data.first(data.size() - 4));
    if (stored != actual) {
        throw ParseError("CRC mismatch", data.size() - 4);
    }
    return bank;
}

inline std::filesystem::path sidecar_path(const std::filesystem::path& bank_path)
{
    auto p = bank_path;
    p += ".json";
    return p;
}

inline void save_bank(const IRBank& bank, const std::filesystem::path& path)
{
    auto bytes = encode_bank(bank);
    write_file(path, bytes);
    nlohmann::json side = {
        {"target_id", bank.target_id},
        {"head_id", bank.head_id},
        {"cell_size_m", bank.cell_size},
        {"fingerprint", to_hex(bank.sim_fingerprint)},
    };
    write_text_file(sidecar_path(path), side.dump(2) + "\n");
}

/// Loads and validates a bank. When `expected` is given and differs from the
/// stored fingerprint a warning is appended (the bank is still returned).
inline IRBank load_bank(const std::filesystem::path& path, const Fingerprint* expected = nullptr,
                        std::vector<std::string>* warnings = nullptr)
{
    auto bytes = read_file(path);
    IRBank bank;
    try {
        bank = decode_bank(bytes);
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what(), e.offset());
    }
    bank.target_id = path.stem().string();
    auto side = sidecar_path(path);
    if (std::filesystem::exists(side)) {
        try {
            auto j = nlohmann::json::parse(read_text_file(side));
            bank.target_id = j.value("target_id", bank.target_id);
            bank.head_id = j.value("head_id", bank.head_id);
            bank.cell_size = j.value("cell_size_m", bank.cell_size);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(side.string() + ": " + e.what(), 0);
        }
    }
    if (expected && *expected != bank.sim_fingerprint && warnings) {
        warnings->push_back("bank " + path.string() + " was built with fingerprint " +
                            to_hex(bank.sim_fingerprint) + ", expected " + to_hex(*expected));
    }
    return bank;
}

// ---------------------------------------------------------------------------
// Resampling

/// Kaiser-windowed sinc interpolation at an arbitrary rate ratio. The passband
/// edge sits at 90% of the lower Nyquist rate; gain is unity in the passband.
inline std::vector<double> resample(std::span<const double> x, double in_rate, double out_rate,
                                    int zero_crossings = 32, double beta = 9.0)
{
    if (!(in_rate > 0.0) || !(out_rate > 0.0)) {
        throw ValidationError("sample rates must be positive");
    }
    if (in_rate == out_rate) {
        return {x.begin(), x.end()};
    }
    double ratio = out_rate / in_rate;
    double exact = static_cast<double>(x.size()) * ratio;
    auto m = static_cast<std::size_t>(std::llround(exact));
    if (std::abs(exact - static_cast<double>(m)) > 1e-9 * std::max(1.0, exact)) {
        m = static_cast<std::size_t>(std::ceil(exact));
    }
    const double fc = 0.45 * std::min(in_rate, out_rate);
    const double half = zero_crossings / (2.0 * fc);
    const double i0b = std::cyl_bessel_i(0.0, beta);
    const double gain = 2.0 * fc / in_rate;
    std::vector<double> y(m, 0.0);
    for (std::size_t k = 0; k < m; ++k) {
        double t = static_cast<double>(k) / out_rate;
        double centre = t * in_rate;
        auto lo = static_cast<long>(std::ceil(centre - half * in_rate));
        auto hi = static_cast<long>(std::floor(centre + half * in_rate));
        lo = std::max(lo, 0L);
        hi = std::min(hi, static_cast<long>(x.size()) - 1);
        double acc = 0.0;
        for (long n = lo; n <= hi; ++n) {
            double tau = t - static_cast<double>(n) / in_rate;
            double r = tau / half;
            if (std::abs(r) >= 1.0) {
                continue;
            }
            double arg = 2.0 * fc * tau;
            double sinc = arg == 0.0 ? 1.0 : std::sin(std::numbers::pi * arg) / (std::numbers::pi * arg);
            double w = std::cyl_bessel_i(0.0, beta * std::sqrt(1.0 - r * r)) / i0b;
            acc += x[static_cast<std::size_t>(n)] * sinc * w;
        }
        y[k] = gain * acc;
    }
    return y;
}

inline ImpulseResponsePair resample_ir(const ImpulseResponsePair& ir, double out_rate)
{
    if (!(out_rate > 0.0)) {
        throw ValidationError("output rate must be positive");
    }
    if (ir.sample_rate == out_rate) {
        return ir;
    }
    auto channel = [&](const std::vector<float>& c) {
        std::vector<double> in(c.begin(), c.end());
        auto out = resample(in, ir.sample_rate, out_rate);
        return std::vector<float>(out.begin(), out.end());
    };
    ImpulseResponsePair r;
    r.cell_index = ir.cell_index;
    r.sample_rate = out_rate;
    r.left = channel(ir.left);
    r.right = channel(ir.right);
    return r;
}

} // namespace echotrain::irbank
