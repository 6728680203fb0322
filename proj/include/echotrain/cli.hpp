#pragma once

// Command-line front end. run_cli is the whole program and is callable
// in-process: exit 0 on success, 1 on a domain error, 2 on a usage error.

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "echotrain/analytics.hpp"
#include "echotrain/config.hpp"
#include "echotrain/irbank.hpp"
#include "echotrain/server.hpp"
#include "echotrain/session.hpp"
#include "echotrain/stl.hpp"
#include "echotrain/synth.hpp"
#include "echotrain/voxel.hpp"

namespace echotrain::cli {

namespace fs = std::filesystem;
using nlohmann::json;

struct Common {
    std::string root;
    bool dry_run = false;
};

/// Flag overrides for scenario parameters; unset flags leave the file's values.
struct Overrides {
    std::string scenario;
    std::optional<double> spacing, cfl, sound_speed, duration, distance, pml_damping;
    std::vector<double> domain;
    std::optional<int> pml_layers, threads;
    std::optional<std::string> source;
    std::optional<double> f_start, f_end, chirp_duration, sample_rate, amplitude, onset_interval;
    std::optional<int> repeat_count;
};

inline void add_common(CLI::App* app, Common& c)
{
    app->add_option("--root", c.root, "Workspace root (default: $ECHOTRAIN_ROOT or the current directory)");
    app->add_flag("--dry-run", c.dry_run, "Validate inputs without writing anything");
}

inline void add_sim_flags(CLI::App* app, Overrides& o)
{
    app->add_option("--scenario", o.scenario, "Scenario JSON (default: <root>/scenario.json)");
    app->add_option("--spacing", o.spacing, "Grid spacing h [m]");
    app->add_option("--cfl", o.cfl, "Courant number c*dt/h [-], at most 1/sqrt(3)");
    app->add_option("--sound-speed", o.sound_speed, "Speed of sound [m/s]");
    app->add_option("--domain", o.domain, "Domain extent [m]: one value for a cube or three for x y z")
        ->expected(1, 3);
    app->add_option("--pml-layers", o.pml_layers, "PML thickness [cells]");
    app->add_option("--pml-damping", o.pml_damping, "PML peak damping [1/s]; 0 = 60 dB one-way");
    app->add_option("--duration", o.duration, "Simulated time per run [s]; 0 = two domain diagonals");
    app->add_option("--distance", o.distance, "Mouth to target plane distance [m]");
    app->add_option("--threads", o.threads, "Solver threads");
    app->add_option("--source", o.source, "Source signal: impulse or gaussian");
}

inline void add_stimulus_flags(CLI::App* app, Overrides& o)
{
    app->add_option("--f-start", o.f_start, "Chirp start frequency [Hz]");
    app->add_option("--f-end", o.f_end, "Chirp end frequency [Hz]");
    app->add_option("--chirp-duration", o.chirp_duration, "Chirp length [s]");
    app->add_option("--sample-rate", o.sample_rate, "Audio sample rate [Hz]");
    app->add_option("--amplitude", o.amplitude, "Peak output level, fraction of full scale");
    app->add_option("--repeat-count", o.repeat_count, "Chirps per buzz");
    app->add_option("--onset-interval", o.onset_interval, "Buzz onset spacing [s]");
}

inline config::Scenario resolve_scenario(const config::Workspace& ws, const Overrides& o, std::ostream& err)
{
    config::Scenario s;
    if (!o.scenario.empty()) {
        s = config::load_scenario(o.scenario);
    } else if (fs::exists(ws.scenario_file())) {
        s = config::load_scenario(ws.scenario_file());
    } else {
        err << "note: no scenario.json in " << ws.root().string() << ", using the desk-scale defaults\n";
        s = config::desk_scenario();
    }
    if (o.spacing) s.sim.spacing = *o.spacing;
    if (o.cfl) s.sim.cfl = *o.cfl;
    if (o.sound_speed) s.sim.sound_speed = *o.sound_speed;
    if (o.duration) s.sim.duration = *o.duration;
    if (o.pml_layers) s.sim.pml_layers = *o.pml_layers;
    if (o.pml_damping) s.sim.pml_peak_damping = *o.pml_damping;
    if (o.distance) s.distance = *o.distance;
    if (o.threads) s.threads = *o.threads;
    if (o.source) s.source = *o.source;
    if (o.domain.size() == 1) {
        s.sim.domain_extent = {o.domain[0], o.domain[0], o.domain[0]};
    } else if (o.domain.size() == 3) {
        s.sim.domain_extent = {o.domain[0], o.domain[1], o.domain[2]};
    } else if (!o.domain.empty()) {
        throw ConfigError("--domain takes one or three values");
    }
    if (o.f_start) s.chirp.f_start = *o.f_start;
    if (o.f_end) s.chirp.f_end = *o.f_end;
    if (o.chirp_duration) s.chirp.duration = *o.chirp_duration;
    if (o.sample_rate) s.chirp.sample_rate = *o.sample_rate;
    if (o.amplitude) s.chirp.amplitude = *o.amplitude;
    if (o.repeat_count) s.buzz.repeat_count = *o.repeat_count;
    if (o.onset_interval) s.buzz.onset_interval = *o.onset_interval;
    s.validate();
    return s;
}

/// Target and head placed in the scenario's domain.
inline std::pair<geometry::TargetSpec, geometry::HeadModel> placed(const config::Scenario& s,
                                                                   geometry::TargetSpec target)
{
    if (!(target.panel_thickness > 0.0)) {
        target.panel_thickness = s.panel_thickness;
    }
    return irbank::arrange_scene(std::move(target), config::build_head(s), s.sim, s.distance);
}

inline geometry::ShapeMask read_mask(const fs::path& p)
{
    return geometry::ShapeMask::from_text(read_text_file(p));
}

// ---------------------------------------------------------------------------

inline int cmd_init(const Common& c, bool force, std::ostream& out)
{
    auto ws = config::Workspace::locate(c.root);
    if (c.dry_run) {
        out << json{{"root", ws.root().string()}, {"targets", config::default_targets().size()}}.dump() << "\n";
        return 0;
    }
    auto files = ws.init(force);
    json list = json::array();
    for (const auto& f : files) {
        list.push_back(f.string());
    }
    out << json{{"root", ws.root().string()}, {"written", list}}.dump(2) << "\n";
    return 0;
}

struct VoxelizeArgs {
    std::string target, stl, out;
    std::optional<std::uint32_t> cell;
};

inline int cmd_voxelize(const Common& c, const Overrides& o, const VoxelizeArgs& a, std::ostream& out,
                        std::ostream& err)
{
    auto ws = config::Workspace::locate(c.root);
    auto s = resolve_scenario(ws, o, err);
    if (a.target.empty() == a.stl.empty()) {
        throw ConfigError("give exactly one of --target or --stl");
    }
    geometry::VoxelGrid grid;
    geometry::VoxelizeReport report;
    std::string name;
    if (!a.stl.empty()) {
        auto mesh = geometry::parse_stl(read_file(a.stl), fs::path(a.stl).stem().string());
        grid = geometry::voxelize(mesh, s.sim.grid(), &report);
        name = fs::path(a.stl).stem().string();
    } else {
        auto [target, head] = placed(s, ws.target(a.target));
        auto cells = target.mask.occupied_indices();
        auto cell = a.cell ? *a.cell : static_cast<std::uint32_t>(cells.front());
        auto cs = irbank::cell_scene(target, head, s.sim, s.bank_options(), cell);
        report.watertight = true;
        grid = std::move(cs.scene);
        name = a.target + "_cell" + std::to_string(cell);
    }
    const auto& d = grid.dims();
    json info = {
        {"name", name},
        {"dims", {d.nx, d.ny, d.nz}},
        {"spacing_m", grid.spec.spacing},
        {"origin_m", config::vec_json(grid.spec.origin)},
        {"occupied", grid.occupied_count()},
        {"watertight", report.watertight},
        {"warnings", report.warnings},
        {"order", "z-fastest (index = (i*ny + j)*nz + k)"},
    };
    for (const auto& w : report.warnings) {
        err << "warning: " << w << "\n";
    }
    if (!c.dry_run) {
        fs::path base = a.out.empty() ? ws.reports() / "voxels" / name : fs::path(a.out);
        auto raw = base;
        raw += ".u8";
        auto meta = base;
        meta += ".json";
        write_file(raw, grid.occupancy);
        write_text_file(meta, info.dump(2) + "\n");
        info["file"] = raw.string();
    }
    out << info.dump(2) << "\n";
    return 0;
}

inline int cmd_bank(const Common& c, const Overrides& o, const std::string& target_id, bool force,
                    std::ostream& out, std::ostream& err)
{
    auto ws = config::Workspace::locate(c.root);
    auto s = resolve_scenario(ws, o, err);
    auto [target, head] = placed(s, ws.target(target_id));
    auto options = s.bank_options();
    auto fp = irbank::compute_fingerprint(irbank::with_thickness(target, s.sim.spacing), head, s.sim, options);
    auto path = ws.bank_file(target_id);
    const auto cells = target.mask.occupied_indices();

    if (fs::exists(path) && !force) {
        auto existing = irbank::load_bank(path);
        if (existing.sim_fingerprint == fp) {
            out << json{{"target", target_id}, {"path", path.string()}, {"status", "up to date"},
                        {"fingerprint", irbank::to_hex(fp)}}
                       .dump(2)
                << "\n";
            return 0;
        }
        throw Error("bank " + path.string() + " exists and was built from different inputs; use --force to rebuild");
    }
    if (c.dry_run) {
        for (auto cell : cells) {
            irbank::cell_scene(target, head, s.sim, options, static_cast<std::uint32_t>(cell));
        }
        const auto d = s.sim.dims();
        out << json{{"target", target_id},
                    {"cells", cells.size()},
                    {"grid", {d.nx, d.ny, d.nz}},
                    {"steps", s.sim.step_count()},
                    {"sample_rate_hz", s.sim.sample_rate()},
                    {"runs", cells.size() * (options.remove_direct ? 2 : 1)},
                    {"fingerprint", irbank::to_hex(fp)}}
                   .dump(2)
            << "\n";
        return 0;
    }
    ws.ensure();
    options.progress = [&](std::size_t done, std::size_t total) {
        err << "bank " << target_id << ": cell " << done << "/" << total << "\n";
    };
    auto bank = irbank::generate_ir_bank(target, head, s.sim, options);
    irbank::save_bank(bank, path);
    out << json{{"target", target_id},
                {"path", path.string()},
                {"entries", bank.entries.size()},
                {"samples", bank.entries.begin()->second.left.size()},
                {"sample_rate_hz", bank.sample_rate},
                {"fingerprint", irbank::to_hex(bank.sim_fingerprint)}}
               .dump(2)
        << "\n";
    return 0;
}

inline int cmd_synth(const Common& c, const Overrides& o, const std::string& target_id, std::ostream& out,
                     std::ostream& err)
{
    auto ws = config::Workspace::locate(c.root);
    auto s = resolve_scenario(ws, o, err);
    auto target = ws.target(target_id);
    auto path = ws.bank_file(target_id);
    if (!fs::exists(path)) {
        throw NotFoundError("no bank for '" + target_id + "' at " + path.string() + " (run 'echotrain bank')");
    }
    auto bank = irbank::load_bank(path);
    bank.check_complete(target.mask);
    if (c.dry_run) {
        out << json{{"target", target_id}, {"entries", bank.entries.size()}, {"files", target.mask.size()}}.dump(2)
            << "\n";
        return 0;
    }
    auto rendered = synth::render_bank(bank, s.chirp, s.buzz);
    const std::size_t frames = rendered.begin()->second.frames();
    auto dir = ws.asset_dir(target_id);
    fs::create_directories(dir);
    for (std::size_t cell = 0; cell < target.mask.size(); ++cell) {
        synth::BinauralBuffer b;
        if (auto it = rendered.find(static_cast<std::uint32_t>(cell)); it != rendered.end()) {
            b = it->second;
        } else {
            // Empty cells get silence of the same length so file sizes reveal nothing.
            b.sample_rate = s.chirp.sample_rate;
            b.left.assign(frames, 0.0);
            b.right.assign(frames, 0.0);
        }
        write_file(dir / (std::to_string(cell) + ".wav"), synth::encode_wav(b));
    }
    out << json{{"target", target_id},
                {"dir", dir.string()},
                {"files", target.mask.size()},
                {"frames", frames},
                {"sample_rate_hz", s.chirp.sample_rate}}
               .dump(2)
        << "\n";
    return 0;
}

struct ScoreArgs {
    std::string drawn, target, metric = "I1", source = "region";
    double threshold = analytics::default_threshold;
};

inline int cmd_score(const Common& c, const ScoreArgs& a, std::ostream& out)
{
    auto drawn = read_mask(a.drawn);
    geometry::ShapeMask target;
    if (fs::exists(a.target)) {
        target = read_mask(a.target);
    } else {
        target = config::Workspace::locate(c.root).target(a.target).mask;
    }
    analytics::ShapeOptions opt;
    opt.metric = analytics::parse_metric(a.metric);
    opt.source = analytics::parse_source(a.source);
    opt.threshold = a.threshold;
    auto score = analytics::shape_difference(drawn, target, opt);
    out << json{{"difference", score.value},
                {"matched", analytics::classify_match(score)},
                {"threshold", score.threshold},
                {"metric", analytics::to_string(opt.metric)}}
               .dump()
        << "\n";
    return 0;
}

inline std::vector<fs::path> log_files(const fs::path& dir)
{
    if (fs::is_regular_file(dir)) {
        return {dir};
    }
    if (!fs::is_directory(dir)) {
        throw NotFoundError("no log directory at " + dir.string());
    }
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.is_regular_file() && e.path().extension() == ".jsonl") {
            files.push_back(e.path());
        }
    }
    std::sort(files.begin(), files.end());
    return files;
}

inline int cmd_report(const Common& c, const std::string& logs, const std::string& out_dir, std::ostream& out,
                      std::ostream& err)
{
    auto ws = config::Workspace::locate(c.root);
    auto files = log_files(logs.empty() ? ws.logs() : fs::path(logs));
    std::vector<analytics::TrialRecord> trials;
    std::vector<std::pair<std::string, std::string>> heatmaps;
    for (const auto& f : files) {
        auto text = read_text_file(f);
        auto records = session::trial_records(text);
        if (records.empty()) {
            continue;
        }
        auto layout = session::config_from_log(session::parse_log(text)).layout;
        for (const auto& r : records) {
            auto dwell = analytics::dwell_heatmap(session::trial_gaze(text, r.trial), layout);
            heatmaps.emplace_back(r.session + "_trial" + std::to_string(r.trial) + ".csv", dwell.to_csv());
        }
        trials.insert(trials.end(), records.begin(), records.end());
    }
    if (trials.empty()) {
        throw ValidationError("no completed trials in " + (logs.empty() ? ws.logs().string() : logs));
    }
    auto groups = analytics::session_stats(trials);
    auto csv = analytics::trials_csv(trials);
    if (!c.dry_run) {
        fs::path dir = out_dir.empty() ? ws.reports() : fs::path(out_dir);
        write_text_file(dir / "trials.csv", csv);
        write_text_file(dir / "summary.json", analytics::summary_json(groups).dump(2) + "\n");
        for (const auto& [name, text] : heatmaps) {
            write_text_file(dir / "heatmaps" / name, text);
        }
    }
    err << analytics::summary_table(groups);
    out << csv;
    return 0;
}

inline int cmd_replay(const Common& c, const std::string& log, const std::string& out_file, std::ostream& out,
                      std::ostream& err)
{
    auto ws = config::Workspace::locate(c.root);
    auto text = read_text_file(log);
    auto catalog = ws.load_catalog();
    auto engine = session::replay(text, catalog);
    auto replayed = engine.export_log();
    auto a = session::comparable_log(text);
    auto b = session::comparable_log(replayed);
    bool same = a == b;
    if (!same) {
        for (std::size_t i = 0; i < std::max(a.size(), b.size()); ++i) {
            if (i >= a.size() || i >= b.size() || a[i] != b[i]) {
                err << "first difference at record " << i + 1 << ":\n  logged:   "
                    << (i < a.size() ? a[i] : "<none>") << "\n  replayed: " << (i < b.size() ? b[i] : "<none>")
                    << "\n";
                break;
            }
        }
    }
    if (!out_file.empty() && !c.dry_run) {
        write_text_file(out_file, replayed);
    }
    out << json{{"log", log},
                {"records", a.size()},
                {"triggers", engine.trigger_log().size()},
                {"results", engine.results().size()},
                {"identical", same}}
               .dump()
        << "\n";
    return same ? 0 : 1;
}

struct ServeArgs {
    std::string host = "127.0.0.1";
    unsigned short port = 8080;
    std::string protocol;
};

inline int cmd_serve(const Common& c, const ServeArgs& a, std::ostream& out, std::ostream& err)
{
    auto ws = config::Workspace::locate(c.root);
    auto catalog = ws.load_catalog();
    auto protocol = a.protocol.empty() ? ws.load_protocol()
                                       : session::protocol_from_json(json::parse(read_text_file(a.protocol)),
                                                                     config::default_protocol());
    auto resolved = session::resolve_protocol(protocol, catalog);
    std::vector<std::string> ids;
    for (const auto& t : session::build_trials(resolved)) {
        if (std::find(ids.begin(), ids.end(), t.target_id) == ids.end()) {
            ids.push_back(t.target_id);
        }
    }
    auto missing = ws.missing_assets(ids);
    if (!missing.empty()) {
        std::string list;
        for (const auto& m : missing) {
            list += (list.empty() ? "" : ", ") + m;
        }
        err << "warning: targets without bank or assets: " << list << "\n";
    }
    if (c.dry_run) {
        out << json{{"trials", resolved.trial_count()}, {"missing", missing}}.dump() << "\n";
        return 0;
    }
    ws.ensure();
    session::SessionManager manager(
        catalog, protocol, [ws](const std::vector<std::string>& t) { return ws.missing_assets(t); }, ws.logs());
    server::Server srv(manager, ws.assets(), a.host, a.port);
    srv.stop_on_signals();
    err << "listening on http://" << a.host << ":" << srv.port() << "\n";
    out << json{{"host", a.host}, {"port", srv.port()}}.dump() << std::endl;
    srv.run();
    return 0;
}

// ---------------------------------------------------------------------------

inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr)
{
    CLI::App app{"Echolocation training toolkit: FDTD echo banks, buzz stimuli, trial sessions and scoring",
                 "echotrain"};
    app.require_subcommand(1);

    Common common;
    Overrides ov;

    auto* init = app.add_subcommand("init", "Write default targets, protocol and scenario into the workspace");
    bool init_force = false;
    add_common(init, common);
    init->add_flag("--force", init_force, "Overwrite existing files");

    auto* vox = app.add_subcommand("voxelize", "Voxelize a target scene or an STL mesh onto the solver grid");
    VoxelizeArgs va;
    add_common(vox, common);
    add_sim_flags(vox, ov);
    vox->add_option("--target", va.target, "Target id from the catalog");
    vox->add_option("--cell", va.cell, "Cell index the head faces (default: first occupied cell)");
    vox->add_option("--stl", va.stl, "STL file to voxelize instead of a target scene");
    vox->add_option("--out", va.out, "Output path stem (writes .u8 and .json)");

    auto* bank = app.add_subcommand("bank", "Simulate the echo impulse-response bank of a target");
    std::string bank_target;
    bool bank_force = false;
    add_common(bank, common);
    add_sim_flags(bank, ov);
    bank->add_option("--target", bank_target, "Target id")->required();
    bank->add_flag("--force", bank_force, "Rebuild even if an up-to-date bank exists");

    auto* syn = app.add_subcommand("synth", "Render per-cell buzz WAV assets from a bank");
    std::string synth_target;
    add_common(syn, common);
    syn->add_option("--scenario", ov.scenario, "Scenario JSON (default: <root>/scenario.json)");
    add_stimulus_flags(syn, ov);
    syn->add_option("--target", synth_target, "Target id")->required();

    auto* serve = app.add_subcommand("serve", "Run the HTTP/WebSocket session service");
    ServeArgs sa;
    add_common(serve, common);
    serve->add_option("--host", sa.host, "Bind address");
    serve->add_option("--port", sa.port, "TCP port (0 picks a free one)");
    serve->add_option("--protocol", sa.protocol, "Protocol JSON (default: <root>/protocol.json)");

    auto* score = app.add_subcommand("score", "Shape difference between a drawn mask and a target");
    ScoreArgs sc;
    add_common(score, common);
    score->add_option("--drawn", sc.drawn, "Drawn mask file")->required();
    score->add_option("--target", sc.target, "Target mask file or catalog id")->required();
    score->add_option("--metric", sc.metric, "I1, I2 or I3");
    score->add_option("--moments", sc.source, "region or contour");
    score->add_option("--threshold", sc.threshold, "Match threshold (strictly less than matches)");

    auto* report = app.add_subcommand("report", "Per-trial CSV, per-condition summary and dwell heatmaps");
    std::string logs, report_out;
    add_common(report, common);
    report->add_option("--logs", logs, "Log directory or file (default: <root>/logs)");
    report->add_option("--out", report_out, "Output directory (default: <root>/reports)");

    auto* rep = app.add_subcommand("replay", "Re-run a logged session through the engine and compare");
    std::string replay_log, replay_out;
    add_common(rep, common);
    rep->add_option("--log", replay_log, "Session log (JSON lines)")->required();
    rep->add_option("--out", replay_out, "Write the replayed log here");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return 2;
    }

    try {
        if (*init) return cmd_init(common, init_force, out);
        if (*vox) return cmd_voxelize(common, ov, va, out, err);
        if (*bank) return cmd_bank(common, ov, bank_target, bank_force, out, err);
        if (*syn) return cmd_synth(common, ov, synth_target, out, err);
        if (*serve) return cmd_serve(common, sa, out, err);
        if (*score) return cmd_score(common, sc, out);
        if (*report) return cmd_report(common, logs, report_out, out, err);
        if (*rep) return cmd_replay(common, replay_log, replay_out, out, err);
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    } catch (const nlohmann::json::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::filesystem::filesystem_error& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    } catch (const boost::system::system_error& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}

inline int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
    std::vector<const char*> argv;
    argv.push_back("echotrain");
    for (const auto& a : args) {
        argv.push_back(a.c_str());
    }
    return run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
}

} // namespace echotrain::cli
